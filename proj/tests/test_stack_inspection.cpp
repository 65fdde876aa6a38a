#include <doctest.h>

#include "aam/abstract.hpp"
#include "aam/control.hpp"
#include "aam/stack_inspection.hpp"
#include "corpus.hpp"

using namespace aam;

namespace {

Program parse(const std::string& s) { return parse_program(s); }

const KCfaParams k0{0};
const PermSet kPQ = make_perm_set({"p", "q"});

Marks mk(std::initializer_list<std::pair<const char*, Cap>> items) {
  Marks m;
  for (const auto& [k, v] : items) m[k] = v;
  return m;
}

}  // namespace

TEST_CASE("the permission predicate on recursive continuations") {
  Program p = parse("(lambda (x) x)");

  // the empty request always succeeds
  std::vector<RFrame> denying{RFrame{RFn{Val::from_expr(0), Env{}, mk({{"p", Cap::Deny}})}}};
  CHECK(ok_rec(p, {}, denying, {}));

  // a granting frame discharges the request before reaching the base
  std::vector<RFrame> granting{RFrame{RFn{Val::from_expr(0), Env{}, mk({{"p", Cap::Grant}})}}};
  CHECK(ok_rec(p, {"p"}, granting, mk({{"p", Cap::Deny}})));

  // a denying frame refutes it
  CHECK(!ok_rec(p, {"p"}, denying, {}));
  CHECK(!ok_rec(p, {"p"}, {}, mk({{"p", Cap::Deny}})));
  CHECK(ok_rec(p, {"p"}, {}, {}));
}

TEST_CASE("the permission predicate through the store") {
  Program p = parse("(lambda (x) x)");
  Store store;
  Addr inner = Addr::from_int(5);
  store.put(mt_addr(), Kont{MtK{}});
  store.put(inner, Kont{FnK{Val::from_expr(0), Env{}, mt_addr(), mk({{"p", Cap::Grant}})}});
  CHECK(ok_ptr({"p"}, store, inner));
  CHECK(ok_ptr({}, store, inner));

  store.put(inner, Kont{FnK{Val::from_expr(0), Env{}, mt_addr(), mk({{"p", Cap::Deny}})}});
  CHECK(!ok_ptr({"p"}, store, inner));
}

TEST_CASE("the concrete mark machine follows the security rows") {
  // a test within a grant takes the enabled branch
  Program p1 = parse("(grant (p) (test (p) (lambda (a) a) (fail)))");
  CmRun r1 = run_cm(p1, kPQ, 100);
  CHECK(r1.flag == RunFlag::Final);
  CHECK(r1.trace.back().control.expr == 2);

  // a frame denying the permission forces the other branch
  Program p2 = parse("(frame (q) (test (p) (fail) (lambda (b) b)))");
  CmRun r2 = run_cm(p2, kPQ, 100);
  CHECK(r2.flag == RunFlag::Final);
  CHECK(r2.trace.back().control.expr == 3);

  // failing resets to the unmarked empty continuation and stops
  Program p3 = parse("(grant (p) (fail))");
  CmRun r3 = run_cm(p3, kPQ, 100);
  CHECK(r3.flag == RunFlag::SecurityFailure);
  CHECK(r3.trace.back().kont.empty());
  CHECK(r3.trace.back().mt_marks.empty());
  CHECK(run_cm(parse("(fail)"), kPQ, 10).flag == RunFlag::SecurityFailure);
}

TEST_CASE("mark updates rewrite the innermost frame in place") {
  Program p = parse("((lambda (x) x) (grant (p) (lambda (y) y)))");
  CmRun run = run_cm(p, kPQ, 100);
  CHECK(run.flag == RunFlag::Final);
  bool updated = false;
  for (const CmState& s : run.trace) {
    for (const RFrame& f : s.kont)
      if (const auto* fn = std::get_if<RFn>(&f)) {
        if (!fn->marks.empty()) updated = true;
      } else if (const auto* ar = std::get_if<RAr>(&f)) {
        if (!ar->marks.empty()) updated = true;
      }
  }
  CHECK(updated);
}

TEST_CASE("abstract mark update rewrites one chosen continuation per successor") {
  Program p = parse("(grant (p) (lambda (x) x))");
  AbsState s = inject_abs(p, MachineTag::Cm);
  Addr a = Addr::from_lab(30, {});
  s.store.join(a, Kont{MtK{}});
  s.store.join(a, Kont{ArK{1, Env{}, mt_addr(), {}}});
  s.kont = a;
  auto succs = abstract_step_cm(p, s, kPQ, k0);
  REQUIRE(succs.size() == 2);
  for (const AbsState& n : succs) {
    // exactly one element was replaced; the set size is preserved
    CHECK(n.store.at(a).size() == 2);
    int marked = 0;
    for (const Storable& st : n.store.at(a))
      if (const Kont* k = std::get_if<Kont>(&st))
        if (!kont_marks(*k).empty()) marked++;
    CHECK(marked == 1);
  }

  // rewriting onto an existing element shrinks the set by one
  AbsState dup = s;
  dup.store.join(a, Kont{kont_with_marks(Kont{MtK{}}, {"p"}, Cap::Grant)});
  REQUIRE(dup.store.at(a).size() == 3);
  auto succs2 = abstract_step_cm(p, dup, kPQ, k0);
  bool shrunk = false;
  for (const AbsState& n : succs2)
    if (n.store.at(a).size() == 2) shrunk = true;
  CHECK(shrunk);
}

TEST_CASE("existential path predicate over abstract stores") {
  Program p = parse("(lambda (x) x)");
  AbsStore store;
  Addr a = Addr::from_int(7);

  // empty request
  store.join(a, Kont{MtK{}});
  CHECK(ok_star({}, store, a));

  // a single denying base refutes
  AbsStore deny;
  deny.join(a, Kont{MtK{mk({{"p", Cap::Deny}})}});
  OkPaths d = ok_star_paths({"p"}, deny, a);
  CHECK(!d.can_ok);
  CHECK(d.can_fail);

  // both a granting and a denying frame at one address: both verdicts exist
  AbsStore both;
  both.join(mt_addr(), Kont{MtK{}});
  both.join(a, Kont{FnK{Val::from_expr(0), Env{}, mt_addr(), mk({{"p", Cap::Grant}})}});
  both.join(a, Kont{FnK{Val::from_expr(0), Env{}, mt_addr(), mk({{"p", Cap::Deny}})}});
  OkPaths b = ok_star_paths({"p"}, both, a);
  CHECK(b.can_ok);
  CHECK(b.can_fail);
}

TEST_CASE("the path predicate terminates on cyclic stores") {
  Program p = parse("(lambda (x) x)");
  AbsStore cyc;
  Addr a = Addr::from_int(3);
  cyc.join(a, Kont{ArK{0, Env{}, a, {}}});  // frame pointing at its own address
  OkPaths paths = ok_star_paths({"p"}, cyc, a);
  CHECK(!paths.can_ok);  // no finite path reaches a base
  CHECK(!paths.can_fail);

  AbsStore cyc2;
  cyc2.join(a, Kont{ArK{0, Env{}, a, mk({{"p", Cap::Deny}})}});
  cyc2.join(a, Kont{MtK{}});
  OkPaths paths2 = ok_star_paths({"p"}, cyc2, a);
  CHECK(paths2.can_ok);
  CHECK(paths2.can_fail);
}

TEST_CASE("concrete and abstract predicates agree on singleton stores") {
  for (const std::string& src : corpus::security_terms()) {
    Program p = parse(src);
    PtrRun run = run_pointer(p, MachineTag::Cm, ConcretePolicy{PolicyKind::Timed}, 200, false,
                             kPQ);
    for (const PtrState& s : run.trace) {
      AbsStore lifted;
      for (const auto& [a, st] : s.store.entries()) lifted.join(a, st);
      for (const PermSet& r : {PermSet{"p"}, PermSet{"q"}, PermSet{"p", "q"}, PermSet{}}) {
        const Storable& st = s.store.at(s.kont);
        if (!std::holds_alternative<Kont>(st)) continue;
        CHECK(ok_ptr(r, s.store, s.kont) == ok_star(r, lifted, s.kont));
      }
    }
  }
}

TEST_CASE("tests prove branches when the store is precise") {
  PermSet universe{"p"};
  Program enabled = annotate(parse("(grant (p) (test (p) (lambda (a) a) (fail)))"), universe);
  AnalysisResult re = analyze_reachable(enabled, MachineTag::Cm, k0, false, universe);
  bool fail_reached = false;
  for (const AbsState& s : re.states)
    if (!s.control.is_kont && enabled.node(s.control.expr).kind == ExprKind::Fail)
      fail_reached = true;
  CHECK(!fail_reached);
  for (const auto& [label, branches] : re.facts.test_branches) {
    CHECK(branches.first);
    CHECK(!branches.second);
  }

  // inside a frame that does not confer p, the denial is provable
  PermSet pq = make_perm_set({"p", "q"});
  Program disabled = parse("(frame (q) (test (p) (fail) (lambda (b) b)))");
  AnalysisResult rd = analyze_reachable(disabled, MachineTag::Cm, k0, false, pq);
  for (const auto& [label, branches] : rd.facts.test_branches) {
    CHECK(!branches.first);
    CHECK(branches.second);
  }
}

TEST_CASE("soundness of the abstract mark machine on the corpus") {
  for (const std::string& src : corpus::security_terms()) {
    Program p = parse(src);
    for (unsigned k = 0; k <= 1; k++) {
      SoundnessReport rep = check_soundness(p, MachineTag::Cm, KCfaParams{k}, 200, kPQ);
      INFO(src, " k=", k, ": ", rep.violation);
      CHECK(rep.ok);
    }
  }
}

TEST_CASE("annotation makes lambda bodies run at their static permissions") {
  PermSet universe{"p"};
  // un-annotated: the lambda body grants nothing, the test succeeds only
  // because nothing denies p; after annotation the frame denies everything
  // outside the static set
  Program raw = parse("((lambda (f) (f (lambda (u) u))) (lambda (x) (test (p) x (fail))))");
  Program ann = annotate(raw, {});  // static permission set is empty
  CmRun run = run_cm(ann, universe, 200);
  CHECK(run.flag == RunFlag::SecurityFailure);

  Program ann_p = annotate(raw, universe);  // annotated with {p}: no denial
  CmRun run2 = run_cm(ann_p, universe, 200);
  CHECK(run2.flag == RunFlag::Final);
}
