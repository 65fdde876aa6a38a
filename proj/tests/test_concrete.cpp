#include <doctest.h>

#include "aam/concrete.hpp"
#include "aam/gc.hpp"
#include "corpus.hpp"

using namespace aam;

namespace {

Program parse(const std::string& s) { return parse_program(s); }

}  // namespace

TEST_CASE("injection per machine") {
  Program lam = parse("(lambda (x) x)");
  CekState cek = inject_cek(lam);
  CHECK(cek.control.expr == lam.root());
  CHECK(cek.kont.empty());

  Program app = parse("((lambda (x) x) (lambda (y) y))");
  PtrState star = inject_ptr(app, MachineTag::CeskStar, ConcretePolicy{PolicyKind::Untimed});
  CHECK(star.kont == mt_addr());
  CHECK(is_mt(std::get<Kont>(star.store.at(mt_addr()))));
  CHECK(star.store.size() == 1);

  PtrState timed = inject_ptr(app, MachineTag::CeskStarT, ConcretePolicy{PolicyKind::Timed});
  CHECK(timed.time == Time::from_int(0));

  Program open = parse("(lambda (x) y)");
  CHECK_THROWS_AS(inject_cek(parse("(x (lambda (y) y))")), Error);
  CHECK(open.closed_at(open.root()) == false);
}

TEST_CASE("cek steps follow the transition rows") {
  Program p = parse("((lambda (x) x) (lambda (y) y))");
  CekState s0 = inject_cek(p);

  // application pushes an argument frame
  CekState s1 = *step_cek(p, s0);
  CHECK(s1.control.expr == 1);
  REQUIRE(s1.kont.size() == 1);
  CHECK(s1.kont.back().kind == CekFrame::Kind::Ar);

  // value at ar swaps in an fn frame; value at fn binds
  CekState s2 = *step_cek(p, s1);
  CHECK(s2.control.expr == 3);
  CHECK(s2.kont.back().kind == CekFrame::Kind::Fn);
  CHECK(s2.kont.back().fn.val.expr == 1);
  CekState s3 = *step_cek(p, s2);
  CHECK(s3.control.expr == 2);
  CHECK(s3.kont.empty());

  // final states have no successor
  CekState s4 = *step_cek(p, s3);
  CHECK(!step_cek(p, s4).has_value());
}

TEST_CASE("cek run of an identity application") {
  Program p = parse("((lambda (x) x) (lambda (y) y))");
  CekRun run = run_cek(p, 100);
  CHECK(run.flag == RunFlag::Final);
  // hand-stepped: app, operator, operand, bound variable, value
  REQUIRE(run.trace.size() == 5);
  CHECK(run.trace[1].control.expr == 1);
  CHECK(run.trace[2].control.expr == 3);
  CHECK(run.trace[3].control.expr == 2);  // the body x
  CHECK(run.trace[4].control.expr == 3);  // final value: the operand lambda
  CHECK(run.trace.back().kont.empty());

  // the fn row binds the operand's closure
  const CekState& bound = run.trace[3];
  REQUIRE(bound.env);
  auto it = bound.env->slots.begin();
  CHECK(p.var_name(it->first) == "x");
  CHECK(it->second.val.expr == 3);
}

TEST_CASE("final and stuck runs") {
  CHECK(run_cek(parse("(lambda (x) x)"), 1).flag == RunFlag::Final);
  CHECK(run_cek(parse(corpus::kOmega), 1000).flag == RunFlag::FuelExhausted);
  CHECK(run_cek(parse(corpus::kOmega), 1000).trace.size() == 1001);

  // applying a non-function gets stuck rather than crashing
  Program bad = parse("((#f #f) (lambda (x) x))");
  PtrRun run = run_pointer(bad, MachineTag::Extended, ConcretePolicy{PolicyKind::Timed}, 100);
  CHECK(run.flag == RunFlag::Stuck);
}

TEST_CASE("cek detects its omega cycle exactly") {
  Program p = parse(corpus::kOmega);
  CekRun run = run_cek(p, 60);
  bool cycled = false;
  for (std::size_t i = 0; i < run.trace.size() && !cycled; i++)
    for (std::size_t j = i + 1; j < run.trace.size(); j++)
      if (deep_equal(run.trace[i], run.trace[j])) {
        cycled = true;
        break;
      }
  CHECK(cycled);
}

TEST_CASE("lockstep agreement on the pure corpus") {
  for (const std::string& src : corpus::pure_terms()) {
    Program p = parse(src);
    LockstepReport rep = lockstep_check(p, 1000);
    INFO(src, " diverged: ", rep.divergence);
    CHECK(rep.agreed);
  }
}

TEST_CASE("lockstep also holds under the address-equals-time instantiation") {
  for (const std::string& src : {std::string(corpus::kOmega),
                                 corpus::app("(lambda (i) i)", "(lambda (y) y)"),
                                 corpus::app(corpus::app(corpus::kTwo, "(lambda (i) i)"),
                                             "(lambda (i) i)")}) {
    LockstepReport rep = lockstep_check(parse(src), 500, PolicyKind::Timed24);
    INFO(src);
    CHECK(rep.agreed);
  }
}

TEST_CASE("freshness and time monotonicity along timed runs") {
  for (const std::string& src : corpus::pure_terms()) {
    Program p = parse(src);
    PtrRun run = run_pointer(p, MachineTag::CeskStarT, ConcretePolicy{PolicyKind::Timed}, 300);
    for (std::size_t i = 1; i < run.trace.size(); i++) {
      CHECK(run.trace[i].time.base > run.trace[i - 1].time.base);
      // newly allocated addresses were fresh
      for (const auto& [a, st] : run.trace[i].store.entries())
        if (!run.trace[i - 1].store.contains(a))
          CHECK(a.base >= run.trace[i - 1].store.next_int_addr());
    }
  }
}

TEST_CASE("erasure turns store machines into the cek shape") {
  Program p = parse("((lambda (x) x) (lambda (y) y))");
  CeskRun cesk = run_cesk(p, 100);
  CekRun cek = run_cek(p, 100);
  REQUIRE(cesk.trace.size() == cek.trace.size());
  for (std::size_t i = 0; i < cek.trace.size(); i++)
    CHECK(deep_equal(erase_to_cek(p, cesk.trace[i]), cek.trace[i]));
}

TEST_CASE("trace rendering is stable") {
  Program p = parse("((lambda (x) x) (lambda (y) y))");
  CekRun run = run_cek(p, 10);
  CHECK(render(run.trace[0], p) == "<((lambda (x) x) (lambda (y) y))@0 | {} | mt>");
  CHECK(render(run.trace[1], p) ==
        "<(lambda (x) x)@1 | {} | ar((lambda (y) y)@3, {}, mt)>");
  CHECK(render(run.trace[4], p) == "<(lambda (y) y)@3 | {} | mt>");

  PtrRun star = run_pointer(p, MachineTag::CeskStar, ConcretePolicy{PolicyKind::Untimed}, 10);
  CHECK(render(star.trace[0], p, MachineTag::CeskStar) ==
        "<((lambda (x) x) (lambda (y) y))@0 | {} | {#0=mt} | k:#0>");
}

TEST_CASE("canonical renaming identifies runs under different allocators") {
  // Canonicalization renames by first use in a structural traversal, so on
  // garbage-free states it is a complete invariant for consistent renaming.
  Features pure{};
  for (const std::string& src : corpus::pure_terms()) {
    Program p = parse(src);
    PtrRun timed = run_pointer(p, MachineTag::CeskStarT, ConcretePolicy{PolicyKind::Timed}, 120);
    PtrRun contour =
        run_pointer(p, MachineTag::CeskStarT, ConcretePolicy{PolicyKind::Contour}, 120);
    REQUIRE(timed.trace.size() == contour.trace.size());
    for (std::size_t i = 0; i < timed.trace.size(); i++)
      CHECK(canonicalize(p, collect(p, timed.trace[i], pure)) ==
            canonicalize(p, collect(p, contour.trace[i], pure)));
  }
}

TEST_CASE("garbage-collected omega run cycles up to renaming") {
  Program p = parse(corpus::kOmega);
  PtrRun run = run_pointer(p, MachineTag::CeskStar, ConcretePolicy{PolicyKind::Untimed}, 40, true);
  std::set<PtrState> seen;
  bool cycled = false;
  for (const PtrState& s : run.trace)
    if (!seen.insert(canonicalize(p, s)).second) {
      cycled = true;
      break;
    }
  CHECK(cycled);
}

TEST_CASE("random closed terms evaluate without rule-exclusivity violations") {
  corpus::TermGen gen(7);
  for (int i = 0; i < 60; i++) {
    Program p = parse(gen.closed_term());
    CHECK_NOTHROW(run_cek(p, 200));
    CHECK_NOTHROW(run_cesk(p, 200));
    CHECK_NOTHROW(run_pointer(p, MachineTag::CeskStarT, ConcretePolicy{PolicyKind::Timed}, 200));
    // closed terms never hit unbound variables (free_vars agrees with the machine)
    CHECK(run_cek(p, 200).flag != RunFlag::Stuck);
  }
}
