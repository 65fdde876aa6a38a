// Acceptance suite: one checked criterion per line, pass/fail, nonzero exit
// on any failure. Run via ctest (test name "acceptance") or directly.

#include <chrono>
#include <cstdio>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "aam/driver.hpp"
#include "corpus.hpp"

using namespace aam;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void fail(const std::string& why) {
    pass = false;
    if (detail.empty()) detail = why;
  }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// ---------------------------------------------------------------------------
// 1. Stepwise agreement of CEK / CESK / CESK* / timed CESK*.

Outcome criterion_lockstep() {
  Outcome out;
  auto start = Clock::now();
  auto corpus = corpus::pure_terms();
  if (corpus.size() < 30) out.fail("corpus has fewer than 30 terms");
  for (const std::string& src : corpus) {
    LockstepReport rep = lockstep_check(parse_program(src), 1000);
    if (!rep.agreed) out.fail(src + ": " + rep.divergence);
  }
  double elapsed = seconds_since(start);
  if (elapsed >= 5.0) out.fail("took " + std::to_string(elapsed) + "s (budget 5s)");
  if (out.pass)
    out.detail = std::to_string(corpus.size()) + " programs, " +
                 std::to_string(elapsed).substr(0, 4) + "s";
  return out;
}

// ---------------------------------------------------------------------------
// 2. Lazy machines agree stepwise; unused operands are never forced.

Outcome criterion_lazy_lockstep() {
  Outcome out;
  for (const std::string& src : corpus::pure_terms()) {
    LockstepReport rep = lockstep_lazy(parse_program(src), 1000);
    if (!rep.agreed) out.fail(src + ": " + rep.divergence);
  }
  Program skip = parse_program(corpus::app("(lambda (x) (lambda (y) x))", corpus::kOmega));
  LkRun run = run_lk(skip, 1000);
  if (run.flag != RunFlag::Final) out.fail("discarding context still diverged");
  for (const LkState& s : run.trace)
    for (const auto& [a, st] : s.store.entries())
      if (std::holds_alternative<CompS>(st)) out.fail("the unused operand was forced");
  if (out.pass) out.detail = "agreement plus an unforced divergent operand";
  return out;
}

// ---------------------------------------------------------------------------
// 3. Abstract reachability terminates; state counts match frozen goldens.

struct Golden {
  std::size_t index;
  unsigned k;
  std::size_t states;
};

// Regression goldens for the pure corpus (indexed in corpus order).
const Golden kStateGoldens[] = {
    {0, 0, 1},   {1, 0, 5},   {2, 0, 9},    {3, 0, 10},    {4, 0, 15},  {5, 0, 17},
    {6, 0, 8},   {7, 0, 8},   {8, 0, 12},   {9, 0, 10},    {10, 0, 15}, {11, 0, 14},
    {12, 0, 9},  {13, 0, 4},  {14, 0, 13},  {15, 0, 18},   {16, 0, 18}, {17, 0, 23},
    {18, 0, 30}, {19, 0, 155}, {20, 0, 47}, {21, 0, 52},   {22, 0, 2166}, {23, 0, 19880},
    {24, 0, 47}, {25, 0, 16}, {26, 0, 16},  {27, 0, 16},   {28, 0, 19}, {29, 0, 39},
    {30, 0, 39}, {31, 0, 11}, {32, 0, 16},  {33, 0, 11},
    {0, 1, 1},   {1, 1, 5},   {2, 1, 9},    {3, 1, 9},     {4, 1, 13},  {5, 1, 17},
    {6, 1, 8},   {7, 1, 8},   {8, 1, 12},   {9, 1, 10},    {10, 1, 15}, {11, 1, 14},
    {12, 1, 9},  {13, 1, 4},  {14, 1, 13},  {15, 1, 18},   {16, 1, 18}, {17, 1, 23},
    {18, 1, 30}, {19, 1, 42}, {20, 1, 47},  {21, 1, 52},   {22, 1, 53}, {23, 1, 63},
    {24, 1, 47}, {25, 1, 16}, {26, 1, 25},  {27, 1, 25},   {28, 1, 28}, {29, 1, 51},
    {30, 1, 51}, {31, 1, 11}, {32, 1, 15},  {33, 1, 11},
};

Outcome criterion_decidability() {
  Outcome out;
  auto corpus = corpus::pure_terms();
  std::map<std::pair<std::size_t, unsigned>, std::size_t> got;
  for (unsigned k = 0; k <= 1; k++)
    for (std::size_t i = 0; i < corpus.size(); i++) {
      AnalysisResult r =
          analyze_reachable(parse_program(corpus[i]), MachineTag::CeskStarT, KCfaParams{k});
      if (r.states.empty()) out.fail("empty state set for term " + std::to_string(i));
      got[{i, k}] = r.states.size();
    }
  std::size_t checked = 0;
  for (const Golden& g : kStateGoldens) {
    checked++;
    auto it = got.find({g.index, g.k});
    if (it == got.end() || it->second != g.states)
      out.fail("term " + std::to_string(g.index) + " k=" + std::to_string(g.k) + ": " +
               std::to_string(it == got.end() ? 0 : it->second) + " states, golden " +
               std::to_string(g.states));
  }
  if (checked != got.size()) out.fail("golden table out of sync with the corpus");
  if (out.pass) out.detail = std::to_string(checked) + " regression goldens";
  return out;
}

// ---------------------------------------------------------------------------
// 4. Every concrete trace is covered stepwise by the abstract machine.

Outcome criterion_soundness() {
  Outcome out;
  std::size_t runs = 0;
  auto check_family = [&](MachineTag tag, const std::vector<std::string>& terms,
                          const PermSet& universe) {
    for (const std::string& src : terms)
      for (unsigned k = 0; k <= 1; k++) {
        SoundnessReport rep =
            check_soundness(parse_program(src), tag, KCfaParams{k}, 500, universe);
        runs++;
        if (!rep.ok)
          out.fail(machine_tag_name(tag) + " k=" + std::to_string(k) + " " + src + ": " +
                   rep.violation);
      }
  };
  std::vector<std::string> extended = corpus::pure_terms();
  for (const std::string& s : corpus::extended_terms()) extended.push_back(s);
  check_family(MachineTag::Extended, extended, {});
  check_family(MachineTag::LkStar, corpus::pure_terms(), {});
  check_family(MachineTag::Ceshk, corpus::exception_terms(), {});
  check_family(MachineTag::Cm, corpus::security_terms(), make_perm_set({"p", "q"}));
  if (out.pass) out.detail = std::to_string(runs) + " machine/program/k combinations";
  return out;
}

// ---------------------------------------------------------------------------
// 5. Exception semantics, concretely and abstractly.

Outcome criterion_exceptions() {
  Outcome out;
  Program caught = parse_program("(catch (throw (lambda (y) y)) (lambda (x) x))");
  CeshkRun run = run_ceshk(caught, 100);
  if (run.flag != RunFlag::Final || run.trace.back().control.expr != 2)
    out.fail("caught throw did not produce the thrown value");

  AnalysisResult r = analyze_reachable(caught, MachineTag::Ceshk, KCfaParams{0});
  bool covered = false;
  for (const AbsState& s : r.states) {
    if (s.control.is_kont || s.control.expr != 2 || s.handler != mt_addr()) continue;
    for (const Storable& st : s.store.at(s.kont))
      if (const Kont* k = std::get_if<Kont>(&st))
        if (is_mt(*k)) covered = true;
  }
  if (!covered) out.fail("no abstract value state covers the caught result");

  Program uncaught = parse_program("(throw (lambda (y) y))");
  if (run_ceshk(uncaught, 100).flag != RunFlag::UncaughtThrow)
    out.fail("uncaught throw missed the terminal");
  PtrRun pr = run_pointer(uncaught, MachineTag::Ceshk, ConcretePolicy{PolicyKind::Timed}, 100);
  if (pr.flag != RunFlag::UncaughtThrow) out.fail("pointer machine missed the uncaught terminal");
  AnalysisResult ru = analyze_reachable(uncaught, MachineTag::Ceshk, KCfaParams{0});
  StepParams prm{features_for(MachineTag::Ceshk), {}};
  bool abs_uncaught = false;
  for (const AbsState& s : ru.states)
    if (classify_abs_terminal(caught, s, prm) == AbsTerminal::UncaughtThrow) abs_uncaught = true;
  if (!abs_uncaught) out.fail("abstract machine lost the uncaught terminal");
  if (out.pass) out.detail = "caught value and uncaught terminal, both machines";
  return out;
}

// ---------------------------------------------------------------------------
// 6. Stack inspection, concrete branches and abstract verdicts.

Outcome criterion_stack_inspection() {
  Outcome out;
  PermSet pq = make_perm_set({"p", "q"});

  Program enabled = parse_program("(grant (p) (test (p) (lambda (a) a) (fail)))");
  CmRun r1 = run_cm(enabled, pq, 100);
  if (r1.flag != RunFlag::Final || r1.trace.back().control.expr != 2)
    out.fail("grant-enabled test missed the first branch");

  Program denied = parse_program("(frame (q) (test (p) (fail) (lambda (b) b)))");
  CmRun r2 = run_cm(denied, pq, 100);
  if (r2.flag != RunFlag::Final || r2.trace.back().control.expr != 3)
    out.fail("frame-denied test missed the second branch");

  auto verdict = [&](const Program& p) {
    AnalysisResult r = analyze_reachable(p, MachineTag::Cm, KCfaParams{0}, false, pq);
    if (r.facts.test_branches.size() != 1) return std::string("missing");
    auto [then_ok, else_ok] = r.facts.test_branches.begin()->second;
    return std::string(then_ok && else_ok ? "both" : then_ok ? "enabled" : "disabled");
  };
  if (verdict(enabled) != "enabled") out.fail("abstract verdict for the enabled test");
  if (verdict(denied) != "disabled") out.fail("abstract verdict for the denied test");

  // one test reached under both a granting and a denying context
  Program merged = parse_program(
      "((lambda (f) ((lambda (a) (frame (q) (f (lambda (u) u)))) (grant (p) (f (lambda (w) "
      "w))))) (lambda (x) (test (p) (lambda (t) t) (lambda (e) e))))");
  if (verdict(merged) != "both") out.fail("merged store did not report both branches");
  if (out.pass) out.detail = "enabled, disabled, and merged verdicts";
  return out;
}

// ---------------------------------------------------------------------------
// 7. Abstract collection only sharpens flow facts, strictly somewhere.

Outcome criterion_gc_precision() {
  Outcome out;
  auto flows_subset = [](const FlowFacts& small, const FlowFacts& big) {
    return big.superset_of(small);
  };
  for (const std::string& src : corpus::pure_terms()) {
    Program p = parse_program(src);
    AnalysisResult with_gc = analyze_reachable(p, MachineTag::CeskStarT, KCfaParams{0}, true);
    AnalysisResult without = analyze_reachable(p, MachineTag::CeskStarT, KCfaParams{0}, false);
    if (!flows_subset(with_gc.facts, without.facts))
      out.fail("collection added flow facts on " + src);
  }

  // a dead binding re-allocated at the same monovariant address: collection
  // must prove the strictly smaller flow set
  Program designed = parse_program(
      "((lambda (d) ((lambda (x) (x x)) (lambda (z) z))) ((lambda (x) x) (lambda (w) w)))");
  AnalysisResult with_gc = analyze_reachable(designed, MachineTag::CeskStarT, KCfaParams{0}, true);
  AnalysisResult without =
      analyze_reachable(designed, MachineTag::CeskStarT, KCfaParams{0}, false);
  Label site = 0;
  for (std::size_t l = 0; l < designed.size(); l++) {
    const ExprNode& n = designed.node(static_cast<Label>(l));
    if (n.kind == ExprKind::App && designed.node(n.children[0]).kind == ExprKind::Ref)
      site = static_cast<Label>(l);
  }
  std::set<Label> gc_flows = with_gc.facts.applies.count(site) ? with_gc.facts.applies.at(site)
                                                               : std::set<Label>{};
  std::set<Label> plain_flows = without.facts.applies.count(site)
                                    ? without.facts.applies.at(site)
                                    : std::set<Label>{};
  if (!(gc_flows.size() < plain_flows.size()))
    out.fail("designed program showed no strict improvement (" +
             std::to_string(gc_flows.size()) + " vs " + std::to_string(plain_flows.size()) + ")");
  if (out.pass)
    out.detail = "subset on the corpus; " + std::to_string(plain_flows.size()) + " -> " +
                 std::to_string(gc_flows.size()) + " lambdas at the designed site";
  return out;
}

// ---------------------------------------------------------------------------
// 8. Widened iteration counts stay within the syntactic bound.

Outcome criterion_widening_bound() {
  Outcome out;
  std::size_t worst_margin = 0;
  for (const std::string& src : corpus::pure_terms()) {
    Program p = parse_program(src);
    BoundReport rep = check_monovariant_bound(p);
    if (!rep.ok)
      out.fail(src + ": " + std::to_string(rep.iterations) + " iterations vs bound " +
               std::to_string(rep.bound));
    worst_margin = std::max(worst_margin, rep.iterations);
  }
  if (out.pass) out.detail = "max iterations " + std::to_string(worst_margin);
  return out;
}

// ---------------------------------------------------------------------------
// 9. Widening only loses precision.

Outcome criterion_widening_soundness() {
  Outcome out;
  auto check = [&](MachineTag tag, const std::vector<std::string>& terms,
                   const PermSet& universe) {
    for (const std::string& src : terms)
      for (unsigned k = 0; k <= 1; k++) {
        Program p = parse_program(src);
        AnalysisResult exact = analyze_reachable(p, tag, KCfaParams{k}, false, universe);
        WidenedResult wide = analyze_widened(p, tag, KCfaParams{k}, universe);
        if (!wide.facts.superset_of(exact.facts))
          out.fail(machine_tag_name(tag) + " k=" + std::to_string(k) + " " + src);
      }
  };
  check(MachineTag::CeskStarT, corpus::pure_terms(), {});
  check(MachineTag::Extended, corpus::extended_terms(), {});
  check(MachineTag::Ceshk, corpus::exception_terms(), {});
  check(MachineTag::Cm, corpus::security_terms(), make_perm_set({"p", "q"}));
  if (out.pass) out.detail = "four families, k in {0, 1}";
  return out;
}

// ---------------------------------------------------------------------------
// 10. Collection idempotence and commutation on random states.

Outcome criterion_gc_algebra() {
  Outcome out;
  corpus::TermGen gen(2026);
  Features pure{};
  StepParams prm{};
  ConcretePolicy pol{PolicyKind::Timed};
  std::size_t checked = 0;
  while (checked < 1000) {
    Program p = parse_program(gen.closed_term());
    PtrRun run = run_pointer(p, MachineTag::CeskStarT, pol, 40);
    for (const PtrState& s : run.trace) {
      checked++;
      PtrState once = collect(p, s, pure);
      if (collect(p, once, pure) != once) {
        out.fail("idempotence failed on " + p.unparse());
        return out;
      }
      auto stepped_first = step_pointer(p, s, prm, pol);
      auto collected_first = step_pointer(p, once, prm, pol);
      if (stepped_first.has_value() != collected_first.has_value()) {
        out.fail("collection changed a transition on " + p.unparse());
        return out;
      }
      if (stepped_first) {
        PtrState lhs = canonicalize(p, collect(p, *stepped_first, pure));
        PtrState rhs = canonicalize(p, collect(p, *collected_first, pure));
        if (lhs != rhs) {
          out.fail("commutation failed on " + p.unparse());
          return out;
        }
      }
      if (checked >= 1000) break;
    }
  }
  if (out.pass) out.detail = std::to_string(checked) + " random states";
  return out;
}

}  // namespace

int main() {
  struct Row {
    int id;
    const char* name;
    Outcome (*run)();
  };
  const Row rows[] = {
      {1, "machine tower lockstep", criterion_lockstep},
      {2, "lazy lockstep and by-need sharing", criterion_lazy_lockstep},
      {3, "abstract reachability is finite (goldens)", criterion_decidability},
      {4, "stepwise simulation per family", criterion_soundness},
      {5, "exception semantics", criterion_exceptions},
      {6, "stack inspection verdicts", criterion_stack_inspection},
      {7, "abstract collection precision", criterion_gc_precision},
      {8, "widened iteration bound", criterion_widening_bound},
      {9, "widening superset of flow facts", criterion_widening_soundness},
      {10, "collection algebra on random states", criterion_gc_algebra},
  };
  int failures = 0;
  for (const Row& row : rows) {
    Outcome out;
    std::string error;
    try {
      out = row.run();
    } catch (const std::exception& e) {
      out.pass = false;
      out.detail = std::string("exception: ") + e.what();
    }
    if (!out.pass) failures++;
    std::printf("[%s] criterion %2d: %s%s%s\n", out.pass ? "PASS" : "FAIL", row.id, row.name,
                out.detail.empty() ? "" : " - ", out.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
