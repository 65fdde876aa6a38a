#pragma once

// Front door used by the CLI and the python module: machine dispatch by tag,
// graph construction, and the bundled checks.

#include <optional>
#include <string>

#include "aam/abstract.hpp"
#include "aam/control.hpp"
#include "aam/emit.hpp"
#include "aam/gc.hpp"
#include "aam/lazy.hpp"
#include "aam/stack_inspection.hpp"
#include "aam/widen.hpp"

namespace aam {

struct AnalysisConfig {
  MachineTag machine = MachineTag::CeskStarT;
  unsigned k = 0;
  bool gc = false;
  bool widen = false;  // global-store widening (abstract only)
  std::size_t fuel = kDefaultFuel;
  PermSet permissions;  // empty: permissions mentioned in the program
  LazyVariant variant = LazyVariant::Baseline;
  PolicyKind policy = PolicyKind::Timed;
  std::optional<std::uint64_t> shuffle_seed;
};

struct RunOutput {
  RunFlag flag = RunFlag::Final;
  std::vector<std::string> trace;  // one state per line
  std::size_t steps = 0;
};

// Runs the concrete machine selected by cfg.machine.
RunOutput run_machine(const Program& p, const AnalysisConfig& cfg);

struct AnalyzeOutput {
  GraphDoc graph;
  std::size_t state_count = 0;
  std::size_t iterations = 0;  // widened runs only
  bool has_error_terminals = false;
};

// Reachable abstract states (per-state stores, or one widened store).
AnalyzeOutput analyze_machine(const Program& p, const AnalysisConfig& cfg);

// Builds the linear graph of a concrete run, for emission.
GraphDoc graph_of_run(const Program& p, const AnalysisConfig& cfg, const RunOutput& run);

// Stepwise-agreement check appropriate to the machine family (the pure
// pointer chain, or the lazy pair).
LockstepReport check_lockstep_any(const Program& p, const AnalysisConfig& cfg);

struct GcAlgebraReport {
  bool ok = true;
  std::size_t states_checked = 0;
  std::string detail;
};

// Collection idempotence and step/collect commutation along the program's
// own concrete trace.
GcAlgebraReport check_gc_algebra(const Program& p, const AnalysisConfig& cfg);

}  // namespace aam
