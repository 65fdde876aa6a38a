#pragma once

// The abstract (set-valued store) machine family: the nondeterministic
// stepper, reachable-state exploration, the abstraction map from concrete
// pointer-refined states, the state ordering, and the simulation harness
// that checks concrete traces are covered stepwise.

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "aam/concrete.hpp"
#include "aam/machine.hpp"

namespace aam {

// ---------------------------------------------------------------------------
// Flow facts accumulated during abstract exploration.

struct FlowFacts {
  // application label -> lambda labels reaching its operator position
  std::map<Label, std::set<Label>> applies;
  // throw label -> catch labels that may handle it
  std::map<Label, std::set<Label>> handles;
  // callcc occurrence label -> captured continuation addresses (rendered)
  std::map<Label, std::set<std::string>> captures;
  // test label -> (then branch reachable, else branch reachable)
  std::map<Label, std::pair<bool, bool>> test_branches;
  // operand labels whose thunks were allocated / ever forced
  std::set<Label> thunk_sites;
  std::set<Label> thunk_forced;

  bool superset_of(const FlowFacts& other) const;
  friend auto operator<=>(const FlowFacts&, const FlowFacts&) = default;
};

// ---------------------------------------------------------------------------
// One abstract transition: every successor over every choice of
// continuation, handler, and store entry. An empty result marks a terminal
// abstract state.

std::vector<AbsState> abstract_step(const Program& p, const AbsState& s, const StepParams& prm,
                                    const KCfaParams& kcfa, FlowFacts* facts = nullptr);

enum class AbsTerminal : std::uint8_t { NotTerminal, Value, Stuck, UncaughtThrow, SecurityFailure };
AbsTerminal classify_abs_terminal(const Program& p, const AbsState& s, const StepParams& prm);

// ---------------------------------------------------------------------------
// Reachability.

struct AnalysisResult {
  std::vector<AbsState> states;  // index order = discovery order
  std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;
  FlowFacts facts;
  std::size_t initial = 0;
};

using AbsStepFn = std::function<std::vector<AbsState>(const AbsState&)>;

// Worklist exploration from `init` to the transitive closure. FIFO order by
// default; a seed draws worklist picks pseudo-randomly instead (the result
// must not depend on the order, which tests assert).
AnalysisResult explore(const AbsState& init, const AbsStepFn& step,
                       std::optional<std::uint64_t> shuffle_seed = std::nullopt,
                       std::size_t max_states = 2'000'000);

// Reachable states of the abstract machine family selected by `tag`.
AnalysisResult analyze_reachable(const Program& p, MachineTag tag, const KCfaParams& kcfa,
                                 bool gc = false, PermSet universe = {},
                                 std::optional<std::uint64_t> shuffle_seed = std::nullopt);

// ---------------------------------------------------------------------------
// Abstraction and ordering.

Addr alpha(const Addr& a, const KCfaParams& kcfa);
AbsState alpha(const Program& p, const PtrState& s, const KCfaParams& kcfa);

// Component-wise order: flat (equality) on everything but the store, which
// is compared by pointwise set inclusion.
bool state_leq(const AbsState& a, const AbsState& b);

// ---------------------------------------------------------------------------
// Simulation harness: runs the concrete pointer-refined machine under the
// call-string policy, abstracts every trace state, and checks each is
// covered by a reachable abstract state such that stepping preserves
// coverage.

struct SoundnessReport {
  bool ok = true;
  std::size_t concrete_states = 0;
  std::size_t abstract_states = 0;
  std::string violation;  // empty when ok
};

SoundnessReport check_soundness(const Program& p, MachineTag tag, const KCfaParams& kcfa,
                                std::size_t fuel, PermSet universe = {});

}  // namespace aam
