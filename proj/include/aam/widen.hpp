#pragma once

// Store-widened analysis: partial states (machine states minus their store)
// paired with one global store, computed as the least fixed point of a
// monotone transfer function. Iteration counts are certified against the
// syntactic bound for the monovariant case.

#include <cstdint>
#include <set>

#include "aam/abstract.hpp"
#include "aam/lazy.hpp"

namespace aam {

struct PartialState {
  Control control;
  Env env;
  Addr handler;
  Addr kont;
  Time time;
  friend auto operator<=>(const PartialState&, const PartialState&) = default;
};

PartialState partial_of(const AbsState& s);
AbsState with_store(const PartialState& c, const AbsStore& store);

struct System {
  std::set<PartialState> states;
  AbsStore store;
  std::size_t iterations = 0;  // applications of the transfer function
};

struct WidenedResult {
  System system;
  FlowFacts facts;
  std::vector<PartialState> state_list;  // index order for graph emission
  std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;
};

WidenedResult analyze_widened(const Program& p, MachineTag tag, const KCfaParams& kcfa,
                              PermSet universe = {},
                              LazyVariant variant = LazyVariant::Baseline);

// Iteration ceiling for the monovariant widened analysis, computed from the
// program's syntactic counts alone.
std::size_t monovariant_iteration_bound(const Program& p);

struct BoundReport {
  std::size_t iterations = 0;
  std::size_t bound = 0;
  bool ok = false;
};

BoundReport check_monovariant_bound(const Program& p, MachineTag tag = MachineTag::CeskStarT);

}  // namespace aam
