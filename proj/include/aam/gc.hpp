#pragma once

// Live-location computation and garbage collection for machine states whose
// continuations live in the store. The live-locations function takes the
// least fixed point through the store; the reachability machine iterates
// grey/black sets over it. Both work uniformly over single-valued and
// set-valued stores.

#include <optional>
#include <set>

#include "aam/machine.hpp"

namespace aam {

// Addresses used by an object, chased transitively through the store.
// Referencing an address outside the store's domain is an error.
std::set<Addr> live_locations(const Program& p, Label e, const Env& env, const Store& store);
std::set<Addr> live_locations(const Program& p, const Storable& s, const Store& store);
std::set<Addr> live_locations(const Program& p, Label e, const Env& env, const AbsStore& store);
std::set<Addr> live_locations(const Program& p, const std::set<Storable>& ss,
                              const AbsStore& store);

// The grey/black reachability machine, iterated from `roots` until no grey
// locations remain; returns the black set.
std::set<Addr> gc_reachable(const Program& p, const std::set<Addr>& roots, const Store& store);
std::set<Addr> gc_reachable(const Program& p, const std::set<Addr>& roots, const AbsStore& store);

// Restricts the store to what is reachable from the state's roots: the
// control/environment, the continuation register and its target, plus the
// handler register for exception machines and the designated empty-
// continuation addresses the step rules jump to.
PtrState collect(const Program& p, const PtrState& s, const Features& f);
AbsState collect(const Program& p, const AbsState& s, const Features& f);

std::set<Addr> state_roots(const Program& p, const PtrState& s, const Features& f);
std::set<Addr> state_roots(const Program& p, const AbsState& s, const Features& f);

}  // namespace aam
