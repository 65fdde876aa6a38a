#include "aam/widen.hpp"

#include <algorithm>

namespace aam {

PartialState partial_of(const AbsState& s) {
  return PartialState{s.control, s.env, s.handler, s.kont, s.time};
}

AbsState with_store(const PartialState& c, const AbsStore& store) {
  return AbsState{c.control, c.env, store, c.handler, c.kont, c.time};
}

WidenedResult analyze_widened(const Program& p, MachineTag tag, const KCfaParams& kcfa,
                              PermSet universe, LazyVariant variant) {
  if (universe.empty()) universe = p.mentioned_permissions();
  StepParams prm{features_for(tag), universe};

  WidenedResult res;
  AbsState init = inject_abs(p, tag);
  PartialState c0 = partial_of(init);
  const AbsStore store0 = init.store;

  auto step = [&](const AbsState& s) {
    return is_lazy_family(tag) ? abstract_step_lk(p, s, kcfa, variant, &res.facts)
                               : abstract_step(p, s, prm, kcfa, &res.facts);
  };

  System sys;
  std::set<std::pair<PartialState, PartialState>> edges;
  for (;;) {
    System next = sys;
    next.states.insert(c0);
    next.store.join_all(store0);
    for (const PartialState& c : sys.states) {
      for (const AbsState& succ : step(with_store(c, sys.store))) {
        PartialState c2 = partial_of(succ);
        edges.emplace(c, c2);
        next.states.insert(std::move(c2));
        next.store.join_all(succ.store);
      }
    }
    next.iterations = sys.iterations + 1;
    // the transfer function must be monotone
    if (!std::includes(next.states.begin(), next.states.end(), sys.states.begin(),
                       sys.states.end()) ||
        !sys.store.leq(next.store))
      throw Error("widened transfer function regressed");
    bool stable = next.states == sys.states && next.store == sys.store;
    sys = std::move(next);
    if (stable) break;
  }

  res.state_list.assign(sys.states.begin(), sys.states.end());
  std::map<PartialState, std::uint32_t> index;
  for (std::uint32_t i = 0; i < res.state_list.size(); i++) index.emplace(res.state_list[i], i);
  for (const auto& [from, to] : edges) res.edges.emplace_back(index.at(from), index.at(to));
  res.system = std::move(sys);
  return res;
}

std::size_t monovariant_iteration_bound(const Program& p) {
  std::size_t n = p.size();  // expressions and labels coincide
  std::size_t vars = p.var_count();
  std::size_t lams = p.count(ExprKind::Lam);
  return n * n * n + 1 + (vars + n) * (2 * n * n + lams);
}

BoundReport check_monovariant_bound(const Program& p, MachineTag tag) {
  BoundReport rep;
  rep.bound = monovariant_iteration_bound(p);
  rep.iterations = analyze_widened(p, tag, KCfaParams{0}).system.iterations;
  rep.ok = rep.iterations <= rep.bound;
  return rep;
}

}  // namespace aam
