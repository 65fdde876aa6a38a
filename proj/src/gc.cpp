#include "aam/gc.hpp"

namespace aam {

namespace {

// Immediate addresses mentioned by an object (no chasing). Environments are
// already restricted to free variables by the steppers, so the whole range
// counts.
template <class Visit>
void immediate(const Env& e, Visit visit) {
  for (const auto& [v, a] : e.slots()) visit(a);
}

template <class Visit>
void immediate(const Val& v, Visit visit) {
  if (v.is_kont) visit(v.kont);
}

template <class Visit>
void immediate(const Kont& k, Visit visit) {
  if (const auto* ar = std::get_if<ArK>(&k)) {
    immediate(ar->env, visit);
    visit(ar->next);
  } else if (const auto* fn = std::get_if<FnK>(&k)) {
    immediate(fn->fn, visit);
    immediate(fn->fn_env, visit);
    visit(fn->next);
  } else if (const auto* f = std::get_if<IfK>(&k)) {
    immediate(f->env, visit);
    visit(f->next);
  } else if (const auto* st = std::get_if<SetK>(&k)) {
    visit(st->target);
    visit(st->next);
  } else if (const auto* c1 = std::get_if<C1K>(&k)) {
    visit(c1->target);
    visit(c1->next);
  } else if (const auto* c2 = std::get_if<C2K>(&k)) {
    visit(c2->arg);
    visit(c2->next);
  } else if (const auto* c2e = std::get_if<C2eK>(&k)) {
    immediate(c2e->env, visit);
    visit(c2e->next);
  } else if (const auto* hn = std::get_if<HnK>(&k)) {
    immediate(hn->handler, visit);
    immediate(hn->env, visit);
    visit(hn->kont);
    visit(hn->next);
  }
}

template <class Visit>
void immediate(const Storable& s, Visit visit) {
  if (const auto* clo = std::get_if<CloS>(&s)) {
    immediate(clo->val, visit);
    immediate(clo->env, visit);
  } else if (const auto* th = std::get_if<ThunkS>(&s)) {
    immediate(th->env, visit);
  } else if (const auto* co = std::get_if<CompS>(&s)) {
    immediate(co->val, visit);
    immediate(co->env, visit);
  } else {
    immediate(std::get<Kont>(s), visit);
  }
}

template <class StoreT, class Visit>
void entry_immediate(const StoreT& store, const Addr& a, Visit visit);

template <class Visit>
void entry_immediate(const Store& store, const Addr& a, Visit visit) {
  immediate(store.at(a), visit);
}

template <class Visit>
void entry_immediate(const AbsStore& store, const Addr& a, Visit visit) {
  for (const Storable& s : store.at_checked(a)) immediate(s, visit);
}

// Least fixed point of the live-locations equations: close `seeds` under the
// store. `include_seeds` distinguishes LL of an object (seeds are already
// live) from the reachability machine (roots become live as they are
// visited, which is the same set).
template <class StoreT>
std::set<Addr> closure(const std::set<Addr>& seeds, const StoreT& store) {
  std::set<Addr> black;
  std::vector<Addr> grey(seeds.begin(), seeds.end());
  while (!grey.empty()) {
    Addr a = grey.back();
    grey.pop_back();
    if (!black.insert(a).second) continue;
    entry_immediate(store, a, [&](const Addr& b) {
      if (!black.count(b)) grey.push_back(b);
    });
  }
  return black;
}

}  // namespace

std::set<Addr> live_locations(const Program& p, Label e, const Env& env, const Store& store) {
  std::set<Addr> seeds;
  for (VarId v : p.free_vars(e)) {
    if (const Addr* a = env.find(v)) seeds.insert(*a);
  }
  return closure(seeds, store);
}

std::set<Addr> live_locations(const Program&, const Storable& s, const Store& store) {
  std::set<Addr> seeds;
  immediate(s, [&](const Addr& a) { seeds.insert(a); });
  return closure(seeds, store);
}

std::set<Addr> live_locations(const Program& p, Label e, const Env& env, const AbsStore& store) {
  std::set<Addr> seeds;
  for (VarId v : p.free_vars(e)) {
    if (const Addr* a = env.find(v)) seeds.insert(*a);
  }
  return closure(seeds, store);
}

std::set<Addr> live_locations(const Program&, const std::set<Storable>& ss,
                              const AbsStore& store) {
  std::set<Addr> seeds;
  for (const Storable& s : ss) immediate(s, [&](const Addr& a) { seeds.insert(a); });
  return closure(seeds, store);
}

namespace {

template <class StoreT>
std::set<Addr> reach(const std::set<Addr>& roots, const StoreT& store) {
  // Grey/black iteration; moving one grey location at a time to black and
  // greying what its entry makes live.
  std::set<Addr> grey = roots;
  std::set<Addr> black;
  while (!grey.empty()) {
    Addr a = *grey.begin();
    grey.erase(grey.begin());
    black.insert(a);
    entry_immediate(store, a, [&](const Addr& b) {
      if (!black.count(b)) grey.insert(b);
    });
  }
  return black;
}

}  // namespace

std::set<Addr> gc_reachable(const Program&, const std::set<Addr>& roots, const Store& store) {
  return reach(roots, store);
}

std::set<Addr> gc_reachable(const Program&, const std::set<Addr>& roots, const AbsStore& store) {
  return reach(roots, store);
}

namespace {

template <class StateT>
std::set<Addr> roots_of(const Program& p, const StateT& s, const Features& f) {
  std::set<Addr> roots;
  if (s.control.is_kont)
    roots.insert(s.control.kont);
  else
    for (VarId v : p.free_vars(s.control.expr))
      if (const Addr* a = s.env.find(v)) roots.insert(*a);
  roots.insert(s.kont);
  if (f.exceptions) roots.insert(s.handler);
  // The designated empty continuations the catch and fail rules jump to stay
  // pinned.
  if (f.exceptions) roots.insert(mt_addr());
  if (f.marks) roots.insert(failure_mt_addr());
  return roots;
}

}  // namespace

std::set<Addr> state_roots(const Program& p, const PtrState& s, const Features& f) {
  return roots_of(p, s, f);
}

std::set<Addr> state_roots(const Program& p, const AbsState& s, const Features& f) {
  return roots_of(p, s, f);
}

PtrState collect(const Program& p, const PtrState& s, const Features& f) {
  PtrState out = s;
  out.store = s.store.restricted(gc_reachable(p, roots_of(p, s, f), s.store));
  return out;
}

AbsState collect(const Program& p, const AbsState& s, const Features& f) {
  AbsState out = s;
  out.store = s.store.restricted(gc_reachable(p, roots_of(p, s, f), s.store));
  return out;
}

}  // namespace aam
