#include "aam/abstract.hpp"

#include <algorithm>
#include <random>

#include "aam/gc.hpp"
#include "aam/lazy.hpp"
#include "aam/stack_inspection.hpp"

namespace aam {

// ---------------------------------------------------------------------------
// Flow facts

namespace {

template <class K, class V>
bool map_of_sets_superset(const std::map<K, std::set<V>>& big, const std::map<K, std::set<V>>& small) {
  for (const auto& [k, vs] : small) {
    auto it = big.find(k);
    if (it == big.end()) return vs.empty();
    if (!std::includes(it->second.begin(), it->second.end(), vs.begin(), vs.end())) return false;
  }
  return true;
}

}  // namespace

bool FlowFacts::superset_of(const FlowFacts& other) const {
  if (!map_of_sets_superset(applies, other.applies)) return false;
  if (!map_of_sets_superset(handles, other.handles)) return false;
  if (!map_of_sets_superset(captures, other.captures)) return false;
  for (const auto& [l, branches] : other.test_branches) {
    auto it = test_branches.find(l);
    bool then_ok = !branches.first || (it != test_branches.end() && it->second.first);
    bool else_ok = !branches.second || (it != test_branches.end() && it->second.second);
    if (!then_ok || !else_ok) return false;
  }
  if (!std::includes(thunk_sites.begin(), thunk_sites.end(), other.thunk_sites.begin(),
                     other.thunk_sites.end()))
    return false;
  return std::includes(thunk_forced.begin(), thunk_forced.end(), other.thunk_forced.begin(),
                       other.thunk_forced.end());
}

// ---------------------------------------------------------------------------
// The abstract stepper

std::vector<AbsState> abstract_step(const Program& p, const AbsState& s, const StepParams& prm,
                                    const KCfaParams& kcfa, FlowFacts* facts) {
  const Features& F = prm.features;
  std::set<AbsState> out;

  auto tick = [&](const Kont* kc) { return abstract_tick(kcfa, p, s, kc); };
  auto alloc = [&](const Kont* kc, std::uint8_t salt = 0) {
    return abstract_alloc(kcfa, p, s, kc, salt);
  };

  if (!s.control.is_kont) {
    const ExprNode& n = p.node(s.control.expr);
    switch (n.kind) {
      case ExprKind::Ref: {
        for (const Storable& st : s.store.at(s.env.at(n.var))) {
          const auto* clo = std::get_if<CloS>(&st);
          if (!clo) continue;
          AbsState nxt = s;
          nxt.control = clo->val;
          nxt.env = clo->env;
          nxt.time = tick(nullptr);
          out.insert(std::move(nxt));
        }
        return {out.begin(), out.end()};
      }
      case ExprKind::App: {
        Time u = tick(nullptr);
        Addr b = alloc(nullptr);
        AbsState nxt = s;
        nxt.store.join(b,
                       Kont{ArK{n.children[1], close_env(p, n.children[1], s.env), s.kont, {}}});
        nxt.control = Control::from_expr(n.children[0]);
        nxt.env = close_env(p, n.children[0], s.env);
        nxt.kont = b;
        nxt.time = u;
        return {std::move(nxt)};
      }
      case ExprKind::If: {
        if (!F.extended) return {};
        Time u = tick(nullptr);
        Addr b = alloc(nullptr);
        Env both = close_env(p, n.children[1], s.env);
        for (VarId v : p.free_vars(n.children[2]))
          if (const Addr* a = s.env.find(v)) both = both.extended(v, *a);
        AbsState nxt = s;
        nxt.store.join(b, Kont{IfK{n.children[1], n.children[2], std::move(both), s.kont}});
        nxt.control = Control::from_expr(n.children[0]);
        nxt.env = close_env(p, n.children[0], s.env);
        nxt.kont = b;
        nxt.time = u;
        return {std::move(nxt)};
      }
      case ExprKind::SetBang: {
        if (!F.extended) return {};
        Time u = tick(nullptr);
        Addr b = alloc(nullptr);
        AbsState nxt = s;
        nxt.store.join(b, Kont{SetK{s.env.at(n.var), s.kont}});
        nxt.control = Control::from_expr(n.children[0]);
        nxt.env = close_env(p, n.children[0], s.env);
        nxt.kont = b;
        nxt.time = u;
        return {std::move(nxt)};
      }
      case ExprKind::Throw: {
        if (!F.exceptions) return {};
        for (const Storable& st : s.store.at(s.handler)) {
          const Kont* h = std::get_if<Kont>(&st);
          if (!h) continue;
          const auto* hn = std::get_if<HnK>(h);
          if (!hn || hn->handler.is_kont || p.node(hn->handler.expr).kind != ExprKind::Lam)
            continue;
          Time u = abstract_tick(kcfa, p, s, h);
          Addr b = abstract_alloc(kcfa, p, s, h);
          const ExprNode& lam = p.node(hn->handler.expr);
          Label body = lam.children[0];
          if (facts) facts->handles[s.control.expr].insert(p.node(hn->handler.expr).parent);
          AbsState nxt = s;
          nxt.store.join(b, CloS{make_closure(p, Val::from_expr(n.children[0]), s.env)});
          nxt.env = close_env(p, body, hn->env.extended(lam.var, b));
          nxt.control = Control::from_expr(body);
          nxt.handler = hn->next;
          nxt.kont = hn->kont;
          nxt.time = u;
          out.insert(std::move(nxt));
        }
        return {out.begin(), out.end()};
      }
      case ExprKind::Catch: {
        if (!F.exceptions) return {};
        Time u = tick(nullptr);
        Addr b = alloc(nullptr);
        AbsState nxt = s;
        nxt.store.join(b, Kont{HnK{Val::from_expr(n.children[1]),
                                   close_env(p, n.children[1], s.env), s.kont, s.handler}});
        nxt.control = Control::from_expr(n.children[0]);
        nxt.env = close_env(p, n.children[0], s.env);
        nxt.handler = b;
        nxt.kont = mt_addr();
        nxt.time = u;
        return {std::move(nxt)};
      }
      case ExprKind::Fail: {
        if (!F.marks) return {};
        for (const Storable& st : s.store.at(s.kont)) {
          const Kont* k = std::get_if<Kont>(&st);
          if (!k) continue;
          if (is_mt(*k) && kont_marks(*k).empty()) continue;  // security terminal
          AbsState nxt = s;
          nxt.env = Env{};
          nxt.kont = failure_mt_addr();
          nxt.time = tick(k);
          out.insert(std::move(nxt));
        }
        return {out.begin(), out.end()};
      }
      case ExprKind::Grant:
      case ExprKind::Frame: {
        if (!F.marks) return {};
        PermSet ps = n.kind == ExprKind::Grant ? n.perms : perm_minus(prm.universe, n.perms);
        Cap cap = n.kind == ExprKind::Grant ? Cap::Grant : Cap::Deny;
        // Rewrites one chosen continuation in place: one successor per choice.
        for (const Storable& st : s.store.at(s.kont)) {
          const Kont* k = std::get_if<Kont>(&st);
          if (!k || (!is_mt(*k) && !std::holds_alternative<ArK>(*k) &&
                     !std::holds_alternative<FnK>(*k)))
            continue;
          AbsState nxt = s;
          nxt.store.replace(s.kont, st, Kont{kont_with_marks(*k, ps, cap)});
          nxt.control = Control::from_expr(n.children[0]);
          nxt.env = close_env(p, n.children[0], s.env);
          nxt.time = tick(k);
          out.insert(std::move(nxt));
        }
        return {out.begin(), out.end()};
      }
      case ExprKind::Test: {
        if (!F.marks) return {};
        OkPaths paths = ok_star_paths(n.perms, s.store, s.kont);
        if (facts) {
          auto& branches = facts->test_branches[s.control.expr];
          branches.first |= paths.can_ok;
          branches.second |= paths.can_fail;
        }
        auto branch_state = [&](Label branch) {
          AbsState nxt = s;
          nxt.control = Control::from_expr(branch);
          nxt.env = close_env(p, branch, s.env);
          nxt.time = tick(nullptr);
          return nxt;
        };
        if (paths.can_ok) out.insert(branch_state(n.children[0]));
        if (paths.can_fail) out.insert(branch_state(n.children[1]));
        return {out.begin(), out.end()};
      }
      case ExprKind::Lam:
      case ExprKind::False:
      case ExprKind::Callcc:
        break;
    }
  }

  if (!is_value_control(p, s.control)) return {};

  for (const Storable& st : s.store.at(s.kont)) {
    const Kont* kp = std::get_if<Kont>(&st);
    if (!kp) continue;
    const Kont& k = *kp;

    if (std::holds_alternative<MtK>(k)) {
      if (!F.exceptions) continue;  // final
      for (const Storable& hst : s.store.at(s.handler)) {
        const Kont* h = std::get_if<Kont>(&hst);
        if (!h) continue;
        const auto* hn = std::get_if<HnK>(h);
        if (!hn) continue;
        AbsState nxt = s;
        nxt.handler = hn->next;
        nxt.kont = hn->kont;
        nxt.time = tick(&k);
        out.insert(std::move(nxt));
      }
      continue;
    }
    if (const auto* ar = std::get_if<ArK>(&k)) {
      if (facts && !s.control.is_kont && p.node(s.control.expr).kind == ExprKind::Lam)
        facts->applies[p.node(ar->arg).parent].insert(s.control.expr);
      Time u = tick(&k);
      Addr b = alloc(&k);
      AbsState nxt = s;
      nxt.store.join(b, Kont{FnK{s.control,
                                 s.control.is_kont ? Env{} : close_env(p, s.control.expr, s.env),
                                 ar->next,
                                 {}}});
      nxt.control = Control::from_expr(ar->arg);
      nxt.env = ar->env;
      nxt.kont = b;
      nxt.time = u;
      out.insert(std::move(nxt));
      continue;
    }
    if (const auto* fn = std::get_if<FnK>(&k)) {
      if (!fn->fn.is_kont && p.node(fn->fn.expr).kind == ExprKind::Lam) {
        Time u = tick(&k);
        Addr b = alloc(&k);
        const ExprNode& lam = p.node(fn->fn.expr);
        Label body = lam.children[0];
        AbsState nxt = s;
        nxt.store.join(b, CloS{make_closure(p, s.control, s.env)});
        nxt.env = close_env(p, body, fn->fn_env.extended(lam.var, b));
        nxt.control = Control::from_expr(body);
        nxt.kont = fn->next;
        nxt.time = u;
        out.insert(std::move(nxt));
        continue;
      }
      if (!fn->fn.is_kont && p.node(fn->fn.expr).kind == ExprKind::Callcc && F.extended) {
        if (!s.control.is_kont && p.node(s.control.expr).kind == ExprKind::Lam) {
          Time u = tick(&k);
          Addr b = alloc(&k);
          const ExprNode& lam = p.node(s.control.expr);
          Label body = lam.children[0];
          if (facts) facts->captures[fn->fn.expr].insert(render(fn->next, p));
          AbsState nxt = s;
          nxt.store.join(b, CloS{Val::from_kont(fn->next), Env{}});
          nxt.env =
              close_env(p, body, close_env(p, s.control.expr, s.env).extended(lam.var, b));
          nxt.control = Control::from_expr(body);
          nxt.kont = fn->next;
          nxt.time = u;
          out.insert(std::move(nxt));
        } else if (s.control.is_kont) {
          AbsState nxt = s;
          nxt.control = Val::from_kont(fn->next);
          nxt.env = Env{};
          nxt.kont = s.control.kont;
          nxt.time = tick(&k);
          out.insert(std::move(nxt));
        }
        continue;
      }
      if (fn->fn.is_kont && F.extended) {
        AbsState nxt = s;
        nxt.kont = fn->fn.kont;
        nxt.time = tick(&k);
        out.insert(std::move(nxt));
        continue;
      }
      continue;  // applying a non-procedure: no successors from this choice
    }
    if (const auto* iff = std::get_if<IfK>(&k)) {
      if (!F.extended) continue;
      bool is_false = !s.control.is_kont && p.node(s.control.expr).kind == ExprKind::False;
      Label branch = is_false ? iff->else_e : iff->then_e;
      AbsState nxt = s;
      nxt.control = Control::from_expr(branch);
      nxt.env = close_env(p, branch, iff->env);
      nxt.kont = iff->next;
      nxt.time = tick(&k);
      out.insert(std::move(nxt));
      continue;
    }
    if (const auto* set = std::get_if<SetK>(&k)) {
      if (!F.extended) continue;
      // One successor per previous value; the write joins, never overwrites.
      std::vector<CloS> previous;
      for (const Storable& old : s.store.at(set->target))
        if (const auto* clo = std::get_if<CloS>(&old)) previous.push_back(*clo);
      for (const CloS& prev : previous) {
        AbsState nxt = s;
        nxt.store.join(set->target, CloS{make_closure(p, s.control, s.env)});
        nxt.control = prev.val;
        nxt.env = prev.env;
        nxt.kont = set->next;
        nxt.time = tick(&k);
        out.insert(std::move(nxt));
      }
      continue;
    }
    // c1/c2 frames belong to the lazy family's stepper.
  }
  return {out.begin(), out.end()};
}

AbsTerminal classify_abs_terminal(const Program& p, const AbsState& s, const StepParams& prm) {
  if (!abstract_step(p, s, prm, KCfaParams{0}).empty()) return AbsTerminal::NotTerminal;
  if (is_value_control(p, s.control)) {
    for (const Storable& st : s.store.at(s.kont)) {
      const Kont* k = std::get_if<Kont>(&st);
      if (k && is_mt(*k)) return AbsTerminal::Value;
    }
    return AbsTerminal::Stuck;
  }
  ExprKind kind = p.node(s.control.expr).kind;
  if (kind == ExprKind::Throw && prm.features.exceptions) return AbsTerminal::UncaughtThrow;
  if (kind == ExprKind::Fail && prm.features.marks) return AbsTerminal::SecurityFailure;
  return AbsTerminal::Stuck;
}

// ---------------------------------------------------------------------------
// Exploration

AnalysisResult explore(const AbsState& init, const AbsStepFn& step,
                       std::optional<std::uint64_t> shuffle_seed, std::size_t max_states) {
  AnalysisResult res;
  std::map<AbsState, std::uint32_t> index;
  std::deque<std::uint32_t> work;
  std::set<std::pair<std::uint32_t, std::uint32_t>> edges;
  std::mt19937_64 rng(shuffle_seed.value_or(0));

  auto intern = [&](AbsState st) -> std::uint32_t {
    auto it = index.find(st);
    if (it != index.end()) return it->second;
    std::uint32_t id = static_cast<std::uint32_t>(res.states.size());
    if (res.states.size() >= max_states) throw Error("abstract state budget exceeded");
    index.emplace(st, id);
    res.states.push_back(std::move(st));
    work.push_back(id);
    return id;
  };

  res.initial = intern(init);
  while (!work.empty()) {
    std::uint32_t cur;
    if (shuffle_seed) {
      std::size_t pick = rng() % work.size();
      cur = work[pick];
      work.erase(work.begin() + static_cast<std::ptrdiff_t>(pick));
    } else {
      cur = work.front();
      work.pop_front();
    }
    for (AbsState& nxt : step(res.states[cur])) {
      std::uint32_t to = intern(std::move(nxt));
      edges.emplace(cur, to);
    }
  }
  res.edges.assign(edges.begin(), edges.end());
  return res;
}

AnalysisResult analyze_reachable(const Program& p, MachineTag tag, const KCfaParams& kcfa,
                                 bool gc, PermSet universe,
                                 std::optional<std::uint64_t> shuffle_seed) {
  if (universe.empty()) universe = p.mentioned_permissions();
  AnalysisResult res;
  FlowFacts facts;
  if (is_lazy_family(tag)) {
    AbsState init = inject_abs(p, tag);
    res = explore(
        init,
        [&](const AbsState& s) {
          auto succs = abstract_step_lk(p, s, kcfa, LazyVariant::Baseline, &facts);
          if (gc)
            for (auto& n : succs) n = collect(p, n, features_for(tag));
          return succs;
        },
        shuffle_seed);
  } else {
    StepParams prm{features_for(tag), universe};
    AbsState init = inject_abs(p, tag);
    res = explore(
        init,
        [&](const AbsState& s) {
          auto succs = abstract_step(p, s, prm, kcfa, &facts);
          if (gc)
            for (auto& n : succs) n = collect(p, n, prm.features);
          return succs;
        },
        shuffle_seed);
  }
  res.facts = std::move(facts);
  return res;
}

// ---------------------------------------------------------------------------
// Abstraction map

Addr alpha(const Addr& a, const KCfaParams& kcfa) {
  Addr out = a;
  out.gen = 0;
  out.contour = truncated(std::move(out.contour), kcfa.k);
  return out;
}

namespace {

Env alpha_env(const Env& e, const KCfaParams& kcfa) {
  Env out;
  for (const auto& [v, a] : e.slots()) out = out.extended(v, alpha(a, kcfa));
  return out;
}

Val alpha_val(const Val& v, const KCfaParams& kcfa) {
  return v.is_kont ? Val::from_kont(alpha(v.kont, kcfa)) : v;
}

Kont alpha_kont(const Kont& k, const KCfaParams& kcfa) {
  Kont out = k;
  if (auto* ar = std::get_if<ArK>(&out)) {
    ar->env = alpha_env(ar->env, kcfa);
    ar->next = alpha(ar->next, kcfa);
  } else if (auto* fn = std::get_if<FnK>(&out)) {
    fn->fn = alpha_val(fn->fn, kcfa);
    fn->fn_env = alpha_env(fn->fn_env, kcfa);
    fn->next = alpha(fn->next, kcfa);
  } else if (auto* f = std::get_if<IfK>(&out)) {
    f->env = alpha_env(f->env, kcfa);
    f->next = alpha(f->next, kcfa);
  } else if (auto* st = std::get_if<SetK>(&out)) {
    st->target = alpha(st->target, kcfa);
    st->next = alpha(st->next, kcfa);
  } else if (auto* c1 = std::get_if<C1K>(&out)) {
    c1->target = alpha(c1->target, kcfa);
    c1->next = alpha(c1->next, kcfa);
  } else if (auto* c2 = std::get_if<C2K>(&out)) {
    c2->arg = alpha(c2->arg, kcfa);
    c2->next = alpha(c2->next, kcfa);
  } else if (auto* c2e = std::get_if<C2eK>(&out)) {
    c2e->env = alpha_env(c2e->env, kcfa);
    c2e->next = alpha(c2e->next, kcfa);
  } else if (auto* hn = std::get_if<HnK>(&out)) {
    hn->handler = alpha_val(hn->handler, kcfa);
    hn->env = alpha_env(hn->env, kcfa);
    hn->kont = alpha(hn->kont, kcfa);
    hn->next = alpha(hn->next, kcfa);
  }
  return out;
}

Storable alpha_storable(const Storable& s, const KCfaParams& kcfa) {
  if (const auto* clo = std::get_if<CloS>(&s))
    return CloS{alpha_val(clo->val, kcfa), alpha_env(clo->env, kcfa)};
  if (const auto* th = std::get_if<ThunkS>(&s)) return ThunkS{th->expr, alpha_env(th->env, kcfa)};
  if (const auto* co = std::get_if<CompS>(&s))
    return CompS{alpha_val(co->val, kcfa), alpha_env(co->env, kcfa)};
  return alpha_kont(std::get<Kont>(s), kcfa);
}

}  // namespace

AbsState alpha(const Program&, const PtrState& s, const KCfaParams& kcfa) {
  AbsState out;
  out.control = alpha_val(s.control, kcfa);
  out.env = alpha_env(s.env, kcfa);
  out.handler = alpha(s.handler, kcfa);
  out.kont = alpha(s.kont, kcfa);
  out.time = alpha(s.time, kcfa);
  for (const auto& [a, st] : s.store.entries())
    out.store.join(alpha(a, kcfa), alpha_storable(st, kcfa));
  return out;
}

bool state_leq(const AbsState& a, const AbsState& b) {
  return a.control == b.control && a.env == b.env && a.handler == b.handler &&
         a.kont == b.kont && a.time == b.time && a.store.leq(b.store);
}

// ---------------------------------------------------------------------------
// Simulation harness

SoundnessReport check_soundness(const Program& p, MachineTag tag, const KCfaParams& kcfa,
                                std::size_t fuel, PermSet universe) {
  if (universe.empty()) universe = p.mentioned_permissions();
  SoundnessReport rep;

  std::vector<PtrState> trace;
  if (is_lazy_family(tag)) {
    LkPtrRun run = run_lk_ptr(p, ConcretePolicy{PolicyKind::Contour}, fuel);
    trace = std::move(run.trace);
  } else {
    PtrRun run = run_pointer(p, tag, ConcretePolicy{PolicyKind::Contour}, fuel, false, universe);
    trace = std::move(run.trace);
  }
  rep.concrete_states = trace.size();

  AnalysisResult abs = analyze_reachable(p, tag, kcfa, false, universe);
  rep.abstract_states = abs.states.size();

  // successor lists by state index
  std::vector<std::vector<std::uint32_t>> succs(abs.states.size());
  for (auto [i, j] : abs.edges) succs[i].push_back(j);

  std::vector<std::uint32_t> covers;  // covers of the current trace state
  for (std::size_t i = 0; i < trace.size(); i++) {
    AbsState want = alpha(p, trace[i], kcfa);
    std::vector<std::uint32_t> next_covers;
    for (std::uint32_t idx = 0; idx < abs.states.size(); idx++)
      if (state_leq(want, abs.states[idx])) next_covers.push_back(idx);
    if (next_covers.empty()) {
      rep.ok = false;
      rep.violation = "concrete state " + std::to_string(i) + " has no abstract cover";
      return rep;
    }
    if (i > 0) {
      // every cover of the predecessor must step to a cover of this state
      for (std::uint32_t prev : covers) {
        bool simulated = false;
        for (std::uint32_t nxt : succs[prev])
          if (state_leq(want, abs.states[nxt])) {
            simulated = true;
            break;
          }
        if (!simulated) {
          rep.ok = false;
          rep.violation = "transition " + std::to_string(i - 1) + " -> " + std::to_string(i) +
                          " is not simulated from abstract state " + std::to_string(prev);
          return rep;
        }
      }
    }
    covers = std::move(next_covers);
  }
  return rep;
}

}  // namespace aam
