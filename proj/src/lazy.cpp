#include "aam/lazy.hpp"

#include "aam/abstract.hpp"

namespace aam {

// ---------------------------------------------------------------------------
// Recursive-continuation lazy machine

LkState inject_lk(const Program& p) {
  if (!p.closed_at(p.root())) throw Error("open term");
  return LkState{Control::from_expr(p.root()), {}, {}, {}};
}

std::optional<LkState> step_lk(const Program& p, const LkState& s) {
  const ExprNode& n = p.node(s.control.expr);
  switch (n.kind) {
    case ExprKind::Ref: {
      const Storable& st = s.store.at(s.env.at(n.var));
      if (const auto* th = std::get_if<ThunkS>(&st)) {
        LkState out = s;
        out.kont.push_back(RFrame{RC1{s.env.at(n.var)}});
        out.control = Control::from_expr(th->expr);
        out.env = th->env;
        return out;
      }
      if (const auto* co = std::get_if<CompS>(&st)) {
        LkState out = s;
        out.control = co->val;
        out.env = co->env;
        return out;
      }
      return std::nullopt;
    }
    case ExprKind::App: {
      Addr a = Addr::from_int(s.store.next_int_addr());
      LkState out = s;
      out.store.put(a, ThunkS{n.children[1], close_env(p, n.children[1], s.env)});
      out.kont.push_back(RFrame{RC2{a}});
      out.control = Control::from_expr(n.children[0]);
      out.env = close_env(p, n.children[0], s.env);
      return out;
    }
    case ExprKind::Lam: {
      if (s.kont.empty()) return std::nullopt;  // final
      if (const auto* c1 = std::get_if<RC1>(&s.kont.back())) {
        LkState out = s;
        out.store.put(c1->target, CompS{s.control, close_env(p, s.control.expr, s.env)});
        out.kont.pop_back();
        return out;
      }
      if (const auto* c2 = std::get_if<RC2>(&s.kont.back())) {
        Label body = n.children[0];
        LkState out = s;
        out.env = close_env(p, body, close_env(p, s.control.expr, s.env).extended(n.var, c2->arg));
        out.control = Control::from_expr(body);
        out.kont.pop_back();
        return out;
      }
      return std::nullopt;
    }
    default:
      return std::nullopt;
  }
}

LkRun run_lk(const Program& p, std::size_t fuel) {
  LkRun run;
  LkState cur = inject_lk(p);
  run.trace.push_back(cur);
  for (std::size_t i = 0; i < fuel; i++) {
    auto next = step_lk(p, cur);
    if (!next) {
      run.flag = is_value_control(p, cur.control) && cur.kont.empty() ? RunFlag::Final
                                                                      : RunFlag::Stuck;
      return run;
    }
    cur = *next;
    run.trace.push_back(cur);
  }
  run.flag = RunFlag::FuelExhausted;
  return run;
}

// ---------------------------------------------------------------------------
// Pointer-refined lazy machine

PtrState inject_lk_ptr(const Program& p, const ConcretePolicy& pol) {
  return inject_ptr(p, MachineTag::LkStar, pol);
}

std::optional<PtrState> step_lk_ptr(const Program& p, const PtrState& s,
                                    const ConcretePolicy& pol) {
  const Storable& kent = s.store.at(s.kont);
  const Kont* kp = std::get_if<Kont>(&kent);
  if (!kp) throw Error("continuation register does not address a continuation");
  const Kont& k = *kp;

  auto tick = [&](const Kont* kc) { return concrete_tick(pol, p, s, kc); };
  auto alloc = [&](const Kont* kc, std::uint8_t salt = 0) {
    Addr a = concrete_alloc(pol, p, s, kc, salt);
    if (s.store.contains(a)) throw Error("allocation returned a live address");
    return a;
  };

  const ExprNode& n = p.node(s.control.expr);
  switch (n.kind) {
    case ExprKind::Ref: {
      const Addr& ax = s.env.at(n.var);
      const Storable& st = s.store.at(ax);
      if (const auto* th = std::get_if<ThunkS>(&st)) {
        Time u = tick(nullptr);
        Addr b = alloc(nullptr);
        PtrState out = s;
        out.store.put(b, Kont{C1K{ax, s.kont}});
        out.control = Control::from_expr(th->expr);
        out.env = th->env;
        out.kont = b;
        out.time = u;
        return out;
      }
      if (const auto* co = std::get_if<CompS>(&st)) {
        PtrState out = s;
        out.control = co->val;
        out.env = co->env;
        out.time = tick(nullptr);
        return out;
      }
      return std::nullopt;
    }
    case ExprKind::App: {
      Time u = tick(nullptr);
      Addr b = alloc(nullptr, 0);
      Addr c = alloc(nullptr, 1);
      PtrState out = s;
      out.store.put(c, ThunkS{n.children[1], close_env(p, n.children[1], s.env)});
      out.store.put(b, Kont{C2K{c, s.kont}});
      out.control = Control::from_expr(n.children[0]);
      out.env = close_env(p, n.children[0], s.env);
      out.kont = b;
      out.time = u;
      return out;
    }
    case ExprKind::Lam: {
      if (const auto* c1 = std::get_if<C1K>(&k)) {
        PtrState out = s;
        out.store.put(c1->target, CompS{s.control, close_env(p, s.control.expr, s.env)});
        out.kont = c1->next;
        out.time = tick(&k);
        return out;
      }
      if (const auto* c2 = std::get_if<C2K>(&k)) {
        Label body = n.children[0];
        PtrState out = s;
        out.env =
            close_env(p, body, close_env(p, s.control.expr, s.env).extended(n.var, c2->arg));
        out.control = Control::from_expr(body);
        out.kont = c2->next;
        out.time = tick(&k);
        return out;
      }
      return std::nullopt;  // mt: final
    }
    default:
      return std::nullopt;
  }
}

LkPtrRun run_lk_ptr(const Program& p, const ConcretePolicy& pol, std::size_t fuel) {
  LkPtrRun run;
  PtrState cur = inject_lk_ptr(p, pol);
  run.trace.push_back(cur);
  for (std::size_t i = 0; i < fuel; i++) {
    auto next = step_lk_ptr(p, cur, pol);
    if (!next) {
      const Storable& kent = cur.store.at(cur.kont);
      bool final = is_value_control(p, cur.control) && is_mt(std::get<Kont>(kent));
      run.flag = final ? RunFlag::Final : RunFlag::Stuck;
      return run;
    }
    cur = *next;
    run.trace.push_back(cur);
  }
  run.flag = RunFlag::FuelExhausted;
  return run;
}

// ---------------------------------------------------------------------------
// Abstract stepper

std::optional<LazyVariant> lazy_variant_from_name(const std::string& name) {
  if (name == "baseline") return LazyVariant::Baseline;
  if (name == "optimized") return LazyVariant::Optimized;
  if (name == "postponed") return LazyVariant::Postponed;
  return std::nullopt;
}

std::vector<AbsState> abstract_step_lk(const Program& p, const AbsState& s,
                                       const KCfaParams& kcfa, LazyVariant variant,
                                       FlowFacts* facts) {
  std::set<AbsState> out;
  auto tick = [&](const Kont* kc) { return abstract_tick(kcfa, p, s, kc); };
  auto alloc = [&](const Kont* kc, std::uint8_t salt = 0) {
    return abstract_alloc(kcfa, p, s, kc, salt);
  };

  const ExprNode& n = p.node(s.control.expr);
  switch (n.kind) {
    case ExprKind::Ref: {
      for (const Storable& st : s.store.at(s.env.at(n.var))) {
        if (const auto* th = std::get_if<ThunkS>(&st)) {
          if (facts) facts->thunk_forced.insert(th->expr);
          Time u = tick(nullptr);
          Addr b = alloc(nullptr);
          AbsState nxt = s;
          nxt.store.join(b, Kont{C1K{s.env.at(n.var), s.kont}});
          nxt.control = Control::from_expr(th->expr);
          nxt.env = th->env;
          nxt.kont = b;
          nxt.time = u;
          out.insert(std::move(nxt));
        } else if (const auto* co = std::get_if<CompS>(&st)) {
          AbsState nxt = s;
          nxt.control = co->val;
          nxt.env = co->env;
          nxt.time = tick(nullptr);
          out.insert(std::move(nxt));
        }
      }
      break;
    }
    case ExprKind::App: {
      Label operand = n.children[1];
      const ExprNode& arg = p.node(operand);
      Time u = tick(nullptr);
      if (variant == LazyVariant::Postponed) {
        Addr b = alloc(nullptr, 0);
        AbsState nxt = s;
        nxt.store.join(b, Kont{C2eK{operand, close_env(p, operand, s.env), s.kont}});
        nxt.control = Control::from_expr(n.children[0]);
        nxt.env = close_env(p, n.children[0], s.env);
        nxt.kont = b;
        nxt.time = u;
        out.insert(std::move(nxt));
        break;
      }
      if (variant == LazyVariant::Optimized && arg.kind == ExprKind::Ref) {
        // operand is a variable: reuse its binding, no thunk
        Addr b = alloc(nullptr, 0);
        AbsState nxt = s;
        nxt.store.join(b, Kont{C2K{s.env.at(arg.var), s.kont}});
        nxt.control = Control::from_expr(n.children[0]);
        nxt.env = close_env(p, n.children[0], s.env);
        nxt.kont = b;
        nxt.time = u;
        out.insert(std::move(nxt));
        break;
      }
      if (variant == LazyVariant::Optimized && arg.kind == ExprKind::Lam) {
        // operand is a value: store it computed, no thunk
        Addr b = alloc(nullptr, 0);
        Addr c = alloc(nullptr, 1);
        AbsState nxt = s;
        nxt.store.join(c, CompS{Val::from_expr(operand), close_env(p, operand, s.env)});
        nxt.store.join(b, Kont{C2K{c, s.kont}});
        nxt.control = Control::from_expr(n.children[0]);
        nxt.env = close_env(p, n.children[0], s.env);
        nxt.kont = b;
        nxt.time = u;
        out.insert(std::move(nxt));
        break;
      }
      Addr b = alloc(nullptr, 0);
      Addr c = alloc(nullptr, 1);
      if (facts) facts->thunk_sites.insert(operand);
      AbsState nxt = s;
      nxt.store.join(c, ThunkS{operand, close_env(p, operand, s.env)});
      nxt.store.join(b, Kont{C2K{c, s.kont}});
      nxt.control = Control::from_expr(n.children[0]);
      nxt.env = close_env(p, n.children[0], s.env);
      nxt.kont = b;
      nxt.time = u;
      out.insert(std::move(nxt));
      break;
    }
    case ExprKind::Lam: {
      for (const Storable& st : s.store.at(s.kont)) {
        const Kont* kp = std::get_if<Kont>(&st);
        if (!kp) continue;
        if (const auto* c1 = std::get_if<C1K>(kp)) {
          AbsState nxt = s;
          nxt.store.join(c1->target, CompS{s.control, close_env(p, s.control.expr, s.env)});
          nxt.kont = c1->next;
          nxt.time = tick(kp);
          out.insert(std::move(nxt));
        } else if (const auto* c2 = std::get_if<C2K>(kp)) {
          if (variant == LazyVariant::Postponed) continue;
          Label body = n.children[0];
          AbsState nxt = s;
          nxt.env = close_env(
              p, body, close_env(p, s.control.expr, s.env).extended(n.var, c2->arg));
          nxt.control = Control::from_expr(body);
          nxt.kont = c2->next;
          nxt.time = tick(kp);
          out.insert(std::move(nxt));
        } else if (const auto* c2e = std::get_if<C2eK>(kp)) {
          if (variant != LazyVariant::Postponed) continue;
          Label body = n.children[0];
          Time u = tick(kp);
          Addr b = alloc(kp);
          if (facts) facts->thunk_sites.insert(c2e->arg);
          AbsState nxt = s;
          nxt.store.join(b, ThunkS{c2e->arg, c2e->env});
          nxt.env = close_env(p, body, close_env(p, s.control.expr, s.env).extended(n.var, b));
          nxt.control = Control::from_expr(body);
          nxt.kont = c2e->next;
          nxt.time = u;
          out.insert(std::move(nxt));
        }
      }
      break;
    }
    default:
      break;
  }
  return {out.begin(), out.end()};
}

// ---------------------------------------------------------------------------
// Erasure and stepwise agreement

namespace {

const std::map<VarId, LazyErased> kNoSlots;

const std::map<VarId, LazyErased>& lslots(const LazyEnvPtr& e) {
  return e ? e->slots : kNoSlots;
}

LazyErased erase_entry(const Storable& st, const Store& store);

LazyEnvPtr erase_lenv(const Env& e, const Store& store) {
  auto out = std::make_shared<LazyEnvRec>();
  for (const auto& [v, a] : e.slots()) out->slots.emplace(v, erase_entry(store.at(a), store));
  return out;
}

LazyErased erase_entry(const Storable& st, const Store& store) {
  if (const auto* th = std::get_if<ThunkS>(&st))
    return LazyErased{false, th->expr, erase_lenv(th->env, store)};
  if (const auto* co = std::get_if<CompS>(&st))
    return LazyErased{true, co->val.expr, erase_lenv(co->env, store)};
  throw Error("lazy erasure expects thunk or computed entries");
}

}  // namespace

bool deep_equal(const LazyErased& a, const LazyErased& b) {
  if (a.computed != b.computed || a.expr != b.expr) return false;
  const auto& sa = lslots(a.env);
  const auto& sb = lslots(b.env);
  if (sa.size() != sb.size()) return false;
  auto it = sb.begin();
  for (const auto& [v, t] : sa) {
    if (it->first != v || !deep_equal(t, it->second)) return false;
    ++it;
  }
  return true;
}

bool deep_equal(const LazyEState& a, const LazyEState& b) {
  if (a.control != b.control || a.kont.size() != b.kont.size()) return false;
  if (!deep_equal(LazyErased{false, 0, a.env}, LazyErased{false, 0, b.env})) return false;
  for (std::size_t i = 0; i < a.kont.size(); i++) {
    if (a.kont[i].is_write_back != b.kont[i].is_write_back) return false;
    if (!deep_equal(a.kont[i].content, b.kont[i].content)) return false;
  }
  return true;
}

LazyEState erase_lazy(const Program&, const LkState& s) {
  LazyEState out;
  out.control = s.control.expr;
  out.env = erase_lenv(s.env, s.store);
  for (const RFrame& f : s.kont) {
    if (const auto* c1 = std::get_if<RC1>(&f))
      out.kont.push_back(LazyFrameE{true, erase_entry(s.store.at(c1->target), s.store)});
    else if (const auto* c2 = std::get_if<RC2>(&f))
      out.kont.push_back(LazyFrameE{false, erase_entry(s.store.at(c2->arg), s.store)});
    else
      throw Error("lazy erasure expects c1/c2 frames");
  }
  return out;
}

LazyEState erase_lazy(const Program&, const PtrState& s) {
  LazyEState out;
  out.control = s.control.expr;
  out.env = erase_lenv(s.env, s.store);
  std::vector<LazyFrameE> frames;  // innermost first while chasing
  Addr a = s.kont;
  for (;;) {
    const Kont& k = std::get<Kont>(s.store.at(a));
    if (is_mt(k)) break;
    if (const auto* c1 = std::get_if<C1K>(&k)) {
      frames.push_back(LazyFrameE{true, erase_entry(s.store.at(c1->target), s.store)});
      a = c1->next;
    } else if (const auto* c2 = std::get_if<C2K>(&k)) {
      frames.push_back(LazyFrameE{false, erase_entry(s.store.at(c2->arg), s.store)});
      a = c2->next;
    } else {
      throw Error("lazy erasure expects c1/c2 frames");
    }
  }
  out.kont.assign(frames.rbegin(), frames.rend());
  return out;
}

LockstepReport lockstep_lazy(const Program& p, std::size_t fuel) {
  LockstepReport rep;
  LkState rec = inject_lk(p);
  ConcretePolicy pol{PolicyKind::Timed};
  PtrState ptr = inject_lk_ptr(p, pol);

  for (std::size_t i = 0;; i++) {
    LazyEState a = erase_lazy(p, rec);
    LazyEState b = erase_lazy(p, ptr);
    if (!deep_equal(a, b)) {
      rep.agreed = false;
      rep.steps = i;
      rep.divergence = "step " + std::to_string(i) + ": lazy machines erase differently";
      return rep;
    }
    if (i == fuel) {
      rep.steps = i;
      rep.flag = RunFlag::FuelExhausted;
      return rep;
    }
    auto n0 = step_lk(p, rec);
    auto n1 = step_lk_ptr(p, ptr, pol);
    if (n0.has_value() != n1.has_value()) {
      rep.agreed = false;
      rep.steps = i;
      rep.divergence = "step " + std::to_string(i) + ": lazy machines disagree on termination";
      return rep;
    }
    if (!n0) {
      rep.steps = i;
      rep.flag = is_value_control(p, rec.control) && rec.kont.empty() ? RunFlag::Final
                                                                      : RunFlag::Stuck;
      return rep;
    }
    rec = *n0;
    ptr = *n1;
  }
}

std::string render_lk(const LkState& s, const Program& p) {
  std::string k = "mt";
  for (const auto& f : s.kont) {
    if (const auto* c1 = std::get_if<RC1>(&f))
      k = "c1(" + render(c1->target, p) + ", " + k + ")";
    else if (const auto* c2 = std::get_if<RC2>(&f))
      k = "c2(" + render(c2->arg, p) + ", " + k + ")";
  }
  return "<" + render(s.control, p) + " | " + render(s.env, p) + " | " + render(s.store, p) +
         " | " + k + ">";
}

}  // namespace aam
