#include "aam/control.hpp"

namespace aam {

CeshkState inject_ceshk(const Program& p) {
  if (!p.closed_at(p.root())) throw Error("open term");
  return CeshkState{Control::from_expr(p.root()), {}, {}, {}, {}};
}

std::optional<CeshkState> step_ceshk(const Program& p, const CeshkState& s) {
  const ExprNode* n = s.control.is_kont ? nullptr : &p.node(s.control.expr);
  bool value = is_value_control(p, s.control);

  auto fresh = [&] { return Addr::from_int(s.store.next_int_addr()); };

  if (n) {
    switch (n->kind) {
      case ExprKind::Ref: {
        const Storable& st = s.store.at(s.env.at(n->var));
        const auto* clo = std::get_if<CloS>(&st);
        if (!clo) return std::nullopt;
        CeshkState out = s;
        out.control = clo->val;
        out.env = clo->env;
        return out;
      }
      case ExprKind::App: {
        CeshkState out = s;
        out.kont.push_back(RFrame{RAr{n->children[1], close_env(p, n->children[1], s.env), {}}});
        out.control = Control::from_expr(n->children[0]);
        out.env = close_env(p, n->children[0], s.env);
        return out;
      }
      case ExprKind::If: {
        Env both = close_env(p, n->children[1], s.env);
        for (VarId v : p.free_vars(n->children[2]))
          if (const Addr* a = s.env.find(v)) both = both.extended(v, *a);
        CeshkState out = s;
        out.kont.push_back(RFrame{RIf{n->children[1], n->children[2], std::move(both)}});
        out.control = Control::from_expr(n->children[0]);
        out.env = close_env(p, n->children[0], s.env);
        return out;
      }
      case ExprKind::SetBang: {
        CeshkState out = s;
        out.kont.push_back(RFrame{RSet{s.env.at(n->var)}});
        out.control = Control::from_expr(n->children[0]);
        out.env = close_env(p, n->children[0], s.env);
        return out;
      }
      case ExprKind::Throw: {
        if (s.handlers.empty()) return std::nullopt;  // uncaught
        CeshkHandler top = s.handlers.back();
        if (top.handler.is_kont || p.node(top.handler.expr).kind != ExprKind::Lam)
          return std::nullopt;
        const ExprNode& lam = p.node(top.handler.expr);
        Label body = lam.children[0];
        Addr a = fresh();
        CeshkState out = s;
        out.store.put(a, CloS{make_closure(p, Val::from_expr(n->children[0]), s.env)});
        out.env = close_env(p, body, top.env.extended(lam.var, a));
        out.control = Control::from_expr(body);
        out.kont = top.saved;
        out.handlers.pop_back();
        return out;
      }
      case ExprKind::Catch: {
        CeshkState out = s;
        out.handlers.push_back(CeshkHandler{Val::from_expr(n->children[1]),
                                            close_env(p, n->children[1], s.env), s.kont});
        out.kont.clear();
        out.control = Control::from_expr(n->children[0]);
        out.env = close_env(p, n->children[0], s.env);
        return out;
      }
      default:
        break;
    }
  }

  if (!value) return std::nullopt;

  if (s.kont.empty()) {
    if (s.handlers.empty()) return std::nullopt;  // final
    // handler pop: the protected expression finished with a value
    CeshkHandler top = s.handlers.back();
    CeshkState out = s;
    out.handlers.pop_back();
    out.kont = top.saved;
    return out;
  }
  if (const auto* ar = std::get_if<RAr>(&s.kont.back())) {
    RAr top = *ar;
    CeshkState out = s;
    out.kont.pop_back();
    out.kont.push_back(RFrame{RFn{s.control,
                                  s.control.is_kont ? Env{} : close_env(p, s.control.expr, s.env),
                                  {}}});
    out.control = Control::from_expr(top.arg);
    out.env = top.env;
    return out;
  }
  if (const auto* fn = std::get_if<RFn>(&s.kont.back())) {
    if (fn->fn.is_kont || p.node(fn->fn.expr).kind != ExprKind::Lam)
      return std::nullopt;  // reified continuations need the store-allocated machine
    const ExprNode& lam = p.node(fn->fn.expr);
    Label body = lam.children[0];
    Addr a = fresh();
    Env fenv = fn->env;
    CeshkState out = s;
    out.kont.pop_back();
    out.store.put(a, CloS{make_closure(p, s.control, s.env)});
    out.env = close_env(p, body, fenv.extended(lam.var, a));
    out.control = Control::from_expr(body);
    return out;
  }
  if (const auto* iff = std::get_if<RIf>(&s.kont.back())) {
    bool is_false = !s.control.is_kont && p.node(s.control.expr).kind == ExprKind::False;
    Label branch = is_false ? iff->else_e : iff->then_e;
    Env fenv = iff->env;
    CeshkState out = s;
    out.kont.pop_back();
    out.control = Control::from_expr(branch);
    out.env = close_env(p, branch, fenv);
    return out;
  }
  if (const auto* set = std::get_if<RSet>(&s.kont.back())) {
    const Storable& old = s.store.at(set->target);
    const auto* prev = std::get_if<CloS>(&old);
    if (!prev) return std::nullopt;
    CloS previous = *prev;
    Addr target = set->target;
    CeshkState out = s;
    out.kont.pop_back();
    out.store.put(target, CloS{make_closure(p, s.control, s.env)});
    out.control = previous.val;
    out.env = previous.env;
    return out;
  }
  return std::nullopt;
}

CeshkRun run_ceshk(const Program& p, std::size_t fuel) {
  CeshkRun run;
  CeshkState cur = inject_ceshk(p);
  run.trace.push_back(cur);
  for (std::size_t i = 0; i < fuel; i++) {
    auto next = step_ceshk(p, cur);
    if (!next) {
      if (is_value_control(p, cur.control) && cur.kont.empty() && cur.handlers.empty())
        run.flag = RunFlag::Final;
      else if (!cur.control.is_kont && p.node(cur.control.expr).kind == ExprKind::Throw &&
               cur.handlers.empty())
        run.flag = RunFlag::UncaughtThrow;
      else
        run.flag = RunFlag::Stuck;
      return run;
    }
    cur = *next;
    run.trace.push_back(cur);
  }
  run.flag = RunFlag::FuelExhausted;
  return run;
}

std::string render(const CeshkState& s, const Program& p) {
  auto kont_text = [&](const std::vector<RFrame>& frames) {
    std::string k = "mt";
    for (const auto& f : frames) {
      if (const auto* ar = std::get_if<RAr>(&f))
        k = "ar(" + p.unparse(ar->arg) + "@" + std::to_string(ar->arg) + ", " +
            render(ar->env, p) + ", " + k + ")";
      else if (const auto* fn = std::get_if<RFn>(&f))
        k = "fn(" + render(fn->fn, p) + ", " + render(fn->env, p) + ", " + k + ")";
      else if (const auto* iff = std::get_if<RIf>(&f))
        k = "if(" + p.unparse(iff->then_e) + ", " + p.unparse(iff->else_e) + ", " + k + ")";
      else if (const auto* set = std::get_if<RSet>(&f))
        k = "set(" + render(set->target, p) + ", " + k + ")";
    }
    return k;
  };
  std::string h = "mt";
  for (const auto& hn : s.handlers)
    h = "hn(" + render(hn.handler, p) + ", " + render(hn.env, p) + ", " + kont_text(hn.saved) +
        ", " + h + ")";
  return "<" + render(s.control, p) + " | " + render(s.env, p) + " | " + render(s.store, p) +
         " | " + h + " | " + kont_text(s.kont) + ">";
}

// ---------------------------------------------------------------------------
// Pointer-refined forms by family name

std::optional<PtrState> step_extended_star(const Program& p, const PtrState& s,
                                           const ConcretePolicy& pol) {
  return step_pointer(p, s, StepParams{features_for(MachineTag::Extended), {}}, pol);
}

std::optional<PtrState> step_ceshk_star(const Program& p, const PtrState& s,
                                        const ConcretePolicy& pol) {
  return step_pointer(p, s, StepParams{features_for(MachineTag::Ceshk), {}}, pol);
}

std::vector<AbsState> abstract_step_extended(const Program& p, const AbsState& s,
                                             const KCfaParams& kcfa, FlowFacts* facts) {
  return abstract_step(p, s, StepParams{features_for(MachineTag::Extended), {}}, kcfa, facts);
}

std::vector<AbsState> abstract_step_ceshk(const Program& p, const AbsState& s,
                                          const KCfaParams& kcfa, FlowFacts* facts) {
  return abstract_step(p, s, StepParams{features_for(MachineTag::Ceshk), {}}, kcfa, facts);
}

std::vector<AbsState> abstract_step_cm(const Program& p, const AbsState& s,
                                       const PermSet& universe, const KCfaParams& kcfa,
                                       FlowFacts* facts) {
  return abstract_step(p, s, StepParams{features_for(MachineTag::Cm), universe}, kcfa, facts);
}

}  // namespace aam
