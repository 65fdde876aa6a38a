#include "aam/concrete.hpp"

#include <algorithm>

#include "aam/gc.hpp"
#include "aam/stack_inspection.hpp"

namespace aam {

// ---------------------------------------------------------------------------
// CEK domain helpers

namespace {

const std::map<VarId, CekClo> kEmptySlots;

const std::map<VarId, CekClo>& slots_of(const CekEnvPtr& e) {
  return e ? e->slots : kEmptySlots;
}

CekEnvPtr cek_restrict(const CekEnvPtr& e, const std::vector<VarId>& keep) {
  auto out = std::make_shared<CekEnvRec>();
  for (const auto& [v, clo] : slots_of(e))
    if (std::binary_search(keep.begin(), keep.end(), v)) out->slots.emplace(v, clo);
  return out;
}

CekEnvPtr cek_extend(const CekEnvPtr& e, VarId v, CekClo clo) {
  auto out = std::make_shared<CekEnvRec>(CekEnvRec{slots_of(e)});
  out->slots[v] = std::move(clo);
  return out;
}

CekClo cek_close(const Program& p, const Val& v, const CekEnvPtr& env) {
  if (v.is_kont) return CekClo{v, nullptr};
  return CekClo{v, cek_restrict(env, p.free_vars(v.expr))};
}

}  // namespace

bool deep_equal(const CekEnvPtr& a, const CekEnvPtr& b) {
  const auto& sa = slots_of(a);
  const auto& sb = slots_of(b);
  if (sa.size() != sb.size()) return false;
  auto it = sb.begin();
  for (const auto& [v, clo] : sa) {
    if (it->first != v || !deep_equal(clo, it->second)) return false;
    ++it;
  }
  return true;
}

bool deep_equal(const CekClo& a, const CekClo& b) {
  return a.val == b.val && deep_equal(a.env, b.env);
}

bool deep_equal(const CekFrame& a, const CekFrame& b) {
  if (a.kind != b.kind) return false;
  if (a.kind == CekFrame::Kind::Ar)
    return a.arg == b.arg && deep_equal(a.arg_env, b.arg_env);
  return deep_equal(a.fn, b.fn);
}

bool deep_equal(const CekState& a, const CekState& b) {
  if (a.control != b.control || a.kont.size() != b.kont.size()) return false;
  if (!deep_equal(a.env, b.env)) return false;
  for (std::size_t i = 0; i < a.kont.size(); i++)
    if (!deep_equal(a.kont[i], b.kont[i])) return false;
  return true;
}

CekState inject_cek(const Program& p) {
  if (!p.closed_at(p.root())) throw Error("open term");
  return CekState{Control::from_expr(p.root()), nullptr, {}};
}

std::optional<CekState> step_cek(const Program& p, const CekState& s) {
  std::vector<CekState> matches;
  const ExprNode* n = s.control.is_kont ? nullptr : &p.node(s.control.expr);
  bool value = is_value_control(p, s.control);

  if (n && n->kind == ExprKind::Ref) {
    const auto& slots = slots_of(s.env);
    auto it = slots.find(n->var);
    if (it == slots.end()) throw Error("unbound variable: " + p.var_name(n->var));
    matches.push_back(CekState{it->second.val, it->second.env, s.kont});
  }
  if (n && n->kind == ExprKind::App) {
    CekState out = s;
    out.kont.push_back(CekFrame{CekFrame::Kind::Ar, n->children[1],
                                cek_restrict(s.env, p.free_vars(n->children[1])), {}});
    out.control = Control::from_expr(n->children[0]);
    out.env = cek_restrict(s.env, p.free_vars(n->children[0]));
    matches.push_back(std::move(out));
  }
  if (value && !s.kont.empty() && s.kont.back().kind == CekFrame::Kind::Ar) {
    CekFrame top = s.kont.back();
    CekState out = s;
    out.kont.pop_back();
    out.kont.push_back(CekFrame{CekFrame::Kind::Fn, 0, nullptr, cek_close(p, s.control, s.env)});
    out.control = Control::from_expr(top.arg);
    out.env = top.arg_env;
    matches.push_back(std::move(out));
  }
  if (value && !s.kont.empty() && s.kont.back().kind == CekFrame::Kind::Fn &&
      !s.kont.back().fn.val.is_kont && p.node(s.kont.back().fn.val.expr).kind == ExprKind::Lam) {
    const CekFrame& top = s.kont.back();
    const ExprNode& lam = p.node(top.fn.val.expr);
    Label body = lam.children[0];
    CekState out = s;
    out.kont.pop_back();
    out.env = cek_restrict(cek_extend(top.fn.env, lam.var, cek_close(p, s.control, s.env)),
                           p.free_vars(body));
    out.control = Control::from_expr(body);
    matches.push_back(std::move(out));
  }

  if (matches.size() > 1) throw Error("machine rules are not mutually exclusive");
  if (matches.empty()) return std::nullopt;
  return matches[0];
}

std::string render(const CekState& s, const Program& p) {
  std::function<std::string(const CekClo&)> rclo;
  std::function<std::string(const CekEnvPtr&)> renv = [&](const CekEnvPtr& e) {
    std::string out = "{";
    bool first = true;
    for (const auto& [v, clo] : slots_of(e)) {
      if (!first) out += ", ";
      first = false;
      out += p.var_name(v) + "->" + rclo(clo);
    }
    return out + "}";
  };
  rclo = [&](const CekClo& c) { return "(" + render(c.val, p) + ", " + renv(c.env) + ")"; };

  std::string out = "<" + render(s.control, p) + " | " + renv(s.env) + " | ";
  std::string k = "mt";
  for (const auto& f : s.kont) {
    if (f.kind == CekFrame::Kind::Ar)
      k = "ar(" + p.unparse(f.arg) + "@" + std::to_string(f.arg) + ", " + renv(f.arg_env) + ", " +
          k + ")";
    else
      k = "fn(" + rclo(f.fn) + ", " + k + ")";
  }
  return out + k + ">";
}

// ---------------------------------------------------------------------------
// CESK machine (bindings in the store, continuations still a stack)

CeskState inject_cesk(const Program& p) {
  if (!p.closed_at(p.root())) throw Error("open term");
  return CeskState{Control::from_expr(p.root()), {}, {}, {}};
}

std::optional<CeskState> step_cesk(const Program& p, const CeskState& s) {
  std::vector<CeskState> matches;
  const ExprNode* n = s.control.is_kont ? nullptr : &p.node(s.control.expr);
  bool value = is_value_control(p, s.control);

  if (n && n->kind == ExprKind::Ref) {
    const Storable& st = s.store.at(s.env.at(n->var));
    if (const auto* clo = std::get_if<CloS>(&st)) {
      CeskState out = s;
      out.control = clo->val;
      out.env = clo->env;
      matches.push_back(std::move(out));
    }
  }
  if (n && n->kind == ExprKind::App) {
    CeskState out = s;
    out.kont.push_back(RFrame{RAr{n->children[1], close_env(p, n->children[1], s.env), {}}});
    out.control = Control::from_expr(n->children[0]);
    out.env = close_env(p, n->children[0], s.env);
    matches.push_back(std::move(out));
  }
  if (value && !s.kont.empty() && std::holds_alternative<RAr>(s.kont.back())) {
    RAr top = std::get<RAr>(s.kont.back());
    CeskState out = s;
    out.kont.pop_back();
    out.kont.push_back(RFrame{RFn{s.control, close_env(p, s.control.expr, s.env), {}}});
    out.control = Control::from_expr(top.arg);
    out.env = top.env;
    matches.push_back(std::move(out));
  }
  if (value && !s.kont.empty() && std::holds_alternative<RFn>(s.kont.back()) &&
      !std::get<RFn>(s.kont.back()).fn.is_kont &&
      p.node(std::get<RFn>(s.kont.back()).fn.expr).kind == ExprKind::Lam) {
    const RFn& top = std::get<RFn>(s.kont.back());
    const ExprNode& lam = p.node(top.fn.expr);
    Label body = lam.children[0];
    Addr a = Addr::from_int(s.store.next_int_addr());
    if (s.store.contains(a)) throw Error("allocation returned a live address");
    CeskState out = s;
    out.kont.pop_back();
    out.store.put(a, CloS{make_closure(p, s.control, s.env)});
    out.env = close_env(p, body, top.env.extended(lam.var, a));
    out.control = Control::from_expr(body);
    matches.push_back(std::move(out));
  }

  if (matches.size() > 1) throw Error("machine rules are not mutually exclusive");
  if (matches.empty()) return std::nullopt;
  return matches[0];
}

std::string render(const CeskState& s, const Program& p) {
  std::string k = "mt";
  for (const auto& f : s.kont) {
    if (const auto* ar = std::get_if<RAr>(&f))
      k = "ar(" + p.unparse(ar->arg) + "@" + std::to_string(ar->arg) + ", " +
          render(ar->env, p) + ", " + k + ")";
    else if (const auto* fn = std::get_if<RFn>(&f))
      k = "fn(" + render(fn->fn, p) + ", " + render(fn->env, p) + ", " + k + ")";
    else
      k = "frame(" + k + ")";
  }
  return "<" + render(s.control, p) + " | " + render(s.env, p) + " | " + render(s.store, p) +
         " | " + k + ">";
}

// ---------------------------------------------------------------------------
// Pointer-refined stepper

namespace {

const Kont& kont_at(const Store& store, const Addr& a) {
  const Storable& st = store.at(a);
  const Kont* k = std::get_if<Kont>(&st);
  if (!k) throw Error("address does not hold a continuation");
  return *k;
}

}  // namespace

std::optional<PtrState> step_pointer(const Program& p, const PtrState& s, const StepParams& prm,
                                     const ConcretePolicy& pol) {
  const Features& F = prm.features;
  const Kont& k = kont_at(s.store, s.kont);

  auto tick = [&](const Kont* kc) { return concrete_tick(pol, p, s, kc); };
  auto alloc = [&](const Kont* kc, std::uint8_t salt = 0) {
    Addr a = concrete_alloc(pol, p, s, kc, salt);
    if (s.store.contains(a)) throw Error("allocation returned a live address");
    return a;
  };

  if (!s.control.is_kont) {
    const ExprNode& n = p.node(s.control.expr);
    switch (n.kind) {
      case ExprKind::Ref: {
        const Storable& st = s.store.at(s.env.at(n.var));
        const auto* clo = std::get_if<CloS>(&st);
        if (!clo) return std::nullopt;
        PtrState out = s;
        out.control = clo->val;
        out.env = clo->env;
        out.time = tick(&k);
        return out;
      }
      case ExprKind::App: {
        Time u = tick(&k);
        Addr b = alloc(&k);
        PtrState out = s;
        out.store.put(b, Kont{ArK{n.children[1], close_env(p, n.children[1], s.env), s.kont, {}}});
        out.control = Control::from_expr(n.children[0]);
        out.env = close_env(p, n.children[0], s.env);
        out.kont = b;
        out.time = u;
        return out;
      }
      case ExprKind::If: {
        if (!F.extended) return std::nullopt;
        Time u = tick(&k);
        Addr b = alloc(&k);
        // the frame env must close both branches
        Env both = close_env(p, n.children[1], s.env);
        for (VarId v : p.free_vars(n.children[2]))
          if (const Addr* a = s.env.find(v)) both = both.extended(v, *a);
        PtrState out = s;
        out.store.put(b, Kont{IfK{n.children[1], n.children[2], std::move(both), s.kont}});
        out.control = Control::from_expr(n.children[0]);
        out.env = close_env(p, n.children[0], s.env);
        out.kont = b;
        out.time = u;
        return out;
      }
      case ExprKind::SetBang: {
        if (!F.extended) return std::nullopt;
        Time u = tick(&k);
        Addr b = alloc(&k);
        PtrState out = s;
        out.store.put(b, Kont{SetK{s.env.at(n.var), s.kont}});
        out.control = Control::from_expr(n.children[0]);
        out.env = close_env(p, n.children[0], s.env);
        out.kont = b;
        out.time = u;
        return out;
      }
      case ExprKind::Throw: {
        if (!F.exceptions) return std::nullopt;
        const Kont& h = kont_at(s.store, s.handler);
        const auto* hn = std::get_if<HnK>(&h);
        if (!hn) return std::nullopt;  // uncaught throw
        if (hn->handler.is_kont || p.node(hn->handler.expr).kind != ExprKind::Lam)
          return std::nullopt;
        Time u = tick(&h);
        Addr b = alloc(&h);
        const ExprNode& lam = p.node(hn->handler.expr);
        Label body = lam.children[0];
        PtrState out = s;
        out.store.put(b, CloS{make_closure(p, Val::from_expr(n.children[0]), s.env)});
        out.env = close_env(p, body, hn->env.extended(lam.var, b));
        out.control = Control::from_expr(body);
        out.handler = hn->next;
        out.kont = hn->kont;
        out.time = u;
        return out;
      }
      case ExprKind::Catch: {
        if (!F.exceptions) return std::nullopt;
        Time u = tick(&k);
        Addr b = alloc(&k);
        PtrState out = s;
        out.store.put(b, Kont{HnK{Val::from_expr(n.children[1]),
                                  close_env(p, n.children[1], s.env), s.kont, s.handler}});
        out.control = Control::from_expr(n.children[0]);
        out.env = close_env(p, n.children[0], s.env);
        out.handler = b;
        out.kont = mt_addr();
        out.time = u;
        return out;
      }
      case ExprKind::Fail: {
        if (!F.marks) return std::nullopt;
        if (is_mt(k) && kont_marks(k).empty()) return std::nullopt;  // security terminal
        PtrState out = s;
        out.env = Env{};
        out.kont = failure_mt_addr();
        out.time = tick(&k);
        return out;
      }
      case ExprKind::Grant:
      case ExprKind::Frame: {
        if (!F.marks) return std::nullopt;
        PermSet ps = n.kind == ExprKind::Grant ? n.perms : perm_minus(prm.universe, n.perms);
        Cap cap = n.kind == ExprKind::Grant ? Cap::Grant : Cap::Deny;
        PtrState out = s;
        out.store.put(s.kont, Kont{kont_with_marks(k, ps, cap)});
        out.control = Control::from_expr(n.children[0]);
        out.env = close_env(p, n.children[0], s.env);
        out.time = tick(&k);
        return out;
      }
      case ExprKind::Test: {
        if (!F.marks) return std::nullopt;
        Label branch = ok_ptr(n.perms, s.store, s.kont) ? n.children[0] : n.children[1];
        PtrState out = s;
        out.control = Control::from_expr(branch);
        out.env = close_env(p, branch, s.env);
        out.time = tick(&k);
        return out;
      }
      case ExprKind::Lam:
      case ExprKind::False:
      case ExprKind::Callcc:
        break;  // value forms dispatch on the continuation below
    }
  }

  if (!is_value_control(p, s.control)) return std::nullopt;

  if (std::holds_alternative<MtK>(k)) {
    if (!F.exceptions) return std::nullopt;  // final
    const Kont& h = kont_at(s.store, s.handler);
    const auto* hn = std::get_if<HnK>(&h);
    if (!hn) return std::nullopt;  // final: no enclosing handler
    PtrState out = s;
    out.handler = hn->next;
    out.kont = hn->kont;
    out.time = tick(&k);
    return out;
  }
  if (const auto* ar = std::get_if<ArK>(&k)) {
    Time u = tick(&k);
    Addr b = alloc(&k);
    PtrState out = s;
    out.store.put(b, Kont{FnK{s.control,
                              s.control.is_kont ? Env{} : close_env(p, s.control.expr, s.env),
                              ar->next,
                              {}}});
    out.control = Control::from_expr(ar->arg);
    out.env = ar->env;
    out.kont = b;
    out.time = u;
    return out;
  }
  if (const auto* fn = std::get_if<FnK>(&k)) {
    if (!fn->fn.is_kont && p.node(fn->fn.expr).kind == ExprKind::Lam) {
      Time u = tick(&k);
      Addr b = alloc(&k);
      const ExprNode& lam = p.node(fn->fn.expr);
      Label body = lam.children[0];
      PtrState out = s;
      out.store.put(b, CloS{make_closure(p, s.control, s.env)});
      out.env = close_env(p, body, fn->fn_env.extended(lam.var, b));
      out.control = Control::from_expr(body);
      out.kont = fn->next;
      out.time = u;
      return out;
    }
    if (!fn->fn.is_kont && p.node(fn->fn.expr).kind == ExprKind::Callcc && F.extended) {
      if (!s.control.is_kont && p.node(s.control.expr).kind == ExprKind::Lam) {
        // call with current continuation: bind the operand's parameter to the
        // continuation pointer and run its body at that continuation
        Time u = tick(&k);
        Addr b = alloc(&k);
        const ExprNode& lam = p.node(s.control.expr);
        Label body = lam.children[0];
        PtrState out = s;
        out.store.put(b, CloS{Val::from_kont(fn->next), Env{}});
        out.env = close_env(p, body, close_env(p, s.control.expr, s.env).extended(lam.var, b));
        out.control = Control::from_expr(body);
        out.kont = fn->next;
        out.time = u;
        return out;
      }
      if (s.control.is_kont) {
        // applying callcc to a reified continuation: install it and hand it
        // the continuation of the call
        PtrState out = s;
        out.control = Val::from_kont(fn->next);
        out.env = Env{};
        out.kont = s.control.kont;
        out.time = tick(&k);
        return out;
      }
      return std::nullopt;
    }
    if (fn->fn.is_kont && F.extended) {
      // applying a reified continuation is abortive
      PtrState out = s;
      out.kont = fn->fn.kont;
      out.time = tick(&k);
      return out;
    }
    return std::nullopt;  // stuck: applying a non-procedure
  }
  if (const auto* iff = std::get_if<IfK>(&k)) {
    if (!F.extended) return std::nullopt;
    bool is_false = !s.control.is_kont && p.node(s.control.expr).kind == ExprKind::False;
    Label branch = is_false ? iff->else_e : iff->then_e;
    PtrState out = s;
    out.control = Control::from_expr(branch);
    out.env = close_env(p, branch, iff->env);
    out.kont = iff->next;
    out.time = tick(&k);
    return out;
  }
  if (const auto* set = std::get_if<SetK>(&k)) {
    if (!F.extended) return std::nullopt;
    const Storable& old = s.store.at(set->target);
    const auto* prev = std::get_if<CloS>(&old);
    if (!prev) return std::nullopt;
    PtrState out = s;
    CloS previous = *prev;
    out.store.put(set->target, CloS{make_closure(p, s.control, s.env)});
    out.control = previous.val;
    out.env = previous.env;
    out.kont = set->next;
    out.time = tick(&k);
    return out;
  }
  return std::nullopt;  // lazy frames are handled by the lazy stepper
}

TerminalKind classify_terminal(const Program& p, const PtrState& s, const StepParams& prm) {
  const Kont& k = kont_at(s.store, s.kont);
  if (is_value_control(p, s.control) && is_mt(k)) {
    bool handled = false;
    if (prm.features.exceptions)
      handled = std::holds_alternative<HnK>(kont_at(s.store, s.handler));
    if (!handled) return TerminalKind::Value;
  }
  if (!s.control.is_kont) {
    ExprKind kind = p.node(s.control.expr).kind;
    if (kind == ExprKind::Throw && prm.features.exceptions &&
        !std::holds_alternative<HnK>(kont_at(s.store, s.handler)))
      return TerminalKind::UncaughtThrow;
    if (kind == ExprKind::Fail && prm.features.marks && is_mt(k) && kont_marks(k).empty())
      return TerminalKind::SecurityFailure;
  }
  if (!step_pointer(p, s, prm, ConcretePolicy{PolicyKind::Timed})) return TerminalKind::Stuck;
  return TerminalKind::NotTerminal;
}

std::string run_flag_name(RunFlag f) {
  switch (f) {
    case RunFlag::Final: return "final";
    case RunFlag::Stuck: return "stuck";
    case RunFlag::UncaughtThrow: return "uncaught-throw";
    case RunFlag::SecurityFailure: return "security-failure";
    case RunFlag::FuelExhausted: return "fuel-exhausted";
  }
  throw Error("unreachable run flag");
}

namespace {

RunFlag flag_of_terminal(TerminalKind t) {
  switch (t) {
    case TerminalKind::Value: return RunFlag::Final;
    case TerminalKind::UncaughtThrow: return RunFlag::UncaughtThrow;
    case TerminalKind::SecurityFailure: return RunFlag::SecurityFailure;
    default: return RunFlag::Stuck;
  }
}

}  // namespace

PtrRun run_pointer(const Program& p, MachineTag tag, const ConcretePolicy& pol, std::size_t fuel,
                   bool gc, PermSet universe) {
  if (universe.empty()) universe = p.mentioned_permissions();
  StepParams prm{features_for(tag), universe};
  PtrRun run;
  PtrState cur = inject_ptr(p, tag, pol);
  run.trace.push_back(cur);
  for (std::size_t i = 0; i < fuel; i++) {
    auto next = step_pointer(p, cur, prm, pol);
    if (!next) {
      run.flag = flag_of_terminal(classify_terminal(p, cur, prm));
      return run;
    }
    cur = gc ? collect(p, *next, prm.features) : *next;
    run.trace.push_back(cur);
  }
  run.flag = RunFlag::FuelExhausted;
  return run;
}

CekRun run_cek(const Program& p, std::size_t fuel) {
  CekRun run;
  CekState cur = inject_cek(p);
  run.trace.push_back(cur);
  for (std::size_t i = 0; i < fuel; i++) {
    auto next = step_cek(p, cur);
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

CeskRun run_cesk(const Program& p, std::size_t fuel) {
  CeskRun run;
  CeskState cur = inject_cesk(p);
  run.trace.push_back(cur);
  for (std::size_t i = 0; i < fuel; i++) {
    auto next = step_cesk(p, cur);
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
// Erasure into the CEK domain

namespace {

CekEnvPtr erase_env(const Env& e, const Store& store) {
  auto out = std::make_shared<CekEnvRec>();
  for (const auto& [v, a] : e.slots()) {
    const Storable& st = store.at(a);
    const auto* clo = std::get_if<CloS>(&st);
    if (!clo) throw Error("erasure expects value bindings only");
    out->slots.emplace(v, CekClo{clo->val, erase_env(clo->env, store)});
  }
  return out;
}

}  // namespace

CekState erase_to_cek(const Program&, const CekState& s) { return s; }

CekState erase_to_cek(const Program&, const CeskState& s) {
  CekState out;
  out.control = s.control;
  out.env = erase_env(s.env, s.store);
  for (const auto& f : s.kont) {
    if (const auto* ar = std::get_if<RAr>(&f))
      out.kont.push_back(CekFrame{CekFrame::Kind::Ar, ar->arg, erase_env(ar->env, s.store), {}});
    else if (const auto* fn = std::get_if<RFn>(&f))
      out.kont.push_back(
          CekFrame{CekFrame::Kind::Fn, 0, nullptr, CekClo{fn->fn, erase_env(fn->env, s.store)}});
    else
      throw Error("erasure covers only ar/fn continuations");
  }
  return out;
}

CekState erase_to_cek(const Program&, const PtrState& s) {
  CekState out;
  out.control = s.control;
  out.env = erase_env(s.env, s.store);
  std::vector<CekFrame> frames;  // innermost first while chasing
  Addr a = s.kont;
  for (;;) {
    const Storable& st = s.store.at(a);
    const auto* k = std::get_if<Kont>(&st);
    if (!k) throw Error("continuation chain interrupted");
    if (std::holds_alternative<MtK>(*k)) break;
    if (const auto* ar = std::get_if<ArK>(k)) {
      frames.push_back(CekFrame{CekFrame::Kind::Ar, ar->arg, erase_env(ar->env, s.store), {}});
      a = ar->next;
    } else if (const auto* fn = std::get_if<FnK>(k)) {
      frames.push_back(
          CekFrame{CekFrame::Kind::Fn, 0, nullptr, CekClo{fn->fn, erase_env(fn->fn_env, s.store)}});
      a = fn->next;
    } else {
      throw Error("erasure covers only ar/fn continuations");
    }
  }
  out.kont.assign(frames.rbegin(), frames.rend());
  return out;
}

// ---------------------------------------------------------------------------
// Lockstep agreement

LockstepReport lockstep_check(const Program& p, std::size_t fuel, PolicyKind timed_policy) {
  LockstepReport rep;
  CekState cek = inject_cek(p);
  CeskState cesk = inject_cesk(p);
  PtrState star = inject_ptr(p, MachineTag::CeskStar, ConcretePolicy{PolicyKind::Untimed});
  PtrState timed = inject_ptr(p, MachineTag::CeskStarT, ConcretePolicy{timed_policy});
  StepParams pure{};

  for (std::size_t i = 0;; i++) {
    CekState ref = erase_to_cek(p, cek);
    const char* names[3] = {"cesk", "cesk-star", "cesk-star-t"};
    CekState others[3] = {erase_to_cek(p, cesk), erase_to_cek(p, star), erase_to_cek(p, timed)};
    for (int m = 0; m < 3; m++) {
      if (!deep_equal(ref, others[m])) {
        rep.agreed = false;
        rep.steps = i;
        rep.divergence = std::string("step ") + std::to_string(i) + ": " + names[m] +
                         " erases to " + render(others[m], p) + " but cek is " + render(ref, p);
        return rep;
      }
    }
    if (i == fuel) {
      rep.steps = i;
      rep.flag = RunFlag::FuelExhausted;
      return rep;
    }
    auto n0 = step_cek(p, cek);
    auto n1 = step_cesk(p, cesk);
    auto n2 = step_pointer(p, star, pure, ConcretePolicy{PolicyKind::Untimed});
    auto n3 = step_pointer(p, timed, pure, ConcretePolicy{timed_policy});
    bool halts[4] = {!n0, !n1, !n2, !n3};
    if (halts[0] != halts[1] || halts[0] != halts[2] || halts[0] != halts[3]) {
      rep.agreed = false;
      rep.steps = i;
      rep.divergence = "step " + std::to_string(i) + ": machines disagree on termination";
      return rep;
    }
    if (!n0) {
      rep.steps = i;
      rep.flag = is_value_control(p, cek.control) && cek.kont.empty() ? RunFlag::Final
                                                                      : RunFlag::Stuck;
      return rep;
    }
    cek = *n0;
    cesk = *n1;
    star = *n2;
    timed = *n3;
  }
}

// ---------------------------------------------------------------------------
// Canonical address renaming

namespace {

struct Renamer {
  std::map<Addr, Addr> map;
  std::vector<Addr> queue;

  void visit(const Addr& a) {
    if (map.count(a)) return;
    map.emplace(a, Addr::from_int(static_cast<std::uint32_t>(map.size())));
    queue.push_back(a);
  }

  void visit_env(const Env& e) {
    for (const auto& [v, a] : e.slots()) visit(a);
  }

  void visit_val(const Val& v) {
    if (v.is_kont) visit(v.kont);
  }

  void visit_kont(const Kont& k) {
    if (const auto* ar = std::get_if<ArK>(&k)) {
      visit_env(ar->env);
      visit(ar->next);
    } else if (const auto* fn = std::get_if<FnK>(&k)) {
      visit_val(fn->fn);
      visit_env(fn->fn_env);
      visit(fn->next);
    } else if (const auto* f = std::get_if<IfK>(&k)) {
      visit_env(f->env);
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
      visit_env(c2e->env);
      visit(c2e->next);
    } else if (const auto* hn = std::get_if<HnK>(&k)) {
      visit_val(hn->handler);
      visit_env(hn->env);
      visit(hn->kont);
      visit(hn->next);
    }
  }

  void visit_storable(const Storable& s) {
    if (const auto* clo = std::get_if<CloS>(&s)) {
      visit_val(clo->val);
      visit_env(clo->env);
    } else if (const auto* th = std::get_if<ThunkS>(&s)) {
      visit_env(th->env);
    } else if (const auto* co = std::get_if<CompS>(&s)) {
      visit_val(co->val);
      visit_env(co->env);
    } else {
      visit_kont(std::get<Kont>(s));
    }
  }

  Addr re(const Addr& a) const { return map.at(a); }
  Env re(const Env& e) const {
    Env out;
    for (const auto& [v, a] : e.slots()) out = out.extended(v, re(a));
    return out;
  }
  Val re(const Val& v) const { return v.is_kont ? Val::from_kont(re(v.kont)) : v; }
  Kont re(const Kont& k) const {
    Kont out = k;
    if (auto* ar = std::get_if<ArK>(&out)) {
      ar->env = re(ar->env);
      ar->next = re(ar->next);
    } else if (auto* fn = std::get_if<FnK>(&out)) {
      fn->fn = re(fn->fn);
      fn->fn_env = re(fn->fn_env);
      fn->next = re(fn->next);
    } else if (auto* f = std::get_if<IfK>(&out)) {
      f->env = re(f->env);
      f->next = re(f->next);
    } else if (auto* st = std::get_if<SetK>(&out)) {
      st->target = re(st->target);
      st->next = re(st->next);
    } else if (auto* c1 = std::get_if<C1K>(&out)) {
      c1->target = re(c1->target);
      c1->next = re(c1->next);
    } else if (auto* c2 = std::get_if<C2K>(&out)) {
      c2->arg = re(c2->arg);
      c2->next = re(c2->next);
    } else if (auto* c2e = std::get_if<C2eK>(&out)) {
      c2e->env = re(c2e->env);
      c2e->next = re(c2e->next);
    } else if (auto* hn = std::get_if<HnK>(&out)) {
      hn->handler = re(hn->handler);
      hn->env = re(hn->env);
      hn->kont = re(hn->kont);
      hn->next = re(hn->next);
    }
    return out;
  }
  Storable re(const Storable& s) const {
    if (const auto* clo = std::get_if<CloS>(&s)) return CloS{re(clo->val), re(clo->env)};
    if (const auto* th = std::get_if<ThunkS>(&s)) return ThunkS{th->expr, re(th->env)};
    if (const auto* co = std::get_if<CompS>(&s)) return CompS{re(co->val), re(co->env)};
    return re(std::get<Kont>(s));
  }
};

}  // namespace

PtrState canonicalize(const Program&, const PtrState& s, bool drop_time) {
  Renamer r;
  r.visit_val(s.control);
  r.visit_env(s.env);
  r.visit(s.handler);
  r.visit(s.kont);
  std::size_t scanned = 0;
  auto drain = [&] {
    for (; scanned < r.queue.size(); scanned++) {
      Addr a = r.queue[scanned];
      if (s.store.contains(a)) r.visit_storable(s.store.at(a));
    }
  };
  drain();
  for (const auto& [a, st] : s.store.entries()) r.visit(a);  // unreachable leftovers
  drain();

  PtrState out;
  out.control = r.re(s.control);
  out.env = r.re(s.env);
  out.handler = r.re(s.handler);
  out.kont = r.re(s.kont);
  out.time = drop_time ? Time::from_int(0) : s.time;
  for (const auto& [a, st] : s.store.entries()) out.store.put(r.re(a), r.re(st));
  return out;
}

}  // namespace aam
