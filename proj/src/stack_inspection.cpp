#include "aam/stack_inspection.hpp"

#include <algorithm>
#include <map>

namespace aam {

// ---------------------------------------------------------------------------
// OK predicates.
//
// The traversal walks outward from the innermost frame. A frame whose marks
// deny any requested permission refutes the check; granted permissions are
// discharged before recursing; an empty request succeeds immediately.

namespace {

const Marks& rframe_marks(const RFrame& f) {
  static const Marks kEmpty;
  if (const auto* ar = std::get_if<RAr>(&f)) return ar->marks;
  if (const auto* fn = std::get_if<RFn>(&f)) return fn->marks;
  return kEmpty;
}

}  // namespace

bool ok_rec(const Program&, const PermSet& r, const std::vector<RFrame>& frames,
            const Marks& mt_marks) {
  PermSet cur = r;
  for (auto it = frames.rbegin(); it != frames.rend(); ++it) {
    if (cur.empty()) return true;
    const Marks& m = rframe_marks(*it);
    if (!perm_disjoint(cur, marks_with(m, Cap::Deny))) return false;
    cur = perm_minus(cur, marks_with(m, Cap::Grant));
  }
  if (cur.empty()) return true;
  return perm_disjoint(cur, marks_with(mt_marks, Cap::Deny));
}

namespace {

std::optional<Addr> kont_next(const Kont& k) {
  if (const auto* ar = std::get_if<ArK>(&k)) return ar->next;
  if (const auto* fn = std::get_if<FnK>(&k)) return fn->next;
  if (const auto* f = std::get_if<IfK>(&k)) return f->next;
  if (const auto* st = std::get_if<SetK>(&k)) return st->next;
  if (const auto* c1 = std::get_if<C1K>(&k)) return c1->next;
  if (const auto* c2 = std::get_if<C2K>(&k)) return c2->next;
  if (const auto* c2e = std::get_if<C2eK>(&k)) return c2e->next;
  if (const auto* hn = std::get_if<HnK>(&k)) return hn->kont;
  return std::nullopt;  // mt
}

}  // namespace

bool ok_ptr(const PermSet& r, const Store& store, const Addr& a) {
  PermSet cur = r;
  Addr at = a;
  for (;;) {
    if (cur.empty()) return true;
    const Storable& st = store.at(at);
    const Kont* k = std::get_if<Kont>(&st);
    if (!k) throw Error("permission walk hit a non-continuation entry");
    const Marks& m = kont_marks(*k);
    if (!perm_disjoint(cur, marks_with(m, Cap::Deny))) return false;
    if (is_mt(*k)) return true;
    cur = perm_minus(cur, marks_with(m, Cap::Grant));
    at = *kont_next(*k);
  }
}

// ---------------------------------------------------------------------------
// Existential path predicate over an abstract store. The node space is
// (remaining permissions, address); both verdicts are the least fixed point
// of the per-frame propagation, so cycles in the store cannot recurse
// forever and a node's results are shared between queries from every entry
// point in the same walk.

OkPaths ok_star_paths(const PermSet& r, const AbsStore& store, const Addr& a) {
  using Node = std::pair<PermSet, Addr>;
  std::map<Node, OkPaths> table;

  // Discover the node set reachable from the query.
  std::vector<Node> queue{{r, a}};
  table[{r, a}];
  for (std::size_t i = 0; i < queue.size(); i++) {
    auto [cur, at] = queue[i];
    if (cur.empty()) continue;
    for (const Storable& st : store.at(at)) {
      const Kont* k = std::get_if<Kont>(&st);
      if (!k || is_mt(*k)) continue;
      const Marks& m = kont_marks(*k);
      if (!perm_disjoint(cur, marks_with(m, Cap::Deny))) continue;
      Node next{perm_minus(cur, marks_with(m, Cap::Grant)), *kont_next(*k)};
      if (table.emplace(next, OkPaths{}).second) queue.push_back(next);
    }
  }

  // Propagate to the least fixed point.
  bool changed = true;
  while (changed) {
    changed = false;
    for (auto& [node, paths] : table) {
      const auto& [cur, at] = node;
      OkPaths next = paths;
      if (cur.empty()) {
        next.can_ok = true;
      } else {
        for (const Storable& st : store.at(at)) {
          const Kont* k = std::get_if<Kont>(&st);
          if (!k) continue;
          const Marks& m = kont_marks(*k);
          bool denied = !perm_disjoint(cur, marks_with(m, Cap::Deny));
          if (denied) {
            next.can_fail = true;
            continue;
          }
          if (is_mt(*k)) {
            next.can_ok = true;
            continue;
          }
          Node target{perm_minus(cur, marks_with(m, Cap::Grant)), *kont_next(*k)};
          auto it = table.find(target);
          if (it != table.end()) {
            next.can_ok |= it->second.can_ok;
            next.can_fail |= it->second.can_fail;
          }
        }
      }
      if (next.can_ok != paths.can_ok || next.can_fail != paths.can_fail) {
        paths = next;
        changed = true;
      }
    }
  }
  return table.at({r, a});
}

bool ok_star(const PermSet& r, const AbsStore& store, const Addr& a) {
  return ok_star_paths(r, store, a).can_ok;
}

// ---------------------------------------------------------------------------
// The concrete continuation-marks machine.

CmState inject_cm(const Program& p) {
  if (!p.closed_at(p.root())) throw Error("open term");
  return CmState{Control::from_expr(p.root()), {}, {}, {}, {}};
}

std::optional<CmState> step_cm(const Program& p, const CmState& s, const PermSet& universe) {
  const ExprNode* n = s.control.is_kont ? nullptr : &p.node(s.control.expr);
  bool value = is_value_control(p, s.control);

  auto update_marks = [&](CmState& out, const PermSet& perms, Cap cap) {
    if (out.kont.empty()) {
      out.mt_marks = marks_updated(out.mt_marks, perms, cap);
      return;
    }
    RFrame& top = out.kont.back();
    if (auto* ar = std::get_if<RAr>(&top))
      ar->marks = marks_updated(ar->marks, perms, cap);
    else if (auto* fn = std::get_if<RFn>(&top))
      fn->marks = marks_updated(fn->marks, perms, cap);
    else
      throw Error("mark update on an unmarked frame");
  };

  if (n) {
    switch (n->kind) {
      case ExprKind::Ref: {
        const Storable& st = s.store.at(s.env.at(n->var));
        const auto* clo = std::get_if<CloS>(&st);
        if (!clo) return std::nullopt;
        CmState out = s;
        out.control = clo->val;
        out.env = clo->env;
        return out;
      }
      case ExprKind::App: {
        CmState out = s;
        out.kont.push_back(RFrame{RAr{n->children[1], close_env(p, n->children[1], s.env), {}}});
        out.control = Control::from_expr(n->children[0]);
        out.env = close_env(p, n->children[0], s.env);
        return out;
      }
      case ExprKind::Fail: {
        if (s.kont.empty() && s.mt_marks.empty()) return std::nullopt;  // security terminal
        CmState out = s;
        out.env = Env{};
        out.kont.clear();
        out.mt_marks.clear();
        return out;
      }
      case ExprKind::Grant:
      case ExprKind::Frame: {
        PermSet ps = n->kind == ExprKind::Grant ? n->perms : perm_minus(universe, n->perms);
        Cap cap = n->kind == ExprKind::Grant ? Cap::Grant : Cap::Deny;
        CmState out = s;
        update_marks(out, ps, cap);
        out.control = Control::from_expr(n->children[0]);
        out.env = close_env(p, n->children[0], s.env);
        return out;
      }
      case ExprKind::Test: {
        Label branch =
            ok_rec(p, n->perms, s.kont, s.mt_marks) ? n->children[0] : n->children[1];
        CmState out = s;
        out.control = Control::from_expr(branch);
        out.env = close_env(p, branch, s.env);
        return out;
      }
      default:
        break;
    }
  }

  if (!value || s.kont.empty()) return std::nullopt;
  if (const auto* ar = std::get_if<RAr>(&s.kont.back())) {
    RAr top = *ar;
    CmState out = s;
    out.kont.pop_back();
    out.kont.push_back(RFrame{RFn{s.control, close_env(p, s.control.expr, s.env), {}}});
    out.control = Control::from_expr(top.arg);
    out.env = top.env;
    return out;
  }
  if (const auto* fn = std::get_if<RFn>(&s.kont.back())) {
    if (fn->fn.is_kont || p.node(fn->fn.expr).kind != ExprKind::Lam) return std::nullopt;
    const ExprNode& lam = p.node(fn->fn.expr);
    Label body = lam.children[0];
    Addr a = Addr::from_int(s.store.next_int_addr());
    CmState out = s;
    Env fenv = fn->env;
    out.kont.pop_back();
    out.store.put(a, CloS{make_closure(p, s.control, s.env)});
    out.env = close_env(p, body, fenv.extended(lam.var, a));
    out.control = Control::from_expr(body);
    return out;
  }
  return std::nullopt;
}

CmRun run_cm(const Program& p, const PermSet& universe, std::size_t fuel) {
  CmRun run;
  CmState cur = inject_cm(p);
  run.trace.push_back(cur);
  for (std::size_t i = 0; i < fuel; i++) {
    auto next = step_cm(p, cur, universe);
    if (!next) {
      if (is_value_control(p, cur.control) && cur.kont.empty())
        run.flag = RunFlag::Final;
      else if (!cur.control.is_kont && p.node(cur.control.expr).kind == ExprKind::Fail)
        run.flag = RunFlag::SecurityFailure;
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

std::string render(const CmState& s, const Program& p) {
  std::string k = "mt";
  {
    std::string marks;
    for (const auto& [perm, cap] : s.mt_marks)
      marks += (marks.empty() ? "" : ",") + perm + (cap == Cap::Grant ? "=grant" : "=deny");
    if (!marks.empty()) k = "mt^{" + marks + "}";
  }
  for (const auto& f : s.kont) {
    auto marks_text = [](const Marks& m) {
      std::string t;
      for (const auto& [perm, cap] : m)
        t += (t.empty() ? "" : ",") + perm + (cap == Cap::Grant ? "=grant" : "=deny");
      return t.empty() ? std::string{} : "^{" + t + "}";
    };
    if (const auto* ar = std::get_if<RAr>(&f))
      k = "ar" + marks_text(ar->marks) + "(" + p.unparse(ar->arg) + "@" + std::to_string(ar->arg) +
          ", " + render(ar->env, p) + ", " + k + ")";
    else if (const auto* fn = std::get_if<RFn>(&f))
      k = "fn" + marks_text(fn->marks) + "(" + render(fn->fn, p) + ", " + render(fn->env, p) +
          ", " + k + ")";
  }
  return "<" + render(s.control, p) + " | " + render(s.env, p) + " | " + render(s.store, p) +
         " | " + k + ">";
}

}  // namespace aam
