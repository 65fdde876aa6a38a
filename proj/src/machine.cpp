#include "aam/machine.hpp"

#include <algorithm>

namespace aam {

// ---------------------------------------------------------------------------
// Env

const Addr* Env::find(VarId v) const {
  auto it = std::lower_bound(slots_.begin(), slots_.end(), v,
                             [](const auto& slot, VarId x) { return slot.first < x; });
  if (it == slots_.end() || it->first != v) return nullptr;
  return &it->second;
}

const Addr& Env::at(VarId v) const {
  const Addr* a = find(v);
  if (!a) throw Error("unbound variable in environment");
  return *a;
}

Env Env::extended(VarId v, const Addr& a) const {
  Env out = *this;
  auto it = std::lower_bound(out.slots_.begin(), out.slots_.end(), v,
                             [](const auto& slot, VarId x) { return slot.first < x; });
  if (it != out.slots_.end() && it->first == v)
    it->second = a;
  else
    out.slots_.insert(it, {v, a});
  return out;
}

Env Env::restricted(const std::vector<VarId>& keep) const {
  Env out;
  for (const auto& slot : slots_)
    if (std::binary_search(keep.begin(), keep.end(), slot.first)) out.slots_.push_back(slot);
  return out;
}

// ---------------------------------------------------------------------------
// Values, marks, frames

bool is_value_control(const Program& p, const Control& c) {
  if (c.is_kont) return true;
  return is_value_kind(p.node(c.expr).kind);
}

Marks marks_updated(const Marks& m, const PermSet& perms, Cap c) {
  Marks out = m;
  for (const auto& perm : perms) out[perm] = c;
  return out;
}

PermSet marks_with(const Marks& m, Cap c) {
  std::vector<std::string> names;
  for (const auto& [perm, cap] : m)
    if (cap == c) names.push_back(perm);
  return make_perm_set(std::move(names));
}

const Marks& kont_marks(const Kont& k) {
  static const Marks kEmpty;
  if (const auto* mt = std::get_if<MtK>(&k)) return mt->marks;
  if (const auto* ar = std::get_if<ArK>(&k)) return ar->marks;
  if (const auto* fn = std::get_if<FnK>(&k)) return fn->marks;
  return kEmpty;
}

Kont kont_with_marks(Kont k, const PermSet& perms, Cap c) {
  if (auto* mt = std::get_if<MtK>(&k))
    mt->marks = marks_updated(mt->marks, perms, c);
  else if (auto* ar = std::get_if<ArK>(&k))
    ar->marks = marks_updated(ar->marks, perms, c);
  else if (auto* fn = std::get_if<FnK>(&k))
    fn->marks = marks_updated(fn->marks, perms, c);
  else
    throw Error("continuation marks are only carried by mt/ar/fn frames");
  return k;
}

bool is_mt(const Kont& k) { return std::holds_alternative<MtK>(k); }

// ---------------------------------------------------------------------------
// Stores

const Storable& Store::at(const Addr& a) const {
  auto it = m_.find(a);
  if (it == m_.end()) throw Error("dangling address in store");
  return it->second;
}

std::uint32_t Store::next_int_addr() const {
  std::uint32_t next = 0;
  for (const auto& [a, s] : m_)
    if (a.kind == BaseKind::Int && a.base >= next) next = a.base + 1;
  return next;
}

Store Store::restricted(const std::set<Addr>& keep) const {
  Store out;
  for (const auto& [a, s] : m_)
    if (keep.count(a)) out.m_.emplace(a, s);
  return out;
}

const std::set<Storable>& AbsStore::at(const Addr& a) const {
  static const std::set<Storable> kEmpty;
  auto it = m_.find(a);
  return it == m_.end() ? kEmpty : it->second;
}

const std::set<Storable>& AbsStore::at_checked(const Addr& a) const {
  auto it = m_.find(a);
  if (it == m_.end()) throw Error("dangling address in store");
  return it->second;
}

bool AbsStore::join(const Addr& a, Storable s) { return m_[a].insert(std::move(s)).second; }

bool AbsStore::join_all(const AbsStore& other) {
  bool grew = false;
  for (const auto& [a, set] : other.m_)
    for (const auto& s : set) grew |= join(a, s);
  return grew;
}

void AbsStore::replace(const Addr& a, const Storable& before, Storable after) {
  auto it = m_.find(a);
  if (it == m_.end()) throw Error("dangling address in store");
  it->second.erase(before);
  it->second.insert(std::move(after));
}

bool AbsStore::leq(const AbsStore& other) const {
  for (const auto& [a, set] : m_) {
    const auto& rhs = other.at(a);
    if (!std::includes(rhs.begin(), rhs.end(), set.begin(), set.end())) return false;
  }
  return true;
}

std::size_t AbsStore::total_entries() const {
  std::size_t n = 0;
  for (const auto& [a, set] : m_) n += set.size();
  return n;
}

AbsStore AbsStore::restricted(const std::set<Addr>& keep) const {
  AbsStore out;
  for (const auto& [a, set] : m_)
    if (keep.count(a)) out.m_.emplace(a, set);
  return out;
}

// ---------------------------------------------------------------------------
// Machine tags

std::optional<MachineTag> machine_tag_from_name(const std::string& name) {
  if (name == "cek") return MachineTag::Cek;
  if (name == "cesk") return MachineTag::Cesk;
  if (name == "cesk-star") return MachineTag::CeskStar;
  if (name == "cesk-star-t") return MachineTag::CeskStarT;
  if (name == "lk") return MachineTag::Lk;
  if (name == "lk-star") return MachineTag::LkStar;
  if (name == "extended") return MachineTag::Extended;
  if (name == "ceshk") return MachineTag::Ceshk;
  if (name == "cm") return MachineTag::Cm;
  return std::nullopt;
}

std::string machine_tag_name(MachineTag t) {
  switch (t) {
    case MachineTag::Cek: return "cek";
    case MachineTag::Cesk: return "cesk";
    case MachineTag::CeskStar: return "cesk-star";
    case MachineTag::CeskStarT: return "cesk-star-t";
    case MachineTag::Lk: return "lk";
    case MachineTag::LkStar: return "lk-star";
    case MachineTag::Extended: return "extended";
    case MachineTag::Ceshk: return "ceshk";
    case MachineTag::Cm: return "cm";
  }
  throw Error("unreachable machine tag");
}

Features features_for(MachineTag t) {
  switch (t) {
    case MachineTag::Extended: return {true, false, false};
    case MachineTag::Ceshk: return {true, true, false};
    case MachineTag::Cm: return {false, false, true};
    default: return {};
  }
}

bool is_pointer_family(MachineTag t) {
  return t == MachineTag::CeskStar || t == MachineTag::CeskStarT || t == MachineTag::Extended ||
         t == MachineTag::Ceshk || t == MachineTag::Cm;
}

bool is_lazy_family(MachineTag t) { return t == MachineTag::Lk || t == MachineTag::LkStar; }

bool family_supports(const Program& p, MachineTag t, std::string* why) {
  Features f = features_for(t);
  bool pure_only = t == MachineTag::Cek || t == MachineTag::Cesk || t == MachineTag::CeskStar ||
                   t == MachineTag::CeskStarT || is_lazy_family(t);
  for (std::size_t l = 0; l < p.size(); l++) {
    ExprKind k = p.node(static_cast<Label>(l)).kind;
    bool ok = true;
    switch (k) {
      case ExprKind::Ref:
      case ExprKind::App:
      case ExprKind::Lam:
        break;
      case ExprKind::If:
      case ExprKind::SetBang:
      case ExprKind::False:
      case ExprKind::Callcc:
        ok = !pure_only && (f.extended || (t == MachineTag::Cm && k == ExprKind::False));
        break;
      case ExprKind::Throw:
      case ExprKind::Catch:
        ok = f.exceptions;
        break;
      case ExprKind::Fail:
      case ExprKind::Grant:
      case ExprKind::Test:
      case ExprKind::Frame:
        ok = f.marks;
        break;
    }
    if (!ok) {
      if (why)
        *why = "expression form not supported by machine '" + machine_tag_name(t) +
               "': " + p.unparse(static_cast<Label>(l));
      return false;
    }
  }
  return true;
}

// ---------------------------------------------------------------------------
// Policies

Time ConcretePolicy::initial_time() const {
  switch (kind) {
    case PolicyKind::Untimed:
    case PolicyKind::Timed: return Time::from_int(0);
    case PolicyKind::Timed24: return Time::from_int(1);
    case PolicyKind::Contour: return Time::dot({});
  }
  throw Error("unreachable policy kind");
}

Contour truncated(Contour c, unsigned k) {
  if (c.size() > k) c.resize(k);
  return c;
}

Time contour_tick(const Program& p, const Control& c, const Time& t, const Kont* kont,
                  std::optional<unsigned> k) {
  if (!c.is_kont) {
    const ExprNode& n = p.node(c.expr);
    if (n.kind == ExprKind::App) {
      Time out = t;
      out.kind = BaseKind::Lab;
      out.base = c.expr;
      return out;
    }
  }
  // A function-entry dispatch pushes the pending call-site label, if any.
  bool entering = kont && (std::holds_alternative<FnK>(*kont) ||
                           std::holds_alternative<C2K>(*kont) ||
                           std::holds_alternative<C2eK>(*kont));
  if (entering && is_value_control(p, c)) {
    if (t.kind == BaseKind::Lab) {
      Contour c2 = t.contour;
      c2.insert(c2.begin(), t.base);
      if (k) c2 = truncated(std::move(c2), *k);
      return Time::dot(std::move(c2));
    }
    return t;  // no pending call site survived the operand's evaluation
  }
  return t;
}

Stamp contour_alloc_base(const Program& p, const Control& c, const Time& t, const Kont* kont,
                         std::uint8_t salt) {
  if (!c.is_kont) {
    const ExprNode& n = p.node(c.expr);
    switch (n.kind) {
      case ExprKind::App:
        return Stamp::from_lab(n.children[salt == 0 ? 0 : 1], t.contour, salt);
      case ExprKind::Ref:  // lazy force: the c1 frame
        return Stamp::from_lab(c.expr, t.contour, salt);
      case ExprKind::If:
        return Stamp::from_lab(n.children[0], t.contour, salt);
      case ExprKind::SetBang:
        return Stamp::from_lab(n.children[0], t.contour, salt);
      case ExprKind::Catch:
        return Stamp::from_lab(n.children[0], t.contour, salt);
      case ExprKind::Throw: {
        if (kont) {
          if (const auto* hn = std::get_if<HnK>(kont)) {
            if (!hn->handler.is_kont)
              return Stamp::from_var(p.node(hn->handler.expr).var, t.contour);
          }
        }
        break;
      }
      default:
        break;
    }
  }
  if (kont) {
    if (const auto* ar = std::get_if<ArK>(kont)) return Stamp::from_lab(ar->arg, t.contour, salt);
    if (const auto* fn = std::get_if<FnK>(kont)) {
      // Binding draw: the applied lambda's parameter; for callcc the operand
      // lambda in control position supplies the parameter.
      if (!fn->fn.is_kont && p.node(fn->fn.expr).kind == ExprKind::Lam)
        return Stamp::from_var(p.node(fn->fn.expr).var, t.contour);
      if (!c.is_kont && p.node(c.expr).kind == ExprKind::Lam)
        return Stamp::from_var(p.node(c.expr).var, t.contour);
    }
    if (const auto* c2e = std::get_if<C2eK>(kont)) {
      (void)c2e;
      if (!c.is_kont && p.node(c.expr).kind == ExprKind::Lam)
        return Stamp::from_var(p.node(c.expr).var, t.contour);
    }
  }
  // Fallback for draws that no rule of the instantiation names explicitly.
  return c.is_kont ? Stamp::from_lab(0, t.contour, salt)
                   : Stamp::from_lab(c.expr, t.contour, salt);
}

Time concrete_tick(const ConcretePolicy& pol, const Program& p, const PtrState& s,
                   const Kont* kont) {
  switch (pol.kind) {
    case PolicyKind::Untimed: return s.time;
    case PolicyKind::Timed:
    case PolicyKind::Timed24: return Time::from_int(s.time.base + 1);
    case PolicyKind::Contour: return contour_tick(p, s.control, s.time, kont, std::nullopt);
  }
  throw Error("unreachable policy kind");
}

Addr concrete_alloc(const ConcretePolicy& pol, const Program& p, const PtrState& s,
                    const Kont* kont, std::uint8_t salt) {
  switch (pol.kind) {
    case PolicyKind::Untimed:
    case PolicyKind::Timed: {
      Addr a = Addr::from_int(s.store.next_int_addr());
      a.salt = salt;
      return a;
    }
    case PolicyKind::Timed24: {
      Addr a = Addr::from_int(s.time.base);
      a.salt = salt;
      return a;
    }
    case PolicyKind::Contour: {
      Addr a = contour_alloc_base(p, s.control, s.time, kont, salt);
      while (s.store.contains(a)) a.gen++;  // freshness bump, erased by abstraction
      return a;
    }
  }
  throw Error("unreachable policy kind");
}

Time abstract_tick(const KCfaParams& prm, const Program& p, const AbsState& s, const Kont* kont) {
  return contour_tick(p, s.control, s.time, kont, prm.k);
}

Addr abstract_alloc(const KCfaParams& prm, const Program& p, const AbsState& s, const Kont* kont,
                    std::uint8_t salt) {
  Addr a = contour_alloc_base(p, s.control, s.time, kont, salt);
  a.contour = truncated(std::move(a.contour), prm.k);
  return a;
}

// ---------------------------------------------------------------------------
// Injection

namespace {

void check_closed(const Program& p) {
  if (!p.closed_at(p.root())) {
    std::string names;
    for (VarId v : p.free_vars(p.root())) {
      if (!names.empty()) names += ", ";
      names += p.var_name(v);
    }
    throw Error("open term: free variables {" + names + "}");
  }
}

}  // namespace

PtrState inject_ptr(const Program& p, MachineTag t, const ConcretePolicy& pol) {
  check_closed(p);
  PtrState s;
  s.control = Control::from_expr(p.root());
  s.store.put(mt_addr(), Kont{MtK{}});
  if (features_for(t).marks) s.store.put(failure_mt_addr(), Kont{MtK{}});
  s.handler = mt_addr();
  s.kont = mt_addr();
  s.time = pol.initial_time();
  return s;
}

AbsState inject_abs(const Program& p, MachineTag t) {
  check_closed(p);
  AbsState s;
  s.control = Control::from_expr(p.root());
  s.store.join(mt_addr(), Kont{MtK{}});
  if (features_for(t).marks) s.store.join(failure_mt_addr(), Kont{MtK{}});
  s.handler = mt_addr();
  s.kont = mt_addr();
  s.time = Time::dot({});
  return s;
}

// ---------------------------------------------------------------------------
// Helpers

Env close_env(const Program& p, Label e, const Env& env) {
  return env.restricted(p.free_vars(e));
}

CloS make_closure(const Program& p, const Val& v, const Env& env) {
  if (v.is_kont) return CloS{v, Env{}};
  return CloS{v, close_env(p, v.expr, env)};
}

// ---------------------------------------------------------------------------
// Rendering

std::string render(const Stamp& s, const Program& p) {
  std::string out;
  switch (s.kind) {
    case BaseKind::Int: out = "#" + std::to_string(s.base); break;
    case BaseKind::Lab: out = "e" + std::to_string(s.base); break;
    case BaseKind::Var: out = "v:" + p.var_name(s.base); break;
    case BaseKind::Dot: out = "*"; break;
  }
  if (s.kind != BaseKind::Int || !s.contour.empty()) {
    out += "[";
    for (std::size_t i = 0; i < s.contour.size(); i++) {
      if (i) out += ",";
      out += std::to_string(s.contour[i]);
    }
    out += "]";
  }
  if (s.salt) out += "/" + std::to_string(s.salt);
  if (s.gen) out += "!" + std::to_string(s.gen);
  return out;
}

std::string render(const Val& v, const Program& p) {
  if (v.is_kont) return "#k" + render(v.kont, p);
  return p.unparse(v.expr) + "@" + std::to_string(v.expr);
}

std::string render(const Env& e, const Program& p) {
  std::string out = "{";
  bool first = true;
  for (const auto& [v, a] : e.slots()) {
    if (!first) out += ", ";
    first = false;
    out += p.var_name(v) + "->" + render(a, p);
  }
  return out + "}";
}

namespace {

std::string render_marks(const Marks& m) {
  if (m.empty()) return "";
  std::string out = "^{";
  bool first = true;
  for (const auto& [perm, cap] : m) {
    if (!first) out += ",";
    first = false;
    out += perm + (cap == Cap::Grant ? "=grant" : "=deny");
  }
  return out + "}";
}

}  // namespace

std::string render(const Kont& k, const Program& p) {
  if (const auto* mt = std::get_if<MtK>(&k)) return "mt" + render_marks(mt->marks);
  if (const auto* ar = std::get_if<ArK>(&k))
    return "ar" + render_marks(ar->marks) + "(" + p.unparse(ar->arg) + "@" +
           std::to_string(ar->arg) + ", " + render(ar->env, p) + ", " + render(ar->next, p) + ")";
  if (const auto* fn = std::get_if<FnK>(&k))
    return "fn" + render_marks(fn->marks) + "(" + render(fn->fn, p) + ", " +
           render(fn->fn_env, p) + ", " + render(fn->next, p) + ")";
  if (const auto* f = std::get_if<IfK>(&k))
    return "if(" + p.unparse(f->then_e) + "@" + std::to_string(f->then_e) + ", " +
           p.unparse(f->else_e) + "@" + std::to_string(f->else_e) + ", " + render(f->env, p) +
           ", " + render(f->next, p) + ")";
  if (const auto* st = std::get_if<SetK>(&k))
    return "set(" + render(st->target, p) + ", " + render(st->next, p) + ")";
  if (const auto* c1 = std::get_if<C1K>(&k))
    return "c1(" + render(c1->target, p) + ", " + render(c1->next, p) + ")";
  if (const auto* c2 = std::get_if<C2K>(&k))
    return "c2(" + render(c2->arg, p) + ", " + render(c2->next, p) + ")";
  if (const auto* c2e = std::get_if<C2eK>(&k))
    return "c2(" + p.unparse(c2e->arg) + "@" + std::to_string(c2e->arg) + ", " +
           render(c2e->env, p) + ", " + render(c2e->next, p) + ")";
  if (const auto* hn = std::get_if<HnK>(&k))
    return "hn(" + render(hn->handler, p) + ", " + render(hn->env, p) + ", " +
           render(hn->kont, p) + ", " + render(hn->next, p) + ")";
  throw Error("unreachable frame kind");
}

std::string render(const Storable& s, const Program& p) {
  if (const auto* clo = std::get_if<CloS>(&s))
    return "clo(" + render(clo->val, p) + ", " + render(clo->env, p) + ")";
  if (const auto* th = std::get_if<ThunkS>(&s))
    return "d(" + p.unparse(th->expr) + "@" + std::to_string(th->expr) + ", " +
           render(th->env, p) + ")";
  if (const auto* co = std::get_if<CompS>(&s))
    return "c(" + render(co->val, p) + ", " + render(co->env, p) + ")";
  return render(std::get<Kont>(s), p);
}

std::string render(const Store& s, const Program& p) {
  std::string out = "{";
  bool first = true;
  for (const auto& [a, v] : s.entries()) {
    if (!first) out += ", ";
    first = false;
    out += render(a, p) + "=" + render(v, p);
  }
  return out + "}";
}

std::string render(const AbsStore& s, const Program& p) {
  std::string out = "{";
  bool first = true;
  for (const auto& [a, set] : s.entries()) {
    if (!first) out += ", ";
    first = false;
    out += render(a, p) + "={";
    bool f2 = true;
    for (const auto& v : set) {
      if (!f2) out += ", ";
      f2 = false;
      out += render(v, p);
    }
    out += "}";
  }
  return out + "}";
}

std::string render(const PtrState& s, const Program& p, MachineTag t) {
  std::string out = "<" + render(s.control, p) + " | " + render(s.env, p) + " | " +
                    render(s.store, p) + " | ";
  if (features_for(t).exceptions) out += "h:" + render(s.handler, p) + " | ";
  out += "k:" + render(s.kont, p);
  if (t != MachineTag::CeskStar) out += " | t:" + render(s.time, p);
  return out + ">";
}

std::string render(const AbsState& s, const Program& p, MachineTag t) {
  std::string out = "<" + render(s.control, p) + " | " + render(s.env, p) + " | " +
                    render(s.store, p) + " | ";
  if (features_for(t).exceptions) out += "h:" + render(s.handler, p) + " | ";
  out += "k:" + render(s.kont, p) + " | t:" + render(s.time, p);
  return out + ">";
}

}  // namespace aam
