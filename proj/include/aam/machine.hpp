#pragma once

// Shared machine domains for the pointer-refined machine families: addresses
// and timestamps, environments, values, continuation frames, storables, and
// single- vs. set-valued stores. Everything is an immutable value with
// structural ordering so states can live in ordered sets and maps.

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "aam/syntax.hpp"

namespace aam {

// ---------------------------------------------------------------------------
// Addresses and timestamps.
//
// One representation serves every allocation discipline:
//   - Int: plain naturals (the default concrete instantiation),
//   - Lab/Var/Dot bases paired with a call-string contour (the k-CFA-style
//     instantiation; Dot is the "no pending call site" time base).
// `salt` separates multiple draws made by a single transition rule; `gen` is
// a concrete-only freshness bump and is erased by abstraction.

using Contour = std::vector<Label>;

enum class BaseKind : std::uint8_t { Int, Lab, Var, Dot };

struct Stamp {
  BaseKind kind = BaseKind::Int;
  std::uint8_t salt = 0;
  std::uint32_t base = 0;  // integer value, expression label, or VarId
  std::uint32_t gen = 0;
  Contour contour;

  friend auto operator<=>(const Stamp&, const Stamp&) = default;

  static Stamp from_int(std::uint32_t n) { return Stamp{BaseKind::Int, 0, n, 0, {}}; }
  static Stamp from_lab(Label l, Contour c, std::uint8_t salt = 0) {
    return Stamp{BaseKind::Lab, salt, l, 0, std::move(c)};
  }
  static Stamp from_var(VarId v, Contour c) { return Stamp{BaseKind::Var, 0, v, 0, std::move(c)}; }
  static Stamp dot(Contour c) { return Stamp{BaseKind::Dot, 0, 0, 0, std::move(c)}; }
};

using Addr = Stamp;
using Time = Stamp;

// The designated address holding the initial empty continuation; also the
// a_mt register target used when installing a handler-local continuation.
inline Addr mt_addr() { return Addr::from_int(0); }
// Distinct designated address holding the mark-free empty continuation that
// a security failure resets to.
inline Addr failure_mt_addr() { return Addr::from_int(1); }

// ---------------------------------------------------------------------------
// Environments: finite maps VarId -> Addr kept as sorted flat vectors. The
// machines restrict every environment to the free variables of the
// expression it closes, so these stay small.

class Env {
 public:
  const Addr* find(VarId v) const;
  const Addr& at(VarId v) const;  // throws Error on miss
  Env extended(VarId v, const Addr& a) const;
  Env restricted(const std::vector<VarId>& keep) const;  // keep must be sorted
  bool empty() const { return slots_.empty(); }
  std::size_t size() const { return slots_.size(); }
  const std::vector<std::pair<VarId, Addr>>& slots() const { return slots_; }

  friend auto operator<=>(const Env&, const Env&) = default;

 private:
  std::vector<std::pair<VarId, Addr>> slots_;
};

// ---------------------------------------------------------------------------
// Values and control strings. A value is either an expression value form
// (lambda, #f, callcc) or a reified continuation address; a control string
// is any expression label or such an address.

struct Val {
  bool is_kont = false;
  Label expr = 0;
  Addr kont;

  friend auto operator<=>(const Val&, const Val&) = default;

  static Val from_expr(Label l) { return Val{false, l, {}}; }
  static Val from_kont(Addr a) { return Val{true, 0, std::move(a)}; }
};

using Control = Val;

bool is_value_control(const Program& p, const Control& c);

// ---------------------------------------------------------------------------
// Continuation marks for stack inspection: permission -> deny/grant.

enum class Cap : std::uint8_t { Deny, Grant };

using Marks = std::map<std::string, Cap>;

Marks marks_updated(const Marks& m, const PermSet& perms, Cap c);
PermSet marks_with(const Marks& m, Cap c);

// ---------------------------------------------------------------------------
// Continuation frames (pointer-refined: the tail is a store address).

struct MtK {
  Marks marks;
  friend auto operator<=>(const MtK&, const MtK&) = default;
};
struct ArK {  // evaluating the operator; arg is pending
  Label arg = 0;
  Env env;
  Addr next;
  Marks marks;
  friend auto operator<=>(const ArK&, const ArK&) = default;
};
struct FnK {  // operator value known; evaluating the operand
  Val fn;
  Env fn_env;
  Addr next;
  Marks marks;
  friend auto operator<=>(const FnK&, const FnK&) = default;
};
struct IfK {
  Label then_e = 0;
  Label else_e = 0;
  Env env;
  Addr next;
  friend auto operator<=>(const IfK&, const IfK&) = default;
};
struct SetK {
  Addr target;
  Addr next;
  friend auto operator<=>(const SetK&, const SetK&) = default;
};
struct C1K {  // forcing: write the value back to target
  Addr target;
  Addr next;
  friend auto operator<=>(const C1K&, const C1K&) = default;
};
struct C2K {  // apply: operand thunk already allocated at arg
  Addr arg;
  Addr next;
  friend auto operator<=>(const C2K&, const C2K&) = default;
};
struct C2eK {  // apply, postponed-thunk variant: operand kept syntactic
  Label arg = 0;
  Env env;
  Addr next;
  friend auto operator<=>(const C2eK&, const C2eK&) = default;
};
struct HnK {  // exception handler: procedure + saved local kont + outer handler
  Val handler;
  Env env;
  Addr kont;
  Addr next;
  friend auto operator<=>(const HnK&, const HnK&) = default;
};

using Kont = std::variant<MtK, ArK, FnK, IfK, SetK, C1K, C2K, C2eK, HnK>;

const Marks& kont_marks(const Kont& k);
Kont kont_with_marks(Kont k, const PermSet& perms, Cap c);
bool is_mt(const Kont& k);

// ---------------------------------------------------------------------------
// Storables.

struct CloS {  // (v, rho)
  Val val;
  Env env;
  friend auto operator<=>(const CloS&, const CloS&) = default;
};
struct ThunkS {  // d(e, rho)
  Label expr = 0;
  Env env;
  friend auto operator<=>(const ThunkS&, const ThunkS&) = default;
};
struct CompS {  // c(v, rho)
  Val val;
  Env env;
  friend auto operator<=>(const CompS&, const CompS&) = default;
};

using Storable = std::variant<CloS, ThunkS, CompS, Kont>;

// ---------------------------------------------------------------------------
// Stores.

class Store {  // concrete: one storable per address
 public:
  bool contains(const Addr& a) const { return m_.count(a) != 0; }
  const Storable& at(const Addr& a) const;  // throws Error on dangling address
  void put(const Addr& a, Storable s) { m_[a] = std::move(s); }
  std::uint32_t next_int_addr() const;  // max integer address + 1
  std::size_t size() const { return m_.size(); }
  const std::map<Addr, Storable>& entries() const { return m_; }
  Store restricted(const std::set<Addr>& keep) const;

  friend auto operator<=>(const Store&, const Store&) = default;

 private:
  std::map<Addr, Storable> m_;
};

class AbsStore {  // abstract: a set of storables per address
 public:
  bool contains(const Addr& a) const { return m_.count(a) != 0; }
  const std::set<Storable>& at(const Addr& a) const;  // empty set on miss
  const std::set<Storable>& at_checked(const Addr& a) const;  // throws on miss
  bool join(const Addr& a, Storable s);          // true if the store grew
  bool join_all(const AbsStore& other);
  // Mark update: replaces one element of the entry (update, not join).
  void replace(const Addr& a, const Storable& before, Storable after);
  bool leq(const AbsStore& other) const;  // pointwise subset
  std::size_t size() const { return m_.size(); }
  std::size_t total_entries() const;
  const std::map<Addr, std::set<Storable>>& entries() const { return m_; }
  AbsStore restricted(const std::set<Addr>& keep) const;

  friend auto operator<=>(const AbsStore&, const AbsStore&) = default;

 private:
  std::map<Addr, std::set<Storable>> m_;
};

// ---------------------------------------------------------------------------
// Machine families and feature sets.

enum class MachineTag {
  Cek,
  Cesk,
  CeskStar,
  CeskStarT,
  Lk,
  LkStar,
  Extended,
  Ceshk,
  Cm,
};

std::optional<MachineTag> machine_tag_from_name(const std::string& name);
std::string machine_tag_name(MachineTag t);

struct Features {
  bool extended = false;    // if / set! / callcc
  bool exceptions = false;  // throw / catch, handler register
  bool marks = false;       // continuation marks + fail/grant/test/frame
  friend auto operator<=>(const Features&, const Features&) = default;
};

// Pointer-refined families share one state shape; the handler register is
// carried everywhere and simply stays at its injected value for families
// without exceptions.
Features features_for(MachineTag t);
bool is_pointer_family(MachineTag t);
bool is_lazy_family(MachineTag t);

// Rejects expression kinds a family does not implement (they would only ever
// reach stuck states); used for up-front validation in the CLI.
bool family_supports(const Program& p, MachineTag t, std::string* why = nullptr);

// ---------------------------------------------------------------------------
// States.

struct PtrState {
  Control control;
  Env env;
  Store store;
  Addr handler;
  Addr kont;
  Time time;
  friend auto operator<=>(const PtrState&, const PtrState&) = default;
};

struct AbsState {
  Control control;
  Env env;
  AbsStore store;
  Addr handler;
  Addr kont;
  Time time;
  friend auto operator<=>(const AbsState&, const AbsState&) = default;
};

// ---------------------------------------------------------------------------
// Allocation policies.
//
// Concrete machines are parameterized by how they produce times and fresh
// addresses:
//   Untimed   - the time register stays 0; addresses are max(dom)+1.
//   Timed     - times count transitions; addresses are max(dom)+1.
//   Timed24   - times count transitions and double as addresses (t0 = 1 so
//               the first draw misses the initial continuation address).
//   Contour   - call-string stamps, the concrete side of the k-CFA pair.
// The abstract machines always use contour stamps truncated to length k.

enum class PolicyKind { Untimed, Timed, Timed24, Contour };

struct ConcretePolicy {
  PolicyKind kind = PolicyKind::Timed;
  Time initial_time() const;
};

struct KCfaParams {
  unsigned k = 0;
};

Contour truncated(Contour c, unsigned k);

// Shared contour logic (the concrete side passes no k and never truncates).
// `kont` is the continuation the transition dispatches on, when any.
Time contour_tick(const Program& p, const Control& c, const Time& t, const Kont* kont,
                  std::optional<unsigned> k);
Stamp contour_alloc_base(const Program& p, const Control& c, const Time& t, const Kont* kont,
                         std::uint8_t salt);

Time concrete_tick(const ConcretePolicy& pol, const Program& p, const PtrState& s,
                   const Kont* kont);
Addr concrete_alloc(const ConcretePolicy& pol, const Program& p, const PtrState& s,
                    const Kont* kont, std::uint8_t salt = 0);
Time abstract_tick(const KCfaParams& prm, const Program& p, const AbsState& s, const Kont* kont);
Addr abstract_alloc(const KCfaParams& prm, const Program& p, const AbsState& s, const Kont* kont,
                    std::uint8_t salt = 0);

// ---------------------------------------------------------------------------
// Injection.

PtrState inject_ptr(const Program& p, MachineTag t, const ConcretePolicy& pol);
AbsState inject_abs(const Program& p, MachineTag t);

// ---------------------------------------------------------------------------
// Helpers shared by the steppers.

Env close_env(const Program& p, Label e, const Env& env);
CloS make_closure(const Program& p, const Val& v, const Env& env);

// ---------------------------------------------------------------------------
// Rendering (stable, one-line textual forms used for traces and goldens).

std::string render(const Stamp& s, const Program& p);
std::string render(const Val& v, const Program& p);
std::string render(const Env& e, const Program& p);
std::string render(const Kont& k, const Program& p);
std::string render(const Storable& s, const Program& p);
std::string render(const Store& s, const Program& p);
std::string render(const AbsStore& s, const Program& p);
std::string render(const PtrState& s, const Program& p, MachineTag t);
std::string render(const AbsState& s, const Program& p, MachineTag t);

}  // namespace aam
