#pragma once

// Concrete machines.
//
// Two recursive-continuation machines are kept figure-faithful:
//   CEK   - environments map variables to closures; continuations are a stack.
//   CESK  - bindings move into a store; continuations stay a stack.
// The pointer-refined machines (continuations in the store, addressed by a
// register) share one feature-gated stepper covering the plain, timed,
// extended, exception and continuation-mark families.

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "aam/machine.hpp"
#include "aam/syntax.hpp"

namespace aam {

// ---------------------------------------------------------------------------
// CEK domain. Also the target of store-dereferencing erasure, which is how
// the stepwise agreement checks compare the four machine families.

struct CekEnvRec;
using CekEnvPtr = std::shared_ptr<const CekEnvRec>;

struct CekClo {
  Val val;
  CekEnvPtr env;  // closes val; null means empty
};

struct CekEnvRec {
  std::map<VarId, CekClo> slots;
};

bool deep_equal(const CekClo& a, const CekClo& b);
bool deep_equal(const CekEnvPtr& a, const CekEnvPtr& b);

struct CekFrame {
  enum class Kind : std::uint8_t { Ar, Fn } kind = Kind::Ar;
  Label arg = 0;      // Ar
  CekEnvPtr arg_env;  // Ar
  CekClo fn;          // Fn
};

bool deep_equal(const CekFrame& a, const CekFrame& b);

struct CekState {
  Control control;
  CekEnvPtr env;
  std::vector<CekFrame> kont;  // back() is the innermost frame
};

bool deep_equal(const CekState& a, const CekState& b);

CekState inject_cek(const Program& p);
std::optional<CekState> step_cek(const Program& p, const CekState& s);
std::string render(const CekState& s, const Program& p);

// ---------------------------------------------------------------------------
// Recursive continuation frames over a store (CESK; also reused by the
// recursive exception and mark machines, and the lazy machine).

struct RAr {
  Label arg = 0;
  Env env;
  Marks marks;
  friend auto operator<=>(const RAr&, const RAr&) = default;
};
struct RFn {
  Val fn;
  Env env;
  Marks marks;
  friend auto operator<=>(const RFn&, const RFn&) = default;
};
struct RIf {
  Label then_e = 0;
  Label else_e = 0;
  Env env;
  friend auto operator<=>(const RIf&, const RIf&) = default;
};
struct RSet {
  Addr target;
  friend auto operator<=>(const RSet&, const RSet&) = default;
};
struct RC1 {
  Addr target;
  friend auto operator<=>(const RC1&, const RC1&) = default;
};
struct RC2 {
  Addr arg;
  friend auto operator<=>(const RC2&, const RC2&) = default;
};

using RFrame = std::variant<RAr, RFn, RIf, RSet, RC1, RC2>;

struct CeskState {
  Control control;
  Env env;
  Store store;
  std::vector<RFrame> kont;  // back() is the innermost frame
  friend auto operator<=>(const CeskState&, const CeskState&) = default;
};

CeskState inject_cesk(const Program& p);
std::optional<CeskState> step_cesk(const Program& p, const CeskState& s);
std::string render(const CeskState& s, const Program& p);

// ---------------------------------------------------------------------------
// Pointer-refined concrete stepper.

struct StepParams {
  Features features;
  PermSet universe;  // permission universe, used by the mark rules
};

// The unique successor, or nothing when the state is terminal. Throws Error
// only on malformed states (dangling addresses, non-continuation register).
std::optional<PtrState> step_pointer(const Program& p, const PtrState& s, const StepParams& prm,
                                     const ConcretePolicy& pol);

enum class TerminalKind : std::uint8_t {
  NotTerminal,
  Value,
  Stuck,
  UncaughtThrow,
  SecurityFailure,
};

TerminalKind classify_terminal(const Program& p, const PtrState& s, const StepParams& prm);

// ---------------------------------------------------------------------------
// Reachable-state evaluation.

enum class RunFlag : std::uint8_t {
  Final,
  Stuck,
  UncaughtThrow,
  SecurityFailure,
  FuelExhausted,
};

std::string run_flag_name(RunFlag f);

constexpr std::size_t kDefaultFuel = 10000;

struct PtrRun {
  std::vector<PtrState> trace;
  RunFlag flag = RunFlag::Final;
};

// Runs the pointer family selected by `tag` (cesk-star, cesk-star-t,
// extended, ceshk, cm). With `gc` every transition is followed by a
// collection.
PtrRun run_pointer(const Program& p, MachineTag tag, const ConcretePolicy& pol, std::size_t fuel,
                   bool gc = false, PermSet universe = {});

struct CekRun {
  std::vector<CekState> trace;
  RunFlag flag = RunFlag::Final;
};
CekRun run_cek(const Program& p, std::size_t fuel);

struct CeskRun {
  std::vector<CeskState> trace;
  RunFlag flag = RunFlag::Final;
};
CeskRun run_cesk(const Program& p, std::size_t fuel);

// ---------------------------------------------------------------------------
// Store-dereferencing erasure: forget addresses and times, substitute store
// contents, and rebuild the recursive continuation. All four pure families
// erase into the CEK domain.

CekState erase_to_cek(const Program& p, const CekState& s);
CekState erase_to_cek(const Program& p, const CeskState& s);
CekState erase_to_cek(const Program& p, const PtrState& s);

// ---------------------------------------------------------------------------
// Stepwise agreement of CEK / CESK / CESK* / timed CESK* on one program.

struct LockstepReport {
  bool agreed = true;
  std::size_t steps = 0;       // transitions compared
  RunFlag flag = RunFlag::Final;
  std::string divergence;      // empty when agreed
};

LockstepReport lockstep_check(const Program& p, std::size_t fuel,
                              PolicyKind timed_policy = PolicyKind::Timed);

// ---------------------------------------------------------------------------
// Canonical renaming of addresses by first-use order (and optionally erased
// times); states that differ only by consistent renaming canonicalize
// identically.

PtrState canonicalize(const Program& p, const PtrState& s, bool drop_time = true);

}  // namespace aam
