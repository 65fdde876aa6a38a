#pragma once

// By-need machines: the lazy Krivine machine with a recursive continuation,
// its pointer-refined counterpart, and the abstract variants (baseline,
// operand-specialized, postponed thunk creation). Thunks and computed values
// share the store with continuations in the pointer-refined forms.

#include <memory>
#include <optional>

#include "aam/concrete.hpp"
#include "aam/machine.hpp"

namespace aam {

struct FlowFacts;
struct KCfaParams2;  // not used; see KCfaParams in machine.hpp

// The recursive-continuation lazy machine reuses the CESK state shape: a
// control expression, an address environment, a store holding thunks and
// computed values, and a frame stack of c1 (write-back) and c2 (apply)
// frames.
using LkState = CeskState;
using LkRun = CeskRun;

LkState inject_lk(const Program& p);
std::optional<LkState> step_lk(const Program& p, const LkState& s);
LkRun run_lk(const Program& p, std::size_t fuel);

// Pointer-refined, time-stamped form.
using LkPtrRun = PtrRun;
PtrState inject_lk_ptr(const Program& p, const ConcretePolicy& pol);
std::optional<PtrState> step_lk_ptr(const Program& p, const PtrState& s,
                                    const ConcretePolicy& pol);
LkPtrRun run_lk_ptr(const Program& p, const ConcretePolicy& pol, std::size_t fuel);

// ---------------------------------------------------------------------------
// Abstract stepper.

enum class LazyVariant : std::uint8_t {
  Baseline,   // thunk per application operand
  Optimized,  // variable and value operands avoid fresh thunks
  Postponed,  // thunks created at binding time, not application time
};

std::optional<LazyVariant> lazy_variant_from_name(const std::string& name);

std::vector<AbsState> abstract_step_lk(const Program& p, const AbsState& s,
                                       const KCfaParams& kcfa, LazyVariant variant,
                                       FlowFacts* facts = nullptr);

// ---------------------------------------------------------------------------
// Store-dereferencing erasure for the lazy family; LK and LK* erase into one
// recursive form so their runs can be compared stepwise.

struct LazyErased;
struct LazyEnvRec;
using LazyEnvPtr = std::shared_ptr<const LazyEnvRec>;

struct LazyErased {
  bool computed = false;  // d(e, rho) vs c(v, rho)
  Label expr = 0;
  LazyEnvPtr env;
};

struct LazyEnvRec {
  std::map<VarId, LazyErased> slots;
};

struct LazyFrameE {
  bool is_write_back = false;  // c1 vs c2
  LazyErased content;
};

struct LazyEState {
  Label control = 0;
  LazyEnvPtr env;
  std::vector<LazyFrameE> kont;  // back() innermost
};

bool deep_equal(const LazyErased& a, const LazyErased& b);
bool deep_equal(const LazyEState& a, const LazyEState& b);

LazyEState erase_lazy(const Program& p, const LkState& s);
LazyEState erase_lazy(const Program& p, const PtrState& s);

// Stepwise agreement of the recursive and pointer-refined lazy machines.
LockstepReport lockstep_lazy(const Program& p, std::size_t fuel);

std::string render_lk(const LkState& s, const Program& p);

}  // namespace aam
