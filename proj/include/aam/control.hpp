#pragma once

// Conditionals, mutation, first-class control and exceptions.
//
// The pointer-refined steppers for these families are the feature-gated ones
// in concrete.hpp/abstract.hpp; this header names them and adds the
// recursive-continuation exception machine (handler stack + local frame
// stack). Reified continuations are addresses, so callcc is only available
// on the pointer-refined machines.

#include <optional>
#include <vector>

#include "aam/abstract.hpp"
#include "aam/concrete.hpp"

namespace aam {

struct CeshkHandler {
  Val handler;  // always a lambda
  Env env;
  std::vector<RFrame> saved;  // local continuation to resume after the catch
  friend auto operator<=>(const CeshkHandler&, const CeshkHandler&) = default;
};

struct CeshkState {
  Control control;
  Env env;
  Store store;
  std::vector<CeshkHandler> handlers;  // back() innermost
  std::vector<RFrame> kont;            // back() innermost
  friend auto operator<=>(const CeshkState&, const CeshkState&) = default;
};

CeshkState inject_ceshk(const Program& p);
std::optional<CeshkState> step_ceshk(const Program& p, const CeshkState& s);

struct CeshkRun {
  std::vector<CeshkState> trace;
  RunFlag flag = RunFlag::Final;
};
CeshkRun run_ceshk(const Program& p, std::size_t fuel);

std::string render(const CeshkState& s, const Program& p);

// Pointer-refined forms, named per family.
std::optional<PtrState> step_extended_star(const Program& p, const PtrState& s,
                                           const ConcretePolicy& pol);
std::optional<PtrState> step_ceshk_star(const Program& p, const PtrState& s,
                                        const ConcretePolicy& pol);

std::vector<AbsState> abstract_step_extended(const Program& p, const AbsState& s,
                                             const KCfaParams& kcfa, FlowFacts* facts = nullptr);
std::vector<AbsState> abstract_step_ceshk(const Program& p, const AbsState& s,
                                          const KCfaParams& kcfa, FlowFacts* facts = nullptr);
std::vector<AbsState> abstract_step_cm(const Program& p, const AbsState& s,
                                       const PermSet& universe, const KCfaParams& kcfa,
                                       FlowFacts* facts = nullptr);

}  // namespace aam
