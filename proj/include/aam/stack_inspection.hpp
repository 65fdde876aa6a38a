#pragma once

// Stack inspection: the permission-check predicate over marked continuations
// in recursive, pointer-refined and abstract form, and the concrete
// continuation-marks machine with a recursive continuation.

#include <optional>
#include <string>
#include <vector>

#include "aam/concrete.hpp"
#include "aam/machine.hpp"

namespace aam {

// Recursive form: frames from innermost to mt (back() is innermost).
bool ok_rec(const Program& p, const PermSet& r, const std::vector<RFrame>& frames,
            const Marks& mt_marks);

// Pointer-refined form over a single-valued store.
bool ok_ptr(const PermSet& r, const Store& store, const Addr& a);

// Over an abstract store there may be several frame choices per address;
// the predicate asks for paths. `can_ok` means some path through the store
// satisfies the concrete predicate, `can_fail` that some path violates it.
// Visited (permissions, address) pairs are tabulated so cyclic stores
// terminate.
struct OkPaths {
  bool can_ok = false;
  bool can_fail = false;
};

OkPaths ok_star_paths(const PermSet& r, const AbsStore& store, const Addr& a);
bool ok_star(const PermSet& r, const AbsStore& store, const Addr& a);

// ---------------------------------------------------------------------------
// The concrete continuation-marks machine (recursive continuation; variable
// bindings in a store). Mark updates rewrite the innermost frame in place.

struct CmState {
  Control control;
  Env env;
  Store store;
  std::vector<RFrame> kont;  // back() is innermost; RAr/RFn carry marks
  Marks mt_marks;
  friend auto operator<=>(const CmState&, const CmState&) = default;
};

CmState inject_cm(const Program& p);
std::optional<CmState> step_cm(const Program& p, const CmState& s, const PermSet& universe);

struct CmRun {
  std::vector<CmState> trace;
  RunFlag flag = RunFlag::Final;
};
CmRun run_cm(const Program& p, const PermSet& universe, std::size_t fuel);

std::string render(const CmState& s, const Program& p);

}  // namespace aam
