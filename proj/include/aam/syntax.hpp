#pragma once

// Surface syntax and labeled abstract syntax for the core language:
// a unary call-by-value lambda calculus extended with conditionals,
// mutation, first-class control, exceptions, and permission forms.
//
// Grammar (s-expressions, one program per file):
//   e ::= x | (e e) | (lambda (x) e) | (if e e e) | (set! x e)
//       | (throw v) | (catch e (lambda (x) e)) | #f | callcc
//       | (fail) | (grant (p ...) e) | (test (p ...) e0 e1) | (frame (p ...) e)
//   v ::= (lambda (x) e) | #f | callcc
//
// Every node carries a label assigned by pre-order traversal starting at 0,
// so a node's label doubles as its index into Program::nodes.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace aam {

using Label = std::uint32_t;
using VarId = std::uint32_t;

constexpr Label kNoLabel = 0xffffffffu;

enum class ExprKind : std::uint8_t {
  Ref,      // x
  App,      // (e0 e1)
  Lam,      // (lambda (x) e)
  If,       // (if e0 e1 e2)
  SetBang,  // (set! x e)
  Throw,    // (throw v)
  Catch,    // (catch e (lambda (x) e))
  Fail,     // (fail)
  Grant,    // (grant (p ...) e)
  Test,     // (test (p ...) e0 e1)
  Frame,    // (frame (p ...) e)
  False,    // #f
  Callcc,   // callcc
};

// Permission sets are kept as sorted, deduplicated name lists.
using PermSet = std::vector<std::string>;

PermSet make_perm_set(std::vector<std::string> names);
PermSet perm_union(const PermSet& a, const PermSet& b);
PermSet perm_intersect(const PermSet& a, const PermSet& b);
PermSet perm_minus(const PermSet& a, const PermSet& b);
bool perm_disjoint(const PermSet& a, const PermSet& b);

struct ExprNode {
  ExprKind kind = ExprKind::Fail;
  Label label = 0;
  Label parent = kNoLabel;
  VarId var = 0;                 // Ref, Lam, SetBang
  std::vector<Label> children;   // subexpression labels, in syntactic order
  PermSet perms;                 // Grant, Test, Frame
};

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& msg, int line, int col);
  int line;
  int col;
};

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// An immutable labeled program. Nodes are indexed by label.
class Program {
 public:
  const ExprNode& node(Label l) const { return nodes_.at(l); }
  Label root() const { return root_; }
  std::size_t size() const { return nodes_.size(); }

  const std::string& var_name(VarId v) const { return var_names_.at(v); }
  std::size_t var_count() const { return var_names_.size(); }

  // Free variables of the subexpression rooted at l, sorted by VarId.
  const std::vector<VarId>& free_vars(Label l) const { return fv_.at(l); }
  bool closed_at(Label l) const { return fv_.at(l).empty(); }

  // All permission names that appear literally in the program.
  const PermSet& mentioned_permissions() const { return perms_seen_; }

  std::size_t count(ExprKind k) const;

  std::string unparse(Label l) const;
  std::string unparse() const { return unparse(root_); }

 private:
  friend class ProgramBuilder;
  std::vector<ExprNode> nodes_;
  std::vector<std::string> var_names_;
  std::map<std::string, VarId> var_ids_;
  std::vector<std::vector<VarId>> fv_;
  PermSet perms_seen_;
  Label root_ = 0;
};

// Builds programs node by node in pre-order; used by the parser and the
// annotator. Finalization computes parents and free-variable sets.
class ProgramBuilder {
 public:
  Label add(ExprKind kind, VarId var = 0, PermSet perms = {});
  void set_children(Label l, std::vector<Label> children);
  VarId intern_var(const std::string& name);
  Program finish(Label root);

 private:
  Program p_;
};

Program parse_program(const std::string& text);

// Inserts (frame R ...) around every lambda body and intersects every
// grant set with R; labels are reassigned. The preprocessing pass expected
// before running the stack-inspection machines.
Program annotate(const Program& p, const PermSet& universe);

// Structural identity ignoring nothing: kinds, binders, permission sets and
// tree shape must all agree (labels agree by construction when both sides
// are pre-order labeled).
bool same_tree(const Program& a, const Program& b);

bool is_value_kind(ExprKind k);
bool is_reserved_word(const std::string& s);

}  // namespace aam
