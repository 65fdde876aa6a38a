#include <doctest.h>

#include <set>

#include "aam/syntax.hpp"

using namespace aam;

TEST_CASE("parse assigns pre-order labels") {
  Program p = parse_program("((lambda (x) x) (lambda (y) y))");
  REQUIRE(p.size() == 5);
  CHECK(p.node(0).kind == ExprKind::App);
  CHECK(p.node(1).kind == ExprKind::Lam);
  CHECK(p.var_name(p.node(1).var) == "x");
  CHECK(p.node(2).kind == ExprKind::Ref);
  CHECK(p.node(3).kind == ExprKind::Lam);
  CHECK(p.var_name(p.node(3).var) == "y");
  CHECK(p.node(4).kind == ExprKind::Ref);
  CHECK(p.node(2).parent == 1);
  CHECK(p.node(3).parent == 0);
  CHECK(p.root() == 0);
}

TEST_CASE("parse of conditionals and false") {
  Program p = parse_program("(if #f (lambda (x) x) (lambda (y) y))");
  CHECK(p.node(p.root()).kind == ExprKind::If);
  CHECK(p.node(p.node(p.root()).children[0]).kind == ExprKind::False);
  CHECK(p.node(p.node(p.root()).children[1]).kind == ExprKind::Lam);
  CHECK(p.node(p.node(p.root()).children[2]).kind == ExprKind::Lam);
}

TEST_CASE("permission sets must be literal identifier lists") {
  CHECK_THROWS_AS(parse_program("(test x (lambda (a) a) (lambda (b) b))"), ParseError);
  CHECK_THROWS_AS(parse_program("(test ((read)) (lambda (a) a) (lambda (b) b))"), ParseError);
  Program ok = parse_program("(test (read write) (lambda (a) a) (lambda (b) b))");
  CHECK(ok.node(ok.root()).perms == PermSet{"read", "write"});
}

TEST_CASE("parse errors carry positions and reasons") {
  CHECK_THROWS_AS(parse_program("((lambda (x) x)"), ParseError);
  CHECK_THROWS_AS(parse_program("(lambda (x y) x)"), ParseError);
  CHECK_THROWS_AS(parse_program("(if #f #f)"), ParseError);
  CHECK_THROWS_AS(parse_program("(set! lambda #f)"), ParseError);
  CHECK_THROWS_AS(parse_program("(throw ((lambda (x) x) (lambda (y) y)))"), ParseError);
  CHECK_THROWS_AS(parse_program("(catch #f #f)"), ParseError);
  CHECK_THROWS_AS(parse_program(""), ParseError);
  CHECK_THROWS_AS(parse_program("(lambda (x) x) extra"), ParseError);
  try {
    parse_program("(lambda (x)\n  (x y)");
  } catch (const ParseError& e) {
    CHECK(e.line == 1);
  }
}

TEST_CASE("free variables") {
  Program lam = parse_program("(lambda (x) x)");
  CHECK(lam.free_vars(lam.root()).empty());

  // (x (lambda (y) x)) as a subterm of a closing lambda
  Program p = parse_program("(lambda (x) (x (lambda (y) x)))");
  Label app = p.node(p.root()).children[0];
  REQUIRE(p.node(app).kind == ExprKind::App);
  std::set<std::string> names;
  for (VarId v : p.free_vars(app)) names.insert(p.var_name(v));
  CHECK(names == std::set<std::string>{"x"});

  Program q = parse_program("(lambda (x) (lambda (z) (set! x (lambda (y) z))))");
  Label setb = q.node(q.node(q.node(q.root()).children[0]).children[0]).label;
  REQUIRE(q.node(setb).kind == ExprKind::SetBang);
  std::set<std::string> names2;
  for (VarId v : q.free_vars(setb)) names2.insert(q.var_name(v));
  CHECK(names2 == std::set<std::string>{"x", "z"});
}

TEST_CASE("free_vars agrees with a naive recursive oracle") {
  // Oracle: walk the tree carrying the bound-variable set.
  struct Oracle {
    const Program& p;
    void walk(Label l, std::set<VarId> bound, std::set<VarId>& out) {
      const ExprNode& n = p.node(l);
      switch (n.kind) {
        case ExprKind::Ref:
          if (!bound.count(n.var)) out.insert(n.var);
          break;
        case ExprKind::Lam: {
          bound.insert(n.var);
          walk(n.children[0], bound, out);
          break;
        }
        case ExprKind::SetBang:
          if (!bound.count(n.var)) out.insert(n.var);
          walk(n.children[0], bound, out);
          break;
        default:
          for (Label c : n.children) walk(c, bound, out);
      }
    }
  };
  const char* samples[] = {
      "(lambda (x) ((x (lambda (y) (y x))) (lambda (z) x)))",
      "(lambda (a) (if a (set! a (lambda (b) a)) ((a a) #f)))",
      "(catch (throw (lambda (x) x)) (lambda (h) (h h)))",
  };
  for (const char* s : samples) {
    Program p = parse_program(s);
    for (std::size_t l = 0; l < p.size(); l++) {
      std::set<VarId> expect;
      Oracle{p}.walk(static_cast<Label>(l), {}, expect);
      std::set<VarId> got(p.free_vars(static_cast<Label>(l)).begin(),
                          p.free_vars(static_cast<Label>(l)).end());
      CHECK(got == expect);
    }
  }
}

TEST_CASE("labels are pairwise distinct and dense") {
  const char* samples[] = {
      "((lambda (x) (x x)) (lambda (y) (y y)))",
      "(if #f (set! z #f) ((lambda (z) z) callcc))",
      "(grant (p q) (test (p) (fail) (lambda (x) x)))",
  };
  for (const char* s : samples) {
    Program p = parse_program(s);
    std::set<Label> seen;
    for (std::size_t l = 0; l < p.size(); l++) {
      CHECK(p.node(static_cast<Label>(l)).label == static_cast<Label>(l));
      seen.insert(p.node(static_cast<Label>(l)).label);
    }
    CHECK(seen.size() == p.size());
  }
}

TEST_CASE("unparse round-trips") {
  const char* samples[] = {
      "((lambda (x) x) (lambda (y) y))",
      "(if #f (lambda (x) x) (lambda (y) y))",
      "(set! x (lambda (y) y))",
      "(catch (throw #f) (lambda (e) e))",
      "(grant (p) (test (p q) (fail) callcc))",
      "(frame (p) #f)",
  };
  for (const char* s : samples) {
    Program p = parse_program(s);
    Program q = parse_program(p.unparse());
    CHECK(same_tree(p, q));
    CHECK(p.unparse() == q.unparse());
  }
}

TEST_CASE("annotate wraps lambda bodies and intersects grants") {
  PermSet universe = make_perm_set({"p"});

  Program lam = annotate(parse_program("(lambda (x) x)"), universe);
  CHECK(lam.unparse() == "(lambda (x) (frame (p) x))");

  Program grant = annotate(parse_program("(grant (p q) (fail))"), universe);
  CHECK(grant.unparse() == "(grant (p) (fail))");

  Program fail = annotate(parse_program("(fail)"), universe);
  CHECK(fail.unparse() == "(fail)");

  // Labels are reassigned and stay pre-order dense.
  Program nested = annotate(parse_program("(lambda (f) (lambda (x) (f (grant (q p) x))))"),
                            make_perm_set({"p", "q"}));
  for (std::size_t l = 0; l < nested.size(); l++)
    CHECK(nested.node(static_cast<Label>(l)).label == static_cast<Label>(l));
  Program reparsed = parse_program(nested.unparse());
  CHECK(same_tree(nested, reparsed));
}

TEST_CASE("permission set algebra") {
  PermSet a = make_perm_set({"p", "q", "p"});
  PermSet b = make_perm_set({"q", "r"});
  CHECK(a == PermSet{"p", "q"});
  CHECK(perm_union(a, b) == PermSet{"p", "q", "r"});
  CHECK(perm_intersect(a, b) == PermSet{"q"});
  CHECK(perm_minus(a, b) == PermSet{"p"});
  CHECK(!perm_disjoint(a, b));
  CHECK(perm_disjoint(PermSet{"p"}, PermSet{"r"}));
}
