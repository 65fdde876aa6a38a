#include "aam/syntax.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

namespace aam {

ParseError::ParseError(const std::string& msg, int line_, int col_)
    : std::runtime_error(msg + " (line " + std::to_string(line_) + ", column " +
                         std::to_string(col_) + ")"),
      line(line_),
      col(col_) {}

PermSet make_perm_set(std::vector<std::string> names) {
  std::sort(names.begin(), names.end());
  names.erase(std::unique(names.begin(), names.end()), names.end());
  return names;
}

PermSet perm_union(const PermSet& a, const PermSet& b) {
  PermSet out;
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

PermSet perm_intersect(const PermSet& a, const PermSet& b) {
  PermSet out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

PermSet perm_minus(const PermSet& a, const PermSet& b) {
  PermSet out;
  std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

bool perm_disjoint(const PermSet& a, const PermSet& b) {
  return perm_intersect(a, b).empty();
}

bool is_value_kind(ExprKind k) {
  return k == ExprKind::Lam || k == ExprKind::False || k == ExprKind::Callcc;
}

bool is_reserved_word(const std::string& s) {
  static const std::set<std::string> kReserved = {
      "if", "set!", "callcc", "throw", "catch", "fail",
      "grant", "test", "frame", "lambda"};
  return kReserved.count(s) != 0;
}

std::size_t Program::count(ExprKind k) const {
  std::size_t n = 0;
  for (const auto& node : nodes_)
    if (node.kind == k) n++;
  return n;
}

// ---------------------------------------------------------------------------
// Tokenizer

namespace {

struct Token {
  enum Kind { LParen, RParen, Symbol, HashF, End } kind;
  std::string text;
  int line;
  int col;
};

class Lexer {
 public:
  explicit Lexer(const std::string& src) : src_(src) {}

  Token next() {
    skip_ws();
    int line = line_, col = col_;
    if (pos_ >= src_.size()) return {Token::End, "", line, col};
    char c = src_[pos_];
    if (c == '(') {
      advance();
      return {Token::LParen, "(", line, col};
    }
    if (c == ')') {
      advance();
      return {Token::RParen, ")", line, col};
    }
    if (c == '#') {
      advance();
      if (pos_ < src_.size() && src_[pos_] == 'f') {
        advance();
        return {Token::HashF, "#f", line, col};
      }
      throw ParseError("expected #f", line, col);
    }
    std::string sym;
    while (pos_ < src_.size() && !std::isspace(static_cast<unsigned char>(src_[pos_])) &&
           src_[pos_] != '(' && src_[pos_] != ')' && src_[pos_] != ';') {
      sym += src_[pos_];
      advance();
    }
    if (sym.empty()) throw ParseError("unexpected character", line, col);
    return {Token::Symbol, sym, line, col};
  }

 private:
  void skip_ws() {
    while (pos_ < src_.size()) {
      char c = src_[pos_];
      if (c == ';') {  // comment to end of line
        while (pos_ < src_.size() && src_[pos_] != '\n') advance();
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        advance();
      } else {
        break;
      }
    }
  }

  void advance() {
    if (src_[pos_] == '\n') {
      line_++;
      col_ = 1;
    } else {
      col_++;
    }
    pos_++;
  }

  const std::string& src_;
  std::size_t pos_ = 0;
  int line_ = 1;
  int col_ = 1;
};

// S-expression tree, the intermediate form between tokens and labeled nodes.
struct SExpr {
  bool is_list = false;
  std::string atom;  // symbol text or "#f"
  bool hashf = false;
  std::vector<SExpr> items;
  int line = 1;
  int col = 1;
};

SExpr read_sexpr(Lexer& lx, const Token& first) {
  if (first.kind == Token::End) throw ParseError("unexpected end of input", first.line, first.col);
  if (first.kind == Token::RParen) throw ParseError("unexpected ')'", first.line, first.col);
  SExpr e;
  e.line = first.line;
  e.col = first.col;
  if (first.kind == Token::Symbol) {
    e.atom = first.text;
    return e;
  }
  if (first.kind == Token::HashF) {
    e.hashf = true;
    e.atom = "#f";
    return e;
  }
  e.is_list = true;
  for (;;) {
    Token t = lx.next();
    if (t.kind == Token::End) throw ParseError("missing ')'", first.line, first.col);
    if (t.kind == Token::RParen) break;
    e.items.push_back(read_sexpr(lx, t));
  }
  return e;
}

bool valid_identifier(const std::string& s) {
  if (s.empty() || s == "#f") return false;
  return !is_reserved_word(s);
}

PermSet parse_perm_set(const SExpr& e) {
  if (!e.is_list) throw ParseError("expected a literal permission set (p ...)", e.line, e.col);
  std::vector<std::string> names;
  for (const auto& item : e.items) {
    if (item.is_list || item.hashf)
      throw ParseError("permission sets may contain only identifiers", item.line, item.col);
    names.push_back(item.atom);
  }
  return make_perm_set(std::move(names));
}

class Parser {
 public:
  explicit Parser(ProgramBuilder& b) : b_(b) {}

  Label parse(const SExpr& e) {
    if (!e.is_list) return parse_atom(e);
    if (e.items.empty()) throw ParseError("empty application", e.line, e.col);

    const SExpr& head = e.items[0];
    // callcc is a constant, not a form: (callcc e) is an application
    if (!head.is_list && !head.hashf && head.atom != "callcc" && is_reserved_word(head.atom))
      return parse_form(head.atom, e);

    if (e.items.size() != 2)
      throw ParseError("application takes exactly one operand", e.line, e.col);
    Label l = b_.add(ExprKind::App);
    Label f = parse(e.items[0]);
    Label a = parse(e.items[1]);
    b_.set_children(l, {f, a});
    return l;
  }

 private:
  Label parse_atom(const SExpr& e) {
    if (e.hashf) return b_.add(ExprKind::False);
    if (e.atom == "callcc") return b_.add(ExprKind::Callcc);
    if (!valid_identifier(e.atom))
      throw ParseError("'" + e.atom + "' cannot be used as a variable", e.line, e.col);
    return b_.add(ExprKind::Ref, b_.intern_var(e.atom));
  }

  Label parse_form(const std::string& head, const SExpr& e) {
    auto expect = [&](std::size_t n) {
      if (e.items.size() != n + 1)
        throw ParseError("'" + head + "' takes " + std::to_string(n) + " arguments", e.line,
                         e.col);
    };
    if (head == "lambda") {
      expect(2);
      const SExpr& params = e.items[1];
      if (!params.is_list || params.items.size() != 1 || params.items[0].is_list ||
          params.items[0].hashf)
        throw ParseError("lambda takes a single parameter: (lambda (x) e)", e.line, e.col);
      const std::string& x = params.items[0].atom;
      if (!valid_identifier(x))
        throw ParseError("'" + x + "' cannot be used as a parameter", params.line, params.col);
      Label l = b_.add(ExprKind::Lam, b_.intern_var(x));
      Label body = parse(e.items[2]);
      b_.set_children(l, {body});
      return l;
    }
    if (head == "if") {
      expect(3);
      Label l = b_.add(ExprKind::If);
      Label c = parse(e.items[1]);
      Label t = parse(e.items[2]);
      Label f = parse(e.items[3]);
      b_.set_children(l, {c, t, f});
      return l;
    }
    if (head == "set!") {
      expect(2);
      const SExpr& x = e.items[1];
      if (x.is_list || x.hashf || !valid_identifier(x.atom))
        throw ParseError("set! expects a variable", x.line, x.col);
      Label l = b_.add(ExprKind::SetBang, b_.intern_var(x.atom));
      Label v = parse(e.items[2]);
      b_.set_children(l, {v});
      return l;
    }
    if (head == "throw") {
      expect(1);
      Label l = b_.add(ExprKind::Throw);
      Label v = parse(e.items[1]);
      b_.set_children(l, {v});
      return l;
    }
    if (head == "catch") {
      expect(2);
      Label l = b_.add(ExprKind::Catch);
      Label body = parse(e.items[1]);
      const SExpr& h = e.items[2];
      if (!h.is_list || h.items.empty() || h.items[0].is_list || h.items[0].atom != "lambda")
        throw ParseError("catch handler must be a lambda", e.line, e.col);
      Label handler = parse(h);
      b_.set_children(l, {body, handler});
      return l;
    }
    if (head == "fail") {
      expect(0);
      return b_.add(ExprKind::Fail);
    }
    if (head == "grant" || head == "frame") {
      expect(2);
      PermSet ps = parse_perm_set(e.items[1]);
      Label l = b_.add(head == "grant" ? ExprKind::Grant : ExprKind::Frame, 0, std::move(ps));
      Label body = parse(e.items[2]);
      b_.set_children(l, {body});
      return l;
    }
    if (head == "test") {
      expect(3);
      PermSet ps = parse_perm_set(e.items[1]);
      Label l = b_.add(ExprKind::Test, 0, std::move(ps));
      Label t = parse(e.items[2]);
      Label f = parse(e.items[3]);
      b_.set_children(l, {t, f});
      return l;
    }
    throw ParseError("'" + head + "' form is not valid here", e.line, e.col);
  }

  ProgramBuilder& b_;
};

void collect_fv(const std::vector<ExprNode>& nodes, Label l,
                std::vector<std::vector<VarId>>& fv) {
  const ExprNode& n = nodes[l];
  for (Label c : n.children) collect_fv(nodes, c, fv);
  std::set<VarId> s;
  switch (n.kind) {
    case ExprKind::Ref:
      s.insert(n.var);
      break;
    case ExprKind::Lam: {
      for (VarId v : fv[n.children[0]])
        if (v != n.var) s.insert(v);
      break;
    }
    case ExprKind::SetBang:
      s.insert(n.var);
      s.insert(fv[n.children[0]].begin(), fv[n.children[0]].end());
      break;
    default:
      for (Label c : n.children) s.insert(fv[c].begin(), fv[c].end());
      break;
  }
  fv[l].assign(s.begin(), s.end());
}

}  // namespace

// ---------------------------------------------------------------------------
// ProgramBuilder

Label ProgramBuilder::add(ExprKind kind, VarId var, PermSet perms) {
  ExprNode n;
  n.kind = kind;
  n.label = static_cast<Label>(p_.nodes_.size());
  n.var = var;
  p_.perms_seen_ = perm_union(p_.perms_seen_, perms);
  n.perms = std::move(perms);
  p_.nodes_.push_back(std::move(n));
  return p_.nodes_.back().label;
}

void ProgramBuilder::set_children(Label l, std::vector<Label> children) {
  for (Label c : children) p_.nodes_[c].parent = l;
  p_.nodes_[l].children = std::move(children);
}

VarId ProgramBuilder::intern_var(const std::string& name) {
  auto it = p_.var_ids_.find(name);
  if (it != p_.var_ids_.end()) return it->second;
  VarId id = static_cast<VarId>(p_.var_names_.size());
  p_.var_names_.push_back(name);
  p_.var_ids_.emplace(name, id);
  return id;
}

Program ProgramBuilder::finish(Label root) {
  p_.root_ = root;
  p_.fv_.assign(p_.nodes_.size(), {});
  collect_fv(p_.nodes_, root, p_.fv_);
  return std::move(p_);
}

// ---------------------------------------------------------------------------

Program parse_program(const std::string& text) {
  Lexer lx(text);
  Token t = lx.next();
  if (t.kind == Token::End) throw ParseError("empty program", t.line, t.col);
  SExpr tree = read_sexpr(lx, t);
  Token rest = lx.next();
  if (rest.kind != Token::End)
    throw ParseError("trailing input after program", rest.line, rest.col);

  ProgramBuilder b;
  Parser parser(b);
  Label root = parser.parse(tree);
  Program p = b.finish(root);

  // (throw e) is restricted to syntactic value forms.
  for (std::size_t l = 0; l < p.size(); l++) {
    const ExprNode& n = p.node(static_cast<Label>(l));
    if (n.kind == ExprKind::Throw && !is_value_kind(p.node(n.children[0]).kind))
      throw ParseError("throw expects a value form (lambda, #f, or callcc)", 1, 1);
  }
  return p;
}

std::string Program::unparse(Label l) const {
  const ExprNode& n = node(l);
  auto perms_text = [](const PermSet& ps) {
    std::string s = "(";
    for (std::size_t i = 0; i < ps.size(); i++) {
      if (i) s += " ";
      s += ps[i];
    }
    return s + ")";
  };
  switch (n.kind) {
    case ExprKind::Ref:
      return var_name(n.var);
    case ExprKind::App:
      return "(" + unparse(n.children[0]) + " " + unparse(n.children[1]) + ")";
    case ExprKind::Lam:
      return "(lambda (" + var_name(n.var) + ") " + unparse(n.children[0]) + ")";
    case ExprKind::If:
      return "(if " + unparse(n.children[0]) + " " + unparse(n.children[1]) + " " +
             unparse(n.children[2]) + ")";
    case ExprKind::SetBang:
      return "(set! " + var_name(n.var) + " " + unparse(n.children[0]) + ")";
    case ExprKind::Throw:
      return "(throw " + unparse(n.children[0]) + ")";
    case ExprKind::Catch:
      return "(catch " + unparse(n.children[0]) + " " + unparse(n.children[1]) + ")";
    case ExprKind::Fail:
      return "(fail)";
    case ExprKind::Grant:
      return "(grant " + perms_text(n.perms) + " " + unparse(n.children[0]) + ")";
    case ExprKind::Test:
      return "(test " + perms_text(n.perms) + " " + unparse(n.children[0]) + " " +
             unparse(n.children[1]) + ")";
    case ExprKind::Frame:
      return "(frame " + perms_text(n.perms) + " " + unparse(n.children[0]) + ")";
    case ExprKind::False:
      return "#f";
    case ExprKind::Callcc:
      return "callcc";
  }
  throw Error("unreachable expression kind");
}

namespace {

// Rebuilds the tree in pre-order while applying the annotation rewrites.
Label annotate_rec(const Program& p, Label l, const PermSet& universe, ProgramBuilder& b) {
  const ExprNode& n = p.node(l);
  VarId var = 0;
  if (n.kind == ExprKind::Ref || n.kind == ExprKind::Lam || n.kind == ExprKind::SetBang)
    var = b.intern_var(p.var_name(n.var));

  if (n.kind == ExprKind::Lam) {
    Label lam = b.add(ExprKind::Lam, var);
    Label fr = b.add(ExprKind::Frame, 0, universe);
    Label body = annotate_rec(p, n.children[0], universe, b);
    b.set_children(fr, {body});
    b.set_children(lam, {fr});
    return lam;
  }
  if (n.kind == ExprKind::Grant) {
    Label g = b.add(ExprKind::Grant, 0, perm_intersect(n.perms, universe));
    Label body = annotate_rec(p, n.children[0], universe, b);
    b.set_children(g, {body});
    return g;
  }
  Label out = b.add(n.kind, var, n.perms);
  std::vector<Label> kids;
  for (Label c : n.children) kids.push_back(annotate_rec(p, c, universe, b));
  b.set_children(out, std::move(kids));
  return out;
}

}  // namespace

Program annotate(const Program& p, const PermSet& universe) {
  ProgramBuilder b;
  Label root = annotate_rec(p, p.root(), universe, b);
  return b.finish(root);
}

namespace {

bool same_tree_rec(const Program& a, Label la, const Program& b, Label lb) {
  const ExprNode& na = a.node(la);
  const ExprNode& nb = b.node(lb);
  if (na.kind != nb.kind || na.perms != nb.perms) return false;
  if ((na.kind == ExprKind::Ref || na.kind == ExprKind::Lam || na.kind == ExprKind::SetBang) &&
      a.var_name(na.var) != b.var_name(nb.var))
    return false;
  if (na.children.size() != nb.children.size()) return false;
  for (std::size_t i = 0; i < na.children.size(); i++)
    if (!same_tree_rec(a, na.children[i], b, nb.children[i])) return false;
  return true;
}

}  // namespace

bool same_tree(const Program& a, const Program& b) {
  return same_tree_rec(a, a.root(), b, b.root());
}

}  // namespace aam
