#pragma once

// Shared test corpus: closed terms for the machine tower, plus a seeded
// random generator of closed pure terms for property tests.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace corpus {

// Church encodings used to build arithmetic-flavored programs.
inline const char* kZero = "(lambda (f) (lambda (x) x))";
inline const char* kOne = "(lambda (f) (lambda (x) (f x)))";
inline const char* kTwo = "(lambda (f) (lambda (x) (f (f x))))";
inline const char* kThree = "(lambda (f) (lambda (x) (f (f (f x)))))";
inline const char* kSucc = "(lambda (n) (lambda (f) (lambda (x) (f ((n f) x)))))";
inline const char* kPlus = "(lambda (m) (lambda (n) (lambda (f) (lambda (x) ((m f) ((n f) x))))))";
inline const char* kMult = "(lambda (m) (lambda (n) (lambda (f) (m (n f)))))";
inline const char* kOmega = "((lambda (x) (x x)) (lambda (x) (x x)))";
// call-by-value fixed point combinator (eta-expanded)
inline const char* kZComb =
    "(lambda (f) ((lambda (x) (f (lambda (v) ((x x) v)))) (lambda (x) (f (lambda (v) ((x x) "
    "v))))))";
// the classic non-eta-expanded version, divergent under call-by-value
inline const char* kYComb =
    "(lambda (f) ((lambda (x) (f (x x))) (lambda (x) (f (x x)))))";

inline std::string app(const std::string& a, const std::string& b) {
  return "(" + a + " " + b + ")";
}

// Closed pure lambda terms: identity chains, combinator plumbing, Church
// arithmetic, and divergent self-applications.
inline std::vector<std::string> pure_terms() {
  const std::string id = "(lambda (i) i)";
  const std::string k_comb = "(lambda (a) (lambda (b) a))";
  std::vector<std::string> t;
  // identity chains
  t.push_back("(lambda (x) x)");
  t.push_back(app(id, "(lambda (y) y)"));
  t.push_back(app(id, app(id, id)));
  t.push_back(app(app(id, id), id));
  t.push_back(app(app(id, id), app(id, id)));
  t.push_back(app(id, app(id, app(id, app(id, id)))));
  // K combinator plumbing
  t.push_back(app(app(k_comb, id), "(lambda (z) (z z))"));
  t.push_back(app(app(k_comb, k_comb), id));
  t.push_back(app(app(app(k_comb, id), id), id));
  // self application that terminates
  t.push_back(app("(lambda (x) (x x))", id));
  t.push_back(app("(lambda (x) ((x x) x))", id));
  t.push_back(app("(lambda (f) (f (f (lambda (u) u))))", id));
  // shadowing and nesting
  t.push_back(app("(lambda (x) ((lambda (x) x) x))", id));
  t.push_back(app("(lambda (x) (lambda (y) x))", id));
  t.push_back(app(app("(lambda (x) (lambda (y) (y x)))", id), id));
  t.push_back(app("(lambda (g) ((lambda (h) (h (h g))) (lambda (w) w)))", id));
  // Church numerals: application to identities normalizes the encodings
  t.push_back(app(app(kTwo, id), id));
  t.push_back(app(app(kThree, id), id));
  t.push_back(app(app(app(kSucc, kOne), id), id));
  t.push_back(app(app(app(kSucc, app(kSucc, kZero)), id), id));
  t.push_back(app(app(app(app(kPlus, kOne), kTwo), id), id));
  t.push_back(app(app(app(app(kPlus, kTwo), kTwo), id), id));
  t.push_back(app(app(app(app(kMult, kTwo), kTwo), id), id));
  t.push_back(app(app(app(app(kMult, kTwo), kThree), id), id));
  t.push_back(app(app(app(app(kPlus, kZero), kThree), id), id));
  t.push_back(app(app(kTwo, kTwo), id));  // exponentiation by application
  // divergent terms (finite abstractions, fuel-bounded concrete runs)
  t.push_back(kOmega);
  t.push_back("((lambda (x) (x x)) (lambda (y) (y y)))");
  t.push_back("((lambda (x) (x (x x))) (lambda (y) (y y)))");
  t.push_back(app(kYComb, "(lambda (g) g)"));
  t.push_back(app(kYComb, k_comb));
  // fixed-point combinator runs that terminate
  t.push_back(app(kZComb, "(lambda (r) (lambda (x) x))"));
  t.push_back(app(app(kZComb, "(lambda (r) (lambda (x) x))"), id));
  t.push_back(app("(lambda (f) ((lambda (x) (f (lambda (v) ((x x) v)))) (lambda (x) (f (lambda "
                  "(v) ((x x) v))))))",
                  "(lambda (r) (lambda (n) n))"));
  return t;
}

// Terms using conditionals, mutation and first-class control.
inline std::vector<std::string> extended_terms() {
  std::vector<std::string> t;
  t.push_back("(if #f (lambda (x) x) (lambda (y) y))");
  t.push_back("(if (lambda (z) z) (lambda (x) x) (lambda (y) y))");
  t.push_back("((lambda (b) (if b b (lambda (n) n))) #f)");
  t.push_back("((lambda (x) (if x (x x) x)) (lambda (v) #f))");
  t.push_back("((lambda (x) (set! x (lambda (y) y))) (lambda (z) z))");
  t.push_back("((lambda (x) ((lambda (u) (x x)) (set! x (lambda (y) y)))) (lambda (z) (z z)))");
  t.push_back("((lambda (x) (if (set! x #f) (x x) x)) (lambda (z) z))");
  t.push_back("(callcc (lambda (k) (k (lambda (y) y))))");
  t.push_back("(callcc (lambda (k) (lambda (y) y)))");
  t.push_back("((callcc (lambda (k) (lambda (x) x))) (lambda (z) z))");
  t.push_back("((lambda (f) (callcc (lambda (k) (f k)))) (lambda (c) (c (lambda (w) w))))");
  t.push_back("((lambda (x) x) (if #f #f (lambda (y) y)))");
  return t;
}

// Terms raising and catching exceptions.
inline std::vector<std::string> exception_terms() {
  std::vector<std::string> t;
  t.push_back("(catch (throw (lambda (y) y)) (lambda (x) x))");
  t.push_back("(catch (lambda (y) y) (lambda (x) x))");
  t.push_back("(throw (lambda (y) y))");
  t.push_back("(catch ((lambda (u) (throw #f)) (lambda (z) z)) (lambda (e) (lambda (d) e)))");
  t.push_back("(catch (catch (throw (lambda (a) a)) (lambda (x) (throw (lambda (b) b)))) (lambda (y) y))");
  t.push_back("(catch (catch (lambda (v) v) (lambda (x) x)) (lambda (y) y))");
  t.push_back("((lambda (f) (catch (f (lambda (q) q)) (lambda (h) h))) (lambda (x) (throw (lambda (r) r))))");
  t.push_back("(catch (if #f (lambda (x) x) (throw (lambda (w) w))) (lambda (e) e))");
  return t;
}

// Stack-inspection terms (permission universe {p, q}).
inline std::vector<std::string> security_terms() {
  std::vector<std::string> t;
  t.push_back("(grant (p) (test (p) (lambda (a) a) (fail)))");
  t.push_back("(test (p) (fail) (lambda (b) b))");
  t.push_back("(frame (q) (test (p) (fail) (lambda (b) b)))");
  t.push_back("(frame (p) (test (p) (lambda (a) a) (fail)))");
  t.push_back("(grant (p) (frame (q) (test (p) (fail) (lambda (a) a))))");
  t.push_back("(grant (q) ((lambda (x) (test (q) x (fail))) (lambda (y) y)))");
  t.push_back("((lambda (f) (grant (p) (f (lambda (u) u)))) (lambda (x) (test (p) x (fail))))");
  t.push_back("(fail)");
  t.push_back("(grant (p q) (test (p q) (lambda (a) a) (fail)))");
  return t;
}

// ---------------------------------------------------------------------------
// Random closed pure terms.

class TermGen {
 public:
  explicit TermGen(std::uint64_t seed) : rng_(seed) {}

  std::string closed_term(int max_depth = 6) { return gen(max_depth, 0); }

 private:
  std::string var_name(int i) { return "v" + std::to_string(i); }

  std::string gen(int depth, int scope) {
    // choose: var (when in scope), lambda, application
    int roll = static_cast<int>(rng_() % 100);
    if (scope > 0 && (depth <= 0 || roll < 35))
      return var_name(static_cast<int>(rng_() % static_cast<std::uint64_t>(scope)));
    if (depth <= 0 || roll < 70) {
      std::string body = gen(depth - 1, scope + 1);
      return "(lambda (" + var_name(scope) + ") " + body + ")";
    }
    return "(" + gen(depth - 1, scope) + " " + gen(depth - 1, scope) + ")";
  }

  std::mt19937_64 rng_;
};

}  // namespace corpus
