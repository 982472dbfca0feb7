#pragma once

// Turning modal monitor characterizations into arithmetic.
//
// Pipeline: modality elimination, simplification, DNF preprocessing
// (pushing existentials through disjunctions and past conjuncts that do not
// mention them), post-state instantiation, Fourier-Motzkin for linear
// existentials. Whatever remains is a bounded existential decided at runtime
// by witness search.

#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "hsmon/ast.hpp"
#include "hsmon/eval.hpp"
#include "hsmon/sim.hpp"

namespace hsmon {

enum class QeMethod { Opt1, ExistsSplit, ExistsHoist, FourierMotzkin, WitnessSearch };

const char* to_string(QeMethod m);

struct RuleApplication {
  std::string rule;      // "diamond-choice", "opt1", "exists-split", "fourier-motzkin", ...
  std::string variable;  // quantified variable or assigned variable, if any
  std::string result;    // printed formula after the step (synthesize only)
};

using RuleTrace = std::vector<RuleApplication>;

struct SynthesisReport {
  Formula input;
  Formula output;
  std::size_t residual_quantifiers = 0;
  /// Method that removed (or will decide) each quantifier, in order of application.
  std::vector<std::pair<std::string, QeMethod>> methods;
  RuleTrace trace;
};

/// <a ++ b>G, <a;b>G, <x:=e>G, <x:=*>G, <?H>G rewritten into first-order
/// arithmetic. ODEs, loops and box modalities are rejected with SyntaxError.
Formula eliminate_modalities(const Formula& f, RuleTrace* trace = nullptr);

/// \exists x (... & x_post=x & ...)  to  (...)[x := x_post].
Formula opt1_instantiate(const Formula& f, RuleTrace* trace = nullptr);

/// NNF, then every \exists x over a DNF body is split per disjunct and
/// conjuncts not mentioning x are moved outside.
Formula dnf_preprocess(const Formula& f, RuleTrace* trace = nullptr);

/// Eliminates \exists x over conjunctions linear in x whose coefficients have
/// a provable sign; equalities are solved by substitution first. In strict mode
/// an ineligible existential raises SyntaxError, otherwise it is kept.
Formula fourier_motzkin(const Formula& f, RuleTrace* trace = nullptr, bool strict = true);

SynthesisReport synthesize(const Formula& f);

/// Number of quantifiers (not nested under modalities).
std::size_t count_quantifiers(const Formula& f);

// ---- runtime decision ---------------------------------------------------------

struct SearchConfig {
  double tolerance = 1e-9;
  int grid = 101;
  /// Inequalities accept violations up to `slack` (a<=b as a<=b+slack).
  double slack = 0;
};

using Witness = std::map<std::string, double>;

/// Decides formulas with existentials (and universals as their duals) at a
/// concrete environment. Linear constraints on the quantified variable are
/// solved exactly into an interval; other constraints are searched on a grid
/// over that interval with local refinement. Raises EvalError when such a
/// search would range over an unbounded interval.
class Decider {
 public:
  explicit Decider(SearchConfig cfg = {}) : cfg_(cfg) {}

  bool decide(const Formula& f, Env& env, Witness* witness = nullptr);
  const SearchConfig& config() const { return cfg_; }

 private:
  struct Bound {
    Term coeff, rest;
    CmpOp op;
  };
  struct Clause {
    std::vector<Bound> linear;
    std::vector<Formula> other;
  };
  struct Compiled {
    Formula keep_alive;
    std::vector<Clause> clauses;
  };

  const Compiled& compile(const Formula& ex);
  bool exists(const Formula& ex, Env& env, Witness* witness);
  bool search_clause(const std::string& x, const Clause& c, Env& env, Witness* witness);
  double violation(const std::vector<Formula>& lits, Env& env);

  SearchConfig cfg_;
  std::unordered_map<const FormulaNode*, Compiled> cache_;
  std::unordered_map<const FormulaNode*, std::pair<Formula, Formula>> negations_;  // key kept alive
};

/// Grid search for f = \exists x1 ... \exists xk G with G quantifier-free:
/// `grid` points per variable over the given bounds, then one local
/// refinement around the least-violating point. Variables without bounds
/// raise EvalError.
bool witness_search(const Formula& f, const TransitionPair& pair,
                    const std::map<std::string, Interval>& bounds, int grid, double tol,
                    Witness* witness = nullptr);

}  // namespace hsmon
