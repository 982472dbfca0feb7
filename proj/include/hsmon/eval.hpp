#pragma once

// States, transition pairs and quantifier-free evaluation.
//
// A transition pair (pre, post) is flattened into one environment in which
// `x` reads pre(x) and `x_post` reads post(x).

#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>

#include "hsmon/ast.hpp"

namespace hsmon {

class EvalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using State = std::map<std::string, double>;

struct TransitionPair {
  State pre;
  State post;
};

using Env = std::unordered_map<std::string, double>;

Env make_env(const State& s);
Env make_env(const TransitionPair& pair);

/// Value of `name` in `s`; undeclared names raise EvalError.
double lookup(const State& s, const std::string& name);

double eval_term(const Term& t, const Env& env);

/// Quantifier- and modality-free formulas only. `=` holds when |lhs-rhs| <= tol,
/// all other comparisons are exact.
bool eval_formula(const Formula& f, const Env& env, double tol);
bool eval_formula(const Formula& f, const TransitionPair& pair, double tol);

/// Keys ("x", "x_post") of variables occurring free.
std::set<std::string> free_vars(const Term& t);
std::set<std::string> free_vars(const Formula& f);
/// Every variable a program reads anywhere (tests, right-hand sides, ODE states).
std::set<std::string> free_vars(const Program& p);
/// Every variable a program may write; ODEs bind all their left-hand sides.
std::set<std::string> bound_vars(const Program& p);

/// All variable keys mentioned anywhere, bound or free, programs included.
std::set<std::string> all_vars(const Formula& f);
std::set<std::string> all_vars(const Program& p);

bool quantifier_free(const Formula& f);
bool modality_free(const Formula& f);

}  // namespace hsmon
