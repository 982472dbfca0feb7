#pragma once

// Term and formula rewriting shared by synthesis and evaluation:
// capture-avoiding substitution, arithmetic simplification, linear
// decomposition, negation and disjunctive normal forms.

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "hsmon/ast.hpp"

namespace hsmon {

/// Replacement map from variable keys ("x", "x_post") to terms.
using Substitution = std::map<std::string, Term>;

Term substitute(const Term& t, const Substitution& s);
/// Capture-avoiding: binders that would capture a replacement's free variable
/// are renamed. Modalities are rejected.
Formula substitute(const Formula& f, const Substitution& s);

/// `base` if unused, otherwise `base_1`, `base_2`, ...
std::string fresh_name(const std::string& base, const std::set<std::string>& avoid);

Term simplify(const Term& t);
/// Simplifies terms, folds ground comparisons and boolean constants.
Formula simplify(const Formula& f);

/// t == coeff * x + rest with coeff, rest free of x.
struct Linear {
  Term coeff;
  Term rest;
};
std::optional<Linear> linear_decompose(const Term& t, const std::string& x);

bool mentions(const Term& t, const std::string& key);
bool mentions(const Formula& f, const std::string& key);

/// Negation normal form over {Compare, !(a=b), And, Or, quantifiers}.
/// Implications and equivalences are expanded, negated comparisons flipped.
Formula nnf(const Formula& f);

/// Conjunctive components of a right- or left-nested And tree.
std::vector<Formula> conjuncts(const Formula& f);
std::vector<Formula> disjuncts(const Formula& f);

/// DNF of an NNF formula; literals are comparisons, negated equalities and
/// quantified subformulas (kept opaque).
std::vector<std::vector<Formula>> dnf(const Formula& f);
Formula from_dnf(const std::vector<std::vector<Formula>>& d);

}  // namespace hsmon
