#pragma once

// Syntax trees for terms, formulas and hybrid programs of the monitoring
// fragment of differential dynamic logic. All nodes are immutable and shared;
// rewriting always builds new trees.

#include <memory>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace hsmon {

struct TermNode;
struct FormulaNode;
struct ProgramNode;

using Term = std::shared_ptr<const TermNode>;
using Formula = std::shared_ptr<const FormulaNode>;
using Program = std::shared_ptr<const ProgramNode>;

/// Suffix used in concrete syntax and state keys for post-state variables.
inline constexpr const char* kPostSuffix = "_post";

/// A variable occurrence: plain `x` (pre-state) or `x_post` (post-state).
struct VarName {
  std::string name;
  bool post = false;

  /// Key into states and environments ("x" or "x_post").
  std::string key() const { return post ? name + kPostSuffix : name; }
  static VarName from_key(const std::string& key);

  friend bool operator==(const VarName&, const VarName&) = default;
  friend auto operator<=>(const VarName&, const VarName&) = default;
};

enum class TermKind { Var, Const, Plus, Minus, Times, Divide, Power, Neg, Min, Max, Func };

struct TermNode {
  TermKind kind;
  VarName var;       // Var
  double value = 0;  // Const
  int exponent = 0;  // Power
  std::string func;  // Func
  std::vector<Term> args;
};

enum class CmpOp { Lt, Le, Eq, Ge, Gt };

enum class FormulaKind {
  True, False, Compare, Not, And, Or, Implies, Equiv, Forall, Exists, Box, Diamond
};

struct FormulaNode {
  FormulaKind kind;
  CmpOp op = CmpOp::Eq;        // Compare
  Term lhs, rhs;               // Compare
  VarName var;                 // Forall, Exists
  Program program;             // Box, Diamond
  std::vector<Formula> kids;   // Not: 1, binary connectives: 2, quantifiers/modalities: 1
};

enum class ProgramKind { Assign, AssignAny, Test, Ode, Seq, Choice, Loop };

struct OdeEquation {
  std::string var;
  Term rhs;
};

struct ProgramNode {
  ProgramKind kind;
  std::string var;                 // Assign, AssignAny
  Term term;                       // Assign
  Formula formula;                 // Test; Ode: evolution domain
  std::vector<OdeEquation> ode;    // Ode
  std::vector<Program> kids;       // Seq, Choice: 2, Loop: 1
};

/// Raised for malformed trees passed to an operation (wrong shape, bad arity).
class SyntaxError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---- term construction -----------------------------------------------------

Term var(const std::string& name, bool post = false);
Term var(const VarName& v);
Term post_var(const std::string& name);
Term constant(double value);
Term plus(Term a, Term b);
Term minus(Term a, Term b);
Term times(Term a, Term b);
Term divide(Term a, Term b);
Term power(Term base, int exponent);
Term neg(Term a);
Term min_of(Term a, Term b);
Term max_of(Term a, Term b);
Term func(const std::string& name, std::vector<Term> args);

// ---- formula construction --------------------------------------------------

Formula f_true();
Formula f_false();
Formula compare(CmpOp op, Term lhs, Term rhs);
Formula lt(Term a, Term b);
Formula le(Term a, Term b);
Formula eq(Term a, Term b);
Formula ge(Term a, Term b);
Formula gt(Term a, Term b);
Formula f_not(Formula f);
Formula f_and(Formula a, Formula b);
Formula f_or(Formula a, Formula b);
Formula implies(Formula a, Formula b);
Formula equiv(Formula a, Formula b);
Formula forall(const VarName& v, Formula body);
Formula exists(const VarName& v, Formula body);
Formula box(Program p, Formula post);
Formula diamond(Program p, Formula post);

/// Conjunction of a list; the empty list is `true`.
Formula conjunction(const std::vector<Formula>& fs);
/// Disjunction of a list; the empty list is `false`.
Formula disjunction(const std::vector<Formula>& fs);

// ---- program construction --------------------------------------------------

Program assign(const std::string& x, Term e);
Program assign_any(const std::string& x);
Program test(Formula f);
Program ode(std::vector<OdeEquation> eqs, Formula domain);
Program seq(Program a, Program b);
Program choice(Program a, Program b);
Program loop(Program body);

/// Right-nested sequence of a non-empty list.
Program sequence(const std::vector<Program>& ps);
/// Flattens nested Seq nodes into their left-to-right components.
std::vector<Program> flatten_seq(const Program& p);

/// `x:=*; ?(c - r <= x & x <= c + r)`, the nondeterministic interval pick.
Program pick_in_interval(const std::string& x, Term center, Term radius);
/// `t:=0; {eqs, t'=1 & domain & t<=eps}; ?t=eps`, an ODE that runs for exactly eps.
Program plant_for_duration(std::vector<OdeEquation> eqs, Formula domain,
                           const std::string& clock, Term eps);

// ---- structural equality ---------------------------------------------------

bool equal(const Term& a, const Term& b);
bool equal(const Formula& a, const Formula& b);
bool equal(const Program& a, const Program& b);

/// Number of operator nodes, used for size reporting.
std::size_t size(const Formula& f);

const char* to_string(CmpOp op);
CmpOp flip(CmpOp op);     // a op b  <=>  b flip(op) a
CmpOp negate(CmpOp op);   // !(a op b) <=> a negate(op) b; undefined for Eq

}  // namespace hsmon
