#include "hsmon/eval.hpp"

#include <cmath>

namespace hsmon {

Env make_env(const State& s) {
  Env env;
  env.reserve(s.size());
  for (const auto& [k, v] : s) env[k] = v;
  return env;
}

Env make_env(const TransitionPair& pair) {
  Env env;
  env.reserve(pair.pre.size() + pair.post.size());
  for (const auto& [k, v] : pair.pre) env[k] = v;
  for (const auto& [k, v] : pair.post) env[k + kPostSuffix] = v;
  return env;
}

double lookup(const State& s, const std::string& name) {
  auto it = s.find(name);
  if (it == s.end()) throw EvalError("undeclared variable '" + name + "'");
  return it->second;
}

namespace {

double apply_function(const std::string& name, const std::vector<double>& a) {
  auto unary = [&](double (*fn)(double)) {
    if (a.size() != 1) throw EvalError(name + " expects one argument");
    return fn(a[0]);
  };
  if (name == "sin") return unary(std::sin);
  if (name == "cos") return unary(std::cos);
  if (name == "tan") return unary(std::tan);
  if (name == "exp") return unary(std::exp);
  if (name == "abs") return unary(std::fabs);
  if (name == "sqrt") {
    if (a.size() == 1 && a[0] < 0) throw EvalError("sqrt of negative value");
    return unary(std::sqrt);
  }
  if (name == "log") {
    if (a.size() == 1 && a[0] <= 0) throw EvalError("log of non-positive value");
    return unary(std::log);
  }
  throw EvalError("uninterpreted function '" + name + "'");
}

}  // namespace

double eval_term(const Term& t, const Env& env) {
  switch (t->kind) {
    case TermKind::Var: {
      auto it = env.find(t->var.key());
      if (it == env.end()) throw EvalError("undeclared variable '" + t->var.key() + "'");
      return it->second;
    }
    case TermKind::Const: return t->value;
    case TermKind::Plus: return eval_term(t->args[0], env) + eval_term(t->args[1], env);
    case TermKind::Minus: return eval_term(t->args[0], env) - eval_term(t->args[1], env);
    case TermKind::Times: return eval_term(t->args[0], env) * eval_term(t->args[1], env);
    case TermKind::Divide: {
      double d = eval_term(t->args[1], env);
      if (d == 0) throw EvalError("division by zero");
      return eval_term(t->args[0], env) / d;
    }
    case TermKind::Power: {
      double b = eval_term(t->args[0], env);
      if (t->exponent < 0 && b == 0) throw EvalError("division by zero");
      return std::pow(b, t->exponent);
    }
    case TermKind::Neg: return -eval_term(t->args[0], env);
    case TermKind::Min:
      return std::min(eval_term(t->args[0], env), eval_term(t->args[1], env));
    case TermKind::Max:
      return std::max(eval_term(t->args[0], env), eval_term(t->args[1], env));
    case TermKind::Func: {
      std::vector<double> a;
      a.reserve(t->args.size());
      for (const auto& x : t->args) a.push_back(eval_term(x, env));
      return apply_function(t->func, a);
    }
  }
  throw EvalError("bad term");
}

bool eval_formula(const Formula& f, const Env& env, double tol) {
  switch (f->kind) {
    case FormulaKind::True: return true;
    case FormulaKind::False: return false;
    case FormulaKind::Compare: {
      double l = eval_term(f->lhs, env);
      double r = eval_term(f->rhs, env);
      switch (f->op) {
        case CmpOp::Lt: return l < r;
        case CmpOp::Le: return l <= r;
        case CmpOp::Eq: return std::fabs(l - r) <= tol;
        case CmpOp::Ge: return l >= r;
        case CmpOp::Gt: return l > r;
      }
      return false;
    }
    case FormulaKind::Not: return !eval_formula(f->kids[0], env, tol);
    case FormulaKind::And:
      return eval_formula(f->kids[0], env, tol) && eval_formula(f->kids[1], env, tol);
    case FormulaKind::Or:
      return eval_formula(f->kids[0], env, tol) || eval_formula(f->kids[1], env, tol);
    case FormulaKind::Implies:
      return !eval_formula(f->kids[0], env, tol) || eval_formula(f->kids[1], env, tol);
    case FormulaKind::Equiv:
      return eval_formula(f->kids[0], env, tol) == eval_formula(f->kids[1], env, tol);
    case FormulaKind::Forall:
    case FormulaKind::Exists: throw EvalError("quantifier in quantifier-free evaluation");
    case FormulaKind::Box:
    case FormulaKind::Diamond: throw EvalError("modality in quantifier-free evaluation");
  }
  return false;
}

bool eval_formula(const Formula& f, const TransitionPair& pair, double tol) {
  return eval_formula(f, make_env(pair), tol);
}

namespace {

void collect_term(const Term& t, std::set<std::string>& out) {
  if (t->kind == TermKind::Var) out.insert(t->var.key());
  for (const auto& a : t->args) collect_term(a, out);
}

void collect_program_free(const Program& p, std::set<std::string>& out);

void collect_formula_free(const Formula& f, std::set<std::string>& out) {
  switch (f->kind) {
    case FormulaKind::Compare:
      collect_term(f->lhs, out);
      collect_term(f->rhs, out);
      return;
    case FormulaKind::Forall:
    case FormulaKind::Exists: {
      std::set<std::string> inner;
      collect_formula_free(f->kids[0], inner);
      inner.erase(f->var.key());
      out.insert(inner.begin(), inner.end());
      return;
    }
    case FormulaKind::Box:
    case FormulaKind::Diamond: {
      collect_program_free(f->program, out);
      std::set<std::string> post;
      collect_formula_free(f->kids[0], post);
      // Variables the program must have written are still reported: a
      // conservative superset keeps freshness checks safe.
      out.insert(post.begin(), post.end());
      return;
    }
    default:
      for (const auto& k : f->kids) collect_formula_free(k, out);
  }
}

void collect_program_free(const Program& p, std::set<std::string>& out) {
  switch (p->kind) {
    case ProgramKind::Assign: collect_term(p->term, out); return;
    case ProgramKind::AssignAny: return;
    case ProgramKind::Test: collect_formula_free(p->formula, out); return;
    case ProgramKind::Ode:
      for (const auto& e : p->ode) {
        out.insert(e.var);
        collect_term(e.rhs, out);
      }
      collect_formula_free(p->formula, out);
      return;
    default:
      for (const auto& k : p->kids) collect_program_free(k, out);
  }
}

void collect_bound(const Program& p, std::set<std::string>& out) {
  switch (p->kind) {
    case ProgramKind::Assign:
    case ProgramKind::AssignAny: out.insert(p->var); return;
    case ProgramKind::Test: return;
    case ProgramKind::Ode:
      for (const auto& e : p->ode) out.insert(e.var);
      return;
    default:
      for (const auto& k : p->kids) collect_bound(k, out);
  }
}

void collect_all_program(const Program& p, std::set<std::string>& out);

void collect_all(const Formula& f, std::set<std::string>& out) {
  if (f->kind == FormulaKind::Compare) {
    collect_term(f->lhs, out);
    collect_term(f->rhs, out);
  }
  if (f->kind == FormulaKind::Forall || f->kind == FormulaKind::Exists) out.insert(f->var.key());
  if (f->program) collect_all_program(f->program, out);
  for (const auto& k : f->kids) collect_all(k, out);
}

void collect_all_program(const Program& p, std::set<std::string>& out) {
  collect_program_free(p, out);
  collect_bound(p, out);
  if (p->formula) collect_all(p->formula, out);
  for (const auto& k : p->kids) collect_all_program(k, out);
}

}  // namespace

std::set<std::string> free_vars(const Term& t) {
  std::set<std::string> out;
  collect_term(t, out);
  return out;
}

std::set<std::string> free_vars(const Formula& f) {
  std::set<std::string> out;
  collect_formula_free(f, out);
  return out;
}

std::set<std::string> free_vars(const Program& p) {
  std::set<std::string> out;
  collect_program_free(p, out);
  return out;
}

std::set<std::string> bound_vars(const Program& p) {
  std::set<std::string> out;
  collect_bound(p, out);
  return out;
}

std::set<std::string> all_vars(const Formula& f) {
  std::set<std::string> out;
  collect_all(f, out);
  return out;
}

std::set<std::string> all_vars(const Program& p) {
  std::set<std::string> out;
  collect_all_program(p, out);
  return out;
}

bool quantifier_free(const Formula& f) {
  if (f->kind == FormulaKind::Forall || f->kind == FormulaKind::Exists) return false;
  if (f->program) return false;
  for (const auto& k : f->kids)
    if (!quantifier_free(k)) return false;
  return true;
}

bool modality_free(const Formula& f) {
  if (f->kind == FormulaKind::Box || f->kind == FormulaKind::Diamond) return false;
  for (const auto& k : f->kids)
    if (!modality_free(k)) return false;
  return true;
}

}  // namespace hsmon
