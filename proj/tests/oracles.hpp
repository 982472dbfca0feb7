#pragma once

// Independent deciders used to check qe-lite and the monitors.

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "hsmon/ast.hpp"
#include "hsmon/eval.hpp"
#include "hsmon/sim.hpp"

namespace oracle {

using namespace hsmon;

inline void atoms_of(const Formula& f, std::vector<Formula>& out) {
  if (f->kind == FormulaKind::Compare) out.push_back(f);
  for (const auto& k : f->kids) atoms_of(k, out);
}

/// Atoms not mentioning variables bound below the top; the others only set `opaque`.
inline void collect_atoms(const Formula& f, std::set<std::string> bound, std::vector<Formula>& out,
                          bool& opaque) {
  if (f->kind == FormulaKind::Compare) {
    for (const auto& v : free_vars(f))
      if (bound.contains(v)) {
        opaque = true;
        return;
      }
    out.push_back(f);
    return;
  }
  if (f->kind == FormulaKind::Exists || f->kind == FormulaKind::Forall) bound.insert(f->var.key());
  for (const auto& k : f->kids) collect_atoms(k, bound, out, opaque);
}

/// Decides quantifiers by enumerating the cells cut out by the atoms that
/// are affine in the bound variable (sampled at two points), plus a coarse
/// grid for everything else. Exact for bodies that are piecewise affine in
/// each bound variable.
inline bool decide(const Formula& f, Env& env, double tol = 1e-9) {
  switch (f->kind) {
    case FormulaKind::Not: return !decide(f->kids[0], env, tol);
    case FormulaKind::And: return decide(f->kids[0], env, tol) && decide(f->kids[1], env, tol);
    case FormulaKind::Or: return decide(f->kids[0], env, tol) || decide(f->kids[1], env, tol);
    case FormulaKind::Implies: return !decide(f->kids[0], env, tol) || decide(f->kids[1], env, tol);
    case FormulaKind::Equiv: return decide(f->kids[0], env, tol) == decide(f->kids[1], env, tol);
    case FormulaKind::Forall:
    case FormulaKind::Exists: {
      const std::string x = f->var.key();
      bool universal = f->kind == FormulaKind::Forall;
      std::vector<Formula> atoms;
      bool needs_grid = false;
      auto saved = env.find(x) != env.end() ? std::optional<double>(env[x]) : std::nullopt;
      collect_atoms(f->kids[0], {}, atoms, needs_grid);
      std::vector<double> roots;
      for (const auto& a : atoms) {
        try {
          auto g = [&](double v) {
            env[x] = v;
            return eval_term(a->lhs, env) - eval_term(a->rhs, env);
          };
          double g0 = g(0), g1 = g(1), g2 = g(2);
          if (std::fabs((g2 - g1) - (g1 - g0)) > 1e-9 * (1 + std::fabs(g1 - g0))) needs_grid = true;
          if (g1 != g0) {
            double r = -g0 / (g1 - g0);
            roots.push_back(r - g(r) / (g1 - g0));
          }
        } catch (const EvalError&) {
          needs_grid = true;
        }
      }
      std::vector<double> cands;
      for (double r : roots) {
        cands.push_back(r);
        double lo = r, hi = r;
        for (int k = 0; k < 4; ++k) {
          lo = std::nextafter(lo, -INFINITY);
          hi = std::nextafter(hi, INFINITY);
          cands.push_back(lo);
          cands.push_back(hi);
        }
        cands.push_back(r - 1e-5);
        cands.push_back(r + 1e-5);
      }
      std::sort(roots.begin(), roots.end());
      for (std::size_t i = 0; i + 1 < roots.size(); ++i) cands.push_back((roots[i] + roots[i + 1]) / 2);
      if (needs_grid)
        for (double g = -10; g <= 10; g += 0.25) cands.push_back(g);
      cands.push_back(1e7);
      cands.push_back(-1e7);
      bool result = universal;
      for (double c : cands) {
        env[x] = c;
        bool v;
        try {
          v = decide(f->kids[0], env, tol);
        } catch (const EvalError&) {
          continue;
        }
        if (!universal && v) {
          result = true;
          break;
        }
        if (universal && !v) {
          result = false;
          break;
        }
      }
      if (saved) {
        env[x] = *saved;
      } else {
        env.erase(x);
      }
      return result;
    }
    default: return eval_formula(f, env, tol);
  }
}

}  // namespace oracle

namespace oracle {

/// \exists x over a box plus random affine constraints in x, y, z.
struct FmInstance {
  Formula f;
  TransitionPair pair;
  Interval box;
};

inline FmInstance fm_instance(std::mt19937_64& rng, bool with_equalities = true) {
  auto real = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  auto pick = [&](int n) { return std::uniform_int_distribution<int>(0, n - 1)(rng); };
  double lo = std::round(real(-5, 0) * 4) / 4, hi = lo + std::round(real(0.25, 6) * 4) / 4;
  std::vector<Formula> lits{le(constant(lo), var("x")), le(var("x"), constant(hi))};
  int n = 1 + pick(3);
  static const CmpOp ops[] = {CmpOp::Lt, CmpOp::Le, CmpOp::Ge, CmpOp::Gt, CmpOp::Eq};
  for (int i = 0; i < n; ++i) {
    double a = pick(2) ? 1 + pick(3) : -1 - pick(3);
    Term lhs = plus(times(constant(a), var("x")),
                    plus(times(constant(pick(5) - 2), var("y")), var("z", pick(2) == 0)));
    CmpOp op = ops[pick(with_equalities ? 5 : 4)];
    lits.push_back(compare(op, lhs, constant(pick(7) - 3)));
  }
  FmInstance inst;
  inst.f = exists(VarName{"x", false}, conjunction(lits));
  inst.pair.pre = {{"y", real(-3, 3)}, {"z", real(-3, 3)}};
  inst.pair.post = {{"z", real(-3, 3)}};
  inst.box = {lo, hi};
  return inst;
}

/// Smallest |lhs - rhs| over the comparisons of a quantifier-free formula.
inline double min_margin(const Formula& f, const Env& env) {
  std::vector<Formula> atoms;
  atoms_of(f, atoms);
  double m = INFINITY;
  for (const auto& a : atoms) m = std::min(m, std::fabs(eval_term(a->lhs, env) - eval_term(a->rhs, env)));
  return m;
}

/// Whether an inequality of f outside any quantifier sits within 1e-9 of its boundary.
inline bool has_tie(const Formula& f, const Env& env) {
  if (f->kind == FormulaKind::Exists || f->kind == FormulaKind::Forall) return false;
  if (f->kind == FormulaKind::Compare) {
    if (f->op == CmpOp::Eq) return false;
    try {
      return std::fabs(eval_term(f->lhs, env) - eval_term(f->rhs, env)) < 1e-9;
    } catch (const EvalError&) {
      return false;
    }
  }
  for (const auto& k : f->kids)
    if (has_tie(k, env)) return true;
  return false;
}

}  // namespace oracle
