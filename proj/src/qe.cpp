#include "hsmon/qe.hpp"

#include <cmath>
#include <limits>

#include "hsmon/rewrite.hpp"
#include "hsmon/syntax.hpp"

namespace hsmon {

const char* to_string(QeMethod m) {
  switch (m) {
    case QeMethod::Opt1: return "opt1";
    case QeMethod::ExistsSplit: return "exists-split";
    case QeMethod::ExistsHoist: return "exists-hoist";
    case QeMethod::FourierMotzkin: return "fourier-motzkin";
    case QeMethod::WitnessSearch: return "witness-search";
  }
  return "?";
}

namespace {

void note(RuleTrace* trace, std::string rule, std::string var = {}) {
  if (trace) trace->push_back({std::move(rule), std::move(var), {}});
}

Formula rebuild(const Formula& f, std::vector<Formula> kids) {
  switch (f->kind) {
    case FormulaKind::Not: return f_not(kids[0]);
    case FormulaKind::And: return f_and(kids[0], kids[1]);
    case FormulaKind::Or: return f_or(kids[0], kids[1]);
    case FormulaKind::Implies: return implies(kids[0], kids[1]);
    case FormulaKind::Equiv: return equiv(kids[0], kids[1]);
    case FormulaKind::Forall: return forall(f->var, kids[0]);
    case FormulaKind::Exists: return exists(f->var, kids[0]);
    case FormulaKind::Box: return box(f->program, kids[0]);
    case FormulaKind::Diamond: return diamond(f->program, kids[0]);
    default: return f;
  }
}

/// Applies `on_exists` bottom-up to every existential.
template <typename Fn>
Formula map_exists(const Formula& f, Fn&& on_exists) {
  if (f->kids.empty()) return f;
  std::vector<Formula> kids;
  kids.reserve(f->kids.size());
  for (const auto& k : f->kids) kids.push_back(map_exists(k, on_exists));
  Formula g = rebuild(f, std::move(kids));
  if (g->kind == FormulaKind::Exists) return on_exists(g);
  return g;
}

// ---- modality elimination ----------------------------------------------------

Formula diamond_of(const Program& p, const Formula& post, RuleTrace* trace);

Formula eliminate(const Formula& f, RuleTrace* trace) {
  switch (f->kind) {
    case FormulaKind::Box: throw SyntaxError("box modality in monitor synthesis");
    case FormulaKind::Diamond: return diamond_of(f->program, eliminate(f->kids[0], trace), trace);
    default: {
      if (f->kids.empty()) return f;
      std::vector<Formula> kids;
      for (const auto& k : f->kids) kids.push_back(eliminate(k, trace));
      return rebuild(f, std::move(kids));
    }
  }
}

Formula diamond_of(const Program& p, const Formula& post, RuleTrace* trace) {
  switch (p->kind) {
    case ProgramKind::Choice:
      note(trace, "diamond-choice");
      return f_or(diamond_of(p->kids[0], post, trace), diamond_of(p->kids[1], post, trace));
    case ProgramKind::Seq:
      note(trace, "diamond-seq");
      return diamond_of(p->kids[0], diamond_of(p->kids[1], post, trace), trace);
    case ProgramKind::Assign:
      note(trace, "diamond-assign", p->var);
      return substitute(post, Substitution{{p->var, p->term}});
    case ProgramKind::AssignAny:
      note(trace, "diamond-assign-any", p->var);
      return exists(VarName{p->var, false}, post);
    case ProgramKind::Test: {
      note(trace, "diamond-test");
      Formula h = eliminate(p->formula, trace);
      if (h->kind == FormulaKind::True) return post;
      return f_and(h, post);
    }
    case ProgramKind::Ode:
      throw SyntaxError("raw ODE in monitor synthesis; overapproximate the plant first");
    case ProgramKind::Loop: throw SyntaxError("loop in monitor synthesis; monitor the loop body");
  }
  return post;
}

// ---- DNF preprocessing ---------------------------------------------------------

Formula preprocess(const Formula& f, RuleTrace* trace) {
  switch (f->kind) {
    case FormulaKind::And: return f_and(preprocess(f->kids[0], trace), preprocess(f->kids[1], trace));
    case FormulaKind::Or: return f_or(preprocess(f->kids[0], trace), preprocess(f->kids[1], trace));
    case FormulaKind::Forall: return forall(f->var, preprocess(f->kids[0], trace));
    case FormulaKind::Exists: {
      const std::string x = f->var.key();
      Formula body = simplify(preprocess(f->kids[0], trace));
      auto clauses = dnf(body);
      if (clauses.size() > 1) note(trace, "exists-split", x);
      std::vector<Formula> parts;
      for (const auto& c : clauses) {
        std::vector<Formula> with, without;
        for (const auto& lit : c) (mentions(lit, x) ? with : without).push_back(lit);
        if (!without.empty() || with.empty()) note(trace, "exists-hoist", x);
        if (with.empty()) {
          parts.push_back(conjunction(without));
        } else if (without.empty()) {
          parts.push_back(exists(f->var, conjunction(with)));
        } else {
          parts.push_back(f_and(conjunction(without), exists(f->var, conjunction(with))));
        }
      }
      return disjunction(parts);
    }
    default: return f;
  }
}

// ---- Fourier-Motzkin -----------------------------------------------------------

struct LinearLiteral {
  int sign;  // of the coefficient
  Term coeff, rest;
  CmpOp op;
};

/// +1 or -1 if t is provably positive or negative, 2 if provably >= 0, 0 otherwise.
int sign_of(const Term& t) {
  switch (t->kind) {
    case TermKind::Const: return t->value > 0 ? 1 : t->value < 0 ? -1 : 0;
    case TermKind::Neg: {
      int s = sign_of(t->args[0]);
      return s == 1 || s == -1 ? -s : 0;
    }
    case TermKind::Power: {
      int s = sign_of(t->args[0]);
      if (t->exponent == 0) return 1;
      if (s == 1) return 1;
      if (s == -1) return t->exponent % 2 == 0 ? 1 : -1;
      return t->exponent % 2 == 0 ? 2 : 0;
    }
    case TermKind::Plus: {
      int a = sign_of(t->args[0]), b = sign_of(t->args[1]);
      if ((a == 1 && (b == 1 || b == 2)) || (b == 1 && a == 2)) return 1;
      if (a == -1 && b == -1) return -1;
      if (a == 2 && b == 2) return 2;
      return 0;
    }
    case TermKind::Times:
    case TermKind::Divide: {
      int a = sign_of(t->args[0]), b = sign_of(t->args[1]);
      if ((a == 1 || a == -1) && (b == 1 || b == -1)) return a * b;
      return 0;
    }
    case TermKind::Func:
      if (t->func == "exp") return 1;
      if (t->func == "abs" || t->func == "sqrt") return 2;
      return 0;
    default: return 0;
  }
}

std::optional<LinearLiteral> numeric_linear(const Formula& lit, const std::string& x) {
  if (lit->kind != FormulaKind::Compare) return std::nullopt;
  auto d = linear_decompose(minus(lit->lhs, lit->rhs), x);
  if (!d) return std::nullopt;
  Term c = simplify(d->coeff);
  int s = sign_of(c);
  if (s != 1 && s != -1) return std::nullopt;
  return LinearLiteral{s, c, d->rest, lit->op};
}

Formula eliminate_linear(const Formula& ex, RuleTrace* trace, bool strict) {
  const std::string x = ex->var.key();
  std::vector<Formula> cs = conjuncts(ex->kids[0]);

  for (std::size_t i = 0; i < cs.size(); ++i) {
    if (cs[i]->kind != FormulaKind::Compare || cs[i]->op != CmpOp::Eq) continue;
    auto lin = numeric_linear(cs[i], x);
    if (!lin) continue;
    Term solution = simplify(divide(neg(lin->rest), lin->coeff));
    std::vector<Formula> rest;
    for (std::size_t j = 0; j < cs.size(); ++j)
      if (j != i) rest.push_back(cs[j]);
    note(trace, "fourier-motzkin", x);
    return simplify(substitute(conjunction(rest), Substitution{{x, solution}}));
  }

  std::vector<Formula> keep;
  std::vector<std::pair<Term, bool>> lower, upper;  // bound, strict
  for (const auto& c : cs) {
    if (!mentions(c, x)) {
      keep.push_back(c);
      continue;
    }
    auto lin = numeric_linear(c, x);
    if (!lin || lin->op == CmpOp::Eq) {
      if (strict) {
        bool linear = c->kind == FormulaKind::Compare &&
                      linear_decompose(minus(c->lhs, c->rhs), x).has_value();
        throw SyntaxError(std::string(linear ? "sign-ambiguous coefficient of "
                                             : "constraint not linear in ") +
                          x + ": " + to_string(c));
      }
      return ex;
    }
    Term bound = simplify(divide(neg(lin->rest), lin->coeff));
    bool is_strict = lin->op == CmpOp::Lt || lin->op == CmpOp::Gt;
    bool below = lin->op == CmpOp::Lt || lin->op == CmpOp::Le;  // a*x + b below 0
    if ((lin->sign > 0) == below) {
      upper.emplace_back(bound, is_strict);
    } else {
      lower.emplace_back(bound, is_strict);
    }
  }
  for (const auto& [l, ls] : lower)
    for (const auto& [u, us] : upper) keep.push_back(compare(ls || us ? CmpOp::Lt : CmpOp::Le, l, u));
  note(trace, "fourier-motzkin", x);
  return simplify(conjunction(keep));
}

}  // namespace

Formula eliminate_modalities(const Formula& f, RuleTrace* trace) { return eliminate(f, trace); }

Formula dnf_preprocess(const Formula& f, RuleTrace* trace) { return preprocess(nnf(f), trace); }

Formula opt1_instantiate(const Formula& f, RuleTrace* trace) {
  return map_exists(f, [&](const Formula& ex) -> Formula {
    if (ex->var.post) return ex;
    const std::string& x = ex->var.name;
    std::vector<Formula> cs = conjuncts(ex->kids[0]);
    for (std::size_t i = 0; i < cs.size(); ++i) {
      const Formula& c = cs[i];
      if (c->kind != FormulaKind::Compare || c->op != CmpOp::Eq) continue;
      auto is = [&](const Term& t, bool post) {
        return t->kind == TermKind::Var && t->var.name == x && t->var.post == post;
      };
      if (!((is(c->lhs, true) && is(c->rhs, false)) || (is(c->lhs, false) && is(c->rhs, true))))
        continue;
      std::vector<Formula> rest;
      for (std::size_t j = 0; j < cs.size(); ++j)
        if (j != i) rest.push_back(cs[j]);
      note(trace, "opt1", x);
      return substitute(conjunction(rest), Substitution{{x, post_var(x)}});
    }
    return ex;
  });
}

Formula fourier_motzkin(const Formula& f, RuleTrace* trace, bool strict) {
  return map_exists(f, [&](const Formula& ex) { return eliminate_linear(ex, trace, strict); });
}

std::size_t count_quantifiers(const Formula& f) {
  std::size_t n = f->kind == FormulaKind::Exists || f->kind == FormulaKind::Forall ? 1 : 0;
  for (const auto& k : f->kids) n += count_quantifiers(k);
  return n;
}

namespace {

void collect_quantified(const Formula& f, std::vector<std::string>& out) {
  if (f->kind == FormulaKind::Exists || f->kind == FormulaKind::Forall) out.push_back(f->var.key());
  for (const auto& k : f->kids) collect_quantified(k, out);
}

}  // namespace

SynthesisReport synthesize(const Formula& f) {
  SynthesisReport r;
  r.input = f;
  auto stage = [&](const char* name, const Formula& g) {
    r.trace.push_back({std::string("stage:") + name, {}, to_string(g)});
  };
  Formula g = simplify(eliminate_modalities(f, &r.trace));
  stage("modalities", g);
  for (int round = 0; round < 16; ++round) {
    Formula before = g;
    g = simplify(dnf_preprocess(g, &r.trace));
    g = simplify(opt1_instantiate(g, &r.trace));
    g = simplify(fourier_motzkin(g, &r.trace, false));
    if (equal(g, before)) break;
    stage("round", g);
  }
  for (const auto& step : r.trace) {
    if (step.rule == "opt1") r.methods.emplace_back(step.variable, QeMethod::Opt1);
    if (step.rule == "exists-split") r.methods.emplace_back(step.variable, QeMethod::ExistsSplit);
    if (step.rule == "exists-hoist") r.methods.emplace_back(step.variable, QeMethod::ExistsHoist);
    if (step.rule == "fourier-motzkin")
      r.methods.emplace_back(step.variable, QeMethod::FourierMotzkin);
  }
  std::vector<std::string> residual;
  collect_quantified(g, residual);
  for (const auto& x : residual) {
    r.methods.emplace_back(x, QeMethod::WitnessSearch);
    note(&r.trace, "witness-search", x);
  }
  r.residual_quantifiers = residual.size();
  r.output = g;
  stage("output", g);
  return r;
}

// ---- runtime decision ------------------------------------------------------------

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double literal_violation(const Formula& lit, const Env& env, double tol) {
  if (lit->kind == FormulaKind::Compare) {
    double d = eval_term(lit->lhs, env) - eval_term(lit->rhs, env);
    switch (lit->op) {
      case CmpOp::Lt: return d < 0 ? 0 : d + 1e-300;
      case CmpOp::Le: return std::max(0.0, d);
      case CmpOp::Eq: return std::max(0.0, std::fabs(d) - tol);
      case CmpOp::Ge: return std::max(0.0, -d);
      case CmpOp::Gt: return d > 0 ? 0 : -d + 1e-300;
    }
  }
  if (lit->kind == FormulaKind::Not && lit->kids[0]->kind == FormulaKind::Compare &&
      lit->kids[0]->op == CmpOp::Eq) {
    const Formula& e = lit->kids[0];
    double d = std::fabs(eval_term(e->lhs, env) - eval_term(e->rhs, env));
    return d > tol ? 0 : tol - d + 1e-300;
  }
  return -1;  // not measurable
}

}  // namespace

const Decider::Compiled& Decider::compile(const Formula& ex) {
  auto it = cache_.find(ex.get());
  if (it != cache_.end()) return it->second;
  const std::string x = ex->var.key();
  Compiled c;
  c.keep_alive = ex;
  for (const auto& clause : dnf(nnf(ex->kids[0]))) {
    Clause cl;
    for (const auto& lit : clause) {
      if (lit->kind == FormulaKind::Compare) {
        auto d = linear_decompose(minus(lit->lhs, lit->rhs), x);
        if (d) {
          cl.linear.push_back({d->coeff, d->rest, lit->op});
          continue;
        }
      }
      cl.other.push_back(lit);
    }
    c.clauses.push_back(std::move(cl));
  }
  return cache_.emplace(ex.get(), std::move(c)).first->second;
}

double Decider::violation(const std::vector<Formula>& lits, Env& env) {
  double total = 0;
  for (const auto& l : lits) {
    try {
      double v = literal_violation(l, env, cfg_.tolerance);
      if (v < 0) v = decide(l, env) ? 0 : 1;
      else if (l->kind == FormulaKind::Compare && l->op != CmpOp::Eq) v = std::max(0.0, v - cfg_.slack);
      total += v;
    } catch (const EvalError&) {
      total += 1e300;
    }
  }
  return total;
}

bool Decider::search_clause(const std::string& x, const Clause& c, Env& env, Witness* witness) {
  double lo = -kInf, hi = kInf;
  bool lo_open = false, hi_open = false;
  auto raise_lo = [&](double v, bool open) {
    if (v > lo || (v == lo && open)) {
      lo = v;
      lo_open = open;
    }
  };
  auto lower_hi = [&](double v, bool open) {
    if (v < hi || (v == hi && open)) {
      hi = v;
      hi_open = open;
    }
  };
  for (const auto& b : c.linear) {
    double a = eval_term(b.coeff, env);
    double r = eval_term(b.rest, env);
    if (a == 0) {
      bool ok = false;
      const double sl = cfg_.slack;
      switch (b.op) {
        case CmpOp::Lt: ok = r < sl; break;
        case CmpOp::Le: ok = r <= sl; break;
        case CmpOp::Eq: ok = std::fabs(r) <= cfg_.tolerance; break;
        case CmpOp::Ge: ok = r >= -sl; break;
        case CmpOp::Gt: ok = r > -sl; break;
      }
      if (!ok) return false;
      continue;
    }
    double v = -r / a;
    double loose = cfg_.slack / std::fabs(a);
    switch (b.op) {
      case CmpOp::Eq: {
        double half = 0.5 * cfg_.tolerance / std::fabs(a);  // margin against rounding
        raise_lo(v - half, false);
        lower_hi(v + half, false);
        break;
      }
      case CmpOp::Lt:
      case CmpOp::Le: {
        bool open = b.op == CmpOp::Lt;
        if (a > 0) {
          lower_hi(v + loose, open);
        } else {
          raise_lo(v - loose, open);
        }
        break;
      }
      case CmpOp::Gt:
      case CmpOp::Ge: {
        bool open = b.op == CmpOp::Gt;
        if (a > 0) {
          raise_lo(v - loose, open);
        } else {
          lower_hi(v + loose, open);
        }
        break;
      }
    }
  }
  if (lo > hi || (lo == hi && (lo_open || hi_open))) return false;

  if (c.other.empty()) {
    double p;
    if (std::isfinite(lo) && std::isfinite(hi)) {
      p = lo + (hi - lo) / 2;
    } else if (std::isfinite(lo)) {
      p = lo + 1;
    } else if (std::isfinite(hi)) {
      p = hi - 1;
    } else {
      p = 0;
    }
    if (witness) (*witness)[x] = p;
    return true;
  }
  if (!std::isfinite(lo) || !std::isfinite(hi))
    throw EvalError("unbounded quantifier over '" + x + "'");

  auto holds_at = [&](double p) {
    env[x] = p;
    try {
      for (const auto& o : c.other)
        if (!decide(o, env)) return false;
    } catch (const EvalError&) {
      return false;
    }
    if (witness) (*witness)[x] = p;
    return true;
  };

  const int n = std::max(cfg_.grid, 2);
  const double width = hi - lo;
  const double nudge = width * 1e-9;
  if (width == 0) return holds_at(lo);
  double best = lo, best_v = kInf;
  for (int i = 0; i < n; ++i) {
    double p = lo + width * i / (n - 1);
    if (i == 0 && lo_open) p += nudge;
    if (i == n - 1 && hi_open) p -= nudge;
    if (holds_at(p)) return true;
    double v = violation(c.other, env);
    if (v < best_v) {
      best_v = v;
      best = p;
    }
  }
  // Local refinement: ternary search on the violation around the best grid point.
  double step = width / (n - 1);
  double a = std::max(lo + (lo_open ? nudge : 0), best - step);
  double b = std::min(hi - (hi_open ? nudge : 0), best + step);
  auto measure = [&](double p) {
    env[x] = p;
    return violation(c.other, env);
  };
  for (int it = 0; it < 60 && b - a > 0; ++it) {
    double m1 = a + (b - a) / 3, m2 = b - (b - a) / 3;
    if (measure(m1) <= measure(m2)) {
      b = m2;
    } else {
      a = m1;
    }
    if (holds_at(a + (b - a) / 2)) return true;
  }
  return false;
}

bool Decider::exists(const Formula& ex, Env& env, Witness* witness) {
  const std::string x = ex->var.key();
  const Compiled& comp = compile(ex);
  std::optional<double> saved;
  if (auto it = env.find(x); it != env.end()) saved = it->second;
  bool found = false;
  for (const auto& clause : comp.clauses) {
    if (search_clause(x, clause, env, witness)) {
      found = true;
      break;
    }
  }
  if (saved) {
    env[x] = *saved;
  } else {
    env.erase(x);
  }
  return found;
}

bool Decider::decide(const Formula& f, Env& env, Witness* witness) {
  switch (f->kind) {
    case FormulaKind::True: return true;
    case FormulaKind::False: return false;
    case FormulaKind::Compare: {
      if (cfg_.slack == 0 || f->op == CmpOp::Eq) return eval_formula(f, env, cfg_.tolerance);
      double d = eval_term(f->lhs, env) - eval_term(f->rhs, env);
      switch (f->op) {
        case CmpOp::Lt: return d < cfg_.slack;
        case CmpOp::Le: return d <= cfg_.slack;
        case CmpOp::Ge: return d >= -cfg_.slack;
        case CmpOp::Gt: return d > -cfg_.slack;
        case CmpOp::Eq: break;
      }
      return false;
    }
    case FormulaKind::Not: return !decide(f->kids[0], env, nullptr);
    case FormulaKind::And: return decide(f->kids[0], env, witness) && decide(f->kids[1], env, witness);
    case FormulaKind::Or: return decide(f->kids[0], env, witness) || decide(f->kids[1], env, witness);
    case FormulaKind::Implies:
      return !decide(f->kids[0], env, nullptr) || decide(f->kids[1], env, witness);
    case FormulaKind::Equiv: return decide(f->kids[0], env, nullptr) == decide(f->kids[1], env, nullptr);
    case FormulaKind::Exists: return exists(f, env, witness);
    case FormulaKind::Forall: {
      auto it = negations_.find(f.get());
      if (it == negations_.end())
        it = negations_.emplace(f.get(), std::pair{f, hsmon::exists(f->var, nnf(f_not(f->kids[0])))})
                 .first;
      return !exists(it->second.second, env, nullptr);
    }
    case FormulaKind::Box:
    case FormulaKind::Diamond: throw EvalError("modality in runtime evaluation");
  }
  return false;
}

// ---- plain grid witness search ----------------------------------------------------

namespace {

double formula_violation(const Formula& f, const Env& env, double tol) {
  switch (f->kind) {
    case FormulaKind::True: return 0;
    case FormulaKind::False: return 1;
    case FormulaKind::And:
      return formula_violation(f->kids[0], env, tol) + formula_violation(f->kids[1], env, tol);
    case FormulaKind::Or:
      return std::min(formula_violation(f->kids[0], env, tol),
                      formula_violation(f->kids[1], env, tol));
    default: {
      double v = literal_violation(f, env, tol);
      if (v >= 0) return v;
      return eval_formula(f, env, tol) ? 0 : 1;
    }
  }
}

}  // namespace

bool witness_search(const Formula& f, const TransitionPair& pair,
                    const std::map<std::string, Interval>& bounds, int grid, double tol,
                    Witness* witness) {
  std::vector<std::string> vars;
  Formula body = f;
  while (body->kind == FormulaKind::Exists) {
    vars.push_back(body->var.key());
    body = body->kids[0];
  }
  if (!quantifier_free(body)) throw EvalError("witness search needs a quantifier-free body");
  for (const auto& v : vars)
    if (!bounds.contains(v)) throw EvalError("unbounded quantified variable '" + v + "'");
  Formula g = nnf(body);
  Env env = make_env(pair);
  const int n = std::max(grid, 2);
  const std::size_t k = vars.size();

  auto holds = [&]() {
    try {
      return eval_formula(g, env, tol);
    } catch (const EvalError&) {
      return false;
    }
  };
  auto measure = [&]() {
    try {
      return formula_violation(g, env, tol);
    } catch (const EvalError&) {
      return 1e300;
    }
  };
  auto report = [&]() {
    if (witness)
      for (const auto& v : vars) (*witness)[v] = env[v];
    return true;
  };
  if (k == 0) return holds();

  std::vector<int> idx(k, 0);
  std::vector<double> best(k);
  double best_v = kInf;
  auto point = [&](std::size_t i, int j) {
    const auto& [lo, hi] = bounds.at(vars[i]);
    return lo + (hi - lo) * j / (n - 1);
  };
  while (true) {
    for (std::size_t i = 0; i < k; ++i) env[vars[i]] = point(i, idx[i]);
    if (holds()) return report();
    double v = measure();
    if (v < best_v) {
      best_v = v;
      for (std::size_t i = 0; i < k; ++i) best[i] = env[vars[i]];
    }
    std::size_t i = 0;
    while (i < k && ++idx[i] == n) idx[i++] = 0;
    if (i == k) break;
  }
  // One refinement pass: coordinate-wise ternary search around the best point.
  for (std::size_t i = 0; i < k; ++i) env[vars[i]] = best[i];
  for (std::size_t i = 0; i < k; ++i) {
    const auto& [lo, hi] = bounds.at(vars[i]);
    double step = (hi - lo) / (n - 1);
    double a = std::max(lo, best[i] - step), b = std::min(hi, best[i] + step);
    for (int it = 0; it < 60 && b - a > 0; ++it) {
      double m1 = a + (b - a) / 3, m2 = b - (b - a) / 3;
      env[vars[i]] = m1;
      double v1 = measure();
      env[vars[i]] = m2;
      double v2 = measure();
      if (v1 <= v2) {
        b = m2;
      } else {
        a = m1;
      }
      env[vars[i]] = a + (b - a) / 2;
      if (holds()) return report();
    }
  }
  return false;
}

}  // namespace hsmon
