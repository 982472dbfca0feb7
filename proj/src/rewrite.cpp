#include "hsmon/rewrite.hpp"

#include <cmath>

#include "hsmon/eval.hpp"

namespace hsmon {

Term substitute(const Term& t, const Substitution& s) {
  if (t->kind == TermKind::Var) {
    auto it = s.find(t->var.key());
    return it == s.end() ? t : it->second;
  }
  if (t->args.empty()) return t;
  auto n = std::make_shared<TermNode>(*t);
  bool changed = false;
  for (auto& a : n->args) {
    Term r = substitute(a, s);
    changed |= r != a;
    a = r;
  }
  return changed ? Term(n) : t;
}

std::string fresh_name(const std::string& base, const std::set<std::string>& avoid) {
  if (!avoid.contains(base) && !avoid.contains(base + kPostSuffix)) return base;
  for (int i = 1;; ++i) {
    std::string c = base + "_" + std::to_string(i);
    if (!avoid.contains(c) && !avoid.contains(c + kPostSuffix)) return c;
  }
}

Formula substitute(const Formula& f, const Substitution& s) {
  if (s.empty()) return f;
  switch (f->kind) {
    case FormulaKind::True:
    case FormulaKind::False: return f;
    case FormulaKind::Compare:
      return compare(f->op, substitute(f->lhs, s), substitute(f->rhs, s));
    case FormulaKind::Not: return f_not(substitute(f->kids[0], s));
    case FormulaKind::And: return f_and(substitute(f->kids[0], s), substitute(f->kids[1], s));
    case FormulaKind::Or: return f_or(substitute(f->kids[0], s), substitute(f->kids[1], s));
    case FormulaKind::Implies:
      return implies(substitute(f->kids[0], s), substitute(f->kids[1], s));
    case FormulaKind::Equiv: return equiv(substitute(f->kids[0], s), substitute(f->kids[1], s));
    case FormulaKind::Forall:
    case FormulaKind::Exists: {
      Substitution inner = s;
      inner.erase(f->var.key());
      const Formula& body = f->kids[0];
      std::set<std::string> body_free = free_vars(body);
      std::set<std::string> incoming;
      for (auto it = inner.begin(); it != inner.end();) {
        if (!body_free.contains(it->first)) {
          it = inner.erase(it);
          continue;
        }
        auto fv = free_vars(it->second);
        incoming.insert(fv.begin(), fv.end());
        ++it;
      }
      if (inner.empty()) return f;
      VarName v = f->var;
      Formula b = body;
      if (incoming.contains(v.key())) {
        std::set<std::string> avoid = all_vars(body);
        avoid.insert(incoming.begin(), incoming.end());
        for (const auto& [k, _] : inner) avoid.insert(k);
        VarName renamed{fresh_name(v.name, avoid), v.post};
        b = substitute(b, Substitution{{v.key(), var(renamed)}});
        v = renamed;
      }
      b = substitute(b, inner);
      return f->kind == FormulaKind::Forall ? forall(v, b) : exists(v, b);
    }
    case FormulaKind::Box:
    case FormulaKind::Diamond: throw SyntaxError("substitution into a modality");
  }
  return f;
}

// ---- simplification ----------------------------------------------------------

namespace {

bool is_const(const Term& t, double v) { return t->kind == TermKind::Const && t->value == v; }
bool is_const(const Term& t) { return t->kind == TermKind::Const; }

}  // namespace

Term simplify(const Term& t) {
  if (t->args.empty()) return t;
  std::vector<Term> a;
  for (const auto& x : t->args) a.push_back(simplify(x));
  bool all_const = true;
  for (const auto& x : a) all_const &= is_const(x);
  switch (t->kind) {
    case TermKind::Plus:
      if (all_const) return constant(a[0]->value + a[1]->value);
      if (is_const(a[0], 0)) return a[1];
      if (is_const(a[1], 0)) return a[0];
      if (a[1]->kind == TermKind::Neg) return simplify(minus(a[0], a[1]->args[0]));
      return plus(a[0], a[1]);
    case TermKind::Minus:
      if (all_const) return constant(a[0]->value - a[1]->value);
      if (is_const(a[1], 0)) return a[0];
      if (is_const(a[0], 0)) return simplify(neg(a[1]));
      if (equal(a[0], a[1])) return constant(0);
      if (a[1]->kind == TermKind::Neg) return plus(a[0], a[1]->args[0]);
      return minus(a[0], a[1]);
    case TermKind::Times:
      if (all_const) return constant(a[0]->value * a[1]->value);
      if (is_const(a[0], 0) || is_const(a[1], 0)) return constant(0);
      if (is_const(a[0], 1)) return a[1];
      if (is_const(a[1], 1)) return a[0];
      if (is_const(a[0], -1)) return simplify(neg(a[1]));
      if (is_const(a[1], -1)) return simplify(neg(a[0]));
      return times(a[0], a[1]);
    case TermKind::Divide:
      if (all_const && a[1]->value != 0) return constant(a[0]->value / a[1]->value);
      if (is_const(a[1], 1)) return a[0];
      if (is_const(a[1], -1)) return simplify(neg(a[0]));
      return divide(a[0], a[1]);
    case TermKind::Power:
      if (t->exponent == 0) return constant(1);
      if (t->exponent == 1) return a[0];
      if (is_const(a[0]) && !(a[0]->value == 0 && t->exponent < 0))
        return constant(std::pow(a[0]->value, t->exponent));
      return power(a[0], t->exponent);
    case TermKind::Neg:
      if (is_const(a[0])) return constant(-a[0]->value);
      if (a[0]->kind == TermKind::Neg) return a[0]->args[0];
      if (a[0]->kind == TermKind::Minus) return minus(a[0]->args[1], a[0]->args[0]);
      return neg(a[0]);
    case TermKind::Min:
      if (all_const) return constant(std::min(a[0]->value, a[1]->value));
      if (equal(a[0], a[1])) return a[0];
      return min_of(a[0], a[1]);
    case TermKind::Max:
      if (all_const) return constant(std::max(a[0]->value, a[1]->value));
      if (equal(a[0], a[1])) return a[0];
      return max_of(a[0], a[1]);
    case TermKind::Func:
      if (all_const) {
        try {
          return constant(eval_term(func(t->func, a), Env{}));
        } catch (const EvalError&) {
        }
      }
      return func(t->func, a);
    default: return t;
  }
}

Formula simplify(const Formula& f) {
  switch (f->kind) {
    case FormulaKind::True:
    case FormulaKind::False: return f;
    case FormulaKind::Compare: {
      Term l = simplify(f->lhs);
      Term r = simplify(f->rhs);
      if (is_const(l) && is_const(r)) {
        double x = l->value, y = r->value;
        switch (f->op) {
          case CmpOp::Lt: return x < y ? f_true() : f_false();
          case CmpOp::Le: return x <= y ? f_true() : f_false();
          case CmpOp::Ge: return x >= y ? f_true() : f_false();
          case CmpOp::Gt: return x > y ? f_true() : f_false();
          // Near-equal ground equalities are left to the evaluation tolerance.
          case CmpOp::Eq:
            if (x == y) return f_true();
            if (std::fabs(x - y) > 1e-3) return f_false();
            break;
        }
      } else if (equal(l, r)) {
        return f->op == CmpOp::Lt || f->op == CmpOp::Gt ? f_false() : f_true();
      }
      return compare(f->op, l, r);
    }
    case FormulaKind::Not: {
      Formula a = simplify(f->kids[0]);
      if (a->kind == FormulaKind::True) return f_false();
      if (a->kind == FormulaKind::False) return f_true();
      if (a->kind == FormulaKind::Not) return a->kids[0];
      return f_not(a);
    }
    case FormulaKind::And: {
      Formula a = simplify(f->kids[0]);
      Formula b = simplify(f->kids[1]);
      if (a->kind == FormulaKind::False || b->kind == FormulaKind::False) return f_false();
      if (a->kind == FormulaKind::True) return b;
      if (b->kind == FormulaKind::True) return a;
      if (equal(a, b)) return a;
      return f_and(a, b);
    }
    case FormulaKind::Or: {
      Formula a = simplify(f->kids[0]);
      Formula b = simplify(f->kids[1]);
      if (a->kind == FormulaKind::True || b->kind == FormulaKind::True) return f_true();
      if (a->kind == FormulaKind::False) return b;
      if (b->kind == FormulaKind::False) return a;
      if (equal(a, b)) return a;
      return f_or(a, b);
    }
    case FormulaKind::Implies: {
      Formula a = simplify(f->kids[0]);
      Formula b = simplify(f->kids[1]);
      if (a->kind == FormulaKind::False || b->kind == FormulaKind::True) return f_true();
      if (a->kind == FormulaKind::True) return b;
      if (b->kind == FormulaKind::False) return simplify(f_not(a));
      return implies(a, b);
    }
    case FormulaKind::Equiv: {
      Formula a = simplify(f->kids[0]);
      Formula b = simplify(f->kids[1]);
      if (a->kind == FormulaKind::True) return b;
      if (b->kind == FormulaKind::True) return a;
      if (a->kind == FormulaKind::False) return simplify(f_not(b));
      if (b->kind == FormulaKind::False) return simplify(f_not(a));
      return equiv(a, b);
    }
    case FormulaKind::Forall:
    case FormulaKind::Exists: {
      Formula b = simplify(f->kids[0]);
      if (b->kind == FormulaKind::True || b->kind == FormulaKind::False) return b;
      if (!mentions(b, f->var.key())) return b;
      return f->kind == FormulaKind::Forall ? forall(f->var, b) : exists(f->var, b);
    }
    case FormulaKind::Box: return box(f->program, simplify(f->kids[0]));
    case FormulaKind::Diamond: return diamond(f->program, simplify(f->kids[0]));
  }
  return f;
}

bool mentions(const Term& t, const std::string& key) {
  if (t->kind == TermKind::Var) return t->var.key() == key;
  for (const auto& a : t->args)
    if (mentions(a, key)) return true;
  return false;
}

bool mentions(const Formula& f, const std::string& key) {
  return free_vars(f).contains(key);
}

// ---- linear decomposition ----------------------------------------------------

namespace {

std::optional<Linear> decompose(const Term& t, const std::string& x) {
  if (!mentions(t, x)) return Linear{constant(0), t};
  switch (t->kind) {
    case TermKind::Var: return Linear{constant(1), constant(0)};
    case TermKind::Plus:
    case TermKind::Minus: {
      auto a = decompose(t->args[0], x);
      auto b = decompose(t->args[1], x);
      if (!a || !b) return std::nullopt;
      if (t->kind == TermKind::Plus)
        return Linear{simplify(plus(a->coeff, b->coeff)), simplify(plus(a->rest, b->rest))};
      return Linear{simplify(minus(a->coeff, b->coeff)), simplify(minus(a->rest, b->rest))};
    }
    case TermKind::Neg: {
      auto a = decompose(t->args[0], x);
      if (!a) return std::nullopt;
      return Linear{simplify(neg(a->coeff)), simplify(neg(a->rest))};
    }
    case TermKind::Times: {
      auto a = decompose(t->args[0], x);
      auto b = decompose(t->args[1], x);
      if (!a || !b) return std::nullopt;
      bool a_free = is_const(a->coeff, 0), b_free = is_const(b->coeff, 0);
      if (a_free && b_free) return Linear{constant(0), simplify(times(a->rest, b->rest))};
      if (a_free)
        return Linear{simplify(times(a->rest, b->coeff)), simplify(times(a->rest, b->rest))};
      if (b_free)
        return Linear{simplify(times(a->coeff, b->rest)), simplify(times(a->rest, b->rest))};
      return std::nullopt;
    }
    case TermKind::Divide: {
      auto a = decompose(t->args[0], x);
      auto d = decompose(t->args[1], x);
      if (!a || !d || !is_const(d->coeff, 0)) return std::nullopt;
      return Linear{simplify(divide(a->coeff, d->rest)), simplify(divide(a->rest, d->rest))};
    }
    case TermKind::Power: {
      if (t->exponent == 0) return Linear{constant(0), constant(1)};
      auto a = decompose(t->args[0], x);
      if (!a) return std::nullopt;
      if (is_const(a->coeff, 0)) return Linear{constant(0), simplify(power(a->rest, t->exponent))};
      if (t->exponent == 1) return a;
      return std::nullopt;
    }
    default: return std::nullopt;
  }
}

}  // namespace

std::optional<Linear> linear_decompose(const Term& t, const std::string& x) {
  auto r = decompose(t, x);
  if (!r) return r;
  return Linear{simplify(r->coeff), simplify(r->rest)};
}

// ---- normal forms --------------------------------------------------------------

namespace {

Formula nnf_signed(const Formula& f, bool negated) {
  switch (f->kind) {
    case FormulaKind::True: return negated ? f_false() : f_true();
    case FormulaKind::False: return negated ? f_true() : f_false();
    case FormulaKind::Compare:
      if (!negated) return f;
      if (f->op == CmpOp::Eq) return f_not(f);
      return compare(negate(f->op), f->lhs, f->rhs);
    case FormulaKind::Not: return nnf_signed(f->kids[0], !negated);
    case FormulaKind::And:
    case FormulaKind::Or: {
      Formula a = nnf_signed(f->kids[0], negated);
      Formula b = nnf_signed(f->kids[1], negated);
      bool conj = (f->kind == FormulaKind::And) != negated;
      return conj ? f_and(a, b) : f_or(a, b);
    }
    case FormulaKind::Implies: {
      // a -> b  ==  !a | b
      Formula a = nnf_signed(f->kids[0], !negated);
      Formula b = nnf_signed(f->kids[1], negated);
      return negated ? f_and(a, b) : f_or(a, b);
    }
    case FormulaKind::Equiv: {
      const Formula& a = f->kids[0];
      const Formula& b = f->kids[1];
      // (a & b) | (!a & !b), negated: (a & !b) | (!a & b)
      return f_or(f_and(nnf_signed(a, false), nnf_signed(b, negated)),
                  f_and(nnf_signed(a, true), nnf_signed(b, !negated)));
    }
    case FormulaKind::Forall:
    case FormulaKind::Exists: {
      Formula b = nnf_signed(f->kids[0], negated);
      bool all = (f->kind == FormulaKind::Forall) != negated;
      return all ? forall(f->var, b) : exists(f->var, b);
    }
    case FormulaKind::Box:
    case FormulaKind::Diamond: return negated ? f_not(f) : f;
  }
  return f;
}

void flatten(const Formula& f, FormulaKind kind, std::vector<Formula>& out) {
  if (f->kind == kind) {
    for (const auto& k : f->kids) flatten(k, kind, out);
  } else {
    out.push_back(f);
  }
}

constexpr std::size_t kMaxDnfClauses = 1 << 16;

}  // namespace

Formula nnf(const Formula& f) { return nnf_signed(f, false); }

std::vector<Formula> conjuncts(const Formula& f) {
  std::vector<Formula> out;
  if (f->kind == FormulaKind::True) return out;
  flatten(f, FormulaKind::And, out);
  return out;
}

std::vector<Formula> disjuncts(const Formula& f) {
  std::vector<Formula> out;
  if (f->kind == FormulaKind::False) return out;
  flatten(f, FormulaKind::Or, out);
  return out;
}

std::vector<std::vector<Formula>> dnf(const Formula& f) {
  switch (f->kind) {
    case FormulaKind::True: return {{}};
    case FormulaKind::False: return {};
    case FormulaKind::Or: {
      auto a = dnf(f->kids[0]);
      auto b = dnf(f->kids[1]);
      a.insert(a.end(), b.begin(), b.end());
      return a;
    }
    case FormulaKind::And: {
      auto a = dnf(f->kids[0]);
      auto b = dnf(f->kids[1]);
      if (a.size() * b.size() > kMaxDnfClauses) throw SyntaxError("DNF too large");
      std::vector<std::vector<Formula>> out;
      out.reserve(a.size() * b.size());
      for (const auto& x : a) {
        for (const auto& y : b) {
          auto c = x;
          c.insert(c.end(), y.begin(), y.end());
          out.push_back(std::move(c));
        }
      }
      return out;
    }
    default: return {{f}};
  }
}

Formula from_dnf(const std::vector<std::vector<Formula>>& d) {
  std::vector<Formula> ds;
  for (const auto& c : d) ds.push_back(conjunction(c));
  return disjunction(ds);
}

}  // namespace hsmon
