#include "hsmon/ast.hpp"

namespace hsmon {

VarName VarName::from_key(const std::string& key) {
  const std::string suffix = kPostSuffix;
  if (key.size() > suffix.size() &&
      key.compare(key.size() - suffix.size(), suffix.size(), suffix) == 0) {
    return {key.substr(0, key.size() - suffix.size()), true};
  }
  return {key, false};
}

namespace {

Term make_term(TermKind kind, std::vector<Term> args) {
  auto n = std::make_shared<TermNode>();
  n->kind = kind;
  n->args = std::move(args);
  return n;
}

Formula make_formula(FormulaKind kind, std::vector<Formula> kids) {
  auto n = std::make_shared<FormulaNode>();
  n->kind = kind;
  n->kids = std::move(kids);
  return n;
}

Program make_program(ProgramKind kind, std::vector<Program> kids) {
  auto n = std::make_shared<ProgramNode>();
  n->kind = kind;
  n->kids = std::move(kids);
  return n;
}

}  // namespace

Term var(const std::string& name, bool post) { return var(VarName{name, post}); }

Term var(const VarName& v) {
  auto n = std::make_shared<TermNode>();
  n->kind = TermKind::Var;
  n->var = v;
  return n;
}

Term post_var(const std::string& name) { return var(name, true); }

Term constant(double value) {
  auto n = std::make_shared<TermNode>();
  n->kind = TermKind::Const;
  n->value = value;
  return n;
}

Term plus(Term a, Term b) { return make_term(TermKind::Plus, {std::move(a), std::move(b)}); }
Term minus(Term a, Term b) { return make_term(TermKind::Minus, {std::move(a), std::move(b)}); }
Term times(Term a, Term b) { return make_term(TermKind::Times, {std::move(a), std::move(b)}); }
Term divide(Term a, Term b) { return make_term(TermKind::Divide, {std::move(a), std::move(b)}); }
Term neg(Term a) { return make_term(TermKind::Neg, {std::move(a)}); }
Term min_of(Term a, Term b) { return make_term(TermKind::Min, {std::move(a), std::move(b)}); }
Term max_of(Term a, Term b) { return make_term(TermKind::Max, {std::move(a), std::move(b)}); }

Term power(Term base, int exponent) {
  auto n = std::make_shared<TermNode>();
  n->kind = TermKind::Power;
  n->exponent = exponent;
  n->args = {std::move(base)};
  return n;
}

Term func(const std::string& name, std::vector<Term> args) {
  auto n = std::make_shared<TermNode>();
  n->kind = TermKind::Func;
  n->func = name;
  n->args = std::move(args);
  return n;
}

Formula f_true() {
  static const Formula t = make_formula(FormulaKind::True, {});
  return t;
}

Formula f_false() {
  static const Formula f = make_formula(FormulaKind::False, {});
  return f;
}

Formula compare(CmpOp op, Term lhs, Term rhs) {
  auto n = std::make_shared<FormulaNode>();
  n->kind = FormulaKind::Compare;
  n->op = op;
  n->lhs = std::move(lhs);
  n->rhs = std::move(rhs);
  return n;
}

Formula lt(Term a, Term b) { return compare(CmpOp::Lt, std::move(a), std::move(b)); }
Formula le(Term a, Term b) { return compare(CmpOp::Le, std::move(a), std::move(b)); }
Formula eq(Term a, Term b) { return compare(CmpOp::Eq, std::move(a), std::move(b)); }
Formula ge(Term a, Term b) { return compare(CmpOp::Ge, std::move(a), std::move(b)); }
Formula gt(Term a, Term b) { return compare(CmpOp::Gt, std::move(a), std::move(b)); }

Formula f_not(Formula f) { return make_formula(FormulaKind::Not, {std::move(f)}); }
Formula f_and(Formula a, Formula b) { return make_formula(FormulaKind::And, {std::move(a), std::move(b)}); }
Formula f_or(Formula a, Formula b) { return make_formula(FormulaKind::Or, {std::move(a), std::move(b)}); }
Formula implies(Formula a, Formula b) { return make_formula(FormulaKind::Implies, {std::move(a), std::move(b)}); }
Formula equiv(Formula a, Formula b) { return make_formula(FormulaKind::Equiv, {std::move(a), std::move(b)}); }

Formula forall(const VarName& v, Formula body) {
  auto n = std::make_shared<FormulaNode>();
  n->kind = FormulaKind::Forall;
  n->var = v;
  n->kids = {std::move(body)};
  return n;
}

Formula exists(const VarName& v, Formula body) {
  auto n = std::make_shared<FormulaNode>();
  n->kind = FormulaKind::Exists;
  n->var = v;
  n->kids = {std::move(body)};
  return n;
}

Formula box(Program p, Formula post) {
  auto n = std::make_shared<FormulaNode>();
  n->kind = FormulaKind::Box;
  n->program = std::move(p);
  n->kids = {std::move(post)};
  return n;
}

Formula diamond(Program p, Formula post) {
  auto n = std::make_shared<FormulaNode>();
  n->kind = FormulaKind::Diamond;
  n->program = std::move(p);
  n->kids = {std::move(post)};
  return n;
}

Formula conjunction(const std::vector<Formula>& fs) {
  if (fs.empty()) return f_true();
  Formula acc = fs.back();
  for (std::size_t i = fs.size() - 1; i-- > 0;) acc = f_and(fs[i], acc);
  return acc;
}

Formula disjunction(const std::vector<Formula>& fs) {
  if (fs.empty()) return f_false();
  Formula acc = fs.back();
  for (std::size_t i = fs.size() - 1; i-- > 0;) acc = f_or(fs[i], acc);
  return acc;
}

Program assign(const std::string& x, Term e) {
  auto n = std::make_shared<ProgramNode>();
  n->kind = ProgramKind::Assign;
  n->var = x;
  n->term = std::move(e);
  return n;
}

Program assign_any(const std::string& x) {
  auto n = std::make_shared<ProgramNode>();
  n->kind = ProgramKind::AssignAny;
  n->var = x;
  return n;
}

Program test(Formula f) {
  auto n = std::make_shared<ProgramNode>();
  n->kind = ProgramKind::Test;
  n->formula = std::move(f);
  return n;
}

Program ode(std::vector<OdeEquation> eqs, Formula domain) {
  for (std::size_t i = 0; i < eqs.size(); ++i)
    for (std::size_t j = i + 1; j < eqs.size(); ++j)
      if (eqs[i].var == eqs[j].var)
        throw SyntaxError("duplicate ODE left-hand side '" + eqs[i].var + "'");
  if (eqs.empty()) throw SyntaxError("ODE without equations");
  auto n = std::make_shared<ProgramNode>();
  n->kind = ProgramKind::Ode;
  n->ode = std::move(eqs);
  n->formula = domain ? std::move(domain) : f_true();
  return n;
}

Program seq(Program a, Program b) { return make_program(ProgramKind::Seq, {std::move(a), std::move(b)}); }
Program choice(Program a, Program b) { return make_program(ProgramKind::Choice, {std::move(a), std::move(b)}); }
Program loop(Program body) { return make_program(ProgramKind::Loop, {std::move(body)}); }

Program sequence(const std::vector<Program>& ps) {
  if (ps.empty()) return test(f_true());
  Program acc = ps.back();
  for (std::size_t i = ps.size() - 1; i-- > 0;) acc = seq(ps[i], acc);
  return acc;
}

std::vector<Program> flatten_seq(const Program& p) {
  std::vector<Program> out;
  if (p->kind == ProgramKind::Seq) {
    for (const auto& k : p->kids) {
      auto sub = flatten_seq(k);
      out.insert(out.end(), sub.begin(), sub.end());
    }
  } else {
    out.push_back(p);
  }
  return out;
}

Program pick_in_interval(const std::string& x, Term center, Term radius) {
  return seq(assign_any(x),
             test(f_and(le(minus(center, radius), var(x)), le(var(x), plus(center, radius)))));
}

Program plant_for_duration(std::vector<OdeEquation> eqs, Formula domain,
                           const std::string& clock, Term eps) {
  eqs.push_back({clock, constant(1)});
  Formula dom = le(var(clock), eps);
  if (domain && domain->kind != FormulaKind::True) dom = f_and(domain, dom);
  return sequence({assign(clock, constant(0)), ode(std::move(eqs), dom), test(eq(var(clock), eps))});
}

bool equal(const Term& a, const Term& b) {
  if (a == b) return true;
  if (!a || !b || a->kind != b->kind) return false;
  switch (a->kind) {
    case TermKind::Var: return a->var == b->var;
    case TermKind::Const: return a->value == b->value;
    case TermKind::Power:
      if (a->exponent != b->exponent) return false;
      break;
    case TermKind::Func:
      if (a->func != b->func) return false;
      break;
    default: break;
  }
  if (a->args.size() != b->args.size()) return false;
  for (std::size_t i = 0; i < a->args.size(); ++i)
    if (!equal(a->args[i], b->args[i])) return false;
  return true;
}

bool equal(const Formula& a, const Formula& b) {
  if (a == b) return true;
  if (!a || !b || a->kind != b->kind) return false;
  switch (a->kind) {
    case FormulaKind::Compare:
      return a->op == b->op && equal(a->lhs, b->lhs) && equal(a->rhs, b->rhs);
    case FormulaKind::Forall:
    case FormulaKind::Exists:
      if (a->var != b->var) return false;
      break;
    case FormulaKind::Box:
    case FormulaKind::Diamond:
      if (!equal(a->program, b->program)) return false;
      break;
    default: break;
  }
  if (a->kids.size() != b->kids.size()) return false;
  for (std::size_t i = 0; i < a->kids.size(); ++i)
    if (!equal(a->kids[i], b->kids[i])) return false;
  return true;
}

bool equal(const Program& a, const Program& b) {
  if (a == b) return true;
  if (!a || !b || a->kind != b->kind) return false;
  switch (a->kind) {
    case ProgramKind::Assign: return a->var == b->var && equal(a->term, b->term);
    case ProgramKind::AssignAny: return a->var == b->var;
    case ProgramKind::Test: return equal(a->formula, b->formula);
    case ProgramKind::Ode:
      if (a->ode.size() != b->ode.size() || !equal(a->formula, b->formula)) return false;
      for (std::size_t i = 0; i < a->ode.size(); ++i)
        if (a->ode[i].var != b->ode[i].var || !equal(a->ode[i].rhs, b->ode[i].rhs)) return false;
      return true;
    default: break;
  }
  if (a->kids.size() != b->kids.size()) return false;
  for (std::size_t i = 0; i < a->kids.size(); ++i)
    if (!equal(a->kids[i], b->kids[i])) return false;
  return true;
}

namespace {

std::size_t term_size(const Term& t) {
  std::size_t n = (t->kind == TermKind::Var || t->kind == TermKind::Const) ? 0 : 1;
  for (const auto& a : t->args) n += term_size(a);
  return n;
}

}  // namespace

std::size_t size(const Formula& f) {
  switch (f->kind) {
    case FormulaKind::True:
    case FormulaKind::False: return 0;
    case FormulaKind::Compare: return 1 + term_size(f->lhs) + term_size(f->rhs);
    default: break;
  }
  std::size_t n = 1;
  for (const auto& k : f->kids) n += size(k);
  return n;
}

const char* to_string(CmpOp op) {
  switch (op) {
    case CmpOp::Lt: return "<";
    case CmpOp::Le: return "<=";
    case CmpOp::Eq: return "=";
    case CmpOp::Ge: return ">=";
    case CmpOp::Gt: return ">";
  }
  return "?";
}

CmpOp flip(CmpOp op) {
  switch (op) {
    case CmpOp::Lt: return CmpOp::Gt;
    case CmpOp::Le: return CmpOp::Ge;
    case CmpOp::Eq: return CmpOp::Eq;
    case CmpOp::Ge: return CmpOp::Le;
    case CmpOp::Gt: return CmpOp::Lt;
  }
  return op;
}

CmpOp negate(CmpOp op) {
  switch (op) {
    case CmpOp::Lt: return CmpOp::Ge;
    case CmpOp::Le: return CmpOp::Gt;
    case CmpOp::Ge: return CmpOp::Lt;
    case CmpOp::Gt: return CmpOp::Le;
    case CmpOp::Eq: break;
  }
  throw SyntaxError("negation of an equation is not a single comparison");
}

}  // namespace hsmon
