#include "hsmon/hybrid_program.hpp"

#include <cmath>
#include <limits>

#include "hsmon/eval.hpp"
#include "hsmon/rewrite.hpp"

namespace hsmon {

const char* to_string(NormalFormKind k) {
  switch (k) {
    case NormalFormKind::Plain: return "plain";
    case NormalFormKind::Disturbance: return "disturbance";
    case NormalFormKind::Measurement: return "measurement";
  }
  return "?";
}

namespace {

bool is_var(const Term& t, const std::string& name) {
  return t->kind == TermKind::Var && !t->var.post && t->var.name == name;
}

double numeric_or_nan(const Term& t) {
  Term s = simplify(t);
  return s->kind == TermKind::Const ? s->value : std::numeric_limits<double>::quiet_NaN();
}

std::optional<PlantDuration> match_duration(const Program& reset, const Program& flow,
                                            const Program& check) {
  if (reset->kind != ProgramKind::Assign || flow->kind != ProgramKind::Ode ||
      check->kind != ProgramKind::Test)
    return std::nullopt;
  const std::string& t = reset->var;
  if (reset->term->kind != TermKind::Const || reset->term->value != 0) return std::nullopt;
  bool unit_rate = false;
  for (const auto& e : flow->ode)
    if (e.var == t && e.rhs->kind == TermKind::Const && e.rhs->value == 1) unit_rate = true;
  if (!unit_rate) return std::nullopt;
  const Formula& c = check->formula;
  if (c->kind != FormulaKind::Compare || c->op != CmpOp::Eq || !is_var(c->lhs, t))
    return std::nullopt;
  bool bounded = false;
  for (const auto& q : conjuncts(flow->formula))
    if (q->kind == FormulaKind::Compare && q->op == CmpOp::Le && is_var(q->lhs, t) &&
        equal(q->rhs, c->rhs))
      bounded = true;
  if (!bounded) return std::nullopt;
  return PlantDuration{t, c->rhs, flow};
}

Program program_or_skip(const std::vector<Program>& ps) {
  return ps.empty() ? test(f_true()) : sequence(ps);
}

std::size_t odes_in(const Program& p) {
  std::size_t n = p->kind == ProgramKind::Ode ? 1 : 0;
  for (const auto& k : p->kids) n += odes_in(k);
  return n;
}

}  // namespace

std::size_t count_odes(const Program& p) { return odes_in(p); }

std::optional<IntervalPick> match_pick(const Program& a, const Program& t) {
  if (a->kind != ProgramKind::AssignAny || t->kind != ProgramKind::Test) return std::nullopt;
  const Formula& f = t->formula;
  if (f->kind != FormulaKind::And) return std::nullopt;
  const Formula& lo = f->kids[0];
  const Formula& hi = f->kids[1];
  if (lo->kind != FormulaKind::Compare || hi->kind != FormulaKind::Compare) return std::nullopt;
  if (lo->op != CmpOp::Le || hi->op != CmpOp::Le) return std::nullopt;
  if (!is_var(lo->rhs, a->var) || !is_var(hi->lhs, a->var)) return std::nullopt;
  const Term& l = lo->lhs;
  const Term& h = hi->rhs;
  if (l->kind != TermKind::Minus || h->kind != TermKind::Plus) return std::nullopt;
  if (!equal(l->args[0], h->args[0]) || !equal(l->args[1], h->args[1])) return std::nullopt;
  if (mentions(l, a->var)) return std::nullopt;
  return IntervalPick{a->var, l->args[0], l->args[1]};
}

NormalFormInfo recognize_normal_form(const Program& body) {
  std::vector<Program> cs = flatten_seq(body);
  std::size_t ode_at = cs.size();
  for (std::size_t i = 0; i < cs.size(); ++i) {
    if (cs[i]->kind == ProgramKind::Ode) {
      ode_at = i;
      break;
    }
  }
  if (ode_at == cs.size()) throw SyntaxError("loop body has no top-level ODE");

  std::size_t plant_begin = ode_at, plant_end = ode_at + 1;
  std::optional<PlantDuration> dur;
  if (ode_at >= 1 && ode_at + 1 < cs.size()) {
    dur = match_duration(cs[ode_at - 1], cs[ode_at], cs[ode_at + 1]);
    if (dur) {
      plant_begin = ode_at - 1;
      plant_end = ode_at + 2;
    }
  }
  Program plant = sequence({cs.begin() + plant_begin, cs.begin() + plant_end});
  std::vector<Program> after(cs.begin() + plant_end, cs.end());

  NormalFormInfo info;
  info.plant = plant;
  info.actuation = program_or_skip({});
  info.physics = sequence({cs.begin() + plant_begin, cs.end()});
  info.duration = dur;
  info.eps = dur ? numeric_or_nan(dur->eps) : std::numeric_limits<double>::quiet_NaN();

  // Measurement: plantDur followed by exactly a pick centered at a plain variable.
  std::optional<IntervalPick> measurement;
  if (dur && after.size() == 2) {
    measurement = match_pick(after[0], after[1]);
    if (measurement && measurement->center->kind != TermKind::Var) measurement.reset();
  }

  // Disturbance: the two components right before the plant pick a value the plant reads.
  std::optional<IntervalPick> disturbance;
  if (plant_begin >= 2) {
    disturbance = match_pick(cs[plant_begin - 2], cs[plant_begin - 1]);
    if (disturbance && !free_vars(plant).contains(disturbance->var)) disturbance.reset();
    if (disturbance && !after.empty() && !measurement) disturbance.reset();
  }

  if (disturbance && measurement)
    throw SyntaxError("ambiguous normal form: both disturbance and measurement shapes match");

  if (disturbance) {
    info.kind = NormalFormKind::Disturbance;
    info.pick = disturbance;
    info.actuation = seq(cs[plant_begin - 2], cs[plant_begin - 1]);
    info.ctrl = program_or_skip({cs.begin(), cs.begin() + plant_begin - 2});
    info.plant = plant;
    info.delta = numeric_or_nan(disturbance->radius);
    return info;
  }
  if (measurement) {
    std::vector<Program> ctrl(cs.begin(), cs.begin() + plant_begin);
    info.kind = NormalFormKind::Measurement;
    info.pick = measurement;
    info.measured = measurement->center->var.name;
    info.ctrl = program_or_skip(ctrl);
    info.delta = numeric_or_nan(measurement->radius);
    if (bound_vars(info.ctrl).contains(info.measured))
      throw SyntaxError("controller writes the measured variable '" + info.measured + "'");
    return info;
  }
  info.kind = NormalFormKind::Plain;
  info.ctrl = program_or_skip({cs.begin(), cs.begin() + plant_begin});
  std::vector<Program> rest(cs.begin() + plant_begin, cs.end());
  info.plant = sequence(rest);
  info.delta = 0;
  return info;
}

namespace {

Program replace_ode(const Program& p, const Program& replacement) {
  if (p->kind == ProgramKind::Ode) return replacement;
  switch (p->kind) {
    case ProgramKind::Seq:
      return seq(replace_ode(p->kids[0], replacement), replace_ode(p->kids[1], replacement));
    case ProgramKind::Choice:
      return choice(replace_ode(p->kids[0], replacement), replace_ode(p->kids[1], replacement));
    case ProgramKind::Loop: return loop(replace_ode(p->kids[0], replacement));
    default: return p;
  }
}

const ProgramNode* find_ode(const Program& p) {
  if (p->kind == ProgramKind::Ode) return p.get();
  for (const auto& k : p->kids)
    if (auto r = find_ode(k)) return r;
  return nullptr;
}

}  // namespace

NormalFormInfo normal_form_of(const Program& body) {
  if (odes_in(body) > 0) return recognize_normal_form(body);
  NormalFormInfo info;
  info.ctrl = body;
  info.plant = test(f_true());
  info.actuation = info.plant;
  info.physics = info.plant;
  info.eps = std::numeric_limits<double>::quiet_NaN();
  return info;
}

Program with_pick_radius(const Program& body, const std::string& var, const Term& radius) {
  std::vector<Program> cs = flatten_seq(body);
  for (std::size_t i = 0; i + 1 < cs.size(); ++i) {
    auto pick = match_pick(cs[i], cs[i + 1]);
    if (!pick || pick->var != var) continue;
    Term x = hsmon::var(var);
    cs[i + 1] = test(f_and(compare(CmpOp::Le, minus(pick->center, radius), x),
                           compare(CmpOp::Le, x, plus(pick->center, radius))));
    return sequence(cs);
  }
  throw SyntaxError("no interval pick of '" + var + "' in the loop body");
}

Program overapproximate_plant(const Program& p, const Formula& diff_invariants) {
  std::size_t n = odes_in(p);
  if (n != 1) throw SyntaxError("overapproximation needs exactly one ODE, found " + std::to_string(n));
  const ProgramNode* o = find_ode(p);
  std::set<std::string> used = all_vars(p);
  std::vector<Program> parts;
  for (const auto& e : o->ode) {
    std::string ghost = e.var + "_0";
    if (used.contains(ghost)) throw SyntaxError("ghost name '" + ghost + "' is not fresh");
    parts.push_back(assign(ghost, var(e.var)));
  }
  const Formula& q = o->formula;
  bool trivial_domain = q->kind == FormulaKind::True;
  if (!trivial_domain) parts.push_back(test(q));
  for (const auto& e : o->ode) parts.push_back(assign_any(e.var));
  parts.push_back(test(trivial_domain ? diff_invariants : f_and(q, diff_invariants)));
  return replace_ode(p, sequence(parts));
}

Program measurement_rollover(const Program& p) {
  std::vector<Program> cs = flatten_seq(p);
  if (cs.size() < 3) throw SyntaxError("rollover expects measure; ctrl; plant");
  auto pick = match_pick(cs[0], cs[1]);
  if (!pick || pick->center->kind != TermKind::Var)
    throw SyntaxError("rollover expects the program to start with a measurement");
  std::vector<Program> rest(cs.begin() + 2, cs.end());
  if (bound_vars(sequence(rest)).contains(pick->var))
    throw SyntaxError("measurement variable '" + pick->var + "' is bound outside the measurement");
  rest.push_back(cs[0]);
  rest.push_back(cs[1]);
  return sequence(rest);
}

Formula upsilon_plus(const std::set<std::string>& vars) {
  std::vector<Formula> eqs;
  for (const auto& x : vars) eqs.push_back(eq(post_var(x), var(x)));
  return conjunction(eqs);
}

Formula upsilon_plus(const Program& p, const std::set<std::string>& exclude) {
  std::set<std::string> vars;
  for (const auto& x : bound_vars(p))
    if (!exclude.contains(x)) vars.insert(x);
  return upsilon_plus(vars);
}

}  // namespace hsmon
