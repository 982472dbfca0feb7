#include "hsmon/monitors.hpp"

#include <cmath>
#include <stdexcept>

#include "hsmon/rewrite.hpp"

namespace hsmon {

const char* to_string(MonitorKind k) {
  switch (k) {
    case MonitorKind::Exact: return "exact";
    case MonitorKind::Disturbance: return "disturbance";
    case MonitorKind::Pairwise: return "pairwise";
    case MonitorKind::Rolling: return "rolling";
    case MonitorKind::ControlOnly: return "control";
  }
  return "?";
}

MonitorKind parse_monitor_kind(const std::string& s) {
  for (auto k : {MonitorKind::Exact, MonitorKind::Disturbance, MonitorKind::Pairwise,
                 MonitorKind::Rolling, MonitorKind::ControlOnly})
    if (s == to_string(k)) return k;
  throw std::invalid_argument("unknown monitor kind '" + s + "'");
}

namespace {

std::set<std::string> observed_vars(const Program& p, const std::set<std::string>& exclude) {
  std::set<std::string> out;
  for (const auto& x : bound_vars(p))
    if (!exclude.contains(x)) out.insert(x);
  return out;
}

void require(const NormalFormInfo& nf, NormalFormKind want, MonitorKind kind) {
  if (nf.kind != want)
    throw SyntaxError(std::string(to_string(kind)) + " monitor needs a " + to_string(want) +
                      " normal form, found " + to_string(nf.kind));
}

Formula within(const Term& center, const Term& lo, const Term& hi, const std::string& y) {
  return f_and(le(plus(center, lo), var(y)), le(var(y), plus(center, hi)));
}

}  // namespace

MonitorSpec build_monitor(const Program& body, MonitorKind kind, const MonitorContext& ctx) {
  MonitorSpec m;
  m.kind = kind;
  m.nf = normal_form_of(body);
  Formula inv = ctx.diff_invariants ? ctx.diff_invariants : f_true();
  std::set<std::string> exclude = ctx.unobservable;

  if (kind == MonitorKind::ControlOnly) {
    m.observed = observed_vars(m.nf.ctrl, exclude);
    m.characterization = diamond(m.nf.ctrl, upsilon_plus(m.observed));
    return m;
  }

  Program over = count_odes(body) == 0 ? body : overapproximate_plant(body, inv);
  switch (kind) {
    case MonitorKind::Exact:
      m.observed = observed_vars(body, exclude);
      m.characterization = diamond(over, upsilon_plus(m.observed));
      break;
    case MonitorKind::Disturbance: {
      require(m.nf, NormalFormKind::Disturbance, kind);
      const std::string& u = m.nf.pick->var;
      exclude.insert(u);
      m.delta = m.nf.pick->radius;
      m.observed = observed_vars(body, exclude);
      m.characterization =
          diamond(over, exists(VarName{u, true}, upsilon_plus(m.observed)));
      break;
    }
    case MonitorKind::Pairwise:
    case MonitorKind::Rolling: {
      require(m.nf, NormalFormKind::Measurement, kind);
      const std::string y = m.nf.measured;
      const std::string yh = m.nf.pick->var;
      m.measured = y;
      m.measurement = yh;
      m.delta = m.nf.pick->radius;
      exclude.insert(y);
      m.observed = observed_vars(body, exclude);
      if (kind == MonitorKind::Pairwise) {
        Formula post = exists(VarName{y, true}, upsilon_plus(m.observed));
        m.characterization = exists(
            VarName{y, false},
            f_and(within(var(yh), neg(m.delta), m.delta, y), diamond(over, post)));
        break;
      }
      if (!ctx.estimator) throw SyntaxError("rolling monitor needs an estimator");
      const std::string y_prev = y + "_prev", yh_prev = yh + "_prev";
      std::set<std::string> used = all_vars(over);
      for (const std::string& g : {y_prev, yh_prev, std::string(kEstL), std::string(kEstU)})
        if (used.contains(g)) throw SyntaxError("rolling monitor variable '" + g + "' is not fresh");
      Program upd = update_program(*ctx.estimator, kEstL, kEstU, var(yh_prev), var(yh),
                                   minus(var(y), var(y_prev)), m.delta);
      Program prog = sequence({assign(y_prev, var(y)), assign(yh_prev, var(yh)), over, upd});
      m.observed.insert(kEstL);
      m.observed.insert(kEstU);
      Formula post = exists(VarName{y, true}, upsilon_plus(m.observed));
      m.characterization =
          exists(VarName{y, false},
                 f_and(within(var(yh), var(kEstL), var(kEstU), y), diamond(prog, post)));
      break;
    }
    case MonitorKind::ControlOnly: break;
  }
  return m;
}

Monitor::Monitor(MonitorSpec spec, SearchConfig cfg)
    : spec_(std::move(spec)), report_(synthesize(spec_.characterization)), decider_(cfg) {}

Verdict Monitor::evaluate(const TransitionPair& pair) {
  auto start = std::chrono::steady_clock::now();
  Verdict v;
  v.evaluated_formula = report_.output;
  Env env = make_env(pair);
  v.satisfied = decider_.decide(report_.output, env, &v.witness);
  if (!v.satisfied) v.witness.clear();
  v.elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return v;
}

RollingMonitor::RollingMonitor(MonitorSpec spec, EstimatorSpec estimator, Term effect,
                               SearchConfig cfg)
    : monitor_(std::move(spec), cfg), estimator_(std::move(estimator)), effect_(std::move(effect)) {
  if (monitor_.spec().kind != MonitorKind::Rolling)
    throw SyntaxError("rolling monitor instance needs a rolling monitor spec");
  est_ = {NAN, NAN};
}

double RollingMonitor::delta_at(const State& s) const {
  Env env = make_env(s);
  return eval_term(monitor_.spec().delta, env);
}

void RollingMonitor::reset(const State& at) {
  double d = delta_at(at);
  est_ = {-d, d};
}

Verdict RollingMonitor::evaluate(const TransitionPair& pair) {
  if (std::isnan(est_.l)) reset(pair.pre);
  const std::string& yh = monitor_.spec().measurement;
  double yh0 = lookup(pair.pre, yh), yh1 = lookup(pair.post, yh);
  Env env = make_env(pair);
  double effect = eval_term(effect_, env);
  EstimatorUpdate upd = update(estimator_, yh0, yh1, effect, delta_at(pair.pre), est_);
  if (!upd.history_consistent) {
    Verdict v;
    v.history_inconsistent = true;
    v.evaluated_formula = monitor_.formula();
    reset(pair.post);
    return v;
  }
  TransitionPair filled = pair;
  filled.pre[kEstL] = est_.l;
  filled.pre[kEstU] = est_.u;
  filled.post[kEstL] = upd.estimate.l;
  filled.post[kEstU] = upd.estimate.u;
  Verdict v = monitor_.evaluate(filled);
  if (v.satisfied) {
    est_ = upd.estimate;
  } else {
    reset(pair.post);
  }
  return v;
}

Formula contraction_formula(const Formula& inv, const std::string& y, const std::string& yh,
                            const Term& l, const Term& u) {
  Term sl = simplify(l), su = simplify(u);
  auto zero = [](const Term& t) { return t->kind == TermKind::Const && t->value == 0; };
  if (zero(sl) && zero(su)) return substitute(inv, Substitution{{y, var(yh)}});
  return forall(VarName{y, false}, implies(within(var(yh), l, u, y), inv));
}

VariationReport variation_bounds(const std::vector<VariationStep>& trace, double delta,
                                 double tol) {
  VariationReport r;
  if (trace.empty()) return r;
  const double y0 = trace.front().y_true_pre;
  double sum = 0;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const VariationStep& s = trace[i];
    if (!s.satisfied) break;
    for (double v : {s.y_true_pre, s.y_true_post, s.yh_pre, s.yh_post, s.effect})
      if (!std::isfinite(v)) throw EvalError("non-finite ground truth in variation trace");
    ++r.steps_checked;
    double step = std::fabs(s.yh_post - (s.yh_pre + s.effect));
    r.max_step_deviation = std::max(r.max_step_deviation, step);
    if (step > 2 * delta + tol && !r.first_step_violation) r.first_step_violation = i;
    sum += s.effect;
    double n = static_cast<double>(i + 1);
    double cumulative = std::fabs(s.y_true_post - (y0 + sum));
    double bound = 2 * delta * (n + 1);
    if (bound > 0) r.max_cumulative_ratio = std::max(r.max_cumulative_ratio, cumulative / bound);
    if (cumulative > bound + tol && !r.first_cumulative_violation) r.first_cumulative_violation = i;
  }
  return r;
}

}  // namespace hsmon
