#include "hsmon/sandbox.hpp"

#include <cmath>
#include <stdexcept>

#include "hsmon/syntax.hpp"

namespace hsmon {

const char* to_string(DecisionSource s) {
  switch (s) {
    case DecisionSource::Model: return "model";
    case DecisionSource::Adversary: return "adversary";
    case DecisionSource::Fallback: return "fallback";
  }
  return "?";
}

const char* to_string(Action a) {
  return a == Action::PassThrough ? "pass-through" : "fallback-engaged";
}

SandboxConfig sandbox_config(const Scenario& s) {
  SandboxConfig c;
  c.body = s.body;
  c.nf = s.nf;
  c.invariant = s.invariant;
  c.safety = s.safety;
  c.fallback = s.fallbacks.empty() ? s.nf.ctrl : s.fallback_program();
  c.control_monitor = s.control_monitor_spec();
  c.model_monitor = s.model_monitor_spec();
  c.effect = s.effect;
  c.unobservable = s.unobservable;
  c.search = {s.tolerance, s.grid, s.tolerance};
  c.run = s.run_config();
  c.sensor_noise = s.sensor_noise;
  c.fault_probability = s.fault_probability;
  c.fault_var = s.fault_var;
  c.fault_offset = s.fault_offset;
  if (s.controller == ControllerKind::Adversarial) {
    c.controller = random_controller(s.nf.ctrl, s.adversary.empty() ? s.init : s.adversary);
    c.controller_source = DecisionSource::Adversary;
  }
  return c;
}

Controller random_controller(const Program& ctrl, const std::map<std::string, InitRange>& ranges) {
  std::set<std::string> vars = bound_vars(ctrl);
  return [vars, ranges](const State& current, std::mt19937_64& rng) -> std::optional<State> {
    State s = current;
    for (const auto& x : vars) {
      auto it = ranges.find(x);
      if (it != ranges.end()) s[x] = it->second.sample(rng);
    }
    return s;
  };
}

namespace {

constexpr int kRetries = 50;

std::optional<State> run_until_unblocked(const Program& p, const State& s, const RunConfig& cfg,
                                         std::mt19937_64& rng) {
  for (int i = 0; i < kRetries; ++i) {
    RunResult r = run_program(p, s, cfg, rng);
    if (!r.blocked) return r.state;
  }
  return std::nullopt;
}

}  // namespace

Sandbox::Sandbox(SandboxConfig cfg) : cfg_(std::move(cfg)) {
  control_ = std::make_unique<Monitor>(cfg_.control_monitor, cfg_.search);
  if (cfg_.model_monitor.kind == MonitorKind::Rolling) {
    rolling_ = std::make_unique<RollingMonitor>(cfg_.model_monitor, EstimatorSpec::shift_and_clip(),
                                                cfg_.effect, cfg_.search);
  } else {
    model_ = std::make_unique<Monitor>(cfg_.model_monitor, cfg_.search);
  }
}

const Formula& Sandbox::model_formula() const {
  return rolling_ ? rolling_->monitor().formula() : model_->formula();
}

State Sandbox::observable(const State& s) const {
  State out;
  for (const auto& [k, v] : s)
    if (!cfg_.unobservable.contains(k)) out[k] = v;
  return out;
}

void Sandbox::reset() {
  pending_fallback_ = false;
  time_ = 0;
  if (rolling_) rolling_ = std::make_unique<RollingMonitor>(cfg_.model_monitor,
                                                            EstimatorSpec::shift_and_clip(),
                                                            cfg_.effect, cfg_.search);
}

bool Sandbox::control_ok(const State& current, const State& decided) {
  return control_->evaluate({observable(current), observable(decided)}).satisfied;
}

std::optional<State> Sandbox::run_fallback(const State& current, std::mt19937_64& rng) {
  return run_until_unblocked(cfg_.fallback, current, cfg_.run, rng);
}

void Sandbox::validate_fallback(const std::function<State(std::mt19937_64&)>& sampler,
                                int samples, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (int i = 0; i < samples; ++i) {
    State s = sampler(rng);
    std::optional<State> fb = run_fallback(s, rng);
    if (!fb) throw std::runtime_error("fallback blocks at a sampled state");
    if (!control_ok(s, *fb))
      throw std::runtime_error("fallback output fails the control monitor at a sampled state");
  }
}

State Sandbox::actuate_and_run(const State& decided, std::mt19937_64& rng,
                               std::optional<double> fault, bool* blocked) {
  RunConfig rc = cfg_.run;
  const NormalFormInfo& nf = cfg_.nf;
  if (nf.kind == NormalFormKind::Measurement && cfg_.sensor_noise != SensorNoise::Uniform) {
    const std::string yh = nf.pick->var, y = nf.measured;
    const Term radius = nf.pick->radius;
    const SensorNoise mode = cfg_.sensor_noise;
    rc.assign_any_hook = [yh, y, radius, mode, &rng](const std::string& x,
                                                     const State& s) -> std::optional<double> {
      if (x != yh) return std::nullopt;
      if (mode == SensorNoise::Zero) return s.at(y);
      double r = eval_term(radius, make_env(s));
      return std::bernoulli_distribution(0.5)(rng) ? s.at(y) + r : s.at(y) - r;
    };
  }
  *blocked = true;
  RunResult a = run_program(nf.actuation, decided, rc, rng);
  if (a.blocked) return decided;
  State s = a.state;
  double commanded = 0;
  if (fault) {
    const std::string& v = cfg_.fault_var;
    commanded = lookup(s, v);
    if (nf.kind == NormalFormKind::Disturbance && nf.pick->var == v) {
      Env env = make_env(decided);
      double c = eval_term(nf.pick->center, env), r = eval_term(nf.pick->radius, env);
      s[v] = c + std::copysign(r + std::fabs(*fault), *fault);
    } else {
      s[v] = commanded + *fault;
    }
  }
  RunResult b = run_program(nf.physics, s, rc, rng);
  if (b.blocked) return decided;
  *blocked = false;
  if (fault && !cfg_.unobservable.contains(cfg_.fault_var)) b.state[cfg_.fault_var] = commanded;
  return b.state;
}

Verdict Sandbox::check_model(const State& pre, const State& post) {
  TransitionPair pair{observable(pre), observable(post)};
  return rolling_ ? rolling_->evaluate(pair) : model_->evaluate(pair);
}

StepOutcome Sandbox::step(const State& current, std::mt19937_64& rng, const StepScript& script) {
  const double tol = 1e-9;
  if (!eval_formula(cfg_.invariant, make_env(current), tol))
    throw EvalError("invariant does not hold at step entry");
  StepOutcome o;

  std::optional<State> proposal;
  if (script.proposal) {
    proposal = script.proposal;
    o.source = cfg_.controller_source;
  } else if (cfg_.controller) {
    proposal = cfg_.controller(current, rng);
    o.source = cfg_.controller_source;
  } else {
    proposal = run_until_unblocked(cfg_.nf.ctrl, current, cfg_.run, rng);
    o.source = DecisionSource::Model;
  }
  if (proposal) {
    o.proposed = *proposal;
    o.control_satisfied = control_ok(current, *proposal);
  } else {
    o.control_satisfied = false;
  }
  if (pending_fallback_ || !o.control_satisfied) {
    std::optional<State> fb = run_fallback(current, rng);
    if (!fb) throw NoAdmissibleDecision("fallback blocks");
    if (!control_ok(current, *fb)) throw EvalError("fallback fails the control monitor");
    o.decided = *fb;
    o.action = Action::FallbackEngaged;
  } else {
    o.decided = *proposal;
  }
  pending_fallback_ = false;

  bool fault = script.fault.has_value() ||
               (cfg_.fault_probability > 0 && std::bernoulli_distribution(cfg_.fault_probability)(rng));
  auto draw = [&] {
    if (script.fault) return *script.fault;
    double m = cfg_.fault_offset.first == cfg_.fault_offset.second
                   ? cfg_.fault_offset.first
                   : std::uniform_real_distribution<double>(cfg_.fault_offset.first,
                                                            cfg_.fault_offset.second)(rng);
    return std::bernoulli_distribution(0.5)(rng) ? m : -m;
  };
  bool blocked = true;
  State post;
  for (int attempt = 0; fault && attempt < 20; ++attempt) {
    o.fault_offset = draw();
    post = actuate_and_run(o.decided, rng, o.fault_offset, &blocked);
    if (!blocked && (!cfg_.preserve_invariant || eval_formula(cfg_.invariant, make_env(post), tol)))
      break;
    blocked = true;
    if (script.fault && !cfg_.preserve_invariant) break;
  }
  if (blocked) {
    fault = false;
    o.fault_offset = 0;
    for (int attempt = 0; blocked && attempt < kRetries; ++attempt)
      post = actuate_and_run(o.decided, rng, std::nullopt, &blocked);
    if (blocked) throw EvalError("plant blocks after the control decision");
  }
  o.fault = fault;
  o.post = post;
  Env env = make_env(post);
  o.invariant_after = eval_formula(cfg_.invariant, env, tol);
  o.safety_after = eval_formula(cfg_.safety, env, tol);

  o.model_verdict = check_model(current, post);
  if (rolling_) o.estimate = rolling_->estimate();
  if (!o.model_verdict.satisfied) pending_fallback_ = true;
  bool decision_ok = o.action == Action::FallbackEngaged || o.source == DecisionSource::Model ||
                     o.control_satisfied;
  o.conformant = !o.fault && decision_ok;
  if (cfg_.nf.duration && std::isfinite(cfg_.nf.eps)) time_ += cfg_.nf.eps;
  return o;
}

State Sandbox::recover(const State& mu, std::mt19937_64& rng) {
  std::optional<State> fb = run_fallback(mu, rng);
  if (!fb) throw NoAdmissibleDecision("fallback blocks");
  if (!control_ok(mu, *fb)) throw EvalError("fallback fails the control monitor");
  bool blocked = true;
  State post;
  for (int attempt = 0; blocked && attempt < kRetries; ++attempt)
    post = actuate_and_run(*fb, rng, std::nullopt, &blocked);
  if (blocked) throw EvalError("plant blocks after the fallback decision");
  return post;
}

Trace Sandbox::run_episode(const State& start, int steps, std::mt19937_64& rng) {
  reset();
  Trace t;
  t.rows.push_back({0, 0, start, std::nullopt});
  State cur = start;
  for (int i = 1; i <= steps; ++i) {
    StepOutcome o;
    try {
      o = step(cur, rng);
    } catch (const NoAdmissibleDecision&) {
      t.stalled = true;
      break;
    }
    cur = o.post;
    t.rows.push_back({i, time_, cur, std::move(o)});
  }
  return t;
}

std::vector<std::string> trace_columns(const Trace& trace) {
  std::set<std::string> vars;
  for (const auto& r : trace.rows)
    for (const auto& [k, v] : r.state) vars.insert(k);
  return {vars.begin(), vars.end()};
}

void write_trace_csv(std::ostream& out, const Trace& trace, int run) {
  std::vector<std::string> vars = trace_columns(trace);
  if (run >= 0) out << "run,";
  out << "step,time";
  for (const auto& v : vars) out << "," << v;
  out << ",est_l,est_u,control,verdict,action,fault,conformant\n";
  auto num = [](double v) { return std::isnan(v) ? std::string() : format_number(v); };
  for (const auto& r : trace.rows) {
    if (run >= 0) out << run << ",";
    out << r.step << "," << format_number(r.time);
    for (const auto& v : vars) {
      auto it = r.state.find(v);
      out << "," << (it == r.state.end() ? std::string() : format_number(it->second));
    }
    if (!r.outcome) {
      out << ",,,,,,,\n";
      continue;
    }
    const StepOutcome& o = *r.outcome;
    out << "," << num(o.estimate.l) << "," << num(o.estimate.u) << ","
        << (o.control_satisfied ? "ok" : "violated") << ","
        << (o.model_verdict.history_inconsistent ? "history-inconsistent"
            : o.model_verdict.satisfied          ? "satisfied"
                                                 : "violated")
        << "," << to_string(o.action) << "," << (o.fault ? format_number(o.fault_offset) : "")
        << "," << (o.conformant ? 1 : 0) << "\n";
  }
}

}  // namespace hsmon
