#include "hsmon/evaluation.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <mutex>
#include <thread>

namespace hsmon {

void PRReport::add(const StepOutcome& o) {
  ++steps;
  bool alarm = !o.model_verdict.satisfied;
  if (!alarm) ++all_nonalarms;
  if (o.conformant) {
    if (alarm) ++false_alarms;
    else ++true_nonalarms;
  } else {
    if (alarm) ++true_alarms;
    else ++missed_faults;
  }
  if (o.action == Action::FallbackEngaged) ++fallback_engagements;
  if (!o.invariant_after) ++invariant_violations;
}

void PRReport::finish() {
  precision.reset();
  recall.reset();
  if (all_nonalarms > 0) precision = static_cast<double>(true_nonalarms) / all_nonalarms;
  if (true_nonalarms + false_alarms > 0)
    recall = static_cast<double>(true_nonalarms) / (true_nonalarms + false_alarms);
}

long sensor_audit_failures(const Scenario& s, const Trace& t) {
  if (s.nf.kind != NormalFormKind::Measurement) return 0;
  const std::string yh = s.nf.pick->var, y = s.nf.measured;
  long bad = 0;
  for (const auto& r : t.rows) {
    double d = s.sensor_delta(r.state);
    if (std::fabs(lookup(r.state, yh) - lookup(r.state, y)) > d + 1e-9) ++bad;
  }
  return bad;
}

EvaluationResult run_evaluation(const Scenario& s, const EvaluationOptions& opt) {
  auto start = std::chrono::steady_clock::now();
  audit_scenario(s);
  const int runs = opt.runs.value_or(s.runs);
  const int steps = opt.steps.value_or(s.steps);
  const std::uint64_t seed = opt.seed.value_or(s.seed);
  if (runs < 0 || steps < 0) throw ScenarioError("runs and steps must be >= 0");
  SandboxConfig cfg = sandbox_config(s);

  {
    Sandbox probe(cfg);
    try {
      probe.validate_fallback([&s](std::mt19937_64& rng) { return s.sample_start(rng); },
                              opt.fallback_samples, split_seed(seed, 0xfa11));
    } catch (const std::runtime_error& e) {
      throw ScenarioError("scenario '" + s.name + "': " + e.what());
    }
  }

  EvaluationResult result;
  result.traces.resize(static_cast<std::size_t>(runs));
  std::vector<PRReport> per_run(static_cast<std::size_t>(runs));
  std::atomic<int> next{0};
  std::mutex error_mutex;
  std::exception_ptr error;
  unsigned threads = opt.threads ? opt.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(std::max(runs, 1)));
  auto worker = [&] {
    try {
      Sandbox box(cfg);
      for (int i = next++; i < runs; i = next++) {
        std::mt19937_64 rng(split_seed(seed, static_cast<std::uint64_t>(i) + 1));
        State st = s.sample_start(rng);
        Trace t = box.run_episode(st, steps, rng);
        PRReport& r = per_run[static_cast<std::size_t>(i)];
        for (const auto& row : t.rows)
          if (row.outcome) r.add(*row.outcome);
        r.sensor_audit_failures = sensor_audit_failures(s, t);
        r.stalled_runs = t.stalled ? 1 : 0;
        if (opt.keep_traces) result.traces[static_cast<std::size_t>(i)] = std::move(t);
      }
    } catch (...) {
      std::lock_guard<std::mutex> lock(error_mutex);
      if (!error) error = std::current_exception();
      next = runs;
    }
  };
  std::vector<std::thread> pool;
  for (unsigned k = 0; k < threads; ++k) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);

  PRReport& total = result.report;
  total.scenario = s.name;
  total.monitor = to_string(s.monitor);
  total.runs = runs;
  total.steps_per_run = steps;
  for (const auto& r : per_run) {
    total.steps += r.steps;
    total.true_nonalarms += r.true_nonalarms;
    total.all_nonalarms += r.all_nonalarms;
    total.false_alarms += r.false_alarms;
    total.true_alarms += r.true_alarms;
    total.missed_faults += r.missed_faults;
    total.fallback_engagements += r.fallback_engagements;
    total.invariant_violations += r.invariant_violations;
    total.sensor_audit_failures += r.sensor_audit_failures;
    total.stalled_runs += r.stalled_runs;
  }
  total.finish();
  if (total.sensor_audit_failures > 0)
    throw ScenarioError("scenario '" + s.name + "': sensor audit failed on " +
                        std::to_string(total.sensor_audit_failures) + " rows");
  total.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

std::vector<double> drift_measurements() {
  return {0.52, 0.47, 0.55, 0.45, 0.53, 0.50, 0.58, 0.72, 0.95};
}

std::vector<double> halved_drift_measurements() {
  return {0.51, 0.485, 0.525, 0.475, 0.515, 0.50, 0.54, 0.61};
}

DriftResult run_drift(const Scenario& s, const std::vector<double>& measurements) {
  if (s.nf.kind != NormalFormKind::Measurement)
    throw ScenarioError("drift replay needs a measurement normal form");
  if (measurements.empty()) throw ScenarioError("drift replay needs at least one measurement");
  const std::string yh = s.nf.pick->var;
  MonitorContext ctx = s.monitor_context();
  ctx.estimator = EstimatorSpec::shift_and_clip();
  SearchConfig search{s.tolerance, s.grid, s.tolerance};
  Monitor pairwise(build_monitor(s.body, MonitorKind::Pairwise, ctx), search);
  RollingMonitor rolling(build_monitor(s.body, MonitorKind::Rolling, ctx),
                         EstimatorSpec::shift_and_clip(), s.effect, search);
  Monitor control(build_monitor(s.body, MonitorKind::ControlOnly, ctx), search);
  Controller decide = random_controller(s.nf.ctrl, s.adversary);

  std::mt19937_64 rng(s.seed);
  State cur = s.sample_start(rng);
  cur[yh] = measurements[0];
  auto hide = [&s](const State& st) {
    State out;
    for (const auto& [k, v] : st)
      if (!s.unobservable.contains(k)) out[k] = v;
    return out;
  };

  DriftResult r;
  r.steps.push_back({0, measurements[0], true, true, false, rolling.estimate()});
  for (std::size_t k = 1; k < measurements.size(); ++k) {
    std::optional<State> d = decide(cur, rng);
    if (!d || !control.evaluate({hide(cur), hide(*d)}).satisfied)
      throw ScenarioError("drift replay: the scripted decision fails the control monitor");
    RunConfig rc = s.run_config();
    // Scripted readings may leave the sensor model; that is the point.
    rc.enforce_tests = false;
    double m = measurements[k];
    rc.assign_any_hook = [yh, m](const std::string& x, const State&) -> std::optional<double> {
      return x == yh ? std::optional<double>(m) : std::nullopt;
    };
    RunResult run = run_program(s.nf.physics, *d, rc, rng);
    TransitionPair pair{hide(cur), hide(run.state)};
    DriftStep st;
    st.t = static_cast<int>(k);
    st.measurement = m;
    st.pairwise = pairwise.evaluate(pair).satisfied;
    Verdict rv = rolling.evaluate(pair);
    st.rolling = rv.satisfied;
    st.rolling_history_inconsistent = rv.history_inconsistent;
    st.estimate = rolling.estimate();
    if (!st.pairwise && !r.pairwise_first_violation) r.pairwise_first_violation = st.t;
    if (!st.rolling && !r.rolling_first_violation) r.rolling_first_violation = st.t;
    r.steps.push_back(st);
    cur = run.state;
  }
  return r;
}

DriftResult drift_scenario() {
  return run_drift(load_scenario(resolve_scenario("drift")), drift_measurements());
}

}  // namespace hsmon
