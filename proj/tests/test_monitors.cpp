#include <doctest.h>

#include <cmath>
#include <random>
#include <string>

#include "hsmon/evaluation.hpp"
#include "hsmon/monitors.hpp"
#include "hsmon/sandbox.hpp"
#include "hsmon/scenario.hpp"
#include "hsmon/syntax.hpp"

using namespace hsmon;

namespace {

Scenario shipped(const std::string& name) { return load_scenario(resolve_scenario(name)); }

Monitor exact_monitor(const std::string& program) {
  return Monitor(build_monitor(parse_program(program), MonitorKind::Exact, {}));
}

}  // namespace

TEST_CASE("two-branch monitor verdicts") {
  Monitor m = exact_monitor("a:=a+1 ++ b:=*; ?b<=3");
  auto verdict = [&](double a, double b, double ap, double bp) {
    return m.evaluate({{{"a", a}, {"b", b}}, {{"a", ap}, {"b", bp}}}).satisfied;
  };
  CHECK(verdict(2, 3, 3, 3));
  CHECK_FALSE(verdict(2, 3, 2, 4));
  CHECK(verdict(2, 3, 2, -7));
  CHECK_FALSE(verdict(2, 3, 3, 2));
}

TEST_CASE("identity transition on a skip-capable program") {
  Monitor m = exact_monitor("x:=x+1 ++ ?x>=0");
  State s{{"x", 1.5}};
  CHECK(m.evaluate({s, s}).satisfied);
}

TEST_CASE("flight actuator monitor hides the realized turn rate") {
  Scenario s = shipped("flight_actuator");
  MonitorSpec spec = s.model_monitor_spec();
  CHECK(spec.kind == MonitorKind::Disturbance);
  CHECK(spec.nf.pick->var == "w");
  CHECK_FALSE(spec.observed.contains("w"));
  for (const char* x : {"x", "y", "th", "wp", "t"}) CHECK(spec.observed.contains(x));
  Monitor m(spec, {1e-6, 101, 1e-6});
  CHECK(m.synthesis().residual_quantifiers == 0);
  std::set<std::string> fv = free_vars(m.formula());
  CHECK_FALSE(fv.contains("w"));
  CHECK_FALSE(fv.contains("w_post"));
}

TEST_CASE("flight sensor monitor compares the measurement") {
  Scenario s = shipped("flight_sensor");
  MonitorSpec spec = s.model_monitor_spec();
  CHECK(spec.kind == MonitorKind::Rolling);
  CHECK(spec.measured == "vi");
  CHECK(spec.measurement == "vih");
  CHECK(spec.observed.contains("vih"));
  CHECK_FALSE(spec.observed.contains("vi"));
  MonitorSpec pw = build_monitor(s.body, MonitorKind::Pairwise, s.monitor_context());
  CHECK(pw.observed.contains("vih"));
  for (const auto& x : pw.observed) CHECK(spec.observed.contains(x));
}

TEST_CASE("pairwise with zero radius agrees with exact") {
  const char* body =
      "f:=*; ?(-xh <= f & f <= 10-xh); t:=0; {x'=f, t'=1 & x>=0 & t<=1}; ?t=1; "
      "xh:=*; ?(x-0 <= xh & xh <= x+0)";
  Program p = parse_program(body);
  MonitorContext ctx;
  ctx.diff_invariants = parse_formula("x=x_0+f*(t-t_0) & t>=t_0");
  SearchConfig cfg{1e-6, 101, 1e-6};
  Monitor exact(build_monitor(p, MonitorKind::Exact, ctx), cfg);
  Monitor pairwise(build_monitor(p, MonitorKind::Pairwise, ctx), cfg);
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> level(0, 10), flow(-2, 12), jitter(-0.5, 0.5);
  int disagreements = 0, satisfied = 0;
  for (int i = 0; i < 1000; ++i) {
    double xh = level(rng), f = flow(rng);
    double xp = xh + f + (i % 3 == 0 ? 0 : jitter(rng));
    double tp = i % 7 == 0 ? 0.5 : 1;
    State pre{{"x", xh}, {"xh", xh}, {"f", 0}, {"t", 0}};
    State post{{"x", xp}, {"xh", xp}, {"f", f}, {"t", tp}};
    bool e = exact.evaluate({pre, post}).satisfied;
    State pre_obs = pre, post_obs = post;
    pre_obs.erase("x");
    post_obs.erase("x");
    bool w = pairwise.evaluate({pre_obs, post_obs}).satisfied;
    satisfied += e;
    if (e != w) ++disagreements;
  }
  CHECK(disagreements == 0);
  CHECK(satisfied > 100);
  CHECK(satisfied < 900);
}

TEST_CASE("disturbance monitor preserves the invariant") {
  for (const char* name : {"watertank_actuator", "flight_actuator"}) {
    CAPTURE(name);
    Scenario s = shipped(name);
    SandboxConfig cfg = sandbox_config(s);
    cfg.fault_probability = 0.5;
    cfg.fault_offset = {0, 0.8};
    cfg.preserve_invariant = false;
    Sandbox box(cfg);
    std::mt19937_64 rng(2024);
    int counterexamples = 0, alarms = 0;
    for (int i = 0; i < 10000; ++i) {
      State start = s.sample_start(rng);
      box.reset();
      StepOutcome o = box.step(start, rng);
      if (!o.model_verdict.satisfied) {
        ++alarms;
        continue;
      }
      if (!eval_formula(s.invariant, make_env(o.post), 1e-6)) ++counterexamples;
    }
    CHECK(counterexamples == 0);
    CHECK(alarms > 1000);
  }
}

TEST_CASE("pairwise monitor preserves the invariant under contraction") {
  Scenario s = shipped("watertank_sensor");
  const double D = 0.1, m = 10;
  Monitor mon(build_monitor(s.body, MonitorKind::Pairwise, s.monitor_context()),
              {1e-6, 101, 1e-6});
  Formula contraction = contraction_formula(parse_formula("0<=x & x<=10"), "x", "xh",
                                            parse_term("-(0.1)"), parse_term("0.1"));
  Decider decider({1e-9, 101, 0});
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> unit(0, 1);
  int counterexamples = 0, accepted = 0;
  for (int i = 0; i < 10000; ++i) {
    State pre = s.sample_start(rng);
    Env pre_env = make_env(pre);
    REQUIRE(decider.decide(contraction, pre_env));
    double lo = 3 * D - pre["xh"], hi = m - 3 * D - pre["xh"];
    double f = lo + (hi - lo) * unit(rng);
    // Out-of-model decisions and disturbed flows.
    if (i % 5 == 0) f += (unit(rng) - 0.5) * 2;
    double x = pre["x"] + f + (i % 2 ? (unit(rng) - 0.5) * 0.6 : 0);
    if (x < 0) continue;
    double xh = x + D * (i % 3 == 0 ? (unit(rng) < 0.5 ? -1 : 1) : 2 * unit(rng) - 1);
    State pre_obs{{"xh", pre["xh"]}, {"f", pre["f"]}, {"t", pre["t"]}};
    State post_obs{{"xh", xh}, {"f", f}, {"t", 1}};
    if (!mon.evaluate({pre_obs, post_obs}).satisfied) continue;
    ++accepted;
    Env post_env{{"x", x}, {"xh", xh}};
    if (x < -1e-9 || x > m + 1e-9 || !decider.decide(contraction, post_env)) ++counterexamples;
  }
  CHECK(counterexamples == 0);
  CHECK(accepted > 3000);
}

TEST_CASE("model runs raise no alarms") {
  for (const char* name : {"flight_original", "flight_actuator", "flight_sensor",
                           "watertank_original", "watertank_actuator", "watertank_sensor"}) {
    CAPTURE(name);
    Scenario s = shipped(name);
    s.fault_probability = 0;
    EvaluationOptions opt;
    opt.runs = 10;
    opt.steps = 20;
    opt.keep_traces = false;
    opt.fallback_samples = 50;
    PRReport r = run_evaluation(s, opt).report;
    CHECK(r.false_alarms == 0);
    CHECK(r.true_alarms == 0);
    CHECK(r.invariant_violations == 0);
    CHECK(r.steps > 0);
  }
}

TEST_CASE("contraction formula examples") {
  Formula inv = parse_formula("y>c");
  Formula band = contraction_formula(inv, "y", "yh", parse_term("-d"), parse_term("d"));
  CHECK(band->kind == FormulaKind::Forall);
  Decider decider;
  int mismatches = 0;
  for (double yh = -1; yh <= 1; yh += 0.05)
    for (double c : {-0.5, 0.0, 0.3})
      for (double d : {0.0, 0.1, 0.25}) {
        Env env{{"yh", yh}, {"c", c}, {"d", d}};
        bool expected = yh - d > c;
        if (std::fabs(yh - d - c) < 1e-9) continue;
        if (decider.decide(band, env) != expected) ++mismatches;
      }
  CHECK(mismatches == 0);

  Formula point = contraction_formula(inv, "y", "yh", parse_term("0"), parse_term("0"));
  CHECK(to_string(point) == "yh>c");
}

TEST_CASE("water tank controller is contraction safe") {
  Scenario s = shipped("watertank_sensor");
  Formula contraction = contraction_formula(parse_formula("0<=x & x<=10"), "x", "xh",
                                            parse_term("-(0.1)"), parse_term("0.1"));
  Decider decider;
  RunConfig rc = s.run_config();
  std::mt19937_64 rng(8);
  int failures = 0;
  for (int i = 0; i < 500; ++i) {
    State st = s.sample_start(rng);
    Env env = make_env(st);
    REQUIRE(decider.decide(contraction, env));
    RunResult r = run_program(s.body, st, rc, rng);
    REQUIRE_FALSE(r.blocked);
    Env after = make_env(r.state);
    if (!decider.decide(contraction, after)) ++failures;
  }
  CHECK(failures == 0);
}

TEST_CASE("variation bounds examples") {
  std::vector<VariationStep> still;
  for (int i = 0; i < 5; ++i) still.push_back({1, 1, 1, 1, 0, true});
  VariationReport r = variation_bounds(still, 0);
  CHECK(r.steps_checked == 5);
  CHECK_FALSE(r.first_step_violation);
  CHECK_FALSE(r.first_cumulative_violation);
  CHECK(r.max_step_deviation == 0);

  // Drift replay: every accepted step moves by at most 2D while the
  // measurements drift further than that overall.
  DriftResult d = drift_scenario();
  std::vector<VariationStep> trace;
  for (std::size_t k = 1; k < d.steps.size(); ++k)
    trace.push_back({0.5, 0.5, d.steps[k - 1].measurement, d.steps[k].measurement, 0,
                     d.steps[k].pairwise});
  r = variation_bounds(trace, 0.1, 1e-9);
  CHECK(r.steps_checked == 7);
  CHECK_FALSE(r.first_step_violation);
  CHECK_FALSE(r.first_cumulative_violation);
  CHECK(r.max_step_deviation <= 0.2 + 1e-9);
  CHECK(d.steps[7].measurement - d.steps[5].measurement > 0.2);

  std::vector<VariationStep> jump{{0, 0, 0, 0.3, 0, true}};
  CHECK(variation_bounds(jump, 0.1).first_step_violation == std::optional<std::size_t>(0));
  std::vector<VariationStep> lost{{0, 0.5, 0, 0, 0, true}};
  CHECK(variation_bounds(lost, 0.1).first_cumulative_violation == std::optional<std::size_t>(0));
}

TEST_CASE("drift replay verdicts") {
  DriftResult d = drift_scenario();
  REQUIRE(d.steps.size() == 9);
  for (int t = 1; t <= 7; ++t) CHECK(d.steps[static_cast<std::size_t>(t)].pairwise);
  CHECK_FALSE(d.steps[8].pairwise);
  CHECK(d.pairwise_first_violation == std::optional<int>(8));
  CHECK(d.rolling_first_violation == std::optional<int>(7));
  CHECK(d.steps[7].rolling_history_inconsistent);

  DriftResult h = run_drift(shipped("drift"), halved_drift_measurements());
  CHECK_FALSE(h.pairwise_first_violation);
  CHECK_FALSE(h.rolling_first_violation);
}

TEST_CASE("monitor construction rejects mismatched normal forms") {
  Program plain = parse_program("x:=x+1; {x'=1}");
  CHECK_THROWS_AS(build_monitor(plain, MonitorKind::Pairwise, {}), SyntaxError);
  CHECK_THROWS_AS(build_monitor(plain, MonitorKind::Disturbance, {}), SyntaxError);
}
