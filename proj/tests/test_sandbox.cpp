#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>
#include <string>

#include "hsmon/evaluation.hpp"
#include "hsmon/sandbox.hpp"
#include "hsmon/scenario.hpp"
#include "hsmon/syntax.hpp"

using namespace hsmon;

namespace {

Scenario shipped(const std::string& name) { return load_scenario(resolve_scenario(name)); }

bool holds(const Formula& f, const State& s) { return eval_formula(f, make_env(s), 1e-6); }

// Start states where straight flight is unsafe but circling is allowed.
State circling_only(const Scenario& s, std::mt19937_64& rng) {
  Formula straight = parse_formula("sin(th)*x-(cos(th)-1)*y>2");
  for (;;) {
    State st = s.sample_start(rng);
    if (st["w"] == 1 && !holds(straight, st)) return st;
  }
}

const char* kCounter = R"(
program { ?x<5; x:=x+1; t:=0; {x'=0, t'=1 & t<=1}; ?t=1 }
invariant { x<=6 }
safety { x<=6 }
init { x = 3; t = 0 }
)";

}  // namespace

TEST_CASE("adversarial proposals are replaced before actuation") {
  Scenario s = shipped("flight_original");
  s.controller = ControllerKind::Adversarial;
  s.fault_probability = 0;
  EvaluationOptions opt;
  opt.runs = 500;
  opt.steps = 10;
  opt.seed = 3;
  EvaluationResult r = run_evaluation(s, opt);
  CHECK(r.report.invariant_violations == 0);
  CHECK(r.report.fallback_engagements > 100);
  CHECK(r.report.true_alarms == 0);
  CHECK(r.report.false_alarms == 0);
  long unsafe = 0, unexplained = 0;
  for (const auto& t : r.traces) {
    bool previous_violated = false;
    for (const auto& row : t.rows) {
      if (!row.outcome) continue;
      const StepOutcome& o = *row.outcome;
      if (!o.safety_after) ++unsafe;
      if (o.action == Action::FallbackEngaged && o.control_satisfied && !previous_violated)
        ++unexplained;
      previous_violated = !o.model_verdict.satisfied;
    }
  }
  CHECK(unsafe == 0);
  CHECK(unexplained == 0);
}

TEST_CASE("straight-flight proposal in a circling-only state") {
  Scenario s = shipped("flight_original");
  Sandbox box(sandbox_config(s));
  std::mt19937_64 rng(17);
  for (int i = 0; i < 50; ++i) {
    State st = circling_only(s, rng);
    State proposal = st;
    proposal["w"] = 0;
    box.reset();
    StepOutcome o = box.step(st, rng, {std::nullopt, proposal});
    CHECK_FALSE(o.control_satisfied);
    CHECK(o.action == Action::FallbackEngaged);
    CHECK(o.decided.at("w") == 1);
    CHECK(o.invariant_after);
    CHECK(holds(s.safety, o.post));
  }
}

TEST_CASE("model controller without disturbance passes through") {
  for (const char* name : {"flight_original", "watertank_actuator"}) {
    CAPTURE(name);
    Scenario s = shipped(name);
    s.fault_probability = 0;
    Sandbox box(sandbox_config(s));
    std::mt19937_64 rng(4);
    Trace t = box.run_episode(s.sample_start(rng), 50, rng);
    REQUIRE(t.rows.size() == 51);
    for (const auto& row : t.rows) {
      if (!row.outcome) continue;
      CHECK(row.outcome->action == Action::PassThrough);
      CHECK(row.outcome->model_verdict.satisfied);
      CHECK(row.outcome->conformant);
    }
  }
}

TEST_CASE("zero-step episode") {
  Scenario s = shipped("flight_original");
  Sandbox box(sandbox_config(s));
  std::mt19937_64 rng(1);
  State start = s.sample_start(rng);
  Trace t = box.run_episode(start, 0, rng);
  REQUIRE(t.rows.size() == 1);
  CHECK_FALSE(t.rows[0].outcome);
  CHECK(t.rows[0].state == start);
}

TEST_CASE("single disturbance spike is detected and recovered") {
  for (const char* name : {"watertank_actuator", "flight_actuator"}) {
    CAPTURE(name);
    Scenario s = shipped(name);
    s.fault_probability = 0;
    Sandbox box(sandbox_config(s));
    std::mt19937_64 rng(9);
    int spikes = 0;
    for (int i = 0; i < 200; ++i) {
      box.reset();
      State cur = s.sample_start(rng);
      StepOutcome first = box.step(cur, rng);
      REQUIRE(first.model_verdict.satisfied);
      State mu = first.post;
      StepOutcome spike = box.step(mu, rng, {0.3, std::nullopt});
      // The spike may have been dropped to keep the invariant.
      if (!spike.fault) continue;
      ++spikes;
      CHECK_FALSE(spike.model_verdict.satisfied);
      StepOutcome next = box.step(spike.post, rng);
      CHECK(next.action == Action::FallbackEngaged);
      CHECK(next.invariant_after);

      Sandbox fresh(sandbox_config(s));
      State recovered = fresh.recover(mu, rng);
      CHECK(holds(s.invariant, recovered));
    }
    CHECK(spikes > 20);
  }
}

TEST_CASE("fallback validation") {
  Scenario s = shipped("flight_original");
  SandboxConfig cfg = sandbox_config(s);
  auto sampler = [&s](std::mt19937_64& rng) { return s.sample_start(rng); };
  Sandbox good(cfg);
  CHECK_NOTHROW(good.validate_fallback(sampler, 1000, 5));

  cfg.fallback = parse_program("w:=0");
  Sandbox bad(cfg);
  CHECK_THROWS_AS(bad.validate_fallback(sampler, 1000, 5), std::runtime_error);

  cfg.fallback = parse_program("?false");
  Sandbox blocking(cfg);
  CHECK_THROWS_AS(blocking.validate_fallback(sampler, 10, 5), std::runtime_error);
}

TEST_CASE("invariant must hold at step entry") {
  Scenario s = shipped("watertank_original");
  Sandbox box(sandbox_config(s));
  std::mt19937_64 rng(1);
  CHECK_THROWS_AS(box.step({{"x", 11}, {"f", 0}, {"t", 0}}, rng), EvalError);
}

TEST_CASE("episode stops when the model blocks") {
  Scenario s = parse_scenario(kCounter, "counter");
  Sandbox box(sandbox_config(s));
  std::mt19937_64 rng(1);
  Trace t = box.run_episode(s.sample_start(rng), 10, rng);
  CHECK(t.stalled);
  REQUIRE(t.rows.size() == 3);
  CHECK(t.rows.back().state.at("x") == 5);
}

TEST_CASE("trace csv") {
  Scenario s = shipped("watertank_sensor");
  auto render = [&] {
    Sandbox box(sandbox_config(s));
    std::mt19937_64 rng(21);
    std::ostringstream out;
    write_trace_csv(out, box.run_episode(s.sample_start(rng), 5, rng), 0);
    return out.str();
  };
  std::string a = render();
  CHECK(a == render());
  std::istringstream in(a);
  std::string header;
  std::getline(in, header);
  CHECK(header == "run,step,time,f,t,x,xh,est_l,est_u,control,verdict,action,fault,conformant");
  int lines = 0;
  for (std::string line; std::getline(in, line);) ++lines;
  CHECK(lines == 6);
}
