#include <doctest.h>

#include <cmath>
#include <random>

#include "gen.hpp"
#include "hsmon/sim.hpp"
#include "hsmon/syntax.hpp"

using namespace hsmon;

namespace {

const char* kFlight = "{x'=-1+cos(th)+w*y, y'=sin(th)-w*x, th'=-w}";

double distance(const State& a, const State& b, std::initializer_list<const char*> keys) {
  double d = 0;
  for (const char* k : keys) d = std::max(d, std::fabs(a.at(k) - b.at(k)));
  return d;
}

}  // namespace

TEST_CASE("scripted stop reaches a given endpoint") {
  // x' = x^2 + x from 2 reaches 3 at t = ln(9/8).
  RunConfig cfg;
  cfg.choice_policy = ChoicePolicy::Scripted;
  cfg.scripted_loop_counts = {1};
  cfg.scripted_stop_times = {std::log(9.0 / 8.0)};
  cfg.ode_step = 1e-3;
  RunResult r = run_program(parse_program("{x'=x^2+x}*"), {{"x", 2}}, cfg);
  REQUIRE_FALSE(r.blocked);
  CHECK(r.state["x"] == doctest::Approx(3).epsilon(1e-9));
  CHECK(r.effect.delta["x"] == doctest::Approx(1).epsilon(1e-9));
}

TEST_CASE("blocking tests") {
  CHECK(run_program(parse_program("?false"), {{"x", 0}}, {}).blocked);
  RunConfig cfg;
  cfg.enforce_tests = false;
  CHECK_FALSE(run_program(parse_program("?x>1"), {{"x", 0}}, cfg).blocked);
}

TEST_CASE("flight plant integration") {
  Program p = parse_program(kFlight);
  State s{{"x", 2}, {"y", 2}, {"th", M_PI}, {"w", 0}};
  OdeRun run = integrate_ode(p, s, 1, 0.01);
  CHECK(run.state["x"] == doctest::Approx(0).epsilon(1e-9));
  CHECK(run.state["y"] == doctest::Approx(2).epsilon(1e-9));
  CHECK(run.state["th"] == doctest::Approx(M_PI));

  // Turning flight: errors shrink with order about four.
  s["w"] = 1;
  s["th"] = 0.7;
  double h = 0.1;
  State a = integrate_ode(p, s, 1, h).state;
  State b = integrate_ode(p, s, 1, h / 2).state;
  State c = integrate_ode(p, s, 1, h / 4).state;
  double e1 = distance(a, b, {"x", "y", "th"}), e2 = distance(b, c, {"x", "y", "th"});
  CHECK(std::log2(e1 / e2) >= 3.5);

  // Constant rates are integrated exactly.
  State tank = integrate_ode(parse_program("{x'=-0.5, t'=1}"), {{"x", 3}, {"t", 0}}, 0.73, 0.01).state;
  CHECK(tank["x"] == 3 - 0.5 * 0.73);
  CHECK(tank["t"] == 0.73);
}

TEST_CASE("domain truncation and divergence") {
  OdeRun run = integrate_ode(parse_program("{x'=1 & x<=1}"), {{"x", 0}}, 2, 0.01);
  CHECK(run.truncated);
  CHECK(run.state["x"] <= 1);
  CHECK(run.state["x"] >= 0.99);
  CHECK(run.elapsed == doctest::Approx(run.state["x"]));
  CHECK_THROWS_AS(integrate_ode(parse_program("{x'=x^2}"), {{"x", 10}}, 1, 0.01), EvalError);
  CHECK(run_program(parse_program("{x'=1 & x<=0}"), {{"x", 1}}, {}).blocked);
}

TEST_CASE("duration clocks") {
  Program pd = parse_program("t:=0; {x'=2, t'=1 & t<=0.3}; ?t=0.3");
  RunResult r = run_program(pd, {{"x", 1}, {"t", 5}}, {});
  REQUIRE_FALSE(r.blocked);
  CHECK(r.state["x"] == doctest::Approx(1.6));
  CHECK(r.effect.duration == doctest::Approx(0.3));
  CHECK(r.effect.delta["x"] == doctest::Approx(0.6));
  CHECK(*duration_bound(parse_program("{x'=1, c'=1 & c<=2}"), {{"x", 0}, {"c", 0.5}}) == 1.5);
  CHECK_FALSE(duration_bound(parse_program("{x'=1}"), {{"x", 0}}).has_value());
}

TEST_CASE("deterministic given the seed") {
  testgen::Gen g(21);
  for (int i = 0; i < 300; ++i) {
    Program p = g.program(3);
    State s{{"x", g.real(-2, 2)}, {"y", g.real(-2, 2)}, {"z", 1}, {"w", 0}};
    for (const auto& n : g.names) s[n + "_post"] = 0;
    RunConfig cfg;
    cfg.rng_seed = i;
    cfg.ode_horizon = 0.2;
    RunResult a, b;
    bool threw_a = false, threw_b = false;
    try {
      a = run_program(p, s, cfg);
    } catch (const EvalError&) {
      threw_a = true;
    }
    try {
      b = run_program(p, s, cfg);
    } catch (const EvalError&) {
      threw_b = true;
    }
    REQUIRE(threw_a == threw_b);
    if (threw_a) continue;
    CHECK(a.blocked == b.blocked);
    CHECK(a.state == b.state);
  }
  CHECK(split_seed(10, 3) == (10u ^ 3u));
}

TEST_CASE("reachable samples") {
  RunConfig cfg;
  auto unit = reachable_samples(parse_program("x:=*; ?(0<=x & x<=1)"), {{"x", 5}}, 100, cfg);
  CHECK(unit.size() == 100);
  for (const auto& s : unit) CHECK((s.at("x") >= 0 && s.at("x") <= 1));

  auto ab = reachable_samples(parse_program("a:=a+1 ++ b:=*; ?b<=3"), {{"a", 2}, {"b", 3}}, 200, cfg);
  for (const auto& s : ab) {
    bool first = s.at("a") == 3 && s.at("b") == 3;
    bool second = s.at("a") == 2 && s.at("b") <= 3;
    CHECK((first || second));
  }

  CHECK_THROWS_AS(reachable_samples(parse_program("?false"), {{"x", 0}}, 3, cfg, 2), EvalError);
  CHECK_THROWS_AS(reachable_samples(parse_program("?true"), {{"x", 0}}, 0, cfg), EvalError);
}

TEST_CASE("tank body keeps its invariant") {
  Program body = parse_program(
      "f:=*; ?(-1<=f & f<=(10-x)/1); t:=0; {x'=f, t'=1 & x>=0 & t<=1}; ?t=1");
  Formula inv = parse_formula("0<=x & x<=10");
  RunConfig cfg;
  cfg.assign_any_sampler["f"] = {-1, 1};
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> level(0, 10);
  int samples = 0;
  for (int i = 0; i < 50; ++i) {
    State s{{"x", level(rng)}, {"f", 0}, {"t", 0}};
    cfg.rng_seed = rng();
    for (const auto& end : reachable_samples(body, s, 20, cfg)) {
      CHECK(eval_formula(inv, make_env(end), 1e-9));
      ++samples;
    }
  }
  CHECK(samples == 1000);
}

TEST_CASE("run compatibility") {
  Program ab = parse_program("a:=a+1 ++ b:=*; ?b<=3");
  RunConfig cfg;
  CHECK(check_run_compatibility(ab, {{{"a", 2}, {"b", 3}}, {{"a", 3}, {"b", 3}}}, cfg));
  CHECK_FALSE(check_run_compatibility(ab, {{{"a", 2}, {"b", 3}}, {{"a", 2}, {"b", 4}}}, cfg));
  CHECK(check_run_compatibility(ab, {{{"a", 2}, {"b", 3}}, {{"a", 2}, {"b", -7.5}}}, cfg));

  Program idle = parse_program("x:=x ++ y:=y+1");
  TransitionPair same{{{"x", 1}, {"y", 2}}, {{"x", 1}, {"y", 2}}};
  CHECK(check_run_compatibility(idle, same, cfg));

  // An ODE endpoint is found by searching the stop time.
  Program flow = parse_program("{x'=2 & x<=10}");
  CHECK(check_run_compatibility(flow, {{{"x", 0}}, {{"x", 0.5}}}, cfg));
  CHECK_FALSE(check_run_compatibility(flow, {{{"x", 0}}, {{"x", -0.5}}}, cfg));
}
