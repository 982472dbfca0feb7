#include <doctest.h>

#include <cstdlib>
#include <sstream>
#include <string>

#include "hsmon/evaluation.hpp"
#include "hsmon/scenario.hpp"
#include "hsmon/syntax.hpp"

using namespace hsmon;

namespace {

Scenario shipped(const std::string& name) { return load_scenario(resolve_scenario(name)); }

const char* kMinimal = R"(
# comment line
definitions {
  m = 10
  lim(a) = a <= m
}
program { f:=*; ?(-x <= f & f <= m-x); t:=0; {x'=f, t'=1 & t<=1}; ?t=1 }
invariant { 0<=x & lim(x) }
safety { lim(x) }
init { x = [0, 10]; f = 0; t = 0 }
episodes { runs = 3; steps = 4; seed = 42 }
)";

std::string with(const std::string& extra) { return std::string(kMinimal) + extra; }

}  // namespace

TEST_CASE("shipped scenarios load and pass the audit") {
  for (const char* name : {"flight_original", "flight_actuator", "flight_sensor", "watertank_original",
                           "watertank_actuator", "watertank_sensor", "drift", "two_branch"}) {
    CAPTURE(name);
    Scenario s = shipped(name);
    CHECK(s.name == name);
    CHECK_NOTHROW(audit_scenario(s));
  }
  CHECK(shipped("flight_actuator").nf.kind == NormalFormKind::Disturbance);
  CHECK(shipped("watertank_sensor").nf.kind == NormalFormKind::Measurement);
  CHECK(shipped("flight_sensor").unobservable == std::set<std::string>{"vi"});
  CHECK(shipped("watertank_sensor").expect_recall->first == doctest::Approx(0.83));
}

TEST_CASE("resolution with and without suffix") {
  CHECK(resolve_scenario("drift") == resolve_scenario("drift.hp"));
  CHECK_THROWS_AS(resolve_scenario("no_such_scenario"), ScenarioError);
}

TEST_CASE("minimal scenario") {
  Scenario s = parse_scenario(kMinimal, "tank");
  CHECK(to_string(s.invariant) == "0<=x & x<=10");
  CHECK(s.runs == 3);
  CHECK(s.steps == 4);
  CHECK(s.seed == 42);
  CHECK(s.monitor == MonitorKind::Exact);
  CHECK(s.init.at("x").lo == 0);
  CHECK(s.init.at("x").hi == 10);
  CHECK(s.nf.kind == NormalFormKind::Plain);
}

TEST_CASE("macro expansion") {
  CHECK(expand_macros("f(x)+g", "f(a) = a*a\ng = 2") == "((x)*(x))+(2)");
  CHECK(expand_macros("k'=k", "k = 1") == "k'=(1)");
  CHECK(expand_macros("h(1, 2)", "h(a, b) = a-b") == "((1)-(2))");
  CHECK_THROWS_AS(expand_macros("h(1)", "h(a, b) = a-b"), ScenarioError);
  CHECK_THROWS_AS(expand_macros("p", "p = q\nq = p"), ScenarioError);
}

TEST_CASE("malformed scenarios") {
  CHECK_THROWS_AS(parse_scenario("invariant { true }\nsafety { true }"), ScenarioError);
  CHECK_THROWS_AS(parse_scenario(with("bogus { a = 1 }")), ScenarioError);
  CHECK_THROWS_AS(parse_scenario(with("episodes { warp = 9 }")), ScenarioError);
  CHECK_THROWS_AS(parse_scenario(with("monitors { kind = psychic }")), ScenarioError);
  CHECK_THROWS_AS(parse_scenario(with("model { fallback = ghost }")), ScenarioError);
  CHECK_THROWS_AS(parse_scenario(with("init { y = [2, 1] }")), ScenarioError);
  CHECK_THROWS(parse_scenario(with("safety { x <= }")));
  CHECK_THROWS(parse_scenario(std::string(kMinimal) + "\nprogram { x:=1 }"));
}

TEST_CASE("audit catches a weak assumption") {
  Scenario s = parse_scenario(with("assumptions { x >= -5 }\ninit { x = [-5, 10] }"), "weak");
  CHECK_THROWS_AS(audit_scenario(s), ScenarioError);
}

TEST_CASE("seed override from the environment") {
  setenv("HSMON_SEED", "777", 1);
  Scenario s = parse_scenario(kMinimal);
  unsetenv("HSMON_SEED");
  CHECK(s.seed == 777);
  CHECK(parse_scenario(kMinimal).seed == 42);
}

TEST_CASE("evaluation is deterministic") {
  Scenario s = shipped("watertank_sensor");
  EvaluationOptions opt;
  opt.runs = 6;
  opt.steps = 10;
  auto csv = [&] {
    EvaluationResult r = run_evaluation(s, opt);
    std::ostringstream out;
    for (std::size_t i = 0; i < r.traces.size(); ++i)
      write_trace_csv(out, r.traces[i], static_cast<int>(i));
    return out.str();
  };
  std::string a = csv();
  CHECK(a == csv());
  opt.threads = 3;
  CHECK(a == csv());
  opt.seed = 99;
  CHECK(a != csv());
}

TEST_CASE("sensor readings stay within the uncertainty") {
  for (SensorNoise mode : {SensorNoise::Uniform, SensorNoise::Edge, SensorNoise::Zero}) {
    CAPTURE(to_string(mode));
    Scenario s = shipped("watertank_sensor");
    s.sensor_noise = mode;
    EvaluationOptions opt;
    opt.runs = 20;
    opt.steps = 20;
    EvaluationResult r = run_evaluation(s, opt);
    long audit = 0;
    for (const auto& t : r.traces) audit += sensor_audit_failures(s, t);
    CHECK(audit == 0);
  }
}

TEST_CASE("noise-free sensor scenario is clean") {
  for (const char* name : {"watertank_sensor", "flight_sensor"}) {
    CAPTURE(name);
    Scenario s = shipped(name);
    s.sensor_noise = SensorNoise::Zero;
    s.fault_probability = 0;
    EvaluationOptions opt;
    opt.runs = 20;
    opt.steps = 20;
    PRReport r = run_evaluation(s, opt).report;
    REQUIRE(r.precision);
    REQUIRE(r.recall);
    CHECK(*r.precision == 1.0);
    CHECK(*r.recall == 1.0);
  }
}

TEST_CASE("precision and recall counting") {
  PRReport r;
  r.finish();
  CHECK_FALSE(r.precision);
  CHECK_FALSE(r.recall);
  StepOutcome ok, alarm, missed, caught;
  alarm.model_verdict.satisfied = false;
  ok.model_verdict.satisfied = true;
  missed.model_verdict.satisfied = true;
  missed.conformant = false;
  caught.model_verdict.satisfied = false;
  caught.conformant = false;
  for (const StepOutcome* o : {&ok, &ok, &ok, &alarm, &missed, &caught}) r.add(*o);
  r.finish();
  CHECK(r.true_nonalarms == 3);
  CHECK(r.all_nonalarms == 4);
  CHECK(r.false_alarms == 1);
  CHECK(r.true_alarms == 1);
  CHECK(r.missed_faults == 1);
  CHECK(*r.precision == doctest::Approx(0.75));
  CHECK(*r.recall == doctest::Approx(0.75));
}

TEST_CASE("invalid campaign sizes") {
  Scenario s = shipped("watertank_original");
  EvaluationOptions opt;
  opt.runs = -1;
  CHECK_THROWS_AS(run_evaluation(s, opt), ScenarioError);
}
