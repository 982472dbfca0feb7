#pragma once

// Scenario files (.hp): a loop body with its proof artifacts and the
// parameters of a simulation campaign.
//
//   definitions { name = text; name(a, b) = text }   textual macros
//   program { ... }            loop body
//   invariant { ... }          inductive invariant
//   diff_invariants { ... }    R(x, x_0) for the plant
//   safety { ... }
//   assumptions { ... }        initial condition
//   fallback <name> { ... }    fallback controllers
//   init { x = [lo, hi]; w = {0, 1}; v = 2 }
//   adversary { ... }          ranges for adversarial controller outputs
//   model { unobservable = a, b; fallback = <name> }
//   monitors { kind = exact; effect = 0; tolerance = 1e-6; grid = 101 }
//   noise { sensor = uniform; fault_probability = 0.1; fault_var = w; fault_offset = [a, b] }
//   episodes { runs = 100; steps = 50; seed = 7; ode_step = 0.01; controller = model }
//   expectations { precision = [lo, hi]; recall = 1 }
//
// Lines starting with # are comments. Key-value sections accept `;` or
// newlines as separators.

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "hsmon/ast.hpp"
#include "hsmon/eval.hpp"
#include "hsmon/hybrid_program.hpp"
#include "hsmon/monitors.hpp"
#include "hsmon/sim.hpp"

namespace hsmon {

class ScenarioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Sampling domain of one variable: an interval or a finite set.
struct InitRange {
  double lo = 0, hi = 0;
  std::vector<double> choices;

  double sample(std::mt19937_64& rng) const;
};

enum class SensorNoise { Uniform, Zero, Edge };
enum class ControllerKind { Model, Adversarial };

const char* to_string(SensorNoise n);
const char* to_string(ControllerKind c);

struct Scenario {
  std::string name;
  std::string path;

  Program body;
  NormalFormInfo nf;
  Formula invariant;
  Formula diff_invariants;
  Formula safety;
  Formula assumptions;
  std::map<std::string, Program> fallbacks;
  std::string fallback;  // selected fallback name, empty when none
  std::set<std::string> unobservable;
  std::map<std::string, InitRange> init;
  std::map<std::string, InitRange> adversary;

  MonitorKind monitor = MonitorKind::Exact;
  Term effect;  // plant effect on the measured variable, rolling monitor only
  double tolerance = 1e-6;
  int grid = 101;

  SensorNoise sensor_noise = SensorNoise::Uniform;
  double fault_probability = 0;
  std::string fault_var;
  Interval fault_offset{0, 0};

  int runs = 100;
  int steps = 50;
  std::uint64_t seed = 1;
  double ode_step = 0.01;
  ControllerKind controller = ControllerKind::Model;

  std::optional<Interval> expect_precision;
  std::optional<Interval> expect_recall;

  const Program& fallback_program() const;
  MonitorContext monitor_context() const;
  MonitorSpec model_monitor_spec() const;
  MonitorSpec control_monitor_spec() const;
  /// Observed variables used as the rolling monitor's measurement noise radius.
  double sensor_delta(const State& s) const;
  /// Draws from `init` until the assumptions hold.
  State sample_start(std::mt19937_64& rng) const;
  RunConfig run_config() const;
};

/// Parses scenario text. HSMON_SEED, when set, overrides the episode seed.
/// Errors: ScenarioError for malformed sections, SyntaxError from the parser.
Scenario parse_scenario(const std::string& text, const std::string& name = "scenario");
Scenario load_scenario(const std::string& path);

/// Directory of the shipped scenario files: $HSMON_SCENARIOS or the source tree.
std::string scenario_dir();
/// `name` as given if it names a file, else looked up in scenario_dir() with
/// and without the `.hp` suffix.
std::string resolve_scenario(const std::string& name);

/// A => invariant and invariant => safety on `samples` start states.
/// Errors: ScenarioError naming the first failing state.
void audit_scenario(const Scenario& s, int samples = 200);

/// Expands the macros of a definitions block in `text`.
std::string expand_macros(const std::string& text, const std::string& definitions);

}  // namespace hsmon
