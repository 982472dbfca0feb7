#pragma once

// Sampled execution of hybrid programs: one run at a time, fixed-step RK4 for
// ODEs, and a brute-force run search used as a test oracle.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "hsmon/ast.hpp"
#include "hsmon/eval.hpp"

namespace hsmon {

enum class ChoicePolicy { UniformRandom, Scripted };

using Interval = std::pair<double, double>;

/// Optional override for `x:=*`; returning nullopt falls back to sampling.
using AssignAnyHook = std::function<std::optional<double>(const std::string&, const State&)>;

struct RunConfig {
  double ode_step = 0.01;
  std::uint64_t rng_seed = 0;
  ChoicePolicy choice_policy = ChoicePolicy::UniformRandom;
  std::map<std::string, Interval> assign_any_sampler;
  Interval default_sampler{-10, 10};
  /// `x:=*` immediately followed by an interval test samples from that interval.
  bool sample_picks = true;
  /// Stop times for ODEs without a duration clock are uniform on [0, ode_horizon].
  double ode_horizon = 1;
  int max_loop_iterations = 3;
  bool enforce_tests = true;
  double test_tolerance = 1e-9;
  /// Endpoint matching tolerance of check_run_compatibility.
  double match_tolerance = 1e-6;
  int compat_grid = 41;
  int compat_stop_grid = 400;
  // Scripted policy: consumed in program order.
  std::vector<int> scripted_choices;
  std::vector<double> scripted_values;
  std::vector<double> scripted_stop_times;
  std::vector<int> scripted_loop_counts;
  AssignAnyHook assign_any_hook;
};

struct PlantEffect {
  std::map<std::string, double> delta;  // z - z0 per ODE variable
  double duration = 0;
};

struct RunResult {
  bool blocked = false;
  State state;
  PlantEffect effect;
};

struct OdeRun {
  State state;
  double elapsed = 0;
  bool truncated = false;  // domain left before `duration`
};

/// RK4 with n = ceil(duration/step) equal steps. Constant right-hand sides are
/// integrated exactly. The domain is checked after every step; the run stops
/// at the last state inside it.
OdeRun integrate_ode(const Program& ode, const State& start, double duration, double step,
                     double tol = 1e-9);

/// Stop time of an ODE with a clock c'=1 bounded by c<=E in its domain, if any.
std::optional<double> duration_bound(const Program& ode, const State& s);

/// One sampled run. Raises EvalError on integrator divergence or when a
/// scripted policy runs out of decisions.
RunResult run_program(const Program& p, const State& start, const RunConfig& cfg);

/// Same, drawing from a caller-owned generator (for multi-stage simulations).
RunResult run_program(const Program& p, const State& start, const RunConfig& cfg,
                      std::mt19937_64& rng);

/// n end states of independent runs; run i uses seed (rng_seed XOR i').
/// Blocked runs are retried up to `retries` times each.
std::vector<State> reachable_samples(const Program& p, const State& start, std::size_t n,
                                     const RunConfig& cfg, int retries = 100);

/// Whether some run of loop-free p leads from pair.pre to a state matching
/// pair.post on `compare` (default: BV(p)) within cfg.match_tolerance.
bool check_run_compatibility(const Program& p, const TransitionPair& pair, const RunConfig& cfg,
                             const std::optional<std::set<std::string>>& compare = std::nullopt);

/// Seed for the i-th independent stream derived from `seed`.
std::uint64_t split_seed(std::uint64_t seed, std::uint64_t index);

}  // namespace hsmon
