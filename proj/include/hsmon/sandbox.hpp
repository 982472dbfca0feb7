#pragma once

// Simplex-style sandbox: an untrusted controller proposes, the control
// monitor checks, the fallback replaces rejected decisions, the plant runs
// with injected faults, and the model monitor checks the completed step.

#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "hsmon/monitors.hpp"
#include "hsmon/scenario.hpp"
#include "hsmon/sim.hpp"

namespace hsmon {

/// Proposes the state after the control decision; nullopt when it has none.
using Controller = std::function<std::optional<State>(const State& current, std::mt19937_64& rng)>;

enum class DecisionSource { Model, Adversary, Fallback };
enum class Action { PassThrough, FallbackEngaged };

const char* to_string(DecisionSource s);
const char* to_string(Action a);

struct SandboxConfig {
  Program body;
  NormalFormInfo nf;
  Formula invariant;
  Formula safety;
  Program fallback;
  MonitorSpec control_monitor;
  MonitorSpec model_monitor;
  Term effect;  // rolling monitor only
  std::set<std::string> unobservable;
  SearchConfig search;
  RunConfig run;
  /// Empty: the model's own controller.
  Controller controller;
  DecisionSource controller_source = DecisionSource::Model;

  SensorNoise sensor_noise = SensorNoise::Uniform;
  double fault_probability = 0;
  std::string fault_var;
  Interval fault_offset{0, 0};
  /// Faults are redrawn until the invariant holds after the plant.
  bool preserve_invariant = true;
};

SandboxConfig sandbox_config(const Scenario& s);

/// Controller drawing each bound variable of ctrl from `ranges`.
Controller random_controller(const Program& ctrl, const std::map<std::string, InitRange>& ranges);

/// Forces one step's disturbance.
struct StepScript {
  std::optional<double> fault;  // signed offset added to the actuated value
  std::optional<State> proposal;
};

struct StepOutcome {
  State proposed;  // controller output, empty when it had none
  DecisionSource source = DecisionSource::Model;
  bool control_satisfied = true;
  Action action = Action::PassThrough;
  State decided;  // state handed to the actuators
  State post;     // true state after the plant
  Verdict model_verdict;
  bool fault = false;
  double fault_offset = 0;
  bool conformant = true;
  Estimate estimate{NAN, NAN};
  bool invariant_after = true;
  bool safety_after = true;
};

struct TraceRow {
  int step = 0;
  double time = 0;
  State state;
  std::optional<StepOutcome> outcome;  // absent in the start row
};

struct Trace {
  std::vector<TraceRow> rows;
  /// The episode ended early because no admissible decision existed.
  bool stalled = false;
};

/// Neither the proposal nor the fallback yields a decision (the model blocks).
class NoAdmissibleDecision : public EvalError {
 public:
  using EvalError::EvalError;
};

class Sandbox {
 public:
  explicit Sandbox(SandboxConfig cfg);

  const SandboxConfig& config() const { return cfg_; }
  Monitor& control_monitor() { return *control_; }
  const Formula& model_formula() const;

  /// Every sampled state's fallback output must pass the control monitor.
  /// Errors: std::runtime_error naming the first failing state.
  void validate_fallback(const std::function<State(std::mt19937_64&)>& sampler, int samples,
                         std::uint64_t seed);

  /// Forgets monitor history and any pending fallback.
  void reset();

  /// Errors: EvalError when the invariant is false at entry, when the fallback
  /// fails the control monitor, or when the plant cannot run;
  /// NoAdmissibleDecision when the fallback blocks.
  StepOutcome step(const State& current, std::mt19937_64& rng, const StepScript& script = {});

  /// Result of fallback followed by a fault-free plant from `mu`.
  State recover(const State& mu, std::mt19937_64& rng);

  /// Stops early, marking the trace stalled, on NoAdmissibleDecision.
  Trace run_episode(const State& start, int steps, std::mt19937_64& rng);

  State observable(const State& s) const;

 private:
  std::optional<State> run_fallback(const State& current, std::mt19937_64& rng);
  bool control_ok(const State& current, const State& decided);
  State actuate_and_run(const State& decided, std::mt19937_64& rng, std::optional<double> fault,
                        bool* blocked);
  Verdict check_model(const State& pre, const State& post);

  SandboxConfig cfg_;
  std::unique_ptr<Monitor> control_;
  std::unique_ptr<Monitor> model_;
  std::unique_ptr<RollingMonitor> rolling_;
  bool pending_fallback_ = false;
  double time_ = 0;
};

/// step,time,<state variables>,est_l,est_u,control,verdict,action,fault,conformant
void write_trace_csv(std::ostream& out, const Trace& trace, int run = -1);
std::vector<std::string> trace_columns(const Trace& trace);

}  // namespace hsmon
