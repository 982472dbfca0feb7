#pragma once

// Simulation campaigns over a scenario: precision/recall of the model monitor
// against injected ground truth, and the scripted drift scenario.

#include <optional>
#include <string>
#include <vector>

#include "hsmon/sandbox.hpp"
#include "hsmon/scenario.hpp"

namespace hsmon {

/// Each step is labeled conformant (no injected fault, decision from the
/// model controller, the fallback, or accepted by the control monitor) and
/// alarmed (model monitor violated).
struct PRReport {
  std::string scenario;
  std::string monitor;
  int runs = 0;
  int steps_per_run = 0;
  long steps = 0;
  long true_nonalarms = 0;   // conformant, not alarmed
  long all_nonalarms = 0;
  long false_alarms = 0;     // conformant, alarmed
  long true_alarms = 0;      // faulty, alarmed
  long missed_faults = 0;    // faulty, not alarmed
  long fallback_engagements = 0;
  long invariant_violations = 0;  // after any plant step
  long sensor_audit_failures = 0;
  int stalled_runs = 0;  // episodes cut short because the model blocked
  std::optional<double> precision;  // undefined when all_nonalarms == 0
  std::optional<double> recall;     // undefined when no conformant steps
  double seconds = 0;

  void add(const StepOutcome& o);
  void finish();
};

struct EvaluationOptions {
  std::optional<int> runs;
  std::optional<int> steps;
  std::optional<std::uint64_t> seed;
  unsigned threads = 0;  // 0: hardware concurrency
  bool keep_traces = true;
  int fallback_samples = 1000;
};

struct EvaluationResult {
  PRReport report;
  std::vector<Trace> traces;  // one per run, in run order
};

/// Errors: ScenarioError on audit or fallback validation failure; EvalError
/// from the monitors.
EvaluationResult run_evaluation(const Scenario& s, const EvaluationOptions& opt = {});

/// Ground-truth audit for measurement scenarios: |yh - y| <= delta on every row.
long sensor_audit_failures(const Scenario& s, const Trace& t);

struct DriftStep {
  int t = 0;
  double measurement = 0;
  bool pairwise = true;
  bool rolling = true;
  bool rolling_history_inconsistent = false;
  Estimate estimate;
};

struct DriftResult {
  std::vector<DriftStep> steps;  // steps[0] is the start, verdicts from t=1 on
  std::optional<int> pairwise_first_violation;
  std::optional<int> rolling_first_violation;
};

/// Measurement sequence of the drift demonstration (t = 0..8).
std::vector<double> drift_measurements();
/// The same with the drift increments halved (t = 0..7).
std::vector<double> halved_drift_measurements();

/// Replays `measurements` (one per step, the first at the start state) on a
/// measurement scenario whose controller circles, with the true value fixed.
/// Errors: ScenarioError for a scenario without measurement normal form.
DriftResult run_drift(const Scenario& s, const std::vector<double>& measurements);

/// run_drift on the shipped drift scenario with drift_measurements().
DriftResult drift_scenario();

}  // namespace hsmon
