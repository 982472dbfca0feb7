#pragma once

// Monitor conditions for loop bodies and their runtime evaluation.
//
//   Exact         <p>U+
//   Disturbance   <p>\exists u_post U+            (u excluded from U+)
//   Pairwise      \exists y (yh-D<=y<=yh+D & <p>\exists y_post U+)
//   Rolling       \exists y (yh+l<=y<=yh+u &
//                     <y_prev:=y; yh_prev:=yh; p; l,u:=e(...)>\exists y_post U+)
//   ControlOnly   <ctrl>U+
//
// p is the body with its ODE replaced by the diff-invariant overapproximation.

#include <chrono>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "hsmon/ast.hpp"
#include "hsmon/estimator.hpp"
#include "hsmon/eval.hpp"
#include "hsmon/hybrid_program.hpp"
#include "hsmon/qe.hpp"

namespace hsmon {

enum class MonitorKind { Exact, Disturbance, Pairwise, Rolling, ControlOnly };

const char* to_string(MonitorKind k);
/// Accepts the names printed by to_string; throws std::invalid_argument otherwise.
MonitorKind parse_monitor_kind(const std::string& s);

struct MonitorContext {
  /// R(x, x_0) for the plant ODE; `true` when absent.
  Formula diff_invariants;
  /// Variables not visible in recorded transitions.
  std::set<std::string> unobservable;
  /// Rolling monitor only.
  std::optional<EstimatorSpec> estimator;
};

/// State variables carrying the rolling estimate.
inline constexpr const char* kEstL = "est_l";
inline constexpr const char* kEstU = "est_u";

struct MonitorSpec {
  MonitorKind kind = MonitorKind::Exact;
  NormalFormInfo nf;
  Formula characterization;  // with modalities
  std::set<std::string> observed;  // variables compared by U+
  std::string measured;     // y (Pairwise, Rolling)
  std::string measurement;  // yh (Pairwise, Rolling)
  Term delta;               // interval radius, when the kind has one
};

/// Errors: SyntaxError when the body does not have the normal form the kind needs.
MonitorSpec build_monitor(const Program& body, MonitorKind kind, const MonitorContext& ctx);

struct Verdict {
  bool satisfied = false;
  Witness witness;
  Formula evaluated_formula;
  double elapsed = 0;  // seconds
  bool history_inconsistent = false;
};

/// Synthesized monitor ready for evaluation on transition pairs.
class Monitor {
 public:
  explicit Monitor(MonitorSpec spec, SearchConfig cfg = {});

  const MonitorSpec& spec() const { return spec_; }
  const SynthesisReport& synthesis() const { return report_; }
  const Formula& formula() const { return report_.output; }

  /// Errors: EvalError for unbounded quantifiers or undeclared variables.
  Verdict evaluate(const TransitionPair& pair);

 private:
  MonitorSpec spec_;
  SynthesisReport report_;
  Decider decider_;
};

/// Rolling monitor with its own estimate. The pair must not carry the
/// estimator variables; they are filled in from the current estimate.
class RollingMonitor {
 public:
  /// `effect` is evaluated on the transition pair to give the plant effect on y.
  RollingMonitor(MonitorSpec spec, EstimatorSpec estimator, Term effect, SearchConfig cfg = {});

  const Estimate& estimate() const { return est_; }
  /// Forgets the history: [-D, D] around the current measurement.
  void reset(const State& at);
  Verdict evaluate(const TransitionPair& pair);
  Monitor& monitor() { return monitor_; }
  double delta_at(const State& s) const;

 private:
  Monitor monitor_;
  EstimatorSpec estimator_;
  Term effect_;
  Estimate est_;
};

/// \forall y (yh+l<=y & y<=yh+u -> inv); inv[y:=yh] for the point interval [0,0].
Formula contraction_formula(const Formula& inv, const std::string& y, const std::string& yh,
                            const Term& l, const Term& u);

struct VariationStep {
  double y_true_pre = 0, y_true_post = 0;
  double yh_pre = 0, yh_post = 0;
  double effect = 0;
  bool satisfied = true;
};

struct VariationReport {
  std::size_t steps_checked = 0;
  /// Index of the first satisfied step whose measurements moved by more than
  /// 2D beyond the plant effect, if any.
  std::optional<std::size_t> first_step_violation;
  /// Index n of the first prefix where |y_n - y_0 - sum effects| > 2D(n+1).
  std::optional<std::size_t> first_cumulative_violation;
  double max_step_deviation = 0;
  double max_cumulative_ratio = 0;  // deviation / 2D(n+1)
};

/// Checks the single-step and multi-step variation bounds over the leading
/// run of satisfied steps. Errors: EvalError on non-finite ground truth.
VariationReport variation_bounds(const std::vector<VariationStep>& trace, double delta,
                                 double tol = 1e-9);

}  // namespace hsmon
