#pragma once

// Set-membership rolling estimators: an interval [l,u] such that the true
// value y lies in [yh+l, yh+u] around the latest measurement yh.

#include <string>

#include "hsmon/ast.hpp"
#include "hsmon/eval.hpp"

namespace hsmon {

struct Estimate {
  double l = 0;
  double u = 0;

  double width() const { return u - l; }
};

/// Update rule as terms over the placeholders
///   yh0 (previous measurement), yh (new measurement), effect (plant effect
///   on y), delta (sensor uncertainty), l0, u0 (previous estimate).
struct EstimatorSpec {
  Term lower;
  Term upper;

  /// l = max(-delta, yh0-yh+effect+l0), u = min(delta, yh0-yh+effect+u0)
  static EstimatorSpec shift_and_clip();
};

struct EstimatorUpdate {
  Estimate estimate;
  /// False when l > u: the new measurement contradicts the history.
  bool history_consistent = true;
};

EstimatorUpdate update(const EstimatorSpec& spec, double yh0, double yh, double effect,
                       double delta, const Estimate& est0);

/// Whether y_true lies in [yh+l, yh+u] up to tol.
bool contains_truth(const Estimate& est, double yh, double y_true, double tol = 1e-9);

/// `est_l := lower; est_u := upper` with the placeholders replaced by the
/// given terms, ordered so that neither assignment reads the other's result.
Program update_program(const EstimatorSpec& spec, const std::string& est_l,
                       const std::string& est_u, const Term& yh0, const Term& yh,
                       const Term& effect, const Term& delta);

}  // namespace hsmon
