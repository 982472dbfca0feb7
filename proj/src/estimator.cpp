#include "hsmon/estimator.hpp"

#include <cmath>

#include "hsmon/rewrite.hpp"

namespace hsmon {

EstimatorSpec EstimatorSpec::shift_and_clip() {
  Term shift = plus(minus(var("yh0"), var("yh")), var("effect"));
  return {max_of(neg(var("delta")), plus(shift, var("l0"))),
          min_of(var("delta"), plus(shift, var("u0")))};
}

EstimatorUpdate update(const EstimatorSpec& spec, double yh0, double yh, double effect,
                       double delta, const Estimate& est0) {
  Env env{{"yh0", yh0}, {"yh", yh}, {"effect", effect}, {"delta", delta},
          {"l0", est0.l}, {"u0", est0.u}};
  EstimatorUpdate r;
  r.estimate = {eval_term(spec.lower, env), eval_term(spec.upper, env)};
  r.history_consistent = r.estimate.l <= r.estimate.u;
  return r;
}

bool contains_truth(const Estimate& est, double yh, double y_true, double tol) {
  return yh + est.l - tol <= y_true && y_true <= yh + est.u + tol;
}

Program update_program(const EstimatorSpec& spec, const std::string& est_l,
                       const std::string& est_u, const Term& yh0, const Term& yh,
                       const Term& effect, const Term& delta) {
  bool lower_reads_u = mentions(spec.lower, "u0");
  bool upper_reads_l = mentions(spec.upper, "l0");
  if (lower_reads_u && upper_reads_l)
    throw SyntaxError("estimator bounds depend on each other; cannot be updated in sequence");
  Substitution s{{"yh0", yh0}, {"yh", yh},           {"effect", effect},
                 {"delta", delta}, {"l0", var(est_l)}, {"u0", var(est_u)}};
  Program lo = assign(est_l, substitute(spec.lower, s));
  Program hi = assign(est_u, substitute(spec.upper, s));
  return lower_reads_u ? seq(lo, hi) : seq(hi, lo);
}

}  // namespace hsmon
