#pragma once

// Normal-form recognition and structural transformations of loop bodies.
//
//   disturbance NF   ctrl; u:=*; ?(c-r<=u & u<=c+r); plant(u)
//   measurement NF   ctrl; t:=0; {ode, t'=1 & Q & t<=eps}; ?t=eps; yh:=*; ?(y-r<=yh & yh<=y+r)
//
// Both macros are recognized in their desugared form.

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "hsmon/ast.hpp"

namespace hsmon {

enum class NormalFormKind { Plain, Disturbance, Measurement };

const char* to_string(NormalFormKind k);

/// `x:=*; ?(c-r<=x & x<=c+r)`
struct IntervalPick {
  std::string var;
  Term center;
  Term radius;
};

std::optional<IntervalPick> match_pick(const Program& assign_any, const Program& test);

/// `t:=0; {..., t'=1 & Q & t<=eps}; ?t=eps`
struct PlantDuration {
  std::string clock;
  Term eps;
  Program ode;
};

struct NormalFormInfo {
  NormalFormKind kind = NormalFormKind::Plain;
  Program ctrl;   // `?true` when the controller is empty
  Program plant;  // the ODE, or the whole plantDur block
  /// The body is ctrl; actuation; physics. actuation is the disturbance pick
  /// (`?true` otherwise); physics is the plant and everything after it.
  Program actuation;
  Program physics;
  std::optional<PlantDuration> duration;
  /// Disturbance: the picked actuator variable and its interval.
  /// Measurement: the measurement variable yh, centered at the measured y.
  std::optional<IntervalPick> pick;
  std::string measured;  // y, measurement NF only
  /// Numeric radius when the interval radius is a constant, otherwise NaN.
  double delta = 0;
  /// Numeric duration when eps is a constant, otherwise NaN.
  double eps = 0;
};

/// Errors: a program matching both normal forms, or one without any ODE.
NormalFormInfo recognize_normal_form(const Program& body);

/// Plain form of an ODE-free body: all of it is ctrl, the plant is `?true`.
/// Bodies with an ODE go through recognize_normal_form.
NormalFormInfo normal_form_of(const Program& body);

/// Rewrites the top-level pick of `var` to use `radius`.
/// Errors: SyntaxError when the body has no such pick.
Program with_pick_radius(const Program& body, const std::string& var, const Term& radius);

/// Replaces the single ODE {x'=f & Q} by `x_0:=x; ?Q; x:=*; ?(Q & R)` for all
/// left-hand sides x. `?Q` and `Q &` are dropped when Q is `true`.
Program overapproximate_plant(const Program& p, const Formula& diff_invariants);

/// `measure; ctrl; plant` to `ctrl; plant; measure`.
Program measurement_rollover(const Program& p);

/// x_post=x over BV(p) minus `exclude`, in variable order.
Formula upsilon_plus(const Program& p, const std::set<std::string>& exclude = {});
Formula upsilon_plus(const std::set<std::string>& vars);

/// Number of ODE nodes in a program.
std::size_t count_odes(const Program& p);

}  // namespace hsmon
