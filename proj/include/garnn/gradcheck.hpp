// Central finite-difference verification of tape gradients.
//
// Relative error per coordinate is |analytic - numeric| / max(|analytic|,
// |numeric|, floor). The floor keeps coordinates whose true gradient is zero
// or tiny from dividing rounding noise by ~0. Points where a piecewise op sits
// exactly on its kink (leaky_relu at 0, |e| at 0) are not differentiable and
// must not be sampled.

#pragma once

#include <functional>
#include <span>
#include <vector>

#include "garnn/autodiff.hpp"

namespace garnn {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coordinates = 0;
};

/// Builds a scalar on the given tape from leaves bound to the parameters.
using ScalarFunction = std::function<Var(Tape&, std::span<const Var>)>;

inline constexpr double kGradCheckFloor = 1e-4;

double relative_error(double analytic, double numeric, double floor = kGradCheckFloor);

GradCheckResult finite_difference_check(const ScalarFunction& f, std::vector<Tensor> params, double step = 1e-6,
                                        double floor = kGradCheckFloor);

}  // namespace garnn
