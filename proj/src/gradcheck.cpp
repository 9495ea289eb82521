#include "garnn/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace garnn {

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

namespace {
double evaluate(const ScalarFunction& f, const std::vector<Tensor>& params) {
  Tape tape;
  std::vector<Var> leaves;
  leaves.reserve(params.size());
  for (const auto& p : params) leaves.push_back(tape.parameter(p));
  return f(tape, leaves).value().item();
}
}  // namespace

GradCheckResult finite_difference_check(const ScalarFunction& f, std::vector<Tensor> params, double step,
                                        double floor) {
  std::vector<Tensor> analytic;
  {
    Tape tape;
    std::vector<Var> leaves;
    for (const auto& p : params) leaves.push_back(tape.parameter(p));
    Var loss = f(tape, leaves);
    tape.backward(loss);
    for (const Var& v : leaves) analytic.push_back(tape.gradient(v));
  }

  GradCheckResult result;
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (std::size_t i = 0; i < params[p].size(); ++i) {
      const double saved = params[p][i];
      params[p][i] = saved + step;
      const double up = evaluate(f, params);
      params[p][i] = saved - step;
      const double down = evaluate(f, params);
      params[p][i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double err = relative_error(analytic[p][i], numeric, floor);
      ++result.coordinates;
      if (err >= result.max_rel_error) {
        result.max_rel_error = err;
        result.worst_param = p;
        result.worst_index = i;
        result.analytic = analytic[p][i];
        result.numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace garnn
