#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "joem/error.hpp"

namespace joem {

/// A differentiable scalar loss over a flattened parameter vector: returns
/// the value and, when `grad` is non-null, fills the analytic gradient.
using LossClosure =
    std::function<double(const std::vector<double>&, std::vector<double>* grad)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
};

/// Central differences carry O(|f| * machine_eps / eps) noise even where the
/// true derivative vanishes; discrepancies below this absolute level count
/// as agreement rather than entering the relative-error ratio.
inline constexpr double kGradAgreementFloor = 1e-9;

/// Central-difference verification of an analytic gradient.
///
/// Per coordinate: fd = (f(x + eps e_i) - f(x - eps e_i)) / (2 eps), compared
/// against the analytic entry as |fd - g| / max(|fd|, |g|, 1e-6).
inline GradCheckResult grad_check(const LossClosure& loss,
                                  std::vector<double> params, double eps) {
  if (eps <= 0.0) fail(ErrorKind::invalid_parameter, "grad_check: eps must be positive");

  std::vector<double> analytic;
  const double f0 = loss(params, &analytic);
  if (!std::isfinite(f0)) {
    fail(ErrorKind::numeric_failure, "grad_check: loss is non-finite at the base point");
  }
  if (analytic.size() != params.size()) {
    fail(ErrorKind::invalid_input, "grad_check: gradient size does not match parameters");
  }

  GradCheckResult result;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = params[i];
    params[i] = saved + eps;
    const double f_plus = loss(params, nullptr);
    params[i] = saved - eps;
    const double f_minus = loss(params, nullptr);
    params[i] = saved;
    if (!std::isfinite(f_plus) || !std::isfinite(f_minus)) {
      fail(ErrorKind::numeric_failure,
           "grad_check: loss became non-finite while probing coordinate " +
               std::to_string(i));
    }
    const double fd = (f_plus - f_minus) / (2.0 * eps);
    const double abs_err = std::fabs(fd - analytic[i]);
    if (abs_err <= kGradAgreementFloor) continue;
    const double denom =
        std::max({std::fabs(fd), std::fabs(analytic[i]), 1e-6});
    const double rel = abs_err / denom;
    if (rel > result.max_rel_error) {
      result.max_rel_error = rel;
      result.worst_index = i;
      result.analytic_at_worst = analytic[i];
      result.numeric_at_worst = fd;
    }
  }
  return result;
}

}  // namespace joem
