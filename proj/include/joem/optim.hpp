#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "joem/error.hpp"

namespace joem {

namespace detail {
inline void require_finite_grads(const std::vector<double>& grad,
                                 const char* where) {
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!std::isfinite(grad[i])) {
      fail(ErrorKind::numeric_failure,
           std::string(where) + ": non-finite gradient at index " +
               std::to_string(i) + " (value " + std::to_string(grad[i]) + ")");
    }
  }
}
}  // namespace detail

/// Classic momentum SGD; weight decay enters as an additive L2 term on the
/// gradient before the momentum update.
inline void sgd_step(std::vector<double>& params, const std::vector<double>& grads,
                     std::vector<double>& velocity, double lr, double momentum,
                     double weight_decay) {
  if (grads.size() != params.size()) {
    fail(ErrorKind::invalid_input, "sgd_step: gradient/parameter size mismatch");
  }
  detail::require_finite_grads(grads, "sgd_step");
  if (velocity.size() != params.size()) velocity.assign(params.size(), 0.0);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i] + weight_decay * params[i];
    velocity[i] = momentum * velocity[i] + g;
    params[i] -= lr * velocity[i];
  }
}

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long step = 0;
};

/// Adam with bias correction; defaults beta = (0.9, 0.999), eps = 1e-8.
inline void adam_step(std::vector<double>& params, const std::vector<double>& grads,
                      AdamState& state, double lr, double beta1 = 0.9,
                      double beta2 = 0.999, double eps = 1e-8) {
  if (grads.size() != params.size()) {
    fail(ErrorKind::invalid_input, "adam_step: gradient/parameter size mismatch");
  }
  detail::require_finite_grads(grads, "adam_step");
  if (state.m.size() != params.size()) state.m.assign(params.size(), 0.0);
  if (state.v.size() != params.size()) state.v.assign(params.size(), 0.0);
  ++state.step;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * grads[i];
    state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * grads[i] * grads[i];
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
  }
}

/// Poly learning-rate schedule: base * (1 - iter/max_iter)^power.
inline double poly_lr(double base_lr, long iter, long max_iter, double power) {
  if (max_iter <= 0) fail(ErrorKind::invalid_parameter, "poly_lr: max_iter must be positive");
  double t = static_cast<double>(iter) / static_cast<double>(max_iter);
  if (t < 0.0) t = 0.0;
  if (t > 1.0) t = 1.0;
  return base_lr * std::pow(1.0 - t, power);
}

}  // namespace joem
