#pragma once

// Scaled conjugate gradient (Moller 1993), following the Netlab formulation.
// Only steps that do not increase the objective are accepted.

#include "pedgpdm/kernels.hpp"

#include <functional>
#include <optional>
#include <vector>

namespace pedgpdm {

struct ScgOptions {
  int max_iters = 100;
  double grad_tol = 1e-5;  // stop when |g| falls below
  double x_tol = 1e-8;     // together with f_tol: step and change both tiny
  double f_tol = 1e-8;
};

enum class ScgStatus { Converged, MaxIterations, Stalled };

template <typename Scalar>
struct ScgResult {
  VectorT<Scalar> x;
  Scalar value{0};
  VectorT<Scalar> grad;
  int iterations = 0;
  int evaluations = 0;
  ScgStatus status = ScgStatus::MaxIterations;
  std::vector<Scalar> trace;  // objective after each accepted step, trace[0] = start
};

/// `fg(x, grad)` returns the objective and fills the gradient, or std::nullopt when the
/// point cannot be evaluated (e.g. a kernel that is not positive definite).
template <typename Scalar>
using ObjectiveFn = std::function<std::optional<Scalar>(const VectorT<Scalar>&, VectorT<Scalar>&)>;

template <typename Scalar>
ScgResult<Scalar> scg_minimize(const ObjectiveFn<Scalar>& fg, VectorT<Scalar> x, const ScgOptions& opt) {
  const Scalar sigma0 = Scalar(1e-4);
  const Scalar beta_min = Scalar(1e-15), beta_max = Scalar(1e100);
  const Eigen::Index n = x.size();

  ScgResult<Scalar> res;
  VectorT<Scalar> grad_new(n);
  auto f0 = fg(x, grad_new);
  ++res.evaluations;
  if (!f0 || !std::isfinite(*f0) || !grad_new.allFinite())
    throw NumericalError("scg: objective is not finite at the starting point");
  Scalar f_old = *f0;
  res.trace.push_back(f_old);

  VectorT<Scalar> grad_old = grad_new;
  VectorT<Scalar> d = -grad_new;
  VectorT<Scalar> g_plus(n), g_trial(n);
  bool success = true;
  Eigen::Index n_success = 0;
  Scalar beta = 1, mu = 0, kappa = 0, theta = 0;

  auto finish = [&](ScgStatus st) {
    res.x = x;
    res.value = f_old;
    res.grad = grad_new;
    res.status = st;
    return res;
  };

  if (grad_new.norm() < opt.grad_tol) return finish(ScgStatus::Converged);

  for (int j = 1; j <= opt.max_iters; ++j) {
    res.iterations = j;
    if (success) {
      mu = d.dot(grad_new);
      if (mu >= 0) {
        d = -grad_new;
        mu = d.dot(grad_new);
      }
      kappa = d.squaredNorm();
      if (kappa < std::numeric_limits<Scalar>::epsilon()) return finish(ScgStatus::Converged);
      const Scalar sigma = sigma0 / std::sqrt(kappa);
      auto fp = fg(x + sigma * d, g_plus);
      ++res.evaluations;
      if (!fp || !g_plus.allFinite()) {
        // curvature probe failed: fall back to a conservative step estimate
        theta = 0;
      } else {
        theta = d.dot(g_plus - grad_new) / sigma;
      }
    }

    Scalar delta = theta + beta * kappa;
    if (delta <= 0) {
      delta = beta * kappa;
      beta = beta - theta / kappa;
    }
    const Scalar alpha = -mu / delta;
    const VectorT<Scalar> x_new = x + alpha * d;
    auto f_new = fg(x_new, g_trial);
    ++res.evaluations;

    Scalar Delta = -1;
    if (f_new && std::isfinite(*f_new) && g_trial.allFinite())
      Delta = 2 * (*f_new - f_old) / (alpha * mu);

    if (Delta >= 0) {
      success = true;
      ++n_success;
      const Scalar step = (alpha * d).cwiseAbs().maxCoeff();
      const Scalar change = std::abs(*f_new - f_old);
      x = x_new;
      grad_old = grad_new;
      grad_new = g_trial;
      f_old = *f_new;
      res.trace.push_back(f_old);
      if (step < opt.x_tol && change < opt.f_tol) return finish(ScgStatus::Converged);
      if (grad_new.norm() < opt.grad_tol) return finish(ScgStatus::Converged);
    } else {
      success = false;
    }

    if (Delta < Scalar(0.25)) beta = std::min(4 * beta, beta_max);
    if (Delta > Scalar(0.75)) beta = std::max(beta / 2, beta_min);
    if (beta >= beta_max) return finish(ScgStatus::Stalled);

    if (n_success == n) {
      d = -grad_new;
      n_success = 0;
    } else if (success) {
      const Scalar gamma = (grad_old - grad_new).dot(grad_new) / mu;
      d = gamma * d - grad_new;
    }
  }
  return finish(ScgStatus::MaxIterations);
}

}  // namespace pedgpdm
