#include "ocl/si.hpp"

#include <algorithm>

#include "ocl/errors.hpp"

namespace ocl {

SIState::SIState(std::span<const double> theta, double xi_, double lambda_)
    : omega_path(theta.size(), 0.0),
      importance(theta.size(), 0.0),
      theta_ref(theta.begin(), theta.end()),
      xi(xi_),
      lambda(lambda_) {
  if (!(xi > 0.0)) throw ArgumentError("SI: xi must be > 0");
  if (!(lambda >= 0.0)) throw ArgumentError("SI: lambda must be >= 0");
}

void si_accumulate(SIState& si, std::span<const double> grads, std::span<const double> deltas) {
  if (grads.size() != si.omega_path.size() || deltas.size() != si.omega_path.size()) {
    throw ArgumentError("si_accumulate: shape mismatch");
  }
  for (std::size_t i = 0; i < grads.size(); ++i) si.omega_path[i] += -grads[i] * deltas[i];
}

void si_consolidate(SIState& si, std::span<const double> theta_now) {
  if (theta_now.size() != si.theta_ref.size()) throw ArgumentError("si_consolidate: shape mismatch");
  for (std::size_t i = 0; i < theta_now.size(); ++i) {
    const double moved = theta_now[i] - si.theta_ref[i];
    si.importance[i] += std::max(si.omega_path[i], 0.0) / (moved * moved + si.xi);
    si.theta_ref[i] = theta_now[i];
    si.omega_path[i] = 0.0;
  }
}

ParamVector si_penalty_grad(const SIState& si, std::span<const double> theta_now) {
  if (theta_now.size() != si.theta_ref.size()) throw ArgumentError("si_penalty_grad: shape mismatch");
  ParamVector g(theta_now.size(), 0.0);
  if (si.lambda == 0.0) return g;
  for (std::size_t i = 0; i < g.size(); ++i) {
    g[i] = 2.0 * si.lambda * si.importance[i] * (theta_now[i] - si.theta_ref[i]);
  }
  return g;
}

double si_penalty(const SIState& si, std::span<const double> theta_now) {
  if (theta_now.size() != si.theta_ref.size()) throw ArgumentError("si_penalty: shape mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < theta_now.size(); ++i) {
    const double d = theta_now[i] - si.theta_ref[i];
    s += si.importance[i] * d * d;
  }
  return si.lambda * s;
}

}  // namespace ocl
