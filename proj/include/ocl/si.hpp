#pragma once

#include <span>

#include "ocl/backbone.hpp"

namespace ocl {

/// Synaptic Intelligence state over the shared (non-head) parameters.
///
/// The per-parameter path integral of -grad * delta is accumulated during a
/// training batch and folded into the importance Omega at the batch end:
///   Omega += max(path, 0) / ((theta - theta_ref)^2 + xi)
/// The surrogate penalty lambda * sum Omega (theta - theta_ref)^2 ties
/// important parameters to their value at the last consolidation.
struct SIState {
  ParamVector omega_path;
  ParamVector importance;
  ParamVector theta_ref;
  double xi = 0.1;
  double lambda = 1.0;

  SIState() = default;
  SIState(std::span<const double> theta, double xi_, double lambda_);
};

/// `grads` is the task-loss gradient the step was computed from (no penalty).
void si_accumulate(SIState& si, std::span<const double> grads, std::span<const double> deltas);
void si_consolidate(SIState& si, std::span<const double> theta_now);
ParamVector si_penalty_grad(const SIState& si, std::span<const double> theta_now);
double si_penalty(const SIState& si, std::span<const double> theta_now);

}  // namespace ocl
