#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ocl/backbone.hpp"
#include "ocl/gwr.hpp"
#include "ocl/si.hpp"

// Reference implementations used to check the library from an independent
// code path: brute-force scans, finite differences and closed forms.
namespace ocl::oracle {

/// Exhaustive BMU search computing every distance from its definition.
BmuResult brute_force_bmu(const GammaGwr& net, std::span<const double> x, const std::vector<Vector>& global);

/// Central finite differences of softmax cross-entropy w.r.t. every parameter.
ParamVector finite_difference_gradient(const Network& net, std::span<const double> x, std::size_t y,
                                       double step = 1e-5);
/// Central finite differences of the SI penalty at theta.
ParamVector finite_difference_penalty_gradient(const SIState& si, std::span<const double> theta,
                                               double step = 1e-5);

/// ||a - b|| / max(||a||, ||b||); 0 when both vanish.
double relative_error(std::span<const double> a, std::span<const double> b);

/// Count of every consecutive (from, to) pair, keyed (to, from).
std::map<std::pair<NeuronId, NeuronId>, double> count_transitions(std::span<const NeuronId> sequence);

struct SuiteResult {
  std::string name;
  std::size_t cases = 0;
  std::size_t failures = 0;
  double worst = 0.0;  // largest error seen (0 for exact-match suites)
  double seconds = 0.0;
  bool passed() const { return cases > 0 && failures == 0; }
};

/// Random networks (<= 50 neurons, dim <= 32, K <= 3) with planted ties:
/// find_bmu must equal the exhaustive scan.
SuiteResult bmu_suite(std::size_t networks, std::uint64_t seed);
/// Random MLPs (<= 3 layers, dims <= 16): backward vs finite differences.
SuiteResult backbone_gradient_suite(std::size_t instances, std::uint64_t seed, double tolerance = 1e-4);
/// Random SI states: si_penalty_grad vs finite differences of si_penalty.
SuiteResult si_gradient_suite(std::size_t instances, std::uint64_t seed, double tolerance = 1e-6);
/// 1-D quadratic 0.5 (theta - a)^2 under small-step SGD: the accumulated path
/// integral must match the closed-form loss decrease within 10%.
SuiteResult si_quadratic_suite(std::size_t instances, std::uint64_t seed);

/// Shuffled epochs over four well-separated 2-D Gaussian clusters, K = 0.
struct StationaryGwrRun {
  std::vector<double> quantization_error;  // after each epoch
  std::vector<std::size_t> insertions;     // per epoch
  double h_min = 1.0;
  double h_max = 0.0;  // over every neuron after every step
  std::size_t neurons = 0;
};
StationaryGwrRun stationary_gwr_run(std::uint64_t seed, std::size_t epochs = 5, double activity_threshold = 0.5);

}  // namespace ocl::oracle
