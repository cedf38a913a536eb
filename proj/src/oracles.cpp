#include "ocl/oracles.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "ocl/rng.hpp"

namespace ocl::oracle {

namespace {

double norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double distance_by_definition(const GammaGwrConfig& c, const Neuron& n, std::span<const double> x,
                              const std::vector<Vector>& global) {
  std::vector<double> diff(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) diff[i] = x[i] - n.w[i];
  double d = c.alpha[0] * norm(diff);
  for (std::size_t k = 0; k < c.context_depth; ++k) {
    for (std::size_t i = 0; i < x.size(); ++i) diff[i] = global[k][i] - n.contexts[k][i];
    d += c.alpha[k + 1] * norm(diff);
  }
  return d;
}

double loss_at(const Network& net, std::span<const double> x, std::size_t y) {
  return softmax_xent(forward(net, x).output(), y).loss;
}

Vector random_vector(Rng& rng, std::size_t dim, double scale) {
  Vector v(dim);
  for (auto& x : v) x = rng.normal(0.0, scale);
  return v;
}

template <typename F>
SuiteResult timed(std::string name, F&& body) {
  SuiteResult r;
  r.name = std::move(name);
  const auto t0 = std::chrono::steady_clock::now();
  body(r);
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

}  // namespace

BmuResult brute_force_bmu(const GammaGwr& net, std::span<const double> x, const std::vector<Vector>& global) {
  std::vector<std::pair<double, NeuronId>> all;
  for (const auto& [id, n] : net.neurons()) all.emplace_back(distance_by_definition(net.config(), n, x, global), id);
  std::sort(all.begin(), all.end());
  BmuResult r;
  if (all.empty()) return r;
  r.best = all[0].second;
  r.distance = all[0].first;
  if (all.size() > 1) r.second = all[1].second;
  return r;
}

ParamVector finite_difference_gradient(const Network& net, std::span<const double> x, std::size_t y, double step) {
  Network probe = net;
  ParamVector g(net.param_count());
  for (std::size_t k = 0; k < g.size(); ++k) {
    const double orig = probe.params()[k];
    probe.params()[k] = orig + step;
    const double up = loss_at(probe, x, y);
    probe.params()[k] = orig - step;
    const double down = loss_at(probe, x, y);
    probe.params()[k] = orig;
    g[k] = (up - down) / (2.0 * step);
  }
  return g;
}

ParamVector finite_difference_penalty_gradient(const SIState& si, std::span<const double> theta, double step) {
  std::vector<double> probe(theta.begin(), theta.end());
  ParamVector g(theta.size());
  for (std::size_t k = 0; k < g.size(); ++k) {
    const double orig = probe[k];
    probe[k] = orig + step;
    const double up = si_penalty(si, probe);
    probe[k] = orig - step;
    const double down = si_penalty(si, probe);
    probe[k] = orig;
    g[k] = (up - down) / (2.0 * step);
  }
  return g;
}

double relative_error(std::span<const double> a, std::span<const double> b) {
  std::vector<double> diff(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) diff[i] = a[i] - b[i];
  const double scale = std::max(norm(a), norm(b));
  return scale == 0.0 ? 0.0 : norm(diff) / scale;
}

std::map<std::pair<NeuronId, NeuronId>, double> count_transitions(std::span<const NeuronId> sequence) {
  std::map<std::pair<NeuronId, NeuronId>, double> out;
  for (std::size_t i = 1; i < sequence.size(); ++i) out[{sequence[i], sequence[i - 1]}] += 1.0;
  return out;
}

SuiteResult bmu_suite(std::size_t networks, std::uint64_t seed) {
  return timed("bmu-exhaustive-scan", [&](SuiteResult& r) {
    Rng rng(seed);
    for (std::size_t t = 0; t < networks; ++t) {
      const std::size_t k = rng.below(4);
      const std::size_t dim = 1 + rng.below(32);
      const std::size_t n = 1 + rng.below(50);
      GammaGwr net(GammaGwrConfig::with_depth(k), dim);
      std::vector<NeuronId> ids;
      for (std::size_t i = 0; i < n; ++i) {
        if (i > 0 && rng.uniform() < 0.1) {
          // Planted tie: exact copy of an earlier neuron.
          const Neuron& src = net.neuron(ids[rng.below(ids.size())]);
          ids.push_back(net.add_neuron(src.w, src.contexts));
          continue;
        }
        std::vector<Vector> ctx;
        for (std::size_t c = 0; c < k; ++c) ctx.push_back(random_vector(rng, dim, 1.0));
        ids.push_back(net.add_neuron(random_vector(rng, dim, 1.0), ctx));
      }
      std::vector<Vector> global;
      for (std::size_t c = 0; c < k; ++c) global.push_back(random_vector(rng, dim, 1.0));
      Vector x = rng.uniform() < 0.2 ? net.neuron(ids[rng.below(ids.size())]).w : random_vector(rng, dim, 1.0);

      const auto got = net.find_bmu(x, global);
      const auto want = brute_force_bmu(net, x, global);
      ++r.cases;
      if (got.best != want.best || got.second != want.second || got.distance != want.distance) ++r.failures;
    }
  });
}

SuiteResult backbone_gradient_suite(std::size_t instances, std::uint64_t seed, double tolerance) {
  return timed("backbone-finite-differences", [&](SuiteResult& r) {
    Rng rng(seed);
    for (std::size_t t = 0; t < instances; ++t) {
      const std::size_t depth = 1 + rng.below(3);
      std::vector<LayerSpec> specs;
      std::size_t in = 1 + rng.below(16);
      const std::size_t input_dim = in;
      for (std::size_t l = 1; l <= depth; ++l) {
        const std::size_t out = (l == depth) ? 2 + rng.below(15) : 1 + rng.below(16);
        const Activation a = (l == depth && rng.uniform() < 0.5) ? Activation::Identity : Activation::Rectifier;
        specs.push_back({in, out, a, 1.0});
        in = out;
      }
      Network net(specs, rng.next());
      // Random biases so rectifier units sit on both sides of the kink.
      for (std::size_t l = 1; l <= depth; ++l) {
        for (std::size_t b = 0; b < net.spec(l).out_dim; ++b) net.params()[net.bias_offset(l) + b] = rng.normal(0.0, 0.5);
      }
      const Vector x = random_vector(rng, input_dim, 1.0);
      const std::size_t y = rng.below(net.output_dim());

      const auto rec = forward(net, x);
      const auto loss = softmax_xent(rec.output(), y);
      const auto analytic = backward(net, rec, loss.dlogits);
      const auto numeric = finite_difference_gradient(net, x, y);
      const double err = relative_error(analytic, numeric);
      ++r.cases;
      r.worst = std::max(r.worst, err);
      if (!(err < tolerance)) ++r.failures;
    }
  });
}

SuiteResult si_gradient_suite(std::size_t instances, std::uint64_t seed, double tolerance) {
  return timed("si-penalty-finite-differences", [&](SuiteResult& r) {
    Rng rng(seed);
    for (std::size_t t = 0; t < instances; ++t) {
      const std::size_t n = 1 + rng.below(64);
      const Vector ref = random_vector(rng, n, 1.0);
      SIState si(ref, 0.1, 0.1 + 2.0 * rng.uniform());
      for (auto& o : si.importance) o = rng.uniform() * 3.0;
      const Vector theta = random_vector(rng, n, 1.0);
      const auto analytic = si_penalty_grad(si, theta);
      const auto numeric = finite_difference_penalty_gradient(si, theta);
      const double err = relative_error(analytic, numeric);
      ++r.cases;
      r.worst = std::max(r.worst, err);
      if (!(err < tolerance)) ++r.failures;
    }
  });
}

SuiteResult si_quadratic_suite(std::size_t instances, std::uint64_t seed) {
  return timed("si-quadratic-path-integral", [&](SuiteResult& r) {
    Rng rng(seed);
    for (std::size_t t = 0; t < instances; ++t) {
      const double a = rng.normal(0.0, 2.0);
      const double theta0 = rng.normal(0.0, 2.0);
      const double lr = 0.001 + 0.009 * rng.uniform();
      const std::size_t steps = 10 + rng.below(200);
      const Vector start{theta0};
      SIState si(start, 0.1, 1.0);
      double theta = theta0;
      for (std::size_t s = 0; s < steps; ++s) {
        const Vector g{theta - a};
        const Vector delta{-lr * g[0]};
        si_accumulate(si, g, delta);
        theta += delta[0];
      }
      const double decrease = 0.5 * (theta0 - a) * (theta0 - a) - 0.5 * (theta - a) * (theta - a);
      const double err = decrease > 0.0 ? std::abs(si.omega_path[0] - decrease) / decrease : 0.0;
      ++r.cases;
      r.worst = std::max(r.worst, err);
      if (!(err <= 0.1)) ++r.failures;
    }
  });
}

StationaryGwrRun stationary_gwr_run(std::uint64_t seed, std::size_t epochs, double activity_threshold) {
  Rng rng(seed);
  const double centers[4][2] = {{0.0, 0.0}, {4.0, 0.0}, {0.0, 4.0}, {4.0, 4.0}};
  std::vector<Vector> data;
  for (const auto& c : centers) {
    for (int i = 0; i < 100; ++i) data.push_back({c[0] + rng.normal(0.0, 0.3), c[1] + rng.normal(0.0, 0.3)});
  }
  GammaGwrConfig cfg = GammaGwrConfig::with_depth(0);
  cfg.activity_threshold = activity_threshold;
  GammaGwr net(cfg, 2);
  StationaryGwrRun run;
  std::vector<std::size_t> order(data.size());
  for (std::size_t e = 0; e < epochs; ++e) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    std::size_t inserted = 0;
    for (std::size_t i : order) {
      if (net.train_step(data[i]).inserted) ++inserted;
      for (const auto& [id, n] : net.neurons()) {
        run.h_min = std::min(run.h_min, n.h);
        run.h_max = std::max(run.h_max, n.h);
      }
    }
    net.reset_context();
    run.insertions.push_back(inserted);
    run.quantization_error.push_back(net.quantization_error(data));
  }
  run.neurons = net.size();
  return run;
}

}  // namespace ocl::oracle
