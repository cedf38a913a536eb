#include "ocl/backbone.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ocl/errors.hpp"
#include "ocl/linalg.hpp"
#include "ocl/rng.hpp"

namespace ocl {

Network::Network(std::vector<LayerSpec> layers, std::uint64_t seed) : specs_(std::move(layers)), seed_(seed) {
  if (specs_.empty()) throw ArgumentError("Network: at least one layer required");
  std::size_t total = 0;
  for (std::size_t i = 0; i < specs_.size(); ++i) {
    const auto& s = specs_[i];
    if (s.in_dim < 1 || s.out_dim < 1) throw ArgumentError("Network: layer dims must be >= 1");
    if (!(s.lr_multiplier >= 0.0)) throw ArgumentError("Network: lr_multiplier must be >= 0");
    if (i > 0 && specs_[i - 1].out_dim != s.in_dim) {
      throw ArgumentError("Network: layer " + std::to_string(i + 1) + " in_dim does not match previous out_dim");
    }
    offsets_.push_back(total);
    total += s.in_dim * s.out_dim + s.out_dim;
  }
  params_.assign(total, 0.0);
  Rng rng(seed);
  for (std::size_t l = 1; l <= depth(); ++l) {
    const auto& s = spec(l);
    const double stddev = std::sqrt(2.0 / static_cast<double>(s.in_dim));
    const std::size_t w0 = weight_offset(l);
    for (std::size_t i = 0; i < s.in_dim * s.out_dim; ++i) params_[w0 + i] = rng.normal(0.0, stddev);
  }
}

void Network::set_lr_multiplier(std::size_t layer, double m) {
  if (layer < 1 || layer > depth()) throw ArgumentError("set_lr_multiplier: bad layer index");
  if (!(m >= 0.0)) throw ArgumentError("set_lr_multiplier: multiplier must be >= 0");
  specs_[layer - 1].lr_multiplier = m;
}

std::size_t Network::width(std::size_t k) const {
  if (k == 0) return input_dim();
  return spec(k).out_dim;
}

namespace {

void apply_layer(const Network& net, std::size_t layer, std::span<const double> in, std::vector<double>& out) {
  const auto& s = net.spec(layer);
  const auto p = net.params();
  const std::size_t w0 = net.weight_offset(layer);
  const std::size_t b0 = net.bias_offset(layer);
  out.assign(s.out_dim, 0.0);
  for (std::size_t r = 0; r < s.out_dim; ++r) {
    double z = p[b0 + r];
    const double* w = p.data() + w0 + r * s.in_dim;
    for (std::size_t c = 0; c < s.in_dim; ++c) z += w[c] * in[c];
    out[r] = (s.activation == Activation::Rectifier && z < 0.0) ? 0.0 : z;
  }
}

}  // namespace

ActivationRecord forward_from(const Network& net, std::size_t index, std::span<const double> latent) {
  if (index > net.depth()) throw ArgumentError("forward_from: activation index out of range");
  if (latent.size() != net.width(index)) {
    throw ArgumentError("forward_from: latent has dim " + std::to_string(latent.size()) + ", expected " +
                        std::to_string(net.width(index)));
  }
  ActivationRecord rec;
  rec.first = index;
  rec.values.reserve(net.depth() - index + 1);
  rec.values.emplace_back(latent.begin(), latent.end());
  for (std::size_t l = index + 1; l <= net.depth(); ++l) {
    std::vector<double> out;
    apply_layer(net, l, rec.values.back(), out);
    rec.values.push_back(std::move(out));
  }
  return rec;
}

ActivationRecord forward(const Network& net, std::span<const double> x) {
  if (x.size() != net.input_dim()) {
    throw ArgumentError("forward: input has dim " + std::to_string(x.size()) + ", expected " +
                        std::to_string(net.input_dim()));
  }
  return forward_from(net, 0, x);
}

LossResult softmax_xent(std::span<const double> logits, std::size_t y) {
  if (y >= logits.size()) throw ArgumentError("softmax_xent: label outside logit range");
  const double m = *std::max_element(logits.begin(), logits.end());
  LossResult r;
  r.dlogits.resize(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    r.dlogits[i] = std::exp(logits[i] - m);
    z += r.dlogits[i];
  }
  for (auto& v : r.dlogits) v /= z;
  r.loss = std::log(z) - (logits[y] - m);
  r.dlogits[y] -= 1.0;
  return r;
}

void accumulate_backward(const Network& net, const ActivationRecord& record, std::span<const double> dout,
                         std::optional<std::size_t> stop_below, ParamVector& grads) {
  if (record.values.empty() || record.last() != net.depth()) {
    throw ArgumentError("backward: record does not end at the network output");
  }
  for (std::size_t k = record.first; k <= record.last(); ++k) {
    if (record.at(k).size() != net.width(k)) throw ArgumentError("backward: record does not match network");
  }
  if (dout.size() != net.output_dim()) throw ArgumentError("backward: output gradient has wrong dim");
  if (grads.size() != net.param_count()) throw ArgumentError("backward: gradient buffer has wrong size");
  const std::size_t lowest = record.first + 1;
  std::size_t stop = stop_below.value_or(lowest);
  if (stop == 0) stop = 1;
  if (stop < lowest) throw ArgumentError("backward: record does not reach layer " + std::to_string(stop));

  const auto p = net.params();
  std::vector<double> delta(dout.begin(), dout.end());
  for (std::size_t l = net.depth(); l >= stop; --l) {
    const auto& s = net.spec(l);
    const auto& out = record.at(l);
    const auto& in = record.at(l - 1);
    if (s.activation == Activation::Rectifier) {
      for (std::size_t r = 0; r < s.out_dim; ++r) {
        if (!(out[r] > 0.0)) delta[r] = 0.0;
      }
    }
    const std::size_t w0 = net.weight_offset(l);
    const std::size_t b0 = net.bias_offset(l);
    for (std::size_t r = 0; r < s.out_dim; ++r) {
      double* g = grads.data() + w0 + r * s.in_dim;
      for (std::size_t c = 0; c < s.in_dim; ++c) g[c] += delta[r] * in[c];
      grads[b0 + r] += delta[r];
    }
    if (l == stop) break;
    std::vector<double> below(s.in_dim, 0.0);
    for (std::size_t r = 0; r < s.out_dim; ++r) {
      const double* w = p.data() + w0 + r * s.in_dim;
      for (std::size_t c = 0; c < s.in_dim; ++c) below[c] += w[c] * delta[r];
    }
    delta = std::move(below);
  }
}

ParamVector backward(const Network& net, const ActivationRecord& record, std::span<const double> dout,
                     std::optional<std::size_t> stop_below) {
  ParamVector grads(net.param_count(), 0.0);
  accumulate_backward(net, record, dout, stop_below, grads);
  return grads;
}

ParamVector sgd_step(Network& net, std::span<const double> grads, double lr) {
  if (!(lr >= 0.0)) throw ArgumentError("sgd_step: lr must be >= 0");
  if (grads.size() != net.param_count()) throw ArgumentError("sgd_step: gradient size mismatch");
  if (!all_finite(grads)) throw NumericError("sgd_step: non-finite gradient");
  ParamVector deltas(net.param_count(), 0.0);
  auto p = net.params();
  for (std::size_t l = 1; l <= net.depth(); ++l) {
    const double step = lr * net.spec(l).lr_multiplier;
    if (step == 0.0) continue;
    const std::size_t begin = net.weight_offset(l);
    const std::size_t end = begin + net.layer_param_count(l);
    for (std::size_t i = begin; i < end; ++i) {
      deltas[i] = -step * grads[i];
      p[i] += deltas[i];
    }
  }
  return deltas;
}

nlohmann::json to_json(const Network& net) {
  nlohmann::json layers = nlohmann::json::array();
  const auto p = net.params();
  for (std::size_t l = 1; l <= net.depth(); ++l) {
    const auto& s = net.spec(l);
    const auto w0 = static_cast<std::ptrdiff_t>(net.weight_offset(l));
    const auto b0 = static_cast<std::ptrdiff_t>(net.bias_offset(l));
    layers.push_back({{"in_dim", s.in_dim},
                      {"out_dim", s.out_dim},
                      {"activation", s.activation == Activation::Rectifier ? "rectifier" : "identity"},
                      {"lr_multiplier", s.lr_multiplier},
                      {"weights", std::vector<double>(p.begin() + w0, p.begin() + b0)},
                      {"bias", std::vector<double>(p.begin() + b0, p.begin() + b0 + static_cast<std::ptrdiff_t>(s.out_dim))}});
  }
  return {{"seed", net.seed()}, {"layers", layers}};
}

Network network_from_json(const nlohmann::json& j) {
  std::vector<LayerSpec> specs;
  for (const auto& l : j.at("layers")) {
    LayerSpec s;
    s.in_dim = l.at("in_dim").get<std::size_t>();
    s.out_dim = l.at("out_dim").get<std::size_t>();
    const auto act = l.at("activation").get<std::string>();
    if (act == "rectifier") {
      s.activation = Activation::Rectifier;
    } else if (act == "identity") {
      s.activation = Activation::Identity;
    } else {
      throw ParseError("network checkpoint: unknown activation '" + act + "'");
    }
    s.lr_multiplier = l.at("lr_multiplier").get<double>();
    specs.push_back(s);
  }
  Network net(specs, j.at("seed").get<std::uint64_t>());
  auto p = net.params();
  std::size_t l = 1;
  for (const auto& layer : j.at("layers")) {
    const auto w = layer.at("weights").get<std::vector<double>>();
    const auto b = layer.at("bias").get<std::vector<double>>();
    const auto& s = net.spec(l);
    if (w.size() != s.in_dim * s.out_dim || b.size() != s.out_dim) {
      throw ParseError("network checkpoint: parameter array size mismatch in layer " + std::to_string(l));
    }
    std::copy(w.begin(), w.end(), p.begin() + static_cast<std::ptrdiff_t>(net.weight_offset(l)));
    std::copy(b.begin(), b.end(), p.begin() + static_cast<std::ptrdiff_t>(net.bias_offset(l)));
    ++l;
  }
  return net;
}

std::vector<LayerSpec> mlp_specs(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                                 std::optional<std::size_t> output_dim) {
  std::vector<LayerSpec> specs;
  std::size_t in = input_dim;
  for (std::size_t h : hidden) {
    specs.push_back({in, h, Activation::Rectifier, 1.0});
    in = h;
  }
  if (output_dim) specs.push_back({in, *output_dim, Activation::Identity, 1.0});
  return specs;
}

}  // namespace ocl
