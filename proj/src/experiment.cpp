#include "ocl/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <optional>
#include <sstream>
#include <thread>

#include "ocl/ar1.hpp"
#include "ocl/backbone.hpp"
#include "ocl/errors.hpp"
#include "ocl/gdm.hpp"
#include "ocl/gwr.hpp"
#include "ocl/heads.hpp"
#include "ocl/linalg.hpp"
#include "ocl/replay_buffer.hpp"
#include "ocl/rng.hpp"
#include "ocl/si.hpp"

namespace ocl {

namespace {

using nlohmann::json;

std::size_t argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

class NaiveLearner final : public Learner {
 public:
  NaiveLearner(const StrategyConfig& c, const Dataset& ds, std::uint64_t seed)
      : net_(mlp_specs(ds.dim, c.hidden, static_cast<std::size_t>(ds.n_classes)), seed),
        epochs_(c.epochs),
        minibatch_(c.minibatch),
        lr_(c.lr) {}

  void train(const TrainingBatch& batch) override {
    const auto& ex = batch.examples;
    for (std::size_t epoch = 0; epoch < epochs_; ++epoch) {
      for (std::size_t start = 0; start < ex.size(); start += minibatch_) {
        const std::size_t end = std::min(ex.size(), start + minibatch_);
        ParamVector grads(net_.param_count(), 0.0);
        for (std::size_t i = start; i < end; ++i) {
          const auto rec = forward(net_, ex[i].x);
          const auto loss = softmax_xent(rec.output(), static_cast<std::size_t>(ex[i].y));
          accumulate_backward(net_, rec, loss.dlogits, std::nullopt, grads);
        }
        const double inv = 1.0 / static_cast<double>(end - start);
        for (auto& g : grads) g *= inv;
        sgd_step(net_, grads, lr_);
      }
    }
  }

  int predict(const Example& e) const override { return static_cast<int>(argmax(forward(net_, e.x).output())); }

 private:
  Network net_;
  std::size_t epochs_;
  std::size_t minibatch_;
  double lr_;
};

// cwr, cwr+, cwr*, ar1, ar1*, ar1*free
class HeadLearner final : public Learner {
 public:
  HeadLearner(const StrategyConfig& c, const Dataset& ds, std::uint64_t seed)
      : name_(c.name),
        dataset_(ds),
        net_(mlp_specs(ds.dim, c.hidden, std::nullopt), derive_seed(seed, 1)),
        head_(static_cast<std::size_t>(ds.n_classes), c.hidden.back()),
        rng_(derive_seed(seed, 2)),
        replay_layer_(c.replay_layer),
        below_replay_lr_(c.below_replay_lr) {
    if (name_ == "cwr") policy_ = ConsolidationPolicy::cwr();
    else if (name_ == "cwr+" || name_ == "ar1") policy_ = ConsolidationPolicy::cwr_plus();
    else policy_ = ConsolidationPolicy::cwr_star();
    policy_.validate();

    cfg_.epochs = c.epochs;
    cfg_.lr = c.lr;
    cfg_.minibatch = c.minibatch;
    cfg_.replay_fraction = c.replay_fraction;
    cfg_.reload_known = policy_.variant == CwrVariant::CwrStar;

    if (name_.rfind("ar1", 0) == 0) si_.emplace(net_.params(), c.xi, c.lambda);
    if (name_ == "ar1*" || name_ == "ar1*free") {
      buffer_.emplace(c.rm_size, replay_layer_, net_.width(replay_layer_), derive_seed(seed, 3));
    }
  }

  void train(const TrainingBatch& batch) override {
    if (batches_ == 1) freeze_after_first_batch();
    last_ = train_head_network_batch(net_, head_, policy_, si_ ? &*si_ : nullptr, buffer_ ? &*buffer_ : nullptr,
                                     batch, cfg_, rng_);
    ++batches_;
  }

  int predict(const Example& e) const override { return ocl::predict(head_, forward(net_, e.x).output()); }

  std::size_t stored_examples() const override { return buffer_ ? buffer_->size() : 0; }

  json diagnostics(const Scenario&, std::size_t) const override {
    json d = {{"epoch_loss", last_.epoch_loss}, {"replayed", last_.replayed}};
    if (si_) d["si_penalty"] = last_.penalty_after;
    if (buffer_) {
      d["buffer_size"] = buffer_->size();
      // Aging: mean distance between each stored latent and the latent the
      // current network computes for the same input.
      double sum = 0.0;
      std::size_t n = 0;
      for (const ReplayEntry* e : buffer_->entries()) {
        if (e->source < 0 || static_cast<std::size_t>(e->source) >= dataset_.examples.size()) continue;
        const auto rec = forward(net_, dataset_.examples[static_cast<std::size_t>(e->source)].x);
        sum += euclidean(rec.at(replay_layer_), e->latent);
        ++n;
      }
      d["latent_aging"] = n ? sum / static_cast<double>(n) : 0.0;
    }
    return d;
  }

 private:
  void freeze_after_first_batch() {
    if (name_ == "cwr" || name_ == "cwr+" || name_ == "cwr*") {
      for (std::size_t l = 1; l <= net_.depth(); ++l) net_.set_lr_multiplier(l, 0.0);
    } else if (name_ == "ar1*" || name_ == "ar1*free") {
      const double m = name_ == "ar1*" ? below_replay_lr_ : 0.0;
      for (std::size_t l = 1; l <= replay_layer_; ++l) net_.set_lr_multiplier(l, m);
    }
  }

  std::string name_;
  const Dataset& dataset_;
  Network net_;
  HeadState head_;
  ConsolidationPolicy policy_;
  std::optional<SIState> si_;
  std::optional<LatentReplayBuffer> buffer_;
  Ar1Config cfg_;
  Rng rng_;
  std::size_t replay_layer_;
  double below_replay_lr_;
  std::size_t batches_ = 0;
  BatchReport last_;
};

std::vector<std::size_t> training_order(const TrainingBatch& batch, bool group_by_instance) {
  std::vector<std::size_t> order(batch.examples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  if (group_by_instance) {
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return batch.examples[a].instance < batch.examples[b].instance;
    });
  }
  return order;
}

class GwrLearner final : public Learner {
 public:
  GwrLearner(const StrategyConfig& c, const Dataset& ds)
      : net_(c.gwr, ds.dim), epochs_(c.gwr_epochs), group_(c.group_by_instance) {}

  void train(const TrainingBatch& batch) override {
    const auto order = training_order(batch, group_);
    for (std::size_t epoch = 0; epoch < epochs_; ++epoch) {
      for (std::size_t i : order) net_.train_step(batch.examples[i].x, batch.examples[i].y);
    }
  }

  int predict(const Example& e) const override {
    const std::vector<Vector> seq{e.x};
    return net_.classify(seq);
  }

  json diagnostics(const Scenario&, std::size_t) const override {
    return {{"neurons", net_.size()}, {"edges", net_.edge_count()}};
  }

 private:
  GammaGwr net_;
  std::size_t epochs_;
  bool group_;
};

class GdmLearner final : public Learner {
 public:
  GdmLearner(const StrategyConfig& c, const Dataset& ds)
      : memory_(c.gdm, ds.dim), epochs_(c.gdm_epochs), group_(c.group_by_instance) {}

  void train(const TrainingBatch& batch) override {
    const auto order = training_order(batch, group_);
    std::vector<LabeledFrame> frames;
    frames.reserve(order.size() * epochs_);
    for (std::size_t epoch = 0; epoch < epochs_; ++epoch) {
      for (std::size_t i : order) {
        const auto& e = batch.examples[i];
        frames.push_back({e.x, e.instance, e.y});
      }
    }
    last_ = memory_.train_episode(frames);
  }

  int predict(const Example& e) const override {
    const std::vector<Vector> seq{e.x};
    return memory_.classify_category(seq);
  }

  json diagnostics(const Scenario& scenario, std::size_t after_batch) const override {
    const auto first = scenario.first_batch_of_class();
    std::size_t correct = 0, total = 0;
    for (const auto& e : scenario.test_set) {
      const int b = first[static_cast<std::size_t>(e.y)];
      if (b < 0 || static_cast<std::size_t>(b) > after_batch) continue;
      ++total;
      const std::vector<Vector> seq{e.x};
      if (memory_.classify_instance(seq) == e.instance) ++correct;
    }
    return {{"frames", last_.frames},
            {"episodic_insertions", last_.episodic_insertions},
            {"semantic_insertions", last_.semantic_insertions},
            {"semantic_gated", last_.semantic_gated},
            {"replayed_trajectories", last_.replayed_trajectories},
            {"episodic_neurons", last_.episodic_neurons},
            {"semantic_neurons", last_.semantic_neurons},
            {"instance_accuracy", total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0}};
  }

 private:
  DualMemory memory_;
  std::size_t epochs_;
  bool group_;
  EpisodeReport last_;
};

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::string examples_csv(const std::vector<Example>& examples, std::size_t dim) {
  std::ostringstream out;
  for (std::size_t k = 0; k < dim; ++k) out << 'x' << k << ',';
  out << "label,instance,task\n";
  char buf[40];
  for (const auto& e : examples) {
    for (double v : e.x) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out << buf << ',';
    }
    out << e.y << ',' << e.instance << ',';
    if (e.t) out << *e.t;
    out << '\n';
  }
  return out.str();
}

std::string episodes_csv(const RunRecord& record) {
  std::ostringstream out;
  out << "strategy,seed,batch_i,frames,episodic_insertions,semantic_insertions,semantic_gated,"
         "replayed_trajectories,episodic_neurons,semantic_neurons,instance_accuracy\n";
  const auto& per = record.diagnostics.at("per_batch");
  for (std::size_t i = 0; i < per.size(); ++i) {
    const auto& d = per[i];
    out << record.strategy << ',' << record.seed << ',' << i + 1 << ',' << d.at("frames") << ','
        << d.at("episodic_insertions") << ',' << d.at("semantic_insertions") << ',' << d.at("semantic_gated") << ','
        << d.at("replayed_trajectories") << ',' << d.at("episodic_neurons") << ',' << d.at("semantic_neurons")
        << ',' << format_real(d.at("instance_accuracy").get<double>()) << '\n';
  }
  return out.str();
}

}  // namespace

std::unique_ptr<Learner> make_learner(const StrategyConfig& config, const Dataset& dataset, std::uint64_t seed) {
  const auto& n = config.name;
  if (n == "naive") return std::make_unique<NaiveLearner>(config, dataset, derive_seed(seed, 1));
  if (n == "cwr" || n == "cwr+" || n == "cwr*" || n == "ar1" || n == "ar1*" || n == "ar1*free") {
    return std::make_unique<HeadLearner>(config, dataset, seed);
  }
  if (n == "gwr") return std::make_unique<GwrLearner>(config, dataset);
  if (n == "gdm" || n == "gdm-noreplay") {
    StrategyConfig c = config;
    c.gdm.replay_enabled = n == "gdm";
    return std::make_unique<GdmLearner>(c, dataset);
  }
  throw ConfigError("strategy.name: unknown strategy '" + n + "'");
}

Dataset build_dataset(const ScenarioConfig& config, std::uint64_t run_seed) {
  const auto& d = config.dataset;
  if (d.source == "csv") return load_csv_dataset(d.path, d.label_column);
  SyntheticSpec spec = d.synthetic;
  spec.seed = d.seed.value_or(run_seed);
  return make_synthetic_dataset(spec);
}

Scenario build_experiment_scenario(const ScenarioConfig& config, const Dataset& dataset, std::uint64_t run_seed) {
  Scenario s = build_scenario(dataset, config.kind, config.content, config.n_batches, run_seed, config.test_fraction);
  if (!config.task_labels) s = withhold_task_labels(std::move(s));
  return s;
}

std::string strategy_dirname(const std::string& strategy) {
  std::string out;
  for (char c : strategy) {
    if (c == '*') out += "star";
    else if (c == '+') out += "plus";
    else out.push_back(c);
  }
  return out;
}

RunRecord run_seed(const ExperimentConfig& config, std::uint64_t seed) {
  const Dataset dataset = build_dataset(config.scenario, seed);
  const Scenario scenario = build_experiment_scenario(config.scenario, dataset, seed);
  auto learner = make_learner(config.strategy, dataset, seed);

  RunRecord rec;
  rec.strategy = config.strategy.name;
  rec.seed = seed;
  rec.manifest = manifest_json(scenario);
  rec.accuracy = AccuracyMatrix(scenario.batches.size());
  json per_batch = json::array();
  std::size_t cumulative = 0;
  for (std::size_t i = 0; i < scenario.batches.size(); ++i) {
    const auto& batch = scenario.batches[i];
    const auto t0 = std::chrono::steady_clock::now();
    try {
      learner->train(batch);
    } catch (const NumericError& e) {
      throw NumericError("seed " + std::to_string(seed) + ", batch " + std::to_string(i + 1) + ": " + e.what());
    }
    const auto t1 = std::chrono::steady_clock::now();
    rec.batch_seconds.push_back(std::chrono::duration<double>(t1 - t0).count());
    cumulative += batch.examples.size();
    rec.resources.record(i + 1, learner->stored_examples(), cumulative);
    evaluate_into(rec.accuracy, i, scenario, [&](const Example& e) { return learner->predict(e); });
    per_batch.push_back(learner->diagnostics(scenario, i));
  }
  rec.diagnostics = {{"per_batch", per_batch}};
  return rec;
}

std::vector<RunRecord> run_experiment(const ExperimentConfig& config) {
  const auto& seeds = config.scenario.seeds;
  std::vector<std::optional<RunRecord>> records(seeds.size());
  std::vector<std::exception_ptr> errors(seeds.size());
  std::size_t workers = config.threads;
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, seeds.size());

  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t k = next++; k < seeds.size(); k = next++) {
      try {
        records[k] = run_seed(config, seeds[k]);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  std::vector<RunRecord> out;
  for (auto& r : records) out.push_back(std::move(*r));
  return out;
}

std::filesystem::path write_run_outputs(const std::filesystem::path& root, const RunRecord& record) {
  const auto dir = root / strategy_dirname(record.strategy) / ("seed_" + std::to_string(record.seed));
  std::filesystem::create_directories(dir);
  write_text(dir / "metrics.csv", metrics_csv(record));
  write_text(dir / "timing.csv", timing_csv(record));
  write_text(dir / "record.json", to_json(record).dump(2) + "\n");
  write_text(dir / "manifest.json", record.manifest.dump(2) + "\n");
  if (record.strategy == "gdm" || record.strategy == "gdm-noreplay") write_text(dir / "episodes.csv", episodes_csv(record));
  return dir;
}

std::vector<std::filesystem::path> generate_scenarios(const ExperimentConfig& config,
                                                      const std::filesystem::path& root) {
  std::vector<std::filesystem::path> dirs;
  for (std::uint64_t seed : config.scenario.seeds) {
    const Dataset dataset = build_dataset(config.scenario, seed);
    const Scenario scenario = build_experiment_scenario(config.scenario, dataset, seed);
    const auto dir = root / "scenario" / ("seed_" + std::to_string(seed));
    std::filesystem::create_directories(dir);
    write_text(dir / "manifest.json", manifest_json(scenario).dump(2) + "\n");
    for (const auto& b : scenario.batches) {
      write_text(dir / ("batch_" + std::to_string(b.index) + ".csv"), examples_csv(b.examples, scenario.dim));
    }
    write_text(dir / "test.csv", examples_csv(scenario.test_set, scenario.dim));
    dirs.push_back(dir);
  }
  return dirs;
}

std::filesystem::path output_root(const ExperimentConfig& config) {
  if (const char* env = std::getenv("OCL_OUTPUT_ROOT"); env && *env) return env;
  return config.output_dir;
}

}  // namespace ocl
