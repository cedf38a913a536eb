// One PASS/FAIL line per acceptance criterion; exit status 1 if any fails.

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>

#include "ocl/ar1.hpp"
#include "ocl/config.hpp"
#include "ocl/experiment.hpp"
#include "ocl/gdm.hpp"
#include "ocl/metrics.hpp"
#include "ocl/oracles.hpp"

using namespace ocl;
namespace fs = std::filesystem;

namespace {

const fs::path kConfigs = OCL_CONFIG_DIR;

// Means over seeds 0-4 of configs/benchmark_nc.toml, frozen from the
// calibration run. Measured values must stay within kFixtureTolerance.
constexpr double kFixtureTolerance = 0.02;
constexpr double kNaiveRetentionRatio = 0.295;
constexpr double kCwrPlusRetentionRatio = 0.935;
constexpr double kCwrPlusFinal = 0.812;
constexpr double kAr1StarFinal = 0.944;
constexpr double kGdmFinal = 0.996;
constexpr double kGdmNoReplayFinal = 0.810;

struct Outcome {
  bool pass = true;
  std::string detail;
};

bool all_pass = true;

void criterion(int id, const char* title, double limit_seconds, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  char timing[96];
  std::snprintf(timing, sizeof timing, "%.3fs (limit %.0fs)", s, limit_seconds);
  const bool pass = o.pass && s < limit_seconds;
  all_pass = all_pass && pass;
  std::printf("criterion %d %s  %s  %s; %s\n", id, pass ? "PASS" : "FAIL", title, timing, o.detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

ExperimentConfig benchmark(const std::string& strategy) {
  auto j = default_config();
  apply_json_override(j, load_config_file(kConfigs / "benchmark_nc.toml"));
  apply_assignment(j, "strategy.name=\"" + strategy + "\"");
  return experiment_config_from_json(j);
}

struct Summary {
  std::vector<RunRecord> records;
  double first_ratio = 0.0;  // mean R(N,1) / mean R(1,1)
  double final_avg = 0.0;    // mean average accuracy after the last batch
};

Summary summarize(std::vector<RunRecord> recs) {
  std::vector<std::vector<double>> first, avg;
  for (const auto& r : recs) {
    first.push_back(first_task_retention(r.accuracy));
    avg.push_back(average_accuracy_series(r.accuracy));
  }
  const auto f = aggregate_series(first).mean;
  const auto a = aggregate_series(avg).mean;
  return {std::move(recs), f.back() / f.front(), a.back()};
}

Outcome near(double measured, double fixture, const std::string& name) {
  const bool ok = std::abs(measured - fixture) <= kFixtureTolerance;
  return {ok, name + " " + fmt("%.3f", measured) + " (fixture " + fmt("%.3f", fixture) + ")"};
}

Outcome combine(std::initializer_list<Outcome> parts) {
  Outcome o;
  for (const auto& p : parts) {
    o.pass = o.pass && p.pass;
    if (!o.detail.empty()) o.detail += ", ";
    o.detail += p.detail;
  }
  return o;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string("'") + OCL_CLI_PATH + "' " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// The ar1*free schedule of the experiment driver, with the rehearsal memory
// at `memory_layer` (the replay layer, or 0 for raw inputs).
struct Ar1FreeRun {
  Network net;
  HeadState head;
};

Ar1FreeRun ar1_free_run(const ExperimentConfig& cfg, const Scenario& sc, std::uint64_t seed, std::size_t memory_layer,
                       std::vector<std::vector<double>>* per_batch_cw) {
  const auto& s = cfg.strategy;
  Network net(mlp_specs(sc.dim, s.hidden, std::nullopt), derive_seed(seed, 1));
  HeadState head(static_cast<std::size_t>(sc.n_classes), s.hidden.back());
  SIState si(net.params(), s.xi, s.lambda);
  LatentReplayBuffer buffer(s.rm_size, memory_layer, net.width(memory_layer), derive_seed(seed, 3));
  Rng rng(derive_seed(seed, 2));
  Ar1Config ac;
  ac.epochs = s.epochs;
  ac.lr = s.lr;
  ac.minibatch = s.minibatch;
  ac.replay_fraction = s.replay_fraction;
  ac.reload_known = true;
  for (std::size_t b = 0; b < sc.batches.size(); ++b) {
    if (b == 1) {
      for (std::size_t l = 1; l <= s.replay_layer; ++l) net.set_lr_multiplier(l, 0.0);
    }
    train_head_network_batch(net, head, ConsolidationPolicy::cwr_star(), &si, &buffer, sc.batches[b], ac, rng);
    if (per_batch_cw) per_batch_cw->push_back(head.cw.data);
  }
  return {std::move(net), std::move(head)};
}

}  // namespace

int main() {
  std::printf("acceptance: oracle, gradient, equivalence, benchmark and CLI checks\n");

  criterion(1, "BMU search equals exhaustive scan", 5.0, [] {
    const auto r = oracle::bmu_suite(1000, 101);
    return Outcome{r.passed(), std::to_string(r.cases) + " networks, " + std::to_string(r.failures) + " mismatches"};
  });

  criterion(2, "gradients match central finite differences", 10.0, [] {
    const auto net = oracle::backbone_gradient_suite(100, 102, 1e-4);
    const auto si = oracle::si_gradient_suite(100, 103, 1e-6);
    return Outcome{net.passed() && si.passed(), "backbone worst rel. err " + fmt("%.2e", net.worst) +
                                                    " < 1e-4, SI penalty worst " + fmt("%.2e", si.worst) + " < 1e-6"};
  });

  criterion(3, "latent replay equals native rehearsal bitwise", 30.0, [] {
    const auto cfg = benchmark("ar1*free");
    const std::uint64_t seed = 0;
    const Dataset ds = build_dataset(cfg.scenario, seed);
    const Scenario sc = build_experiment_scenario(cfg.scenario, ds, seed);
    std::vector<std::vector<double>> latent_cw, native_cw;
    const auto latent = ar1_free_run(cfg, sc, seed, cfg.strategy.replay_layer, &latent_cw);
    ar1_free_run(cfg, sc, seed, 0, &native_cw);
    std::size_t equal_batches = 0;
    for (std::size_t b = 0; b < latent_cw.size(); ++b) equal_batches += latent_cw[b] == native_cw[b];

    // The replica must be the driver's own ar1*free learner.
    auto learner = make_learner(cfg.strategy, ds, seed);
    for (const auto& batch : sc.batches) learner->train(batch);
    std::size_t agree = 0;
    for (const auto& e : sc.test_set) agree += learner->predict(e) == predict(latent.head, forward(latent.net, e.x).output());
    const auto rec = run_seed(cfg, seed);
    bool aging_zero = true;
    for (std::size_t b = 1; b < rec.diagnostics["per_batch"].size(); ++b)
      aging_zero = aging_zero && rec.diagnostics["per_batch"][b]["latent_aging"].get<double>() == 0.0;
    const bool ok = equal_batches == latent_cw.size() && agree == sc.test_set.size() && aging_zero;
    return Outcome{ok, std::to_string(equal_batches) + "/" + std::to_string(latent_cw.size()) +
                           " batches with identical cw, replica agrees with the driver on " + std::to_string(agree) +
                           "/" + std::to_string(sc.test_set.size()) + " test inputs, stored latents unaged after batch 1 " +
                           (aging_zero ? "yes" : "no")};
  });

  std::map<std::string, Summary> bench;
  criterion(4, "forgetting trends on the NC benchmark stream", 300.0, [&] {
    for (const char* name : {"naive", "cwr+", "ar1*", "gdm", "gdm-noreplay"}) {
      bench[name] = summarize(run_experiment(benchmark(name)));
    }
    const auto& naive = bench["naive"];
    const auto& cwrp = bench["cwr+"];
    const auto& ar1s = bench["ar1*"];
    const auto& gdm = bench["gdm"];
    const auto& gdmn = bench["gdm-noreplay"];
    const Outcome a{naive.first_ratio < 0.5, "(a) naive retention ratio " + fmt("%.3f", naive.first_ratio) + " < 0.5"};
    const Outcome b{cwrp.first_ratio >= 0.9, "(b) cwr+ ratio " + fmt("%.3f", cwrp.first_ratio) + " >= 0.9"};
    const Outcome c{ar1s.final_avg - cwrp.final_avg > 0.0,
                    "(c) ar1* - cwr+ = " + fmt("%+.3f", ar1s.final_avg - cwrp.final_avg)};
    const Outcome d{gdm.final_avg - gdmn.final_avg >= 0.03,
                    "(d) gdm - gdm-noreplay = " + fmt("%+.3f", gdm.final_avg - gdmn.final_avg) + " >= 0.030"};
    return combine({a, b, c, d, near(naive.first_ratio, kNaiveRetentionRatio, "naive ratio"),
                    near(cwrp.first_ratio, kCwrPlusRetentionRatio, "cwr+ ratio"),
                    near(cwrp.final_avg, kCwrPlusFinal, "cwr+ final"), near(ar1s.final_avg, kAr1StarFinal, "ar1* final"),
                    near(gdm.final_avg, kGdmFinal, "gdm final"), near(gdmn.final_avg, kGdmNoReplayFinal, "gdm-noreplay final")});
  });

  criterion(5, "bounded memory on every benchmark run", 60.0, [&] {
    if (bench.size() < 5) return Outcome{false, "benchmark runs unavailable"};
    std::size_t runs = 0, bounded = 0, max_stored = 0;
    bool buffer_ok = true;
    for (const auto& [name, s] : bench) {
      for (const auto& r : s.records) {
        ++runs;
        bounded += audit_memory_bound(r.resources, 1).bounded;
        for (const auto& step : r.resources.steps) max_stored = std::max(max_stored, step.stored);
        if (name == "ar1*") {
          const auto rm = benchmark(name).strategy.rm_size;
          for (const auto& step : r.resources.steps) buffer_ok = buffer_ok && step.stored <= rm;
          for (const auto& d : r.diagnostics["per_batch"]) buffer_ok = buffer_ok && d["buffer_size"].get<std::size_t>() <= rm;
        }
      }
    }
    return Outcome{bounded == runs && buffer_ok, std::to_string(bounded) + "/" + std::to_string(runs) +
                                                     " traces bounded after warmup 1, largest store " +
                                                     std::to_string(max_stored) + ", ar1* buffer within RM size " +
                                                     (buffer_ok ? "yes" : "no")};
  });

  criterion(6, "Gamma-GWR on a stationary four-cluster stream", 30.0, [] {
    bool ok = true;
    std::string detail;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto run = oracle::stationary_gwr_run(seed, 5);
      const bool fell = run.quantization_error.back() < run.quantization_error.front();
      const bool h_ok = run.h_min >= 0.0 && run.h_max <= 1.0;
      const bool stopped = run.insertions.back() == 0;
      ok = ok && fell && h_ok && stopped;
      if (seed == 0) {
        detail = "seed 0: QE " + fmt("%.4f", run.quantization_error.front()) + " -> " +
                 fmt("%.4f", run.quantization_error.back()) + ", h in [" + fmt("%.3f", run.h_min) + ", " +
                 fmt("%.3f", run.h_max) + "], final-epoch insertions " + std::to_string(run.insertions.back()) +
                 ", " + std::to_string(run.neurons) + " neurons";
      }
    }
    return Outcome{ok, detail + "; seeds 0-4 " + (ok ? "all hold" : "violated")};
  });

  criterion(7, "RNAT chain trace and lengths", 1.0, [] {
    GdmConfig c;
    c.episodic = GammaGwrConfig::with_depth(1);
    c.semantic = GammaGwrConfig::with_depth(1);
    DualMemory chain(c, 1);
    for (int i = 0; i < 3; ++i) chain.episodic().add_neuron({static_cast<double>(i)});
    chain.observe_transition(0, 1);
    chain.observe_transition(1, 2);
    const auto r = chain.generate_rnat(0);
    const bool trace = r.ids == std::vector<NeuronId>{0, 1, 2, 1};
    bool lengths = true;
    for (std::size_t em = 1; em <= 3; ++em) {
      for (std::size_t sm = 1; sm <= 3; ++sm) {
        GdmConfig g;
        g.episodic = GammaGwrConfig::with_depth(em);
        g.semantic = GammaGwrConfig::with_depth(sm);
        DualMemory d(g, 1);
        d.episodic().add_neuron({0.0});
        d.episodic().add_neuron({1.0});
        const auto t = d.generate_rnat(0);
        lengths = lengths && d.lambda() == em + sm + 1 && t.ids.size() == d.lambda() + 1;
      }
    }
    GdmConfig fig;
    const bool five = DualMemory(fig, 1).lambda() == 5;
    std::string ids;
    for (auto id : r.ids) ids += (ids.empty() ? "" : ",") + std::to_string(id);
    return Outcome{trace && lengths && five, "chain trace [" + ids + "], lambda = K_EM + K_SM + 1 for 9 depth pairs " +
                                                 (lengths ? "yes" : "no") + ", K_EM = K_SM = 2 gives 5"};
  });

  criterion(8, "identical CLI runs give identical metric CSVs", 60.0, [] {
    const fs::path root = fs::temp_directory_path() / ("ocl_acceptance_" + std::to_string(::getpid()));
    fs::remove_all(root);
    const std::string cfg = "'" + (kConfigs / "benchmark_nc.toml").string() + "'";
    bool ok = true;
    std::size_t compared = 0;
    for (const char* strategy : {"ar1*", "gdm"}) {
      for (const char* tag : {"a", "b"}) {
        ok = ok && run_cli("run " + cfg + " --set strategy.name=" + strategy + " --out '" + (root / tag).string() + "'") == 0;
      }
      for (int seed = 0; seed < 5; ++seed) {
        const auto rel = fs::path(strategy_dirname(strategy)) / ("seed_" + std::to_string(seed));
        for (const char* file : {"metrics.csv", "record.json"}) {
          const auto a = slurp(root / "a" / rel / file), b = slurp(root / "b" / rel / file);
          ok = ok && !a.empty() && a == b;
          ++compared;
        }
      }
    }
    fs::remove_all(root);
    return Outcome{ok, std::to_string(compared) + " file pairs compared byte for byte"};
  });

  std::printf("acceptance %s\n", all_pass ? "PASS" : "FAIL");
  return all_pass ? 0 : 1;
}
