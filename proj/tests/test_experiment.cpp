#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ocl/config.hpp"
#include "ocl/errors.hpp"
#include "ocl/experiment.hpp"
#include "ocl/metrics.hpp"

using namespace ocl;
namespace fs = std::filesystem;

namespace {

const fs::path kConfigs = OCL_CONFIG_DIR;

struct Shell {
  int code = -1;
  std::string output;
};

Shell sh(const std::string& args) {
  const std::string cmd = std::string("'") + OCL_CLI_PATH + "' " + args + " 2>&1";
  Shell r;
  FILE* p = popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof buf, p)) r.output.append(buf, n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag)
      : path(fs::temp_directory_path() / ("ocl_" + tag + "_" + std::to_string(::getpid()))) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

ExperimentConfig load(const std::string& file, const std::vector<std::string>& sets = {}) {
  auto j = default_config();
  apply_json_override(j, load_config_file(kConfigs / file));
  for (const auto& s : sets) apply_assignment(j, s);
  return experiment_config_from_json(j);
}

}  // namespace

TEST_CASE("strategy directory names") {
  CHECK(strategy_dirname("ar1*") == "ar1star");
  CHECK(strategy_dirname("cwr+") == "cwrplus");
  CHECK(strategy_dirname("ar1*free") == "ar1starfree");
  CHECK(strategy_dirname("gdm-noreplay") == "gdm-noreplay");
}

TEST_CASE("every strategy runs the smoke stream within its memory bound") {
  for (const auto& name : strategy_names()) {
    CAPTURE(name);
    const auto cfg = load("smoke.toml", {"strategy.name=\"" + name + "\""});
    const auto recs = run_experiment(cfg);
    REQUIRE(recs.size() == 2);
    for (const auto& rec : recs) {
      CHECK(rec.strategy == name);
      CHECK(rec.accuracy.size() == 3);
      for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j <= i; ++j) CHECK(rec.accuracy.defined(i, j));
      CHECK(audit_memory_bound(rec.resources, 1).bounded);
      for (const auto& s : rec.resources.steps) CHECK(s.stored <= cfg.strategy.rm_size);
      CHECK(rec.diagnostics["per_batch"].size() == 3);
    }
  }
}

TEST_CASE("run_seed is deterministic and seeds are independent of threading") {
  auto cfg = load("smoke.toml");
  const auto a = run_seed(cfg, 1);
  const auto b = run_seed(cfg, 1);
  CHECK(metrics_csv(a) == metrics_csv(b));
  CHECK(to_json(a) == to_json(b));
  cfg.threads = 1;
  const auto serial = run_experiment(cfg);
  cfg.threads = 4;
  const auto parallel = run_experiment(cfg);
  REQUIRE(serial.size() == parallel.size());
  for (std::size_t i = 0; i < serial.size(); ++i) CHECK(to_json(serial[i]) == to_json(parallel[i]));
  CHECK(to_json(serial[1]) == to_json(a));
}

TEST_CASE("gdm and gdm-noreplay agree through batch 1 and then diverge") {
  const auto with = run_seed(load("benchmark_nc.toml", {"strategy.name=\"gdm\""}), 0);
  const auto without = run_seed(load("benchmark_nc.toml", {"strategy.name=\"gdm-noreplay\""}), 0);
  CHECK(with.accuracy.at(0, 0) == without.accuracy.at(0, 0));
  CHECK(with.diagnostics["per_batch"][0] == without.diagnostics["per_batch"][0]);
  CHECK(with.diagnostics["per_batch"][1]["replayed_trajectories"].get<std::size_t>() > 0);
  CHECK(without.diagnostics["per_batch"][1]["replayed_trajectories"] == 0);
  CHECK_FALSE(with.accuracy == without.accuracy);
}

TEST_CASE("gdm category accuracy is at least its instance accuracy on the NC stream") {
  // One instance per class, so both label namespaces coincide.
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto rec = run_seed(load("benchmark_nc.toml", {"strategy.name=\"gdm\""}), seed);
    const auto& per = rec.diagnostics["per_batch"];
    const std::size_t last = rec.accuracy.size() - 1;
    CHECK(average_accuracy(rec.accuracy, last) + 1e-12 >= per[last]["instance_accuracy"].get<double>() - 0.02);
  }
}

TEST_CASE("naive first-task retention declines on the NC stream") {
  const auto recs = run_experiment(load("benchmark_nc.toml", {"strategy.name=\"naive\""}));
  std::vector<std::vector<double>> series;
  for (const auto& r : recs) series.push_back(first_task_retention(r.accuracy));
  const auto mean = aggregate_series(series).mean;
  for (std::size_t i = 1; i < mean.size(); ++i) CHECK(mean[i] < mean[i - 1]);
}

TEST_CASE("numeric failures name the seed and batch") {
  const auto cfg = load("smoke.toml", {"strategy.name=\"naive\"", "strategy.lr=1e308"});
  try {
    run_seed(cfg, 0);
    FAIL("expected a numeric error");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("seed 0, batch 1") != std::string::npos);
  }
}

TEST_CASE("cli run on the smoke config") {
  TempDir tmp("run");
  const auto r = sh("run '" + (kConfigs / "smoke.toml").string() + "' --out '" + tmp.path.string() + "'");
  CHECK_MESSAGE(r.code == 0, r.output);
  for (int seed : {0, 1}) {
    const auto dir = tmp.path / "ar1star" / ("seed_" + std::to_string(seed));
    const auto csv = slurp(dir / "metrics.csv");
    // header + 3 + 2 + 1 defined entries
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 7);
    CHECK(fs::exists(dir / "timing.csv"));
    CHECK(fs::exists(dir / "record.json"));
    CHECK(fs::exists(dir / "manifest.json"));
  }
  CHECK(fs::exists(tmp.path / "ar1star" / "config.toml"));
  CHECK(parse_toml(slurp(tmp.path / "ar1star" / "config.toml"))["strategy"]["rm_size"] == 30);
}

TEST_CASE("cli generate is byte-identical across invocations") {
  TempDir a("gen_a"), b("gen_b");
  const std::string cfg = "'" + (kConfigs / "smoke.toml").string() + "'";
  CHECK(sh("generate " + cfg + " --out '" + a.path.string() + "'").code == 0);
  CHECK(sh("generate " + cfg + " --out '" + b.path.string() + "'").code == 0);
  std::size_t files = 0;
  for (const auto& entry : fs::recursive_directory_iterator(a.path)) {
    if (!entry.is_regular_file()) continue;
    ++files;
    const auto rel = fs::relative(entry.path(), a.path);
    CHECK(slurp(entry.path()) == slurp(b.path / rel));
  }
  // Two seeds: manifest, three batches, test set.
  CHECK(files == 10);
  const auto manifest = nlohmann::json::parse(slurp(a.path / "scenario" / "seed_0" / "manifest.json"));
  CHECK(manifest["batches"].size() == 3);
}

TEST_CASE("cli exit codes") {
  auto r = sh("generate --set scenario.n_batches=11");
  CHECK(r.code == 2);
  CHECK(r.output.find("scenario.n_batches") != std::string::npos);
  CHECK(sh("run --set strategy.bogus=1").code == 2);
  CHECK(sh("run --override '{not json'").code == 2);
  CHECK(sh("frobnicate").code == 2);
  TempDir tmp("numeric");
  r = sh("run '" + (kConfigs / "smoke.toml").string() + "' --set strategy.name=naive --set strategy.lr=1e308 --out '" +
         tmp.path.string() + "'");
  CHECK(r.code == 3);
  CHECK(r.output.find("batch 1") != std::string::npos);
  r = sh("--print-defaults");
  CHECK(r.code == 0);
  CHECK(parse_toml(r.output) == default_config());
  r = sh("selftest --quick");
  CHECK_MESSAGE(r.code == 0, r.output);
}

TEST_CASE("output root from the environment") {
  TempDir tmp("env");
  const std::string cmd = "OCL_OUTPUT_ROOT='" + tmp.path.string() + "' '" + OCL_CLI_PATH + "' run '" +
                          (kConfigs / "smoke.toml").string() + "' --set strategy.name=cwr > /dev/null 2>&1";
  CHECK(std::system(cmd.c_str()) == 0);
  CHECK(fs::exists(tmp.path / "cwr" / "seed_0" / "metrics.csv"));
}

TEST_CASE("report") {
  TempDir tmp("report");
  const std::string cfg = "'" + (kConfigs / "smoke.toml").string() + "'";
  const std::string runs = (tmp.path / "runs").string();
  REQUIRE(sh("run " + cfg + " --set strategy.name=cwr+ --set 'scenario.seeds=[3]' --out '" + runs + "'").code == 0);

  auto one = build_report({tmp.path / "runs"});
  CHECK(one.summary["strategies"].size() == 1);
  for (const auto& v : one.summary["strategies"][0]["average_accuracy"]["stddev"]) CHECK(v == 0.0);

  REQUIRE(sh("run " + cfg + " --set strategy.name=naive --set 'scenario.seeds=[3]' --out '" + runs + "'").code == 0);
  const auto two = build_report({tmp.path / "runs"});
  CHECK(two.summary["strategies"].size() == 2);
  std::istringstream lines(two.series_csv);
  std::string line;
  std::getline(lines, line);
  CHECK(line == "strategy,batch,runs,avg_acc_mean,avg_acc_std,first_task_mean,first_task_std");
  std::set<std::string> strategies;
  std::size_t rows = 0;
  while (std::getline(lines, line)) {
    strategies.insert(line.substr(0, line.find(',')));
    ++rows;
  }
  CHECK(strategies == std::set<std::string>{"cwr+", "naive"});
  CHECK(rows == 6);

  const auto out = tmp.path / "report";
  REQUIRE(sh("report '" + runs + "' --out '" + out.string() + "'").code == 0);
  const auto first = slurp(out / "series.csv");
  const auto summary = slurp(out / "summary.json");
  // Reporting again, with the report directory itself among the inputs,
  // yields the same bytes.
  REQUIRE(sh("report '" + runs + "' '" + out.string() + "' --out '" + out.string() + "'").code == 0);
  CHECK(slurp(out / "series.csv") == first);
  CHECK(slurp(out / "summary.json") == summary);
  CHECK(fs::exists(out / "comparison.csv"));

  const std::string other = (tmp.path / "other").string();
  REQUIRE(sh("run " + cfg + " --set scenario.n_batches=2 --set 'scenario.seeds=[0]' --out '" + other + "'").code == 0);
  const auto mixed = sh("report '" + runs + "' '" + other + "' --out '" + (tmp.path / "bad").string() + "'");
  CHECK(mixed.code == 2);
  CHECK(mixed.output.find("batches: length") != std::string::npos);
  CHECK_THROWS_AS(build_report({tmp.path / "empty"}), ConfigError);
}
