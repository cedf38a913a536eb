#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ocl/config.hpp"
#include "ocl/errors.hpp"
#include "ocl/experiment.hpp"
#include "ocl/oracles.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kNumericError = 3;

struct ConfigArgs {
  std::string path;
  std::vector<std::string> sets;
  std::string override_json;
  std::string out;
};

void add_config_options(CLI::App* cmd, ConfigArgs& args) {
  cmd->add_option("config", args.path, "Experiment config (TOML subset); defaults when omitted");
  cmd->add_option("--set", args.sets, "Override one key, e.g. --set strategy.lr=0.01");
  cmd->add_option("--override", args.override_json, "JSON object merged over the config");
  cmd->add_option("--out", args.out, "Output root (takes precedence over the config)");
}

ocl::ExperimentConfig resolve(const ConfigArgs& args, nlohmann::json* resolved = nullptr) {
  nlohmann::json raw = args.path.empty() ? nlohmann::json::object() : ocl::load_config_file(args.path);
  nlohmann::json full = ocl::default_config();
  ocl::apply_json_override(full, raw);
  if (!args.override_json.empty()) {
    const auto patch = nlohmann::json::parse(args.override_json, nullptr, false);
    if (patch.is_discarded()) throw ocl::ConfigError("--override: not valid JSON");
    ocl::apply_json_override(full, patch);
  }
  for (const auto& s : args.sets) ocl::apply_assignment(full, s);
  if (!args.out.empty()) full["output_dir"] = args.out;
  if (resolved) *resolved = full;
  return ocl::experiment_config_from_json(full);
}

std::filesystem::path root_for(const ConfigArgs& args, const ocl::ExperimentConfig& cfg) {
  if (!args.out.empty()) return args.out;
  return ocl::output_root(cfg);
}

int cmd_generate(const ConfigArgs& args) {
  const auto cfg = resolve(args);
  const auto dirs = ocl::generate_scenarios(cfg, root_for(args, cfg));
  for (const auto& d : dirs) std::cout << "wrote " << d.string() << '\n';
  return kOk;
}

int cmd_run(const ConfigArgs& args) {
  nlohmann::json resolved;
  const auto cfg = resolve(args, &resolved);
  const auto root = root_for(args, cfg);
  const auto records = ocl::run_experiment(cfg);
  for (const auto& rec : records) {
    const auto dir = ocl::write_run_outputs(root, rec);
    const auto avg = ocl::average_accuracy_series(rec.accuracy);
    const auto first = ocl::first_task_retention(rec.accuracy);
    std::printf("%s seed %llu: final average accuracy %s, first-task %s -> %s (%s)\n", rec.strategy.c_str(),
                static_cast<unsigned long long>(rec.seed), ocl::format_real(avg.back(), 4).c_str(),
                ocl::format_real(first.front(), 4).c_str(), ocl::format_real(first.back(), 4).c_str(),
                dir.string().c_str());
  }
  std::filesystem::create_directories(root / ocl::strategy_dirname(cfg.strategy.name));
  std::ofstream(root / ocl::strategy_dirname(cfg.strategy.name) / "config.toml") << ocl::to_toml(resolved);
  return kOk;
}

int cmd_report(const std::vector<std::string>& inputs, const std::string& out) {
  std::vector<std::filesystem::path> paths(inputs.begin(), inputs.end());
  const auto report = ocl::build_report(paths);
  ocl::write_report(report, out);
  std::cout << report.comparison_csv;
  return kOk;
}

int cmd_selftest(bool quick) {
  const std::size_t scale = quick ? 10 : 1;
  const std::vector<ocl::oracle::SuiteResult> results{
      ocl::oracle::bmu_suite(1000 / scale, 11),
      ocl::oracle::backbone_gradient_suite(100 / scale, 12),
      ocl::oracle::si_gradient_suite(100 / scale, 13),
      ocl::oracle::si_quadratic_suite(100 / scale, 14),
  };
  bool ok = true;
  for (const auto& r : results) {
    std::printf("%-32s %s  cases %zu  failures %zu  worst %.3g  %.3fs\n", r.name.c_str(), r.passed() ? "PASS" : "FAIL",
                r.cases, r.failures, r.worst, r.seconds);
    ok = ok && r.passed();
  }
  return ok ? kOk : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Online continual learning benchmark harness"};
  bool print_defaults = false;
  app.add_flag("--print-defaults", print_defaults, "Print every config key with its default and exit");
  app.require_subcommand(0, 1);

  ConfigArgs gen_args, run_args;
  auto* gen = app.add_subcommand("generate", "Build scenarios and write manifests and batches");
  add_config_options(gen, gen_args);
  auto* run = app.add_subcommand("run", "Run a strategy over every seed and write metrics");
  add_config_options(run, run_args);

  std::vector<std::string> report_inputs;
  std::string report_out = "report";
  auto* report = app.add_subcommand("report", "Aggregate run records into mean/std series");
  report->add_option("runs", report_inputs, "Run directories or record.json files")->required();
  report->add_option("--out", report_out, "Report directory");

  bool quick = false;
  auto* selftest = app.add_subcommand("selftest", "Run the oracle suites");
  selftest->add_flag("--quick", quick, "Run a tenth of the cases");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigError;
  }

  try {
    if (print_defaults) {
      std::cout << ocl::to_toml(ocl::default_config());
      return kOk;
    }
    if (gen->parsed()) return cmd_generate(gen_args);
    if (run->parsed()) return cmd_run(run_args);
    if (report->parsed()) return cmd_report(report_inputs, report_out);
    if (selftest->parsed()) return cmd_selftest(quick);
    std::cout << app.help();
    return kOk;
  } catch (const ocl::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kNumericError;
  } catch (const ocl::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const ocl::ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return kConfigError;
  } catch (const ocl::ArgumentError& e) {
    std::cerr << "invalid argument: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
