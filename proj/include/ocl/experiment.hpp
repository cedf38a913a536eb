#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "ocl/config.hpp"
#include "ocl/metrics.hpp"
#include "ocl/stream.hpp"

namespace ocl {

/// A continual learner as seen by the driver: one call per training batch,
/// no access to earlier batches except through its own bounded state.
class Learner {
 public:
  virtual ~Learner() = default;
  virtual void train(const TrainingBatch& batch) = 0;
  virtual int predict(const Example& e) const = 0;
  /// Raw or latent examples currently held in external memory.
  virtual std::size_t stored_examples() const { return 0; }
  /// Strategy-specific observations after training batch `after_batch`.
  virtual nlohmann::json diagnostics(const Scenario&, std::size_t /*after_batch*/) const {
    return nlohmann::json::object();
  }
};

/// `dataset` must outlive the learner.
std::unique_ptr<Learner> make_learner(const StrategyConfig& config, const Dataset& dataset, std::uint64_t seed);

Dataset build_dataset(const ScenarioConfig& config, std::uint64_t run_seed);
Scenario build_experiment_scenario(const ScenarioConfig& config, const Dataset& dataset, std::uint64_t run_seed);

/// Directory-safe strategy name ("ar1*" -> "ar1star").
std::string strategy_dirname(const std::string& strategy);

/// One seed's pipeline: scenario, sequential pass over the batches,
/// evaluation after each. NumericError is rethrown naming the batch.
RunRecord run_seed(const ExperimentConfig& config, std::uint64_t seed);

/// Runs every seed (in parallel up to config.threads) and returns the
/// records in seed order.
std::vector<RunRecord> run_experiment(const ExperimentConfig& config);

/// <root>/<strategy>/seed_<n>/{metrics.csv, timing.csv, record.json, manifest.json}
/// plus episodes.csv for the dual-memory strategies.
std::filesystem::path write_run_outputs(const std::filesystem::path& root, const RunRecord& record);

/// Writes manifest.json, batch_<i>.csv and test.csv for each seed under
/// <root>/scenario/seed_<n>. Returns the directories written.
std::vector<std::filesystem::path> generate_scenarios(const ExperimentConfig& config,
                                                      const std::filesystem::path& root);

/// Output root: OCL_OUTPUT_ROOT when set, otherwise config.output_dir.
std::filesystem::path output_root(const ExperimentConfig& config);

struct ReportOutputs {
  nlohmann::json summary;
  std::string series_csv;
  std::string comparison_csv;
};

/// Aggregates every record.json found under `inputs`. Throws ConfigError
/// with a field-by-field diff when the records come from different scenarios.
ReportOutputs build_report(const std::vector<std::filesystem::path>& inputs);
void write_report(const ReportOutputs& report, const std::filesystem::path& out_dir);

/// Scenario identity compared by the report: the manifest without the seed
/// or the per-seed class assignment of NIC revisits.
nlohmann::json scenario_signature(const nlohmann::json& manifest);

}  // namespace ocl
