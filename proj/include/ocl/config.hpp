#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "ocl/gdm.hpp"
#include "ocl/gwr.hpp"
#include "ocl/stream.hpp"

namespace ocl {

/// Parses the TOML subset used by experiment configs: [dotted.tables],
/// key = value with strings, integers, floats, booleans and flat arrays,
/// and # comments. Throws ParseError carrying the 1-based line.
nlohmann::json parse_toml(std::string_view text);
/// Inverse of parse_toml for nested objects of scalars and flat arrays.
std::string to_toml(const nlohmann::json& j);

nlohmann::json load_config_file(const std::filesystem::path& path);

/// Every key the experiment driver understands, with its default.
nlohmann::json default_config();

/// Applies "dotted.key=value"; the value is read as JSON when it parses,
/// otherwise as a string. Throws ConfigError for unknown keys.
void apply_assignment(nlohmann::json& config, const std::string& assignment);
/// Merges a JSON object over the config. Throws ConfigError for unknown keys.
void apply_json_override(nlohmann::json& config, const nlohmann::json& patch);

inline const std::vector<std::string>& strategy_names() {
  static const std::vector<std::string> names{"naive", "cwr", "cwr+", "cwr*", "ar1",
                                              "ar1*",  "ar1*free", "gwr", "gdm", "gdm-noreplay"};
  return names;
}

struct DatasetConfig {
  std::string source = "synthetic";  // synthetic | csv
  SyntheticSpec synthetic;
  /// Dataset seed; when absent each run seed also seeds its dataset.
  std::optional<std::uint64_t> seed;
  std::string path;
  std::size_t label_column = 0;
};

struct ScenarioConfig {
  ScenarioKind kind = ScenarioKind::SIT;
  ContentKind content = ContentKind::NC;
  std::size_t n_batches = 5;
  double test_fraction = 0.2;
  std::vector<std::uint64_t> seeds{0};
  bool task_labels = true;
  DatasetConfig dataset;
};

struct StrategyConfig {
  std::string name = "ar1*";
  std::vector<std::size_t> hidden{64, 32};
  std::size_t epochs = 2;
  double lr = 0.05;
  std::size_t minibatch = 16;
  std::size_t replay_layer = 1;
  std::size_t rm_size = 100;
  double replay_fraction = 0.5;
  double lambda = 1.0;
  double xi = 0.1;
  double below_replay_lr = 0.01;
  GammaGwrConfig gwr = GammaGwrConfig::with_depth(0);
  std::size_t gwr_epochs = 1;
  GdmConfig gdm;
  std::size_t gdm_epochs = 1;
  bool group_by_instance = true;
};

struct ExperimentConfig {
  ScenarioConfig scenario;
  StrategyConfig strategy;
  std::string output_dir = "runs";
  std::size_t threads = 0;  // 0: one per seed up to the hardware count
};

/// Validates and converts. ConfigError messages start with the field path.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);

}  // namespace ocl
