#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

namespace ocl {

struct Example {
  std::vector<double> x;
  int y = 0;
  std::optional<int> t;
  /// Instance identity inside class `y`. Globally unique; equals `y` when a
  /// dataset has a single instance per class.
  int instance = 0;
};

struct Dataset {
  std::vector<Example> examples;
  int n_classes = 0;
  std::size_t dim = 0;

  std::size_t size() const { return examples.size(); }
};

/// Parameters of the clustered synthetic generator. Each class has a center
/// drawn from N(0, center_scale^2 I); each instance an offset around it drawn
/// from N(0, instance_spread^2 I); each example Gaussian noise of std `spread`.
struct SyntheticSpec {
  std::uint64_t seed = 0;
  int n_classes = 10;
  std::size_t dim = 16;
  std::size_t per_class = 100;
  double spread = 1.0;
  int instances_per_class = 1;
  double instance_spread = 0.0;
  double center_scale = 1.0;
};

Dataset make_synthetic_dataset(const SyntheticSpec& spec);
Dataset make_synthetic_dataset(std::uint64_t seed, int n_classes, std::size_t dim,
                               std::size_t per_class, double spread);

/// One row per example, comma separated, optional header line.
/// Throws ParseError (with 1-based line) for malformed content.
Dataset load_csv_dataset(const std::filesystem::path& path, std::size_t label_column);

enum class ScenarioKind { SIT, MT, MIT };
enum class ContentKind { NI, NC, NIC };

std::string to_string(ScenarioKind kind);
std::string to_string(ContentKind kind);
ScenarioKind parse_scenario_kind(const std::string& s);
ContentKind parse_content_kind(const std::string& s);

struct TrainingBatch {
  std::size_t index = 0;  // 1-based position in the scenario
  std::vector<Example> examples;
  std::optional<int> task_label;
  std::vector<std::size_t> source_indices;  // dataset rows, same order as examples

  std::set<int> classes() const;
};

struct Scenario {
  ScenarioKind kind = ScenarioKind::SIT;
  ContentKind content = ContentKind::NC;
  std::vector<TrainingBatch> batches;
  std::vector<Example> test_set;
  std::vector<std::size_t> test_indices;
  std::uint64_t seed = 0;
  int n_classes = 0;
  std::size_t dim = 0;

  /// Batch position (0-based) in which each class is first trained on; -1
  /// for classes never trained on.
  std::vector<int> first_batch_of_class() const;
};

Scenario build_scenario(const Dataset& dataset, ScenarioKind kind, ContentKind content,
                        std::size_t n_batches, std::uint64_t seed, double test_fraction = 0.2);

/// Copy of `scenario` with every task label withheld (task-agnostic runs).
Scenario withhold_task_labels(Scenario scenario);

struct TaskVerdict {
  bool consistent = true;
  std::string violation;
};

/// Absent labels compare equal to each other and unequal to any integer.
TaskVerdict check_task_structure(const Scenario& scenario);
TaskVerdict check_task_structure(ScenarioKind kind, const std::vector<std::optional<int>>& labels);

struct ResourceTrace {
  struct Step {
    std::size_t step = 0;  // 1-based batch index
    std::size_t stored = 0;
    std::size_t cumulative_seen = 0;
  };
  std::vector<Step> steps;

  void record(std::size_t step, std::size_t stored, std::size_t cumulative_seen) {
    steps.push_back({step, stored, cumulative_seen});
  }
};

struct MemoryVerdict {
  bool bounded = true;
  std::optional<std::size_t> first_violation;
};

/// True iff every step after `warmup` stores strictly fewer examples than it
/// has seen in total.
MemoryVerdict audit_memory_bound(const ResourceTrace& trace, std::size_t warmup);

nlohmann::json manifest_json(const Scenario& scenario);

}  // namespace ocl
