#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "ocl/stream.hpp"

namespace ocl {

/// R(i, j): accuracy on the test examples of the classes first trained in
/// batch j, measured after training through batch i. Entries with j > i or an
/// empty test group are undefined (NaN).
class AccuracyMatrix {
 public:
  AccuracyMatrix() = default;
  explicit AccuracyMatrix(std::size_t n_batches);

  std::size_t size() const { return n_; }
  double at(std::size_t i, std::size_t j) const { return r_.at(i * n_ + j); }
  void set(std::size_t i, std::size_t j, double value);
  bool defined(std::size_t i, std::size_t j) const;

  bool operator==(const AccuracyMatrix& other) const;

 private:
  std::size_t n_ = 0;
  std::vector<double> r_;
};

inline constexpr double kUndefined = std::numeric_limits<double>::quiet_NaN();

/// Mean of the defined entries R(i, 0..i); NaN when none is defined.
double average_accuracy(const AccuracyMatrix& r, std::size_t i);
std::vector<double> average_accuracy_series(const AccuracyMatrix& r);
/// R(i, 0) for i = 0..N-1.
std::vector<double> first_task_retention(const AccuracyMatrix& r);

/// Fills row `after_batch` of `r` by evaluating `predict` on the scenario's
/// test set grouped by the batch that introduced each example's class.
void evaluate_into(AccuracyMatrix& r, std::size_t after_batch, const Scenario& scenario,
                   const std::function<int(const Example&)>& predict);

struct RunRecord {
  std::string strategy;
  std::uint64_t seed = 0;
  nlohmann::json manifest;
  AccuracyMatrix accuracy;
  ResourceTrace resources;
  std::vector<double> batch_seconds;
  /// Strategy-specific per-batch diagnostics (e.g. latent aging, network sizes).
  nlohmann::json diagnostics = nlohmann::json::object();
};

struct SeriesStats {
  std::vector<double> mean;
  std::vector<double> stddev;  // population
};

/// Elementwise mean and population standard deviation. Throws ArgumentError on
/// an empty input or mismatched lengths. NaN entries propagate.
SeriesStats aggregate_series(const std::vector<std::vector<double>>& runs);

struct RunAggregate {
  std::string strategy;
  std::size_t runs = 0;
  SeriesStats average_accuracy;
  SeriesStats first_task;
  SeriesStats matrix;  // flattened N x N
};

/// Aggregates records of one strategy. Throws ArgumentError on an empty input
/// or differing batch counts.
RunAggregate aggregate_runs(const std::vector<RunRecord>& records);

/// Rows "strategy,seed,batch_i,test_batch_j,accuracy" over defined entries,
/// batch indices 1-based. Deterministic for a given record.
std::string metrics_csv(const RunRecord& record);
/// Rows "strategy,seed,batch_i,seconds". Wall-times only live here.
std::string timing_csv(const RunRecord& record);

/// Everything but the wall-times.
nlohmann::json to_json(const RunRecord& record);
RunRecord run_record_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RunAggregate& aggregate);

/// Fixed-precision decimal used by every CSV writer.
std::string format_real(double v, int precision = 6);

}  // namespace ocl
