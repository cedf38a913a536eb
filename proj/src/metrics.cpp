#include "ocl/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "ocl/errors.hpp"

namespace ocl {

AccuracyMatrix::AccuracyMatrix(std::size_t n_batches) : n_(n_batches), r_(n_batches * n_batches, kUndefined) {}

void AccuracyMatrix::set(std::size_t i, std::size_t j, double value) {
  if (i >= n_ || j >= n_) throw ArgumentError("AccuracyMatrix::set: index out of range");
  if (j > i) throw ArgumentError("AccuracyMatrix::set: entries above the diagonal are undefined");
  if (!(value >= 0.0 && value <= 1.0)) throw ArgumentError("AccuracyMatrix::set: accuracy outside [0,1]");
  r_[i * n_ + j] = value;
}

bool AccuracyMatrix::defined(std::size_t i, std::size_t j) const { return !std::isnan(at(i, j)); }

bool AccuracyMatrix::operator==(const AccuracyMatrix& other) const {
  if (n_ != other.n_) return false;
  for (std::size_t k = 0; k < r_.size(); ++k) {
    const bool a = std::isnan(r_[k]);
    const bool b = std::isnan(other.r_[k]);
    if (a != b || (!a && r_[k] != other.r_[k])) return false;
  }
  return true;
}

double average_accuracy(const AccuracyMatrix& r, std::size_t i) {
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t j = 0; j <= i; ++j) {
    if (!r.defined(i, j)) continue;
    sum += r.at(i, j);
    ++count;
  }
  return count ? sum / static_cast<double>(count) : kUndefined;
}

std::vector<double> average_accuracy_series(const AccuracyMatrix& r) {
  std::vector<double> out;
  for (std::size_t i = 0; i < r.size(); ++i) out.push_back(average_accuracy(r, i));
  return out;
}

std::vector<double> first_task_retention(const AccuracyMatrix& r) {
  std::vector<double> out;
  for (std::size_t i = 0; i < r.size(); ++i) out.push_back(r.at(i, 0));
  return out;
}

void evaluate_into(AccuracyMatrix& r, std::size_t after_batch, const Scenario& scenario,
                   const std::function<int(const Example&)>& predict) {
  const auto first = scenario.first_batch_of_class();
  std::vector<std::size_t> correct(r.size(), 0), total(r.size(), 0);
  for (const auto& e : scenario.test_set) {
    if (e.y < 0 || static_cast<std::size_t>(e.y) >= first.size()) continue;
    const int b = first[static_cast<std::size_t>(e.y)];
    if (b < 0 || static_cast<std::size_t>(b) > after_batch) continue;
    ++total[static_cast<std::size_t>(b)];
    if (predict(e) == e.y) ++correct[static_cast<std::size_t>(b)];
  }
  for (std::size_t j = 0; j <= after_batch; ++j) {
    if (total[j] > 0) r.set(after_batch, j, static_cast<double>(correct[j]) / static_cast<double>(total[j]));
  }
}

SeriesStats aggregate_series(const std::vector<std::vector<double>>& runs) {
  if (runs.empty()) throw ArgumentError("aggregate: no runs");
  const std::size_t n = runs.front().size();
  for (const auto& r : runs) {
    if (r.size() != n) throw ArgumentError("aggregate: runs have different lengths");
  }
  SeriesStats s;
  s.mean.assign(n, 0.0);
  s.stddev.assign(n, 0.0);
  const double count = static_cast<double>(runs.size());
  for (std::size_t k = 0; k < n; ++k) {
    double sum = 0.0;
    for (const auto& r : runs) sum += r[k];
    const double mean = sum / count;
    double var = 0.0;
    for (const auto& r : runs) var += (r[k] - mean) * (r[k] - mean);
    s.mean[k] = mean;
    s.stddev[k] = std::sqrt(var / count);
  }
  return s;
}

RunAggregate aggregate_runs(const std::vector<RunRecord>& records) {
  if (records.empty()) throw ArgumentError("aggregate_runs: no records");
  RunAggregate a;
  a.strategy = records.front().strategy;
  a.runs = records.size();
  const std::size_t n = records.front().accuracy.size();
  std::vector<std::vector<double>> avg, first, flat;
  for (const auto& rec : records) {
    if (rec.accuracy.size() != n) throw ArgumentError("aggregate_runs: records have different batch counts");
    avg.push_back(average_accuracy_series(rec.accuracy));
    first.push_back(first_task_retention(rec.accuracy));
    std::vector<double> m;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) m.push_back(rec.accuracy.at(i, j));
    flat.push_back(std::move(m));
  }
  a.average_accuracy = aggregate_series(avg);
  a.first_task = aggregate_series(first);
  a.matrix = aggregate_series(flat);
  return a;
}

std::string format_real(double v, int precision) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  return buf;
}

std::string metrics_csv(const RunRecord& record) {
  std::ostringstream out;
  out << "strategy,seed,batch_i,test_batch_j,accuracy\n";
  const auto& r = record.accuracy;
  for (std::size_t i = 0; i < r.size(); ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      if (!r.defined(i, j)) continue;
      out << record.strategy << ',' << record.seed << ',' << i + 1 << ',' << j + 1 << ',' << format_real(r.at(i, j))
          << '\n';
    }
  }
  return out.str();
}

std::string timing_csv(const RunRecord& record) {
  std::ostringstream out;
  out << "strategy,seed,batch_i,seconds\n";
  for (std::size_t i = 0; i < record.batch_seconds.size(); ++i) {
    out << record.strategy << ',' << record.seed << ',' << i + 1 << ',' << format_real(record.batch_seconds[i])
        << '\n';
  }
  return out.str();
}

namespace {

nlohmann::json nullable(const std::vector<double>& v) {
  nlohmann::json a = nlohmann::json::array();
  for (double x : v) a.push_back(std::isnan(x) ? nlohmann::json(nullptr) : nlohmann::json(x));
  return a;
}

}  // namespace

nlohmann::json to_json(const RunRecord& record) {
  const auto& r = record.accuracy;
  nlohmann::json matrix = nlohmann::json::array();
  for (std::size_t i = 0; i < r.size(); ++i) {
    std::vector<double> row;
    for (std::size_t j = 0; j < r.size(); ++j) row.push_back(r.at(i, j));
    matrix.push_back(nullable(row));
  }
  nlohmann::json trace = nlohmann::json::array();
  for (const auto& s : record.resources.steps)
    trace.push_back({{"step", s.step}, {"stored", s.stored}, {"cumulative_seen", s.cumulative_seen}});
  return {{"strategy", record.strategy},
          {"seed", record.seed},
          {"manifest", record.manifest},
          {"accuracy", matrix},
          {"average_accuracy", nullable(average_accuracy_series(r))},
          {"first_task_retention", nullable(first_task_retention(r))},
          {"resource_trace", trace},
          {"diagnostics", record.diagnostics}};
}

RunRecord run_record_from_json(const nlohmann::json& j) {
  try {
    RunRecord rec;
    rec.strategy = j.at("strategy").get<std::string>();
    rec.seed = j.at("seed").get<std::uint64_t>();
    rec.manifest = j.at("manifest");
    const auto& m = j.at("accuracy");
    rec.accuracy = AccuracyMatrix(m.size());
    for (std::size_t i = 0; i < m.size(); ++i) {
      if (m[i].size() != m.size()) throw ParseError("run record: accuracy matrix is not square");
      for (std::size_t jj = 0; jj <= i; ++jj) {
        if (!m[i][jj].is_null()) rec.accuracy.set(i, jj, m[i][jj].get<double>());
      }
    }
    for (const auto& s : j.at("resource_trace")) {
      rec.resources.record(s.at("step").get<std::size_t>(), s.at("stored").get<std::size_t>(),
                           s.at("cumulative_seen").get<std::size_t>());
    }
    if (j.contains("diagnostics")) rec.diagnostics = j.at("diagnostics");
    return rec;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("run record: ") + e.what());
  }
}

nlohmann::json to_json(const RunAggregate& a) {
  return {{"strategy", a.strategy},
          {"runs", a.runs},
          {"average_accuracy", {{"mean", nullable(a.average_accuracy.mean)}, {"std", nullable(a.average_accuracy.stddev)}}},
          {"first_task_retention", {{"mean", nullable(a.first_task.mean)}, {"std", nullable(a.first_task.stddev)}}}};
}

}  // namespace ocl
