#include <algorithm>
#include <cmath>
#include <optional>
#include <set>
#include <fstream>
#include <map>
#include <sstream>

#include "ocl/errors.hpp"
#include "ocl/experiment.hpp"

namespace ocl {

namespace {

using nlohmann::json;

std::vector<std::filesystem::path> find_records(const std::vector<std::filesystem::path>& inputs) {
  std::vector<std::filesystem::path> found;
  for (const auto& in : inputs) {
    if (std::filesystem::is_regular_file(in)) {
      found.push_back(in);
      continue;
    }
    if (!std::filesystem::is_directory(in)) throw ConfigError("report: no such run directory " + in.string());
    for (const auto& entry : std::filesystem::recursive_directory_iterator(in)) {
      if (entry.is_regular_file() && entry.path().filename() == "record.json") found.push_back(entry.path());
    }
  }
  std::sort(found.begin(), found.end());
  found.erase(std::unique(found.begin(), found.end()), found.end());
  if (found.empty()) throw ConfigError("report: no record.json found under the given inputs");
  return found;
}

void diff_json(const json& a, const json& b, const std::string& path, std::vector<std::string>& out) {
  if (a.type() != b.type() || (!a.is_object() && !a.is_array())) {
    if (a != b) out.push_back((path.empty() ? "<root>" : path) + ": " + a.dump() + " vs " + b.dump());
    return;
  }
  if (a.is_object()) {
    std::set<std::string> keys;
    for (const auto& [k, v] : a.items()) keys.insert(k);
    for (const auto& [k, v] : b.items()) keys.insert(k);
    for (const auto& k : keys) {
      const std::string here = path.empty() ? k : path + "." + k;
      if (!a.contains(k) || !b.contains(k)) {
        out.push_back(here + ": present in only one manifest");
        continue;
      }
      diff_json(a.at(k), b.at(k), here, out);
    }
    return;
  }
  if (a.size() != b.size()) {
    out.push_back(path + ": length " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
    return;
  }
  for (std::size_t i = 0; i < a.size(); ++i) diff_json(a[i], b[i], path + "[" + std::to_string(i) + "]", out);
}

nlohmann::json nullable(double v) { return std::isnan(v) ? json(nullptr) : json(v); }

}  // namespace

json scenario_signature(const json& manifest) {
  json sig = manifest;
  sig.erase("seed");
  const bool nic = manifest.value("content", "") == "NIC";
  for (auto& b : sig["batches"]) {
    if (nic) {
      b.erase("class_set");
      b.erase("n_examples");
    }
  }
  return sig;
}

ReportOutputs build_report(const std::vector<std::filesystem::path>& inputs) {
  const auto paths = find_records(inputs);
  std::map<std::string, std::vector<RunRecord>> by_strategy;
  std::optional<json> reference;
  std::string reference_path;
  for (const auto& p : paths) {
    std::ifstream in(p);
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ParseError("report: " + p.string() + " is not valid JSON");
    RunRecord rec = run_record_from_json(j);
    const json sig = scenario_signature(rec.manifest);
    if (!reference) {
      reference = sig;
      reference_path = p.string();
    } else if (sig != *reference) {
      std::vector<std::string> diffs;
      diff_json(*reference, sig, "", diffs);
      std::string msg = "report: refusing to aggregate runs of different scenarios (" + reference_path + " vs " +
                        p.string() + "):";
      const std::size_t shown = std::min<std::size_t>(diffs.size(), 10);
      for (std::size_t i = 0; i < shown; ++i) msg += "\n  " + diffs[i];
      if (diffs.size() > shown) msg += "\n  ... " + std::to_string(diffs.size() - shown) + " more";
      throw ConfigError(msg);
    }
    by_strategy[rec.strategy].push_back(std::move(rec));
  }

  ReportOutputs out;
  json strategies = json::array();
  std::ostringstream series;
  series << "strategy,batch,runs,avg_acc_mean,avg_acc_std,first_task_mean,first_task_std\n";
  std::ostringstream comparison;
  comparison << "strategy,runs,final_avg_acc_mean,final_avg_acc_std,final_first_task_mean,final_first_task_std\n";
  json table = json::array();
  for (auto& [name, records] : by_strategy) {
    std::sort(records.begin(), records.end(), [](const RunRecord& a, const RunRecord& b) { return a.seed < b.seed; });
    for (std::size_t k = 1; k < records.size(); ++k) {
      if (records[k].seed == records[k - 1].seed) {
        throw ConfigError("report: strategy " + name + " has two runs with seed " + std::to_string(records[k].seed));
      }
    }
    const auto agg = aggregate_runs(records);
    json entry = to_json(agg);
    json seeds = json::array();
    for (const auto& r : records) seeds.push_back(r.seed);
    entry["seeds"] = seeds;
    strategies.push_back(entry);
    const std::size_t n = agg.average_accuracy.mean.size();
    for (std::size_t i = 0; i < n; ++i) {
      series << name << ',' << i + 1 << ',' << agg.runs << ',' << format_real(agg.average_accuracy.mean[i]) << ','
             << format_real(agg.average_accuracy.stddev[i]) << ',' << format_real(agg.first_task.mean[i]) << ','
             << format_real(agg.first_task.stddev[i]) << '\n';
    }
    if (n > 0) {
      comparison << name << ',' << agg.runs << ',' << format_real(agg.average_accuracy.mean[n - 1]) << ','
                 << format_real(agg.average_accuracy.stddev[n - 1]) << ',' << format_real(agg.first_task.mean[n - 1])
                 << ',' << format_real(agg.first_task.stddev[n - 1]) << '\n';
      table.push_back({{"strategy", name},
                       {"final_average_accuracy", nullable(agg.average_accuracy.mean[n - 1])},
                       {"final_average_accuracy_std", nullable(agg.average_accuracy.stddev[n - 1])},
                       {"final_first_task", nullable(agg.first_task.mean[n - 1])},
                       {"final_first_task_std", nullable(agg.first_task.stddev[n - 1])}});
    }
  }
  out.summary = {{"scenario", *reference}, {"strategies", strategies}, {"comparison", table}};
  out.series_csv = series.str();
  out.comparison_csv = comparison.str();
  return out;
}

void write_report(const ReportOutputs& report, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  auto write = [&](const std::string& name, const std::string& text) {
    std::ofstream f(out_dir / name, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + (out_dir / name).string());
    f << text;
  };
  write("summary.json", report.summary.dump(2) + "\n");
  write("series.csv", report.series_csv);
  write("comparison.csv", report.comparison_csv);
}

}  // namespace ocl
