#include "ocl/stream.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "ocl/errors.hpp"
#include "ocl/rng.hpp"

namespace ocl {

namespace {

constexpr std::uint64_t kSplitStream = 1;

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(trim(field));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::optional<double> parse_number(const std::string& s) {
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  const char* begin = s.data();
  if (*begin == '+') ++begin;
  const auto [ptr, ec] = std::from_chars(begin, s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

}  // namespace

Dataset make_synthetic_dataset(const SyntheticSpec& spec) {
  if (spec.n_classes < 2) throw ArgumentError("make_synthetic_dataset: n_classes must be >= 2");
  if (spec.dim < 1) throw ArgumentError("make_synthetic_dataset: dim must be >= 1");
  if (spec.per_class < 1) throw ArgumentError("make_synthetic_dataset: per_class must be >= 1");
  if (!(spec.spread >= 0.0) || !std::isfinite(spec.spread)) {
    throw ArgumentError("make_synthetic_dataset: spread must be finite and >= 0");
  }
  if (spec.instances_per_class < 1) {
    throw ArgumentError("make_synthetic_dataset: instances_per_class must be >= 1");
  }
  if (!(spec.instance_spread >= 0.0) || !(spec.center_scale > 0.0)) {
    throw ArgumentError("make_synthetic_dataset: instance_spread >= 0 and center_scale > 0 required");
  }

  Rng rng(spec.seed);
  std::vector<std::vector<double>> centers;
  centers.reserve(static_cast<std::size_t>(spec.n_classes));
  while (centers.size() < static_cast<std::size_t>(spec.n_classes)) {
    std::vector<double> c(spec.dim);
    for (auto& v : c) v = rng.normal(0.0, spec.center_scale);
    if (std::find(centers.begin(), centers.end(), c) == centers.end()) centers.push_back(std::move(c));
  }

  Dataset ds;
  ds.n_classes = spec.n_classes;
  ds.dim = spec.dim;
  ds.examples.reserve(static_cast<std::size_t>(spec.n_classes) * spec.per_class);
  for (int cls = 0; cls < spec.n_classes; ++cls) {
    std::vector<std::vector<double>> instance_centers;
    for (int k = 0; k < spec.instances_per_class; ++k) {
      std::vector<double> c = centers[static_cast<std::size_t>(cls)];
      if (spec.instance_spread > 0.0) {
        for (auto& v : c) v += rng.normal(0.0, spec.instance_spread);
      }
      instance_centers.push_back(std::move(c));
    }
    for (std::size_t i = 0; i < spec.per_class; ++i) {
      const int k = static_cast<int>(i % static_cast<std::size_t>(spec.instances_per_class));
      Example e;
      e.y = cls;
      e.instance = cls * spec.instances_per_class + k;
      e.x = instance_centers[static_cast<std::size_t>(k)];
      if (spec.spread > 0.0) {
        for (auto& v : e.x) v += rng.normal(0.0, spec.spread);
      }
      ds.examples.push_back(std::move(e));
    }
  }
  return ds;
}

Dataset make_synthetic_dataset(std::uint64_t seed, int n_classes, std::size_t dim,
                               std::size_t per_class, double spread) {
  SyntheticSpec spec;
  spec.seed = seed;
  spec.n_classes = n_classes;
  spec.dim = dim;
  spec.per_class = per_class;
  spec.spread = spread;
  return make_synthetic_dataset(spec);
}

Dataset load_csv_dataset(const std::filesystem::path& path, std::size_t label_column) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open dataset file: " + path.string());

  Dataset ds;
  std::optional<std::size_t> arity;
  std::string line;
  std::size_t line_no = 0;
  int max_label = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line);

    std::vector<double> values;
    values.reserve(fields.size());
    std::optional<std::size_t> bad_field;
    for (std::size_t i = 0; i < fields.size(); ++i) {
      const auto v = parse_number(fields[i]);
      if (!v) {
        bad_field = i;
        break;
      }
      values.push_back(*v);
    }

    if (!arity) {
      if (label_column >= fields.size()) {
        throw ArgumentError("label column " + std::to_string(label_column) + " out of range for " +
                            std::to_string(fields.size()) + " columns");
      }
      arity = fields.size();
      if (bad_field) continue;  // first line with text is the header
    }
    if (fields.size() != *arity) {
      throw ParseError("line " + std::to_string(line_no) + ": expected " + std::to_string(*arity) +
                           " columns, found " + std::to_string(fields.size()),
                       line_no);
    }
    if (bad_field) {
      throw ParseError("line " + std::to_string(line_no) + ": non-numeric value '" +
                           fields[*bad_field] + "' in column " + std::to_string(*bad_field),
                       line_no);
    }

    const double label = values[label_column];
    if (label < 0.0 || label != std::floor(label) || label > 1e9) {
      throw ParseError("line " + std::to_string(line_no) + ": label must be a non-negative integer",
                       line_no);
    }
    Example e;
    e.y = static_cast<int>(label);
    e.instance = e.y;
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (i == label_column) continue;
      if (!std::isfinite(values[i])) {
        throw ParseError("line " + std::to_string(line_no) + ": non-finite feature", line_no);
      }
      e.x.push_back(values[i]);
    }
    max_label = std::max(max_label, e.y);
    ds.examples.push_back(std::move(e));
  }

  if (ds.examples.empty()) throw ParseError("empty dataset: " + path.string());
  ds.dim = ds.examples.front().x.size();
  if (ds.dim == 0) throw ParseError("dataset has no feature columns");
  ds.n_classes = max_label + 1;
  return ds;
}

std::string to_string(ScenarioKind kind) {
  switch (kind) {
    case ScenarioKind::SIT: return "SIT";
    case ScenarioKind::MT: return "MT";
    case ScenarioKind::MIT: return "MIT";
  }
  return "?";
}

std::string to_string(ContentKind kind) {
  switch (kind) {
    case ContentKind::NI: return "NI";
    case ContentKind::NC: return "NC";
    case ContentKind::NIC: return "NIC";
  }
  return "?";
}

ScenarioKind parse_scenario_kind(const std::string& s) {
  if (s == "SIT") return ScenarioKind::SIT;
  if (s == "MT") return ScenarioKind::MT;
  if (s == "MIT") return ScenarioKind::MIT;
  throw ConfigError("unknown scenario kind '" + s + "' (expected SIT, MT or MIT)");
}

ContentKind parse_content_kind(const std::string& s) {
  if (s == "NI") return ContentKind::NI;
  if (s == "NC") return ContentKind::NC;
  if (s == "NIC") return ContentKind::NIC;
  throw ConfigError("unknown content kind '" + s + "' (expected NI, NC or NIC)");
}

std::set<int> TrainingBatch::classes() const {
  std::set<int> out;
  for (const auto& e : examples) out.insert(e.y);
  return out;
}

std::vector<int> Scenario::first_batch_of_class() const {
  std::vector<int> first(static_cast<std::size_t>(n_classes), -1);
  for (std::size_t b = 0; b < batches.size(); ++b) {
    for (const auto& e : batches[b].examples) {
      auto& f = first[static_cast<std::size_t>(e.y)];
      if (f < 0) f = static_cast<int>(b);
    }
  }
  return first;
}

namespace {

// Splits `items` into `parts` contiguous chunks whose sizes differ by at most one.
template <typename T>
std::vector<std::vector<T>> chunk(const std::vector<T>& items, std::size_t parts) {
  std::vector<std::vector<T>> out(parts);
  const std::size_t base = items.size() / parts;
  const std::size_t rem = items.size() % parts;
  std::size_t pos = 0;
  for (std::size_t p = 0; p < parts; ++p) {
    const std::size_t n = base + (p < rem ? 1 : 0);
    out[p].assign(items.begin() + static_cast<std::ptrdiff_t>(pos),
                  items.begin() + static_cast<std::ptrdiff_t>(pos + n));
    pos += n;
  }
  return out;
}

std::vector<std::optional<int>> task_labels_for(ScenarioKind kind, std::size_t n) {
  std::vector<std::optional<int>> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    switch (kind) {
      case ScenarioKind::SIT: labels[i] = 0; break;
      case ScenarioKind::MT: labels[i] = static_cast<int>(i); break;
      case ScenarioKind::MIT: labels[i] = static_cast<int>(i % (n - 1)); break;
    }
  }
  return labels;
}

}  // namespace

Scenario build_scenario(const Dataset& dataset, ScenarioKind kind, ContentKind content,
                        std::size_t n_batches, std::uint64_t seed, double test_fraction) {
  if (n_batches < 1) throw ConfigError("n_batches must be >= 1");
  if (!(test_fraction >= 0.0 && test_fraction < 1.0)) {
    throw ConfigError("test_fraction must lie in [0, 1)");
  }
  if (dataset.examples.empty()) throw ConfigError("dataset is empty");
  if (kind == ScenarioKind::MIT && n_batches < 3) {
    throw ConfigError("MIT requires n_batches >= 3 (a repeated and a distinct task label)");
  }

  Rng rng(derive_seed(seed, kSplitStream));

  // Stratified test split.
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < dataset.examples.size(); ++i) {
    by_class[dataset.examples[i].y].push_back(i);
  }
  std::vector<int> classes;
  std::map<int, std::vector<std::size_t>> train_of;
  std::vector<std::size_t> test_indices;
  for (auto& [cls, idx] : by_class) {
    classes.push_back(cls);
    rng.shuffle(idx);
    auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(idx.size())));
    n_test = std::min(n_test, idx.size() - 1);
    test_indices.insert(test_indices.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test));
    train_of[cls].assign(idx.begin() + static_cast<std::ptrdiff_t>(n_test), idx.end());
  }
  std::sort(test_indices.begin(), test_indices.end());

  const std::size_t n_cls = classes.size();
  std::vector<std::vector<std::size_t>> batch_rows(n_batches);

  switch (content) {
    case ContentKind::NI: {
      for (int cls : classes) {
        if (train_of[cls].size() < n_batches) {
          throw ConfigError("NI requires at least n_batches training examples per class (class " +
                            std::to_string(cls) + " has " + std::to_string(train_of[cls].size()) + ")");
        }
        const auto parts = chunk(train_of[cls], n_batches);
        for (std::size_t b = 0; b < n_batches; ++b) {
          batch_rows[b].insert(batch_rows[b].end(), parts[b].begin(), parts[b].end());
        }
      }
      break;
    }
    case ContentKind::NC: {
      if (n_batches > n_cls) {
        throw ConfigError("NC requires n_batches <= n_classes (n_batches=" + std::to_string(n_batches) +
                          ", n_classes=" + std::to_string(n_cls) + ")");
      }
      const auto groups = chunk(classes, n_batches);
      for (std::size_t b = 0; b < n_batches; ++b) {
        for (int cls : groups[b]) {
          batch_rows[b].insert(batch_rows[b].end(), train_of[cls].begin(), train_of[cls].end());
        }
      }
      break;
    }
    case ContentKind::NIC: {
      // Class appearances per batch: introduction first, then revisits.
      std::vector<std::vector<int>> appearing(n_batches);
      if (n_batches == 1) {
        appearing[0] = classes;
      } else {
        const std::size_t first = (n_cls + 1) / 2;
        appearing[0].assign(classes.begin(), classes.begin() + static_cast<std::ptrdiff_t>(first));
        const std::vector<int> rest(classes.begin() + static_cast<std::ptrdiff_t>(first), classes.end());
        const auto intro = chunk(rest, n_batches - 1);
        std::vector<int> known = appearing[0];
        for (std::size_t b = 1; b < n_batches; ++b) {
          std::vector<int> pool = known;
          rng.shuffle(pool);
          pool.resize(std::min<std::size_t>(2, pool.size()));
          std::sort(pool.begin(), pool.end());
          appearing[b] = pool;
          for (int cls : intro[b - 1]) {
            appearing[b].push_back(cls);
            known.push_back(cls);
          }
        }
      }
      std::map<int, std::size_t> appearances;
      for (const auto& a : appearing) {
        for (int cls : a) ++appearances[cls];
      }
      std::map<int, std::vector<std::vector<std::size_t>>> parts;
      for (const auto& [cls, count] : appearances) {
        if (train_of[cls].size() < count) {
          throw ConfigError("NIC: class " + std::to_string(cls) + " has " +
                            std::to_string(train_of[cls].size()) + " training examples for " +
                            std::to_string(count) + " appearances");
        }
        parts[cls] = chunk(train_of[cls], count);
      }
      std::map<int, std::size_t> used;
      for (std::size_t b = 0; b < n_batches; ++b) {
        for (int cls : appearing[b]) {
          const auto& p = parts[cls][used[cls]++];
          batch_rows[b].insert(batch_rows[b].end(), p.begin(), p.end());
        }
      }
      break;
    }
  }

  Scenario sc;
  sc.kind = kind;
  sc.content = content;
  sc.seed = seed;
  sc.n_classes = dataset.n_classes;
  sc.dim = dataset.dim;
  const auto labels = task_labels_for(kind, n_batches);
  for (std::size_t b = 0; b < n_batches; ++b) {
    if (batch_rows[b].empty()) {
      throw ConfigError("batch " + std::to_string(b + 1) + " would be empty");
    }
    rng.shuffle(batch_rows[b]);
    TrainingBatch batch;
    batch.index = b + 1;
    batch.task_label = labels[b];
    batch.source_indices = batch_rows[b];
    for (std::size_t row : batch_rows[b]) {
      Example e = dataset.examples[row];
      e.t = labels[b];
      batch.examples.push_back(std::move(e));
    }
    sc.batches.push_back(std::move(batch));
  }
  sc.test_indices = test_indices;
  for (std::size_t row : test_indices) sc.test_set.push_back(dataset.examples[row]);
  return sc;
}

Scenario withhold_task_labels(Scenario scenario) {
  for (auto& b : scenario.batches) {
    b.task_label.reset();
    for (auto& e : b.examples) e.t.reset();
  }
  for (auto& e : scenario.test_set) e.t.reset();
  return scenario;
}

TaskVerdict check_task_structure(ScenarioKind kind, const std::vector<std::optional<int>>& labels) {
  auto describe = [](const std::optional<int>& t) { return t ? std::to_string(*t) : std::string("absent"); };
  std::optional<std::pair<std::size_t, std::size_t>> repeat;
  std::optional<std::pair<std::size_t, std::size_t>> distinct;
  for (std::size_t i = 0; i < labels.size() && !(repeat && distinct); ++i) {
    for (std::size_t j = i + 1; j < labels.size(); ++j) {
      if (labels[i] == labels[j]) {
        if (!repeat) repeat = {i, j};
      } else if (!distinct) {
        distinct = {i, j};
      }
    }
  }
  TaskVerdict v;
  switch (kind) {
    case ScenarioKind::SIT:
      if (distinct) {
        v.consistent = false;
        v.violation = "SIT requires equal task labels; positions " + std::to_string(distinct->first + 1) +
                      " and " + std::to_string(distinct->second + 1) + " differ (" +
                      describe(labels[distinct->first]) + " vs " + describe(labels[distinct->second]) + ")";
      }
      break;
    case ScenarioKind::MT:
      if (repeat) {
        v.consistent = false;
        v.violation = "MT requires pairwise distinct task labels; repeat at positions " +
                      std::to_string(repeat->first + 1) + "," + std::to_string(repeat->second + 1);
      }
      break;
    case ScenarioKind::MIT:
      if (!repeat) {
        v.consistent = false;
        v.violation = "MIT requires a repeated task label";
      } else if (!distinct) {
        v.consistent = false;
        v.violation = "MIT requires at least two distinct task labels";
      }
      break;
  }
  return v;
}

TaskVerdict check_task_structure(const Scenario& scenario) {
  std::vector<std::optional<int>> labels;
  for (const auto& b : scenario.batches) labels.push_back(b.task_label);
  return check_task_structure(scenario.kind, labels);
}

MemoryVerdict audit_memory_bound(const ResourceTrace& trace, std::size_t warmup) {
  MemoryVerdict v;
  for (const auto& s : trace.steps) {
    if (s.step <= warmup) continue;
    if (s.stored >= s.cumulative_seen) {
      v.bounded = false;
      v.first_violation = s.step;
      break;
    }
  }
  return v;
}

nlohmann::json manifest_json(const Scenario& scenario) {
  nlohmann::json batches = nlohmann::json::array();
  for (const auto& b : scenario.batches) {
    const auto cls = b.classes();
    batches.push_back({{"index", b.index},
                       {"task_label", b.task_label ? nlohmann::json(*b.task_label) : nlohmann::json(nullptr)},
                       {"class_set", std::vector<int>(cls.begin(), cls.end())},
                       {"n_examples", b.examples.size()}});
  }
  return {{"kind", to_string(scenario.kind)},
          {"content", to_string(scenario.content)},
          {"seed", scenario.seed},
          {"batches", batches}};
}

}  // namespace ocl
