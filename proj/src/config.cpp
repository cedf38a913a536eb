#include "ocl/config.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include "ocl/errors.hpp"

namespace ocl {

namespace {

using nlohmann::json;

class TomlCursor {
 public:
  TomlCursor(std::string_view s, std::size_t line) : s_(s), line_(line) {}

  void skip_ws() {
    while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t' || s_[pos_] == '\n' || s_[pos_] == '\r')) ++pos_;
  }
  bool done() {
    skip_ws();
    return pos_ >= s_.size();
  }
  char peek() const { return pos_ < s_.size() ? s_[pos_] : '\0'; }

  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError("config line " + std::to_string(line_) + ": " + what, line_);
  }

  json value() {
    skip_ws();
    const char c = peek();
    if (c == '"') return basic_string();
    if (c == '\'') return literal_string();
    if (c == '[') return array();
    if (c == '{') return inline_table();
    return scalar();
  }

  std::string key() {
    skip_ws();
    if (peek() == '"') return basic_string().get<std::string>();
    const std::size_t start = pos_;
    while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_' ||
                                s_[pos_] == '-' || s_[pos_] == '*' || s_[pos_] == '+')) {
      ++pos_;
    }
    if (start == pos_) fail("expected a key");
    return std::string(s_.substr(start, pos_ - start));
  }

  std::vector<std::string> dotted_key() {
    std::vector<std::string> parts{key()};
    skip_ws();
    while (peek() == '.') {
      ++pos_;
      parts.push_back(key());
      skip_ws();
    }
    return parts;
  }

  void expect(char c) {
    skip_ws();
    if (peek() != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }

 private:
  json basic_string() {
    ++pos_;
    std::string out;
    while (pos_ < s_.size() && s_[pos_] != '"') {
      char c = s_[pos_++];
      if (c == '\\') {
        if (pos_ >= s_.size()) fail("unterminated escape");
        const char e = s_[pos_++];
        switch (e) {
          case 'n': c = '\n'; break;
          case 't': c = '\t'; break;
          case '"': c = '"'; break;
          case '\\': c = '\\'; break;
          default: fail(std::string("unsupported escape \\") + e);
        }
      }
      out.push_back(c);
    }
    if (pos_ >= s_.size()) fail("unterminated string");
    ++pos_;
    return out;
  }

  json literal_string() {
    ++pos_;
    const std::size_t end = s_.find('\'', pos_);
    if (end == std::string_view::npos) fail("unterminated string");
    std::string out(s_.substr(pos_, end - pos_));
    pos_ = end + 1;
    return out;
  }

  json array() {
    ++pos_;
    json out = json::array();
    skip_ws();
    if (peek() == ']') {
      ++pos_;
      return out;
    }
    for (;;) {
      out.push_back(value());
      skip_ws();
      if (peek() == ',') {
        ++pos_;
        skip_ws();
        if (peek() == ']') {
          ++pos_;
          return out;
        }
        continue;
      }
      if (peek() == ']') {
        ++pos_;
        return out;
      }
      fail("expected ',' or ']' in array");
    }
  }

  json inline_table() {
    ++pos_;
    json out = json::object();
    skip_ws();
    if (peek() == '}') {
      ++pos_;
      return out;
    }
    for (;;) {
      const auto path = dotted_key();
      expect('=');
      json* slot = &out;
      for (const auto& p : path) slot = &(*slot)[p];
      *slot = value();
      skip_ws();
      if (peek() == ',') {
        ++pos_;
        continue;
      }
      if (peek() == '}') {
        ++pos_;
        return out;
      }
      fail("expected ',' or '}' in inline table");
    }
  }

  json scalar() {
    const std::size_t start = pos_;
    while (pos_ < s_.size() && s_[pos_] != ',' && s_[pos_] != ']' && s_[pos_] != '}' && s_[pos_] != ' ' &&
           s_[pos_] != '\t' && s_[pos_] != '\n' && s_[pos_] != '\r') {
      ++pos_;
    }
    std::string tok(s_.substr(start, pos_ - start));
    if (tok.empty()) fail("expected a value");
    if (tok == "true") return true;
    if (tok == "false") return false;
    std::string digits;
    for (char c : tok) {
      if (c != '_') digits.push_back(c);
    }
    const bool is_float = digits.find_first_of(".eE") != std::string::npos || digits == "inf" ||
                          digits == "+inf" || digits == "-inf" || digits == "nan";
    if (!is_float) {
      std::int64_t v = 0;
      const char* b = digits.data() + (digits[0] == '+' ? 1 : 0);
      const char* e = digits.data() + digits.size();
      const auto r = std::from_chars(b, e, v);
      if (r.ec == std::errc() && r.ptr == e) return v;
      fail("invalid value '" + tok + "'");
    }
    try {
      std::size_t used = 0;
      const double v = std::stod(digits, &used);
      if (used != digits.size()) fail("invalid number '" + tok + "'");
      return v;
    } catch (const std::logic_error&) {
      fail("invalid number '" + tok + "'");
    }
  }

  std::string_view s_;
  std::size_t line_;
  std::size_t pos_ = 0;
};

std::string strip_comment(const std::string& line) {
  bool in_basic = false, in_literal = false, escaped = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (in_basic) {
      if (escaped) escaped = false;
      else if (c == '\\') escaped = true;
      else if (c == '"') in_basic = false;
    } else if (in_literal) {
      if (c == '\'') in_literal = false;
    } else if (c == '"') {
      in_basic = true;
    } else if (c == '\'') {
      in_literal = true;
    } else if (c == '#') {
      return line.substr(0, i);
    }
  }
  return line;
}

int bracket_balance(const std::string& s) {
  int depth = 0;
  bool in_basic = false, in_literal = false, escaped = false;
  for (char c : s) {
    if (in_basic) {
      if (escaped) escaped = false;
      else if (c == '\\') escaped = true;
      else if (c == '"') in_basic = false;
    } else if (in_literal) {
      if (c == '\'') in_literal = false;
    } else if (c == '"') {
      in_basic = true;
    } else if (c == '\'') {
      in_literal = true;
    } else if (c == '[' || c == '{') {
      ++depth;
    } else if (c == ']' || c == '}') {
      --depth;
    }
  }
  return depth;
}

json* descend(json& root, const std::vector<std::string>& path, std::size_t line) {
  json* node = &root;
  for (const auto& p : path) {
    if (!node->is_object()) {
      throw ParseError("config line " + std::to_string(line) + ": '" + p + "' is under a non-table key", line);
    }
    node = &(*node)[p];
    if (node->is_null()) *node = json::object();
  }
  return node;
}

std::string join(const std::vector<std::string>& parts) {
  std::string out;
  for (const auto& p : parts) out += (out.empty() ? "" : ".") + p;
  return out;
}

std::string toml_scalar(const json& v) {
  if (v.is_string()) {
    std::string out = "\"";
    for (char c : v.get<std::string>()) {
      if (c == '"' || c == '\\') out.push_back('\\');
      if (c == '\n') {
        out += "\\n";
        continue;
      }
      out.push_back(c);
    }
    return out + "\"";
  }
  if (v.is_array()) {
    std::string out = "[";
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + toml_scalar(v[i]);
    return out + "]";
  }
  if (v.is_number_float()) {
    std::string s = v.dump();
    if (s.find_first_of(".eE") == std::string::npos) s += ".0";
    return s;
  }
  return v.dump();
}

void emit_table(std::ostringstream& out, const json& j, const std::string& prefix) {
  for (const auto& [k, v] : j.items()) {
    if (!v.is_object()) out << k << " = " << toml_scalar(v) << '\n';
  }
  for (const auto& [k, v] : j.items()) {
    if (!v.is_object()) continue;
    const std::string name = prefix.empty() ? k : prefix + "." + k;
    out << "\n[" << name << "]\n";
    emit_table(out, v, name);
  }
}

void merge_checked(json& base, const json& patch, const std::string& path) {
  if (!patch.is_object()) throw ConfigError((path.empty() ? "config" : path) + ": expected a table");
  for (const auto& [k, v] : patch.items()) {
    const std::string here = path.empty() ? k : path + "." + k;
    if (!base.contains(k)) throw ConfigError(here + ": unknown key");
    json& slot = base[k];
    if (slot.is_object()) {
      merge_checked(slot, v, here);
    } else {
      if (v.is_object()) throw ConfigError(here + ": expected a value, got a table");
      slot = v;
    }
  }
}

json gwr_defaults(std::size_t k) {
  const auto c = GammaGwrConfig::with_depth(k);
  return {{"K", c.context_depth},
          {"alpha", json::array()},
          {"beta", c.beta},
          {"eps_b", c.eps_b},
          {"eps_n", c.eps_n},
          {"a_T", c.activity_threshold},
          {"h_T", c.habituation_threshold},
          {"tau_b", c.tau_b},
          {"tau_n", c.tau_n},
          {"kappa", c.kappa},
          {"max_edge_age", c.max_edge_age},
          {"max_neurons", c.max_neurons}};
}

// Typed field access that reports the dotted path on failure.
class Fields {
 public:
  Fields(const json& j, std::string path) : j_(j), path_(std::move(path)) {}

  std::string where(const std::string& key) const {
    if (key.empty()) return path_;
    return path_.empty() ? key : path_ + "." + key;
  }

  const json& raw(const std::string& key) const {
    if (!j_.contains(key)) throw ConfigError(where(key) + ": missing");
    return j_.at(key);
  }
  Fields sub(const std::string& key) const { return Fields(raw(key), where(key)); }

  double real(const std::string& key) const {
    const auto& v = raw(key);
    if (!v.is_number()) throw ConfigError(where(key) + ": expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw ConfigError(where(key) + ": must be finite");
    return d;
  }
  std::int64_t integer(const std::string& key) const {
    const auto& v = raw(key);
    if (!v.is_number_integer()) throw ConfigError(where(key) + ": expected an integer");
    return v.get<std::int64_t>();
  }
  std::size_t count(const std::string& key, std::size_t min = 0) const {
    const auto v = integer(key);
    if (v < static_cast<std::int64_t>(min)) {
      throw ConfigError(where(key) + ": must be >= " + std::to_string(min));
    }
    return static_cast<std::size_t>(v);
  }
  bool flag(const std::string& key) const {
    const auto& v = raw(key);
    if (!v.is_boolean()) throw ConfigError(where(key) + ": expected true or false");
    return v.get<bool>();
  }
  std::string text(const std::string& key) const {
    const auto& v = raw(key);
    if (!v.is_string()) throw ConfigError(where(key) + ": expected a string");
    return v.get<std::string>();
  }
  double positive(const std::string& key) const {
    const double v = real(key);
    if (!(v > 0.0)) throw ConfigError(where(key) + ": must be > 0");
    return v;
  }
  double non_negative(const std::string& key) const {
    const double v = real(key);
    if (!(v >= 0.0)) throw ConfigError(where(key) + ": must be >= 0");
    return v;
  }

 private:
  const json& j_;
  std::string path_;
};

GammaGwrConfig gwr_from_fields(const Fields& f) {
  GammaGwrConfig c = GammaGwrConfig::with_depth(f.count("K"));
  const auto& alpha = f.raw("alpha");
  if (!alpha.is_array()) throw ConfigError(f.where("alpha") + ": expected an array");
  if (!alpha.empty()) {
    c.alpha.clear();
    for (const auto& a : alpha) {
      if (!a.is_number()) throw ConfigError(f.where("alpha") + ": expected numbers");
      c.alpha.push_back(a.get<double>());
    }
  }
  c.beta = f.real("beta");
  c.eps_b = f.real("eps_b");
  c.eps_n = f.real("eps_n");
  c.activity_threshold = f.real("a_T");
  c.habituation_threshold = f.real("h_T");
  c.tau_b = f.real("tau_b");
  c.tau_n = f.real("tau_n");
  c.kappa = f.real("kappa");
  c.max_edge_age = static_cast<int>(f.count("max_edge_age", 1));
  c.max_neurons = f.count("max_neurons", 2);
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(f.where("") + ": " + e.what());
  }
  return c;
}

}  // namespace

json parse_toml(std::string_view text) {
  json root = json::object();
  std::vector<std::string> table;
  std::istringstream in{std::string(text)};
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::size_t start_line = line_no;
    std::string line = strip_comment(raw);
    while (bracket_balance(line) > 0 && line.find('=') != std::string::npos && std::getline(in, raw)) {
      ++line_no;
      line += "\n" + strip_comment(raw);
    }
    TomlCursor cur(line, start_line);
    if (cur.done()) continue;
    if (cur.peek() == '[') {
      cur.expect('[');
      if (cur.peek() == '[') cur.fail("arrays of tables are not supported");
      table = cur.dotted_key();
      cur.expect(']');
      if (!cur.done()) cur.fail("unexpected text after table header");
      json* node = descend(root, table, start_line);
      if (!node->is_object()) cur.fail("table [" + join(table) + "] redefines a value");
      continue;
    }
    auto path = cur.dotted_key();
    cur.expect('=');
    json value = cur.value();
    if (!cur.done()) cur.fail("unexpected text after value");
    const std::string leaf = path.back();
    path.pop_back();
    std::vector<std::string> full = table;
    full.insert(full.end(), path.begin(), path.end());
    json* node = descend(root, full, start_line);
    if (node->contains(leaf)) cur.fail("duplicate key '" + join(full) + (full.empty() ? "" : ".") + leaf + "'");
    (*node)[leaf] = std::move(value);
  }
  return root;
}

std::string to_toml(const json& j) {
  std::ostringstream out;
  emit_table(out, j, "");
  return out.str();
}

json load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_toml(buf.str());
}

json default_config() {
  const StrategyConfig s;
  const SyntheticSpec d;
  return {{"output_dir", "runs"},
          {"threads", 0},
          {"scenario",
           {{"kind", "SIT"},
            {"content", "NC"},
            {"n_batches", 5},
            {"test_fraction", 0.2},
            {"seeds", {0}},
            {"task_labels", true},
            {"dataset",
             {{"source", "synthetic"},
              {"seed", -1},
              {"n_classes", d.n_classes},
              {"dim", d.dim},
              {"per_class", d.per_class},
              {"spread", d.spread},
              {"instances_per_class", d.instances_per_class},
              {"instance_spread", d.instance_spread},
              {"center_scale", d.center_scale},
              {"path", ""},
              {"label_column", 0}}}}},
          {"strategy",
           {{"name", s.name},
            {"hidden", s.hidden},
            {"epochs", s.epochs},
            {"lr", s.lr},
            {"minibatch", s.minibatch},
            {"replay_layer", s.replay_layer},
            {"rm_size", s.rm_size},
            {"replay_fraction", s.replay_fraction},
            {"lambda", s.lambda},
            {"xi", s.xi},
            {"below_replay_lr", s.below_replay_lr},
            {"gwr", [] {
               auto g = gwr_defaults(0);
               g["epochs"] = 1;
               return g;
             }()},
            {"gdm",
             {{"epochs", s.gdm_epochs},
              {"group_by_instance", s.group_by_instance},
              {"synapse_decay", s.gdm.synapse_decay},
              {"episodic", gwr_defaults(s.gdm.episodic.context_depth)},
              {"semantic", gwr_defaults(s.gdm.semantic.context_depth)}}}}}};
}

void apply_assignment(json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "': expected key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  json patch = json::object();
  json* node = &patch;
  std::size_t start = 0;
  for (;;) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot - start);
    if (part.empty()) throw ConfigError("override '" + assignment + "': empty key segment");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      break;
    }
    node = &(*node)[part];
    start = dot + 1;
  }
  merge_checked(config, patch, "");
}

void apply_json_override(json& config, const json& patch) { merge_checked(config, patch, ""); }

ExperimentConfig experiment_config_from_json(const json& j) {
  json full = default_config();
  merge_checked(full, j, "");
  const Fields root(full, "");
  ExperimentConfig c;
  c.output_dir = root.text("output_dir");
  c.threads = root.count("threads");

  const Fields sc = root.sub("scenario");
  try {
    c.scenario.kind = parse_scenario_kind(sc.text("kind"));
  } catch (const ConfigError& e) {
    throw ConfigError(sc.where("kind") + ": " + e.what());
  }
  try {
    c.scenario.content = parse_content_kind(sc.text("content"));
  } catch (const ConfigError& e) {
    throw ConfigError(sc.where("content") + ": " + e.what());
  }
  c.scenario.n_batches = sc.count("n_batches", 1);
  c.scenario.test_fraction = sc.real("test_fraction");
  if (!(c.scenario.test_fraction > 0.0 && c.scenario.test_fraction < 1.0)) {
    throw ConfigError(sc.where("test_fraction") + ": must lie in (0,1)");
  }
  const auto& seeds = sc.raw("seeds");
  if (!seeds.is_array() || seeds.empty()) throw ConfigError(sc.where("seeds") + ": must be a non-empty array");
  c.scenario.seeds.clear();
  for (const auto& s : seeds) {
    if (!s.is_number_integer() || s.get<std::int64_t>() < 0) {
      throw ConfigError(sc.where("seeds") + ": seeds must be non-negative integers");
    }
    c.scenario.seeds.push_back(s.get<std::uint64_t>());
  }
  c.scenario.task_labels = sc.flag("task_labels");
  if (c.scenario.kind == ScenarioKind::MIT && c.scenario.n_batches < 3) {
    throw ConfigError(sc.where("n_batches") + ": MIT requires at least 3 batches");
  }

  const Fields ds = sc.sub("dataset");
  c.scenario.dataset.source = ds.text("source");
  const auto dseed = ds.integer("seed");
  if (dseed >= 0) c.scenario.dataset.seed = static_cast<std::uint64_t>(dseed);
  if (c.scenario.dataset.source == "synthetic") {
    auto& sp = c.scenario.dataset.synthetic;
    sp.n_classes = static_cast<int>(ds.count("n_classes", 1));
    sp.dim = ds.count("dim", 1);
    sp.per_class = ds.count("per_class", 1);
    sp.spread = ds.non_negative("spread");
    sp.instances_per_class = static_cast<int>(ds.count("instances_per_class", 1));
    sp.instance_spread = ds.non_negative("instance_spread");
    sp.center_scale = ds.non_negative("center_scale");
    if (c.scenario.content == ContentKind::NC && c.scenario.n_batches > static_cast<std::size_t>(sp.n_classes)) {
      throw ConfigError(sc.where("n_batches") + ": NC requires n_batches <= n_classes (" +
                        std::to_string(c.scenario.n_batches) + " > " + std::to_string(sp.n_classes) + ")");
    }
  } else if (c.scenario.dataset.source == "csv") {
    c.scenario.dataset.path = ds.text("path");
    if (c.scenario.dataset.path.empty()) throw ConfigError(ds.where("path") + ": required for csv datasets");
    c.scenario.dataset.label_column = ds.count("label_column");
  } else {
    throw ConfigError(ds.where("source") + ": must be synthetic or csv");
  }

  const Fields st = root.sub("strategy");
  auto& s = c.strategy;
  s.name = st.text("name");
  bool known = false;
  for (const auto& n : strategy_names()) known = known || n == s.name;
  if (!known) {
    std::string list;
    for (const auto& n : strategy_names()) list += (list.empty() ? "" : ", ") + n;
    throw ConfigError(st.where("name") + ": unknown strategy '" + s.name + "' (one of " + list + ")");
  }
  const auto& hidden = st.raw("hidden");
  if (!hidden.is_array() || hidden.empty()) throw ConfigError(st.where("hidden") + ": must be a non-empty array");
  s.hidden.clear();
  for (const auto& h : hidden) {
    if (!h.is_number_integer() || h.get<std::int64_t>() < 1) {
      throw ConfigError(st.where("hidden") + ": widths must be positive integers");
    }
    s.hidden.push_back(h.get<std::size_t>());
  }
  s.epochs = st.count("epochs", 1);
  s.lr = st.positive("lr");
  s.minibatch = st.count("minibatch", 1);
  s.replay_layer = st.count("replay_layer");
  if (s.replay_layer > s.hidden.size()) {
    throw ConfigError(st.where("replay_layer") + ": must be <= the number of hidden layers (" +
                      std::to_string(s.hidden.size()) + ")");
  }
  s.rm_size = st.count("rm_size", 1);
  s.replay_fraction = st.non_negative("replay_fraction");
  s.lambda = st.non_negative("lambda");
  s.xi = st.positive("xi");
  s.below_replay_lr = st.non_negative("below_replay_lr");

  const Fields g = st.sub("gwr");
  s.gwr = gwr_from_fields(g);
  s.gwr_epochs = g.count("epochs", 1);

  const Fields gd = st.sub("gdm");
  s.gdm_epochs = gd.count("epochs", 1);
  s.group_by_instance = gd.flag("group_by_instance");
  s.gdm.synapse_decay = gd.non_negative("synapse_decay");
  if (s.gdm.synapse_decay >= 1.0) throw ConfigError(gd.where("synapse_decay") + ": must be < 1");
  s.gdm.episodic = gwr_from_fields(gd.sub("episodic"));
  s.gdm.semantic = gwr_from_fields(gd.sub("semantic"));
  s.gdm.replay_enabled = s.name == "gdm";
  return c;
}

}  // namespace ocl
