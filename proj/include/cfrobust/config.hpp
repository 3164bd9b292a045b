#pragma once

#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "cfrobust/core.hpp"
#include "cfrobust/csv.hpp"
#include "cfrobust/datagen.hpp"
#include "cfrobust/error.hpp"
#include "cfrobust/ingest.hpp"
#include "cfrobust/models.hpp"

namespace cfrobust {

// ---------------------------------------------------------------------------
// Minimal TOML reader: [section] headers, key = value with strings, numbers,
// booleans and flat arrays of those. Comments start with '#'.
// ---------------------------------------------------------------------------

namespace toml {

struct Value;
using Array = std::vector<Value>;

struct Value {
  std::variant<std::string, double, bool, Array> v;

  bool is_string() const { return std::holds_alternative<std::string>(v); }
  bool is_number() const { return std::holds_alternative<double>(v); }
  bool is_bool() const { return std::holds_alternative<bool>(v); }
  bool is_array() const { return std::holds_alternative<Array>(v); }
};

using Table = std::map<std::string, std::map<std::string, Value>>;

namespace detail {

class Parser {
 public:
  Parser(std::string_view text, std::string origin) : s_(text), origin_(std::move(origin)) {}

  Table parse() {
    Table t;
    std::string section;
    t[section];
    while (pos_ < s_.size()) {
      skip_blank();
      if (pos_ >= s_.size()) break;
      const char c = s_[pos_];
      if (c == '\n') {
        ++pos_, ++line_;
        continue;
      }
      if (c == '#') {
        skip_comment();
        continue;
      }
      if (c == '[') {
        ++pos_;
        const auto end = s_.find(']', pos_);
        if (end == std::string_view::npos) fail("unterminated section header");
        section = std::string(csv::trim(s_.substr(pos_, end - pos_)));
        if (section.empty()) fail("empty section name");
        if (t.count(section) && !t[section].empty()) fail("duplicate section [" + section + "]");
        t[section];
        pos_ = end + 1;
        end_of_line();
        continue;
      }
      const auto eq = s_.find('=', pos_);
      const auto nl = s_.find('\n', pos_);
      if (eq == std::string_view::npos || (nl != std::string_view::npos && eq > nl)) fail("expected key = value");
      const std::string key(csv::trim(s_.substr(pos_, eq - pos_)));
      if (key.empty()) fail("empty key");
      pos_ = eq + 1;
      skip_blank();
      Value v = value();
      if (t[section].count(key)) fail("duplicate key '" + key + "'");
      t[section][key] = std::move(v);
      end_of_line();
    }
    return t;
  }

 private:
  [[noreturn]] void fail(const std::string& m) const {
    throw ParameterError(origin_ + ":" + std::to_string(line_) + ": " + m);
  }

  void skip_blank() {
    while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t' || s_[pos_] == '\r')) ++pos_;
  }
  void skip_comment() {
    while (pos_ < s_.size() && s_[pos_] != '\n') ++pos_;
  }
  void end_of_line() {
    skip_blank();
    if (pos_ < s_.size() && s_[pos_] == '#') skip_comment();
    if (pos_ < s_.size() && s_[pos_] != '\n') fail("unexpected trailing characters");
  }
  void skip_ws_multiline() {
    for (;;) {
      skip_blank();
      if (pos_ < s_.size() && s_[pos_] == '\n') {
        ++pos_, ++line_;
      } else if (pos_ < s_.size() && s_[pos_] == '#') {
        skip_comment();
      } else {
        return;
      }
    }
  }

  Value value() {
    if (pos_ >= s_.size()) fail("missing value");
    const char c = s_[pos_];
    if (c == '"') {
      ++pos_;
      std::string out;
      while (pos_ < s_.size() && s_[pos_] != '"') {
        if (s_[pos_] == '\n') fail("unterminated string");
        if (s_[pos_] == '\\' && pos_ + 1 < s_.size()) {
          const char e = s_[++pos_];
          out += e == 'n' ? '\n' : e == 't' ? '\t' : e;
        } else {
          out += s_[pos_];
        }
        ++pos_;
      }
      if (pos_ >= s_.size()) fail("unterminated string");
      ++pos_;
      return {out};
    }
    if (c == '[') {
      ++pos_;
      Array arr;
      skip_ws_multiline();
      while (pos_ < s_.size() && s_[pos_] != ']') {
        arr.push_back(value());
        skip_ws_multiline();
        if (pos_ < s_.size() && s_[pos_] == ',') {
          ++pos_;
          skip_ws_multiline();
        }
      }
      if (pos_ >= s_.size()) fail("unterminated array");
      ++pos_;
      return {arr};
    }
    auto start = pos_;
    while (pos_ < s_.size() && s_[pos_] != ',' && s_[pos_] != ']' && s_[pos_] != '\n' && s_[pos_] != '#') ++pos_;
    const std::string tok(csv::trim(s_.substr(start, pos_ - start)));
    if (tok == "true") return {true};
    if (tok == "false") return {false};
    std::string digits;
    for (char ch : tok)
      if (ch != '_') digits += ch;
    const auto num = csv::parse_double(digits);
    if (!num || digits.empty()) fail("cannot parse value '" + tok + "'");
    return {*num};
  }

  std::string_view s_;
  std::string origin_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
};

}  // namespace detail

inline Table parse(std::string_view text, std::string origin = "<config>") {
  return detail::Parser(text, std::move(origin)).parse();
}

inline Table parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path);
}

}  // namespace toml

// ---------------------------------------------------------------------------
// Experiment configuration
// ---------------------------------------------------------------------------

enum class DatasetKind { mock, csv };

struct NoiseConfig {
  int n_levels = 5;
  double max_sigma = 2.0;
  double max_flip = 0.3;
  NoiseKind kind = NoiseKind::gaussian;
  double df = 3.0;
  std::size_t omit_columns = 0;  // continuous columns dropped at every noisy level
};

struct ModelConfig {
  std::vector<std::string> names{"lr"};
  double lr_l2 = 1e-3;
  double blr_prior_variance = 1.0;
  RandomForestParams rf{};
  MlpParams mlp{};
};

struct MethodConfig {
  std::vector<std::string> names{"milp"};
  double epsilon = 1e-6;
  std::size_t random_budget = 600;
  std::size_t marg_samples = 16;
  double marg_fraction = 1.0;
};

struct McmcConfig {
  std::size_t chains = 4;
  std::size_t draws = 2000;
  std::size_t warmup = 1000;
};

struct ExperimentConfig {
  std::string name = "experiment";
  std::uint64_t seed = 0;
  std::string output_dir = "runs";
  std::size_t n_replicates = 1;
  double test_fraction = 0.3;
  double min_completeness = 0.9;
  int target_class = 1;
  std::vector<std::string> groups{"ALL", "TN", "FN"};
  std::size_t bootstrap = 2000;
  McmcConfig mcmc{};

  DatasetKind dataset = DatasetKind::mock;
  MockSpec mock{};
  IngestConfig ingest{};

  NoiseConfig noise{};
  ModelConfig models{};
  MethodConfig methods{};

  void validate() const;
  nlohmann::json to_json() const;
};

inline const std::vector<std::string>& known_models() {
  static const std::vector<std::string> v{"lr", "blr", "rf", "mlp"};
  return v;
}
inline const std::vector<std::string>& known_methods() {
  static const std::vector<std::string> v{"milp", "milp_mean", "milp_marg", "nice", "random"};
  return v;
}

/// Whether a counterfactual method can run on a model kind.
inline bool compatible(const std::string& model, const std::string& method) {
  if (method == "milp") return model == "lr";
  if (method == "milp_mean" || method == "milp_marg") return model == "blr";
  if (method == "nice" || method == "random") return model != "blr";
  return false;
}

inline void ExperimentConfig::validate() const {
  auto fail = [](const std::string& m) { throw ParameterError("config: " + m); };
  if (models.names.empty()) fail("at least one model is required");
  if (methods.names.empty()) fail("at least one counterfactual method is required");
  if (noise.n_levels < 3) fail("n_levels must be >= 3 (Low/Medium/High buckets)");
  for (const auto& m : models.names)
    if (std::find(known_models().begin(), known_models().end(), m) == known_models().end()) fail("unknown model '" + m + "'");
  for (const auto& m : methods.names)
    if (std::find(known_methods().begin(), known_methods().end(), m) == known_methods().end())
      fail("unknown method '" + m + "'");
  bool any = false;
  for (const auto& m : models.names)
    for (const auto& k : methods.names) any |= compatible(m, k);
  if (!any) fail("no model/method combination is compatible");
  if (n_replicates < 1) fail("n_replicates must be >= 1");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) fail("test_fraction must lie in (0,1)");
  if (!(min_completeness >= 0.0 && min_completeness <= 1.0)) fail("min_completeness must lie in [0,1]");
  if (target_class != 0 && target_class != 1) fail("target_class must be 0 or 1");
  for (const auto& g : groups) group_from_string(g);
  if (noise.max_sigma < 0.0) fail("max_sigma must be >= 0");
  if (noise.max_flip < 0.0 || noise.max_flip > 0.5) fail("max_flip must lie in [0,0.5]");
  if (noise.kind == NoiseKind::student_t && !(noise.df > 0.0)) fail("df must be > 0");
  if (methods.random_budget < 1) fail("random_budget must be >= 1");
  if (methods.marg_samples < 1) fail("marg_samples must be >= 1");
  if (!(methods.marg_fraction > 0.0 && methods.marg_fraction <= 1.0)) fail("marg_fraction must lie in (0,1]");
  if (!(methods.epsilon > 0.0)) fail("epsilon must be > 0");
  if (!(models.lr_l2 >= 0.0)) fail("lr_l2 must be >= 0");
  if (!(models.blr_prior_variance > 0.0)) fail("blr_prior_variance must be > 0");
  if (mcmc.chains < 1 || mcmc.draws < 4) fail("mcmc needs >= 1 chain and >= 4 draws");
  if (dataset == DatasetKind::mock) {
    mock.validate();
    const auto continuous = mock.n_features - mock.n_categorical;
    if (noise.omit_columns >= continuous && noise.omit_columns > 0)
      fail("omit_columns must leave at least one continuous column");
  } else {
    ingest.validate();
  }
}

inline nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json j;
  j["experiment"] = {{"name", name},
                     {"seed", seed},
                     {"n_replicates", n_replicates},
                     {"test_fraction", test_fraction},
                     {"min_completeness", min_completeness},
                     {"target_class", target_class},
                     {"groups", groups},
                     {"bootstrap", bootstrap},
                     {"mcmc_chains", mcmc.chains},
                     {"mcmc_draws", mcmc.draws},
                     {"mcmc_warmup", mcmc.warmup}};
  if (dataset == DatasetKind::mock) {
    j["dataset"] = {{"kind", "mock"},
                    {"n_samples", mock.n_samples},
                    {"n_features", mock.n_features},
                    {"n_informative", mock.n_informative},
                    {"n_categorical", mock.n_categorical},
                    {"n_polytopes", mock.n_polytopes},
                    {"non_iid", mock.non_iid},
                    {"missing_variables", mock.missing_variables},
                    {"class_balance", mock.class_balance},
                    {"class_separation", mock.class_separation},
                    {"polytope_bins", mock.polytope_bins}};
  } else {
    j["dataset"] = {{"kind", "csv"},
                    {"path", ingest.path},
                    {"target_column", ingest.target_column},
                    {"positive_label", ingest.positive_label},
                    {"categorical_columns", ingest.categorical_columns},
                    {"drop_columns", ingest.drop_columns},
                    {"min_category_frequency", ingest.min_category_frequency},
                    {"subsample_fraction", ingest.subsample_fraction},
                    {"standardize", ingest.standardize}};
  }
  j["noise"] = {{"n_levels", noise.n_levels},
                {"max_sigma", noise.max_sigma},
                {"max_flip", noise.max_flip},
                {"kind", noise.kind == NoiseKind::gaussian ? "gaussian" : "student_t"},
                {"df", noise.df},
                {"omit_columns", noise.omit_columns}};
  j["models"] = {{"list", models.names},
                 {"lr_l2", models.lr_l2},
                 {"blr_prior_variance", models.blr_prior_variance},
                 {"rf_trees", models.rf.n_trees},
                 {"rf_max_depth", models.rf.max_depth},
                 {"rf_min_leaf", models.rf.min_leaf},
                 {"mlp_hidden", models.mlp.hidden_sizes},
                 {"mlp_epochs", models.mlp.epochs},
                 {"mlp_learning_rate", models.mlp.learning_rate},
                 {"mlp_batch_size", models.mlp.batch_size}};
  j["methods"] = {{"list", methods.names},
                  {"epsilon", methods.epsilon},
                  {"random_budget", methods.random_budget},
                  {"marg_samples", methods.marg_samples},
                  {"marg_fraction", methods.marg_fraction}};
  return j;
}

namespace detail {

class SectionReader {
 public:
  SectionReader(const toml::Table& t, const std::string& section) : section_(section) {
    auto it = t.find(section);
    if (it != t.end()) values_ = &it->second;
  }
  ~SectionReader() = default;

  const toml::Value* get(const std::string& key) {
    used_.insert(key);
    if (!values_) return nullptr;
    auto it = values_->find(key);
    return it == values_->end() ? nullptr : &it->second;
  }

  void read(const std::string& key, std::string& out) {
    if (auto v = get(key)) out = expect<std::string>(key, *v, "a string");
  }
  void read(const std::string& key, double& out) {
    if (auto v = get(key)) out = expect<double>(key, *v, "a number");
  }
  void read(const std::string& key, bool& out) {
    if (auto v = get(key)) out = expect<bool>(key, *v, "a boolean");
  }
  template <typename Int>
    requires std::is_integral_v<Int>
  void read(const std::string& key, Int& out) {
    if (auto v = get(key)) out = as_integer<Int>(key, expect<double>(key, *v, "an integer"));
  }
  void read(const std::string& key, std::vector<std::string>& out) {
    if (auto v = get(key)) {
      out.clear();
      for (const auto& e : expect<toml::Array>(key, *v, "an array")) out.push_back(expect<std::string>(key, e, "a string"));
    }
  }
  void read(const std::string& key, std::vector<std::size_t>& out) {
    if (auto v = get(key)) {
      out.clear();
      for (const auto& e : expect<toml::Array>(key, *v, "an array"))
        out.push_back(as_integer<std::size_t>(key, expect<double>(key, e, "an integer")));
    }
  }

  // Keys present in the file but never read.
  std::vector<std::string> unknown() const {
    std::vector<std::string> out;
    if (!values_) return out;
    for (const auto& [k, v] : *values_)
      if (!used_.count(k)) out.push_back(section_ + "." + k);
    return out;
  }

 private:
  template <typename T>
  const T& expect(const std::string& key, const toml::Value& v, const char* what) const {
    if (!std::holds_alternative<T>(v.v)) throw ParameterError("config: " + section_ + "." + key + " must be " + what);
    return std::get<T>(v.v);
  }
  template <typename Int>
  Int as_integer(const std::string& key, double d) const {
    if (d != std::floor(d) || (std::is_unsigned_v<Int> && d < 0.0))
      throw ParameterError("config: " + section_ + "." + key + " must be a non-negative integer");
    return static_cast<Int>(d);
  }

  std::string section_;
  const std::map<std::string, toml::Value>* values_ = nullptr;
  std::set<std::string> used_;
};

}  // namespace detail

/// Builds an ExperimentConfig from parsed TOML. `base_dir` resolves a relative
/// dataset path. Unknown sections or keys are rejected.
inline ExperimentConfig config_from_toml(const toml::Table& t, const std::string& base_dir = ".") {
  static const std::set<std::string> sections{"", "experiment", "dataset", "noise", "models", "methods"};
  for (const auto& [name, values] : t) {
    if (!sections.count(name)) throw ParameterError("config: unknown section [" + name + "]");
    if (name.empty() && !values.empty()) throw ParameterError("config: keys before the first section");
  }
  ExperimentConfig c;
  std::vector<std::string> unknown;

  detail::SectionReader ex(t, "experiment");
  ex.read("name", c.name);
  ex.read("seed", c.seed);
  ex.read("output_dir", c.output_dir);
  ex.read("n_replicates", c.n_replicates);
  ex.read("test_fraction", c.test_fraction);
  ex.read("min_completeness", c.min_completeness);
  ex.read("target_class", c.target_class);
  ex.read("groups", c.groups);
  ex.read("bootstrap", c.bootstrap);
  ex.read("mcmc_chains", c.mcmc.chains);
  ex.read("mcmc_draws", c.mcmc.draws);
  ex.read("mcmc_warmup", c.mcmc.warmup);
  for (auto& u : ex.unknown()) unknown.push_back(u);

  detail::SectionReader ds(t, "dataset");
  std::string kind = "mock";
  ds.read("kind", kind);
  if (kind == "mock") {
    c.dataset = DatasetKind::mock;
    int preset = 0;
    ds.read("preset", preset);
    if (preset != 0) c.mock = mock_preset(preset);
    ds.read("n_samples", c.mock.n_samples);
    ds.read("n_features", c.mock.n_features);
    ds.read("n_informative", c.mock.n_informative);
    ds.read("n_categorical", c.mock.n_categorical);
    ds.read("n_polytopes", c.mock.n_polytopes);
    ds.read("non_iid", c.mock.non_iid);
    ds.read("missing_variables", c.mock.missing_variables);
    ds.read("class_balance", c.mock.class_balance);
    ds.read("class_separation", c.mock.class_separation);
    ds.read("polytope_bins", c.mock.polytope_bins);
    if (c.mock.missing_variables) c.noise.omit_columns = 1;
  } else if (kind == "csv") {
    c.dataset = DatasetKind::csv;
    ds.read("path", c.ingest.path);
    ds.read("target_column", c.ingest.target_column);
    ds.read("positive_label", c.ingest.positive_label);
    ds.read("categorical_columns", c.ingest.categorical_columns);
    ds.read("drop_columns", c.ingest.drop_columns);
    ds.read("min_category_frequency", c.ingest.min_category_frequency);
    ds.read("subsample_fraction", c.ingest.subsample_fraction);
    ds.read("standardize", c.ingest.standardize);
    if (!c.ingest.path.empty() && c.ingest.path.front() != '/') c.ingest.path = base_dir + "/" + c.ingest.path;
  } else {
    throw ParameterError("config: dataset.kind must be \"mock\" or \"csv\"");
  }
  for (auto& u : ds.unknown()) unknown.push_back(u);

  detail::SectionReader nz(t, "noise");
  nz.read("n_levels", c.noise.n_levels);
  nz.read("max_sigma", c.noise.max_sigma);
  nz.read("max_flip", c.noise.max_flip);
  std::string nk = "gaussian";
  nz.read("kind", nk);
  if (nk == "gaussian") c.noise.kind = NoiseKind::gaussian;
  else if (nk == "student_t") c.noise.kind = NoiseKind::student_t;
  else throw ParameterError("config: noise.kind must be \"gaussian\" or \"student_t\"");
  nz.read("df", c.noise.df);
  nz.read("omit_columns", c.noise.omit_columns);
  for (auto& u : nz.unknown()) unknown.push_back(u);

  detail::SectionReader md(t, "models");
  md.read("list", c.models.names);
  md.read("lr_l2", c.models.lr_l2);
  md.read("blr_prior_variance", c.models.blr_prior_variance);
  md.read("rf_trees", c.models.rf.n_trees);
  md.read("rf_max_depth", c.models.rf.max_depth);
  md.read("rf_min_leaf", c.models.rf.min_leaf);
  md.read("mlp_hidden", c.models.mlp.hidden_sizes);
  md.read("mlp_epochs", c.models.mlp.epochs);
  md.read("mlp_learning_rate", c.models.mlp.learning_rate);
  md.read("mlp_batch_size", c.models.mlp.batch_size);
  for (auto& u : md.unknown()) unknown.push_back(u);

  detail::SectionReader me(t, "methods");
  me.read("list", c.methods.names);
  me.read("epsilon", c.methods.epsilon);
  me.read("random_budget", c.methods.random_budget);
  me.read("marg_samples", c.methods.marg_samples);
  me.read("marg_fraction", c.methods.marg_fraction);
  for (auto& u : me.unknown()) unknown.push_back(u);

  if (!unknown.empty()) {
    std::string msg = "config: unknown key(s):";
    for (const auto& u : unknown) msg += " " + u;
    throw ParameterError(msg);
  }
  c.validate();
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  const auto dir = std::filesystem::path(path).parent_path().string();
  return config_from_toml(toml::parse_file(path), dir.empty() ? "." : dir);
}

inline ExperimentConfig parse_config(std::string_view text, const std::string& base_dir = ".") {
  return config_from_toml(toml::parse(text), base_dir);
}

}  // namespace cfrobust
