#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <tuple>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "cfrobust/csv.hpp"
#include "cfrobust/error.hpp"

namespace cfrobust {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using InstanceId = std::uint64_t;

// ---------------------------------------------------------------------------
// Schema
// ---------------------------------------------------------------------------

enum class ColumnKind { continuous, categorical_indicator };

struct Bounds {
  double lo = 0.0;
  double hi = 0.0;
};

struct ColumnSpec {
  std::string name;
  ColumnKind kind = ColumnKind::continuous;
  std::optional<Bounds> bounds;  // continuous only
  std::string group_id;          // indicator only

  static ColumnSpec continuous(std::string name, std::optional<Bounds> bounds = std::nullopt) {
    return {std::move(name), ColumnKind::continuous, bounds, {}};
  }
  static ColumnSpec indicator(std::string name, std::string group) {
    return {std::move(name), ColumnKind::categorical_indicator, std::nullopt, std::move(group)};
  }
  bool is_continuous() const { return kind == ColumnKind::continuous; }
};

/// One-hot group of mutually exclusive indicator columns.
///
/// A drop-one group with k members encodes k+1 categories: category 0 is the
/// dropped reference (all members zero) and category i+1 sets member i. A full
/// group with k members encodes k categories, category i sets member i.
struct PolytopeGroup {
  std::string id;
  std::vector<std::size_t> members;
  bool drop_one = true;

  std::size_t n_categories() const { return members.size() + (drop_one ? 1 : 0); }
};

class FeatureSchema {
 public:
  FeatureSchema() = default;

  // Throws ParameterError when the column/group invariants do not hold.
  FeatureSchema(std::vector<ColumnSpec> columns, std::vector<PolytopeGroup> groups)
      : columns_(std::move(columns)), groups_(std::move(groups)) {
    rebuild();
  }

  // Schema with `n` unbounded continuous columns named f0..f{n-1}.
  static FeatureSchema all_continuous(std::size_t n) {
    std::vector<ColumnSpec> cols;
    for (std::size_t j = 0; j < n; ++j) cols.push_back(ColumnSpec::continuous("f" + std::to_string(j)));
    return FeatureSchema(std::move(cols), {});
  }

  const std::vector<ColumnSpec>& columns() const { return columns_; }
  const std::vector<PolytopeGroup>& groups() const { return groups_; }
  const ColumnSpec& column(std::size_t j) const { return columns_.at(j); }
  std::size_t size() const { return columns_.size(); }

  const std::vector<std::size_t>& continuous_indices() const { return continuous_; }
  const std::vector<std::size_t>& categorical_indices() const { return categorical_; }

  std::optional<std::size_t> group_of(std::size_t column) const {
    const auto g = group_of_.at(column);
    if (g < 0) return std::nullopt;
    return static_cast<std::size_t>(g);
  }

  std::optional<std::size_t> index_of(std::string_view name) const {
    for (std::size_t j = 0; j < columns_.size(); ++j)
      if (columns_[j].name == name) return j;
    return std::nullopt;
  }

  std::optional<std::size_t> group_index(std::string_view id) const {
    for (std::size_t g = 0; g < groups_.size(); ++g)
      if (groups_[g].id == id) return g;
    return std::nullopt;
  }

  /// Indicator values (one per group member) for `category` of group `g`.
  std::vector<double> encode_category(std::size_t g, std::size_t category) const {
    const auto& grp = groups_.at(g);
    if (category >= grp.n_categories())
      throw ParameterError("category " + std::to_string(category) + " out of range for group " + grp.id);
    std::vector<double> out(grp.members.size(), 0.0);
    const std::size_t hot = grp.drop_one ? category : category + 1;
    if (hot > 0) out[hot - 1] = 1.0;
    return out;
  }

  /// Category index encoded in `row` for group `g`, or nullopt when the
  /// indicators do not form a valid code.
  std::optional<std::size_t> decode_category(std::size_t g, std::span<const double> row) const {
    const auto& grp = groups_.at(g);
    std::optional<std::size_t> hot;
    for (std::size_t i = 0; i < grp.members.size(); ++i) {
      const double v = row[grp.members[i]];
      if (v == 1.0) {
        if (hot) return std::nullopt;
        hot = i;
      } else if (v != 0.0) {
        return std::nullopt;
      }
    }
    if (!hot) {
      if (grp.drop_one) return 0;
      return std::nullopt;
    }
    return grp.drop_one ? *hot + 1 : *hot;
  }

  /// Copy with the given columns removed. Only continuous columns may be
  /// removed; omitting a polytope member throws ParameterError.
  FeatureSchema without_columns(const std::set<std::size_t>& omit) const {
    std::vector<long> remap(columns_.size(), -1);
    std::vector<ColumnSpec> cols;
    for (std::size_t j = 0; j < columns_.size(); ++j) {
      if (omit.count(j)) {
        if (!columns_[j].is_continuous())
          throw ParameterError("unsupported omission: column '" + columns_[j].name + "' belongs to polytope group " +
                               columns_[j].group_id);
        continue;
      }
      remap[j] = static_cast<long>(cols.size());
      cols.push_back(columns_[j]);
    }
    for (auto j : omit)
      if (j >= columns_.size()) throw ParameterError("omitted column index out of range: " + std::to_string(j));
    std::vector<PolytopeGroup> groups = groups_;
    for (auto& g : groups)
      for (auto& m : g.members) m = static_cast<std::size_t>(remap[m]);
    return FeatureSchema(std::move(cols), std::move(groups));
  }

  nlohmann::json to_json() const {
    nlohmann::json cols = nlohmann::json::array();
    for (const auto& c : columns_) {
      nlohmann::json jc{{"name", c.name}};
      if (c.is_continuous()) {
        jc["kind"] = "continuous";
        if (c.bounds) jc["bounds"] = {c.bounds->lo, c.bounds->hi};
      } else {
        jc["kind"] = "categorical_indicator";
        jc["group"] = c.group_id;
      }
      cols.push_back(std::move(jc));
    }
    nlohmann::json groups = nlohmann::json::array();
    for (const auto& g : groups_) groups.push_back({{"id", g.id}, {"members", g.members}, {"drop_one", g.drop_one}});
    return {{"columns", cols}, {"groups", groups}};
  }

  static FeatureSchema from_json(const nlohmann::json& j) {
    std::vector<ColumnSpec> cols;
    for (const auto& jc : j.at("columns")) {
      const auto kind = jc.at("kind").get<std::string>();
      if (kind == "continuous") {
        std::optional<Bounds> b;
        if (jc.contains("bounds")) b = Bounds{jc["bounds"][0].get<double>(), jc["bounds"][1].get<double>()};
        cols.push_back(ColumnSpec::continuous(jc.at("name").get<std::string>(), b));
      } else if (kind == "categorical_indicator") {
        cols.push_back(ColumnSpec::indicator(jc.at("name").get<std::string>(), jc.at("group").get<std::string>()));
      } else {
        throw ParameterError("unknown column kind: " + kind);
      }
    }
    std::vector<PolytopeGroup> groups;
    for (const auto& jg : j.at("groups"))
      groups.push_back({jg.at("id").get<std::string>(), jg.at("members").get<std::vector<std::size_t>>(),
                        jg.at("drop_one").get<bool>()});
    return FeatureSchema(std::move(cols), std::move(groups));
  }

  friend bool operator==(const FeatureSchema& a, const FeatureSchema& b) { return a.to_json() == b.to_json(); }

 private:
  void rebuild() {
    group_of_.assign(columns_.size(), -1);
    std::unordered_set<std::string> names;
    for (const auto& c : columns_) {
      if (!names.insert(c.name).second) throw ParameterError("duplicate column name: " + c.name);
      if (c.bounds && !(c.bounds->lo < c.bounds->hi))
        throw ParameterError("column '" + c.name + "': bounds must satisfy lo < hi");
    }
    for (std::size_t g = 0; g < groups_.size(); ++g) {
      const auto& grp = groups_[g];
      if (grp.members.empty()) throw ParameterError("polytope group '" + grp.id + "' has no members");
      if (!grp.drop_one && grp.members.size() < 2)
        throw ParameterError("full polytope group '" + grp.id + "' needs at least two members");
      for (auto m : grp.members) {
        if (m >= columns_.size()) throw ParameterError("group '" + grp.id + "' references missing column");
        if (group_of_[m] >= 0) throw ParameterError("column '" + columns_[m].name + "' appears in two groups");
        if (columns_[m].is_continuous() || columns_[m].group_id != grp.id)
          throw ParameterError("column '" + columns_[m].name + "' is not an indicator of group '" + grp.id + "'");
        group_of_[m] = static_cast<long>(g);
      }
    }
    continuous_.clear();
    categorical_.clear();
    for (std::size_t j = 0; j < columns_.size(); ++j) {
      if (columns_[j].is_continuous()) {
        continuous_.push_back(j);
      } else {
        if (group_of_[j] < 0) throw ParameterError("indicator column '" + columns_[j].name + "' has no group");
        categorical_.push_back(j);
      }
    }
  }

  std::vector<ColumnSpec> columns_;
  std::vector<PolytopeGroup> groups_;
  std::vector<long> group_of_;
  std::vector<std::size_t> continuous_;
  std::vector<std::size_t> categorical_;
};

// ---------------------------------------------------------------------------
// Dataset
// ---------------------------------------------------------------------------

struct Dataset {
  Matrix x;                     // n x d, encoded
  std::vector<int> y;           // n labels in {0, 1}
  std::vector<InstanceId> ids;  // n stable identifiers
  FeatureSchema schema;

  std::size_t n() const { return static_cast<std::size_t>(x.rows()); }
  std::size_t d() const { return static_cast<std::size_t>(x.cols()); }

  Vector row(std::size_t i) const { return x.row(static_cast<Eigen::Index>(i)).transpose(); }

  Dataset subset(std::span<const std::size_t> rows) const {
    Dataset out;
    out.x.resize(static_cast<Eigen::Index>(rows.size()), x.cols());
    out.y.reserve(rows.size());
    out.ids.reserve(rows.size());
    for (std::size_t k = 0; k < rows.size(); ++k) {
      out.x.row(static_cast<Eigen::Index>(k)) = x.row(static_cast<Eigen::Index>(rows[k]));
      out.y.push_back(y[rows[k]]);
      out.ids.push_back(ids[rows[k]]);
    }
    out.schema = schema;
    return out;
  }

  // Rows whose id is in `wanted`, in dataset order.
  Dataset subset_by_ids(const std::unordered_set<InstanceId>& wanted) const {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < n(); ++i)
      if (wanted.count(ids[i])) rows.push_back(i);
    return subset(rows);
  }

  double positive_fraction() const {
    if (y.empty()) return 0.0;
    std::size_t pos = 0;
    for (int v : y) pos += (v == 1);
    return static_cast<double>(pos) / static_cast<double>(y.size());
  }
};

/// A single invariant violation found by validate_dataset / validate_point.
struct Violation {
  enum class Kind { shape, label, duplicate_id, non_finite, indicator_value, group_sum, bounds };
  Kind kind;
  std::optional<std::size_t> row;
  std::optional<std::size_t> column;
  std::string group;
  std::string message;
};

using ValidationReport = std::vector<Violation>;

namespace detail {

inline void check_point(const FeatureSchema& schema, std::span<const double> v, std::optional<std::size_t> row,
                        ValidationReport& out) {
  const auto where = [&] { return row ? "row " + std::to_string(*row) + ": " : std::string{}; };
  for (std::size_t j = 0; j < v.size(); ++j) {
    const auto& col = schema.column(j);
    if (!std::isfinite(v[j])) {
      out.push_back({Violation::Kind::non_finite, row, j, {}, where() + "non-finite value in column '" + col.name + "'"});
      continue;
    }
    if (col.is_continuous()) {
      if (col.bounds && (v[j] < col.bounds->lo || v[j] > col.bounds->hi))
        out.push_back({Violation::Kind::bounds, row, j, {}, where() + "column '" + col.name + "' outside bounds"});
    } else if (v[j] != 0.0 && v[j] != 1.0) {
      out.push_back({Violation::Kind::indicator_value, row, j, col.group_id,
                     where() + "indicator column '" + col.name + "' holds " + csv::format(v[j])});
    }
  }
  for (const auto& g : schema.groups()) {
    double sum = 0.0;
    for (auto m : g.members) sum += v[m];
    const bool ok = g.drop_one ? (sum == 0.0 || sum == 1.0) : sum == 1.0;
    if (!ok)
      out.push_back({Violation::Kind::group_sum, row, std::nullopt, g.id,
                     where() + "group '" + g.id + "' sums to " + csv::format(sum)});
  }
}

}  // namespace detail

// Schema-level checks for a single encoded point (bounds, indicator values,
// group sums).
inline ValidationReport validate_point(const FeatureSchema& schema, std::span<const double> v) {
  ValidationReport out;
  if (v.size() != schema.size()) {
    out.push_back({Violation::Kind::shape, std::nullopt, std::nullopt, {}, "point dimension does not match schema"});
    return out;
  }
  detail::check_point(schema, v, std::nullopt, out);
  return out;
}

inline ValidationReport validate_point(const FeatureSchema& schema, const Vector& v) {
  return validate_point(schema, std::span<const double>(v.data(), static_cast<std::size_t>(v.size())));
}

/// Lists every violated dataset invariant. Never throws; an empty report
/// means the dataset is valid.
inline ValidationReport validate_dataset(const Dataset& d) {
  ValidationReport out;
  const auto n = d.n();
  if (d.d() != d.schema.size())
    out.push_back({Violation::Kind::shape, std::nullopt, std::nullopt, {},
                   "matrix has " + std::to_string(d.d()) + " columns, schema has " + std::to_string(d.schema.size())});
  if (d.y.size() != n || d.ids.size() != n)
    out.push_back({Violation::Kind::shape, std::nullopt, std::nullopt, {}, "label/id count does not match row count"});
  if (!out.empty()) return out;

  std::unordered_set<InstanceId> seen;
  // Row-major copy so each row is a contiguous span.
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = d.x;
  for (std::size_t i = 0; i < n; ++i) {
    if (d.y[i] != 0 && d.y[i] != 1)
      out.push_back({Violation::Kind::label, i, std::nullopt, {}, "row " + std::to_string(i) + ": label not in {0,1}"});
    if (!seen.insert(d.ids[i]).second)
      out.push_back({Violation::Kind::duplicate_id, i, std::nullopt, {},
                     "row " + std::to_string(i) + ": duplicate id " + std::to_string(d.ids[i])});
    detail::check_point(d.schema, std::span<const double>(rm.row(static_cast<Eigen::Index>(i)).data(), d.d()), i, out);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Noise and weights
// ---------------------------------------------------------------------------

enum class NoiseKind { gaussian, student_t };

struct NoiseSpec {
  int level = 0;
  double feature_sigma = 0.0;
  double label_flip_rate = 0.0;
  NoiseKind noise_kind = NoiseKind::gaussian;
  double df = 3.0;  // student_t only
  std::set<std::size_t> omitted_columns;

  void validate() const {
    if (feature_sigma < 0.0 || !std::isfinite(feature_sigma)) throw ParameterError("feature_sigma must be >= 0");
    if (label_flip_rate < 0.0 || label_flip_rate > 1.0) throw ParameterError("label_flip_rate must lie in [0,1]");
    if (noise_kind == NoiseKind::student_t && !(df > 0.0)) throw ParameterError("student_t df must be > 0");
    if (level == 0 && (feature_sigma != 0.0 || label_flip_rate != 0.0 || !omitted_columns.empty()))
      throw ParameterError("noise level 0 must be the clean specification");
  }
};

struct WeightVector {
  Vector w;
  std::string reference_split_id;
  std::vector<std::size_t> fallback_columns;  // columns that used the degenerate-scale fallback

  std::size_t size() const { return static_cast<std::size_t>(w.size()); }
};

// ---------------------------------------------------------------------------
// Counterfactuals and pairing
// ---------------------------------------------------------------------------

struct Counterfactual {
  InstanceId id = 0;
  Vector original;
  Vector point;
  std::string method;
  bool valid = false;
  double cost = 0.0;
  std::size_t evaluations = 0;
  std::string reason;        // why the attempt is invalid, when it is
  int original_class = -1;   // predicted class of `original`, for downstream filtering
};

struct CounterfactualPair {
  InstanceId id;
  const Counterfactual* base;
  const Counterfactual* noisy;
};

/// Pairs valid counterfactuals by instance id. Only ids that are valid in
/// both lists are returned, ordered by id. The pointers refer into the inputs.
inline std::vector<CounterfactualPair> pair_instances(const std::vector<Counterfactual>& base,
                                                      const std::vector<Counterfactual>& noisy) {
  std::map<InstanceId, const Counterfactual*> base_valid;
  for (const auto& c : base)
    if (c.valid) base_valid.emplace(c.id, &c);
  std::map<InstanceId, const Counterfactual*> noisy_valid;
  for (const auto& c : noisy)
    if (c.valid) noisy_valid.emplace(c.id, &c);
  std::vector<CounterfactualPair> out;
  for (const auto& [id, b] : base_valid) {
    auto it = noisy_valid.find(id);
    if (it != noisy_valid.end()) out.push_back({id, b, it->second});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

inline constexpr const char* kLabelColumn = "__label";
inline constexpr const char* kIdColumn = "__id";

inline void write_dataset_csv(std::ostream& out, const Dataset& d) {
  csv::Row header;
  for (const auto& c : d.schema.columns()) header.push_back(c.name);
  header.emplace_back(kLabelColumn);
  header.emplace_back(kIdColumn);
  csv::write_row(out, header);
  for (std::size_t i = 0; i < d.n(); ++i) {
    csv::Row row;
    for (std::size_t j = 0; j < d.d(); ++j) row.push_back(csv::format(d.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))));
    row.push_back(std::to_string(d.y[i]));
    row.push_back(std::to_string(d.ids[i]));
    csv::write_row(out, row);
  }
}

inline Dataset read_dataset_csv(std::istream& in, const FeatureSchema& schema) {
  const auto rows = csv::read_all(in);
  if (rows.empty()) throw IoError("dataset csv: missing header");
  const auto& header = rows.front();
  if (header.size() != schema.size() + 2) throw IoError("dataset csv: header does not match schema");
  for (std::size_t j = 0; j < schema.size(); ++j)
    if (header[j] != schema.column(j).name) throw IoError("dataset csv: column " + std::to_string(j) + " is '" + header[j] + "', schema expects '" + schema.column(j).name + "'");
  if (header[schema.size()] != kLabelColumn || header[schema.size() + 1] != kIdColumn)
    throw IoError("dataset csv: trailing __label,__id columns missing");
  Dataset d;
  d.schema = schema;
  const auto n = rows.size() - 1;
  d.x.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(schema.size()));
  for (std::size_t i = 0; i < n; ++i) {
    const auto& r = rows[i + 1];
    if (r.size() != header.size()) throw IoError("dataset csv: row " + std::to_string(i + 1) + " has wrong width");
    for (std::size_t j = 0; j < schema.size(); ++j) {
      auto v = csv::parse_double(r[j]);
      if (!v) throw IoError("dataset csv: row " + std::to_string(i + 1) + ", column '" + header[j] + "' is not numeric");
      d.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = *v;
    }
    d.y.push_back(std::stoi(r[schema.size()]));
    d.ids.push_back(std::stoull(r[schema.size() + 1]));
  }
  return d;
}

inline void save_dataset(const Dataset& d, const std::string& csv_path, const std::string& schema_path) {
  std::ofstream out(csv_path);
  if (!out) throw IoError("cannot write " + csv_path);
  write_dataset_csv(out, d);
  std::ofstream js(schema_path);
  if (!js) throw IoError("cannot write " + schema_path);
  js << d.schema.to_json().dump(2) << '\n';
}

inline Dataset load_dataset(const std::string& csv_path, const std::string& schema_path) {
  std::ifstream js(schema_path);
  if (!js) throw IoError("cannot open " + schema_path);
  const auto schema = FeatureSchema::from_json(nlohmann::json::parse(js));
  std::ifstream in(csv_path);
  if (!in) throw IoError("cannot open " + csv_path);
  return read_dataset_csv(in, schema);
}

}  // namespace cfrobust
