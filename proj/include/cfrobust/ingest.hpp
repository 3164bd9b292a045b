#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "cfrobust/core.hpp"
#include "cfrobust/csv.hpp"
#include "cfrobust/datagen.hpp"
#include "cfrobust/numeric.hpp"
#include "cfrobust/rng.hpp"

namespace cfrobust {

struct IngestConfig {
  std::string path;
  std::string target_column;
  std::string positive_label;
  std::vector<std::string> categorical_columns;
  std::vector<std::string> drop_columns;
  std::size_t min_category_frequency = 0;
  double subsample_fraction = 1.0;
  std::uint64_t seed = 0;
  bool standardize = true;

  void validate() const {
    if (path.empty()) throw ParameterError("IngestConfig: path is empty");
    if (target_column.empty()) throw ParameterError("IngestConfig: target_column is empty");
    if (!(subsample_fraction > 0.0 && subsample_fraction <= 1.0))
      throw ParameterError("IngestConfig: subsample_fraction must lie in (0,1]");
  }
};

inline constexpr const char* kOtherCategory = "__other";
inline constexpr const char* kMissingCategory = "__missing";

inline bool is_missing_token(const std::string& s) { return s.empty() || s == "NA" || s == "?" || s == "NaN"; }

struct RawColumn {
  std::string name;
  bool numeric = true;
  std::vector<double> values;        // numeric; NaN marks a missing cell
  std::vector<std::string> strings;  // non-numeric (categorical and target)
};

struct RawTable {
  std::vector<RawColumn> columns;
  std::size_t rows = 0;

  const RawColumn& column(const std::string& name) const {
    for (const auto& c : columns)
      if (c.name == name) return c;
    throw DataError("no column named '" + name + "'");
  }
};

/// Reads a headered CSV. The target and the configured categorical columns
/// are kept as strings, every other column must parse as a number or be a
/// missing token.
inline RawTable load_csv(const IngestConfig& cfg) {
  cfg.validate();
  if (!std::filesystem::exists(cfg.path)) throw IoError("no such file: " + cfg.path);
  const auto rows = csv::read_file(cfg.path);
  if (rows.empty()) throw IoError(cfg.path + ": missing header");
  const auto& header = rows.front();
  std::set<std::string> as_string(cfg.categorical_columns.begin(), cfg.categorical_columns.end());
  as_string.insert(cfg.target_column);
  const std::set<std::string> dropped(cfg.drop_columns.begin(), cfg.drop_columns.end());
  if (std::find(header.begin(), header.end(), cfg.target_column) == header.end())
    throw DataError(cfg.path + ": target column '" + cfg.target_column + "' not found");
  for (const auto& c : cfg.categorical_columns)
    if (std::find(header.begin(), header.end(), c) == header.end())
      throw DataError(cfg.path + ": categorical column '" + c + "' not found");

  RawTable t;
  std::vector<std::size_t> source;
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (dropped.count(header[j])) continue;
    RawColumn c;
    c.name = header[j];
    c.numeric = !as_string.count(header[j]);
    t.columns.push_back(std::move(c));
    source.push_back(j);
  }
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.size() == 1 && csv::trim(r[0]).empty()) continue;  // blank line
    if (r.size() != header.size())
      throw DataError(cfg.path + ": row " + std::to_string(i) + " has " + std::to_string(r.size()) + " cells, header has " +
                      std::to_string(header.size()));
    for (std::size_t k = 0; k < t.columns.size(); ++k) {
      auto& c = t.columns[k];
      const std::string cell(csv::trim(r[source[k]]));
      if (!c.numeric) {
        c.strings.push_back(is_missing_token(cell) ? std::string() : cell);
        continue;
      }
      if (is_missing_token(cell)) {
        c.values.push_back(std::numeric_limits<double>::quiet_NaN());
        continue;
      }
      const auto v = csv::parse_double(cell);
      if (!v)
        throw DataError(cfg.path + ": row " + std::to_string(i) + ", column '" + c.name + "': cannot parse '" + cell +
                        "' as a number");
      c.values.push_back(*v);
    }
    ++t.rows;
  }
  return t;
}

/// Encodes a raw table: rows with a missing target are dropped, a seeded
/// subsample of floor(fraction * n) rows is kept, rare categories merge into
/// "__other", categoricals become full one-hot groups, continuous columns are
/// median-imputed and optionally z-scored. Instance ids are data-row indices
/// of the source file.
inline Dataset preprocess(const RawTable& raw, const IngestConfig& cfg) {
  cfg.validate();
  const auto& target = raw.column(cfg.target_column);
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < raw.rows; ++i)
    if (!target.strings[i].empty()) keep.push_back(i);
  if (cfg.subsample_fraction < 1.0) {
    const auto k = static_cast<std::size_t>(std::floor(cfg.subsample_fraction * static_cast<double>(keep.size())));
    Rng rng(stream_seed({cfg.seed, 0x5355425355ULL}));
    for (std::size_t i = keep.size(); i > 1; --i) std::swap(keep[i - 1], keep[rng.below(i)]);
    keep.resize(k);
    std::sort(keep.begin(), keep.end());
  }
  if (keep.empty()) throw DataError("preprocess: no rows left");

  std::vector<ColumnSpec> specs;
  std::vector<PolytopeGroup> groups;
  std::vector<std::vector<double>> cols;
  const std::set<std::string> cats(cfg.categorical_columns.begin(), cfg.categorical_columns.end());
  for (const auto& c : raw.columns) {
    if (c.name == cfg.target_column) continue;
    if (!cats.count(c.name)) {
      std::vector<double> v, present;
      for (auto i : keep) {
        v.push_back(c.values[i]);
        if (!std::isnan(c.values[i])) present.push_back(c.values[i]);
      }
      if (present.empty()) throw DataError("preprocess: column '" + c.name + "' has no values");
      const double med = median(present);
      for (auto& x : v)
        if (std::isnan(x)) x = med;
      if (cfg.standardize) {
        const double m = mean(v);
        const double sd = population_sd(v);
        for (auto& x : v) x = sd > 0.0 ? (x - m) / sd : x - m;
      }
      specs.push_back(ColumnSpec::continuous(c.name));
      cols.push_back(std::move(v));
      continue;
    }
    std::vector<std::string> v;
    std::map<std::string, std::size_t> freq;
    for (auto i : keep) {
      v.push_back(c.strings[i].empty() ? std::string(kMissingCategory) : c.strings[i]);
      ++freq[v.back()];
    }
    for (auto& s : v)
      if (freq[s] < cfg.min_category_frequency) s = kOtherCategory;
    std::set<std::string> levels(v.begin(), v.end());
    if (levels.size() < 2)
      throw DataError("preprocess: categorical column '" + c.name + "' collapses to a single category");
    PolytopeGroup g;
    g.id = c.name;
    g.drop_one = false;
    for (const auto& level : levels) {
      g.members.push_back(specs.size());
      specs.push_back(ColumnSpec::indicator(c.name + "=" + level, c.name));
      std::vector<double> ind(v.size());
      for (std::size_t i = 0; i < v.size(); ++i) ind[i] = v[i] == level ? 1.0 : 0.0;
      cols.push_back(std::move(ind));
    }
    groups.push_back(std::move(g));
  }
  if (specs.empty()) throw DataError("preprocess: no feature columns");

  Dataset d;
  d.schema = FeatureSchema(std::move(specs), std::move(groups));
  d.x.resize(static_cast<Eigen::Index>(keep.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j)
    for (std::size_t i = 0; i < keep.size(); ++i) d.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = cols[j][i];
  for (auto i : keep) {
    d.y.push_back(target.strings[i] == cfg.positive_label ? 1 : 0);
    d.ids.push_back(i);
  }
  return d;
}

struct Split {
  Dataset train;
  Dataset test;
};

/// Stratified split with |test| = round(test_fraction * n). Per-class test
/// counts use largest-remainder allocation; every class present must appear
/// in both parts.
inline Split train_test_split(const Dataset& d, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ParameterError("train_test_split: test_fraction must lie in (0,1)");
  const auto n = d.n();
  const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n)));
  std::vector<std::size_t> by_class[2];
  for (std::size_t i = 0; i < n; ++i) by_class[d.y[i]].push_back(i);
  std::size_t take[2] = {0, 0};
  double rem[2] = {0.0, 0.0};
  std::size_t assigned = 0;
  for (int c = 0; c < 2; ++c) {
    const double exact = test_fraction * static_cast<double>(by_class[c].size());
    take[c] = static_cast<std::size_t>(std::floor(exact));
    rem[c] = exact - static_cast<double>(take[c]);
    assigned += take[c];
  }
  while (assigned < n_test) {
    const int c = rem[1] > rem[0] ? 1 : 0;
    ++take[c];
    rem[c] = -1.0;
    ++assigned;
  }
  for (int c = 0; c < 2; ++c) {
    if (by_class[c].empty()) continue;
    if (take[c] == 0 || take[c] >= by_class[c].size())
      throw DataError("train_test_split: class " + std::to_string(c) + " has too few rows (" +
                      std::to_string(by_class[c].size()) + ") to appear in both splits");
  }
  std::vector<bool> in_test(n, false);
  Rng rng(stream_seed({seed, 0x53504c4954ULL}));
  for (int c = 0; c < 2; ++c) {
    auto& idx = by_class[c];
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
    for (std::size_t k = 0; k < take[c]; ++k) in_test[idx[k]] = true;
  }
  std::vector<std::size_t> tr, te;
  for (std::size_t i = 0; i < n; ++i) (in_test[i] ? te : tr).push_back(i);
  return {d.subset(tr), d.subset(te)};
}

/// Replaces the category of each polytope group, per row with probability
/// `rate`, by one drawn uniformly from the group. Draws are keyed by
/// (seed, level, group id, instance id).
inline Dataset corrupt_categorical(const Dataset& d, double rate, int level, std::uint64_t seed) {
  if (rate < 0.0 || rate > 1.0) throw ParameterError("corrupt_categorical: rate must lie in [0,1]");
  Dataset out = d;
  if (rate == 0.0) return out;
  const auto& groups = d.schema.groups();
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const auto key = fnv1a("group:" + groups[g].id);
    for (std::size_t i = 0; i < d.n(); ++i) {
      Rng rng(stream_seed({seed, static_cast<std::uint64_t>(level), key, d.ids[i]}));
      if (rng.uniform() >= rate) continue;
      const auto vals = d.schema.encode_category(g, rng.below(groups[g].n_categories()));
      for (std::size_t k = 0; k < vals.size(); ++k)
        out.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(groups[g].members[k])) = vals[k];
    }
  }
  return out;
}

/// Noise for encoded real data: inject_noise on the continuous columns plus
/// categorical corruption at the level's label-flip rate.
inline Dataset inject_real_noise(const Dataset& d, const NoiseSpec& spec, std::uint64_t seed) {
  if (spec.level == 0) return d;
  return inject_noise(corrupt_categorical(d, spec.label_flip_rate, spec.level, seed), spec, seed);
}

}  // namespace cfrobust
