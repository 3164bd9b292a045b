#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <string>
#include <vector>

#include "cfrobust/core.hpp"
#include "cfrobust/numeric.hpp"
#include "cfrobust/rng.hpp"

namespace cfrobust {

/// Parameters of a synthetic mock dataset.
struct MockSpec {
  std::size_t n_samples = 3000;
  std::size_t n_features = 2;
  std::size_t n_informative = 2;
  std::size_t n_categorical = 0;
  std::size_t n_polytopes = 0;
  bool non_iid = false;
  bool missing_variables = false;
  double class_balance = 0.6;     // fraction of the negative (majority) class
  double class_separation = 2.5;  // distance between class means, in noise standard deviations
  std::size_t polytope_bins = 4;  // categories per multi-valued polytope
  std::uint64_t seed = 0;

  void validate() const {
    auto fail = [](const std::string& m) { throw ParameterError("MockSpec: " + m); };
    if (n_samples < 2) fail("n_samples must be >= 2");
    if (n_features == 0) fail("n_features must be >= 1");
    if (n_informative == 0) fail("n_informative must be >= 1");
    if (n_informative > n_features) fail("n_informative must be <= n_features");
    if (n_categorical > n_features) fail("n_categorical must be <= n_features");
    if (n_polytopes > n_categorical) fail("n_polytopes must be <= n_categorical");
    if (!(class_balance > 0.0 && class_balance < 1.0)) fail("class_balance must lie in (0,1)");
    if (!(class_separation > 0.0)) fail("class_separation must be > 0");
    if (polytope_bins < 3) fail("polytope_bins must be >= 3");
    if (missing_variables && n_categorical >= n_features) fail("missing_variables needs a continuous column to omit");
  }
};

namespace detail {

inline Vector random_unit(Rng& rng, std::size_t n) {
  Vector v(static_cast<Eigen::Index>(n));
  do {
    for (Eigen::Index j = 0; j < v.size(); ++j) v[j] = rng.normal();
  } while (v.norm() == 0.0);
  return v / v.norm();
}

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

inline constexpr std::uint64_t kLabelStream = 0x4c4142454cULL;  // "LABEL"

}  // namespace detail

/// Two Gaussian clusters with class-specific means on the informative
/// features; the remaining features are class-independent N(0,1). Every column
/// is standardized afterwards, so noise sigmas are in standardized units.
inline Dataset make_classification(const MockSpec& spec) {
  spec.validate();
  const auto n = spec.n_samples;
  const auto d = spec.n_features;

  Rng label_rng(stream_seed({spec.seed, 1}));
  const auto n_negative = static_cast<std::size_t>(std::llround(spec.class_balance * static_cast<double>(n)));
  std::vector<int> y(n, 1);
  std::fill(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(std::min(n_negative, n)), 0);
  detail::shuffle(y, label_rng);

  Rng geo_rng(stream_seed({spec.seed, 2}));
  const Vector direction = detail::random_unit(geo_rng, spec.n_informative);
  const Vector drift_direction = detail::random_unit(geo_rng, spec.n_informative);
  const double half_gap = 0.5 * spec.class_separation;

  Rng rng(stream_seed({spec.seed, 3}));
  Matrix x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    const double sign = y[i] == 1 ? 1.0 : -1.0;
    // Non-iid: cluster centers drift smoothly with the sample index.
    const double drift =
        spec.non_iid ? half_gap * std::sin(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n))
                     : 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const auto c = static_cast<Eigen::Index>(j);
      double v = rng.normal();
      if (j < spec.n_informative) v += sign * half_gap * direction[c] + drift * drift_direction[c];
      x(r, c) = v;
    }
  }
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    const double m = x.col(c).mean();
    x.col(c).array() -= m;
    const double sd = std::sqrt(x.col(c).squaredNorm() / static_cast<double>(n));
    if (sd > 0.0) x.col(c) /= sd;
  }

  Dataset out;
  out.x = std::move(x);
  out.y = std::move(y);
  out.ids.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.ids[i] = i;
  out.schema = FeatureSchema::all_continuous(d);
  return out;
}

// ---------------------------------------------------------------------------
// Discretization into polytopes
// ---------------------------------------------------------------------------

/// Quantile bin edges recorded for one discretized column, reusable on noisy
/// copies of the latent data.
struct BinEdges {
  std::string source;         // name of the continuous column that was replaced
  std::vector<double> edges;  // n_bins - 1 strictly increasing cut points

  std::size_t n_bins() const { return edges.size() + 1; }
  // Bin of v: number of edges strictly below it (bin 0 is the dropped reference).
  std::size_t bin_of(double v) const {
    return static_cast<std::size_t>(std::lower_bound(edges.begin(), edges.end(), v) - edges.begin());
  }
};

struct Discretized {
  Dataset data;
  std::vector<BinEdges> edges;
};

namespace detail {

inline std::string bin_column_name(const std::string& source, std::size_t bin) {
  return source + "=b" + std::to_string(bin);
}

// Replaces continuous columns named in `plans` with drop-one indicator groups.
inline Dataset replace_with_bins(const Dataset& d, const std::vector<BinEdges>& plans) {
  std::vector<const BinEdges*> plan_of(d.d(), nullptr);
  for (const auto& p : plans) {
    const auto j = d.schema.index_of(p.source);
    if (!j) throw ParameterError("discretization: column '" + p.source + "' not found");
    if (!d.schema.column(*j).is_continuous())
      throw ParameterError("discretization: column '" + p.source + "' is not continuous");
    plan_of[*j] = &p;
  }

  std::vector<ColumnSpec> cols;
  std::vector<PolytopeGroup> groups;
  // First pass: layout.
  std::vector<std::size_t> new_index(d.d());
  for (std::size_t j = 0; j < d.d(); ++j) {
    new_index[j] = cols.size();
    if (plan_of[j]) {
      PolytopeGroup g{plan_of[j]->source, {}, true};
      for (std::size_t b = 1; b < plan_of[j]->n_bins(); ++b) {
        g.members.push_back(cols.size());
        cols.push_back(ColumnSpec::indicator(bin_column_name(plan_of[j]->source, b), plan_of[j]->source));
      }
      groups.push_back(std::move(g));
    } else {
      cols.push_back(d.schema.column(j));
    }
  }
  for (const auto& g : d.schema.groups()) {
    PolytopeGroup ng = g;
    for (auto& m : ng.members) m = new_index[m];
    groups.push_back(std::move(ng));
  }
  std::stable_sort(groups.begin(), groups.end(),
                   [](const PolytopeGroup& a, const PolytopeGroup& b) { return a.members.front() < b.members.front(); });

  Dataset out;
  out.y = d.y;
  out.ids = d.ids;
  out.schema = FeatureSchema(std::move(cols), std::move(groups));
  out.x = Matrix::Zero(d.x.rows(), static_cast<Eigen::Index>(out.schema.size()));
  for (std::size_t j = 0; j < d.d(); ++j) {
    const auto src = static_cast<Eigen::Index>(j);
    const auto dst = static_cast<Eigen::Index>(new_index[j]);
    if (!plan_of[j]) {
      out.x.col(dst) = d.x.col(src);
      continue;
    }
    for (Eigen::Index i = 0; i < d.x.rows(); ++i) {
      const auto bin = plan_of[j]->bin_of(d.x(i, src));
      if (bin > 0) out.x(i, dst + static_cast<Eigen::Index>(bin) - 1) = 1.0;
    }
  }
  return out;
}

}  // namespace detail

/// Replaces each selected continuous column by a drop-one indicator group with
/// `n_bins` categories. Bin edges are the k/n_bins quantiles of the input
/// column and are returned for reuse on noisy copies.
inline Discretized discretize_to_polytopes(const Dataset& d, const std::vector<std::size_t>& columns,
                                           std::size_t n_bins) {
  if (n_bins < 2) throw ParameterError("discretize_to_polytopes: n_bins must be >= 2");
  std::vector<BinEdges> plans;
  for (auto j : columns) {
    if (j >= d.d()) throw ParameterError("discretize_to_polytopes: column index out of range");
    const auto& spec = d.schema.column(j);
    if (!spec.is_continuous())
      throw ParameterError("discretize_to_polytopes: column '" + spec.name + "' is not continuous");
    std::vector<double> values(d.n());
    for (std::size_t i = 0; i < d.n(); ++i) values[i] = d.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    std::sort(values.begin(), values.end());
    const auto distinct = static_cast<std::size_t>(std::unique(values.begin(), values.end()) - values.begin());
    if (distinct < n_bins)
      throw DataError("degenerate binning: column '" + spec.name + "' has " + std::to_string(distinct) +
                      " distinct values, fewer than " + std::to_string(n_bins) + " bins");
    values.resize(d.n());
    for (std::size_t i = 0; i < d.n(); ++i) values[i] = d.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    std::sort(values.begin(), values.end());
    BinEdges be{spec.name, {}};
    for (std::size_t k = 1; k < n_bins; ++k)
      be.edges.push_back(quantile_sorted(values, static_cast<double>(k) / static_cast<double>(n_bins)));
    for (std::size_t k = 1; k < be.edges.size(); ++k)
      if (!(be.edges[k] > be.edges[k - 1]))
        throw DataError("degenerate binning: column '" + spec.name + "' has repeated quantile edges");
    plans.push_back(std::move(be));
  }
  return {detail::replace_with_bins(d, plans), plans};
}

/// Re-applies recorded bin edges to a (possibly noisy) copy of the latent data.
inline Dataset apply_discretization(const Dataset& latent, const std::vector<BinEdges>& plans) {
  return detail::replace_with_bins(latent, plans);
}

// ---------------------------------------------------------------------------
// Noise injection
// ---------------------------------------------------------------------------

/// Removes the given continuous columns. Throws ParameterError for an attempt
/// to omit a polytope member.
inline Dataset omit_columns(const Dataset& d, const std::set<std::size_t>& omit) {
  if (omit.empty()) return d;
  Dataset out;
  out.schema = d.schema.without_columns(omit);
  out.y = d.y;
  out.ids = d.ids;
  out.x.resize(d.x.rows(), static_cast<Eigen::Index>(out.schema.size()));
  Eigen::Index k = 0;
  for (std::size_t j = 0; j < d.d(); ++j)
    if (!omit.count(j)) out.x.col(k++) = d.x.col(static_cast<Eigen::Index>(j));
  return out;
}

namespace detail {

template <typename Draw>
void add_feature_noise(Dataset& d, int level, std::uint64_t seed, Draw draw) {
  for (auto j : d.schema.continuous_indices()) {
    const auto col_key = fnv1a(d.schema.column(j).name);
    for (std::size_t i = 0; i < d.n(); ++i) {
      Rng rng(stream_seed({seed, static_cast<std::uint64_t>(level), col_key, d.ids[i]}));
      d.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) += draw(rng);
    }
  }
}

inline void flip_labels(Dataset& d, int level, double rate, std::uint64_t seed) {
  if (rate <= 0.0) return;
  for (std::size_t i = 0; i < d.n(); ++i) {
    Rng rng(stream_seed({seed, static_cast<std::uint64_t>(level), kLabelStream, d.ids[i]}));
    if (rng.uniform() < rate) d.y[i] = 1 - d.y[i];
  }
}

}  // namespace detail

/// Aleatoric noise: additive N(0, sigma^2) on continuous columns and independent
/// label flips. Draws are keyed by (seed, level, column name, instance id).
inline Dataset inject_aleatoric(const Dataset& d, const NoiseSpec& spec, std::uint64_t seed) {
  if (spec.noise_kind != NoiseKind::gaussian) throw ParameterError("inject_aleatoric: noise_kind must be gaussian");
  if (!spec.omitted_columns.empty()) throw ParameterError("inject_aleatoric: omitted_columns must be empty");
  if (spec.feature_sigma < 0.0) throw ParameterError("inject_aleatoric: feature_sigma must be >= 0");
  Dataset out = d;
  if (spec.feature_sigma > 0.0) {
    const double sigma = spec.feature_sigma;
    detail::add_feature_noise(out, spec.level, seed, [sigma](Rng& r) { return sigma * r.normal(); });
  }
  detail::flip_labels(out, spec.level, spec.label_flip_rate, seed);
  return out;
}

/// Epistemic noise: heavy-tailed Student-t feature noise (rescaled to unit
/// variance when df > 2, then multiplied by feature_sigma) and/or omission of
/// continuous columns. Label flips follow label_flip_rate as in the aleatoric case.
inline Dataset inject_epistemic(const Dataset& d, const NoiseSpec& spec, std::uint64_t seed) {
  if (spec.noise_kind != NoiseKind::student_t && spec.omitted_columns.empty())
    throw ParameterError("inject_epistemic: needs student_t noise or omitted columns");
  for (auto j : spec.omitted_columns) {
    if (j >= d.d()) throw ParameterError("inject_epistemic: omitted column index out of range");
    if (!d.schema.column(j).is_continuous())
      throw ParameterError("unsupported omission: column '" + d.schema.column(j).name + "' belongs to a polytope group");
  }
  Dataset out = d;
  if (spec.feature_sigma > 0.0) {
    const double sigma = spec.feature_sigma;
    if (spec.noise_kind == NoiseKind::student_t) {
      const double df = spec.df;
      const double unit = df > 2.0 ? std::sqrt((df - 2.0) / df) : 1.0;
      detail::add_feature_noise(out, spec.level, seed, [=](Rng& r) { return sigma * unit * r.student_t(df); });
    } else {
      detail::add_feature_noise(out, spec.level, seed, [sigma](Rng& r) { return sigma * r.normal(); });
    }
  }
  detail::flip_labels(out, spec.level, spec.label_flip_rate, seed);
  return omit_columns(out, spec.omitted_columns);
}

/// Dispatches to inject_aleatoric or inject_epistemic.
inline Dataset inject_noise(const Dataset& d, const NoiseSpec& spec, std::uint64_t seed) {
  if (spec.noise_kind == NoiseKind::student_t || !spec.omitted_columns.empty()) return inject_epistemic(d, spec, seed);
  return inject_aleatoric(d, spec, seed);
}

/// Linear schedule from the clean level 0 to (max_sigma, max_flip).
inline std::vector<NoiseSpec> build_noise_schedule(int n_levels, double max_sigma, double max_flip,
                                                   NoiseKind kind = NoiseKind::gaussian, double df = 3.0) {
  if (n_levels < 2) throw ParameterError("build_noise_schedule: n_levels must be >= 2");
  if (max_sigma < 0.0) throw ParameterError("build_noise_schedule: max_sigma must be >= 0");
  if (max_flip < 0.0 || max_flip > 1.0) throw ParameterError("build_noise_schedule: max_flip must lie in [0,1]");
  std::vector<NoiseSpec> out;
  for (int l = 0; l < n_levels; ++l) {
    const double t = static_cast<double>(l) / static_cast<double>(n_levels - 1);
    NoiseSpec s;
    s.level = l;
    s.feature_sigma = max_sigma * t;
    s.label_flip_rate = max_flip * t;
    s.noise_kind = l == 0 ? NoiseKind::gaussian : kind;
    s.df = df;
    out.push_back(s);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Mock datasets
// ---------------------------------------------------------------------------

/// Latent continuous data plus the discretization that turns it into the
/// encoded mock. Noise is injected into `latent` and re-encoded with the
/// stored edges, so categorical flips arise near bin boundaries.
struct MockData {
  Dataset latent;
  std::vector<BinEdges> plans;
  Dataset clean;  // apply_discretization(latent, plans)
  std::vector<std::string> omittable;  // continuous columns eligible for omission, in order
};

/// The last n_categorical features become categorical: the first n_polytopes
/// of those get `polytope_bins` categories, the rest are binary.
inline MockData make_mock(const MockSpec& spec) {
  MockData m;
  m.latent = make_classification(spec);
  const auto first_cat = spec.n_features - spec.n_categorical;
  std::vector<std::size_t> multi, binary;
  for (std::size_t k = 0; k < spec.n_categorical; ++k)
    (k < spec.n_polytopes ? multi : binary).push_back(first_cat + k);
  if (!multi.empty()) {
    auto r = discretize_to_polytopes(m.latent, multi, spec.polytope_bins);
    m.plans.insert(m.plans.end(), r.edges.begin(), r.edges.end());
  }
  if (!binary.empty()) {
    auto r = discretize_to_polytopes(m.latent, binary, 2);
    m.plans.insert(m.plans.end(), r.edges.begin(), r.edges.end());
  }
  m.clean = apply_discretization(m.latent, m.plans);
  for (std::size_t j = 0; j < first_cat; ++j) m.omittable.push_back(m.latent.schema.column(j).name);
  return m;
}

/// The six synthetic configurations used in the experiments.
inline MockSpec mock_preset(int which, std::uint64_t seed = 0) {
  MockSpec s;
  s.seed = seed;
  switch (which) {
    case 1: s.n_samples = 3000, s.n_features = 2, s.n_informative = 2; break;
    case 2: s.n_samples = 3000, s.n_features = 12, s.n_informative = 10; break;
    case 3: s.n_samples = 3000, s.n_features = 10, s.n_informative = 10, s.n_categorical = 5, s.n_polytopes = 2; break;
    case 4: s.n_samples = 5000, s.n_features = 40, s.n_informative = 40, s.n_categorical = 20, s.n_polytopes = 10; break;
    case 5:
      s.n_samples = 3000, s.n_features = 10, s.n_informative = 10, s.n_categorical = 5, s.n_polytopes = 2;
      s.non_iid = true;
      break;
    case 6:
      s.n_samples = 3000, s.n_features = 7, s.n_informative = 7, s.n_categorical = 4, s.n_polytopes = 1;
      s.missing_variables = true;
      break;
    default: throw ParameterError("unknown mock preset " + std::to_string(which));
  }
  return s;
}

}  // namespace cfrobust
