#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "cfrobust/core.hpp"
#include "cfrobust/numeric.hpp"
#include "cfrobust/rng.hpp"

namespace cfrobust {

/// Phi^{-1}(0.75), the consistency constant between MAD and sigma.
inline double normal_q75() {
  static const double q = normal_quantile(0.75);
  return q;
}

/// Per-column l1 weights estimated on a reference training split:
/// continuous j -> 1 / MAD_j, indicator j -> 1 / (Phi^{-1}(0.75) sigma_j) with
/// sigma_j the population standard deviation.
///
/// Degenerate columns: a continuous column with MAD = 0 but sigma > 0 uses the
/// indicator formula; any column with sigma = 0 uses 1 / range, or 1.0 when the
/// range is zero too. Such columns are listed in fallback_columns.
inline WeightVector feature_weights(const Dataset& train, std::string reference_split_id = "level0/train") {
  if (train.n() == 0) throw DataError("feature_weights: empty training data");
  WeightVector out;
  out.reference_split_id = std::move(reference_split_id);
  out.w.resize(static_cast<Eigen::Index>(train.d()));
  std::vector<double> col(train.n());
  for (std::size_t j = 0; j < train.d(); ++j) {
    for (std::size_t i = 0; i < train.n(); ++i) col[i] = train.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    const double sd = population_sd(col);
    double w = 0.0;
    bool fallback = false;
    if (train.schema.column(j).is_continuous()) {
      const double med = median(col);
      std::vector<double> dev(col.size());
      for (std::size_t i = 0; i < col.size(); ++i) dev[i] = std::abs(col[i] - med);
      const double mad = median(std::move(dev));
      if (mad > 0.0) {
        w = 1.0 / mad;
      } else {
        fallback = true;
        if (sd > 0.0) w = 1.0 / (normal_q75() * sd);
      }
    } else if (sd > 0.0) {
      w = 1.0 / (normal_q75() * sd);
    } else {
      fallback = true;
    }
    if (w == 0.0) {
      const auto [lo, hi] = std::minmax_element(col.begin(), col.end());
      const double range = *hi - *lo;
      w = range > 0.0 ? 1.0 / range : 1.0;
    }
    out.w[static_cast<Eigen::Index>(j)] = w;
    if (fallback) out.fallback_columns.push_back(j);
  }
  return out;
}

/// sum_j w_j |a_j - b_j|
inline double weighted_l1(const Vector& a, const Vector& b, const WeightVector& w) {
  if (a.size() != b.size() || a.size() != w.w.size())
    throw ParameterError("weighted_l1: dimension mismatch (" + std::to_string(a.size()) + ", " +
                         std::to_string(b.size()) + ", " + std::to_string(w.w.size()) + ")");
  return (w.w.array() * (a - b).array().abs()).sum();
}

/// weighted_l1(a, b) / sum_j w_j |b_j|, with b the baseline counterfactual.
inline double relative_distance(const Vector& a, const Vector& b, const WeightVector& w, InstanceId id = 0) {
  const double num = weighted_l1(a, b, w);
  const double den = (w.w.array() * b.array().abs()).sum();
  if (!(den > 0.0)) throw DataError("relative_distance: zero-norm baseline for instance " + std::to_string(id));
  return num / den;
}

enum class Group { all, tn, fn };

inline const char* to_string(Group g) {
  switch (g) {
    case Group::all: return "ALL";
    case Group::tn: return "TN";
    case Group::fn: return "FN";
  }
  return "?";
}

inline Group group_from_string(const std::string& s) {
  if (s == "ALL") return Group::all;
  if (s == "TN") return Group::tn;
  if (s == "FN") return Group::fn;
  throw ParameterError("unknown group: " + s);
}

struct PairedDistanceRecord {
  int replicate = 0;
  InstanceId id = 0;
  int noise_level = 0;
  std::string method;
  std::string model;
  Group group = Group::all;  // TN or FN at the noisy level; ALL is the union
  double distance = 0.0;
  double relative_distance = 0.0;
};

struct RobustnessSummary {
  double median = 0.0;
  double p10 = 0.0;
  double p90 = 0.0;
  double iqr = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::size_t n = 0;
};

/// Summary of a sample: linear-interpolation quantiles and a percentile
/// bootstrap CI (B resamples, level 1 - alpha) for the median.
inline RobustnessSummary summarize_values(const std::vector<double>& values, std::size_t bootstrap = 2000,
                                          double alpha = 0.05, std::uint64_t seed = 0) {
  if (values.empty()) throw ParameterError("summarize: empty input");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ParameterError("summarize: alpha must lie in (0,1)");
  std::vector<double> sorted = values;
  std::sort(sorted.begin(), sorted.end());
  RobustnessSummary s;
  s.n = sorted.size();
  s.median = quantile_sorted(sorted, 0.5);
  s.p10 = quantile_sorted(sorted, 0.10);
  s.p90 = quantile_sorted(sorted, 0.90);
  s.iqr = quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25);
  if (bootstrap == 0) {
    s.ci_low = s.ci_high = s.median;
    return s;
  }
  Rng rng(stream_seed({seed, 0x424f4f54ULL}));
  std::vector<double> meds(bootstrap);
  std::vector<double> resample(sorted.size());
  for (std::size_t b = 0; b < bootstrap; ++b) {
    for (auto& v : resample) v = sorted[rng.below(sorted.size())];
    std::sort(resample.begin(), resample.end());
    meds[b] = quantile_sorted(resample, 0.5);
  }
  std::sort(meds.begin(), meds.end());
  s.ci_low = quantile_sorted(meds, alpha / 2.0);
  s.ci_high = quantile_sorted(meds, 1.0 - alpha / 2.0);
  // Resampled medians of a discrete sample can miss the sample median at tiny
  // n; widen to keep ci_low <= median <= ci_high.
  s.ci_low = std::min(s.ci_low, s.median);
  s.ci_high = std::max(s.ci_high, s.median);
  return s;
}

inline RobustnessSummary summarize(const std::vector<PairedDistanceRecord>& records, std::size_t bootstrap = 2000,
                                   double alpha = 0.05, std::uint64_t seed = 0) {
  std::vector<double> v;
  v.reserve(records.size());
  for (const auto& r : records) v.push_back(r.relative_distance);
  return summarize_values(v, bootstrap, alpha, seed);
}

enum class Bucket { low, medium, high };

inline const char* to_string(Bucket b) {
  switch (b) {
    case Bucket::low: return "Low";
    case Bucket::medium: return "Medium";
    case Bucket::high: return "High";
  }
  return "?";
}

/// Splits the sorted distinct levels into terciles: the i-th of n levels goes
/// to bucket floor(3 i / n).
inline std::map<int, Bucket> bucket_uncertainty(std::vector<int> levels) {
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
  if (levels.size() < 3) throw ParameterError("bucket_uncertainty: need at least 3 distinct levels");
  std::map<int, Bucket> out;
  const auto n = levels.size();
  for (std::size_t i = 0; i < n; ++i) out[levels[i]] = static_cast<Bucket>((3 * i) / n);
  return out;
}

}  // namespace cfrobust
