#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "cfrobust/error.hpp"
#include "cfrobust/numeric.hpp"
#include "cfrobust/rng.hpp"
#include "cfrobust/robustness.hpp"

namespace cfrobust {

struct WilcoxonResult {
  double statistic = 0.0;  // W+, sum of positive signed ranks
  double p_value = 1.0;    // one-sided: x systematically larger than y
  bool exact = true;
  bool degenerate = false;
  std::size_t n_nonzero = 0;
};

namespace detail {

struct SignedRanks {
  std::vector<double> ranks;  // Pratt ranks of the nonzero differences
  std::vector<bool> positive;
};

inline std::vector<double> paired_differences(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ParameterError("paired test: samples differ in length");
  std::vector<double> d(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) d[i] = x[i] - y[i];
  return d;
}

// Pratt: zeros take part in the ranking of |d| and are dropped afterwards.
inline SignedRanks pratt_ranks(const std::vector<double>& d) {
  std::vector<double> a(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) a[i] = std::abs(d[i]);
  const auto r = average_ranks(a);
  SignedRanks out;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d[i] == 0.0) continue;
    out.ranks.push_back(r[i]);
    out.positive.push_back(d[i] > 0.0);
  }
  return out;
}

}  // namespace detail

inline constexpr std::size_t kWilcoxonExactLimit = 25;

/// Paired Wilcoxon signed-rank test of d = x - y, one-sided towards x > y.
/// Exact null distribution for up to 25 nonzero differences, otherwise the
/// normal approximation with continuity correction.
inline WilcoxonResult wilcoxon_signed_rank(std::span<const double> x, std::span<const double> y) {
  if (x.empty()) throw ParameterError("wilcoxon_signed_rank: empty sample");
  const auto d = detail::paired_differences(x, y);
  const auto sr = detail::pratt_ranks(d);
  WilcoxonResult res;
  res.n_nonzero = sr.ranks.size();
  for (std::size_t i = 0; i < sr.ranks.size(); ++i)
    if (sr.positive[i]) res.statistic += sr.ranks[i];
  if (sr.ranks.empty()) {
    res.degenerate = true;
    res.p_value = 1.0;
    return res;
  }
  if (sr.ranks.size() <= kWilcoxonExactLimit) {
    // Average ranks are multiples of 1/2, so doubled ranks are integers.
    std::vector<std::size_t> r2(sr.ranks.size());
    std::size_t total = 0;
    for (std::size_t i = 0; i < r2.size(); ++i) {
      r2[i] = static_cast<std::size_t>(std::llround(2.0 * sr.ranks[i]));
      total += r2[i];
    }
    std::vector<double> count(total + 1, 0.0);
    count[0] = 1.0;
    std::size_t reach = 0;
    for (auto r : r2) {
      for (std::size_t s = reach + 1; s-- > 0;)
        if (count[s] != 0.0) count[s + r] += count[s];
      reach += r;
    }
    const auto obs = static_cast<std::size_t>(std::llround(2.0 * res.statistic));
    double tail = 0.0;
    for (std::size_t s = obs; s <= total; ++s) tail += count[s];
    res.p_value = tail / std::ldexp(1.0, static_cast<int>(r2.size()));
    return res;
  }
  res.exact = false;
  double mu = 0.0, var = 0.0;
  for (double r : sr.ranks) {
    mu += r / 2.0;
    var += r * r / 4.0;
  }
  const double z = (res.statistic - mu - 0.5) / std::sqrt(var);
  res.p_value = 1.0 - normal_cdf(z);
  return res;
}

/// (W+ - W-) / (W+ + W-) with ranks taken among the nonzero differences.
inline double rank_biserial(std::span<const double> x, std::span<const double> y) {
  const auto d = detail::paired_differences(x, y);
  std::vector<double> nz;
  for (double v : d)
    if (v != 0.0) nz.push_back(v);
  if (nz.empty()) return 0.0;
  std::vector<double> a(nz.size());
  for (std::size_t i = 0; i < nz.size(); ++i) a[i] = std::abs(nz[i]);
  const auto r = average_ranks(a);
  double wp = 0.0, wm = 0.0;
  for (std::size_t i = 0; i < nz.size(); ++i) (nz[i] > 0.0 ? wp : wm) += r[i];
  return (wp - wm) / (wp + wm);
}

inline std::string significance_stars(double p) {
  if (std::isnan(p)) return "";
  if (p < 0.0 || p > 1.0) throw ParameterError("significance_stars: p outside [0,1]");
  if (p < 0.001) return "***";
  if (p < 0.01) return "**";
  if (p < 0.05) return "*";
  return "";
}

// ---------------------------------------------------------------------------
// Bayesian Student-T comparison
// ---------------------------------------------------------------------------

struct McmcOptions {
  std::size_t chains = 4;
  std::size_t draws = 2000;
  std::size_t warmup = 1000;
  std::uint64_t seed = 0;
  double fixed_nu = 0.0;  // > 0 pins the degrees of freedom
};

struct PosteriorResult {
  double p = 0.5;  // P(mu > 0 | diffs)
  double mcse = 0.0;
  double rhat = 1.0;
  bool warning = false;
  bool degenerate = false;
};

/// Prior scales in units of sd(diffs).
inline constexpr double kMuPriorScale = 10.0;
inline constexpr double kSigmaPriorScale = 10.0;
inline constexpr double kNuMinusOneMean = 29.0;

namespace detail {

inline double student_t_loglik(const std::vector<double>& z, double mu, double sigma, double nu) {
  const double c = std::lgamma((nu + 1.0) / 2.0) - std::lgamma(nu / 2.0) - 0.5 * std::log(nu * std::numbers::pi) -
                   std::log(sigma);
  double s = 0.0;
  const double inv = 1.0 / (nu * sigma * sigma);
  for (double v : z) s += std::log1p((v - mu) * (v - mu) * inv);
  return static_cast<double>(z.size()) * c - 0.5 * (nu + 1.0) * s;
}

// Log posterior in the sampler's coordinates (mu, log sigma, log(nu - 1)),
// Jacobians included.
inline double log_target(const std::vector<double>& z, const double th[3], double fixed_nu) {
  const double mu = th[0];
  const double sigma = std::exp(th[1]);
  double lp = -0.5 * (mu / kMuPriorScale) * (mu / kMuPriorScale);
  lp += -0.5 * (sigma / kSigmaPriorScale) * (sigma / kSigmaPriorScale) + th[1];
  double nu = fixed_nu;
  if (fixed_nu <= 0.0) {
    const double e = std::exp(th[2]);
    nu = 1.0 + e;
    lp += -e / kNuMinusOneMean + th[2];
  }
  return lp + student_t_loglik(z, mu, sigma, nu);
}

// Split-chain potential scale reduction.
inline double split_rhat(const std::vector<std::vector<double>>& chains) {
  std::vector<std::vector<double>> halves;
  for (const auto& c : chains) {
    const auto h = c.size() / 2;
    if (h < 2) return std::numeric_limits<double>::quiet_NaN();
    halves.emplace_back(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(h));
    halves.emplace_back(c.end() - static_cast<std::ptrdiff_t>(h), c.end());
  }
  const auto n = static_cast<double>(halves.front().size());
  std::vector<double> means, vars;
  for (const auto& h : halves) {
    means.push_back(mean(h));
    const double s = sample_sd(h);
    vars.push_back(s * s);
  }
  const double w = mean(vars);
  const double sb = sample_sd(means);
  const double b = n * sb * sb;
  if (w <= 0.0) return b > 0.0 ? std::numeric_limits<double>::infinity() : 1.0;
  const double vhat = (n - 1.0) / n * w + b / n;
  return std::sqrt(vhat / w);
}

// Batch-means Monte-Carlo standard error of the mean of `v`.
inline double batch_means_se(const std::vector<double>& v) {
  const std::size_t n = v.size();
  const auto batch = std::max<std::size_t>(1, static_cast<std::size_t>(std::sqrt(static_cast<double>(n))));
  const std::size_t nb = n / batch;
  if (nb < 2) return sample_sd(v) / std::sqrt(static_cast<double>(std::max<std::size_t>(n, 1)));
  std::vector<double> bm(nb);
  for (std::size_t b = 0; b < nb; ++b) {
    double s = 0.0;
    for (std::size_t i = 0; i < batch; ++i) s += v[b * batch + i];
    bm[b] = s / static_cast<double>(batch);
  }
  return sample_sd(bm) / std::sqrt(static_cast<double>(nb));
}

}  // namespace detail

/// Posterior probability that the mean of `diffs` (method - reference) is
/// positive under a Student-T model t(nu, mu, sigma). The data are scaled by
/// their sample sd, so the priors mu ~ N(0, 10 sd), sigma ~ HalfNormal(10 sd)
/// and nu - 1 ~ Exponential(mean 29) are scale free. Random-walk Metropolis
/// with one joint proposal per iteration; per-coordinate step sizes adapt
/// towards 0.3 acceptance during warmup.
inline PosteriorResult posterior_p_best(const std::vector<double>& diffs, const McmcOptions& opt = {}) {
  if (diffs.size() < 5) throw ParameterError("posterior_p_best: need at least 5 differences");
  if (opt.chains < 1 || opt.draws < 4) throw ParameterError("posterior_p_best: need >= 1 chain and >= 4 draws");
  PosteriorResult out;
  const double sd = sample_sd(diffs);
  const double m = mean(diffs);
  if (!(sd > 0.0)) {
    out.degenerate = true;
    out.p = m > 0.0 ? 1.0 : (m < 0.0 ? 0.0 : 0.5);
    return out;
  }
  std::vector<double> z(diffs.size());
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = diffs[i] / sd;
  const double n = static_cast<double>(z.size());
  const bool free_nu = opt.fixed_nu <= 0.0;
  const int dims = free_nu ? 3 : 2;

  std::vector<std::vector<double>> mu_chains(opt.chains);
  std::vector<double> indicator;
  indicator.reserve(opt.chains * opt.draws);
  for (std::size_t c = 0; c < opt.chains; ++c) {
    Rng rng(stream_seed({opt.seed, 0x4d434d43ULL, c}));
    double th[3] = {mean(z) + 0.1 * rng.normal() / std::sqrt(n), 0.1 * rng.normal(), std::log(kNuMinusOneMean)};
    double step[3] = {2.4 / std::sqrt(n), 2.4 / std::sqrt(2.0 * n), 1.0};
    for (auto& s : step) s /= std::sqrt(static_cast<double>(dims));
    double cur = detail::log_target(z, th, opt.fixed_nu);
    std::size_t accepted = 0;
    const std::size_t total = opt.warmup + opt.draws;
    for (std::size_t it = 0; it < total; ++it) {
      double prop[3] = {th[0], th[1], th[2]};
      for (int k = 0; k < dims; ++k) prop[k] += step[k] * rng.normal();
      const double lp = detail::log_target(z, prop, opt.fixed_nu);
      const double u = rng.uniform();
      if (std::isfinite(lp) && std::log(u > 0.0 ? u : 1e-300) < lp - cur) {
        std::copy(prop, prop + 3, th);
        cur = lp;
        ++accepted;
      }
      if (it < opt.warmup && (it + 1) % 50 == 0) {
        const double rate = static_cast<double>(accepted) / 50.0;
        const double f = std::exp(rate - 0.3);
        for (auto& s : step) s *= f;
        accepted = 0;
      }
      if (it >= opt.warmup) {
        mu_chains[c].push_back(th[0]);
        indicator.push_back(th[0] > 0.0 ? 1.0 : 0.0);
      }
    }
  }
  out.p = mean(indicator);
  out.mcse = detail::batch_means_se(indicator);
  out.rhat = detail::split_rhat(mu_chains);
  out.warning = !(out.rhat <= 1.1);
  return out;
}

// ---------------------------------------------------------------------------
// Method comparison
// ---------------------------------------------------------------------------

struct ComparisonResult {
  std::string method;
  std::string reference;
  double median_delta = std::numeric_limits<double>::quiet_NaN();  // reference median - method median
  double p_value = std::numeric_limits<double>::quiet_NaN();
  std::string stars;
  double effect_size = std::numeric_limits<double>::quiet_NaN();
  double posterior_p_best = std::numeric_limits<double>::quiet_NaN();
  double posterior_mcse = std::numeric_limits<double>::quiet_NaN();
  bool convergence_warning = false;
  std::size_t n_pairs = 0;
  bool defined() const { return !std::isnan(p_value); }
};

struct ComparisonSet {
  std::vector<ComparisonResult> rows;  // reference first, then the others by name
  std::string reason;                  // set when rows is empty
};

inline constexpr std::size_t kMinPairs = 5;

/// Compares each method with the one of smallest median relative distance,
/// pairing records on (replicate, instance id, noise level).
inline ComparisonSet compare_methods(const std::map<std::string, std::vector<PairedDistanceRecord>>& by_method,
                                     const McmcOptions& mcmc = {}) {
  ComparisonSet out;
  std::map<std::string, double> medians;
  for (const auto& [name, recs] : by_method) {
    if (recs.empty()) continue;
    std::vector<double> v;
    for (const auto& r : recs) v.push_back(r.relative_distance);
    medians[name] = median(std::move(v));
  }
  if (medians.empty()) {
    out.reason = "no method has records";
    return out;
  }
  std::string ref;
  for (const auto& [name, med] : medians)
    if (ref.empty() || med < medians[ref]) ref = name;

  using Key = std::tuple<int, InstanceId, int>;
  std::map<Key, double> ref_values;
  for (const auto& r : by_method.at(ref)) ref_values[{r.replicate, r.id, r.noise_level}] = r.relative_distance;

  auto compare = [&](const std::string& name) {
    ComparisonResult c;
    c.method = name;
    c.reference = ref;
    std::vector<double> x, y;
    std::map<Key, double> mine;
    for (const auto& r : by_method.at(name)) mine[{r.replicate, r.id, r.noise_level}] = r.relative_distance;
    for (const auto& [k, v] : mine) {
      auto it = ref_values.find(k);
      if (it == ref_values.end()) continue;
      x.push_back(v);
      y.push_back(it->second);
    }
    c.n_pairs = x.size();
    if (x.size() < kMinPairs) return c;
    c.median_delta = medians[ref] - medians[name];
    const auto w = wilcoxon_signed_rank(x, y);
    c.p_value = w.p_value;
    c.stars = significance_stars(w.p_value);
    c.effect_size = rank_biserial(x, y);
    const auto d = detail::paired_differences(x, y);
    McmcOptions o = mcmc;
    o.seed = stream_seed({mcmc.seed, fnv1a(name)});
    const auto post = posterior_p_best(d, o);
    c.posterior_p_best = post.p;
    c.posterior_mcse = post.mcse;
    c.convergence_warning = post.warning;
    return c;
  };

  out.rows.push_back(compare(ref));
  for (const auto& [name, med] : medians)
    if (name != ref) out.rows.push_back(compare(name));
  return out;
}

}  // namespace cfrobust
