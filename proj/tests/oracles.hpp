#pragma once

// Brute-force references for the counterfactual searches.

#include <cmath>
#include <functional>
#include <cstdint>
#include <limits>
#include <utility>
#include <vector>

#include "cfrobust/core.hpp"

namespace oracles {

using cfrobust::FeatureSchema;
using cfrobust::Vector;
using cfrobust::WeightVector;

struct Constraint {
  Vector a;
  double b = 0.0;
};

// Minimum weighted-l1 cost of a point satisfying a_k . x' + b_k >= eps for
// every k. Indicator groups are enumerated exhaustively; all continuous
// coordinates but the last are scanned on a grid of `step`, and the last one
// is set to its cheapest feasible value in closed form. Only points cheaper
// than `cap` are visited, so the scan stays inside the cost ball of radius cap.
// Continuous columns are assumed unbounded. Returns +inf when nothing cheaper
// than cap is feasible.
inline double brute_force_cost(const std::vector<Constraint>& cons, const Vector& x, const WeightVector& w,
                               const FeatureSchema& schema, double eps, double step, double cap) {
  const auto& cont = schema.continuous_indices();
  const auto& groups = schema.groups();
  const auto K = cons.size();
  double best = cap;

  std::vector<std::size_t> assign(groups.size(), 0);
  std::vector<double> need(K), partial(K);

  // Scan continuous coordinate `level` with `budget` of cost left.
  std::function<void(std::size_t, double, double)> scan = [&](std::size_t level, double spent, double budget) {
    const auto j = static_cast<Eigen::Index>(cont[level]);
    const double wj = w.w[j];
    if (level + 1 == cont.size()) {
      double lo = -std::numeric_limits<double>::infinity(), hi = std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < K; ++k) {
        const double aj = cons[k].a[j];
        const double r = need[k] - partial[k];
        if (aj > 0) lo = std::max(lo, r / aj);
        else if (aj < 0) hi = std::min(hi, r / aj);
        else if (r > 0) return;
      }
      if (lo > hi) return;
      const double dx = lo > 0 ? lo : (hi < 0 ? hi : 0.0);
      best = std::min(best, spent + wj * std::abs(dx));
      return;
    }
    const auto t_max = static_cast<long>(std::floor(budget / (wj * step)));
    for (long t = -t_max; t <= t_max; ++t) {
      const double dx = static_cast<double>(t) * step;
      const double c = wj * std::abs(dx);
      if (spent + c >= best) continue;
      for (std::size_t k = 0; k < K; ++k) partial[k] += cons[k].a[j] * dx;
      scan(level + 1, spent + c, best - spent - c);
      for (std::size_t k = 0; k < K; ++k) partial[k] -= cons[k].a[j] * dx;
    }
  };

  while (true) {
    Vector p = x;
    for (std::size_t g = 0; g < groups.size(); ++g) {
      const auto vals = schema.encode_category(g, assign[g]);
      for (std::size_t i = 0; i < vals.size(); ++i) p[static_cast<Eigen::Index>(groups[g].members[i])] = vals[i];
    }
    const double cat = (w.w.array() * (p - x).array().abs()).sum();
    if (cat < best) {
      for (std::size_t k = 0; k < K; ++k) {
        need[k] = eps - cons[k].b - cons[k].a.dot(p);
        partial[k] = 0.0;
      }
      if (cont.empty()) {
        bool ok = true;
        for (std::size_t k = 0; k < K; ++k) ok &= need[k] <= 0.0;
        if (ok) best = cat;
      } else {
        scan(0, cat, best - cat);
      }
    }
    std::size_t g = 0;
    for (; g < groups.size(); ++g) {
      if (++assign[g] < groups[g].n_categories()) break;
      assign[g] = 0;
    }
    if (g == groups.size()) break;
  }
  return best < cap ? best : std::numeric_limits<double>::infinity();
}


// Pratt signed ranks: |d| ranked with zeros included (average ties), zeros
// then dropped. Returns (rank, positive) pairs.
inline std::vector<std::pair<double, bool>> pratt(const std::vector<double>& d) {
  std::vector<std::pair<double, bool>> out;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d[i] == 0.0) continue;
    double below = 0, equal = 0;
    for (double v : d) {
      below += std::abs(v) < std::abs(d[i]);
      equal += std::abs(v) == std::abs(d[i]);
    }
    out.emplace_back(below + (equal + 1.0) / 2.0, d[i] > 0.0);
  }
  return out;
}

// One-sided P(W+ >= observed) and P(W+ == observed) by listing all 2^m sign
// assignments.
inline std::pair<double, double> wilcoxon_enumeration(const std::vector<double>& d) {
  const auto r = pratt(d);
  double obs = 0;
  for (const auto& [rank, pos] : r)
    if (pos) obs += rank;
  const std::size_t m = r.size();
  double ge = 0, eq = 0;
  for (std::uint64_t mask = 0; mask < (1ULL << m); ++mask) {
    double s = 0;
    for (std::size_t i = 0; i < m; ++i)
      if (mask >> i & 1) s += r[i].first;
    ge += s >= obs - 1e-9;
    eq += std::abs(s - obs) < 1e-9;
  }
  const double total = std::ldexp(1.0, static_cast<int>(m));
  return {ge / total, eq / total};
}

// P(mu > 0) under t(nu, mu, sigma) with nu fixed, after scaling the data by
// their sample sd; priors mu ~ N(0, 10), sigma ~ HalfNormal(10). Integrated on
// a regular (mu, sigma) grid.
inline double posterior_grid(const std::vector<double>& diffs, double nu, std::size_t points = 400) {
  const double n = static_cast<double>(diffs.size());
  double m = 0;
  for (double v : diffs) m += v;
  m /= n;
  double ss = 0;
  for (double v : diffs) ss += (v - m) * (v - m);
  const double sd = std::sqrt(ss / (n - 1));
  std::vector<double> z;
  for (double v : diffs) z.push_back(v / sd);
  const double zm = m / sd;
  const double mu_lo = zm - 12.0 / std::sqrt(n), mu_hi = zm + 12.0 / std::sqrt(n);
  const double s_lo = 1e-3, s_hi = 4.0;
  std::vector<double> logp(points * points);
  double peak = -std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < points; ++a) {
    const double mu = mu_lo + (mu_hi - mu_lo) * (static_cast<double>(a) + 0.5) / static_cast<double>(points);
    for (std::size_t b = 0; b < points; ++b) {
      const double s = s_lo + (s_hi - s_lo) * (static_cast<double>(b) + 0.5) / static_cast<double>(points);
      double lp = -0.5 * (mu / 10) * (mu / 10) - 0.5 * (s / 10) * (s / 10) - n * std::log(s);
      for (double v : z) lp -= 0.5 * (nu + 1) * std::log(1 + (v - mu) * (v - mu) / (nu * s * s));
      logp[a * points + b] = lp;
      peak = std::max(peak, lp);
    }
  }
  double pos = 0, all = 0;
  for (std::size_t a = 0; a < points; ++a) {
    const double mu = mu_lo + (mu_hi - mu_lo) * (static_cast<double>(a) + 0.5) / static_cast<double>(points);
    for (std::size_t b = 0; b < points; ++b) {
      const double p = std::exp(logp[a * points + b] - peak);
      all += p;
      if (mu > 0) pos += p;
    }
  }
  return pos / all;
}

}  // namespace oracles
