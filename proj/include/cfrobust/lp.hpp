#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "cfrobust/error.hpp"

namespace cfrobust::lp {

enum class Status { optimal, infeasible, unbounded };

struct Solution {
  Status status = Status::infeasible;
  Eigen::VectorXd x;
  double objective = std::numeric_limits<double>::infinity();
};

/// Dense two-phase simplex with Bland's rule for
///
///   minimize c'x  subject to  A x >= b,  0 <= x <= upper
///
/// Entries of `upper` may be +infinity. Intended for the small per-assignment
/// subproblems of the counterfactual search (tens of variables and rows).
inline Solution solve(const Eigen::VectorXd& c, const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
                      const Eigen::VectorXd& upper) {
  constexpr double kTol = 1e-10;
  const Eigen::Index n = c.size();
  if (a.cols() != n || upper.size() != n || a.rows() != b.size()) throw ParameterError("lp::solve: dimension mismatch");

  std::vector<Eigen::Index> bounded;
  for (Eigen::Index j = 0; j < n; ++j) {
    if (upper[j] < 0.0) return {};
    if (std::isfinite(upper[j])) bounded.push_back(j);
  }
  const Eigen::Index m_a = a.rows();
  const Eigen::Index m = m_a + static_cast<Eigen::Index>(bounded.size());
  // Columns: x (n) | slack/surplus (m) | artificial (m) | rhs.
  const Eigen::Index n_slack = m;
  const Eigen::Index art0 = n + n_slack;
  const Eigen::Index cols = art0 + m + 1;
  const Eigen::Index rhs = cols - 1;
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(m, cols);
  std::vector<Eigen::Index> basis(static_cast<std::size_t>(m));
  std::vector<bool> needs_art(static_cast<std::size_t>(m), false);

  for (Eigen::Index i = 0; i < m_a; ++i) {
    // a_i x - s_i = b_i
    if (b[i] > 0.0) {
      t.row(i).head(n) = a.row(i);
      t(i, n + i) = -1.0;
      t(i, rhs) = b[i];
      t(i, art0 + i) = 1.0;
      basis[static_cast<std::size_t>(i)] = art0 + i;
      needs_art[static_cast<std::size_t>(i)] = true;
    } else {
      t.row(i).head(n) = -a.row(i);
      t(i, n + i) = 1.0;
      t(i, rhs) = -b[i];
      basis[static_cast<std::size_t>(i)] = n + i;
    }
  }
  for (std::size_t k = 0; k < bounded.size(); ++k) {
    const Eigen::Index i = m_a + static_cast<Eigen::Index>(k);
    t(i, bounded[k]) = 1.0;
    t(i, n + i) = 1.0;
    t(i, rhs) = upper[bounded[k]];
    basis[static_cast<std::size_t>(i)] = n + i;
  }

  auto pivot = [&](Eigen::Index r, Eigen::Index q, Eigen::VectorXd& obj) {
    t.row(r) /= t(r, q);
    for (Eigen::Index i = 0; i < m; ++i)
      if (i != r && t(i, q) != 0.0) t.row(i) -= t(i, q) * t.row(r);
    if (obj(q) != 0.0) obj -= obj(q) * t.row(r).transpose();
    basis[static_cast<std::size_t>(r)] = q;
  };

  // Runs simplex on reduced-cost row `obj` (obj(rhs) holds -objective).
  // Returns false when unbounded.
  auto run = [&](Eigen::VectorXd& obj, Eigen::Index allowed_cols) {
    for (int iter = 0; iter < 50000; ++iter) {
      Eigen::Index q = -1;
      for (Eigen::Index j = 0; j < allowed_cols; ++j)
        if (obj(j) < -kTol) {
          q = j;
          break;
        }
      if (q < 0) return true;
      Eigen::Index r = -1;
      double best = std::numeric_limits<double>::infinity();
      for (Eigen::Index i = 0; i < m; ++i) {
        if (t(i, q) > kTol) {
          const double ratio = t(i, rhs) / t(i, q);
          if (ratio < best - kTol ||
              (ratio <= best + kTol && r >= 0 && basis[static_cast<std::size_t>(i)] < basis[static_cast<std::size_t>(r)])) {
            best = ratio;
            r = i;
          }
        }
      }
      if (r < 0) return false;
      pivot(r, q, obj);
    }
    throw Error("lp::solve: iteration limit reached");
  };

  // Phase I: minimize the sum of artificials.
  Eigen::VectorXd obj = Eigen::VectorXd::Zero(cols);
  bool any_art = false;
  for (Eigen::Index i = 0; i < m; ++i) {
    if (!needs_art[static_cast<std::size_t>(i)]) continue;
    any_art = true;
    obj(art0 + i) = 1.0;
  }
  if (any_art) {
    for (Eigen::Index i = 0; i < m; ++i)
      if (needs_art[static_cast<std::size_t>(i)]) obj -= t.row(i).transpose();
    run(obj, art0 + m);
    if (-obj(rhs) > 1e-8) return {};
    // Drive remaining zero-level artificials out of the basis where possible.
    for (Eigen::Index i = 0; i < m; ++i) {
      if (basis[static_cast<std::size_t>(i)] < art0) continue;
      for (Eigen::Index j = 0; j < art0; ++j) {
        if (std::abs(t(i, j)) > 1e-9) {
          pivot(i, j, obj);
          break;
        }
      }
    }
  }

  // Phase II over original and slack columns only.
  obj.setZero();
  obj.head(n) = c;
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto bj = basis[static_cast<std::size_t>(i)];
    if (bj < art0 && obj(bj) != 0.0) obj -= obj(bj) * t.row(i).transpose();
  }
  if (!run(obj, art0)) return {Status::unbounded, {}, -std::numeric_limits<double>::infinity()};

  Solution sol;
  sol.status = Status::optimal;
  sol.x = Eigen::VectorXd::Zero(n);
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto bj = basis[static_cast<std::size_t>(i)];
    if (bj < n) sol.x[bj] = t(i, rhs);
  }
  sol.objective = c.dot(sol.x);
  return sol;
}

}  // namespace cfrobust::lp
