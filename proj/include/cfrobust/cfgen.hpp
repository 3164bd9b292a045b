#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "cfrobust/core.hpp"
#include "cfrobust/lp.hpp"
#include "cfrobust/models.hpp"
#include "cfrobust/rng.hpp"
#include "cfrobust/robustness.hpp"

namespace cfrobust {

struct CESearchConfig {
  double epsilon_margin = 1e-6;  // required score margin past the decision boundary
  std::size_t budget = 1000;     // evaluation budget for black-box searches
  std::uint64_t seed = 0;
  int target_class = 1;

  void validate() const {
    if (!(epsilon_margin > 0.0)) throw ParameterError("CESearchConfig: epsilon_margin must be > 0");
    if (target_class != 0 && target_class != 1) throw ParameterError("CESearchConfig: target_class must be 0 or 1");
  }
};

/// Fraction of attempts that produced a valid counterfactual.
inline double completeness(const std::vector<Counterfactual>& attempts) {
  if (attempts.empty()) throw ParameterError("completeness: no attempts");
  std::size_t ok = 0;
  for (const auto& c : attempts) ok += c.valid;
  return static_cast<double>(ok) / static_cast<double>(attempts.size());
}

namespace detail {

inline double target_probability(const Classifier& m, const Vector& x, int target) {
  const double p = m.predict_proba(x);
  return target == 1 ? p : 1.0 - p;
}

// Finalizes a candidate: recomputes cost and checks the validity postcondition.
inline Counterfactual finish(Counterfactual c, const Classifier& m, const WeightVector& w, const FeatureSchema& schema,
                             int target) {
  c.cost = weighted_l1(c.original, c.point, w);
  if (c.valid) {
    if (m.predict(c.point) != target) {
      c.valid = false;
      c.reason = "candidate does not re-predict to the target class";
    } else if (!validate_point(schema, c.point).empty()) {
      c.valid = false;
      c.reason = "candidate violates schema constraints";
    }
  }
  return c;
}

inline void check_inputs(const Vector& x, const WeightVector& w, const FeatureSchema& schema) {
  if (static_cast<std::size_t>(x.size()) != schema.size() || w.size() != schema.size())
    throw ParameterError("counterfactual search: dimension mismatch between instance, weights and schema");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Exact proximity search for linear models
// ---------------------------------------------------------------------------

enum class MilpStrategy { automatic, enumerate, branch_and_bound };

struct MilpOptions {
  MilpStrategy strategy = MilpStrategy::automatic;
  std::size_t enumeration_limit = 4096;  // automatic: enumerate when combinations <= limit
};

namespace detail {

// Minimum weighted-l1 move of the continuous coordinates that raises one
// linear score by a given amount: a fractional knapsack where coordinate j
// buys |a_j| score per unit moved at price w_j, up to the room left by its
// bounds. Greedy by |a_j| / w_j is optimal.
struct ContinuousKnapsack {
  struct Item {
    std::size_t column;
    double direction;  // +1 or -1
    double ratio;      // score per unit cost
    double capacity;   // score available (may be inf)
  };
  std::vector<Item> items;
  std::vector<double> cum_capacity;  // before item k
  std::vector<double> cum_cost;

  ContinuousKnapsack() = default;
  ContinuousKnapsack(const Vector& a, const Vector& x, const WeightVector& w, const FeatureSchema& schema) {
    for (auto j : schema.continuous_indices()) {
      const auto c = static_cast<Eigen::Index>(j);
      if (a[c] == 0.0) continue;
      const double dir = a[c] > 0.0 ? 1.0 : -1.0;
      const auto& b = schema.column(j).bounds;
      double room = std::numeric_limits<double>::infinity();
      if (b) room = std::max(0.0, dir > 0 ? b->hi - x[c] : x[c] - b->lo);
      if (room <= 0.0) continue;
      items.push_back({j, dir, std::abs(a[c]) / w.w[c], std::abs(a[c]) * room});
    }
    std::stable_sort(items.begin(), items.end(), [](const Item& l, const Item& r) { return l.ratio > r.ratio; });
    double cap = 0.0, cost = 0.0;
    for (const auto& it : items) {
      cum_capacity.push_back(cap);
      cum_cost.push_back(cost);
      cap += it.capacity;
      cost += it.capacity / it.ratio;
    }
    cum_capacity.push_back(cap);
    cum_cost.push_back(cost);
  }

  double cost(double need) const {
    if (need <= 0.0) return 0.0;
    for (std::size_t k = 0; k < items.size(); ++k) {
      if (cum_capacity[k + 1] >= need) return cum_cost[k] + (need - cum_capacity[k]) / items[k].ratio;
    }
    return std::numeric_limits<double>::infinity();
  }

  // Applies the optimal move for `need` to `point`.
  void apply(double need, Vector& point, const WeightVector& w) const {
    for (const auto& it : items) {
      if (need <= 0.0) break;
      const double use = std::min(need, it.capacity);
      const auto c = static_cast<Eigen::Index>(it.column);
      const double delta = use / (it.ratio * w.w[c]);  // = use / |a_j|
      point[c] += it.direction * delta;
      need -= use;
    }
  }
};

struct GroupOptions {
  std::vector<std::size_t> members;
  std::vector<std::vector<double>> values;  // per option: member values
  std::vector<double> cost;                 // per option
  std::size_t current = 0;                  // option encoded in the original instance
};

struct HalfSpace {
  Vector a;
  double b = 0.0;
};

/// Shared state of one proximity search over one or more half-spaces
/// a_k . x' + b_k >= epsilon.
class ProximitySearch {
 public:
  ProximitySearch(std::vector<HalfSpace> halfspaces, std::size_t required, const Vector& x, const WeightVector& w,
                  const FeatureSchema& schema, double epsilon)
      : hs_(std::move(halfspaces)), required_(required), x_(x), w_(w), schema_(schema), eps_(epsilon) {
    for (std::size_t g = 0; g < schema.groups().size(); ++g) {
      const auto& grp = schema.groups()[g];
      GroupOptions go;
      go.members = grp.members;
      const std::span<const double> xs(x.data(), static_cast<std::size_t>(x.size()));
      const auto cur = schema.decode_category(g, xs);
      if (!cur) throw ParameterError("counterfactual search: instance violates polytope group '" + grp.id + "'");
      go.current = *cur;
      for (std::size_t o = 0; o < grp.n_categories(); ++o) {
        auto vals = schema.encode_category(g, o);
        double c = 0.0;
        for (std::size_t i = 0; i < vals.size(); ++i)
          c += w.w[static_cast<Eigen::Index>(grp.members[i])] * std::abs(vals[i] - x[static_cast<Eigen::Index>(grp.members[i])]);
        go.values.push_back(std::move(vals));
        go.cost.push_back(c);
      }
      groups_.push_back(std::move(go));
    }
    for (const auto& h : hs_) {
      knapsacks_.emplace_back(h.a, x, w, schema);
      base_.push_back(h.b + h.a.dot(x));
      std::vector<std::vector<double>> gains;
      for (const auto& go : groups_) {
        std::vector<double> gg;
        double cur = 0.0;
        for (std::size_t i = 0; i < go.members.size(); ++i) cur += h.a[static_cast<Eigen::Index>(go.members[i])] * go.values[go.current][i];
        for (const auto& vals : go.values) {
          double s = 0.0;
          for (std::size_t i = 0; i < go.members.size(); ++i) s += h.a[static_cast<Eigen::Index>(go.members[i])] * vals[i];
          gg.push_back(s - cur);
        }
        gains.push_back(std::move(gg));
      }
      gains_.push_back(std::move(gains));
    }
  }

  std::size_t n_combinations_capped(std::size_t cap) const {
    std::size_t total = 1;
    for (const auto& g : groups_) {
      total *= g.values.size();
      if (total > cap) return cap + 1;
    }
    return total;
  }

  struct Result {
    bool feasible = false;
    double cost = std::numeric_limits<double>::infinity();
    std::vector<std::size_t> assignment;
    Vector point;
    std::size_t evaluations = 0;
  };

  Result enumerate() {
    Result best;
    std::vector<std::size_t> assign(groups_.size(), 0);
    for (;;) {
      consider(assign, best);
      std::size_t g = 0;
      for (; g < groups_.size(); ++g) {
        if (++assign[g] < groups_[g].values.size()) break;
        assign[g] = 0;
      }
      if (g == groups_.size()) break;
    }
    finalize(best);
    return best;
  }

  Result branch_and_bound() {
    Result best;
    std::vector<std::size_t> assign(groups_.size(), 0);
    std::vector<double> shift(hs_.size(), 0.0);
    dfs(0, 0.0, shift, assign, best);
    finalize(best);
    return best;
  }

 private:
  // Score shortfall of half-space k with categorical score shift `shift_k`.
  double need(std::size_t k, double shift_k) const { return eps_ - (base_[k] + shift_k); }

  // Continuous cost for a complete assignment; infinite if infeasible.
  double continuous_cost(const std::vector<double>& shift, Vector* move) {
    std::vector<double> needs(hs_.size());
    std::vector<double> single(hs_.size());
    for (std::size_t k = 0; k < hs_.size(); ++k) {
      needs[k] = need(k, shift[k]);
      single[k] = knapsacks_[k].cost(needs[k]);
    }
    if (hs_.size() == 1) {
      if (move && std::isfinite(single[0])) knapsacks_[0].apply(needs[0], *move, w_);
      return single[0];
    }
    return multi_cost(needs, move);
  }

  double lower_bound_from_singles(std::vector<double> single) const {
    // At least `required_` half-spaces must hold; each costs at least its own knapsack.
    std::sort(single.begin(), single.end());
    return single[required_ - 1];
  }

  double multi_cost(const std::vector<double>& needs, Vector* move) {
    const auto s = hs_.size();
    if (required_ == s) return solve_lp(needs, std::vector<std::size_t>(), move);
    // Chance constraint: choose which (s - required_) half-spaces may fail.
    const std::size_t drop = s - required_;
    std::vector<std::size_t> dropped;
    double best = std::numeric_limits<double>::infinity();
    std::vector<std::size_t> best_drop;
    if (binomial_capped(s, drop, 256) <= 256) {
      std::vector<std::size_t> idx(drop);
      std::iota(idx.begin(), idx.end(), 0);
      for (;;) {
        const double c = solve_lp(needs, idx, nullptr);
        if (c < best) best = c, best_drop = idx;
        std::size_t i = drop;
        while (i > 0 && idx[i - 1] == s - drop + i - 1) --i;
        if (i == 0) break;
        ++idx[i - 1];
        for (std::size_t k = i; k < drop; ++k) idx[k] = idx[k - 1] + 1;
      }
    } else {
      // Greedy elimination: repeatedly drop the half-space whose removal helps most.
      for (std::size_t round = 0; round < drop; ++round) {
        double round_best = std::numeric_limits<double>::infinity();
        std::size_t pick = s;
        for (std::size_t k = 0; k < s; ++k) {
          if (std::find(best_drop.begin(), best_drop.end(), k) != best_drop.end()) continue;
          auto trial = best_drop;
          trial.push_back(k);
          const double c = solve_lp(needs, trial, nullptr);
          if (c < round_best) round_best = c, pick = k;
        }
        if (pick == s) break;
        best_drop.push_back(pick);
        best = round_best;
      }
    }
    if (move && std::isfinite(best)) solve_lp(needs, best_drop, move);
    return best;
  }

  static std::size_t binomial_capped(std::size_t n, std::size_t k, std::size_t cap) {
    double v = 1.0;
    for (std::size_t i = 1; i <= k; ++i) {
      v = v * static_cast<double>(n - k + i) / static_cast<double>(i);
      if (v > static_cast<double>(cap)) return cap + 1;
    }
    return static_cast<std::size_t>(std::llround(v));
  }

  // LP over continuous moves d+ / d- for the half-spaces not in `dropped`.
  double solve_lp(const std::vector<double>& needs, const std::vector<std::size_t>& dropped, Vector* move) {
    std::vector<std::size_t> rows;
    bool any_need = false;
    for (std::size_t k = 0; k < hs_.size(); ++k) {
      if (std::find(dropped.begin(), dropped.end(), k) != dropped.end()) continue;
      rows.push_back(k);
      any_need |= needs[k] > 0.0;
    }
    if (!any_need) return 0.0;
    const auto& cont = schema_.continuous_indices();
    const auto nc = static_cast<Eigen::Index>(cont.size());
    if (nc == 0) return std::numeric_limits<double>::infinity();
    Eigen::VectorXd c(2 * nc), upper(2 * nc), b(static_cast<Eigen::Index>(rows.size()));
    Eigen::MatrixXd a(static_cast<Eigen::Index>(rows.size()), 2 * nc);
    for (Eigen::Index k = 0; k < nc; ++k) {
      const auto j = static_cast<Eigen::Index>(cont[static_cast<std::size_t>(k)]);
      c[k] = c[nc + k] = w_.w[j];
      const auto& bd = schema_.column(cont[static_cast<std::size_t>(k)]).bounds;
      upper[k] = bd ? std::max(0.0, bd->hi - x_[j]) : std::numeric_limits<double>::infinity();
      upper[nc + k] = bd ? std::max(0.0, x_[j] - bd->lo) : std::numeric_limits<double>::infinity();
    }
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const auto& h = hs_[rows[r]];
      for (Eigen::Index k = 0; k < nc; ++k) {
        const double coef = h.a[static_cast<Eigen::Index>(cont[static_cast<std::size_t>(k)])];
        a(static_cast<Eigen::Index>(r), k) = coef;
        a(static_cast<Eigen::Index>(r), nc + k) = -coef;
      }
      b[static_cast<Eigen::Index>(r)] = needs[rows[r]];
    }
    ++lp_calls_;
    const auto sol = lp::solve(c, a, b, upper);
    if (sol.status != lp::Status::optimal) return std::numeric_limits<double>::infinity();
    if (move) {
      for (Eigen::Index k = 0; k < nc; ++k) {
        const auto j = static_cast<Eigen::Index>(cont[static_cast<std::size_t>(k)]);
        (*move)[j] += sol.x[k] - sol.x[nc + k];
      }
    }
    return sol.objective;
  }

  void consider(const std::vector<std::size_t>& assign, Result& best) {
    ++evaluations_;
    double cat = 0.0;
    std::vector<double> shift(hs_.size(), 0.0);
    for (std::size_t g = 0; g < groups_.size(); ++g) {
      cat += groups_[g].cost[assign[g]];
      for (std::size_t k = 0; k < hs_.size(); ++k) shift[k] += gains_[k][g][assign[g]];
    }
    if (!improves(cat, best)) return;
    if (hs_.size() > 1) {
      std::vector<double> single(hs_.size());
      for (std::size_t k = 0; k < hs_.size(); ++k) single[k] = knapsacks_[k].cost(need(k, shift[k]));
      if (!improves(cat + lower_bound_from_singles(single), best)) return;
    }
    const double cc = continuous_cost(shift, nullptr);
    if (std::isfinite(cc) && improves(cat + cc, best)) {
      best.feasible = true;
      best.cost = cat + cc;
      best.assignment = assign;
    }
  }

  static bool improves(double cost, const Result& best) {
    return !best.feasible || cost < best.cost * (1.0 - 1e-12);
  }

  // Lower bound for groups [depth, end) relaxed to convex combinations of
  // their options plus the continuous knapsack, for half-space k.
  double relaxed_bound(std::size_t k, std::size_t depth, double shift_k) const {
    double rem = need(k, shift_k);
    if (rem <= 0.0) return 0.0;
    struct Piece {
      double ratio;
      double capacity;
    };
    std::vector<Piece> pieces;
    for (const auto& it : knapsacks_[k].items) pieces.push_back({it.ratio, it.capacity});
    for (std::size_t g = depth; g < groups_.size(); ++g) {
      double max_gain = 0.0, best_ratio = 0.0;
      for (std::size_t o = 0; o < groups_[g].values.size(); ++o) {
        const double gain = gains_[k][g][o];
        if (gain <= 0.0 || o == groups_[g].current) continue;
        max_gain = std::max(max_gain, gain);
        best_ratio = std::max(best_ratio, gain / groups_[g].cost[o]);
      }
      if (max_gain > 0.0) pieces.push_back({best_ratio, max_gain});
    }
    std::sort(pieces.begin(), pieces.end(), [](const Piece& l, const Piece& r) { return l.ratio > r.ratio; });
    double cost = 0.0;
    for (const auto& p : pieces) {
      const double use = std::min(rem, p.capacity);
      cost += use / p.ratio;
      rem -= use;
      if (rem <= 0.0) return cost;
    }
    return std::numeric_limits<double>::infinity();
  }

  void dfs(std::size_t depth, double cat, std::vector<double>& shift, std::vector<std::size_t>& assign, Result& best) {
    if (depth == groups_.size()) {
      ++evaluations_;
      const double cc = continuous_cost(shift, nullptr);
      if (std::isfinite(cc) && improves(cat + cc, best)) {
        best.feasible = true;
        best.cost = cat + cc;
        best.assignment = assign;
      }
      return;
    }
    std::vector<double> bounds(hs_.size());
    for (std::size_t k = 0; k < hs_.size(); ++k) bounds[k] = relaxed_bound(k, depth, shift[k]);
    if (!improves(cat + lower_bound_from_singles(bounds), best)) return;
    // Visit the current category first so the zero-change incumbent appears early.
    const auto& go = groups_[depth];
    std::vector<std::size_t> order(go.values.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto l, auto r) { return go.cost[l] < go.cost[r]; });
    for (auto o : order) {
      assign[depth] = o;
      for (std::size_t k = 0; k < hs_.size(); ++k) shift[k] += gains_[k][depth][o];
      dfs(depth + 1, cat + go.cost[o], shift, assign, best);
      for (std::size_t k = 0; k < hs_.size(); ++k) shift[k] -= gains_[k][depth][o];
    }
  }

  void finalize(Result& best) {
    best.evaluations = evaluations_;
    if (!best.feasible) return;
    best.point = x_;
    std::vector<double> shift(hs_.size(), 0.0);
    for (std::size_t g = 0; g < groups_.size(); ++g) {
      const auto& go = groups_[g];
      for (std::size_t i = 0; i < go.members.size(); ++i)
        best.point[static_cast<Eigen::Index>(go.members[i])] = go.values[best.assignment[g]][i];
      for (std::size_t k = 0; k < hs_.size(); ++k) shift[k] += gains_[k][g][best.assignment[g]];
    }
    continuous_cost(shift, &best.point);
  }

  std::vector<HalfSpace> hs_;
  std::size_t required_;
  const Vector& x_;
  const WeightVector& w_;
  const FeatureSchema& schema_;
  double eps_;
  std::vector<GroupOptions> groups_;
  std::vector<ContinuousKnapsack> knapsacks_;
  std::vector<double> base_;                              // b_k + a_k . x
  std::vector<std::vector<std::vector<double>>> gains_;   // [k][g][option]
  std::size_t evaluations_ = 0;
  std::size_t lp_calls_ = 0;
};

inline Counterfactual run_proximity_search(std::vector<HalfSpace> hs, std::size_t required, const Classifier& judge,
                                           const Vector& x, const WeightVector& w, const FeatureSchema& schema,
                                           const CESearchConfig& cfg, const MilpOptions& opt, std::string method,
                                           InstanceId id) {
  cfg.validate();
  check_inputs(x, w, schema);
  if (cfg.target_class == 0)
    for (auto& h : hs) h.a = -h.a, h.b = -h.b;
  ProximitySearch search(std::move(hs), required, x, w, schema, cfg.epsilon_margin);
  bool enumerate = opt.strategy == MilpStrategy::enumerate;
  if (opt.strategy == MilpStrategy::automatic)
    enumerate = search.n_combinations_capped(opt.enumeration_limit) <= opt.enumeration_limit;
  const auto res = enumerate ? search.enumerate() : search.branch_and_bound();

  Counterfactual c;
  c.id = id;
  c.original = x;
  c.method = std::move(method);
  c.evaluations = res.evaluations;
  c.original_class = judge.predict(x);
  if (!res.feasible) {
    c.point = x;
    c.valid = false;
    c.reason = "infeasible: decision boundary unreachable within bounds";
    return finish(std::move(c), judge, w, schema, cfg.target_class);
  }
  c.point = res.point;
  c.valid = true;
  return finish(std::move(c), judge, w, schema, cfg.target_class);
}

}  // namespace detail

/// Globally minimal weighted-l1 counterfactual for a linear model, subject to
/// weights . x' + bias >= epsilon (mirrored for target 0), binary indicators,
/// polytope sums and continuous bounds.
inline Counterfactual milp_counterfactual(const LinearModel& m, const Vector& x, const WeightVector& w,
                                          const FeatureSchema& schema, const CESearchConfig& cfg,
                                          InstanceId id = 0, const MilpOptions& opt = {}) {
  return detail::run_proximity_search({{m.weights(), m.bias()}}, 1, m, x, w, schema, cfg, opt, "MILP", id);
}

/// milp_counterfactual applied to the posterior-mean linear model.
inline Counterfactual milp_mean_counterfactual(const BayesianLinearModel& b, const Vector& x, const WeightVector& w,
                                               const FeatureSchema& schema, const CESearchConfig& cfg,
                                               InstanceId id = 0, const MilpOptions& opt = {}) {
  const auto mean = b.mean_model();
  return detail::run_proximity_search({{mean.weights(), mean.bias()}}, 1, b, x, w, schema, cfg, opt, "MILP (mean)", id);
}

struct MarginalOptions {
  std::size_t samples = 16;
  double fraction = 1.0;  // fraction of draws whose margin constraint must hold
};

/// Minimal-cost counterfactual whose margin constraint holds for at least
/// ceil(fraction * samples) seeded posterior draws. With fraction = 1 the
/// search is exact; for fraction < 1 the set of relaxed draws is enumerated
/// when there are at most 256 choices and chosen greedily otherwise.
inline Counterfactual milp_marginal_counterfactual(const BayesianLinearModel& b, const Vector& x,
                                                   const WeightVector& w, const FeatureSchema& schema,
                                                   const CESearchConfig& cfg, const MarginalOptions& marg = {},
                                                   InstanceId id = 0, const MilpOptions& opt = {}) {
  if (marg.samples < 1) throw ParameterError("milp_marginal_counterfactual: samples must be >= 1");
  if (!(marg.fraction > 0.0 && marg.fraction <= 1.0))
    throw ParameterError("milp_marginal_counterfactual: fraction must lie in (0,1]");
  const auto draws = b.draw(marg.samples, cfg.seed);
  std::vector<detail::HalfSpace> hs;
  for (const auto& d : draws) hs.push_back({d.weights(), d.bias()});
  const auto required = static_cast<std::size_t>(std::ceil(marg.fraction * static_cast<double>(marg.samples) - 1e-12));
  return detail::run_proximity_search(std::move(hs), std::max<std::size_t>(required, 1), b, x, w, schema, cfg, opt,
                                      "MILP (marg)", id);
}

// ---------------------------------------------------------------------------
// Nearest-unlike-neighbor greedy search
// ---------------------------------------------------------------------------

/// Training rows the classifier predicts as the target class.
struct NeighborPool {
  Matrix x;
  std::vector<InstanceId> ids;
  int target_class = 1;
};

inline NeighborPool make_neighbor_pool(const Classifier& m, const Dataset& train, int target_class) {
  const auto pred = predict_all(m, train);
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < train.n(); ++i)
    if (pred[i] == target_class) rows.push_back(i);
  NeighborPool pool;
  pool.target_class = target_class;
  pool.x.resize(static_cast<Eigen::Index>(rows.size()), train.x.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    pool.x.row(static_cast<Eigen::Index>(k)) = train.x.row(static_cast<Eigen::Index>(rows[k]));
    pool.ids.push_back(train.ids[rows[k]]);
  }
  return pool;
}

/// A replaceable unit: one continuous column or a whole polytope group.
inline std::vector<std::vector<std::size_t>> feature_units(const FeatureSchema& schema) {
  std::vector<std::vector<std::size_t>> units;
  std::vector<bool> seen_group(schema.groups().size(), false);
  for (std::size_t j = 0; j < schema.size(); ++j) {
    if (auto g = schema.group_of(j)) {
      if (seen_group[*g]) continue;
      seen_group[*g] = true;
      units.push_back(schema.groups()[*g].members);
    } else {
      units.push_back({j});
    }
  }
  return units;
}

/// Greedy substitution towards the nearest unlike neighbor: at each step the
/// unit whose copy from the neighbor maximizes the target-class probability is
/// substituted, stopping at the first prediction flip.
inline Counterfactual nice_counterfactual(const Classifier& m, const NeighborPool& pool, const Vector& x,
                                          const WeightVector& w, const FeatureSchema& schema,
                                          const CESearchConfig& cfg, InstanceId id = 0) {
  cfg.validate();
  detail::check_inputs(x, w, schema);
  Counterfactual c;
  c.id = id;
  c.original = x;
  c.point = x;
  c.method = "NICE";
  c.evaluations = 1;
  c.original_class = m.predict(x);
  if (pool.target_class != cfg.target_class) throw ParameterError("nice_counterfactual: pool built for another target");
  if (c.original_class == cfg.target_class) {
    c.valid = true;
    return detail::finish(std::move(c), m, w, schema, cfg.target_class);
  }
  if (pool.x.rows() == 0) {
    c.reason = "no training instance is predicted as the target class";
    return detail::finish(std::move(c), m, w, schema, cfg.target_class);
  }
  Eigen::Index nun = 0;
  double best = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < pool.x.rows(); ++i) {
    const double dist = (w.w.array() * (pool.x.row(i).transpose() - x).array().abs()).sum();
    if (dist < best) best = dist, nun = i;
  }
  const Vector neighbor = pool.x.row(nun).transpose();

  std::vector<std::vector<std::size_t>> diff;
  for (auto& u : feature_units(schema)) {
    bool differs = false;
    for (auto j : u) differs |= x[static_cast<Eigen::Index>(j)] != neighbor[static_cast<Eigen::Index>(j)];
    if (differs) diff.push_back(std::move(u));
  }
  Vector current = x;
  while (!diff.empty()) {
    double best_p = -1.0;
    std::size_t pick = 0;
    for (std::size_t k = 0; k < diff.size(); ++k) {
      Vector cand = current;
      for (auto j : diff[k]) cand[static_cast<Eigen::Index>(j)] = neighbor[static_cast<Eigen::Index>(j)];
      const double p = detail::target_probability(m, cand, cfg.target_class);
      ++c.evaluations;
      if (p > best_p) best_p = p, pick = k;
    }
    for (auto j : diff[pick]) current[static_cast<Eigen::Index>(j)] = neighbor[static_cast<Eigen::Index>(j)];
    diff.erase(diff.begin() + static_cast<std::ptrdiff_t>(pick));
    if (m.predict(current) == cfg.target_class) break;
  }
  c.point = current;
  c.valid = m.predict(current) == cfg.target_class;
  if (!c.valid) c.reason = "neighbor substitution did not flip the prediction";
  return detail::finish(std::move(c), m, w, schema, cfg.target_class);
}

inline Counterfactual nice_counterfactual(const Classifier& m, const Dataset& train, const Vector& x,
                                          const WeightVector& w, const FeatureSchema& schema,
                                          const CESearchConfig& cfg, InstanceId id = 0) {
  return nice_counterfactual(m, make_neighbor_pool(m, train, cfg.target_class), x, w, schema, cfg, id);
}

// ---------------------------------------------------------------------------
// Budgeted random search
// ---------------------------------------------------------------------------

struct RandomSearchOptions {
  double proposal_scale = 1.0;           // initial proposal sd, in units of 1 / w_j per coordinate
  double group_flip_probability = 0.25;  // per-group categorical resampling probability
  double coordinate_probability = 0.5;   // per-coordinate probability of being perturbed
  double final_scale_ratio = 1e-3;       // scale at the end of the budget relative to the start
};

/// Black-box random search. The first evaluation is the instance itself. Until
/// a valid candidate exists proposals are drawn around x with a slowly growing
/// scale; afterwards they are drawn around the best valid candidate with a
/// geometrically shrinking scale, and a quarter of them pull a random subset
/// of coordinates back towards x. The cheapest valid candidate is returned.
inline Counterfactual random_search_counterfactual(const Classifier& m, const Vector& x, const WeightVector& w,
                                                   const FeatureSchema& schema, const CESearchConfig& cfg,
                                                   const RandomSearchOptions& opt = {}, InstanceId id = 0) {
  cfg.validate();
  detail::check_inputs(x, w, schema);
  if (cfg.budget == 0) throw ParameterError("random_search_counterfactual: budget must be > 0");
  if (!(opt.proposal_scale > 0.0)) throw ParameterError("random_search_counterfactual: proposal_scale must be > 0");
  Counterfactual c;
  c.id = id;
  c.original = x;
  c.point = x;
  c.method = "random";
  c.evaluations = 1;
  c.original_class = m.predict(x);
  if (c.original_class == cfg.target_class) {
    c.valid = true;
    return detail::finish(std::move(c), m, w, schema, cfg.target_class);
  }
  Rng rng(stream_seed({cfg.seed, 0x524e44ULL, id}));
  const auto& cont = schema.continuous_indices();
  const auto& groups = schema.groups();
  std::optional<Vector> best;
  double best_cost = std::numeric_limits<double>::infinity();
  double scale = opt.proposal_scale;
  const double growth = 1.01;
  const double max_scale = 20.0 * opt.proposal_scale;
  double shrink = 1.0;

  auto clamp = [&](Vector& v) {
    for (auto j : cont) {
      const auto& b = schema.column(j).bounds;
      if (b) v[static_cast<Eigen::Index>(j)] = std::clamp(v[static_cast<Eigen::Index>(j)], b->lo, b->hi);
    }
  };

  while (c.evaluations < cfg.budget) {
    const Vector& center = best ? *best : x;
    Vector cand = center;
    const bool pull = best && rng.uniform() < 0.25;
    bool moved = false;
    if (pull) {
      for (auto j : cont) {
        if (rng.uniform() < opt.coordinate_probability) {
          const auto k = static_cast<Eigen::Index>(j);
          cand[k] = center[k] + rng.uniform() * (x[k] - center[k]);
          moved = true;
        }
      }
      for (std::size_t g = 0; g < groups.size(); ++g) {
        if (rng.uniform() < opt.group_flip_probability) {
          for (auto mj : groups[g].members) cand[static_cast<Eigen::Index>(mj)] = x[static_cast<Eigen::Index>(mj)];
          moved = true;
        }
      }
    } else {
      for (auto j : cont) {
        if (rng.uniform() < opt.coordinate_probability) {
          const auto k = static_cast<Eigen::Index>(j);
          cand[k] += scale * rng.normal() / w.w[k];
          moved = true;
        }
      }
      for (std::size_t g = 0; g < groups.size(); ++g) {
        if (rng.uniform() < opt.group_flip_probability) {
          const auto vals = schema.encode_category(g, rng.below(groups[g].n_categories()));
          for (std::size_t i = 0; i < vals.size(); ++i) cand[static_cast<Eigen::Index>(groups[g].members[i])] = vals[i];
          moved = true;
        }
      }
    }
    if (!moved) continue;
    clamp(cand);
    ++c.evaluations;
    const bool hit = m.predict(cand) == cfg.target_class;
    if (!best) {
      scale = std::min(max_scale, scale * growth);
      if (hit) {
        best = cand;
        best_cost = weighted_l1(x, cand, w);
        // Shrink from the current scale to final_scale_ratio of it over the remaining budget.
        const double remaining = static_cast<double>(cfg.budget - c.evaluations) + 1.0;
        shrink = std::pow(opt.final_scale_ratio, 1.0 / remaining);
      }
      continue;
    }
    scale *= shrink;
    if (hit) {
      const double cost = weighted_l1(x, cand, w);
      if (cost < best_cost) best_cost = cost, best = cand;
    }
  }
  if (best) {
    c.point = *best;
    c.valid = true;
  } else {
    c.reason = "no valid candidate within budget";
  }
  return detail::finish(std::move(c), m, w, schema, cfg.target_class);
}

}  // namespace cfrobust
