#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <json.hpp>

#include "cfrobust/core.hpp"
#include "cfrobust/rng.hpp"

namespace cfrobust {

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + exp(t)) without overflow.
inline double softplus(double t) { return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t)); }

/// Binary classifier interface. predict(x) == 1 exactly when
/// predict_proba(x) >= 0.5.
class Classifier {
 public:
  virtual ~Classifier() = default;

  virtual std::string kind() const = 0;
  virtual double predict_proba(const Vector& x) const = 0;

  int predict(const Vector& x) const { return predict_proba(x) >= 0.5 ? 1 : 0; }

  virtual Vector predict_proba_batch(const Matrix& x) const {
    Vector out(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) out[i] = predict_proba(x.row(i).transpose());
    return out;
  }
};

// ---------------------------------------------------------------------------
// Linear models
// ---------------------------------------------------------------------------

class LinearModel : public Classifier {
 public:
  LinearModel() = default;
  LinearModel(Vector weights, double bias) : weights_(std::move(weights)), bias_(bias) {}

  std::string kind() const override { return "linear"; }
  double score(const Vector& x) const { return weights_.dot(x) + bias_; }
  double predict_proba(const Vector& x) const override { return sigmoid(score(x)); }
  Vector predict_proba_batch(const Matrix& x) const override {
    Vector z = x * weights_;
    z.array() += bias_;
    return z.unaryExpr([](double v) { return sigmoid(v); });
  }

  const Vector& weights() const { return weights_; }
  double bias() const { return bias_; }

  nlohmann::json to_json() const {
    return {{"kind", "linear"}, {"weights", std::vector<double>(weights_.data(), weights_.data() + weights_.size())},
            {"bias", bias_}};
  }

 private:
  Vector weights_;
  double bias_ = 0.0;
};

/// Value, gradient and Hessian of mean log-loss + (l2/2)||w||^2 over the
/// parameter vector theta = (w, bias). The bias is not penalized.
struct ObjectiveEval {
  double value = 0.0;
  Vector gradient;
  Matrix hessian;
};

inline ObjectiveEval logistic_objective(const Dataset& train, double l2, const Vector& theta, bool with_hessian = true) {
  const auto n = static_cast<double>(train.n());
  const auto d = static_cast<Eigen::Index>(train.d());
  const Vector w = theta.head(d);
  const double b = theta[d];
  Vector z = train.x * w;
  z.array() += b;

  ObjectiveEval out;
  Vector resid(z.size());
  Vector curv(z.size());
  double loss = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    const bool pos = train.y[static_cast<std::size_t>(i)] == 1;
    loss += pos ? softplus(-z[i]) : softplus(z[i]);
    const double p = sigmoid(z[i]);
    resid[i] = p - (pos ? 1.0 : 0.0);
    curv[i] = p * (1.0 - p);
  }
  out.value = loss / n + 0.5 * l2 * w.squaredNorm();
  out.gradient.resize(d + 1);
  out.gradient.head(d) = train.x.transpose() * resid / n + l2 * w;
  out.gradient[d] = resid.sum() / n;
  if (with_hessian) {
    Matrix xa(train.x.rows(), d + 1);
    xa.leftCols(d) = train.x;
    xa.col(d).setOnes();
    out.hessian = xa.transpose() * curv.asDiagonal() * xa / n;
    out.hessian.topLeftCorner(d, d).diagonal().array() += l2;
  }
  return out;
}

namespace detail {

inline void require_two_classes(const Dataset& train, const char* who) {
  if (train.n() == 0) throw DataError(std::string(who) + ": empty training data");
  std::size_t pos = 0;
  for (int v : train.y) pos += (v == 1);
  if (pos == 0 || pos == train.n()) throw DataError(std::string(who) + ": training data contains a single class");
}

// Damped Newton on the strictly convex regularized log-loss.
inline Vector newton_logistic(const Dataset& train, double l2) {
  const auto d = static_cast<Eigen::Index>(train.d());
  Vector theta = Vector::Zero(d + 1);
  auto eval = logistic_objective(train, l2, theta);
  for (int iter = 0; iter < 200; ++iter) {
    if (eval.gradient.norm() <= 1e-12) break;
    const Vector step = eval.hessian.ldlt().solve(-eval.gradient);
    const double slope = eval.gradient.dot(step);
    double t = 1.0;
    for (int ls = 0; ls < 60; ++ls) {
      const Vector cand = theta + t * step;
      auto ce = logistic_objective(train, l2, cand, false);
      if (ce.value <= eval.value + 1e-4 * t * slope) break;
      t *= 0.5;
    }
    const Vector next = theta + t * step;
    auto next_eval = logistic_objective(train, l2, next);
    const bool stalled = (next - theta).norm() <= 1e-15 * (1.0 + theta.norm());
    theta = next;
    eval = std::move(next_eval);
    if (stalled) break;
  }
  if (!(eval.gradient.norm() <= 1e-6))
    throw ConvergenceError("logistic fit: gradient norm " + std::to_string(eval.gradient.norm()) + " above 1e-6");
  return theta;
}

}  // namespace detail

/// Regularized logistic regression: minimizes mean log-loss + (l2/2)||w||^2.
inline LinearModel fit_logistic(const Dataset& train, double l2) {
  if (!(l2 > 0.0)) throw ParameterError("fit_logistic: l2 must be > 0");
  detail::require_two_classes(train, "fit_logistic");
  const Vector theta = detail::newton_logistic(train, l2);
  const auto d = static_cast<Eigen::Index>(train.d());
  return LinearModel(theta.head(d), theta[d]);
}

/// Gaussian (Laplace) posterior over (w, bias). Predictions use the posterior
/// mean as a plug-in linear model.
class BayesianLinearModel : public Classifier {
 public:
  BayesianLinearModel() = default;
  BayesianLinearModel(Vector posterior_mean, Matrix posterior_cov, double ridge = 0.0)
      : mean_(std::move(posterior_mean)), cov_(std::move(posterior_cov)), ridge_(ridge) {}

  std::string kind() const override { return "bayes_linear"; }
  double predict_proba(const Vector& x) const override { return mean_model().predict_proba(x); }
  Vector predict_proba_batch(const Matrix& x) const override { return mean_model().predict_proba_batch(x); }

  const Vector& posterior_mean() const { return mean_; }
  const Matrix& posterior_cov() const { return cov_; }
  // Ridge added to the Hessian to make it invertible (0 when none was needed).
  double ridge_repair() const { return ridge_; }
  std::size_t dim() const { return static_cast<std::size_t>(mean_.size()) - 1; }

  LinearModel mean_model() const {
    const auto d = mean_.size() - 1;
    return LinearModel(mean_.head(d), mean_[d]);
  }

  BayesianLinearModel with_scaled_covariance(double factor) const {
    return BayesianLinearModel(mean_, cov_ * factor, ridge_);
  }

  /// `s` posterior draws as linear models. Draws come in antithetic pairs
  /// (mean + Lz, mean - Lz), so for even `s` the draw average equals the
  /// posterior mean.
  std::vector<LinearModel> draw(std::size_t s, std::uint64_t seed) const {
    const Eigen::LLT<Matrix> llt(cov_);
    const Matrix l = llt.matrixL();
    const auto d = mean_.size() - 1;
    Rng rng(stream_seed({seed, 0x44524157ULL}));
    std::vector<LinearModel> out;
    out.reserve(s);
    Vector z(mean_.size());
    while (out.size() < s) {
      for (Eigen::Index k = 0; k < z.size(); ++k) z[k] = rng.normal();
      const Vector delta = l * z;
      const Vector plus = mean_ + delta;
      out.emplace_back(plus.head(d), plus[d]);
      if (out.size() < s) {
        const Vector minus = mean_ - delta;
        out.emplace_back(minus.head(d), minus[d]);
      }
    }
    return out;
  }

  nlohmann::json to_json() const {
    nlohmann::json cov = nlohmann::json::array();
    for (Eigen::Index i = 0; i < cov_.rows(); ++i) {
      std::vector<double> r(static_cast<std::size_t>(cov_.cols()));
      for (Eigen::Index j = 0; j < cov_.cols(); ++j) r[static_cast<std::size_t>(j)] = cov_(i, j);
      cov.push_back(r);
    }
    return {{"kind", "bayes_linear"},
            {"posterior_mean", std::vector<double>(mean_.data(), mean_.data() + mean_.size())},
            {"posterior_cov", cov},
            {"ridge_repair", ridge_}};
  }

 private:
  Vector mean_;
  Matrix cov_;
  double ridge_ = 0.0;
};

/// Negative log posterior sum_i loss_i + ||w||^2 / (2 prior_variance), with a
/// flat prior on the bias. Equals n times the logistic objective at
/// l2 = 1 / (n prior_variance).
inline ObjectiveEval negative_log_posterior(const Dataset& train, double prior_variance, const Vector& theta) {
  const auto n = static_cast<double>(train.n());
  auto e = logistic_objective(train, 1.0 / (n * prior_variance), theta);
  e.value *= n;
  e.gradient *= n;
  e.hessian *= n;
  return e;
}

/// Laplace approximation: MAP under N(0, prior_variance I) on the weights and
/// covariance = inverse Hessian of the negative log posterior at the MAP.
/// A singular Hessian is repaired with the smallest ridge 10^k that makes it
/// positive definite; the ridge is reported by ridge_repair().
inline BayesianLinearModel fit_bayes_logistic(const Dataset& train, double prior_variance) {
  if (!(prior_variance > 0.0)) throw ParameterError("fit_bayes_logistic: prior_variance must be > 0");
  detail::require_two_classes(train, "fit_bayes_logistic");
  const auto n = static_cast<double>(train.n());
  const Vector theta = detail::newton_logistic(train, 1.0 / (n * prior_variance));
  Matrix h = negative_log_posterior(train, prior_variance, theta).hessian;
  double ridge = 0.0;
  Eigen::LLT<Matrix> llt(h);
  const double scale = std::max(1.0, h.diagonal().cwiseAbs().maxCoeff());
  for (int k = -12; llt.info() != Eigen::Success || llt.matrixL().toDenseMatrix().diagonal().minCoeff() <= 0.0; ++k) {
    if (k > 6) throw ConvergenceError("fit_bayes_logistic: Hessian could not be repaired");
    ridge = scale * std::pow(10.0, k);
    llt.compute(h + ridge * Matrix::Identity(h.rows(), h.cols()));
  }
  Matrix cov = llt.solve(Matrix::Identity(h.rows(), h.cols()));
  cov = 0.5 * (cov + cov.transpose());
  return BayesianLinearModel(theta, std::move(cov), ridge);
}

// ---------------------------------------------------------------------------
// Random forest
// ---------------------------------------------------------------------------

struct RandomForestParams {
  std::size_t n_trees = 100;
  std::size_t max_depth = 8;
  std::size_t min_leaf = 5;
  std::uint64_t seed = 0;
  bool bootstrap = true;
  std::size_t max_features = 0;  // 0 selects ceil(sqrt(d))
};

struct TreeNode {
  int feature = -1;  // -1 for leaves
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;  // fraction of positive training rows reaching the node
};

class DecisionTree {
 public:
  explicit DecisionTree(std::vector<TreeNode> nodes) : nodes_(std::move(nodes)) {}

  double leaf_value(const Vector& x) const {
    int k = 0;
    while (nodes_[static_cast<std::size_t>(k)].feature >= 0) {
      const auto& nd = nodes_[static_cast<std::size_t>(k)];
      k = x[nd.feature] <= nd.threshold ? nd.left : nd.right;
    }
    return nodes_[static_cast<std::size_t>(k)].value;
  }
  int vote(const Vector& x) const { return leaf_value(x) >= 0.5 ? 1 : 0; }
  const std::vector<TreeNode>& nodes() const { return nodes_; }

 private:
  std::vector<TreeNode> nodes_;
};

class RandomForest : public Classifier {
 public:
  explicit RandomForest(std::vector<DecisionTree> trees) : trees_(std::move(trees)) {}

  std::string kind() const override { return "random_forest"; }
  // Fraction of trees voting for class 1.
  double predict_proba(const Vector& x) const override {
    std::size_t votes = 0;
    for (const auto& t : trees_) votes += static_cast<std::size_t>(t.vote(x));
    return static_cast<double>(votes) / static_cast<double>(trees_.size());
  }
  const std::vector<DecisionTree>& trees() const { return trees_; }

 private:
  std::vector<DecisionTree> trees_;
};

namespace detail {

inline double gini_sum(double pos, double total) {
  if (total <= 0.0) return 0.0;
  const double p = pos / total;
  return total * 2.0 * p * (1.0 - p);  // n * Gini
}

class TreeBuilder {
 public:
  TreeBuilder(const Dataset& data, const RandomForestParams& params, Rng& rng)
      : data_(data), params_(params), rng_(rng) {
    const auto d = data.d();
    n_features_ = params.max_features == 0
                      ? static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(d))))
                      : std::min(params.max_features, d);
    n_features_ = std::max<std::size_t>(n_features_, 1);
  }

  std::vector<TreeNode> build(std::vector<std::size_t> rows) {
    nodes_.clear();
    grow(std::move(rows), 0);
    return std::move(nodes_);
  }

 private:
  int grow(std::vector<std::size_t> rows, std::size_t depth) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.emplace_back();
    double pos = 0.0;
    for (auto r : rows) pos += data_.y[r];
    const double total = static_cast<double>(rows.size());
    nodes_[static_cast<std::size_t>(id)].value = total > 0 ? pos / total : 0.0;
    if (depth >= params_.max_depth || rows.size() < 2 * params_.min_leaf || pos == 0.0 || pos == total) return id;

    // Feature subset via partial Fisher-Yates.
    std::vector<std::size_t> feats(data_.d());
    std::iota(feats.begin(), feats.end(), 0);
    for (std::size_t k = 0; k < n_features_; ++k) std::swap(feats[k], feats[k + rng_.below(feats.size() - k)]);
    feats.resize(n_features_);

    const double parent = gini_sum(pos, total);
    double best = parent;
    int best_feature = -1;
    double best_threshold = 0.0;
    std::vector<std::size_t> order = rows;
    const auto min_leaf = std::max<std::size_t>(params_.min_leaf, 1);
    for (auto f : feats) {
      const auto col = static_cast<Eigen::Index>(f);
      std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) {
        return data_.x(static_cast<Eigen::Index>(a), col) < data_.x(static_cast<Eigen::Index>(b), col);
      });
      double left_pos = 0.0;
      for (std::size_t k = 1; k < order.size(); ++k) {
        left_pos += data_.y[order[k - 1]];
        if (k < min_leaf || order.size() - k < min_leaf) continue;
        const double lo = data_.x(static_cast<Eigen::Index>(order[k - 1]), col);
        const double hi = data_.x(static_cast<Eigen::Index>(order[k]), col);
        if (!(lo < hi)) continue;
        const double imp =
            gini_sum(left_pos, static_cast<double>(k)) + gini_sum(pos - left_pos, static_cast<double>(order.size() - k));
        if (imp < best - 1e-12) {
          best = imp;
          best_feature = static_cast<int>(f);
          best_threshold = 0.5 * (lo + hi);
        }
      }
    }
    if (best_feature < 0) return id;

    std::vector<std::size_t> left, right;
    for (auto r : rows)
      (data_.x(static_cast<Eigen::Index>(r), best_feature) <= best_threshold ? left : right).push_back(r);
    rows.clear();
    rows.shrink_to_fit();
    const int l = grow(std::move(left), depth + 1);
    const int r = grow(std::move(right), depth + 1);
    auto& nd = nodes_[static_cast<std::size_t>(id)];
    nd.feature = best_feature;
    nd.threshold = best_threshold;
    nd.left = l;
    nd.right = r;
    return id;
  }

  const Dataset& data_;
  const RandomForestParams& params_;
  Rng& rng_;
  std::size_t n_features_ = 1;
  std::vector<TreeNode> nodes_;
};

}  // namespace detail

/// Bagged CART trees with Gini splits, a random feature subset per split, and
/// thresholds at midpoints between consecutive distinct values (x <= t goes left).
inline RandomForest fit_random_forest(const Dataset& train, const RandomForestParams& params) {
  if (train.n() == 0) throw DataError("fit_random_forest: empty training data");
  if (params.n_trees == 0) throw ParameterError("fit_random_forest: n_trees must be >= 1");
  std::vector<DecisionTree> trees;
  trees.reserve(params.n_trees);
  for (std::size_t t = 0; t < params.n_trees; ++t) {
    Rng rng(stream_seed({params.seed, 0x5452454553ULL, t}));
    std::vector<std::size_t> rows(train.n());
    if (params.bootstrap) {
      for (auto& r : rows) r = rng.below(train.n());
      std::sort(rows.begin(), rows.end());
    } else {
      std::iota(rows.begin(), rows.end(), 0);
    }
    detail::TreeBuilder builder(train, params, rng);
    trees.emplace_back(builder.build(std::move(rows)));
  }
  return RandomForest(std::move(trees));
}

// ---------------------------------------------------------------------------
// Feed-forward network
// ---------------------------------------------------------------------------

struct MlpParams {
  std::vector<std::size_t> hidden_sizes{32, 16};
  std::size_t epochs = 200;
  double learning_rate = 0.05;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
};

/// Fully connected ReLU network with a sigmoid output unit.
class Mlp : public Classifier {
 public:
  Mlp(std::size_t n_inputs, const std::vector<std::size_t>& hidden, std::uint64_t seed) {
    Rng rng(stream_seed({seed, 0x4d4c50ULL}));
    std::size_t fan_in = n_inputs;
    std::vector<std::size_t> sizes = hidden;
    sizes.push_back(1);
    for (std::size_t k = 0; k < sizes.size(); ++k) {
      const bool output = k + 1 == sizes.size();
      // He initialization for ReLU layers, Glorot for the output.
      const double sd = output ? std::sqrt(1.0 / static_cast<double>(fan_in)) : std::sqrt(2.0 / static_cast<double>(fan_in));
      Matrix w(static_cast<Eigen::Index>(sizes[k]), static_cast<Eigen::Index>(fan_in));
      for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = sd * rng.normal();
      weights_.push_back(std::move(w));
      biases_.push_back(Vector::Zero(static_cast<Eigen::Index>(sizes[k])));
      fan_in = sizes[k];
    }
  }

  std::string kind() const override { return "mlp"; }

  double predict_proba(const Vector& x) const override {
    Vector a = x;
    for (std::size_t k = 0; k < weights_.size(); ++k) {
      Vector z = weights_[k] * a + biases_[k];
      if (k + 1 < weights_.size()) z = z.cwiseMax(0.0);
      a = std::move(z);
    }
    return sigmoid(a[0]);
  }

  Vector predict_proba_batch(const Matrix& x) const override {
    Matrix a = x.transpose();
    for (std::size_t k = 0; k < weights_.size(); ++k) {
      Matrix z = (weights_[k] * a).colwise() + biases_[k];
      if (k + 1 < weights_.size()) z = z.cwiseMax(0.0);
      a = std::move(z);
    }
    return a.row(0).transpose().unaryExpr([](double v) { return sigmoid(v); });
  }

  std::size_t n_parameters() const {
    std::size_t n = 0;
    for (std::size_t k = 0; k < weights_.size(); ++k) n += static_cast<std::size_t>(weights_[k].size() + biases_[k].size());
    return n;
  }

  // Flattened as [W0 (column-major), b0, W1, b1, ...].
  Vector parameters() const {
    Vector out(static_cast<Eigen::Index>(n_parameters()));
    Eigen::Index o = 0;
    for (std::size_t k = 0; k < weights_.size(); ++k) {
      out.segment(o, weights_[k].size()) = Eigen::Map<const Vector>(weights_[k].data(), weights_[k].size());
      o += weights_[k].size();
      out.segment(o, biases_[k].size()) = biases_[k];
      o += biases_[k].size();
    }
    return out;
  }

  void set_parameters(const Vector& p) {
    if (static_cast<std::size_t>(p.size()) != n_parameters()) throw ParameterError("Mlp: parameter size mismatch");
    Eigen::Index o = 0;
    for (std::size_t k = 0; k < weights_.size(); ++k) {
      Eigen::Map<Vector>(weights_[k].data(), weights_[k].size()) = p.segment(o, weights_[k].size());
      o += weights_[k].size();
      biases_[k] = p.segment(o, biases_[k].size());
      o += biases_[k].size();
    }
  }

  /// Mean log-loss over the batch (rows of `x`) and its gradient with respect
  /// to parameters(), by backpropagation.
  std::pair<double, Vector> loss_and_gradient(const Matrix& x, std::span<const int> y) const {
    const auto m = x.rows();
    std::vector<Matrix> acts{x.transpose()};
    std::vector<Matrix> pre;
    for (std::size_t k = 0; k < weights_.size(); ++k) {
      Matrix z = (weights_[k] * acts.back()).colwise() + biases_[k];
      pre.push_back(z);
      acts.push_back(k + 1 < weights_.size() ? Matrix(z.cwiseMax(0.0)) : z);
    }
    const Matrix& logits = acts.back();
    double loss = 0.0;
    Matrix delta(1, m);
    for (Eigen::Index i = 0; i < m; ++i) {
      const double z = logits(0, i);
      const bool pos = y[static_cast<std::size_t>(i)] == 1;
      loss += pos ? softplus(-z) : softplus(z);
      delta(0, i) = (sigmoid(z) - (pos ? 1.0 : 0.0)) / static_cast<double>(m);
    }
    loss /= static_cast<double>(m);

    std::vector<Matrix> gw(weights_.size());
    std::vector<Vector> gb(weights_.size());
    for (std::size_t k = weights_.size(); k-- > 0;) {
      gw[k] = delta * acts[k].transpose();
      gb[k] = delta.rowwise().sum();
      if (k > 0) {
        Matrix back = weights_[k].transpose() * delta;
        back.array() *= (pre[k - 1].array() > 0.0).cast<double>();
        delta = std::move(back);
      }
    }
    Vector grad(static_cast<Eigen::Index>(n_parameters()));
    Eigen::Index o = 0;
    for (std::size_t k = 0; k < weights_.size(); ++k) {
      grad.segment(o, gw[k].size()) = Eigen::Map<const Vector>(gw[k].data(), gw[k].size());
      o += gw[k].size();
      grad.segment(o, gb[k].size()) = gb[k];
      o += gb[k].size();
    }
    return {loss, grad};
  }

 private:
  std::vector<Matrix> weights_;
  std::vector<Vector> biases_;
};

/// Mini-batch gradient descent on mean log-loss. Throws ConvergenceError when
/// the loss becomes non-finite.
inline Mlp fit_mlp(const Dataset& train, const MlpParams& params) {
  if (train.n() == 0) throw DataError("fit_mlp: empty training data");
  if (params.batch_size == 0) throw ParameterError("fit_mlp: batch_size must be >= 1");
  Mlp net(train.d(), params.hidden_sizes, params.seed);
  if (params.learning_rate == 0.0) return net;
  Rng rng(stream_seed({params.seed, 0x45504f4348ULL}));
  std::vector<std::size_t> order(train.n());
  std::iota(order.begin(), order.end(), 0);
  Vector theta = net.parameters();
  for (std::size_t epoch = 0; epoch < params.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    for (std::size_t start = 0; start < order.size(); start += params.batch_size) {
      const auto stop = std::min(order.size(), start + params.batch_size);
      Matrix xb(static_cast<Eigen::Index>(stop - start), train.x.cols());
      std::vector<int> yb;
      for (std::size_t k = start; k < stop; ++k) {
        xb.row(static_cast<Eigen::Index>(k - start)) = train.x.row(static_cast<Eigen::Index>(order[k]));
        yb.push_back(train.y[order[k]]);
      }
      auto [loss, grad] = net.loss_and_gradient(xb, yb);
      if (!std::isfinite(loss) || !grad.allFinite())
        throw ConvergenceError("fit_mlp: loss diverged at epoch " + std::to_string(epoch));
      theta -= params.learning_rate * grad;
      net.set_parameters(theta);
    }
  }
  return net;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

inline std::vector<int> predict_all(const Classifier& m, const Dataset& d) {
  const Vector p = m.predict_proba_batch(d.x);
  std::vector<int> out(d.n());
  for (std::size_t i = 0; i < d.n(); ++i) out[i] = p[static_cast<Eigen::Index>(i)] >= 0.5 ? 1 : 0;
  return out;
}

inline double accuracy(const Classifier& m, const Dataset& d) {
  if (d.n() == 0) throw DataError("accuracy: empty dataset");
  const auto pred = predict_all(m, d);
  std::size_t ok = 0;
  for (std::size_t i = 0; i < d.n(); ++i) ok += (pred[i] == d.y[i]);
  return static_cast<double>(ok) / static_cast<double>(d.n());
}

struct ConfusionSplit {
  std::vector<InstanceId> tn, fn, tp, fp;
};

inline ConfusionSplit confusion_split(const Classifier& m, const Dataset& d) {
  if (d.n() == 0) throw DataError("confusion_split: empty dataset");
  const auto pred = predict_all(m, d);
  ConfusionSplit out;
  for (std::size_t i = 0; i < d.n(); ++i) {
    const int y = d.y[i];
    const int p = pred[i];
    if (y == 0 && p == 0) out.tn.push_back(d.ids[i]);
    else if (y == 1 && p == 0) out.fn.push_back(d.ids[i]);
    else if (y == 1 && p == 1) out.tp.push_back(d.ids[i]);
    else out.fp.push_back(d.ids[i]);
  }
  return out;
}

}  // namespace cfrobust
