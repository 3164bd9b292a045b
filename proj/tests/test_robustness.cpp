#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "cfrobust/robustness.hpp"
#include "fixtures.hpp"

using namespace cfrobust;

namespace {

Dataset column_data(const std::vector<double>& v, bool indicator = false) {
  Dataset d;
  d.schema = indicator ? fixtures::mixed_schema(0, {2}) : FeatureSchema::all_continuous(1);
  d.x.resize(static_cast<Eigen::Index>(v.size()), 1);
  for (std::size_t i = 0; i < v.size(); ++i) {
    d.x(static_cast<Eigen::Index>(i), 0) = v[i];
    d.y.push_back(static_cast<int>(i % 2));
    d.ids.push_back(i);
  }
  return d;
}

// Textbook linear-interpolation quantile, independent of the library.
double sort_quantile(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace

TEST(Weights, MadOfOneToFive) {
  const auto w = feature_weights(column_data({1, 2, 3, 4, 5}));
  EXPECT_DOUBLE_EQ(w.w[0], 1.0);
  EXPECT_TRUE(w.fallback_columns.empty());
  EXPECT_EQ(w.reference_split_id, "level0/train");
}

TEST(Weights, BalancedIndicator) {
  std::vector<double> v(10000);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(i % 2);
  const auto w = feature_weights(column_data(v, true));
  EXPECT_NEAR(normal_q75(), 0.6744897501960817, 1e-12);
  EXPECT_NEAR(w.w[0], 1.0 / (0.6744897501960817 * 0.5), 1e-12);
  EXPECT_NEAR(w.w[0], 2.96536, 1e-3);
}

TEST(Weights, DegenerateColumnsFallBack) {
  const auto constant = feature_weights(column_data({2, 2, 2, 2}));
  EXPECT_EQ(constant.w[0], 1.0);
  EXPECT_EQ(constant.fallback_columns, std::vector<std::size_t>{0});
  // MAD = 0 but spread present: indicator formula.
  const std::vector<double> v{0, 0, 0, 0, 0, 1, 2};
  const auto w = feature_weights(column_data(v));
  EXPECT_NEAR(w.w[0], 1.0 / (normal_q75() * population_sd(v)), 1e-12);
  EXPECT_EQ(w.fallback_columns.size(), 1u);
}

TEST(WeightedL1, HandExample) {
  const auto w = fixtures::weights({1, 0.5});
  EXPECT_DOUBLE_EQ(weighted_l1((Vector(2) << 1, 2).finished(), (Vector(2) << 3, 6).finished(), w), 4.0);
  EXPECT_EQ(weighted_l1(Vector::Ones(2), Vector::Ones(2), w), 0.0);
  EXPECT_THROW(weighted_l1(Vector::Ones(3), Vector::Ones(2), w), ParameterError);
}

TEST(WeightedL1, MetricProperties) {
  Rng rng(1);
  for (int t = 0; t < 100; ++t) {
    const auto d = static_cast<Eigen::Index>(1 + rng.below(40));
    WeightVector w;
    w.w.resize(d);
    Vector a(d), b(d), c(d);
    for (Eigen::Index j = 0; j < d; ++j) {
      w.w[j] = 0.1 + rng.uniform();
      a[j] = rng.normal(), b[j] = rng.normal(), c[j] = rng.normal();
    }
    EXPECT_EQ(weighted_l1(a, b, w), weighted_l1(b, a, w));
    EXPECT_LE(weighted_l1(a, c, w), weighted_l1(a, b, w) + weighted_l1(b, c, w) + 1e-12);
    EXPECT_GT(weighted_l1(a, b, w), 0.0);
  }
}

TEST(RelativeDistance, HandExampleAndScaling) {
  const auto w = fixtures::weights({1});
  EXPECT_DOUBLE_EQ(relative_distance((Vector(1) << 2).finished(), (Vector(1) << 4).finished(), w), 0.5);
  Rng rng(2);
  for (int t = 0; t < 20; ++t) {
    Vector a(5), b(5);
    WeightVector u;
    u.w.resize(5);
    for (int j = 0; j < 5; ++j) a[j] = rng.normal(), b[j] = rng.normal(), u.w[j] = 0.5 + rng.uniform();
    auto u7 = u;
    u7.w *= 7.0;
    EXPECT_NEAR(relative_distance(a, b, u), relative_distance(a, b, u7), 1e-14);
  }
}

TEST(RelativeDistance, ZeroBaselineNamesInstance) {
  try {
    relative_distance(Vector::Ones(2), Vector::Zero(2), fixtures::unit_weights(2), 42);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("42"), std::string::npos);
  }
}

TEST(Summarize, OneToHundred) {
  std::vector<double> v(100);
  for (int i = 0; i < 100; ++i) v[static_cast<std::size_t>(i)] = i + 1;
  const auto s = summarize_values(v, 500, 0.05, 3);
  EXPECT_NEAR(s.median, 50.5, 1e-12);
  EXPECT_NEAR(s.p10, 10.9, 1e-12);
  EXPECT_NEAR(s.p90, 90.1, 1e-12);
  EXPECT_NEAR(s.iqr, 49.5, 1e-12);
  EXPECT_LE(s.ci_low, s.median);
  EXPECT_GE(s.ci_high, s.median);
  EXPECT_EQ(s.n, 100u);
}

TEST(Summarize, ConstantValues) {
  const auto s = summarize_values(std::vector<double>(17, 0.25));
  EXPECT_EQ(s.median, 0.25);
  EXPECT_EQ(s.p10, 0.25);
  EXPECT_EQ(s.p90, 0.25);
  EXPECT_EQ(s.iqr, 0.0);
  EXPECT_EQ(s.ci_low, 0.25);
  EXPECT_EQ(s.ci_high, 0.25);
  EXPECT_THROW(summarize_values({}), ParameterError);
}

TEST(Summarize, QuantilesMatchSortOracle) {
  Rng rng(4);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> v(1 + rng.below(200));
    for (auto& x : v) x = std::exp(rng.normal());
    const auto s = summarize_values(v, 0);
    EXPECT_EQ(s.median, sort_quantile(v, 0.5));
    EXPECT_EQ(s.p10, sort_quantile(v, 0.1));
    EXPECT_EQ(s.p90, sort_quantile(v, 0.9));
    EXPECT_EQ(s.iqr, sort_quantile(v, 0.75) - sort_quantile(v, 0.25));
  }
}

TEST(Summarize, BootstrapIsSeeded) {
  std::vector<double> v;
  Rng rng(5);
  for (int i = 0; i < 50; ++i) v.push_back(rng.normal());
  const auto a = summarize_values(v, 300, 0.05, 9), b = summarize_values(v, 300, 0.05, 9);
  EXPECT_EQ(a.ci_low, b.ci_low);
  EXPECT_EQ(a.ci_high, b.ci_high);
  EXPECT_LT(a.ci_low, a.ci_high);
}

TEST(Buckets, ElevenLevels) {
  std::vector<int> levels(11);
  for (int i = 0; i <= 10; ++i) levels[static_cast<std::size_t>(i)] = i;
  const auto b = bucket_uncertainty(levels);
  ASSERT_EQ(b.size(), 11u);
  for (int l = 0; l <= 3; ++l) EXPECT_EQ(b.at(l), Bucket::low) << l;
  for (int l = 4; l <= 7; ++l) EXPECT_EQ(b.at(l), Bucket::medium) << l;
  for (int l = 8; l <= 10; ++l) EXPECT_EQ(b.at(l), Bucket::high) << l;
}

TEST(Buckets, ThreeLevelsAndErrors) {
  const auto b = bucket_uncertainty({2, 0, 1, 1});
  EXPECT_EQ(b.at(0), Bucket::low);
  EXPECT_EQ(b.at(1), Bucket::medium);
  EXPECT_EQ(b.at(2), Bucket::high);
  EXPECT_THROW(bucket_uncertainty({0, 1}), ParameterError);
}

TEST(Buckets, PartitionIsTotalAndOrdered) {
  for (int n = 3; n <= 20; ++n) {
    std::vector<int> levels(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) levels[static_cast<std::size_t>(i)] = i;
    const auto b = bucket_uncertainty(levels);
    EXPECT_EQ(b.size(), static_cast<std::size_t>(n));
    EXPECT_EQ(b.at(0), Bucket::low);
    EXPECT_EQ(b.at(n - 1), Bucket::high);
    for (int i = 1; i < n; ++i) EXPECT_LE(static_cast<int>(b.at(i - 1)), static_cast<int>(b.at(i)));
  }
}

TEST(Groups, StringRoundTrip) {
  for (auto g : {Group::all, Group::tn, Group::fn}) EXPECT_EQ(group_from_string(to_string(g)), g);
  EXPECT_THROW(group_from_string("XX"), ParameterError);
}
