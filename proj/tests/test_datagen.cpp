#include <gtest/gtest.h>

#include <cmath>

#include "cfrobust/datagen.hpp"
#include "cfrobust/numeric.hpp"

using namespace cfrobust;

namespace {

std::vector<double> column(const Dataset& d, std::size_t j) {
  std::vector<double> v(d.n());
  for (std::size_t i = 0; i < d.n(); ++i) v[i] = d.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  return v;
}

NoiseSpec noisy(int level, double sigma, double flip) {
  NoiseSpec s;
  s.level = level;
  s.feature_sigma = sigma;
  s.label_flip_rate = flip;
  return s;
}

}  // namespace

TEST(MakeClassification, ClassBalanceWithinTolerance) {
  for (double balance : {0.5, 0.6, 0.8}) {
    MockSpec s;
    s.n_samples = 1001;
    s.class_balance = balance;
    const auto d = make_classification(s);
    EXPECT_NEAR(1.0 - d.positive_fraction(), balance, 1.0 / 1001 + 1e-12);
  }
}

TEST(MakeClassification, DeterministicForSeed) {
  auto s = mock_preset(2, 11);
  const auto a = make_classification(s);
  const auto b = make_classification(s);
  EXPECT_EQ(a.x, b.x);
  EXPECT_EQ(a.y, b.y);
  s.seed = 12;
  EXPECT_NE(make_classification(s).x, a.x);
}

TEST(MakeClassification, ColumnsAreStandardized) {
  const auto d = make_classification(mock_preset(2, 3));
  for (std::size_t j = 0; j < d.d(); ++j) {
    const auto v = column(d, j);
    EXPECT_NEAR(mean(v), 0.0, 1e-12);
    EXPECT_NEAR(population_sd(v), 1.0, 1e-12);
  }
}

TEST(MakeClassification, ClassesAreSeparated) {
  const auto d = make_classification(mock_preset(1, 5));
  // Projection on the class mean difference separates the clusters.
  Vector mu0 = Vector::Zero(2), mu1 = Vector::Zero(2);
  double n0 = 0, n1 = 0;
  for (std::size_t i = 0; i < d.n(); ++i) (d.y[i] ? (mu1 += d.row(i), n1++) : (mu0 += d.row(i), n0++));
  const Vector dir = mu1 / n1 - mu0 / n0;
  const double mid = 0.5 * dir.dot(mu1 / n1 + mu0 / n0);
  std::size_t right = 0;
  for (std::size_t i = 0; i < d.n(); ++i) right += (dir.dot(d.row(i)) > mid) == (d.y[i] == 1);
  EXPECT_GT(static_cast<double>(right) / static_cast<double>(d.n()), 0.85);
}

TEST(MakeClassification, InvalidSpecsThrow) {
  MockSpec s;
  s.n_informative = 3;
  EXPECT_THROW(make_classification(s), ParameterError);
  s = MockSpec{};
  s.class_balance = 1.0;
  EXPECT_THROW(make_classification(s), ParameterError);
  EXPECT_THROW(mock_preset(7), ParameterError);
}

TEST(Discretize, BinsHoldEqualShares) {
  MockSpec s;
  s.n_samples = 4000;
  const auto d = make_classification(s);
  const auto r = discretize_to_polytopes(d, {1}, 4);
  ASSERT_EQ(r.data.schema.groups().size(), 1u);
  const auto& g = r.data.schema.groups()[0];
  EXPECT_EQ(g.n_categories(), 4u);
  std::vector<std::size_t> hist(4, 0);
  for (std::size_t i = 0; i < r.data.n(); ++i) {
    const auto row = r.data.row(i);
    const auto c = r.data.schema.decode_category(0, std::span<const double>(row.data(), row.size()));
    ASSERT_TRUE(c.has_value());
    ++hist[*c];
  }
  for (auto h : hist) EXPECT_NEAR(static_cast<double>(h) / 4000.0, 0.25, 0.01);
  EXPECT_TRUE(validate_dataset(r.data).empty());
}

TEST(Discretize, DegenerateColumnIsReported) {
  Dataset d;
  d.schema = FeatureSchema::all_continuous(1);
  d.x = Matrix::Zero(10, 1);
  d.x(0, 0) = 1.0;
  d.y.assign(10, 0);
  for (std::size_t i = 0; i < 10; ++i) d.ids.push_back(i);
  EXPECT_THROW(discretize_to_polytopes(d, {0}, 4), DataError);
}

TEST(MakeMock, PresetLayouts) {
  const auto m3 = make_mock(mock_preset(3, 1));
  // 5 continuous, 2 polytopes with 3 members each, 3 binaries with 1 member.
  EXPECT_EQ(m3.clean.d(), 5u + 6u + 3u);
  EXPECT_EQ(m3.clean.schema.groups().size(), 5u);
  EXPECT_EQ(m3.omittable.size(), 5u);
  EXPECT_TRUE(validate_dataset(m3.clean).empty());
  const auto m1 = make_mock(mock_preset(1, 1));
  EXPECT_EQ(m1.clean.d(), 2u);
  EXPECT_TRUE(m1.clean.schema.groups().empty());
}

TEST(Aleatoric, LevelZeroIsIdentity) {
  const auto d = make_classification(mock_preset(2, 1));
  const auto out = inject_noise(d, NoiseSpec{}, 9);
  EXPECT_EQ(out.x, d.x);
  EXPECT_EQ(out.y, d.y);
}

TEST(Aleatoric, AddedVarianceMatchesSigma) {
  MockSpec s;
  s.n_samples = 5000;
  const auto d = make_classification(s);
  const auto out = inject_noise(d, noisy(1, 1.0, 0.0), 4);
  for (std::size_t j = 0; j < d.d(); ++j) {
    auto a = column(out, j), b = column(d, j);
    for (std::size_t i = 0; i < a.size(); ++i) a[i] -= b[i];
    const double var = std::pow(sample_sd(a), 2);
    EXPECT_GE(var, 0.9);
    EXPECT_LE(var, 1.1);
  }
}

TEST(Aleatoric, FlipRateOneNegatesLabels) {
  const auto d = make_classification(mock_preset(1, 2));
  const auto out = inject_noise(d, noisy(1, 0.0, 1.0), 4);
  for (std::size_t i = 0; i < d.n(); ++i) EXPECT_EQ(out.y[i], 1 - d.y[i]);
  EXPECT_EQ(out.x, d.x);
}

TEST(Aleatoric, FlipRateIsApproximatelyRespected) {
  MockSpec s;
  s.n_samples = 20000;
  const auto d = make_classification(s);
  const auto out = inject_noise(d, noisy(1, 0.0, 0.2), 4);
  std::size_t flips = 0;
  for (std::size_t i = 0; i < d.n(); ++i) flips += out.y[i] != d.y[i];
  EXPECT_NEAR(static_cast<double>(flips) / 20000.0, 0.2, 0.01);
}

TEST(Aleatoric, CellNoiseDoesNotDependOnOtherRows) {
  const auto d = make_classification(mock_preset(2, 1));
  std::vector<std::size_t> rows{5, 17, 300};
  const auto sub = d.subset(rows);
  const auto full = inject_noise(d, noisy(2, 0.7, 0.1), 8);
  const auto part = inject_noise(sub, noisy(2, 0.7, 0.1), 8);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    EXPECT_EQ(part.row(k), full.row(rows[k]));
    EXPECT_EQ(part.y[k], full.y[rows[k]]);
  }
}

TEST(Aleatoric, RejectsNegativeSigma) {
  const auto d = make_classification(mock_preset(1, 1));
  EXPECT_THROW(inject_aleatoric(d, noisy(1, -0.1, 0.0), 1), ParameterError);
}

TEST(Epistemic, LargeDfApproachesGaussianKurtosis) {
  Dataset d;
  d.schema = FeatureSchema::all_continuous(1);
  const std::size_t n = 200000;
  d.x = Matrix::Zero(static_cast<Eigen::Index>(n), 1);
  d.y.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) d.ids.push_back(i);
  auto spec = noisy(1, 1.0, 0.0);
  spec.noise_kind = NoiseKind::student_t;
  spec.df = 1000.0;
  const auto v = column(inject_noise(d, spec, 3), 0);
  const double m = mean(v);
  double m2 = 0, m4 = 0;
  for (double x : v) {
    m2 += (x - m) * (x - m);
    m4 += std::pow(x - m, 4);
  }
  m2 /= static_cast<double>(n);
  m4 /= static_cast<double>(n);
  EXPECT_NEAR(m4 / (m2 * m2), 3.0, 0.2);
  EXPECT_NEAR(m2, 1.0, 0.02);
}

TEST(Epistemic, OmissionDropsNamedColumn) {
  MockSpec s;
  s.n_features = 7;
  s.n_informative = 7;
  const auto d = make_classification(s);
  NoiseSpec spec;
  spec.level = 1;
  spec.omitted_columns = {2};
  const auto out = inject_noise(d, spec, 1);
  ASSERT_EQ(out.d(), 6u);
  EXPECT_FALSE(out.schema.index_of("f2").has_value());
  EXPECT_EQ(out.schema.column(2).name, "f3");
  for (std::size_t i = 0; i < d.n(); i += 97) {
    EXPECT_EQ(out.x(static_cast<Eigen::Index>(i), 1), d.x(static_cast<Eigen::Index>(i), 1));
    EXPECT_EQ(out.x(static_cast<Eigen::Index>(i), 2), d.x(static_cast<Eigen::Index>(i), 3));
  }
}

TEST(Epistemic, OmittingPolytopeMemberIsRejected) {
  const auto m = make_mock(mock_preset(3, 1));
  NoiseSpec spec;
  spec.level = 1;
  spec.omitted_columns = {m.clean.schema.groups()[0].members[0]};
  EXPECT_THROW(inject_noise(m.clean, spec, 1), ParameterError);
}

TEST(Schedule, LinearFromClean) {
  const auto s = build_noise_schedule(5, 2.0, 0.3);
  ASSERT_EQ(s.size(), 5u);
  const double sig[] = {0.0, 0.5, 1.0, 1.5, 2.0};
  const double flip[] = {0.0, 0.075, 0.15, 0.225, 0.3};
  for (int l = 0; l < 5; ++l) {
    EXPECT_EQ(s[static_cast<std::size_t>(l)].level, l);
    EXPECT_NEAR(s[static_cast<std::size_t>(l)].feature_sigma, sig[l], 1e-15);
    EXPECT_NEAR(s[static_cast<std::size_t>(l)].label_flip_rate, flip[l], 1e-15);
    EXPECT_NO_THROW(s[static_cast<std::size_t>(l)].validate());
  }
  EXPECT_THROW(build_noise_schedule(1, 1.0, 0.1), ParameterError);
  EXPECT_THROW(build_noise_schedule(3, 1.0, 1.1), ParameterError);
}

TEST(Schedule, StudentKindStartsGaussian) {
  const auto s = build_noise_schedule(3, 1.0, 0.0, NoiseKind::student_t, 4.0);
  EXPECT_EQ(s[0].noise_kind, NoiseKind::gaussian);
  EXPECT_EQ(s[2].noise_kind, NoiseKind::student_t);
  EXPECT_EQ(s[2].df, 4.0);
}
