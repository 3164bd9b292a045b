#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "cfrobust/datagen.hpp"
#include "cfrobust/ingest.hpp"

using namespace cfrobust;

namespace {

const std::string kData = CFROBUST_TEST_DATA;

const std::vector<std::string> kAdultCategorical{"workclass",    "education", "marital-status", "occupation",
                                                 "relationship", "race",      "sex",            "native-country"};

IngestConfig tiny_config() {
  IngestConfig c;
  c.path = kData + "/tiny.csv";
  c.target_column = "label";
  c.positive_label = "yes";
  c.categorical_columns = {"city"};
  return c;
}

std::filesystem::path write_temp(const std::string& name, const std::string& body) {
  const auto p = std::filesystem::temp_directory_path() / name;
  std::ofstream(p) << body;
  return p;
}

}  // namespace

TEST(LoadCsv, TinyFixtureIsTyped) {
  const auto t = load_csv(tiny_config());
  EXPECT_EQ(t.rows, 4u);
  ASSERT_EQ(t.columns.size(), 4u);
  EXPECT_TRUE(t.column("age").numeric);
  EXPECT_EQ(t.column("age").values[1], 51.0);
  EXPECT_FALSE(t.column("city").numeric);
  EXPECT_EQ(t.column("city").strings[2], "Lyon");
  EXPECT_TRUE(std::isnan(t.column("score").values[1]));
  EXPECT_EQ(t.column("label").strings[3], "no");
}

TEST(LoadCsv, MissingFileNamesPath) {
  auto c = tiny_config();
  c.path = kData + "/does_not_exist.csv";
  try {
    load_csv(c);
    FAIL();
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("does_not_exist.csv"), std::string::npos);
  }
}

TEST(LoadCsv, BadNumericCellNamesRowAndColumn) {
  auto c = tiny_config();
  c.path = write_temp("cfrobust_bad.csv", "a,label\n1,yes\nabc,no\n").string();
  c.categorical_columns.clear();
  try {
    load_csv(c);
    FAIL();
  } catch (const DataError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("row 2"), std::string::npos);
    EXPECT_NE(msg.find("'a'"), std::string::npos);
  }
}

TEST(LoadCsv, MissingTargetColumn) {
  auto c = tiny_config();
  c.target_column = "outcome";
  EXPECT_THROW(load_csv(c), DataError);
}

TEST(LoadCsv, AdultFixtureColumns) {
  IngestConfig c;
  c.path = kData + "/adult_sample.csv";
  c.target_column = "income";
  c.positive_label = ">50K";
  c.categorical_columns = kAdultCategorical;
  const auto t = load_csv(c);
  EXPECT_EQ(t.rows, 40u);
  ASSERT_EQ(t.columns.size(), 15u);
  std::size_t features = 0;
  for (const auto& col : t.columns) features += col.name != "income";
  EXPECT_EQ(features, 14u);
  const auto d = preprocess(t, c);
  EXPECT_TRUE(validate_dataset(d).empty());
  EXPECT_EQ(d.schema.groups().size(), kAdultCategorical.size());
  EXPECT_EQ(d.schema.continuous_indices().size(), 6u);
  for (const auto& g : d.schema.groups()) EXPECT_FALSE(g.drop_one);
  // "?" cells become their own category.
  EXPECT_TRUE(d.schema.index_of("workclass=__missing").has_value());
}

TEST(Preprocess, TinyEncoding) {
  const auto c = tiny_config();
  const auto d = preprocess(load_csv(c), c);
  EXPECT_EQ(d.n(), 4u);
  EXPECT_EQ(d.y, (std::vector<int>{1, 0, 1, 0}));
  EXPECT_EQ(d.ids, (std::vector<InstanceId>{0, 1, 2, 3}));
  // Median imputation of the missing score, then z-scoring.
  ASSERT_TRUE(d.schema.index_of("city=Lyon").has_value());
  EXPECT_EQ(d.x(0, static_cast<Eigen::Index>(*d.schema.index_of("city=Lyon"))), 1.0);
  const auto s = static_cast<Eigen::Index>(*d.schema.index_of("score"));
  EXPECT_NEAR(d.x.col(s).mean(), 0.0, 1e-12);
  EXPECT_DOUBLE_EQ(d.x(1, s), 0.0);
  EXPECT_DOUBLE_EQ(d.x(2, s), 0.75 / std::sqrt(0.28125));
  EXPECT_TRUE(validate_dataset(d).empty());
}

TEST(Preprocess, RareCategoriesMergeIntoOther) {
  std::string body = "cat,x,y\n";
  for (int i = 0; i < 500; ++i) body += "A," + std::to_string(i) + ",1\n";
  for (int i = 0; i < 250; ++i) body += "B," + std::to_string(i) + ",0\n";
  for (int i = 0; i < 40; ++i) body += "C," + std::to_string(i) + ",0\n";
  IngestConfig c;
  c.path = write_temp("cfrobust_freq.csv", body).string();
  c.target_column = "y";
  c.positive_label = "1";
  c.categorical_columns = {"cat"};
  c.min_category_frequency = 300;
  const auto d = preprocess(load_csv(c), c);
  const auto& g = d.schema.groups().at(0);
  ASSERT_EQ(g.members.size(), 2u);
  EXPECT_EQ(d.schema.column(g.members[0]).name, "cat=A");
  EXPECT_EQ(d.schema.column(g.members[1]).name, "cat=__other");
  EXPECT_EQ(d.x.col(static_cast<Eigen::Index>(g.members[1])).sum(), 290.0);
  EXPECT_EQ(d.x.col(static_cast<Eigen::Index>(g.members[0])).sum(), 500.0);
}

TEST(Preprocess, SingleCategoryIsDegenerate) {
  IngestConfig c;
  c.path = write_temp("cfrobust_single.csv", "cat,y\nA,1\nA,0\nB,1\n").string();
  c.target_column = "y";
  c.positive_label = "1";
  c.categorical_columns = {"cat"};
  c.min_category_frequency = 3;
  EXPECT_THROW(preprocess(load_csv(c), c), DataError);
}

TEST(Preprocess, SubsampleFloorAndDeterminism) {
  std::string body = "x,y\n";
  for (int i = 0; i < 1234; ++i) body += std::to_string(i * 0.5) + "," + std::to_string(i % 3 == 0) + "\n";
  IngestConfig c;
  c.path = write_temp("cfrobust_sub.csv", body).string();
  c.target_column = "y";
  c.positive_label = "1";
  c.subsample_fraction = 0.10;
  c.seed = 4;
  const auto raw = load_csv(c);
  const auto a = preprocess(raw, c), b = preprocess(raw, c);
  EXPECT_EQ(a.n(), 123u);
  EXPECT_EQ(a.x, b.x);
  EXPECT_EQ(a.ids, b.ids);
  c.subsample_fraction = 1.0;
  EXPECT_EQ(preprocess(raw, c).n(), 1234u);
}

TEST(Split, SizesDisjointAndStratified) {
  MockSpec s;
  s.n_samples = 1000;
  s.class_balance = 0.7;
  const auto d = make_classification(s);
  const auto sp = train_test_split(d, 0.3, 5);
  EXPECT_EQ(sp.test.n(), 300u);
  EXPECT_EQ(sp.train.n(), 700u);
  std::set<InstanceId> tr(sp.train.ids.begin(), sp.train.ids.end());
  for (auto id : sp.test.ids) EXPECT_FALSE(tr.count(id));
  EXPECT_NEAR(sp.test.positive_fraction(), d.positive_fraction(), 0.02);
  EXPECT_NEAR(sp.train.positive_fraction(), d.positive_fraction(), 0.02);
  const auto again = train_test_split(d, 0.3, 5);
  EXPECT_EQ(again.test.ids, sp.test.ids);
  EXPECT_NE(train_test_split(d, 0.3, 6).test.ids, sp.test.ids);
}

TEST(Split, TooSmallForStratification) {
  Dataset d;
  d.schema = FeatureSchema::all_continuous(1);
  d.x = Matrix::Zero(5, 1);
  d.y = {0, 0, 0, 0, 1};
  d.ids = {0, 1, 2, 3, 4};
  EXPECT_THROW(train_test_split(d, 0.3, 1), DataError);
  EXPECT_THROW(train_test_split(d, 1.0, 1), ParameterError);
}

TEST(RealNoise, CorruptionKeepsGroupsValid) {
  IngestConfig c;
  c.path = kData + "/adult_sample.csv";
  c.target_column = "income";
  c.positive_label = ">50K";
  c.categorical_columns = kAdultCategorical;
  const auto d = preprocess(load_csv(c), c);
  NoiseSpec spec;
  spec.level = 2;
  spec.feature_sigma = 0.5;
  spec.label_flip_rate = 0.5;
  const auto out = inject_real_noise(d, spec, 3);
  EXPECT_TRUE(validate_dataset(out).empty());
  EXPECT_NE(out.x, d.x);
  EXPECT_EQ(inject_real_noise(d, NoiseSpec{}, 3).x, d.x);
  const auto all = corrupt_categorical(d, 1.0, 1, 3);
  EXPECT_TRUE(validate_dataset(all).empty());
}
