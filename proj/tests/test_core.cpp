#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <set>
#include <sstream>

#include "cfrobust/core.hpp"
#include "fixtures.hpp"

using namespace cfrobust;

namespace {

Dataset small_dataset() {
  Dataset d;
  d.schema = fixtures::mixed_schema(2, {3});
  d.x.resize(4, 4);
  d.x << 0.1, 1.0, 0, 0,  //
      0.2, -1.0, 1, 0,    //
      0.3, 2.0, 0, 1,     //
      0.4, 0.5, 0, 0;
  d.y = {0, 1, 0, 1};
  d.ids = {10, 11, 12, 13};
  return d;
}

Counterfactual cf(InstanceId id, bool valid) {
  Counterfactual c;
  c.id = id;
  c.valid = valid;
  return c;
}

}  // namespace

TEST(Schema, RejectsOverlappingGroups) {
  std::vector<ColumnSpec> cols{ColumnSpec::indicator("a", "g"), ColumnSpec::indicator("b", "g")};
  std::vector<PolytopeGroup> groups{{"g", {0, 1}, true}, {"h", {1}, true}};
  EXPECT_THROW(FeatureSchema(cols, groups), ParameterError);
}

TEST(Schema, RejectsIndicatorOutsideAnyGroup) {
  std::vector<ColumnSpec> cols{ColumnSpec::continuous("x"), ColumnSpec::indicator("a", "g")};
  EXPECT_THROW(FeatureSchema(cols, {}), ParameterError);
}

TEST(Schema, EncodeDecodeRoundTripDropOne) {
  const auto s = fixtures::mixed_schema(1, {2, 3, 4});
  std::vector<double> row(s.size(), 0.0);
  for (std::size_t g = 0; g < s.groups().size(); ++g) {
    for (std::size_t c = 0; c < s.groups()[g].n_categories(); ++c) {
      const auto vals = s.encode_category(g, c);
      for (std::size_t k = 0; k < vals.size(); ++k) row[s.groups()[g].members[k]] = vals[k];
      const auto back = s.decode_category(g, row);
      ASSERT_TRUE(back.has_value());
      EXPECT_EQ(*back, c);
    }
  }
}

TEST(Schema, EncodeDecodeRoundTripFull) {
  const auto s = fixtures::mixed_schema(0, {3, 5}, false);
  std::vector<double> row(s.size(), 0.0);
  for (std::size_t g = 0; g < s.groups().size(); ++g) {
    EXPECT_EQ(s.groups()[g].n_categories(), s.groups()[g].members.size());
    for (std::size_t c = 0; c < s.groups()[g].n_categories(); ++c) {
      const auto vals = s.encode_category(g, c);
      EXPECT_EQ(std::count(vals.begin(), vals.end(), 1.0), 1);
      for (std::size_t k = 0; k < vals.size(); ++k) row[s.groups()[g].members[k]] = vals[k];
      EXPECT_EQ(s.decode_category(g, row), c);
    }
  }
}

TEST(Schema, DecodeRejectsInvalidCodes) {
  const auto s = fixtures::mixed_schema(0, {3});
  EXPECT_FALSE(s.decode_category(0, std::vector<double>{1, 1}).has_value());
  EXPECT_FALSE(s.decode_category(0, std::vector<double>{0.5, 0}).has_value());
  const auto full = fixtures::mixed_schema(0, {3}, false);
  EXPECT_FALSE(full.decode_category(0, std::vector<double>{0, 0, 0}).has_value());
}

TEST(Schema, JsonRoundTrip) {
  std::vector<ColumnSpec> cols{ColumnSpec::continuous("age", Bounds{0, 120}), ColumnSpec::indicator("c=a", "c"),
                               ColumnSpec::indicator("c=b", "c")};
  FeatureSchema s(cols, {{"c", {1, 2}, false}});
  EXPECT_EQ(FeatureSchema::from_json(s.to_json()), s);
}

TEST(Schema, WithoutColumnsRemapsGroups) {
  const auto s = fixtures::mixed_schema(3, {3});
  const auto r = s.without_columns({1});
  ASSERT_EQ(r.size(), 4u);
  EXPECT_EQ(r.groups()[0].members, (std::vector<std::size_t>{2, 3}));
  EXPECT_THROW(s.without_columns({3}), ParameterError);
}

TEST(ValidateDataset, ValidDatasetGivesEmptyReport) {
  Dataset d;
  d.schema = FeatureSchema::all_continuous(2);
  d.x.resize(4, 2);
  d.x << 1, 2, 3, 4, 5, 6, 7, 8;
  d.y = {0, 1, 1, 0};
  d.ids = {0, 1, 2, 3};
  EXPECT_TRUE(validate_dataset(d).empty());
  EXPECT_TRUE(validate_dataset(small_dataset()).empty());
}

TEST(ValidateDataset, GroupSumTwoNamesRowAndGroup) {
  auto d = small_dataset();
  d.x(2, 2) = 1.0;  // row 2 now has both indicators set
  const auto r = validate_dataset(d);
  ASSERT_EQ(r.size(), 1u);
  EXPECT_EQ(r[0].kind, Violation::Kind::group_sum);
  EXPECT_EQ(r[0].row, 2u);
  EXPECT_EQ(r[0].group, "g0");
}

TEST(ValidateDataset, FractionalIndicatorNamesColumn) {
  auto d = small_dataset();
  d.x(3, 3) = 0.5;
  const auto r = validate_dataset(d);
  ASSERT_FALSE(r.empty());
  EXPECT_EQ(r[0].kind, Violation::Kind::indicator_value);
  EXPECT_EQ(r[0].column, 3u);
  EXPECT_NE(r[0].message.find("g0=1"), std::string::npos);
}

TEST(ValidateDataset, DuplicateIdsLabelsAndNonFinite) {
  auto d = small_dataset();
  d.ids[3] = 10;
  d.y[0] = 2;
  d.x(1, 0) = std::numeric_limits<double>::quiet_NaN();
  std::set<Violation::Kind> kinds;
  for (const auto& v : validate_dataset(d)) kinds.insert(v.kind);
  EXPECT_TRUE(kinds.count(Violation::Kind::duplicate_id));
  EXPECT_TRUE(kinds.count(Violation::Kind::label));
  EXPECT_TRUE(kinds.count(Violation::Kind::non_finite));
}

TEST(ValidateDataset, BoundsAndShape) {
  Dataset d;
  d.schema = FeatureSchema({ColumnSpec::continuous("x", Bounds{0, 1})}, {});
  d.x.resize(2, 1);
  d.x << 0.5, 1.5;
  d.y = {0, 1};
  d.ids = {0, 1};
  const auto r = validate_dataset(d);
  ASSERT_EQ(r.size(), 1u);
  EXPECT_EQ(r[0].kind, Violation::Kind::bounds);
  d.y.pop_back();
  EXPECT_EQ(validate_dataset(d).at(0).kind, Violation::Kind::shape);
}

TEST(PairInstances, IntersectsValidIds) {
  std::vector<Counterfactual> base{cf(1, true), cf(2, true), cf(3, true)};
  std::vector<Counterfactual> noisy{cf(2, true), cf(3, true)};
  const auto p = pair_instances(base, noisy);
  ASSERT_EQ(p.size(), 2u);
  EXPECT_EQ(p[0].id, 2u);
  EXPECT_EQ(p[1].id, 3u);
  EXPECT_EQ(p[0].base, &base[1]);
  EXPECT_EQ(p[0].noisy, &noisy[0]);
}

TEST(PairInstances, EmptyNoisyGivesEmpty) {
  std::vector<Counterfactual> base{cf(1, true)};
  EXPECT_TRUE(pair_instances(base, {}).empty());
}

TEST(PairInstances, MatchesBruteForceIntersection) {
  Rng rng(42);
  std::vector<Counterfactual> base, noisy;
  for (InstanceId id = 0; id < 500; ++id) {
    base.push_back(cf(id, rng.uniform() >= 0.1));
    noisy.push_back(cf(id, rng.uniform() >= 0.1));
  }
  std::reverse(noisy.begin(), noisy.end());
  std::size_t expected = 0;
  for (const auto& b : base)
    for (const auto& n : noisy)
      if (b.id == n.id && b.valid && n.valid) ++expected;
  const auto p = pair_instances(base, noisy);
  EXPECT_EQ(p.size(), expected);
  EXPECT_TRUE(std::is_sorted(p.begin(), p.end(), [](const auto& a, const auto& b) { return a.id < b.id; }));
  std::size_t nb = 0, nn = 0;
  for (const auto& c : base) nb += c.valid;
  for (const auto& c : noisy) nn += c.valid;
  EXPECT_LE(p.size(), std::min(nb, nn));
}

TEST(PairInstances, NestedSetsGiveEquality) {
  std::vector<Counterfactual> base, noisy;
  for (InstanceId id = 0; id < 20; ++id) {
    base.push_back(cf(id, true));
    if (id % 3 == 0) noisy.push_back(cf(id, true));
  }
  EXPECT_EQ(pair_instances(base, noisy).size(), noisy.size());
}

TEST(NoiseSpec, LevelZeroMustBeClean) {
  NoiseSpec s;
  EXPECT_NO_THROW(s.validate());
  s.feature_sigma = 0.1;
  EXPECT_THROW(s.validate(), ParameterError);
  s.level = 1;
  EXPECT_NO_THROW(s.validate());
  s.label_flip_rate = 1.5;
  EXPECT_THROW(s.validate(), ParameterError);
}

TEST(DatasetIo, CsvRoundTripIsExact) {
  auto d = small_dataset();
  d.x(0, 0) = 0.1 + 0.2;  // not representable in short decimal form
  const auto dir = std::filesystem::temp_directory_path() / "cfrobust_core_io";
  std::filesystem::create_directories(dir);
  save_dataset(d, (dir / "d.csv").string(), (dir / "d.json").string());
  const auto back = load_dataset((dir / "d.csv").string(), (dir / "d.json").string());
  EXPECT_EQ(back.x, d.x);
  EXPECT_EQ(back.y, d.y);
  EXPECT_EQ(back.ids, d.ids);
  EXPECT_EQ(back.schema, d.schema);
}

TEST(DatasetIo, HeaderMismatchIsReported) {
  std::istringstream in("a,b,__label,__id\n1,2,0,0\n");
  EXPECT_THROW(read_dataset_csv(in, fixtures::mixed_schema(2, {})), IoError);
}

TEST(Dataset, SubsetByIdsKeepsOrder) {
  const auto d = small_dataset();
  const auto s = d.subset_by_ids({13, 11});
  EXPECT_EQ(s.ids, (std::vector<InstanceId>{11, 13}));
  EXPECT_EQ(s.x.row(1), d.x.row(3));
  EXPECT_DOUBLE_EQ(d.positive_fraction(), 0.5);
}
