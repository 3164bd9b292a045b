#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "cfrobust/harness.hpp"

using namespace cfrobust;

namespace {

const char* kValid = R"(# comment line
[experiment]
name = "cfg-test"
seed = 11
n_replicates = 2
groups = ["TN", "FN"]

[dataset]
kind = "mock"
preset = 3

[noise]
n_levels = 4
max_sigma = 1.5
max_flip = 0.2
kind = "student_t"
df = 4

[models]
list = ["lr", "rf"]
rf_trees = 10

[methods]
list = ["milp", "random"]
random_budget = 50
)";

std::string with(const std::string& section, const std::string& line) {
  std::string t = kValid;
  const auto p = t.find("[" + section + "]");
  const auto eol = t.find('\n', p);
  return t.insert(eol + 1, line + "\n");
}

std::string replace(std::string t, const std::string& from, const std::string& to) {
  const auto p = t.find(from);
  return t.replace(p, from.size(), to);
}

}  // namespace

TEST(Config, ParsesValidText) {
  const auto c = parse_config(kValid);
  EXPECT_EQ(c.name, "cfg-test");
  EXPECT_EQ(c.seed, 11u);
  EXPECT_EQ(c.n_replicates, 2u);
  EXPECT_EQ(c.groups, (std::vector<std::string>{"TN", "FN"}));
  EXPECT_EQ(c.dataset, DatasetKind::mock);
  EXPECT_EQ(c.mock.n_features, 10u);
  EXPECT_EQ(c.noise.n_levels, 4);
  EXPECT_EQ(c.noise.max_sigma, 1.5);
  EXPECT_EQ(c.noise.kind, NoiseKind::student_t);
  EXPECT_EQ(c.noise.df, 4.0);
  EXPECT_EQ(c.models.names, (std::vector<std::string>{"lr", "rf"}));
  EXPECT_EQ(c.models.rf.n_trees, 10u);
  EXPECT_EQ(c.methods.random_budget, 50u);
  // Unset keys keep their defaults.
  EXPECT_EQ(c.test_fraction, 0.3);
  EXPECT_EQ(c.min_completeness, 0.9);
}

TEST(Config, UnknownKeyOrSectionRejected) {
  try {
    parse_config(with("noise", "sigma_max = 2.0"));
    FAIL();
  } catch (const ParameterError& e) {
    EXPECT_NE(std::string(e.what()).find("noise.sigma_max"), std::string::npos);
  }
  EXPECT_THROW(parse_config(std::string(kValid) + "[plots]\nwidth = 3\n"), ParameterError);
}

TEST(Config, WrongTypeRejected) {
  EXPECT_THROW(parse_config(replace(kValid, "seed = 11", "seed = \"eleven\"")), ParameterError);
  EXPECT_THROW(parse_config(replace(kValid, "seed = 11", "seed = 1.5")), ParameterError);
}

TEST(Config, ZeroMethodsFails) {
  try {
    parse_config(replace(kValid, "list = [\"milp\", \"random\"]", "list = []"));
    FAIL();
  } catch (const ParameterError& e) {
    EXPECT_NE(std::string(e.what()).find("at least one counterfactual method is required"), std::string::npos);
  }
}

TEST(Config, TooFewLevelsFails) {
  EXPECT_THROW(parse_config(replace(kValid, "n_levels = 4", "n_levels = 2")), ParameterError);
  EXPECT_NO_THROW(parse_config(replace(kValid, "n_levels = 4", "n_levels = 3")));
}

TEST(Config, RangeChecks) {
  EXPECT_THROW(parse_config(replace(kValid, "max_flip = 0.2", "max_flip = 0.6")), ParameterError);
  EXPECT_THROW(parse_config(replace(kValid, "list = [\"milp\", \"random\"]", "list = [\"milp_mean\"]")), ParameterError);
  EXPECT_THROW(parse_config(replace(kValid, "list = [\"lr\", \"rf\"]", "list = [\"svm\"]")), ParameterError);
  EXPECT_THROW(parse_config(replace(kValid, "kind = \"mock\"", "kind = \"parquet\"")), ParameterError);
}

TEST(Config, CsvPathResolvedAgainstBaseDir) {
  const std::string text = R"([dataset]
kind = "csv"
path = "data/credit.csv"
target_column = "y"
positive_label = "1"
)";
  const auto c = parse_config(text, "/opt/runs");
  EXPECT_EQ(c.ingest.path, "/opt/runs/data/credit.csv");
}

TEST(Config, HashIsStableAndSensitive) {
  const auto a = parse_config(kValid), b = parse_config(kValid);
  EXPECT_EQ(config_hash(a), config_hash(b));
  EXPECT_EQ(config_hash(a).size(), 16u);
  EXPECT_NE(config_hash(a), config_hash(parse_config(replace(kValid, "seed = 11", "seed = 12"))));
}

TEST(Config, ShippedPresetsLoad) {
  const std::filesystem::path dir = CFROBUST_CONFIG_DIR;
  std::size_t n = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.path().extension() != ".toml") continue;
    ++n;
    const auto t = toml::parse_file(e.path().string());
    EXPECT_NO_THROW(config_from_toml(t, dir.string())) << e.path();
  }
  EXPECT_GE(n, 9u);
}
