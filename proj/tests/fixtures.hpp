#pragma once

// Small builders shared by the test binaries.

#include <string>
#include <vector>

#include "cfrobust/core.hpp"
#include "cfrobust/rng.hpp"

namespace fixtures {

using cfrobust::ColumnSpec;
using cfrobust::FeatureSchema;
using cfrobust::PolytopeGroup;

// `n_cont` continuous columns followed by drop-one groups with the given
// category counts.
inline FeatureSchema mixed_schema(std::size_t n_cont, const std::vector<std::size_t>& categories,
                                  bool drop_one = true) {
  std::vector<ColumnSpec> cols;
  std::vector<PolytopeGroup> groups;
  for (std::size_t j = 0; j < n_cont; ++j) cols.push_back(ColumnSpec::continuous("c" + std::to_string(j)));
  for (std::size_t g = 0; g < categories.size(); ++g) {
    const std::string id = "g" + std::to_string(g);
    PolytopeGroup grp{id, {}, drop_one};
    const auto members = drop_one ? categories[g] - 1 : categories[g];
    for (std::size_t k = 0; k < members; ++k) {
      grp.members.push_back(cols.size());
      cols.push_back(ColumnSpec::indicator(id + "=" + std::to_string(k), id));
    }
    groups.push_back(grp);
  }
  return FeatureSchema(cols, groups);
}

// A valid random point of `schema`: N(0,1) continuous values and a uniform
// category per group.
inline cfrobust::Vector random_point(const FeatureSchema& schema, cfrobust::Rng& rng, double scale = 1.0) {
  cfrobust::Vector x = cfrobust::Vector::Zero(static_cast<Eigen::Index>(schema.size()));
  for (auto j : schema.continuous_indices()) x[static_cast<Eigen::Index>(j)] = scale * rng.normal();
  for (std::size_t g = 0; g < schema.groups().size(); ++g) {
    const auto vals = schema.encode_category(g, rng.below(schema.groups()[g].n_categories()));
    for (std::size_t k = 0; k < vals.size(); ++k) x[static_cast<Eigen::Index>(schema.groups()[g].members[k])] = vals[k];
  }
  return x;
}

inline cfrobust::WeightVector weights(const std::vector<double>& w) {
  cfrobust::WeightVector out;
  out.w = Eigen::Map<const cfrobust::Vector>(w.data(), static_cast<Eigen::Index>(w.size()));
  return out;
}

inline cfrobust::WeightVector unit_weights(std::size_t d) {
  cfrobust::WeightVector out;
  out.w = cfrobust::Vector::Ones(static_cast<Eigen::Index>(d));
  return out;
}

}  // namespace fixtures
