#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "xtalgen/core/crystal.hpp"

namespace xtalgen {

// Property name -> target value. Names absent from the map are "not given".
using ConditionValues = std::map<std::string, double>;

// Standardizes the six lattice invariants with training-corpus statistics.
class LatticeStandardizer {
 public:
  LatticeStandardizer();
  static LatticeStandardizer fit(const std::vector<Lattice>& lattices);

  VectorX features(const LatticeParameters& p) const;
  static constexpr int width() { return 6; }

  nlohmann::json to_json() const;
  static LatticeStandardizer from_json(const nlohmann::json& j);

 private:
  VectorX mean_;
  VectorX scale_;
};

// Per-property standardization plus a presence flag: each property contributes
// (standardized value, 1) when given and (0, 0) when missing.
class ConditionSchema {
 public:
  ConditionSchema() = default;
  static ConditionSchema fit(const std::vector<std::string>& names,
                             const std::vector<ConditionValues>& observations);

  const std::vector<std::string>& names() const { return names_; }
  int width() const { return static_cast<int>(names_.size()); }
  int feature_width() const { return 2 * width(); }

  // Throws ConfigError when `values` names a property outside the schema.
  VectorX features(const ConditionValues* values) const;

  nlohmann::json to_json() const;
  static ConditionSchema from_json(const nlohmann::json& j);

 private:
  std::vector<std::string> names_;
  VectorX mean_;
  VectorX scale_;
};

// Disjoint union of fully connected graphs (self-loops included). Edge e
// carries a message from node src[e] into node dst[e].
struct GraphBatch {
  MatrixX node_features;
  std::vector<int> src;
  std::vector<int> dst;
  std::vector<int> node_graph;
  int num_graphs = 0;

  int num_nodes() const { return static_cast<int>(node_graph.size()); }
  // Appends a graph whose node features are the rows of `features`.
  void add_graph(const MatrixX& features);
};

// Builds one batch from graphs with a common feature width.
GraphBatch make_batch(const std::vector<MatrixX>& graphs);

}  // namespace xtalgen
