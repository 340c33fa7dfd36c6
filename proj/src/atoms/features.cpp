#include "xtalgen/atoms/features.hpp"

#include <cmath>

namespace xtalgen {

namespace {

std::vector<double> to_vec(const VectorX& v) { return {v.data(), v.data() + v.size()}; }
VectorX from_vec(const std::vector<double>& v) { return Eigen::Map<const VectorX>(v.data(), static_cast<Eigen::Index>(v.size())); }

// Standard deviation with a floor so constant columns map to zero, not NaN.
double safe_scale(double variance) { return variance > 1e-16 ? std::sqrt(variance) : 1.0; }

}  // namespace

LatticeStandardizer::LatticeStandardizer() : mean_(VectorX::Zero(6)), scale_(VectorX::Ones(6)) {}

LatticeStandardizer LatticeStandardizer::fit(const std::vector<Lattice>& lattices) {
  LatticeStandardizer s;
  if (lattices.empty()) return s;
  MatrixX rows(static_cast<Eigen::Index>(lattices.size()), 6);
  for (std::size_t i = 0; i < lattices.size(); ++i) {
    const auto p = lattice_invariants(lattices[i]).as_array();
    for (int k = 0; k < 6; ++k) rows(static_cast<Eigen::Index>(i), k) = p[static_cast<std::size_t>(k)];
  }
  s.mean_ = rows.colwise().mean().transpose();
  for (int k = 0; k < 6; ++k) {
    s.scale_(k) = safe_scale((rows.col(k).array() - s.mean_(k)).square().mean());
  }
  return s;
}

VectorX LatticeStandardizer::features(const LatticeParameters& p) const {
  const auto arr = p.as_array();
  VectorX out(6);
  for (int k = 0; k < 6; ++k) out(k) = (arr[static_cast<std::size_t>(k)] - mean_(k)) / scale_(k);
  return out;
}

nlohmann::json LatticeStandardizer::to_json() const {
  return {{"mean", to_vec(mean_)}, {"scale", to_vec(scale_)}};
}

LatticeStandardizer LatticeStandardizer::from_json(const nlohmann::json& j) {
  LatticeStandardizer s;
  s.mean_ = from_vec(j.at("mean").get<std::vector<double>>());
  s.scale_ = from_vec(j.at("scale").get<std::vector<double>>());
  if (s.mean_.size() != 6 || s.scale_.size() != 6) throw ParseError("lattice standardizer must have 6 entries");
  return s;
}

ConditionSchema ConditionSchema::fit(const std::vector<std::string>& names,
                                     const std::vector<ConditionValues>& observations) {
  ConditionSchema s;
  s.names_ = names;
  const auto c = static_cast<Eigen::Index>(names.size());
  s.mean_ = VectorX::Zero(c);
  s.scale_ = VectorX::Ones(c);
  for (Eigen::Index k = 0; k < c; ++k) {
    std::vector<double> values;
    for (const auto& obs : observations) {
      if (auto it = obs.find(names[static_cast<std::size_t>(k)]); it != obs.end()) values.push_back(it->second);
    }
    if (values.empty()) continue;
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    var /= static_cast<double>(values.size());
    s.mean_(k) = mean;
    s.scale_(k) = safe_scale(var);
  }
  return s;
}

VectorX ConditionSchema::features(const ConditionValues* values) const {
  VectorX out = VectorX::Zero(feature_width());
  if (values == nullptr) return out;
  for (const auto& [name, value] : *values) {
    bool found = false;
    for (int k = 0; k < width(); ++k) {
      if (names_[static_cast<std::size_t>(k)] == name) {
        out(2 * k) = (value - mean_(k)) / scale_(k);
        out(2 * k + 1) = 1.0;
        found = true;
      }
    }
    if (!found) {
      throw ConfigError("condition '" + name + "' is not part of the model's condition schema");
    }
  }
  return out;
}

nlohmann::json ConditionSchema::to_json() const {
  return {{"names", names_}, {"mean", to_vec(mean_)}, {"scale", to_vec(scale_)}};
}

ConditionSchema ConditionSchema::from_json(const nlohmann::json& j) {
  ConditionSchema s;
  s.names_ = j.at("names").get<std::vector<std::string>>();
  s.mean_ = from_vec(j.at("mean").get<std::vector<double>>());
  s.scale_ = from_vec(j.at("scale").get<std::vector<double>>());
  if (s.mean_.size() != s.width() || s.scale_.size() != s.width()) {
    throw ParseError("condition schema statistics do not match its names");
  }
  return s;
}

void GraphBatch::add_graph(const MatrixX& features) {
  const int offset = num_nodes();
  const auto n = static_cast<int>(features.rows());
  if (node_features.size() == 0) {
    node_features = features;
  } else {
    if (features.cols() != node_features.cols()) throw ShapeError("graph batch: feature width mismatch");
    MatrixX stacked(node_features.rows() + features.rows(), node_features.cols());
    stacked << node_features, features;
    node_features.swap(stacked);
  }
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      src.push_back(offset + j);
      dst.push_back(offset + i);
    }
    node_graph.push_back(num_graphs);
  }
  ++num_graphs;
}

GraphBatch make_batch(const std::vector<MatrixX>& graphs) {
  GraphBatch batch;
  Eigen::Index rows = 0;
  for (const auto& g : graphs) rows += g.rows();
  if (graphs.empty()) return batch;
  const auto width = graphs.front().cols();
  batch.node_features.resize(rows, width);
  Eigen::Index offset = 0;
  for (const auto& g : graphs) {
    if (g.cols() != width) throw ShapeError("graph batch: feature width mismatch");
    const auto n = static_cast<int>(g.rows());
    batch.node_features.middleRows(offset, n) = g;
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        batch.src.push_back(static_cast<int>(offset) + j);
        batch.dst.push_back(static_cast<int>(offset) + i);
      }
      batch.node_graph.push_back(batch.num_graphs);
    }
    offset += n;
    ++batch.num_graphs;
  }
  return batch;
}

}  // namespace xtalgen
