#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "xtalgen/atoms/features.hpp"
#include "xtalgen/autodiff/layers.hpp"
#include "xtalgen/autodiff/optimizer.hpp"
#include "xtalgen/autodiff/tape.hpp"
#include "xtalgen/core/crystal.hpp"
#include "xtalgen/core/random.hpp"
#include "xtalgen/io/dataset.hpp"

namespace xtalgen {

// Interpolation path between a data position (t = 0) and uniform noise (t = 1).
enum class FlowPath {
  Torus,      // minimum-image geodesic, wrapped
  Euclidean,  // straight line in [0,1)^3, V = X' - X
};

std::string to_string(FlowPath path);
FlowPath flow_path_from_string(const std::string& name);

struct FlowSample {
  Coords x_in;  // wrapped
  double t = 0.0;
  Coords v;  // d/dt of the path, fractional units
};

// Builds the training pair for data X, noise X' and time t.
FlowSample make_training_pair(const Coords& x, const Coords& noise, double t, FlowPath path = FlowPath::Torus);
// Draws X' ~ U[0,1)^{N×3} and t ~ U[0,1].
FlowSample make_training_pair(const Crystal& crystal, Rng& rng, FlowPath path = FlowPath::Torus);

struct PositionFlowConfig {
  int hidden = 128;
  int layers = 4;
  int radial_basis = 16;
  double radial_cutoff = 8.0;  // Å, centre of the last radial basis function
  int time_frequencies = 4;
  FlowPath path = FlowPath::Torus;
  std::uint64_t seed = 0;
};

// Graph batch plus per-edge constants: invariant edge features and the
// minimum-image fractional displacement src - dst.
struct FlowBatch {
  GraphBatch graph;
  MatrixX edge_features;
  MatrixX edge_delta;
};

// Message passing in the fractional chart. Edge features are radial basis
// expansions of the periodic Cartesian distance and sin/cos of the fractional
// displacement, so the output only sees the lattice through its metric and
// the positions only through pairwise minimum-image displacements.
class PositionFlowModel {
 public:
  PositionFlowModel() = default;
  PositionFlowModel(std::vector<std::string> species, LatticeStandardizer lattice_features, ConditionSchema conditions,
                    const PositionFlowConfig& config);
  static PositionFlowModel for_dataset(const io::Dataset& dataset, const PositionFlowConfig& config,
                                       const std::vector<std::string>& condition_names = {});

  const std::vector<std::string>& species() const { return species_; }
  const ConditionSchema& condition_schema() const { return conditions_; }
  const PositionFlowConfig& config() const { return config_; }
  int edge_width() const;
  int node_width() const;

  void add_to_batch(FlowBatch& batch, const Lattice& lattice, std::span<const std::string> species, const Coords& x,
                    double t, const ConditionValues* conditions = nullptr) const;

  ad::Var velocity(ad::Tape& tape, const FlowBatch& batch) { return forward_impl(*this, tape, batch); }
  ad::Var velocity(ad::Tape& tape, const FlowBatch& batch) const { return forward_impl(*this, tape, batch); }

  Coords predict_velocity(const Lattice& lattice, std::span<const std::string> species, const Coords& x, double t,
                          const ConditionValues* conditions = nullptr) const;

  std::vector<ad::Parameter*> parameters();

  nlohmann::json to_json();
  static PositionFlowModel from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path);
  static PositionFlowModel load(const std::filesystem::path& path);

 private:
  struct Block {
    ad::Linear message_self, message_other, message_edge, message_out, update_in, update_out;
  };

  template <typename Self>
  static ad::Var forward_impl(Self& self, ad::Tape& tape, const FlowBatch& batch);
  void build(Rng& rng);

  std::vector<std::string> species_;
  LatticeStandardizer lattice_features_;
  ConditionSchema conditions_;
  PositionFlowConfig config_;
  ad::Linear embed_;
  std::vector<Block> blocks_;
  ad::Linear node_hidden_, node_out_, edge_hidden_, edge_out_;
};

struct FlowExample {
  Lattice lattice;
  std::vector<std::string> species;
  FlowSample sample;
  std::optional<ConditionValues> conditions;
};

// Mean over atoms of |v_pred - V|^2.
ad::Var flow_loss(ad::Tape& tape, PositionFlowModel& model, std::span<const FlowExample> examples);

// One shuffled pass; each step uses `crystals_per_step` crystals with
// `pairs_per_crystal` independent pairs each. Returns the mean loss.
double train_epoch_flow(PositionFlowModel& model, const io::Dataset& dataset, ad::Optimizer& optimizer, Rng& rng,
                        int pairs_per_crystal = 1, int crystals_per_step = 1);

// v(X, t) in fractional units.
using VelocityField = std::function<Coords(const Coords& x, double t)>;

// Euler steps from t = 1 down to 0: X <- wrap(X - v(X, t_k) / numSteps) with
// t_k = 1 - k / numSteps.
Coords integrate(const VelocityField& field, Coords x0, int num_steps);
Coords integrate(const VelocityField& field, std::size_t num_atoms, int num_steps, Rng& rng);
Coords integrate(const PositionFlowModel& model, const Lattice& lattice, std::span<const std::string> species,
                 int num_steps, Rng& rng, const ConditionValues* conditions = nullptr);

template <typename Self>
ad::Var PositionFlowModel::forward_impl(Self& self, ad::Tape& tape, const FlowBatch& batch) {
  const GraphBatch& g = batch.graph;
  ad::Var edges = tape.constant(batch.edge_features);
  ad::Var h = tape.silu(self.embed_(tape, tape.constant(g.node_features)));
  ad::Var msg;
  for (auto& block : self.blocks_) {
    ad::Var pre = tape.add(tape.gather_rows(block.message_self(tape, h), g.dst),
                           tape.gather_rows(block.message_other(tape, h), g.src));
    pre = tape.add(pre, block.message_edge(tape, edges));
    msg = tape.silu(block.message_out(tape, tape.silu(pre)));
    ad::Var agg = tape.segment_mean(msg, g.dst, g.num_nodes());
    h = tape.add(h, block.update_out(tape, tape.silu(block.update_in(tape, tape.concat_cols(h, agg)))));
  }
  ad::Var node_v = self.node_out_(tape, tape.silu(self.node_hidden_(tape, h)));
  ad::Var weights = self.edge_out_(tape, tape.silu(self.edge_hidden_(tape, msg.valid() ? msg : tape.gather_rows(h, g.dst))));
  ad::Var edge_v = tape.mul(tape.constant(batch.edge_delta), weights);
  return tape.add(node_v, tape.segment_mean(edge_v, g.dst, g.num_nodes()));
}

}  // namespace xtalgen
