#include "xtalgen/positions/position_flow.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <set>

#include "xtalgen/core/errors.hpp"
#include "xtalgen/core/runtime.hpp"

namespace xtalgen {

namespace {
constexpr const char* kFormat = "xtalgen.position-flow";
constexpr int kVersion = 1;
constexpr int kPeriodicHarmonics = 2;
}  // namespace

std::string to_string(FlowPath path) { return path == FlowPath::Torus ? "torus" : "euclidean"; }

FlowPath flow_path_from_string(const std::string& name) {
  if (name == "torus") return FlowPath::Torus;
  if (name == "euclidean") return FlowPath::Euclidean;
  throw ConfigError("unknown flow path '" + name + "' (expected torus or euclidean)");
}

FlowSample make_training_pair(const Coords& x, const Coords& noise, double t, FlowPath path) {
  if (x.rows() != noise.rows() || x.cols() != 3 || noise.cols() != 3) throw ShapeError("flow pair: shape mismatch");
  FlowSample s;
  s.t = t;
  if (path == FlowPath::Torus) {
    s.v = min_image_delta(x, noise);
    s.x_in = wrap_frac(x + t * s.v);
  } else {
    s.v = noise - x;
    s.x_in = wrap_frac((1.0 - t) * x + t * noise);
  }
  return s;
}

FlowSample make_training_pair(const Crystal& crystal, Rng& rng, FlowPath path) {
  if (crystal.size() == 0) throw ConfigError("flow pair: empty crystal");
  Coords noise(static_cast<Eigen::Index>(crystal.size()), 3);
  for (Eigen::Index i = 0; i < noise.rows(); ++i) {
    for (int k = 0; k < 3; ++k) noise(i, k) = rng.uniform();
  }
  const double t = rng.uniform_closed();
  return make_training_pair(crystal.frac_coords(), noise, t, path);
}

PositionFlowModel::PositionFlowModel(std::vector<std::string> species, LatticeStandardizer lattice_features,
                                     ConditionSchema conditions, const PositionFlowConfig& config)
    : species_(std::move(species)),
      lattice_features_(std::move(lattice_features)),
      conditions_(std::move(conditions)),
      config_(config) {
  std::sort(species_.begin(), species_.end());
  species_.erase(std::unique(species_.begin(), species_.end()), species_.end());
  if (species_.empty()) throw ConfigError("position flow needs at least one species");
  if (config.hidden < 1 || config.layers < 0 || config.radial_basis < 1 || config.radial_cutoff <= 0.0 ||
      config.time_frequencies < 0) {
    throw ConfigError("invalid position flow configuration");
  }
  Rng rng(config.seed);
  build(rng);
}

void PositionFlowModel::build(Rng& rng) {
  const int h = config_.hidden;
  embed_ = ad::Linear("flow.embed", node_width(), h, rng);
  blocks_.clear();
  for (int l = 0; l < config_.layers; ++l) {
    const std::string p = "flow.layer" + std::to_string(l);
    blocks_.push_back({ad::Linear(p + ".msg_self", h, h, rng), ad::Linear(p + ".msg_other", h, h, rng, false),
                       ad::Linear(p + ".msg_edge", edge_width(), h, rng, false), ad::Linear(p + ".msg_out", h, h, rng),
                       ad::Linear(p + ".upd_in", 2 * h, h, rng), ad::Linear(p + ".upd_out", h, h, rng)});
  }
  node_hidden_ = ad::Linear("flow.node_hidden", h, h, rng);
  node_out_ = ad::Linear("flow.node_out", h, 3, rng);
  edge_hidden_ = ad::Linear("flow.edge_hidden", h, h, rng);
  edge_out_ = ad::Linear("flow.edge_out", h, 3, rng);
}

PositionFlowModel PositionFlowModel::for_dataset(const io::Dataset& dataset, const PositionFlowConfig& config,
                                                 const std::vector<std::string>& condition_names) {
  if (dataset.records.empty()) throw ConfigError("position flow: empty dataset");
  std::set<std::string> symbols;
  std::vector<Lattice> lattices;
  std::vector<ConditionValues> props;
  for (const auto& r : dataset.records) {
    symbols.insert(r.crystal.species().begin(), r.crystal.species().end());
    lattices.push_back(r.crystal.lattice());
    props.push_back(r.properties);
  }
  return PositionFlowModel({symbols.begin(), symbols.end()}, LatticeStandardizer::fit(lattices),
                           ConditionSchema::fit(condition_names, props), config);
}

int PositionFlowModel::edge_width() const { return config_.radial_basis + 3 * 2 * kPeriodicHarmonics; }

int PositionFlowModel::node_width() const {
  return static_cast<int>(species_.size()) + LatticeStandardizer::width() + 1 + 2 * config_.time_frequencies +
         conditions_.feature_width();
}

void PositionFlowModel::add_to_batch(FlowBatch& batch, const Lattice& lattice, std::span<const std::string> species,
                                     const Coords& x, double t, const ConditionValues* conditions) const {
  const auto n = static_cast<Eigen::Index>(species.size());
  if (n == 0) throw ConfigError("position flow: no atoms");
  if (x.rows() != n || x.cols() != 3) throw ShapeError("position flow: coordinates do not match species");

  const VectorX lat = lattice_features_.features(lattice_invariants(lattice));
  const VectorX cond = conditions_.features(conditions);
  const int num_species = static_cast<int>(species_.size());
  MatrixX nodes = MatrixX::Zero(n, node_width());
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& s = species[static_cast<std::size_t>(i)];
    auto it = std::lower_bound(species_.begin(), species_.end(), s);
    if (it == species_.end() || *it != s) throw UnknownElementError(s, "position flow vocabulary");
    nodes(i, it - species_.begin()) = 1.0;
    Eigen::Index col = num_species;
    nodes.row(i).segment(col, lat.size()) = lat.transpose();
    col += lat.size();
    nodes(i, col++) = t;
    for (int k = 1; k <= config_.time_frequencies; ++k) {
      nodes(i, col++) = std::sin(k * std::numbers::pi * t);
      nodes(i, col++) = std::cos(k * std::numbers::pi * t);
    }
    if (cond.size() > 0) nodes.row(i).segment(col, cond.size()) = cond.transpose();
  }

  const Mat3 gram = lattice.gram();
  const int rb = config_.radial_basis;
  const double spacing = rb > 1 ? config_.radial_cutoff / (rb - 1) : config_.radial_cutoff;
  const double gamma = 1.0 / (spacing * spacing);
  const Eigen::Index first_edge = batch.edge_features.rows();
  const Eigen::Index num_edges = n * n;
  batch.edge_features.conservativeResize(first_edge + num_edges, edge_width());
  batch.edge_delta.conservativeResize(first_edge + num_edges, 3);
  // Edge order matches GraphBatch::add_graph: dst-major, src-minor.
  Eigen::Index e = first_edge;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j, ++e) {
      const Vec3 d = min_image_delta(x.row(i), x.row(j)).transpose();
      const double dist = std::sqrt(std::max(0.0, d.dot(gram * d)));
      for (int k = 0; k < rb; ++k) {
        const double r = dist - k * spacing;
        batch.edge_features(e, k) = std::exp(-gamma * r * r);
      }
      int col = rb;
      for (int m = 1; m <= kPeriodicHarmonics; ++m) {
        for (int a = 0; a < 3; ++a) {
          batch.edge_features(e, col++) = std::sin(2.0 * std::numbers::pi * m * d(a));
          batch.edge_features(e, col++) = std::cos(2.0 * std::numbers::pi * m * d(a));
        }
      }
      batch.edge_delta.row(e) = d.transpose();
    }
  }
  batch.graph.add_graph(nodes);
}

Coords PositionFlowModel::predict_velocity(const Lattice& lattice, std::span<const std::string> species,
                                           const Coords& x, double t, const ConditionValues* conditions) const {
  FlowBatch batch;
  add_to_batch(batch, lattice, species, x, t, conditions);
  ad::Tape tape;
  return tape.value(velocity(tape, batch));
}

std::vector<ad::Parameter*> PositionFlowModel::parameters() {
  std::vector<ad::Parameter*> out;
  embed_.collect(out);
  for (auto& b : blocks_) {
    b.message_self.collect(out);
    b.message_other.collect(out);
    b.message_edge.collect(out);
    b.message_out.collect(out);
    b.update_in.collect(out);
    b.update_out.collect(out);
  }
  node_hidden_.collect(out);
  node_out_.collect(out);
  edge_hidden_.collect(out);
  edge_out_.collect(out);
  return out;
}

nlohmann::json PositionFlowModel::to_json() {
  nlohmann::json j;
  j["format"] = kFormat;
  j["version"] = kVersion;
  j["species"] = species_;
  j["lattice_features"] = lattice_features_.to_json();
  j["condition_schema"] = conditions_.to_json();
  j["config"] = {{"hidden", config_.hidden},
                 {"layers", config_.layers},
                 {"radial_basis", config_.radial_basis},
                 {"radial_cutoff", config_.radial_cutoff},
                 {"time_frequencies", config_.time_frequencies},
                 {"path", to_string(config_.path)},
                 {"seed", config_.seed}};
  j["parameters"] = ad::parameters_to_json(parameters());
  return j;
}

PositionFlowModel PositionFlowModel::from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != kFormat || j.at("version").get<int>() != kVersion) {
      throw ParseError("not a position flow checkpoint (format/version mismatch)");
    }
    const auto& c = j.at("config");
    PositionFlowConfig config;
    config.hidden = c.at("hidden").get<int>();
    config.layers = c.at("layers").get<int>();
    config.radial_basis = c.at("radial_basis").get<int>();
    config.radial_cutoff = c.at("radial_cutoff").get<double>();
    config.time_frequencies = c.at("time_frequencies").get<int>();
    config.path = flow_path_from_string(c.at("path").get<std::string>());
    config.seed = c.at("seed").get<std::uint64_t>();
    PositionFlowModel model(j.at("species").get<std::vector<std::string>>(),
                            LatticeStandardizer::from_json(j.at("lattice_features")),
                            ConditionSchema::from_json(j.at("condition_schema")), config);
    ad::parameters_from_json(j.at("parameters"), model.parameters());
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("position flow checkpoint: ") + e.what());
  }
}

void PositionFlowModel::save(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << to_json().dump() << '\n';
}

PositionFlowModel PositionFlowModel::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return from_json(j);
}

ad::Var flow_loss(ad::Tape& tape, PositionFlowModel& model, std::span<const FlowExample> examples) {
  if (examples.empty()) throw ConfigError("flow_loss: no examples");
  FlowBatch batch;
  Eigen::Index rows = 0;
  for (const auto& ex : examples) rows += ex.sample.v.rows();
  MatrixX target(rows, 3);
  Eigen::Index r = 0;
  for (const auto& ex : examples) {
    model.add_to_batch(batch, ex.lattice, ex.species, ex.sample.x_in, ex.sample.t,
                       ex.conditions ? &*ex.conditions : nullptr);
    target.middleRows(r, ex.sample.v.rows()) = ex.sample.v;
    r += ex.sample.v.rows();
  }
  return tape.scale(tape.mse(model.velocity(tape, batch), target), 3.0);
}

double train_epoch_flow(PositionFlowModel& model, const io::Dataset& dataset, ad::Optimizer& optimizer, Rng& rng,
                        int pairs_per_crystal, int crystals_per_step) {
  if (dataset.records.empty()) throw ConfigError("train_epoch_flow: empty dataset");
  tune_allocator();
  if (pairs_per_crystal < 1 || crystals_per_step < 1) throw ConfigError("train_epoch_flow: batch sizes must be >= 1");
  std::vector<std::size_t> order(dataset.records.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.uniform_index(i)]);

  const bool conditional = model.condition_schema().width() > 0;
  const FlowPath path = model.config().path;
  double total = 0.0;
  int steps = 0;
  for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(crystals_per_step)) {
    std::vector<FlowExample> batch;
    const std::size_t stop = std::min(order.size(), begin + static_cast<std::size_t>(crystals_per_step));
    for (std::size_t i = begin; i < stop; ++i) {
      const auto& record = dataset.records[order[i]];
      for (int p = 0; p < pairs_per_crystal; ++p) {
        FlowExample ex{record.crystal.lattice(), record.crystal.species(), make_training_pair(record.crystal, rng, path),
                       std::nullopt};
        if (conditional) ex.conditions = record.properties;
        batch.push_back(std::move(ex));
      }
    }
    optimizer.zero_grad();
    ad::Tape tape;
    ad::Var loss = flow_loss(tape, model, batch);
    tape.backward(loss);
    optimizer.step();
    total += tape.scalar(loss);
    ++steps;
  }
  return total / steps;
}

Coords integrate(const VelocityField& field, Coords x0, int num_steps) {
  if (num_steps < 1) throw ConfigError("integrate: numSteps must be >= 1");
  Coords x = wrap_frac(x0);
  for (int k = 0; k < num_steps; ++k) {
    const double t = 1.0 - static_cast<double>(k) / num_steps;
    const Coords v = field(x, t);
    if (v.rows() != x.rows() || v.cols() != 3) throw ShapeError("integrate: velocity shape mismatch");
    x = wrap_frac(x - v / static_cast<double>(num_steps));
  }
  return x;
}

Coords integrate(const VelocityField& field, std::size_t num_atoms, int num_steps, Rng& rng) {
  Coords x0(static_cast<Eigen::Index>(num_atoms), 3);
  for (Eigen::Index i = 0; i < x0.rows(); ++i) {
    for (int k = 0; k < 3; ++k) x0(i, k) = rng.uniform();
  }
  return integrate(field, std::move(x0), num_steps);
}

Coords integrate(const PositionFlowModel& model, const Lattice& lattice, std::span<const std::string> species,
                 int num_steps, Rng& rng, const ConditionValues* conditions) {
  return integrate(
      [&](const Coords& x, double t) { return model.predict_velocity(lattice, species, x, t, conditions); },
      species.size(), num_steps, rng);
}

}  // namespace xtalgen
