#include "xtalgen/policy/policy.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>
#include <unordered_set>

#include "xtalgen/autodiff/optimizer.hpp"
#include "xtalgen/core/errors.hpp"
#include "xtalgen/core/runtime.hpp"

namespace xtalgen {

namespace {
constexpr const char* kFormat = "xtalgen.discriminator";
constexpr int kVersion = 1;

std::string scope_name(DiscriminatorScope s) { return s == DiscriminatorScope::Partial ? "partial" : "full"; }

DiscriminatorScope scope_from_name(const std::string& s) {
  if (s == "partial") return DiscriminatorScope::Partial;
  if (s == "full") return DiscriminatorScope::Full;
  throw ParseError("unknown discriminator scope '" + s + "'");
}

Coords uniform_coords(Eigen::Index n, Rng& rng) {
  Coords x(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int k = 0; k < 3; ++k) x(i, k) = rng.uniform();
  }
  return x;
}

// Random non-empty subset of [0, n) that contains `must` (if < n), in random order.
std::vector<std::size_t> random_subset(std::size_t n, Rng& rng, std::size_t must = static_cast<std::size_t>(-1)) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.uniform_index(i)]);
  const std::size_t size = 1 + rng.uniform_index(n);
  std::vector<std::size_t> out(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(size));
  if (must < n && std::find(out.begin(), out.end(), must) == out.end()) out.back() = must;
  return out;
}

}  // namespace

Composition composition_of(std::span<const std::string> species) {
  Composition c;
  for (const auto& s : species) ++c[s];
  return c;
}

bool charge_balanced(const Composition& composition, const ElementTable& table) {
  if (composition.empty()) throw ConfigError("charge_balanced: empty composition");
  // Set of total charges reachable with the elements processed so far.
  std::unordered_set<long> reachable{0};
  for (const auto& [symbol, count] : composition) {
    if (count < 1) throw ConfigError("charge_balanced: count of " + symbol + " must be positive");
    const auto& states = table.oxidation_states(symbol);
    std::unordered_set<long> next;
    for (long sum : reachable) {
      for (int s : states) next.insert(sum + static_cast<long>(count) * s);
    }
    reachable.swap(next);
  }
  return reachable.count(0) != 0;
}

Perturbation perturb(const Crystal& crystal, Rng& rng, PerturbMode mode, std::span<const std::string> species) {
  const auto n = crystal.size();
  std::vector<std::string> sp = crystal.species();
  const Coords& x = crystal.frac_coords();
  switch (mode) {
    case PerturbMode::Remove: {
      if (n < 2) throw ConfigError("perturb: cannot remove an atom from a 1-atom crystal");
      const std::size_t k = rng.uniform_index(n);
      Coords y(static_cast<Eigen::Index>(n - 1), 3);
      for (std::size_t i = 0, r = 0; i < n; ++i) {
        if (i != k) y.row(static_cast<Eigen::Index>(r++)) = x.row(static_cast<Eigen::Index>(i));
      }
      sp.erase(sp.begin() + static_cast<std::ptrdiff_t>(k));
      return {Crystal(crystal.lattice(), std::move(sp), y), k};
    }
    case PerturbMode::Add: {
      if (species.empty()) throw ConfigError("perturb: empty species vocabulary");
      Coords y(static_cast<Eigen::Index>(n + 1), 3);
      y.topRows(static_cast<Eigen::Index>(n)) = x;
      y.bottomRows(1) = uniform_coords(1, rng);
      sp.push_back(species[rng.uniform_index(species.size())]);
      return {Crystal(crystal.lattice(), std::move(sp), y), n};
    }
    case PerturbMode::Swap: {
      const std::size_t k = rng.uniform_index(n);
      std::vector<std::string> others;
      for (const auto& s : species) {
        if (s != sp[k]) others.push_back(s);
      }
      if (others.empty()) throw ConfigError("perturb: swap needs a second species");
      sp[k] = others[rng.uniform_index(others.size())];
      return {Crystal(crystal.lattice(), std::move(sp), x), k};
    }
  }
  throw ConfigError("perturb: unknown mode");
}

Crystal perturb_crystal(const Crystal& crystal, Rng& rng, PerturbMode mode, std::span<const std::string> species) {
  return perturb(crystal, rng, mode, species).crystal;
}

DiscriminatorModel::DiscriminatorModel(std::vector<std::string> species, LatticeStandardizer lattice_features,
                                       const DiscriminatorOptions& options)
    : species_(std::move(species)), lattice_features_(std::move(lattice_features)), options_(options) {
  std::sort(species_.begin(), species_.end());
  species_.erase(std::unique(species_.begin(), species_.end()), species_.end());
  if (species_.empty()) throw ConfigError("discriminator needs at least one species");
  Rng rng(options.seed);
  SetNetworkConfig net;
  net.input_width = static_cast<int>(species_.size()) + LatticeStandardizer::width();
  net.hidden = options.hidden;
  net.layers = options.layers;
  net.output_width = 1;
  net.zero_init_readout = false;
  network_ = InvariantSetNetwork(net, rng, "policy");
}

MatrixX DiscriminatorModel::node_features(const Lattice& lattice, std::span<const std::string> species) const {
  if (species.empty()) throw ConfigError("discriminator: empty atom list");
  const VectorX lat = lattice_features_.features(lattice_invariants(lattice));
  const auto v = static_cast<Eigen::Index>(species_.size());
  MatrixX x = MatrixX::Zero(static_cast<Eigen::Index>(species.size()), v + lat.size());
  for (std::size_t i = 0; i < species.size(); ++i) {
    auto it = std::lower_bound(species_.begin(), species_.end(), species[i]);
    if (it == species_.end() || *it != species[i]) throw UnknownElementError(species[i], "discriminator vocabulary");
    const auto row = static_cast<Eigen::Index>(i);
    x(row, it - species_.begin()) = 1.0;
    x.row(row).tail(lat.size()) = lat.transpose();
  }
  return x;
}

double DiscriminatorModel::score(const Lattice& lattice, std::span<const std::string> species) const {
  GraphBatch batch;
  batch.add_graph(node_features(lattice, species));
  ad::Tape tape;
  return tape.value(tape.sigmoid(logits(tape, batch)))(0, 0);
}

nlohmann::json DiscriminatorModel::to_json() {
  nlohmann::json j;
  j["format"] = kFormat;
  j["version"] = kVersion;
  j["species"] = species_;
  j["lattice_features"] = lattice_features_.to_json();
  j["config"] = {{"scope", scope_name(options_.scope)},
                 {"hidden", options_.hidden},
                 {"layers", options_.layers},
                 {"threshold", options_.threshold},
                 {"seed", options_.seed}};
  j["heldout_accuracy"] = heldout_accuracy_;
  j["parameters"] = ad::parameters_to_json(parameters());
  return j;
}

DiscriminatorModel DiscriminatorModel::from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != kFormat || j.at("version").get<int>() != kVersion) {
      throw ParseError("not a discriminator checkpoint (format/version mismatch)");
    }
    const auto& c = j.at("config");
    DiscriminatorOptions options;
    options.scope = scope_from_name(c.at("scope").get<std::string>());
    options.hidden = c.at("hidden").get<int>();
    options.layers = c.at("layers").get<int>();
    options.threshold = c.at("threshold").get<double>();
    options.seed = c.at("seed").get<std::uint64_t>();
    DiscriminatorModel model(j.at("species").get<std::vector<std::string>>(),
                             LatticeStandardizer::from_json(j.at("lattice_features")), options);
    ad::parameters_from_json(j.at("parameters"), model.parameters());
    model.heldout_accuracy_ = j.at("heldout_accuracy").get<double>();
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("discriminator checkpoint: ") + e.what());
  }
}

void DiscriminatorModel::save(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << to_json().dump() << '\n';
}

DiscriminatorModel DiscriminatorModel::load(const std::filesystem::path& path) {
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

LabeledAtoms draw_real(const Crystal& crystal, DiscriminatorScope scope, Rng& rng) {
  LabeledAtoms out{crystal.lattice(), {}, 1.0};
  if (scope == DiscriminatorScope::Full) {
    out.species = crystal.species();
  } else {
    for (std::size_t i : random_subset(crystal.size(), rng)) out.species.push_back(crystal.species()[i]);
  }
  return out;
}

LabeledAtoms draw_fake(const Crystal& crystal, DiscriminatorScope scope, std::span<const std::string> species,
                       Rng& rng) {
  // Removal leaves every prefix looking real, so prefixes use add and swap only.
  std::vector<PerturbMode> modes{PerturbMode::Add};
  if (scope == DiscriminatorScope::Full && crystal.size() >= 2) modes.push_back(PerturbMode::Remove);
  if (species.size() >= 2) modes.push_back(PerturbMode::Swap);
  const Perturbation p = perturb(crystal, rng, modes[rng.uniform_index(modes.size())], species);
  LabeledAtoms out{p.crystal.lattice(), {}, 0.0};
  if (scope == DiscriminatorScope::Full) {
    out.species = p.crystal.species();
  } else {
    for (std::size_t i : random_subset(p.crystal.size(), rng, p.changed)) out.species.push_back(p.crystal.species()[i]);
  }
  return out;
}

double discriminator_accuracy(const DiscriminatorModel& model, std::span<const LabeledAtoms> examples) {
  if (examples.empty()) return 0.0;
  std::size_t correct = 0;
  for (const auto& ex : examples) {
    const bool real = model.score(ex.lattice, ex.species) >= model.threshold();
    correct += real == (ex.label > 0.5);
  }
  return static_cast<double>(correct) / static_cast<double>(examples.size());
}

DiscriminatorModel train_discriminator(const io::Dataset& real, const DiscriminatorOptions& options) {
  if (real.records.empty()) throw ConfigError("train_discriminator: empty dataset");
  tune_allocator();
  if (options.batch_reals < 1 || options.epochs < 0 || options.perturb_ratio < 0.0 ||
      options.holdout_fraction < 0.0 || options.holdout_fraction >= 1.0) {
    throw ConfigError("train_discriminator: invalid options");
  }
  Rng rng(derive_seed(options.seed, 1));
  std::vector<std::size_t> order(real.records.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.uniform_index(i)]);
  const auto holdout = static_cast<std::size_t>(options.holdout_fraction * static_cast<double>(order.size()));
  std::vector<std::size_t> train_idx(order.begin() + static_cast<std::ptrdiff_t>(holdout), order.end());
  std::vector<std::size_t> test_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(holdout));
  if (test_idx.empty()) test_idx = train_idx;

  std::set<std::string> symbols;
  std::vector<Lattice> lattices;
  for (const auto& r : real.records) {
    symbols.insert(r.crystal.species().begin(), r.crystal.species().end());
    lattices.push_back(r.crystal.lattice());
  }
  const std::vector<std::string> species(symbols.begin(), symbols.end());
  DiscriminatorModel model(species, LatticeStandardizer::fit(lattices), options);

  ad::OptimizerConfig oc;
  oc.learning_rate = options.learning_rate;
  ad::Optimizer optimizer(model.parameters(), oc);
  const auto fakes_per_batch =
      static_cast<int>(std::lround(options.perturb_ratio * static_cast<double>(options.batch_reals)));
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    std::vector<MatrixX> graphs;
    std::vector<double> labels;
    auto push = [&](const LabeledAtoms& ex) {
      graphs.push_back(model.node_features(ex.lattice, ex.species));
      labels.push_back(ex.label);
    };
    for (int b = 0; b < options.batch_reals; ++b) {
      push(draw_real(real.records[train_idx[rng.uniform_index(train_idx.size())]].crystal, options.scope, rng));
    }
    for (int b = 0; b < fakes_per_batch; ++b) {
      push(draw_fake(real.records[train_idx[rng.uniform_index(train_idx.size())]].crystal, options.scope, species,
                     rng));
    }
    MatrixX target = Eigen::Map<const MatrixX>(labels.data(), static_cast<Eigen::Index>(labels.size()), 1);
    optimizer.zero_grad();
    ad::Tape tape;
    ad::Var loss = tape.bce_with_logits(model.logits(tape, make_batch(graphs)), target);
    tape.backward(loss);
    optimizer.step();
  }

  std::vector<LabeledAtoms> heldout;
  for (int i = 0; i < options.holdout_examples; ++i) {
    const auto& crystal = real.records[test_idx[rng.uniform_index(test_idx.size())]].crystal;
    heldout.push_back(i % 2 == 0 ? draw_real(crystal, options.scope, rng)
                                 : draw_fake(crystal, options.scope, species, rng));
  }
  model.set_heldout_accuracy(discriminator_accuracy(model, heldout));
  return model;
}

std::string to_string(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::None: return "none";
    case PolicyKind::Partial: return "partial";
    case PolicyKind::Full: return "full";
    case PolicyKind::Smact: return "smact";
  }
  return "none";
}

PolicyKind policy_from_string(const std::string& name) {
  if (name == "none") return PolicyKind::None;
  if (name == "partial") return PolicyKind::Partial;
  if (name == "full") return PolicyKind::Full;
  if (name == "smact") return PolicyKind::Smact;
  throw ConfigError("unknown policy '" + name + "' (expected none, partial, full or smact)");
}

PolicyVerdict apply_policy(const Policy& policy, PolicyStage stage, const Lattice& lattice,
                           std::span<const std::string> species) {
  PolicyVerdict verdict;
  verdict.stage = stage;
  switch (policy.kind) {
    case PolicyKind::None:
      return verdict;
    case PolicyKind::Partial:
    case PolicyKind::Full: {
      if (policy.discriminator == nullptr) throw ConfigError(to_string(policy.kind) + " policy needs a discriminator");
      const PolicyStage active = policy.kind == PolicyKind::Partial ? PolicyStage::PerStep : PolicyStage::PostAtoms;
      if (stage != active || species.empty()) return verdict;
      const double s = policy.discriminator->score(lattice, species);
      if (s < policy.discriminator->threshold()) {
        verdict.accept = false;
        verdict.reason = "discriminator score " + std::to_string(s) + " below threshold";
      }
      return verdict;
    }
    case PolicyKind::Smact: {
      if (stage != PolicyStage::PostAtoms) return verdict;
      if (species.empty()) {
        verdict.accept = false;
        verdict.reason = "no atoms";
        return verdict;
      }
      const ElementTable& table = policy.elements ? *policy.elements : ElementTable::builtin();
      if (!charge_balanced(composition_of(species), table)) {
        verdict.accept = false;
        verdict.reason = "not charge-balanced";
      }
      return verdict;
    }
  }
  return verdict;
}

}  // namespace xtalgen
