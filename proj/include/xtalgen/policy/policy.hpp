#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "xtalgen/atoms/features.hpp"
#include "xtalgen/atoms/set_network.hpp"
#include "xtalgen/core/crystal.hpp"
#include "xtalgen/core/elements.hpp"
#include "xtalgen/core/random.hpp"
#include "xtalgen/io/dataset.hpp"

namespace xtalgen {

// Element symbol -> positive count.
using Composition = std::map<std::string, int>;

Composition composition_of(std::span<const std::string> species);

// True iff some choice of one allowed oxidation state per element makes the
// total charge zero. Throws UnknownElementError and ConfigError (empty
// composition or non-positive count).
bool charge_balanced(const Composition& composition, const ElementTable& table);

enum class PerturbMode { Remove, Add, Swap };

struct Perturbation {
  Crystal crystal;
  std::size_t changed = 0;  // index of the added or swapped atom; for remove, the removed index
};

// remove: drop one uniformly chosen atom (needs N >= 2). add: append a
// uniformly chosen species from `species` at a uniform position. swap:
// replace one atom's species by a different one from `species`.
Perturbation perturb(const Crystal& crystal, Rng& rng, PerturbMode mode, std::span<const std::string> species);
Crystal perturb_crystal(const Crystal& crystal, Rng& rng, PerturbMode mode, std::span<const std::string> species);

// Which atom lists a discriminator was trained to judge.
enum class DiscriminatorScope {
  Partial,  // prefixes seen during generation
  Full,     // complete compositions
};

struct DiscriminatorOptions {
  DiscriminatorScope scope = DiscriminatorScope::Full;
  int hidden = 64;
  int layers = 2;
  int epochs = 200;
  int batch_reals = 16;
  double perturb_ratio = 1.0;  // fakes per real in every batch
  double learning_rate = 1e-3;
  double holdout_fraction = 0.2;
  int holdout_examples = 400;
  double threshold = 0.5;
  std::uint64_t seed = 0;
};

// Real/fake classifier over (atom multiset, lattice invariants).
class DiscriminatorModel {
 public:
  DiscriminatorModel() = default;
  DiscriminatorModel(std::vector<std::string> species, LatticeStandardizer lattice_features,
                     const DiscriminatorOptions& options);

  const std::vector<std::string>& species() const { return species_; }
  DiscriminatorScope scope() const { return options_.scope; }
  double threshold() const { return options_.threshold; }
  void set_threshold(double threshold) { options_.threshold = threshold; }
  double heldout_accuracy() const { return heldout_accuracy_; }
  void set_heldout_accuracy(double accuracy) { heldout_accuracy_ = accuracy; }

  MatrixX node_features(const Lattice& lattice, std::span<const std::string> species) const;
  ad::Var logits(ad::Tape& tape, const GraphBatch& batch) { return network_.forward(tape, batch); }
  ad::Var logits(ad::Tape& tape, const GraphBatch& batch) const { return network_.forward(tape, batch); }

  // Probability that the atom list is real.
  double score(const Lattice& lattice, std::span<const std::string> species) const;

  std::vector<ad::Parameter*> parameters() { return network_.parameters(); }

  nlohmann::json to_json();
  static DiscriminatorModel from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path);
  static DiscriminatorModel load(const std::filesystem::path& path);

 private:
  std::vector<std::string> species_;
  LatticeStandardizer lattice_features_;
  DiscriminatorOptions options_;
  InvariantSetNetwork network_;
  double heldout_accuracy_ = 0.0;
};

struct LabeledAtoms {
  Lattice lattice;
  std::vector<std::string> species;
  double label = 0.0;  // 1 real, 0 fake
};

// Reals are the crystals (or, for the partial scope, random non-empty subsets
// of them); fakes are perturbed copies, for the partial scope restricted to
// subsets containing the changed atom.
LabeledAtoms draw_real(const Crystal& crystal, DiscriminatorScope scope, Rng& rng);
LabeledAtoms draw_fake(const Crystal& crystal, DiscriminatorScope scope, std::span<const std::string> species,
                       Rng& rng);

// Trains on balanced real/perturbed batches and records accuracy on a
// held-out split of the crystals (on all crystals when the split is empty).
DiscriminatorModel train_discriminator(const io::Dataset& real, const DiscriminatorOptions& options);

double discriminator_accuracy(const DiscriminatorModel& model, std::span<const LabeledAtoms> examples);

enum class PolicyKind { None, Partial, Full, Smact };
enum class PolicyStage { PerStep, PostAtoms };

std::string to_string(PolicyKind kind);
PolicyKind policy_from_string(const std::string& name);

struct PolicyVerdict {
  bool accept = true;
  std::string reason;
  PolicyStage stage = PolicyStage::PostAtoms;
};

struct Policy {
  PolicyKind kind = PolicyKind::None;
  const DiscriminatorModel* discriminator = nullptr;  // partial and full
  const ElementTable* elements = nullptr;             // smact; built-in table when null
};

// Consults the policy at `stage`. Partial acts only per step; full and smact
// only after END; every other combination accepts. Throws ConfigError when
// a learned policy has no discriminator.
PolicyVerdict apply_policy(const Policy& policy, PolicyStage stage, const Lattice& lattice,
                           std::span<const std::string> species);

}  // namespace xtalgen
