#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "xtalgen/atoms/atom_generator.hpp"
#include "xtalgen/core/crystal.hpp"
#include "xtalgen/core/elements.hpp"
#include "xtalgen/lattice/lattice_generator.hpp"
#include "xtalgen/policy/policy.hpp"
#include "xtalgen/positions/position_flow.hpp"

namespace xtalgen {

struct GenerationConfig {
  double temperature = 0.7;
  double top_p = 0.9;
  int max_atoms = 20;
  int num_steps = 250;
  PolicyKind policy = PolicyKind::None;
  std::optional<ConditionValues> conditions;
  std::uint64_t seed = 0;
  std::size_t n_samples = 1;
  std::size_t attempts_per_sample = 50;  // global budget = attempts_per_sample * n_samples
  int workers = 1;

  // Throws ConfigError.
  void validate() const;
};

struct GenerationModels {
  const LatticeGenerator* lattice = nullptr;
  const AtomGenerator* atoms = nullptr;
  const PositionFlowModel* positions = nullptr;
  const DiscriminatorModel* partial = nullptr;
  const DiscriminatorModel* full = nullptr;
  const ElementTable* elements = nullptr;  // smact; built-in table when null
};

struct GenerationStats {
  std::size_t attempts = 0;
  std::size_t rejected_per_step = 0;
  std::size_t rejected_post_atoms = 0;
  std::size_t empty_compositions = 0;
  double total_seconds = 0.0;
  std::vector<double> sample_seconds;  // wall clock per accepted sample, restarts included
  std::vector<double> step_entropies;  // entropy (nats) of every atom-sampling step
};

struct GenerationResult {
  std::vector<Crystal> crystals;
  GenerationStats stats;
};

// Random streams: sample k draws everything from Rng(derive_seed(seed, k)),
// so outputs do not depend on the number of workers.
inline std::uint64_t sample_seed(std::uint64_t seed, std::size_t index) { return derive_seed(seed, index); }

// Lattice, atoms (with the per-step policy), post-atoms policy, positions.
// Any rejection restarts the candidate with a fresh lattice. Throws
// BudgetExhaustedError once the attempts across all samples exceed the
// budget, and ConfigError on missing models or inconsistent condition schemas.
GenerationResult generate(const GenerationConfig& config, const GenerationModels& models);

}  // namespace xtalgen
