#include "xtalgen/pipeline/generate.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <exception>
#include <mutex>
#include <thread>

#include "xtalgen/core/errors.hpp"

namespace xtalgen {

namespace {

using Clock = std::chrono::steady_clock;

struct SampleOutcome {
  Crystal crystal;
  std::size_t attempts = 0;
  std::size_t rejected_per_step = 0;
  std::size_t rejected_post_atoms = 0;
  std::size_t empty = 0;
  double seconds = 0.0;
  std::vector<double> entropies;
};

std::optional<VectorX> lattice_conditions(const GenerationConfig& config, const LatticeGenerator& lattice) {
  if (!config.conditions || config.conditions->empty()) return std::nullopt;
  const auto& names = lattice.condition_names();
  for (const auto& [name, value] : *config.conditions) {
    if (std::find(names.begin(), names.end(), name) == names.end()) {
      throw ConfigError("condition '" + name + "' is not part of the lattice model schema");
    }
  }
  if (config.conditions->size() != names.size()) {
    throw ConfigError("the lattice model needs a value for every condition it was fitted with");
  }
  VectorX v(static_cast<Eigen::Index>(names.size()));
  for (std::size_t i = 0; i < names.size(); ++i) v(static_cast<Eigen::Index>(i)) = config.conditions->at(names[i]);
  return v;
}

void check_schema(const ConditionSchema& schema, const ConditionValues& values, const char* stage) {
  for (const auto& [name, value] : values) {
    const auto& names = schema.names();
    if (std::find(names.begin(), names.end(), name) == names.end()) {
      throw ConfigError("condition '" + name + "' is not part of the " + stage + " model schema");
    }
  }
}

}  // namespace

void GenerationConfig::validate() const {
  if (!(temperature > 0.0)) throw ConfigError("tau must be > 0");
  if (!(top_p > 0.0 && top_p <= 1.0)) throw ConfigError("top-p must be in (0, 1]");
  if (max_atoms < 1) throw ConfigError("max-atoms must be >= 1");
  if (num_steps < 1) throw ConfigError("num-steps must be >= 1");
  if (attempts_per_sample < 1) throw ConfigError("attempts per sample must be >= 1");
  if (workers < 1) throw ConfigError("workers must be >= 1");
}

GenerationResult generate(const GenerationConfig& config, const GenerationModels& models) {
  config.validate();
  if (!models.lattice || !models.atoms || !models.positions) {
    throw ConfigError("generation needs lattice, atom and position models");
  }
  Policy policy{config.policy, nullptr, models.elements};
  if (config.policy == PolicyKind::Partial) policy.discriminator = models.partial;
  if (config.policy == PolicyKind::Full) policy.discriminator = models.full;
  if ((config.policy == PolicyKind::Partial || config.policy == PolicyKind::Full) && !policy.discriminator) {
    throw ConfigError(to_string(config.policy) + " policy selected but no discriminator was loaded");
  }
  const std::optional<VectorX> lattice_cond = lattice_conditions(config, *models.lattice);
  const ConditionValues* cond = nullptr;
  if (config.conditions && !config.conditions->empty()) {
    check_schema(models.atoms->condition_schema(), *config.conditions, "atom");
    check_schema(models.positions->condition_schema(), *config.conditions, "position");
    cond = &*config.conditions;
  }
  // Build the lattice mixture once; conditioning does not change between samples.
  const GaussianMixture<double> mixture = models.lattice->lattice_mixture(lattice_cond);
  const bool canonical = models.lattice->canonicalized();
  const AtomGenerator& atoms = *models.atoms;
  const auto& vocab = atoms.vocabulary();
  SamplingOptions sampling{config.temperature, config.top_p, config.max_atoms};

  const std::size_t budget = config.attempts_per_sample * std::max<std::size_t>(config.n_samples, 1);
  std::atomic<std::size_t> attempts{0};
  std::atomic<bool> stop{false};

  auto run_sample = [&](std::size_t index) {
    SampleOutcome out;
    Rng rng(sample_seed(config.seed, index));
    const auto start = Clock::now();
    while (true) {
      if (stop.load()) return out;
      if (attempts.fetch_add(1) >= budget) {
        stop.store(true);
        throw BudgetExhaustedError("attempt budget of " + std::to_string(budget) + " candidates exhausted");
      }
      ++out.attempts;
      const Lattice lattice = sample_lattice(mixture, rng, kDefaultLatticeAttempts, canonical);
      const LatticeParameters params = lattice_invariants(lattice);

      std::vector<std::string> species;
      PrefixCheck check = [&](std::span<const int> tokens) {
        species.clear();
        for (int t : tokens) species.push_back(vocab.symbol(t));
        return apply_policy(policy, PolicyStage::PerStep, lattice, species).accept;
      };
      SamplingTrace trace;
      const auto tokens = sample_tokens([&](std::span<const int> t) { return atoms.logits(params, t, cond); }, vocab,
                                        sampling, rng, &trace, config.policy == PolicyKind::Partial ? &check : nullptr);
      out.entropies.insert(out.entropies.end(), trace.step_entropies.begin(), trace.step_entropies.end());
      if (!tokens) {
        ++out.rejected_per_step;
        continue;
      }
      if (tokens->empty()) {
        ++out.empty;
        continue;
      }
      species.clear();
      for (int t : *tokens) species.push_back(vocab.symbol(t));
      if (!apply_policy(policy, PolicyStage::PostAtoms, lattice, species).accept) {
        ++out.rejected_post_atoms;
        continue;
      }
      const Coords x = integrate(*models.positions, lattice, species, config.num_steps, rng, cond);
      out.crystal = Crystal(lattice, species, x);
      out.seconds = std::chrono::duration<double>(Clock::now() - start).count();
      return out;
    }
  };

  GenerationResult result;
  std::vector<SampleOutcome> outcomes(config.n_samples);
  const auto t0 = Clock::now();
  const int workers = std::min<int>(config.workers, static_cast<int>(std::max<std::size_t>(config.n_samples, 1)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < config.n_samples; ++i) outcomes[i] = run_sample(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next.fetch_add(1); i < config.n_samples && !stop.load(); i = next.fetch_add(1)) {
          try {
            outcomes[i] = run_sample(i);
          } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!error) error = std::current_exception();
            stop.store(true);
          }
        }
      });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
  }
  result.stats.total_seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  for (auto& o : outcomes) {
    result.stats.attempts += o.attempts;
    result.stats.rejected_per_step += o.rejected_per_step;
    result.stats.rejected_post_atoms += o.rejected_post_atoms;
    result.stats.empty_compositions += o.empty;
    result.stats.sample_seconds.push_back(o.seconds);
    result.stats.step_entropies.insert(result.stats.step_entropies.end(), o.entropies.begin(), o.entropies.end());
    result.crystals.push_back(std::move(o.crystal));
  }
  return result;
}

}  // namespace xtalgen
