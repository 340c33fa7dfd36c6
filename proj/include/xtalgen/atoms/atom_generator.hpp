#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "xtalgen/atoms/set_network.hpp"
#include "xtalgen/autodiff/distribution.hpp"
#include "xtalgen/autodiff/optimizer.hpp"
#include "xtalgen/io/dataset.hpp"

namespace xtalgen {

// Element symbols seen in training (sorted), followed by the virtual START and
// END tokens.
class TokenVocabulary {
 public:
  TokenVocabulary() = default;
  explicit TokenVocabulary(std::vector<std::string> elements);
  static TokenVocabulary from_crystals(const std::vector<Crystal>& crystals);

  int size() const { return element_count() + 2; }
  int element_count() const { return static_cast<int>(elements_.size()); }
  int start() const { return element_count(); }
  int end() const { return element_count() + 1; }
  bool is_element(int token) const { return token >= 0 && token < element_count(); }

  // Throws UnknownElementError.
  int index_of(const std::string& symbol) const;
  std::string symbol(int token) const;
  const std::vector<std::string>& elements() const { return elements_; }

 private:
  std::vector<std::string> elements_;
};

// Categorical distribution of the atoms still to be placed: count(s)/|remaining|
// per element, or all mass on END when nothing remains.
TokenDistribution build_target_distribution(std::span<const std::string> remaining, const TokenVocabulary& vocab);

// Direction of the prefix KL loss. TargetToModel is KL(target ‖ model);
// ModelToTarget is KL(model ‖ target) with the target floored at 1e-12.
enum class KlDirection { TargetToModel, ModelToTarget };

std::string to_string(KlDirection direction);
KlDirection kl_direction_from_string(const std::string& name);

struct AtomGeneratorConfig {
  int hidden = 128;
  int layers = 4;
  std::uint64_t seed = 0;
  KlDirection kl = KlDirection::TargetToModel;
};

// One training row: the model sees START plus `prefix` and should predict
// the distribution of `remaining`.
struct PrefixExample {
  LatticeParameters lattice;
  std::vector<int> prefix;  // element tokens, without START
  std::vector<std::string> remaining;
  std::optional<ConditionValues> conditions;
};

// Invariant next-token model over the multiset {START} ∪ prefix with the
// standardized lattice invariants (and conditions) appended to every node.
class AtomGenerator {
 public:
  AtomGenerator() = default;
  AtomGenerator(TokenVocabulary vocab, LatticeStandardizer lattice_features, ConditionSchema conditions,
                const AtomGeneratorConfig& config);
  static AtomGenerator for_dataset(const io::Dataset& dataset, const AtomGeneratorConfig& config,
                                   const std::vector<std::string>& condition_names = {});

  const TokenVocabulary& vocabulary() const { return vocab_; }
  const ConditionSchema& condition_schema() const { return conditions_; }
  const LatticeStandardizer& lattice_features() const { return lattice_features_; }
  const AtomGeneratorConfig& config() const { return config_; }

  // `tokens` must contain exactly one START; remaining entries are elements.
  MatrixX node_features(const LatticeParameters& lattice, std::span<const int> tokens,
                        const ConditionValues* conditions) const;

  ad::Var logits(ad::Tape& tape, const GraphBatch& batch) { return network_.forward(tape, batch); }
  ad::Var logits(ad::Tape& tape, const GraphBatch& batch) const { return network_.forward(tape, batch); }
  VectorX logits(const LatticeParameters& lattice, std::span<const int> tokens,
                 const ConditionValues* conditions = nullptr) const;

  // Distribution over the vocabulary for the next token.
  TokenDistribution forward(const LatticeParameters& lattice, std::span<const int> tokens,
                            const ConditionValues* conditions = nullptr) const;

  std::vector<ad::Parameter*> parameters() { return network_.parameters(); }

  nlohmann::json to_json();
  static AtomGenerator from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path);
  static AtomGenerator load(const std::filesystem::path& path);

 private:
  TokenVocabulary vocab_;
  LatticeStandardizer lattice_features_;
  ConditionSchema conditions_;
  AtomGeneratorConfig config_;
  InvariantSetNetwork network_;
};

// Mean prefix KL over the examples in the model's configured direction.
ad::Var prefix_loss(ad::Tape& tape, AtomGenerator& model, std::span<const PrefixExample> examples);

// For one crystal: one prefix per size t = 0..N, each drawn as t atoms chosen
// uniformly without replacement.
std::vector<PrefixExample> sample_prefixes(const Crystal& crystal, const TokenVocabulary& vocab, Rng& rng,
                                           const std::optional<ConditionValues>& conditions = std::nullopt);

struct AtomTrainingOptions {
  int crystals_per_step = 1;
  std::uint64_t seed = 0;
};

// One pass over the dataset in shuffled order. Returns the mean KL loss.
double train_epoch(AtomGenerator& model, const io::Dataset& dataset, ad::Optimizer& optimizer, Rng& rng,
                   int crystals_per_step = 1);

struct SamplingOptions {
  double temperature = 0.7;
  double top_p = 0.9;
  int max_atoms = 20;
};

struct SamplingTrace {
  std::vector<double> step_entropies;  // entropy (nats) of each distribution sampled from
};

// Next-token logits given the full token list (START first).
using NextTokenLogits = std::function<VectorX(std::span<const int> tokens)>;
// Per-step acceptance check on the atoms emitted so far (no START).
using PrefixCheck = std::function<bool(std::span<const int> atoms)>;

// Temperature softmax, then nucleus filtering, then a categorical draw, until
// END or `max_atoms` atoms. START is masked out before filtering. Returns
// nullopt when `check` rejects a step.
std::optional<std::vector<int>> sample_tokens(const NextTokenLogits& next, const TokenVocabulary& vocab,
                                              const SamplingOptions& options, Rng& rng,
                                              SamplingTrace* trace = nullptr, const PrefixCheck* check = nullptr);

std::vector<std::string> sample_atoms(const AtomGenerator& model, const LatticeParameters& lattice,
                                      const SamplingOptions& options, Rng& rng,
                                      const ConditionValues* conditions = nullptr, SamplingTrace* trace = nullptr);

}  // namespace xtalgen
