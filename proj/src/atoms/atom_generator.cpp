#include "xtalgen/atoms/atom_generator.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>

#include "xtalgen/core/runtime.hpp"

namespace xtalgen {

namespace {
constexpr const char* kFormat = "xtalgen.atom-generator";
constexpr int kVersion = 1;
}  // namespace

TokenVocabulary::TokenVocabulary(std::vector<std::string> elements) : elements_(std::move(elements)) {
  std::sort(elements_.begin(), elements_.end());
  elements_.erase(std::unique(elements_.begin(), elements_.end()), elements_.end());
  if (elements_.empty()) throw ConfigError("vocabulary needs at least one element");
}

TokenVocabulary TokenVocabulary::from_crystals(const std::vector<Crystal>& crystals) {
  std::set<std::string> symbols;
  for (const auto& c : crystals) symbols.insert(c.species().begin(), c.species().end());
  return TokenVocabulary({symbols.begin(), symbols.end()});
}

int TokenVocabulary::index_of(const std::string& symbol) const {
  auto it = std::lower_bound(elements_.begin(), elements_.end(), symbol);
  if (it == elements_.end() || *it != symbol) throw UnknownElementError(symbol, "vocabulary");
  return static_cast<int>(it - elements_.begin());
}

std::string TokenVocabulary::symbol(int token) const {
  if (token == start()) return "<start>";
  if (token == end()) return "<end>";
  if (!is_element(token)) throw ShapeError("token index out of range");
  return elements_[static_cast<std::size_t>(token)];
}

TokenDistribution build_target_distribution(std::span<const std::string> remaining, const TokenVocabulary& vocab) {
  VectorX p = VectorX::Zero(vocab.size());
  if (remaining.empty()) {
    p(vocab.end()) = 1.0;
  } else {
    for (const auto& s : remaining) p(vocab.index_of(s)) += 1.0;
    p /= static_cast<double>(remaining.size());
  }
  return TokenDistribution(std::move(p));
}

AtomGenerator::AtomGenerator(TokenVocabulary vocab, LatticeStandardizer lattice_features, ConditionSchema conditions,
                             const AtomGeneratorConfig& config)
    : vocab_(std::move(vocab)),
      lattice_features_(std::move(lattice_features)),
      conditions_(std::move(conditions)),
      config_(config) {
  Rng rng(config.seed);
  SetNetworkConfig net;
  net.input_width = vocab_.size() + LatticeStandardizer::width() + conditions_.feature_width();
  net.hidden = config.hidden;
  net.layers = config.layers;
  net.output_width = vocab_.size();
  net.zero_init_readout = true;
  network_ = InvariantSetNetwork(net, rng, "atoms");
}

AtomGenerator AtomGenerator::for_dataset(const io::Dataset& dataset, const AtomGeneratorConfig& config,
                                         const std::vector<std::string>& condition_names) {
  if (dataset.records.empty()) throw ConfigError("atom generator: empty dataset");
  std::vector<Lattice> lattices;
  std::vector<ConditionValues> props;
  for (const auto& r : dataset.records) {
    lattices.push_back(r.crystal.lattice());
    props.push_back(r.properties);
  }
  return AtomGenerator(TokenVocabulary::from_crystals(dataset.crystals()), LatticeStandardizer::fit(lattices),
                       ConditionSchema::fit(condition_names, props), config);
}

MatrixX AtomGenerator::node_features(const LatticeParameters& lattice, std::span<const int> tokens,
                                     const ConditionValues* conditions) const {
  const auto starts = std::count(tokens.begin(), tokens.end(), vocab_.start());
  if (starts != 1) throw ConfigError("atom generator input must contain exactly one START token");
  const VectorX lat = lattice_features_.features(lattice);
  const VectorX cond = conditions_.features(conditions);
  const int v = vocab_.size();
  MatrixX x = MatrixX::Zero(static_cast<Eigen::Index>(tokens.size()), v + lat.size() + cond.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const int t = tokens[i];
    if (t != vocab_.start() && !vocab_.is_element(t)) throw ConfigError("atom generator input has an invalid token");
    const auto row = static_cast<Eigen::Index>(i);
    x(row, t) = 1.0;
    x.row(row).segment(v, lat.size()) = lat.transpose();
    if (cond.size() > 0) x.row(row).tail(cond.size()) = cond.transpose();
  }
  return x;
}

VectorX AtomGenerator::logits(const LatticeParameters& lattice, std::span<const int> tokens,
                              const ConditionValues* conditions) const {
  GraphBatch batch;
  batch.add_graph(node_features(lattice, tokens, conditions));
  ad::Tape tape;
  return tape.value(logits(tape, batch)).row(0).transpose();
}

TokenDistribution AtomGenerator::forward(const LatticeParameters& lattice, std::span<const int> tokens,
                                         const ConditionValues* conditions) const {
  return temperature_softmax(logits(lattice, tokens, conditions), 1.0);
}

nlohmann::json AtomGenerator::to_json() {
  nlohmann::json j;
  j["format"] = kFormat;
  j["version"] = kVersion;
  j["vocabulary"] = vocab_.elements();
  j["lattice_features"] = lattice_features_.to_json();
  j["condition_schema"] = conditions_.to_json();
  j["config"] = {
      {"hidden", config_.hidden}, {"layers", config_.layers}, {"seed", config_.seed}, {"kl", to_string(config_.kl)}};
  j["parameters"] = ad::parameters_to_json(parameters());
  return j;
}

AtomGenerator AtomGenerator::from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != kFormat || j.at("version").get<int>() != kVersion) {
      throw ParseError("not an atom generator checkpoint (format/version mismatch)");
    }
    AtomGeneratorConfig config;
    config.hidden = j.at("config").at("hidden").get<int>();
    config.layers = j.at("config").at("layers").get<int>();
    config.seed = j.at("config").at("seed").get<std::uint64_t>();
    config.kl = kl_direction_from_string(j.at("config").value("kl", to_string(KlDirection::TargetToModel)));
    AtomGenerator model(TokenVocabulary(j.at("vocabulary").get<std::vector<std::string>>()),
                        LatticeStandardizer::from_json(j.at("lattice_features")),
                        ConditionSchema::from_json(j.at("condition_schema")), config);
    ad::parameters_from_json(j.at("parameters"), model.parameters());
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("atom generator checkpoint: ") + e.what());
  }
}

void AtomGenerator::save(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << to_json().dump() << '\n';
}

AtomGenerator AtomGenerator::load(const std::filesystem::path& path) {
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

std::string to_string(KlDirection direction) {
  return direction == KlDirection::TargetToModel ? "target-model" : "model-target";
}

KlDirection kl_direction_from_string(const std::string& name) {
  if (name == "target-model") return KlDirection::TargetToModel;
  if (name == "model-target") return KlDirection::ModelToTarget;
  throw ConfigError("unknown KL direction '" + name + "' (expected target-model or model-target)");
}

ad::Var prefix_loss(ad::Tape& tape, AtomGenerator& model, std::span<const PrefixExample> examples) {
  if (examples.empty()) throw ConfigError("prefix_loss: no examples");
  const auto& vocab = model.vocabulary();
  std::vector<MatrixX> graphs;
  MatrixX targets(static_cast<Eigen::Index>(examples.size()), vocab.size());
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto& ex = examples[i];
    std::vector<int> tokens{vocab.start()};
    tokens.insert(tokens.end(), ex.prefix.begin(), ex.prefix.end());
    graphs.push_back(model.node_features(ex.lattice, tokens, ex.conditions ? &*ex.conditions : nullptr));
    targets.row(static_cast<Eigen::Index>(i)) = build_target_distribution(ex.remaining, vocab).probs().transpose();
  }
  const GraphBatch batch = make_batch(graphs);
  const ad::Var logits = model.logits(tape, batch);
  if (model.config().kl == KlDirection::TargetToModel) return tape.target_kl_from_logits(logits, targets);
  return tape.kl_divergence(tape.softmax_rows(logits), targets);
}

std::vector<PrefixExample> sample_prefixes(const Crystal& crystal, const TokenVocabulary& vocab, Rng& rng,
                                           const std::optional<ConditionValues>& conditions) {
  const auto& species = crystal.species();
  const std::size_t n = species.size();
  const LatticeParameters lattice = lattice_invariants(crystal.lattice());
  std::vector<PrefixExample> out;
  std::vector<std::size_t> order(n);
  for (std::size_t t = 0; t <= n; ++t) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    // Partial Fisher-Yates: the first t entries are a uniform t-subset.
    for (std::size_t i = 0; i < t; ++i) std::swap(order[i], order[i + rng.uniform_index(n - i)]);
    PrefixExample ex;
    ex.lattice = lattice;
    ex.conditions = conditions;
    for (std::size_t i = 0; i < n; ++i) {
      if (i < t) {
        ex.prefix.push_back(vocab.index_of(species[order[i]]));
      } else {
        ex.remaining.push_back(species[order[i]]);
      }
    }
    out.push_back(std::move(ex));
  }
  return out;
}

double train_epoch(AtomGenerator& model, const io::Dataset& dataset, ad::Optimizer& optimizer, Rng& rng,
                   int crystals_per_step) {
  if (dataset.records.empty()) throw ConfigError("train_epoch: empty dataset");
  tune_allocator();
  if (crystals_per_step < 1) throw ConfigError("train_epoch: crystals_per_step must be >= 1");
  std::vector<std::size_t> order(dataset.records.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.uniform_index(i)]);

  const bool conditional = model.condition_schema().width() > 0;
  double total = 0.0;
  std::size_t rows = 0;
  for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(crystals_per_step)) {
    std::vector<PrefixExample> batch;
    const std::size_t stop = std::min(order.size(), begin + static_cast<std::size_t>(crystals_per_step));
    for (std::size_t i = begin; i < stop; ++i) {
      const auto& record = dataset.records[order[i]];
      std::optional<ConditionValues> cond;
      if (conditional) cond = record.properties;
      auto examples = sample_prefixes(record.crystal, model.vocabulary(), rng, cond);
      batch.insert(batch.end(), std::make_move_iterator(examples.begin()), std::make_move_iterator(examples.end()));
    }
    optimizer.zero_grad();
    ad::Tape tape;
    ad::Var loss = prefix_loss(tape, model, batch);
    tape.backward(loss);
    optimizer.step();
    total += tape.scalar(loss) * static_cast<double>(batch.size());
    rows += batch.size();
  }
  return total / static_cast<double>(rows);
}

std::optional<std::vector<int>> sample_tokens(const NextTokenLogits& next, const TokenVocabulary& vocab,
                                              const SamplingOptions& options, Rng& rng, SamplingTrace* trace,
                                              const PrefixCheck* check) {
  if (options.max_atoms < 1) throw ConfigError("max_atoms must be >= 1");
  std::vector<int> tokens{vocab.start()};
  while (static_cast<int>(tokens.size()) - 1 < options.max_atoms) {
    VectorX logits = next(tokens);
    if (logits.size() != vocab.size()) throw ShapeError("next-token logits do not match the vocabulary");
    logits(vocab.start()) = -std::numeric_limits<double>::infinity();
    const TokenDistribution dist = nucleus_filter(temperature_softmax(logits, options.temperature), options.top_p);
    if (trace) trace->step_entropies.push_back(dist.entropy());
    const auto& p = dist.probs();
    const int token = static_cast<int>(rng.categorical(std::span<const double>(p.data(), static_cast<std::size_t>(p.size()))));
    if (token == vocab.end()) break;
    tokens.push_back(token);
    if (check && !(*check)(std::span<const int>(tokens).subspan(1))) return std::nullopt;
  }
  return std::vector<int>(tokens.begin() + 1, tokens.end());
}

std::vector<std::string> sample_atoms(const AtomGenerator& model, const LatticeParameters& lattice,
                                      const SamplingOptions& options, Rng& rng, const ConditionValues* conditions,
                                      SamplingTrace* trace) {
  const auto tokens = sample_tokens(
      [&](std::span<const int> t) { return model.logits(lattice, t, conditions); }, model.vocabulary(), options, rng,
      trace);
  std::vector<std::string> out;
  for (int t : *tokens) out.push_back(model.vocabulary().symbol(t));
  return out;
}

}  // namespace xtalgen
