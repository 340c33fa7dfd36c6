#include "xtalgen/pipeline/training.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "xtalgen/core/errors.hpp"

namespace xtalgen {

double Schedule::rate(int epoch) const {
  if (epochs <= 1) return learning_rate;
  const double progress = std::clamp(static_cast<double>(epoch) / (epochs - 1), 0.0, 1.0);
  const double cosine = 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
  return learning_rate * (final_fraction + (1.0 - final_fraction) * cosine);
}

LatticeGenerator fit_lattice_generator(const io::Dataset& dataset, const LatticeFitOptions& options,
                                       const std::vector<std::string>& condition_names) {
  if (dataset.records.empty()) throw ConfigError("fit-lattice: empty dataset");
  std::vector<Lattice> lattices;
  MatrixX conditions(static_cast<Eigen::Index>(dataset.records.size()),
                     static_cast<Eigen::Index>(condition_names.size()));
  for (std::size_t i = 0; i < dataset.records.size(); ++i) {
    const auto& r = dataset.records[i];
    lattices.push_back(r.crystal.lattice());
    for (std::size_t k = 0; k < condition_names.size(); ++k) {
      auto it = r.properties.find(condition_names[k]);
      if (it == r.properties.end()) {
        throw ConfigError("record '" + r.identifier + "' has no value for condition '" + condition_names[k] + "'");
      }
      conditions(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = it->second;
    }
  }
  return LatticeGenerator::fit(lattices, options, condition_names, conditions);
}

AtomGenerator train_atom_generator(const io::Dataset& dataset, const AtomTrainingSpec& spec) {
  AtomGenerator model = AtomGenerator::for_dataset(dataset, spec.model, spec.condition_names);
  ad::OptimizerConfig oc;
  oc.learning_rate = spec.schedule.learning_rate;
  ad::Optimizer optimizer(model.parameters(), oc);
  Rng rng(derive_seed(spec.model.seed, 1));
  for (int epoch = 0; epoch < spec.schedule.epochs; ++epoch) {
    optimizer.set_learning_rate(spec.schedule.rate(epoch));
    const double loss = train_epoch(model, dataset, optimizer, rng, spec.crystals_per_step);
    if (spec.progress) spec.progress(epoch, loss);
  }
  return model;
}

PositionFlowModel train_position_flow(const io::Dataset& dataset, const FlowTrainingSpec& spec) {
  PositionFlowModel model = PositionFlowModel::for_dataset(dataset, spec.model, spec.condition_names);
  ad::OptimizerConfig oc;
  oc.learning_rate = spec.schedule.learning_rate;
  ad::Optimizer optimizer(model.parameters(), oc);
  Rng rng(derive_seed(spec.model.seed, 1));
  for (int epoch = 0; epoch < spec.schedule.epochs; ++epoch) {
    optimizer.set_learning_rate(spec.schedule.rate(epoch));
    const double loss = train_epoch_flow(model, dataset, optimizer, rng, spec.pairs_per_crystal, spec.crystals_per_step);
    if (spec.progress) spec.progress(epoch, loss);
  }
  return model;
}

}  // namespace xtalgen
