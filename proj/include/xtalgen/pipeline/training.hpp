#pragma once

#include <functional>
#include <string>
#include <vector>

#include "xtalgen/atoms/atom_generator.hpp"
#include "xtalgen/io/dataset.hpp"
#include "xtalgen/lattice/lattice_generator.hpp"
#include "xtalgen/positions/position_flow.hpp"

namespace xtalgen {

// Cosine decay from `learning_rate` to `learning_rate * final_fraction`.
struct Schedule {
  int epochs = 1000;
  double learning_rate = 1e-3;
  double final_fraction = 0.1;
  double rate(int epoch) const;
};

// Called after every epoch with (epoch, mean loss).
using ProgressFn = std::function<void(int, double)>;

// Lattices (and, when named, the dataset properties as extra dimensions).
LatticeGenerator fit_lattice_generator(const io::Dataset& dataset, const LatticeFitOptions& options,
                                       const std::vector<std::string>& condition_names = {});

struct AtomTrainingSpec {
  AtomGeneratorConfig model;
  Schedule schedule;
  int crystals_per_step = 8;
  std::vector<std::string> condition_names;
  ProgressFn progress;
};

AtomGenerator train_atom_generator(const io::Dataset& dataset, const AtomTrainingSpec& spec);

struct FlowTrainingSpec {
  PositionFlowConfig model;
  Schedule schedule;
  int crystals_per_step = 8;
  int pairs_per_crystal = 8;
  std::vector<std::string> condition_names;
  ProgressFn progress;
};

PositionFlowModel train_position_flow(const io::Dataset& dataset, const FlowTrainingSpec& spec);

}  // namespace xtalgen
