#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "xtalgen/core/crystal.hpp"
#include "xtalgen/lattice/gmm.hpp"

namespace xtalgen {

inline constexpr double kMinCellVolume = 10.0;  // Å^3
inline constexpr int kDefaultLatticeAttempts = 1000;

// Row-major flattening of the 3x3 row matrix into R^9 and back.
VectorX flatten_lattice(const Lattice& lattice);
Mat3 unflatten_lattice(const VectorX& flat);

// Draws component by weight, then a Gaussian sample reshaped to 3x3 rows.
// Resamples until the cell volume is at least `min_volume`; throws
// SamplingError after `max_attempts` draws. `gmm` must be 9-dimensional.
Lattice sample_lattice(const GaussianMixture<double>& gmm, Rng& rng, int max_attempts = kDefaultLatticeAttempts,
                       bool canonicalize = true, double min_volume = kMinCellVolume);

struct LatticeFitOptions {
  EmOptions em;
  bool canonicalize = true;
};

// Stage one of the generator: a mixture over flattened lattices, optionally
// jointly with property values appended as extra dimensions.
class LatticeGenerator {
 public:
  LatticeGenerator() = default;

  // `conditions`, if given, has one row per lattice and one column per name.
  static LatticeGenerator fit(const std::vector<Lattice>& lattices, const LatticeFitOptions& options,
                              const std::vector<std::string>& condition_names = {},
                              const MatrixX& conditions = MatrixX());

  const GaussianMixture<double>& mixture() const { return mixture_; }
  const std::vector<std::string>& condition_names() const { return condition_names_; }
  bool canonicalized() const { return canonicalize_; }
  const std::vector<double>& log_likelihood_trace() const { return trace_; }

  // Mixture over the 9 lattice dimensions; conditions must list every name.
  GaussianMixture<double> lattice_mixture(const std::optional<VectorX>& condition_values = std::nullopt) const;

  Lattice sample(Rng& rng, const std::optional<VectorX>& condition_values = std::nullopt,
                 int max_attempts = kDefaultLatticeAttempts) const;

  nlohmann::json to_json() const;
  static LatticeGenerator from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static LatticeGenerator load(const std::filesystem::path& path);

 private:
  GaussianMixture<double> mixture_;
  std::vector<std::string> condition_names_;
  bool canonicalize_ = true;
  std::vector<double> trace_;
};

}  // namespace xtalgen
