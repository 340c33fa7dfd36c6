#pragma once

#include <array>
#include <compare>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "xtalgen/core/crystal.hpp"
#include "xtalgen/core/elements.hpp"
#include "xtalgen/core/types.hpp"

namespace xtalgen {

struct FingerprintOptions {
  double length_quantum = 0.1;  // Å, lattice lengths and pair distances
  double angle_quantum = 1.0;   // degrees
};

// Composition string, quantized lattice invariants and the sorted quantized
// periodic pair distances. Equal fingerprints count as the same structure.
struct StructureFingerprint {
  std::string composition;
  std::array<long, 6> lattice{};
  std::vector<long> distances;
  auto operator<=>(const StructureFingerprint&) const = default;
};

StructureFingerprint fingerprint(const Crystal& crystal, const FingerprintOptions& options = {});

struct ValidityOptions {
  double min_volume = 10.0;   // Å^3
  double min_distance = 0.5;  // Å
};

// Volume, minimum periodic distance and charge balance.
bool is_valid(const Crystal& crystal, const ElementTable& table, const ValidityOptions& options = {});

// Percent of distinct fingerprints among the samples. Throws ConfigError when empty.
double uniqueness(const std::vector<Crystal>& samples, const FingerprintOptions& options = {});
// Percent of samples whose fingerprint does not occur in `reference`.
double novelty(const std::vector<Crystal>& samples, const std::vector<Crystal>& reference,
               const FingerprintOptions& options = {});

// Element frequencies (atoms of each symbol / all atoms) over `support`.
VectorX element_histogram(const std::vector<Crystal>& crystals, const std::vector<std::string>& support);
// Sorted union of the elements present in either set.
std::vector<std::string> element_support(const std::vector<Crystal>& a, const std::vector<Crystal>& b);

// Jensen-Shannon distance with base-2 logarithms; inputs are normalized first.
// Throws ShapeError on size mismatch and ConfigError on negative or all-zero input.
double jsd(const VectorX& p, const VectorX& q);

// (density in g/cm^3, volume in Å^3, number of atoms).
Vec3 descriptor(const Crystal& crystal, const ElementTable& table);
MatrixX descriptors(const std::vector<Crystal>& crystals, const ElementTable& table);

// Squared MMD with an RBF kernel whose bandwidth is the median pairwise
// distance of the pooled rows. The unbiased estimate is clamped at zero.
double mmd(const MatrixX& a, const MatrixX& b, bool biased = false);

// Pluggable stability model; the harness reports metastability only when one is given.
class EnergyOracle {
 public:
  virtual ~EnergyOracle() = default;
  virtual bool is_metastable(const Crystal& crystal) = 0;
};

struct MetricsReport {
  std::size_t n_samples = 0;
  std::size_t n_valid = 0;
  double valid_pct = 0.0;
  double unique_pct = 0.0;
  double novel_pct = 0.0;
  std::optional<double> jsd;
  std::optional<double> mmd;
  std::optional<double> metastable_pct;
  std::optional<double> msun_pct;
  std::size_t attempts = 0;
  double total_seconds = 0.0;
  double seconds_per_sample = 0.0;

  nlohmann::json to_json() const;
  static std::string csv_header();
  std::string csv_row() const;
};

MetricsReport evaluate(const std::vector<Crystal>& samples, const std::vector<Crystal>& reference,
                       const ElementTable& table, EnergyOracle* oracle = nullptr,
                       const FingerprintOptions& fingerprint_options = {}, const ValidityOptions& validity = {});

}  // namespace xtalgen
