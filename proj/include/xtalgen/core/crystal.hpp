#pragma once

#include <map>
#include <string>
#include <vector>

#include "xtalgen/core/lattice.hpp"

namespace xtalgen {

// Periodic crystal (L, A, X). Fractional coordinates are wrapped to [0, 1) on
// construction and the object is immutable afterwards.
class Crystal {
 public:
  Crystal() = default;
  Crystal(Lattice lattice, std::vector<std::string> species, const Coords& frac_coords);

  const Lattice& lattice() const { return lattice_; }
  const std::vector<std::string>& species() const { return species_; }
  const Coords& frac_coords() const { return frac_; }
  std::size_t size() const { return species_.size(); }

  Coords cartesian() const { return lattice_.to_cartesian(frac_); }

  // Element symbol -> count, ordered by symbol.
  std::map<std::string, int> composition() const;

 private:
  Lattice lattice_;
  std::vector<std::string> species_;
  Coords frac_;
};

// X · Lᵀ with lattice vectors as rows, i.e. row i = Σ_k X[i,k] · rows[k,:].
Coords frac_to_cart(const Crystal& crystal);

// "Na4Cl4"-style string, elements in alphabetical order.
std::string composition_string(const std::map<std::string, int>& composition);

// Shortest Cartesian distance between two fractional positions over all
// periodic images (Å).
double periodic_distance(const Lattice& lattice, const Vec3& frac_a, const Vec3& frac_b);

}  // namespace xtalgen
