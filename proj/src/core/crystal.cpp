#include "xtalgen/core/crystal.hpp"

#include <limits>

namespace xtalgen {

Crystal::Crystal(Lattice lattice, std::vector<std::string> species, const Coords& frac_coords)
    : lattice_(std::move(lattice)), species_(std::move(species)), frac_(frac_coords) {
  if (static_cast<Eigen::Index>(species_.size()) != frac_.rows()) {
    throw ShapeError("crystal has " + std::to_string(species_.size()) + " species but " +
                     std::to_string(frac_.rows()) + " coordinate rows");
  }
  if (!frac_.allFinite()) throw Error("crystal coordinates contain non-finite values");
  frac_ = wrap_frac(frac_);
}

std::map<std::string, int> Crystal::composition() const {
  std::map<std::string, int> counts;
  for (const auto& s : species_) ++counts[s];
  return counts;
}

Coords frac_to_cart(const Crystal& crystal) { return crystal.cartesian(); }

std::string composition_string(const std::map<std::string, int>& composition) {
  std::string out;
  for (const auto& [symbol, count] : composition) out += symbol + std::to_string(count);
  return out;
}

double periodic_distance(const Lattice& lattice, const Vec3& frac_a, const Vec3& frac_b) {
  const Vec3 delta = min_image_delta(frac_a, frac_b);
  double best = std::numeric_limits<double>::infinity();
  for (int i = -1; i <= 1; ++i) {
    for (int j = -1; j <= 1; ++j) {
      for (int k = -1; k <= 1; ++k) {
        const Vec3 shifted = delta + Vec3(i, j, k);
        const double d = (shifted.transpose() * lattice.rows()).norm();
        best = std::min(best, d);
      }
    }
  }
  return best;
}

}  // namespace xtalgen
