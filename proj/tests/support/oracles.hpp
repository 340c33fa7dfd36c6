#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "xtalgen/core/crystal.hpp"
#include "xtalgen/core/elements.hpp"
#include "xtalgen/core/lattice.hpp"

namespace xtalgen::testing {

// Wrapped positional RMSD (fractional units) between two structures with the
// same species multiset, minimized over a global torus translation and
// species-preserving atom assignments. Translations are anchored on every
// pairing of atom 0 with a same-species reference atom, then refined by the
// mean residual. Exhaustive over permutations, so only for small N.
inline double wrapped_rmsd(const std::vector<std::string>& species_a, const Coords& a,
                           const std::vector<std::string>& species_b, const Coords& b) {
  const auto n = species_a.size();
  if (n == 0 || n != species_b.size()) return std::numeric_limits<double>::infinity();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto cost = [&](const Vec3& shift, const std::vector<std::size_t>& perm) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (species_a[i] != species_b[perm[i]]) return std::numeric_limits<double>::infinity();
      const Vec3 d = min_image_delta(Vec3(a.row(static_cast<Eigen::Index>(i)).transpose() + shift),
                                     Vec3(b.row(static_cast<Eigen::Index>(perm[i])).transpose()));
      s += d.squaredNorm();
    }
    return s;
  };
  double best = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> perm = order;
  do {
    bool ok = true;
    for (std::size_t i = 0; i < n && ok; ++i) ok = species_a[i] == species_b[perm[i]];
    if (!ok) continue;
    for (std::size_t anchor = 0; anchor < n; ++anchor) {
      Vec3 shift = min_image_delta(Vec3(a.row(static_cast<Eigen::Index>(anchor)).transpose()),
                                   Vec3(b.row(static_cast<Eigen::Index>(perm[anchor])).transpose()));
      for (int refine = 0; refine < 3; ++refine) {
        Vec3 mean = Vec3::Zero();
        for (std::size_t i = 0; i < n; ++i) {
          mean += min_image_delta(Vec3(a.row(static_cast<Eigen::Index>(i)).transpose() + shift),
                                  Vec3(b.row(static_cast<Eigen::Index>(perm[i])).transpose()));
        }
        shift += mean / static_cast<double>(n);
      }
      best = std::min(best, cost(shift, perm));
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return std::sqrt(best / static_cast<double>(n));
}

// Enumerates the full cross-product of oxidation-state choices.
inline bool brute_force_balanced(const std::map<std::string, int>& composition, const ElementTable& table) {
  std::vector<int> counts;
  std::vector<const std::vector<int>*> states;
  for (const auto& [symbol, count] : composition) {
    counts.push_back(count);
    states.push_back(&table.oxidation_states(symbol));
  }
  std::vector<std::size_t> pick(counts.size(), 0);
  while (true) {
    long total = 0;
    for (std::size_t i = 0; i < counts.size(); ++i) total += static_cast<long>(counts[i]) * (*states[i])[pick[i]];
    if (total == 0) return true;
    std::size_t i = 0;
    while (i < pick.size() && ++pick[i] == states[i]->size()) pick[i++] = 0;
    if (i == pick.size()) return false;
  }
}

}  // namespace xtalgen::testing
