#pragma once

#include "xtalgen/core/types.hpp"

namespace xtalgen {

// Normalized probabilities over a token vocabulary.
class TokenDistribution {
 public:
  TokenDistribution() = default;
  // Throws ShapeError unless probs is non-negative and sums to 1 within 1e-9.
  explicit TokenDistribution(VectorX probs);

  const VectorX& probs() const { return probs_; }
  double operator[](Eigen::Index i) const { return probs_(i); }
  Eigen::Index size() const { return probs_.size(); }
  double entropy() const;  // nats
  Eigen::Index argmax() const;

 private:
  VectorX probs_;
};

// softmax(logits / tau). Throws ConfigError for tau <= 0.
TokenDistribution temperature_softmax(const VectorX& logits, double tau);

// Keeps the smallest descending-probability prefix (ties by ascending index)
// whose cumulative mass reaches top_p, zeroes the rest and renormalizes.
// Throws ConfigError for top_p outside (0, 1].
TokenDistribution nucleus_filter(const TokenDistribution& dist, double top_p);

// Σ p_i ln(p_i / q_i) with 0·ln0 = 0 and q floored at `floor`.
double kl_divergence(const VectorX& p, const VectorX& q, double floor = 1e-12);
inline double kl_divergence(const TokenDistribution& p, const TokenDistribution& q, double floor = 1e-12) {
  return kl_divergence(p.probs(), q.probs(), floor);
}

// Mean of squared componentwise differences.
double mse(const MatrixX& pred, const MatrixX& target);

}  // namespace xtalgen
