#include "xtalgen/autodiff/distribution.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "xtalgen/core/errors.hpp"

namespace xtalgen {

TokenDistribution::TokenDistribution(VectorX probs) : probs_(std::move(probs)) {
  if (probs_.size() == 0) throw ShapeError("token distribution is empty");
  if ((probs_.array() < 0.0).any() || !probs_.allFinite()) {
    throw ShapeError("token distribution has negative or non-finite entries");
  }
  if (std::abs(probs_.sum() - 1.0) > 1e-9) throw ShapeError("token distribution does not sum to 1");
}

double TokenDistribution::entropy() const {
  double h = 0.0;
  for (Eigen::Index i = 0; i < probs_.size(); ++i) {
    if (probs_(i) > 0.0) h -= probs_(i) * std::log(probs_(i));
  }
  return h;
}

Eigen::Index TokenDistribution::argmax() const {
  Eigen::Index best = 0;
  probs_.maxCoeff(&best);
  return best;
}

TokenDistribution temperature_softmax(const VectorX& logits, double tau) {
  if (!(tau > 0.0)) throw ConfigError("temperature must be > 0");
  if (logits.size() == 0) throw ShapeError("temperature_softmax: empty logits");
  const VectorX scaled = logits / tau;
  // -inf logits (masked tokens) are allowed; at least one entry must be finite.
  const double m = scaled.maxCoeff();
  if (!std::isfinite(m)) throw ShapeError("temperature_softmax: no finite logits");
  VectorX e = (scaled.array() - m).exp().matrix();
  e /= e.sum();
  return TokenDistribution(std::move(e));
}

TokenDistribution nucleus_filter(const TokenDistribution& dist, double top_p) {
  if (!(top_p > 0.0 && top_p <= 1.0)) throw ConfigError("nucleus threshold must lie in (0, 1]");
  const VectorX& p = dist.probs();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(p.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return p(a) > p(b); });

  // Tolerance absorbs rounding in the running sum (0.6 + 0.3 < 0.9 in binary).
  constexpr double kSlack = 1e-12;
  VectorX kept = VectorX::Zero(p.size());
  double cumulative = 0.0;
  for (Eigen::Index idx : order) {
    kept(idx) = p(idx);
    cumulative += p(idx);
    if (cumulative >= top_p - kSlack) break;
  }
  if (kept == p) return dist;
  kept /= kept.sum();
  return TokenDistribution(std::move(kept));
}

double kl_divergence(const VectorX& p, const VectorX& q, double floor) {
  if (p.size() != q.size()) throw ShapeError("kl_divergence: shape mismatch");
  double total = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (p(i) > 0.0) total += p(i) * std::log(p(i) / std::max(q(i), floor));
  }
  return total;
}

double mse(const MatrixX& pred, const MatrixX& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) throw ShapeError("mse: shape mismatch");
  if (pred.size() == 0) throw ShapeError("mse: empty input");
  return (pred - target).squaredNorm() / static_cast<double>(pred.size());
}

}  // namespace xtalgen
