#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "xtalgen/core/errors.hpp"
#include "xtalgen/core/log.hpp"
#include "xtalgen/core/random.hpp"

#include <Eigen/Dense>

namespace xtalgen {

inline constexpr double kCovarianceFloor = 1e-6;

// Log-density of N(x; mean, L Lᵀ) given the lower Cholesky factor L.
template <typename Scalar, typename DerivedX, typename DerivedM>
Scalar gaussian_log_pdf(const Eigen::MatrixBase<DerivedX>& x, const Eigen::MatrixBase<DerivedM>& mean,
                        const Eigen::LLT<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>>& llt) {
  const auto dim = static_cast<Scalar>(mean.size());
  const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> y = llt.matrixL().solve((x - mean).eval());
  const Scalar log_det = Scalar(2) * llt.matrixLLT().diagonal().array().log().sum();
  return Scalar(-0.5) * (dim * std::log(Scalar(2) * std::numbers::pi_v<Scalar>) + log_det + y.squaredNorm());
}

// Mixture of K full-covariance Gaussians over R^D.
template <typename Scalar>
class GaussianMixture {
 public:
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  GaussianMixture() = default;
  GaussianMixture(Vector weights, std::vector<Vector> means, std::vector<Matrix> covariances)
      : weights_(std::move(weights)), means_(std::move(means)), covariances_(std::move(covariances)) {
    const auto k = static_cast<std::size_t>(weights_.size());
    if (k == 0 || means_.size() != k || covariances_.size() != k) {
      throw ShapeError("gaussian mixture: inconsistent component count");
    }
    if ((weights_.array() < Scalar(0)).any() || std::abs(weights_.sum() - Scalar(1)) > Scalar(1e-9)) {
      throw ShapeError("gaussian mixture: weights must be non-negative and sum to 1");
    }
    const auto d = means_.front().size();
    for (std::size_t i = 0; i < k; ++i) {
      if (means_[i].size() != d || covariances_[i].rows() != d || covariances_[i].cols() != d) {
        throw ShapeError("gaussian mixture: inconsistent dimensions");
      }
      factors_.emplace_back(covariances_[i]);
      if (factors_.back().info() != Eigen::Success) {
        throw ConditioningError("gaussian mixture: covariance of component " + std::to_string(i) +
                                " is not positive definite");
      }
    }
  }

  int components() const { return static_cast<int>(weights_.size()); }
  int dim() const { return means_.empty() ? 0 : static_cast<int>(means_.front().size()); }
  const Vector& weights() const { return weights_; }
  const std::vector<Vector>& means() const { return means_; }
  const std::vector<Matrix>& covariances() const { return covariances_; }
  const Eigen::LLT<Matrix>& cholesky(int k) const { return factors_[static_cast<std::size_t>(k)]; }

  Scalar component_log_pdf(int k, const Vector& x) const {
    return gaussian_log_pdf<Scalar>(x, means_[static_cast<std::size_t>(k)], cholesky(k));
  }

  Scalar log_pdf(const Vector& x) const {
    Vector terms(components());
    for (int k = 0; k < components(); ++k) terms(k) = std::log(weights_(k)) + component_log_pdf(k, x);
    const Scalar m = terms.maxCoeff();
    return m + std::log((terms.array() - m).exp().sum());
  }

  // Mean per-sample log-likelihood; samples are rows.
  Scalar mean_log_likelihood(const Matrix& samples) const {
    Scalar total = 0;
    for (Eigen::Index i = 0; i < samples.rows(); ++i) total += log_pdf(samples.row(i).transpose());
    return total / static_cast<Scalar>(samples.rows());
  }

  Vector sample(Rng& rng) const {
    std::vector<double> w(weights_.data(), weights_.data() + weights_.size());
    const auto k = static_cast<int>(rng.categorical(w));
    Vector z(dim());
    for (int i = 0; i < dim(); ++i) z(i) = static_cast<Scalar>(rng.normal());
    return means_[static_cast<std::size_t>(k)] + cholesky(k).matrixL() * z;
  }

 private:
  Vector weights_;
  std::vector<Vector> means_;
  std::vector<Matrix> covariances_;
  std::vector<Eigen::LLT<Matrix>> factors_;
};

struct EmOptions {
  int components = 16;
  int max_iters = 300;
  double tolerance = 1e-7;  // stop when the mean log-likelihood improves by less
  double covariance_floor = kCovarianceFloor;
  std::uint64_t seed = 0;
};

template <typename Scalar>
struct EmFit {
  GaussianMixture<Scalar> mixture;
  // Mean log-likelihood of the samples before the first M-step and after each one.
  std::vector<Scalar> log_likelihood_trace;
  int iterations = 0;
  int reinitializations = 0;
};

namespace detail {

template <typename Scalar>
using DynMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using DynVector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// Responsibilities (M x K) and mean log-likelihood under a mixture.
template <typename Scalar>
Scalar e_step(const GaussianMixture<Scalar>& gmm, const DynMatrix<Scalar>& samples, DynMatrix<Scalar>& resp) {
  const auto m = samples.rows();
  const int k = gmm.components();
  const auto d = static_cast<Scalar>(gmm.dim());
  DynMatrix<Scalar> log_prob(m, k);
  for (int c = 0; c < k; ++c) {
    const auto& llt = gmm.cholesky(c);
    const DynMatrix<Scalar> diff = (samples.rowwise() - gmm.means()[static_cast<std::size_t>(c)].transpose()).transpose();
    const DynMatrix<Scalar> y = llt.matrixL().solve(diff);
    const Scalar log_det = Scalar(2) * llt.matrixLLT().diagonal().array().log().sum();
    const Scalar base = std::log(gmm.weights()(c)) -
                        Scalar(0.5) * (d * std::log(Scalar(2) * std::numbers::pi_v<Scalar>) + log_det);
    log_prob.col(c) = (base - Scalar(0.5) * y.colwise().squaredNorm().array()).matrix().transpose();
  }
  resp.resize(m, k);
  Scalar total = 0;
  for (Eigen::Index i = 0; i < m; ++i) {
    const Scalar mx = log_prob.row(i).maxCoeff();
    const Scalar lse = mx + std::log((log_prob.row(i).array() - mx).exp().sum());
    resp.row(i) = (log_prob.row(i).array() - lse).exp().matrix();
    total += lse;
  }
  return total / static_cast<Scalar>(m);
}

template <typename Scalar>
DynMatrix<Scalar> sample_covariance(const DynMatrix<Scalar>& samples, Scalar floor) {
  const DynVector<Scalar> mean = samples.colwise().mean().transpose();
  const DynMatrix<Scalar> centered = samples.rowwise() - mean.transpose();
  DynMatrix<Scalar> cov = centered.transpose() * centered / static_cast<Scalar>(samples.rows());
  cov.diagonal().array() += floor;
  return cov;
}

// k-means++ seeding followed by a few Lloyd iterations; returns hard labels.
template <typename Scalar>
std::vector<int> kmeans_labels(const DynMatrix<Scalar>& samples, int k, Rng& rng) {
  const auto m = samples.rows();
  std::vector<DynVector<Scalar>> centers;
  centers.push_back(samples.row(static_cast<Eigen::Index>(rng.uniform_index(static_cast<std::size_t>(m)))).transpose());
  std::vector<double> dist2(static_cast<std::size_t>(m));
  while (static_cast<int>(centers.size()) < k) {
    double total = 0;
    for (Eigen::Index i = 0; i < m; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& c : centers) best = std::min(best, static_cast<double>((samples.row(i).transpose() - c).squaredNorm()));
      dist2[static_cast<std::size_t>(i)] = best;
      total += best;
    }
    const auto pick = total > 0 ? rng.categorical(dist2) : rng.uniform_index(static_cast<std::size_t>(m));
    centers.push_back(samples.row(static_cast<Eigen::Index>(pick)).transpose());
  }
  std::vector<int> labels(static_cast<std::size_t>(m), 0);
  for (int iter = 0; iter < 20; ++iter) {
    bool changed = false;
    for (Eigen::Index i = 0; i < m; ++i) {
      int best_c = 0;
      Scalar best = std::numeric_limits<Scalar>::infinity();
      for (int c = 0; c < k; ++c) {
        const Scalar d2 = (samples.row(i).transpose() - centers[static_cast<std::size_t>(c)]).squaredNorm();
        if (d2 < best) {
          best = d2;
          best_c = c;
        }
      }
      if (labels[static_cast<std::size_t>(i)] != best_c || iter == 0) changed = true;
      labels[static_cast<std::size_t>(i)] = best_c;
    }
    if (!changed) break;
    for (int c = 0; c < k; ++c) {
      DynVector<Scalar> sum = DynVector<Scalar>::Zero(samples.cols());
      int count = 0;
      for (Eigen::Index i = 0; i < m; ++i) {
        if (labels[static_cast<std::size_t>(i)] == c) {
          sum += samples.row(i).transpose();
          ++count;
        }
      }
      if (count > 0) centers[static_cast<std::size_t>(c)] = sum / static_cast<Scalar>(count);
    }
  }
  return labels;
}

}  // namespace detail

// Expectation-maximization fit of a K-component mixture to the rows of
// `samples`. Covariances get `covariance_floor` added to the diagonal at every
// M-step. A component whose responsibility mass vanishes is re-seeded from a
// random sample.
template <typename Scalar>
EmFit<Scalar> fit_em(const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& samples,
                     const EmOptions& options) {
  using Matrix = detail::DynMatrix<Scalar>;
  using Vector = detail::DynVector<Scalar>;
  const auto m = samples.rows();
  const auto d = samples.cols();
  const int k = options.components;
  if (d < 1) throw ConfigError("fit_em: samples must have at least one dimension");
  if (k < 1 || m < k) throw ConfigError("fit_em: need at least K samples (M >= K >= 1)");
  if (!samples.allFinite()) throw ConfigError("fit_em: samples contain non-finite values");

  const auto floor = static_cast<Scalar>(options.covariance_floor);
  Rng rng(options.seed);
  const Matrix global_cov = detail::sample_covariance<Scalar>(samples, floor);

  // Hard assignment from k-means seeds the responsibilities of the first M-step.
  Matrix resp = Matrix::Zero(m, k);
  const auto labels = detail::kmeans_labels<Scalar>(samples, k, rng);
  for (Eigen::Index i = 0; i < m; ++i) resp(i, labels[static_cast<std::size_t>(i)]) = 1;

  EmFit<Scalar> fit;
  auto m_step = [&](const Matrix& r) {
    Vector weights(k);
    std::vector<Vector> means;
    std::vector<Matrix> covs;
    for (int c = 0; c < k; ++c) {
      Scalar nk = r.col(c).sum();
      if (nk < Scalar(1e-10)) {
        const auto pick = static_cast<Eigen::Index>(rng.uniform_index(static_cast<std::size_t>(m)));
        log_warning("fit_em: component " + std::to_string(c) + " lost all responsibility; reinitializing");
        ++fit.reinitializations;
        means.push_back(samples.row(pick).transpose());
        covs.push_back(global_cov);
        weights(c) = Scalar(1) / static_cast<Scalar>(m);
        continue;
      }
      const Vector mean = (samples.transpose() * r.col(c)) / nk;
      const Matrix centered = samples.rowwise() - mean.transpose();
      Matrix cov = centered.transpose() * r.col(c).asDiagonal() * centered / nk;
      cov = Scalar(0.5) * (cov + cov.transpose());
      cov.diagonal().array() += floor;
      means.push_back(mean);
      covs.push_back(std::move(cov));
      weights(c) = nk / static_cast<Scalar>(m);
    }
    weights /= weights.sum();
    return GaussianMixture<Scalar>(weights, std::move(means), std::move(covs));
  };

  fit.mixture = m_step(resp);
  Scalar ll = detail::e_step(fit.mixture, samples, resp);
  fit.log_likelihood_trace.push_back(ll);
  for (int iter = 1; iter <= options.max_iters; ++iter) {
    fit.mixture = m_step(resp);
    const Scalar next = detail::e_step(fit.mixture, samples, resp);
    fit.log_likelihood_trace.push_back(next);
    fit.iterations = iter;
    if (next - ll < static_cast<Scalar>(options.tolerance)) break;
    ll = next;
  }
  return fit;
}

// Gaussian conditioning of every component on x[observed] = values, with
// weights re-scaled by each component's marginal likelihood of the observation.
// The result is a mixture over the remaining dimensions in ascending order.
template <typename Scalar>
GaussianMixture<Scalar> condition(const GaussianMixture<Scalar>& gmm, std::span<const int> observed,
                                  const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& values) {
  using Matrix = detail::DynMatrix<Scalar>;
  using Vector = detail::DynVector<Scalar>;
  const int d = gmm.dim();
  if (static_cast<Eigen::Index>(observed.size()) != values.size()) {
    throw ShapeError("condition: one value per observed dimension required");
  }
  if (!values.allFinite()) throw ConditioningError("condition: observed values must be finite");
  std::vector<bool> is_observed(static_cast<std::size_t>(d), false);
  for (int o : observed) {
    if (o < 0 || o >= d || is_observed[static_cast<std::size_t>(o)]) {
      throw ShapeError("condition: observed dimensions must be distinct and in range");
    }
    is_observed[static_cast<std::size_t>(o)] = true;
  }
  std::vector<int> remaining;
  for (int i = 0; i < d; ++i) {
    if (!is_observed[static_cast<std::size_t>(i)]) remaining.push_back(i);
  }
  if (remaining.empty()) throw ShapeError("condition: no dimensions remain");
  if (observed.empty()) return gmm;

  const auto no = static_cast<Eigen::Index>(observed.size());
  const auto nr = static_cast<Eigen::Index>(remaining.size());
  Vector log_w(gmm.components());
  std::vector<Vector> means;
  std::vector<Matrix> covs;
  for (int k = 0; k < gmm.components(); ++k) {
    const Vector& mu = gmm.means()[static_cast<std::size_t>(k)];
    const Matrix& cov = gmm.covariances()[static_cast<std::size_t>(k)];
    Vector mu_o(no), mu_r(nr);
    Matrix s_oo(no, no), s_ro(nr, no), s_rr(nr, nr);
    for (Eigen::Index i = 0; i < no; ++i) {
      mu_o(i) = mu(observed[static_cast<std::size_t>(i)]);
      for (Eigen::Index j = 0; j < no; ++j) s_oo(i, j) = cov(observed[static_cast<std::size_t>(i)], observed[static_cast<std::size_t>(j)]);
    }
    for (Eigen::Index i = 0; i < nr; ++i) {
      mu_r(i) = mu(remaining[static_cast<std::size_t>(i)]);
      for (Eigen::Index j = 0; j < no; ++j) s_ro(i, j) = cov(remaining[static_cast<std::size_t>(i)], observed[static_cast<std::size_t>(j)]);
      for (Eigen::Index j = 0; j < nr; ++j) s_rr(i, j) = cov(remaining[static_cast<std::size_t>(i)], remaining[static_cast<std::size_t>(j)]);
    }
    Eigen::LLT<Matrix> llt(s_oo);
    if (llt.info() != Eigen::Success) {
      throw ConditioningError("condition: observed covariance of component " + std::to_string(k) +
                              " is not invertible");
    }
    const Vector residual = values - mu_o;
    means.push_back(mu_r + s_ro * llt.solve(residual));
    Matrix c = s_rr - s_ro * llt.solve(s_ro.transpose());
    covs.push_back(Scalar(0.5) * (c + c.transpose()));
    log_w(k) = std::log(gmm.weights()(k)) + gaussian_log_pdf<Scalar>(values, mu_o, llt);
  }
  const Scalar mx = log_w.maxCoeff();
  Vector w = (log_w.array() - mx).exp().matrix();
  w /= w.sum();
  return GaussianMixture<Scalar>(w, std::move(means), std::move(covs));
}

}  // namespace xtalgen
