#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "xtalgen/autodiff/tape.hpp"
#include "xtalgen/core/random.hpp"

namespace xtalgen::testing {

inline ad::Matrix random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng, double scale = 1.0) {
  ad::Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

// Scalar readout Σ W ⊙ M with a fixed random W, so every entry of M matters.
inline ad::Var reduce(ad::Tape& tape, ad::Var m, std::uint64_t seed = 99) {
  Rng rng(seed);
  const ad::Matrix& v = tape.value(m);
  ad::Var weighted = tape.mul(m, tape.constant(random_matrix(v.rows(), v.cols(), rng)));
  ad::Var row = tape.sum_rows(weighted);
  return tape.matmul(row, tape.constant(ad::Matrix::Ones(v.cols(), 1)));
}

inline const std::vector<std::pair<int, int>> kOpShapes{{2, 3}, {4, 1}, {3, 5}};

using OpFn = std::function<ad::Var(ad::Tape&, ad::Var)>;

struct OpCase {
  std::string name;
  OpFn fn;
};

// One scalar function per differentiable op (both operands for binary ones),
// all taking an r x c input. Captured constants are drawn from `rng`.
inline std::vector<OpCase> op_suite(int r, int c, Rng& rng) {
  using ad::Matrix;
  using ad::Tape;
  using ad::Var;
  const Matrix other = random_matrix(r, c, rng);
  const Matrix right = random_matrix(c, 3, rng);
  const Matrix left = random_matrix(2, r, rng);
  const Matrix bias = random_matrix(1, c, rng);
  std::vector<int> gather;
  for (int e = 0; e < 2 * r + 1; ++e) gather.push_back(static_cast<int>(rng.uniform_index(static_cast<std::size_t>(r))));
  std::vector<int> segments;
  for (int e = 0; e < r; ++e) segments.push_back(e % 2);
  Matrix target_dist = (random_matrix(r, c, rng).array().exp()).matrix();
  for (int i = 0; i < r; ++i) target_dist.row(i) /= target_dist.row(i).sum();
  Matrix labels(r, c);
  for (Eigen::Index i = 0; i < labels.size(); ++i) labels.data()[i] = rng.uniform() < 0.5 ? 0.0 : 1.0;

  return {
      {"matmul right", [=](Tape& t, Var v) { return reduce(t, t.matmul(v, t.constant(right))); }},
      {"matmul left", [=](Tape& t, Var v) { return reduce(t, t.matmul(t.constant(left), v)); }},
      {"matmul both", [=](Tape& t, Var v) { return reduce(t, t.matmul(v, t.matmul(t.constant(right), t.constant(Matrix(right.transpose()))))); }},
      {"add", [=](Tape& t, Var v) { return reduce(t, t.add(v, t.constant(other))); }},
      {"sub", [=](Tape& t, Var v) { return reduce(t, t.sub(t.constant(other), v)); }},
      {"mul", [=](Tape& t, Var v) { return reduce(t, t.mul(v, v)); }},
      {"scale", [=](Tape& t, Var v) { return reduce(t, t.scale(v, -2.5)); }},
      {"add_bias input", [=](Tape& t, Var v) { return reduce(t, t.add_bias(v, t.constant(bias))); }},
      {"add_bias bias", [=](Tape& t, Var v) { return reduce(t, t.add_bias(t.constant(other), t.sum_rows(v))); }},
      {"silu", [=](Tape& t, Var v) { return reduce(t, t.silu(v)); }},
      {"sigmoid", [=](Tape& t, Var v) { return reduce(t, t.sigmoid(v)); }},
      {"softmax_rows", [=](Tape& t, Var v) { return reduce(t, t.softmax_rows(v)); }},
      {"sum_rows", [=](Tape& t, Var v) { return reduce(t, t.sum_rows(v)); }},
      {"mean_rows", [=](Tape& t, Var v) { return reduce(t, t.mean_rows(v)); }},
      {"concat_cols", [=](Tape& t, Var v) { return reduce(t, t.concat_cols(v, t.mul(v, v))); }},
      {"gather_rows", [=](Tape& t, Var v) { return reduce(t, t.gather_rows(v, gather)); }},
      {"segment_mean", [=](Tape& t, Var v) { return reduce(t, t.segment_mean(v, segments, 3)); }},
      {"kl_divergence", [=](Tape& t, Var v) { return t.kl_divergence(t.softmax_rows(v), target_dist); }},
      {"target_kl_from_logits", [=](Tape& t, Var v) { return t.target_kl_from_logits(v, target_dist); }},
      {"mse", [=](Tape& t, Var v) { return t.mse(v, other); }},
      {"bce_with_logits", [=](Tape& t, Var v) { return t.bce_with_logits(v, labels); }},
  };
}

}  // namespace xtalgen::testing
