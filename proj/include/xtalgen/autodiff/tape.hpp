#pragma once

#include <string>
#include <vector>

#include "xtalgen/core/errors.hpp"
#include "xtalgen/core/types.hpp"

namespace xtalgen::ad {

using Matrix = Eigen::MatrixXd;

// Trainable tensor: a rank-2 value plus a gradient buffer of the same shape.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  Parameter() = default;
  Parameter(std::string n, Matrix v) : name(std::move(n)), value(std::move(v)), grad(Matrix::Zero(value.rows(), value.cols())) {}
  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

class Tape;

// Handle to a node recorded on a Tape.
class Var {
 public:
  Var() = default;
  int id() const { return id_; }
  bool valid() const { return id_ >= 0; }

 private:
  friend class Tape;
  explicit Var(int id) : id_(id) {}
  int id_ = -1;
};

// Reverse-mode tape over dense matrices. Nodes are recorded in execution order;
// backward() replays them in reverse and accumulates into Parameter::grad for
// every parameter leaf. One tape per forward/backward pass.
class Tape {
 public:
  Var constant(Matrix value);
  // Leaf whose gradient is accumulated into p.grad by backward(). The value is
  // referenced, not copied: p must outlive the tape and stay unmodified.
  Var parameter(Parameter& p);
  // Inference-only leaf: referenced like above, never receives gradient.
  Var parameter(const Parameter& p);

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);  // elementwise
  Var scale(Var a, double s);
  // a (N x C) + bias (1 x C) on every row.
  Var add_bias(Var a, Var bias);
  Var silu(Var a);
  Var sigmoid(Var a);
  Var softmax_rows(Var a);
  Var sum_rows(Var a);   // N x C -> 1 x C
  Var mean_rows(Var a);  // N x C -> 1 x C
  Var concat_cols(Var a, Var b);
  // out.row(e) = a.row(index[e])
  Var gather_rows(Var a, std::vector<int> index);
  // out.row(s) = mean of a.row(e) over e with segment[e] == s (zero rows for empty segments)
  Var segment_mean(Var a, std::vector<int> segment, int num_segments);

  // Mean over rows of Σ_j p_ij ln(p_ij / max(q_ij, floor)); q is a constant target.
  Var kl_divergence(Var p, const Matrix& target, double floor = 1e-12);
  // Mean over rows of Σ_j q_ij ln(q_ij / softmax(logits)_ij); q is a constant target.
  Var target_kl_from_logits(Var logits, const Matrix& target);
  // Mean of squared componentwise differences against a constant target.
  Var mse(Var pred, const Matrix& target);
  // Mean binary cross-entropy of sigmoid(logits) against 0/1 labels.
  Var bce_with_logits(Var logits, const Matrix& labels);

  const Matrix& value(Var v) const { return value_of(nodes_.at(static_cast<std::size_t>(v.id()))); }
  const Matrix& grad(Var v) const { return nodes_.at(static_cast<std::size_t>(v.id())).grad; }
  double scalar(Var v) const;

  // Seeds d(out)/d(out) = 1 for a 1x1 output and propagates to every node.
  void backward(Var out);

  std::size_t size() const { return nodes_.size(); }

 private:
  enum class Op {
    Constant, Parameter, MatMul, Add, Sub, Mul, Scale, AddBias, Silu, Sigmoid, Softmax,
    SumRows, MeanRows, ConcatCols, GatherRows, SegmentMean, KL, TargetKL, MSE, BCE
  };
  struct Node {
    Op op = Op::Constant;
    int a = -1;
    int b = -1;
    Matrix value;
    Matrix grad;
    const Parameter* param = nullptr;
    Parameter* trainable = nullptr;
    bool requires_grad = false;
    Matrix saved;  // op-specific constant (target, labels)
    double scalar = 0.0;
    std::vector<int> index;
    int count = 0;
  };

  static Node make_node(Op op, int a = -1, int b = -1) {
    Node n;
    n.op = op;
    n.a = a;
    n.b = b;
    return n;
  }
  static const Matrix& value_of(const Node& n) { return n.param ? n.param->value : n.value; }
  Var push(Node node);
  Node& node(Var v) { return nodes_.at(static_cast<std::size_t>(v.id())); }
  const Matrix& val(Var v) const { return value(v); }

  std::vector<Node> nodes_;
};

}  // namespace xtalgen::ad
