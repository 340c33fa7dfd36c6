#include "xtalgen/autodiff/tape.hpp"

#include <cmath>

namespace xtalgen::ad {

namespace {

void require(bool ok, const char* what, const Matrix& a, const Matrix& b) {
  if (!ok) {
    throw ShapeError(std::string(what) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()) + ")");
  }
}

double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

}  // namespace

Var Tape::push(Node n) {
  if (n.op == Op::Parameter) {
    n.requires_grad = n.trainable != nullptr;
  } else if (n.op != Op::Constant) {
    n.requires_grad = (n.a >= 0 && nodes_[static_cast<std::size_t>(n.a)].requires_grad) ||
                      (n.b >= 0 && nodes_[static_cast<std::size_t>(n.b)].requires_grad);
  }
  nodes_.push_back(std::move(n));
  return Var(static_cast<int>(nodes_.size()) - 1);
}

Var Tape::constant(Matrix value) {
  Node n = make_node(Op::Constant);
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::parameter(Parameter& p) {
  Node n = make_node(Op::Parameter);
  n.param = &p;
  n.trainable = &p;
  return push(std::move(n));
}

Var Tape::parameter(const Parameter& p) {
  Node n = make_node(Op::Parameter);
  n.param = &p;
  return push(std::move(n));
}

Var Tape::matmul(Var a, Var b) {
  require(val(a).cols() == val(b).rows(), "matmul", val(a), val(b));
  Node n = make_node(Op::MatMul, a.id(), b.id());
  n.value = val(a) * val(b);
  return push(std::move(n));
}

Var Tape::add(Var a, Var b) {
  require(val(a).rows() == val(b).rows() && val(a).cols() == val(b).cols(), "add", val(a), val(b));
  Node n = make_node(Op::Add, a.id(), b.id());
  n.value = val(a) + val(b);
  return push(std::move(n));
}

Var Tape::sub(Var a, Var b) {
  require(val(a).rows() == val(b).rows() && val(a).cols() == val(b).cols(), "sub", val(a), val(b));
  Node n = make_node(Op::Sub, a.id(), b.id());
  n.value = val(a) - val(b);
  return push(std::move(n));
}

Var Tape::mul(Var a, Var b) {
  require(val(a).rows() == val(b).rows() && val(a).cols() == val(b).cols(), "mul", val(a), val(b));
  Node n = make_node(Op::Mul, a.id(), b.id());
  n.value = val(a).cwiseProduct(val(b));
  return push(std::move(n));
}

Var Tape::scale(Var a, double s) {
  Node n = make_node(Op::Scale, a.id());
  n.value = val(a) * s;
  n.scalar = s;
  return push(std::move(n));
}

Var Tape::add_bias(Var a, Var bias) {
  require(val(bias).rows() == 1 && val(bias).cols() == val(a).cols(), "add_bias", val(a), val(bias));
  Node n = make_node(Op::AddBias, a.id(), bias.id());
  n.value = val(a).rowwise() + val(bias).row(0);
  return push(std::move(n));
}

Var Tape::silu(Var a) {
  Node n = make_node(Op::Silu, a.id());
  n.value = val(a).unaryExpr([](double x) { return x * sigmoid_scalar(x); });
  return push(std::move(n));
}

Var Tape::sigmoid(Var a) {
  Node n = make_node(Op::Sigmoid, a.id());
  n.value = val(a).unaryExpr([](double x) { return sigmoid_scalar(x); });
  return push(std::move(n));
}

Var Tape::softmax_rows(Var a) {
  Node n = make_node(Op::Softmax, a.id());
  const Matrix& x = val(a);
  n.value.resize(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double m = x.row(r).maxCoeff();
    n.value.row(r) = (x.row(r).array() - m).exp().matrix();
    n.value.row(r) /= n.value.row(r).sum();
  }
  return push(std::move(n));
}

Var Tape::sum_rows(Var a) {
  Node n = make_node(Op::SumRows, a.id());
  n.value = val(a).colwise().sum();
  return push(std::move(n));
}

Var Tape::mean_rows(Var a) {
  if (val(a).rows() == 0) throw ShapeError("mean_rows: empty input");
  Node n = make_node(Op::MeanRows, a.id());
  n.value = val(a).colwise().mean();
  return push(std::move(n));
}

Var Tape::concat_cols(Var a, Var b) {
  require(val(a).rows() == val(b).rows(), "concat_cols", val(a), val(b));
  Node n = make_node(Op::ConcatCols, a.id(), b.id());
  n.value.resize(val(a).rows(), val(a).cols() + val(b).cols());
  n.value << val(a), val(b);
  return push(std::move(n));
}

Var Tape::gather_rows(Var a, std::vector<int> index) {
  const Matrix& x = val(a);
  Node n = make_node(Op::GatherRows, a.id());
  n.value.resize(static_cast<Eigen::Index>(index.size()), x.cols());
  for (std::size_t e = 0; e < index.size(); ++e) {
    if (index[e] < 0 || index[e] >= x.rows()) throw ShapeError("gather_rows: index out of range");
    n.value.row(static_cast<Eigen::Index>(e)) = x.row(index[e]);
  }
  n.index = std::move(index);
  return push(std::move(n));
}

Var Tape::segment_mean(Var a, std::vector<int> segment, int num_segments) {
  const Matrix& x = val(a);
  if (static_cast<Eigen::Index>(segment.size()) != x.rows()) {
    throw ShapeError("segment_mean: one segment id per row required");
  }
  Node n = make_node(Op::SegmentMean, a.id());
  n.value = Matrix::Zero(num_segments, x.cols());
  n.saved = Matrix::Zero(num_segments, 1);
  for (std::size_t e = 0; e < segment.size(); ++e) {
    if (segment[e] < 0 || segment[e] >= num_segments) throw ShapeError("segment_mean: id out of range");
    n.value.row(segment[e]) += x.row(static_cast<Eigen::Index>(e));
    n.saved(segment[e], 0) += 1.0;
  }
  for (int s = 0; s < num_segments; ++s) {
    if (n.saved(s, 0) > 0) n.value.row(s) /= n.saved(s, 0);
  }
  n.index = std::move(segment);
  n.count = num_segments;
  return push(std::move(n));
}

Var Tape::kl_divergence(Var p, const Matrix& target, double floor) {
  require(val(p).rows() == target.rows() && val(p).cols() == target.cols(), "kl_divergence", val(p), target);
  if (target.rows() == 0) throw ShapeError("kl_divergence: empty input");
  Node n = make_node(Op::KL, p.id());
  n.saved = target.cwiseMax(floor);
  const Matrix& pv = val(p);
  double total = 0.0;
  for (Eigen::Index i = 0; i < pv.size(); ++i) {
    const double pi = pv(i);
    if (pi > 0.0) total += pi * std::log(pi / n.saved(i));
  }
  n.value = Matrix::Constant(1, 1, total / static_cast<double>(pv.rows()));
  return push(std::move(n));
}

Var Tape::target_kl_from_logits(Var logits, const Matrix& target) {
  require(val(logits).rows() == target.rows() && val(logits).cols() == target.cols(), "target_kl_from_logits",
          val(logits), target);
  if (target.rows() == 0) throw ShapeError("target_kl_from_logits: empty input");
  Node n = make_node(Op::TargetKL, logits.id());
  const Matrix& x = val(logits);
  n.saved.resize(x.rows(), 2 * x.cols());
  double total = 0.0;
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double m = x.row(r).maxCoeff();
    const double lse = m + std::log((x.row(r).array() - m).exp().sum());
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const double q = target(r, j);
      if (q > 0.0) total += q * (std::log(q) - (x(r, j) - lse));
      n.saved(r, j) = std::exp(x(r, j) - lse);
    }
  }
  n.saved.rightCols(x.cols()) = target;
  n.value = Matrix::Constant(1, 1, total / static_cast<double>(x.rows()));
  return push(std::move(n));
}

Var Tape::mse(Var pred, const Matrix& target) {
  require(val(pred).rows() == target.rows() && val(pred).cols() == target.cols(), "mse", val(pred), target);
  if (target.size() == 0) throw ShapeError("mse: empty input");
  Node n = make_node(Op::MSE, pred.id());
  n.saved = target;
  n.value = Matrix::Constant(1, 1, (val(pred) - target).squaredNorm() / static_cast<double>(target.size()));
  return push(std::move(n));
}

Var Tape::bce_with_logits(Var logits, const Matrix& labels) {
  require(val(logits).rows() == labels.rows() && val(logits).cols() == labels.cols(), "bce_with_logits",
          val(logits), labels);
  if (labels.size() == 0) throw ShapeError("bce_with_logits: empty input");
  Node n = make_node(Op::BCE, logits.id());
  n.saved = labels;
  const Matrix& z = val(logits);
  double total = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) total += softplus(z(i)) - labels(i) * z(i);
  n.value = Matrix::Constant(1, 1, total / static_cast<double>(z.size()));
  return push(std::move(n));
}

double Tape::scalar(Var v) const {
  const Matrix& m = value(v);
  if (m.size() != 1) throw ShapeError("scalar: node is not 1x1");
  return m(0, 0);
}

void Tape::backward(Var out) {
  if (value(out).size() != 1) throw ShapeError("backward: output must be 1x1");
  for (auto& n : nodes_) {
    if (n.requires_grad) {
      n.grad = Matrix::Zero(value_of(n).rows(), value_of(n).cols());
    } else {
      n.grad.resize(0, 0);
    }
  }
  if (!nodes_[static_cast<std::size_t>(out.id())].requires_grad) return;
  nodes_[static_cast<std::size_t>(out.id())].grad(0, 0) = 1.0;

  for (int id = out.id(); id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.requires_grad) continue;
    if (n.op == Op::Parameter) {
      if (n.trainable) n.trainable->grad += n.grad;
      continue;
    }
    Node& na = nodes_[static_cast<std::size_t>(n.a)];
    Node* nb = n.b >= 0 ? &nodes_[static_cast<std::size_t>(n.b)] : nullptr;
    const bool need_a = na.requires_grad;
    const bool need_b = nb != nullptr && nb->requires_grad;
    Matrix& ga = na.grad;
    const Matrix& xa = value_of(na);
    switch (n.op) {
      case Op::MatMul:
        if (need_a) ga.noalias() += n.grad * value_of(*nb).transpose();
        if (need_b) nb->grad.noalias() += xa.transpose() * n.grad;
        break;
      case Op::Add:
        if (need_a) ga += n.grad;
        if (need_b) nb->grad += n.grad;
        break;
      case Op::Sub:
        if (need_a) ga += n.grad;
        if (need_b) nb->grad -= n.grad;
        break;
      case Op::Mul:
        // a and b may be the same node; both contributions then land in one buffer.
        if (need_a) ga += n.grad.cwiseProduct(value_of(*nb));
        if (need_b) nb->grad += n.grad.cwiseProduct(xa);
        break;
      case Op::Scale:
        ga += n.scalar * n.grad;
        break;
      case Op::AddBias:
        if (need_a) ga += n.grad;
        if (need_b) nb->grad += n.grad.colwise().sum();
        break;
      case Op::Silu:
        ga += n.grad.cwiseProduct(xa.unaryExpr([](double x) {
          const double s = sigmoid_scalar(x);
          return s * (1.0 + x * (1.0 - s));
        }));
        break;
      case Op::Sigmoid:
        ga += n.grad.cwiseProduct(n.value.unaryExpr([](double s) { return s * (1.0 - s); }));
        break;
      case Op::Softmax: {
        const Matrix& y = n.value;
        const Eigen::VectorXd dots = n.grad.cwiseProduct(y).rowwise().sum();
        ga += y.cwiseProduct(n.grad.colwise() - dots);
        break;
      }
      case Op::SumRows:
        ga.rowwise() += n.grad.row(0);
        break;
      case Op::MeanRows:
        ga.rowwise() += n.grad.row(0) / static_cast<double>(xa.rows());
        break;
      case Op::ConcatCols:
        if (need_a) ga += n.grad.leftCols(xa.cols());
        if (need_b) nb->grad += n.grad.rightCols(value_of(*nb).cols());
        break;
      case Op::GatherRows:
        for (std::size_t e = 0; e < n.index.size(); ++e) {
          ga.row(n.index[e]) += n.grad.row(static_cast<Eigen::Index>(e));
        }
        break;
      case Op::SegmentMean:
        for (std::size_t e = 0; e < n.index.size(); ++e) {
          const int s = n.index[e];
          ga.row(static_cast<Eigen::Index>(e)) += n.grad.row(s) / n.saved(s, 0);
        }
        break;
      case Op::KL: {
        const double g = n.grad(0, 0) / static_cast<double>(xa.rows());
        for (Eigen::Index i = 0; i < xa.size(); ++i) {
          const double pi = std::max(xa(i), 1e-300);
          ga(i) += g * (std::log(pi / n.saved(i)) + 1.0);
        }
        break;
      }
      case Op::TargetKL: {
        const auto c = xa.cols();
        ga += (n.grad(0, 0) / static_cast<double>(xa.rows())) * (n.saved.leftCols(c) - n.saved.rightCols(c));
        break;
      }
      case Op::MSE:
        ga += (n.grad(0, 0) * 2.0 / static_cast<double>(xa.size())) * (xa - n.saved);
        break;
      case Op::BCE: {
        const double g = n.grad(0, 0) / static_cast<double>(xa.size());
        for (Eigen::Index i = 0; i < xa.size(); ++i) ga(i) += g * (sigmoid_scalar(xa(i)) - n.saved(i));
        break;
      }
      case Op::Constant:
      case Op::Parameter:
        break;
    }
  }
}

}  // namespace xtalgen::ad
