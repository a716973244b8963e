#include "rankedcl/tape.hpp"

#include <cmath>
#include <string>

namespace rankedcl {

GradTape::Var GradTape::push(Matrix value, std::function<void(GradTape&, std::size_t)> backward) {
  Node n;
  n.grad = Matrix::Zero(value.rows(), value.cols());
  n.value = std::move(value);
  n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(nodes_.size() - 1);
}

void GradTape::check_same_shape(Var a, Var b, const char* op) const {
  const auto& va = value(a);
  const auto& vb = value(b);
  if (va.rows() != vb.rows() || va.cols() != vb.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch");
  }
}

GradTape::Var GradTape::leaf(Matrix value) { return push(std::move(value), nullptr); }

GradTape::Var GradTape::matmul(Var a, Var b) {
  Matrix out = rankedcl::matmul(value(a), value(b));
  const auto ia = a.id_, ib = b.id_;
  return push(std::move(out), [ia, ib](GradTape& t, std::size_t self) {
    const Matrix& g = t.node(self).grad;
    t.node(ia).grad.noalias() += g * t.node(ib).value.transpose();
    t.node(ib).grad.noalias() += t.node(ia).value.transpose() * g;
  });
}

GradTape::Var GradTape::add(Var a, Var b) {
  check_same_shape(a, b, "add");
  const auto ia = a.id_, ib = b.id_;
  return push(value(a) + value(b), [ia, ib](GradTape& t, std::size_t self) {
    t.node(ia).grad += t.node(self).grad;
    t.node(ib).grad += t.node(self).grad;
  });
}

GradTape::Var GradTape::hadamard(Var a, Var b) {
  check_same_shape(a, b, "hadamard");
  const auto ia = a.id_, ib = b.id_;
  Matrix out = value(a).cwiseProduct(value(b));
  return push(std::move(out), [ia, ib](GradTape& t, std::size_t self) {
    const Matrix& g = t.node(self).grad;
    t.node(ia).grad += g.cwiseProduct(t.node(ib).value);
    t.node(ib).grad += g.cwiseProduct(t.node(ia).value);
  });
}

GradTape::Var GradTape::scale(Var x, double factor) {
  const auto ix = x.id_;
  return push(value(x) * factor, [ix, factor](GradTape& t, std::size_t self) {
    t.node(ix).grad += t.node(self).grad * factor;
  });
}

GradTape::Var GradTape::add_row_bias(Var x, Var bias) {
  const Matrix& vb = value(bias);
  if (vb.rows() != 1 || vb.cols() != value(x).cols()) throw ShapeError("add_row_bias: bias must be 1 x cols");
  const auto ix = x.id_, ib = bias.id_;
  Matrix out = value(x).rowwise() + vb.row(0);
  return push(std::move(out), [ix, ib](GradTape& t, std::size_t self) {
    const Matrix& g = t.node(self).grad;
    t.node(ix).grad += g;
    t.node(ib).grad += g.colwise().sum();
  });
}

GradTape::Var GradTape::relu(Var x) {
  const auto ix = x.id_;
  return push(value(x).cwiseMax(0.0), [ix](GradTape& t, std::size_t self) {
    const Matrix& in = t.node(ix).value;
    t.node(ix).grad += (in.array() > 0.0).select(t.node(self).grad, 0.0);
  });
}

GradTape::Var GradTape::tanh(Var x) {
  const auto ix = x.id_;
  return push(value(x).array().tanh().matrix(), [ix](GradTape& t, std::size_t self) {
    const Matrix& y = t.node(self).value;
    t.node(ix).grad += t.node(self).grad.cwiseProduct((1.0 - y.array().square()).matrix());
  });
}

GradTape::Var GradTape::l2_normalize_rows(Var x) {
  const auto ix = x.id_;
  return push(rankedcl::l2_normalize_rows(value(x)), [ix](GradTape& t, std::size_t self) {
    const Matrix& in = t.node(ix).value;
    const Matrix& y = t.node(self).value;
    const Matrix& g = t.node(self).grad;
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
      // d(x/|x|) projects onto the tangent plane of the unit sphere.
      const double radial = y.row(i).dot(g.row(i));
      t.node(ix).grad.row(i) += (g.row(i) - radial * y.row(i)) / in.row(i).norm();
    }
  });
}

GradTape::Var GradTape::sum(Var x) {
  const auto ix = x.id_;
  Matrix out(1, 1);
  out(0, 0) = value(x).sum();
  return push(std::move(out), [ix](GradTape& t, std::size_t self) {
    t.node(ix).grad.array() += t.node(self).grad(0, 0);
  });
}

GradTape::Var GradTape::half_squared_norm(Var x) {
  const auto ix = x.id_;
  Matrix out(1, 1);
  out(0, 0) = 0.5 * value(x).squaredNorm();
  return push(std::move(out), [ix](GradTape& t, std::size_t self) {
    t.node(ix).grad += t.node(self).grad(0, 0) * t.node(ix).value;
  });
}

GradTape::Var GradTape::softmax_cross_entropy(Var logits, std::span<const int> labels) {
  const Matrix& z = value(logits);
  if (static_cast<Eigen::Index>(labels.size()) != z.rows()) {
    throw ShapeError("softmax_cross_entropy: one label per row required");
  }
  if (z.rows() == 0) throw DegenerateInputError("softmax_cross_entropy: empty batch");
  Matrix probs(z.rows(), z.cols());
  double total = 0.0;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= z.cols()) throw ValidationError("softmax_cross_entropy: label out of range");
    const double shift = z.row(i).maxCoeff();
    const auto e = (z.row(i).array() - shift).exp();
    const double norm = e.sum();
    probs.row(i) = e / norm;
    total += std::log(norm) + shift - z(i, y);
  }
  const auto n = static_cast<double>(z.rows());
  Matrix out(1, 1);
  out(0, 0) = total / n;
  std::vector<int> saved(labels.begin(), labels.end());
  const auto ix = logits.id_;
  return push(std::move(out), [ix, probs = std::move(probs), saved = std::move(saved), n](GradTape& t, std::size_t self) {
    Matrix g = probs;
    for (std::size_t i = 0; i < saved.size(); ++i) g(static_cast<Eigen::Index>(i), saved[i]) -= 1.0;
    t.node(ix).grad += g * (t.node(self).grad(0, 0) / n);
  });
}

GradTape::Var GradTape::scalar_op(Var x, const ScalarFn& fn) {
  auto [v, g] = fn(value(x));
  if (g.rows() != value(x).rows() || g.cols() != value(x).cols()) {
    throw ShapeError("scalar_op: gradient shape differs from input");
  }
  Matrix out(1, 1);
  out(0, 0) = v;
  const auto ix = x.id_;
  return push(std::move(out), [ix, g = std::move(g)](GradTape& t, std::size_t self) {
    t.node(ix).grad += g * t.node(self).grad(0, 0);
  });
}

double GradTape::scalar(Var v) const {
  const Matrix& m = value(v);
  if (m.rows() != 1 || m.cols() != 1) throw ShapeError("scalar: node is not 1x1");
  return m(0, 0);
}

void GradTape::backward(Var output) {
  if (value(output).rows() != 1 || value(output).cols() != 1) {
    throw ShapeError("backward: output must be a 1x1 scalar");
  }
  for (auto& n : nodes_) n.grad.setZero();
  visited_.clear();
  nodes_[output.id_].grad(0, 0) = 1.0;
  for (std::size_t k = output.id_ + 1; k-- > 0;) {
    visited_.push_back(k);
    if (nodes_[k].backward) nodes_[k].backward(*this, k);
  }
}

}  // namespace rankedcl
