#ifndef RANKEDCL_TAPE_HPP
#define RANKEDCL_TAPE_HPP

#include <cstddef>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "rankedcl/numkernel.hpp"

namespace rankedcl {

/// Reverse-mode gradient tape over dense matrices.
///
/// Every primitive appends one node holding its forward value. backward()
/// walks the nodes in exact reverse recording order and accumulates
/// gradients into each input. Nodes that do not feed the output keep a zero
/// gradient. A tape is single-owner and not thread-safe.
class GradTape {
 public:
  class Var {
   public:
    std::size_t id() const { return id_; }

   private:
    friend class GradTape;
    explicit Var(std::size_t id) : id_(id) {}
    std::size_t id_;
  };

  /// Value and gradient of a scalar function of one matrix.
  using ScalarFn = std::function<std::pair<double, Matrix>(const Matrix&)>;

  Var leaf(Matrix value);

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var hadamard(Var a, Var b);
  Var scale(Var x, double factor);
  /// Adds a 1×c bias row to every row of x.
  Var add_row_bias(Var x, Var bias);
  Var relu(Var x);
  Var tanh(Var x);
  Var l2_normalize_rows(Var x);
  Var sum(Var x);
  /// ½‖x‖²
  Var half_squared_norm(Var x);
  /// Mean cross-entropy of row-wise softmax against integer labels.
  Var softmax_cross_entropy(Var logits, std::span<const int> labels);
  /// Scalar node whose value and gradient come from a caller-supplied function.
  Var scalar_op(Var x, const ScalarFn& fn);

  const Matrix& value(Var v) const { return nodes_.at(v.id_).value; }
  const Matrix& grad(Var v) const { return nodes_.at(v.id_).grad; }
  double scalar(Var v) const;

  /// Seeds d(output)/d(output) = 1 and propagates. output must be 1×1.
  void backward(Var output);

  std::size_t size() const { return nodes_.size(); }
  /// Node ids in the order the last backward() visited them.
  const std::vector<std::size_t>& last_backward_order() const { return visited_; }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    std::function<void(GradTape&, std::size_t)> backward;
  };

  Var push(Matrix value, std::function<void(GradTape&, std::size_t)> backward);
  Node& node(std::size_t id) { return nodes_[id]; }
  void check_same_shape(Var a, Var b, const char* op) const;

  std::vector<Node> nodes_;
  std::vector<std::size_t> visited_;
};

}  // namespace rankedcl

#endif  // RANKEDCL_TAPE_HPP
