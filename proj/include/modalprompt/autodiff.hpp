// Copyright 2026 The ModalPrompt Lab Authors
// SPDX-License-Identifier: Apache-2.0

// Minimal reverse-mode automatic differentiation over dense row-major
// matrices. Every op records a backward closure only when one of its inputs
// requires a gradient, so inference builds no graph at all.

#pragma once

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace modalprompt {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic, Eigen::RowMajor>;

namespace ag {

struct Node {
  Matrix value;
  Matrix grad;  // empty until a gradient reaches the node
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  void accumulate(const Matrix& g);
};

/// Shared handle to a graph node.
class Var {
 public:
  Var() = default;

  static Var constant(Matrix value);
  static Var leaf(Matrix value);  // trainable

  const Matrix& value() const { return node_->value; }
  Matrix& mutable_value() { return node_->value; }
  /// Gradient, or a zero matrix of the value's shape if none arrived.
  Matrix grad() const;
  void zero_grad() { node_->grad.resize(0, 0); }

  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool empty() const { return !node_; }
  Eigen::Index rows() const { return node_ ? node_->value.rows() : 0; }
  Eigen::Index cols() const { return node_ ? node_->value.cols() : 0; }
  /// Value of a 1x1 node.
  double scalar() const;

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}
  friend Var make_node(Matrix, std::vector<Var>, std::function<void(Node&)>);

  std::shared_ptr<Node> node_;
};

/// Backpropagates from a 1x1 output; gradients accumulate into every
/// reachable node that requires one.
void backward(const Var& output);

// Elementwise and linear algebra.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var add_row(const Var& a, const Var& row);  // broadcast 1xn over rows
Var matmul(const Var& a, const Var& b);     // a * b
Var matmul_nt(const Var& a, const Var& b);  // a * b^T
Var tanh(const Var& a);
Var gelu(const Var& a);  // tanh approximation
Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps = 1e-5);

// Shape manipulation.
Var reshape(const Var& a, Eigen::Index rows, Eigen::Index cols);
Var concat_rows(std::span<const Var> parts);
Var gather_rows(const Var& src, std::span<const int> indices);
Var mean_rows(const Var& a);  // 1 x cols

// Reductions.
Var sum(const Var& a);
Var l2_normalize_rows(const Var& a);
/// Cosine similarity between two 1xn vectors, as a 1x1 node.
Var cosine(const Var& a, const Var& b);
/// Sum over rows of -log softmax(logits_row)[target]; 1x1.
Var cross_entropy_sum(const Var& logits, std::span<const int> targets);

/// Contiguous row range [offset, offset + length) of a packed batch.
struct Segment {
  int offset = 0;
  int length = 0;
};

/// Multi-head causal self-attention over packed sequences. `qkv` holds
/// [Q | K | V] column blocks of width d each; each segment is an independent
/// sequence whose row i attends to rows 0..i of the same segment.
Var causal_attention(const Var& qkv, int heads, std::span<const Segment> segments);

}  // namespace ag
}  // namespace modalprompt
