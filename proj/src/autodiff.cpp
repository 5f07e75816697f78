// Copyright 2026 The ModalPrompt Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "modalprompt/autodiff.hpp"

#include "modalprompt/errors.hpp"

#include <cmath>
#include <string>
#include <unordered_set>

namespace modalprompt::ag {

void Node::accumulate(const Matrix& g) {
  if (grad.size() == 0) {
    grad = g;
  } else {
    grad += g;
  }
}

Var make_node(Matrix value, std::vector<Var> inputs, std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  for (const auto& in : inputs) {
    if (in.requires_grad()) {
      node->requires_grad = true;
      break;
    }
  }
  if (node->requires_grad) {
    node->parents.reserve(inputs.size());
    for (const auto& in : inputs) node->parents.push_back(in.node());
    node->backward = std::move(backward_fn);
  }
  return Var(std::move(node));
}

Var Var::constant(Matrix value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Var(std::move(node));
}

Var Var::leaf(Matrix value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  return Var(std::move(node));
}

Matrix Var::grad() const {
  if (node_->grad.size() == 0) return Matrix::Zero(node_->value.rows(), node_->value.cols());
  return node_->grad;
}

double Var::scalar() const {
  if (node_->value.rows() != 1 || node_->value.cols() != 1) {
    throw ShapeError("scalar() on a " + std::to_string(node_->value.rows()) + "x" +
                     std::to_string(node_->value.cols()) + " node");
  }
  return node_->value(0, 0);
}

void backward(const Var& output) {
  if (!output.requires_grad()) return;
  if (output.rows() != 1 || output.cols() != 1) throw ShapeError("backward() needs a 1x1 output");

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack{{output.node().get(), 0}};
  visited.insert(output.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  output.node()->accumulate(Matrix::Ones(1, 1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward && node->grad.size() != 0) node->backward(*node);
  }
}

namespace {

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()));
  }
}

void push(Node& self, size_t i, const Matrix& g) {
  if (self.parents[i]->requires_grad) self.parents[i]->accumulate(g);
}

}  // namespace

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  return make_node(a.value() + b.value(), {a, b}, [](Node& self) {
    push(self, 0, self.grad);
    push(self, 1, self.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  return make_node(a.value() - b.value(), {a, b}, [](Node& self) {
    push(self, 0, self.grad);
    push(self, 1, -self.grad);
  });
}

Var scale(const Var& a, double s) {
  return make_node(a.value() * s, {a}, [s](Node& self) { push(self, 0, self.grad * s); });
}

Var add_scalar(const Var& a, double s) {
  Matrix out = a.value().array() + s;
  return make_node(std::move(out), {a}, [](Node& self) { push(self, 0, self.grad); });
}

Var add_row(const Var& a, const Var& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw ShapeError("add_row: bias width mismatch");
  Matrix out = a.value().rowwise() + row.value().row(0);
  return make_node(std::move(out), {a, row}, [](Node& self) {
    push(self, 0, self.grad);
    if (self.parents[1]->requires_grad) self.parents[1]->accumulate(self.grad.colwise().sum());
  });
}

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions " + std::to_string(a.cols()) + " and " +
                     std::to_string(b.rows()));
  }
  Matrix out = a.value() * b.value();
  return make_node(std::move(out), {a, b}, [](Node& self) {
    const Matrix& av = self.parents[0]->value;
    const Matrix& bv = self.parents[1]->value;
    if (self.parents[0]->requires_grad) self.parents[0]->accumulate(self.grad * bv.transpose());
    if (self.parents[1]->requires_grad) self.parents[1]->accumulate(av.transpose() * self.grad);
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_nt: widths " + std::to_string(a.cols()) + " and " +
                     std::to_string(b.cols()));
  }
  Matrix out = a.value() * b.value().transpose();
  return make_node(std::move(out), {a, b}, [](Node& self) {
    const Matrix& av = self.parents[0]->value;
    const Matrix& bv = self.parents[1]->value;
    if (self.parents[0]->requires_grad) self.parents[0]->accumulate(self.grad * bv);
    if (self.parents[1]->requires_grad) self.parents[1]->accumulate(self.grad.transpose() * av);
  });
}

Var tanh(const Var& a) {
  Matrix out = a.value().array().tanh();
  return make_node(out, {a}, [out](Node& self) {
    push(self, 0, (self.grad.array() * (1.0 - out.array().square())).matrix());
  });
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
}  // namespace

Var gelu(const Var& a) {
  const Matrix& x = a.value();
  Matrix t = (kGeluC * (x.array() + kGeluA * x.array().cube())).tanh();
  Matrix out = 0.5 * x.array() * (1.0 + t.array());
  return make_node(std::move(out), {a}, [t = std::move(t)](Node& self) {
    const Matrix& xv = self.parents[0]->value;
    Eigen::ArrayXXd d = 0.5 * (1.0 + t.array()) +
                        0.5 * xv.array() * (1.0 - t.array().square()) * kGeluC *
                            (1.0 + 3.0 * kGeluA * xv.array().square());
    push(self, 0, (self.grad.array() * d).matrix());
  });
}

Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps) {
  const Eigen::Index n = x.cols();
  if (gain.rows() != 1 || gain.cols() != n || bias.rows() != 1 || bias.cols() != n) {
    throw ShapeError("layer_norm: gain/bias width mismatch");
  }
  const Matrix& xv = x.value();
  Eigen::VectorXd mean = xv.rowwise().mean();
  Matrix centered = xv.colwise() - mean;
  Eigen::VectorXd inv_std =
      ((centered.array().square().rowwise().sum() / static_cast<double>(n)) + eps).rsqrt();
  Matrix xhat = centered.array().colwise() * inv_std.array();
  Matrix out = (xhat.array().rowwise() * gain.value().row(0).array()).matrix();
  out.rowwise() += bias.value().row(0);
  return make_node(std::move(out), {x, gain, bias},
                   [xhat = std::move(xhat), inv_std = std::move(inv_std), n](Node& self) {
                     const Matrix& dy = self.grad;
                     if (self.parents[0]->requires_grad) {
                       const RowVector& g = self.parents[1]->value;
                       Matrix dxhat = dy.array().rowwise() * g.row(0).array();
                       Eigen::VectorXd m1 = dxhat.rowwise().mean();
                       Eigen::VectorXd m2 = (dxhat.array() * xhat.array()).rowwise().sum() /
                                            static_cast<double>(n);
                       Matrix dx = dxhat;
                       dx.colwise() -= m1;
                       dx -= (xhat.array().colwise() * m2.array()).matrix();
                       dx = dx.array().colwise() * inv_std.array();
                       self.parents[0]->accumulate(dx);
                     }
                     if (self.parents[1]->requires_grad) {
                       self.parents[1]->accumulate((dy.array() * xhat.array()).colwise().sum());
                     }
                     if (self.parents[2]->requires_grad) {
                       self.parents[2]->accumulate(dy.colwise().sum());
                     }
                   });
}

Var reshape(const Var& a, Eigen::Index rows, Eigen::Index cols) {
  if (rows * cols != a.value().size()) throw ShapeError("reshape: element count mismatch");
  Matrix out = Eigen::Map<const Matrix>(a.value().data(), rows, cols);
  const Eigen::Index r0 = a.rows();
  const Eigen::Index c0 = a.cols();
  return make_node(std::move(out), {a}, [r0, c0](Node& self) {
    push(self, 0, Eigen::Map<const Matrix>(self.grad.data(), r0, c0));
  });
}

Var concat_rows(std::span<const Var> parts) {
  Eigen::Index rows = 0;
  Eigen::Index cols = -1;
  for (const auto& p : parts) {
    if (p.empty() || p.rows() == 0) continue;
    if (cols >= 0 && p.cols() != cols) throw ShapeError("concat_rows: width mismatch");
    cols = p.cols();
    rows += p.rows();
  }
  if (cols < 0) cols = parts.empty() || parts.front().empty() ? 0 : parts.front().cols();
  Matrix out(rows, cols);
  std::vector<Var> inputs;
  std::vector<Eigen::Index> offsets;
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    if (p.empty() || p.rows() == 0) continue;
    out.middleRows(at, p.rows()) = p.value();
    inputs.push_back(p);
    offsets.push_back(at);
    at += p.rows();
  }
  return make_node(std::move(out), inputs, [offsets](Node& self) {
    for (size_t i = 0; i < self.parents.size(); ++i) {
      if (!self.parents[i]->requires_grad) continue;
      self.parents[i]->accumulate(self.grad.middleRows(offsets[i], self.parents[i]->value.rows()));
    }
  });
}

Var gather_rows(const Var& src, std::span<const int> indices) {
  const Matrix& s = src.value();
  Matrix out(static_cast<Eigen::Index>(indices.size()), s.cols());
  for (size_t i = 0; i < indices.size(); ++i) {
    const int r = indices[i];
    if (r < 0 || r >= s.rows()) {
      throw ShapeError("gather_rows: index " + std::to_string(r) + " outside " +
                       std::to_string(s.rows()) + " rows");
    }
    out.row(static_cast<Eigen::Index>(i)) = s.row(r);
  }
  std::vector<int> idx(indices.begin(), indices.end());
  return make_node(std::move(out), {src}, [idx = std::move(idx)](Node& self) {
    const Matrix& sv = self.parents[0]->value;
    Matrix g = Matrix::Zero(sv.rows(), sv.cols());
    for (size_t i = 0; i < idx.size(); ++i) g.row(idx[i]) += self.grad.row(static_cast<Eigen::Index>(i));
    self.parents[0]->accumulate(g);
  });
}

Var mean_rows(const Var& a) {
  if (a.rows() == 0) throw ShapeError("mean_rows: empty input");
  Matrix out = a.value().colwise().mean();
  const Eigen::Index r = a.rows();
  return make_node(std::move(out), {a}, [r](Node& self) {
    Matrix g = self.grad.replicate(r, 1) / static_cast<double>(r);
    push(self, 0, g);
  });
}

Var sum(const Var& a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return make_node(std::move(out), {a}, [](Node& self) {
    const Matrix& av = self.parents[0]->value;
    push(self, 0, Matrix::Constant(av.rows(), av.cols(), self.grad(0, 0)));
  });
}

Var l2_normalize_rows(const Var& a) {
  Eigen::VectorXd norms = a.value().rowwise().norm();
  if ((norms.array() <= 0.0).any()) throw InputError("l2_normalize_rows: zero-norm row");
  Matrix out = a.value().array().colwise() / norms.array();
  return make_node(out, {a}, [out, norms = std::move(norms)](Node& self) {
    Eigen::VectorXd proj = (out.array() * self.grad.array()).rowwise().sum();
    Matrix g = self.grad - (out.array().colwise() * proj.array()).matrix();
    g = g.array().colwise() / norms.array();
    push(self, 0, g);
  });
}

Var cosine(const Var& a, const Var& b) {
  if (a.rows() != 1 || b.rows() != 1 || a.cols() != b.cols()) {
    throw ShapeError("cosine: expects two 1xn vectors of equal width");
  }
  const double na = a.value().norm();
  const double nb = b.value().norm();
  if (na <= 0.0 || nb <= 0.0) throw InputError("cosine: zero-norm input");
  const double c = a.value().row(0).dot(b.value().row(0)) / (na * nb);
  Matrix out(1, 1);
  out(0, 0) = c;
  return make_node(std::move(out), {a, b}, [na, nb, c](Node& self) {
    const double g = self.grad(0, 0);
    const Matrix& av = self.parents[0]->value;
    const Matrix& bv = self.parents[1]->value;
    if (self.parents[0]->requires_grad) {
      self.parents[0]->accumulate(g * (bv / (na * nb) - c * av / (na * na)));
    }
    if (self.parents[1]->requires_grad) {
      self.parents[1]->accumulate(g * (av / (na * nb) - c * bv / (nb * nb)));
    }
  });
}

Var cross_entropy_sum(const Var& logits, std::span<const int> targets) {
  const Matrix& z = logits.value();
  if (static_cast<Eigen::Index>(targets.size()) != z.rows()) {
    throw ShapeError("cross_entropy_sum: " + std::to_string(targets.size()) + " targets for " +
                     std::to_string(z.rows()) + " rows");
  }
  Matrix probs(z.rows(), z.cols());
  double total = 0.0;
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    const int t = targets[static_cast<size_t>(r)];
    if (t < 0 || t >= z.cols()) throw ShapeError("cross_entropy_sum: target outside vocabulary");
    const double m = z.row(r).maxCoeff();
    probs.row(r) = (z.row(r).array() - m).exp();
    const double s = probs.row(r).sum();
    probs.row(r) /= s;
    total += (m + std::log(s)) - z(r, t);
  }
  Matrix out(1, 1);
  out(0, 0) = total;
  std::vector<int> tg(targets.begin(), targets.end());
  return make_node(std::move(out), {logits},
                   [probs = std::move(probs), tg = std::move(tg)](Node& self) {
                     Matrix g = probs;
                     for (size_t r = 0; r < tg.size(); ++r) g(static_cast<Eigen::Index>(r), tg[r]) -= 1.0;
                     push(self, 0, g * self.grad(0, 0));
                   });
}

Var causal_attention(const Var& qkv, int heads, std::span<const Segment> segments) {
  if (heads <= 0 || qkv.cols() % (3 * heads) != 0) {
    throw ShapeError("causal_attention: qkv width not divisible by 3*heads");
  }
  const Eigen::Index d = qkv.cols() / 3;
  const Eigen::Index dh = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  const Matrix& x = qkv.value();
  Matrix out = Matrix::Zero(x.rows(), d);

  std::vector<Matrix> probs;  // per (segment, head), kept for backward
  const bool keep = qkv.requires_grad();
  if (keep) probs.reserve(segments.size() * static_cast<size_t>(heads));

  for (const auto& seg : segments) {
    if (seg.offset < 0 || seg.length < 0 || seg.offset + seg.length > x.rows()) {
      throw ShapeError("causal_attention: segment outside packed rows");
    }
    if (seg.length == 0) {
      for (int h = 0; h < heads && keep; ++h) probs.emplace_back();
      continue;
    }
    for (int h = 0; h < heads; ++h) {
      auto q = x.block(seg.offset, h * dh, seg.length, dh);
      auto k = x.block(seg.offset, d + h * dh, seg.length, dh);
      auto v = x.block(seg.offset, 2 * d + h * dh, seg.length, dh);
      Matrix s = (q * k.transpose()) * inv_sqrt;
      for (Eigen::Index i = 0; i < seg.length; ++i) {
        const double m = s.row(i).head(i + 1).maxCoeff();
        double total = 0.0;
        for (Eigen::Index j = 0; j <= i; ++j) {
          s(i, j) = std::exp(s(i, j) - m);
          total += s(i, j);
        }
        s.row(i).head(i + 1) /= total;
        s.row(i).tail(seg.length - i - 1).setZero();
      }
      out.block(seg.offset, h * dh, seg.length, dh).noalias() = s * v;
      if (keep) probs.push_back(std::move(s));
    }
  }

  std::vector<Segment> segs(segments.begin(), segments.end());
  return make_node(std::move(out), {qkv},
                   [probs = std::move(probs), segs = std::move(segs), heads, d, dh,
                    inv_sqrt](Node& self) {
                     const Matrix& xv = self.parents[0]->value;
                     Matrix g = Matrix::Zero(xv.rows(), xv.cols());
                     size_t p = 0;
                     for (const auto& seg : segs) {
                       for (int h = 0; h < heads; ++h, ++p) {
                         if (seg.length == 0) continue;
                         const Matrix& a = probs[p];
                         auto q = xv.block(seg.offset, h * dh, seg.length, dh);
                         auto k = xv.block(seg.offset, d + h * dh, seg.length, dh);
                         auto v = xv.block(seg.offset, 2 * d + h * dh, seg.length, dh);
                         auto dout = self.grad.block(seg.offset, h * dh, seg.length, dh);
                         Matrix da = dout * v.transpose();
                         g.block(seg.offset, 2 * d + h * dh, seg.length, dh).noalias() +=
                             a.transpose() * dout;
                         Eigen::VectorXd rowdot = (da.array() * a.array()).rowwise().sum();
                         Matrix ds = a.array() * (da.colwise() - rowdot).array();
                         ds *= inv_sqrt;
                         g.block(seg.offset, h * dh, seg.length, dh).noalias() += ds * k;
                         g.block(seg.offset, d + h * dh, seg.length, dh).noalias() +=
                             ds.transpose() * q;
                       }
                     }
                     self.parents[0]->accumulate(g);
                   });
}

}  // namespace modalprompt::ag
