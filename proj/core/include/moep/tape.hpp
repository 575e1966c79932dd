// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "moep/tensor.hpp"

namespace moep {

/// Handle into a Tape node.
struct Var {
  std::size_t idx = static_cast<std::size_t>(-1);
  bool valid() const { return idx != static_cast<std::size_t>(-1); }
};

/// Reverse-mode gradient tape. Every operation records a closure that
/// propagates adjoints to its inputs; backward() replays them in exact
/// reverse order of recording. One tape per forward pass.
class Tape {
 public:
  Var leaf(Tensor value);
  Var zeros(std::vector<std::size_t> shape) { return leaf(Tensor::zeros(std::move(shape))); }

  const Tensor& value(Var v) const { return nodes_[v.idx].value; }
  const Tensor& grad(Var v) const { return nodes_[v.idx].grad; }

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);                 // same-shape elementwise
  Var mul(Var a, Var b);                 // same-shape elementwise
  Var scale(Var a, double c);
  Var add_rowvec(Var a, Var bias);       // [n,m] + [m]
  Var relu(Var a);
  Var gelu(Var a);                       // tanh approximation
  Var layer_norm(Var a, Var gain, Var bias, double eps = 1e-5);
  Var softmax_rows(Var a);
  // Softmax over active columns only; masked positions are exactly 0.
  Var masked_softmax_rows(Var a, const std::vector<bool>& active);
  Var cross_entropy_mean(Var logits, std::span<const int> targets);
  Var gather_rows(Var a, std::vector<std::size_t> rows);
  Var scatter_rows(Var a, std::vector<std::size_t> rows, std::size_t total_rows);
  Var select_col(Var a, std::size_t col);          // [n,m] -> [n,1]
  Var scale_rows(Var a, Var per_row);              // [n,m] * [n,1]
  Var weighted_col_mean(Var a, std::vector<double> weights);  // scalar
  Var seq_mean(Var a, std::size_t group);          // [S*T,m] -> [S,m]
  Var repeat_rows(Var a, std::size_t repeat);      // [S,m] -> [S*T,m]

  /// Seeds d(loss)=1 and replays all recorded adjoints in reverse.
  void backward(Var loss);

  std::size_t num_nodes() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::function<void()> backward;  // empty for leaves
  };

  Var push(Tensor value, std::function<void()> backward = {});
  Tensor& grad_mut(Var v) { return nodes_[v.idx].grad; }
  Tensor& value_mut(Var v) { return nodes_[v.idx].value; }

  std::vector<Node> nodes_;
};

/// Row-wise argmax, ties toward the lowest index. Forward-only.
std::vector<int> argmax_rows(const Tensor& t);
int argmax_vec(std::span<const double> v);

}  // namespace moep
