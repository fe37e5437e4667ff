#pragma once

// Tape-based reverse-mode differentiation over dense matrices.
//
// A Graph records every operation applied to its variables. Calling
// backward() on a 1x1 result walks the tape in reverse and accumulates
// gradients; parameter gradients are added into Parameter::grad. With
// gradients disabled the graph evaluates eagerly and records nothing.

#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

#include "dialnav/nn/matrix.hpp"
#include "dialnav/nn/parameters.hpp"

namespace dialnav::nn {

struct Var {
  int id = -1;
  bool valid() const noexcept { return id >= 0; }
};

class Graph {
 public:
  explicit Graph(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool grad_enabled() const noexcept { return grad_enabled_; }

  Var input(Matrix value);
  // A leaf whose gradient is kept on the graph (read it back with grad()).
  Var leaf(Matrix value);
  Var param(Parameter& p);

  const Matrix& value(Var v) const;
  // Gradient of the last backward() target with respect to v; empty if none flowed.
  const Matrix& grad(Var v) const;
  double scalar(Var v) const { return value(v)[0]; }

  void backward(Var loss);

  // Products.
  Var matmul(Var a, Var b);     // (m x k)(k x n)
  Var matmul_nt(Var a, Var b);  // (m x k)(n x k)^T

  // Elementwise and broadcasting.
  Var add(Var a, Var b);
  Var add_row(Var a, Var row);  // adds a 1 x n row to every row of a
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double s);
  Var tanh(Var a);
  Var sigmoid(Var a);
  Var gelu(Var a);
  Var relu(Var a);

  // Row-wise.
  Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-12);
  Var softmax_rows(Var x);

  // Shape.
  Var gather_rows(Var table, std::span<const int> ids);
  Var concat_cols(std::span<const Var> parts);
  Var concat_rows(std::span<const Var> parts);
  Var slice_cols(Var a, int first, int count);
  Var slice_rows(Var a, int first, int count);
  Var mean_rows(Var a);
  Var sum(Var a);
  Var add_scalars(std::span<const Var> scalars);

  // Losses, each returning a 1 x 1 mean over rows.
  Var cross_entropy(Var logits, std::span<const int> targets);
  // Weighted binary cross-entropy on an n x 1 logit column; divides by n.
  Var bce_with_logits(Var logits, std::span<const double> targets, std::span<const double> weights);

 private:
  struct Node {
    Matrix value;
    const Matrix* ref = nullptr;  // parameter values are referenced, not copied
    Matrix grad;
    Parameter* param = nullptr;
    bool needs_grad = false;
    std::function<void()> backward;
  };

  const Matrix& val(int id) const { return nodes_[id].ref ? *nodes_[id].ref : nodes_[id].value; }
  Matrix& grad_ref(int id);
  bool needs(Var v) const { return nodes_[v.id].needs_grad; }
  Var push(Matrix value, bool needs_grad);

  bool grad_enabled_;
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, int> param_ids_;
  Matrix empty_;
};

}  // namespace dialnav::nn
