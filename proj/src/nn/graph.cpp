#include "dialnav/nn/graph.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "dialnav/simd/kernels.hpp"

namespace dialnav::nn {
namespace {

void check(bool ok, const char* op, const char* what) {
  if (!ok) throw std::invalid_argument(std::string(op) + ": " + what);
}

double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Var Graph::push(Matrix value, bool needs_grad) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = grad_enabled_ && needs_grad;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Matrix& Graph::grad_ref(int id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) {
    const Matrix& v = val(id);
    n.grad = Matrix(v.rows(), v.cols());
  }
  return n.grad;
}

Var Graph::input(Matrix value) { return push(std::move(value), false); }

Var Graph::leaf(Matrix value) { return push(std::move(value), true); }

Var Graph::param(Parameter& p) {
  if (auto it = param_ids_.find(&p); it != param_ids_.end()) return Var{it->second};
  Node n;
  n.ref = &p.value;
  n.param = &p;
  n.needs_grad = grad_enabled_;
  nodes_.push_back(std::move(n));
  const int id = static_cast<int>(nodes_.size()) - 1;
  param_ids_.emplace(&p, id);
  return Var{id};
}

const Matrix& Graph::value(Var v) const { return val(v.id); }

const Matrix& Graph::grad(Var v) const {
  const Node& n = nodes_[v.id];
  return n.grad.empty() ? empty_ : n.grad;
}

void Graph::backward(Var loss) {
  check(grad_enabled_, "backward", "graph was built without gradients");
  check(val(loss.id).size() == 1, "backward", "target must be 1x1");
  for (auto& n : nodes_) n.grad = Matrix();
  grad_ref(loss.id)[0] = 1.0;
  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.needs_grad || n.grad.empty()) continue;
    if (n.backward) n.backward();
  }
  for (auto& n : nodes_) {
    if (n.param == nullptr || n.grad.empty()) continue;
    Matrix& g = n.param->grad;
    if (g.empty() || !g.same_shape(n.grad)) g = Matrix(n.grad.rows(), n.grad.cols());
    simd::kernels().axpy(1.0, n.grad.data(), g.data(), g.size());
  }
}

Var Graph::matmul(Var a, Var b) {
  const Matrix& A = val(a.id);
  const Matrix& B = val(b.id);
  check(A.cols() == B.rows(), "matmul", "inner dimensions differ");
  const int m = A.rows(), k = A.cols(), n = B.cols();
  Matrix C(m, n);
  if (m > 0 && n > 0) simd::kernels().gemm_nn(m, n, k, A.data(), k, B.data(), n, C.data(), n, false);
  Var out = push(std::move(C), needs(a) || needs(b));
  if (nodes_[out.id].needs_grad) {
    nodes_[out.id].backward = [this, a, b, out, m, n, k] {
      const Matrix& G = nodes_[out.id].grad;
      if (needs(a))
        simd::kernels().gemm_nt(m, k, n, G.data(), n, val(b.id).data(), n, grad_ref(a.id).data(), k, true);
      if (needs(b))
        simd::kernels().gemm_tn(k, n, m, val(a.id).data(), k, G.data(), n, grad_ref(b.id).data(), n, true);
    };
  }
  return out;
}

Var Graph::matmul_nt(Var a, Var b) {
  const Matrix& A = val(a.id);
  const Matrix& B = val(b.id);
  check(A.cols() == B.cols(), "matmul_nt", "inner dimensions differ");
  const int m = A.rows(), k = A.cols(), n = B.rows();
  Matrix C(m, n);
  if (m > 0 && n > 0) simd::kernels().gemm_nt(m, n, k, A.data(), k, B.data(), k, C.data(), n, false);
  Var out = push(std::move(C), needs(a) || needs(b));
  if (nodes_[out.id].needs_grad) {
    nodes_[out.id].backward = [this, a, b, out, m, n, k] {
      const Matrix& G = nodes_[out.id].grad;
      if (needs(a))
        simd::kernels().gemm_nn(m, k, n, G.data(), n, val(b.id).data(), k, grad_ref(a.id).data(), k, true);
      if (needs(b))
        simd::kernels().gemm_tn(n, k, m, G.data(), n, val(a.id).data(), k, grad_ref(b.id).data(), k, true);
    };
  }
  return out;
}

Var Graph::add(Var a, Var b) {
  const Matrix& A = val(a.id);
  const Matrix& B = val(b.id);
  check(A.same_shape(B), "add", "shape mismatch");
  Matrix C = A;
  for (std::size_t i = 0; i < C.size(); ++i) C[i] += B[i];
  Var out = push(std::move(C), needs(a) || needs(b));
  if (nodes_[out.id].needs_grad) {
    nodes_[out.id].backward = [this, a, b, out] {
      const Matrix& G = nodes_[out.id].grad;
      for (Var v : {a, b}) {
        if (!needs(v)) continue;
        Matrix& g = grad_ref(v.id);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += G[i];
      }
    };
  }
  return out;
}

Var Graph::add_row(Var a, Var row) {
  const Matrix& A = val(a.id);
  const Matrix& R = val(row.id);
  check(R.rows() == 1 && R.cols() == A.cols(), "add_row", "row shape mismatch");
  Matrix C = A;
  for (int r = 0; r < C.rows(); ++r)
    for (int c = 0; c < C.cols(); ++c) C(r, c) += R[c];
  Var out = push(std::move(C), needs(a) || needs(row));
  if (nodes_[out.id].needs_grad) {
    nodes_[out.id].backward = [this, a, row, out] {
      const Matrix& G = nodes_[out.id].grad;
      if (needs(a)) {
        Matrix& g = grad_ref(a.id);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += G[i];
      }
      if (needs(row)) {
        Matrix& g = grad_ref(row.id);
        for (int r = 0; r < G.rows(); ++r)
          for (int c = 0; c < G.cols(); ++c) g[c] += G(r, c);
      }
    };
  }
  return out;
}

Var Graph::sub(Var a, Var b) {
  const Matrix& A = val(a.id);
  const Matrix& B = val(b.id);
  check(A.same_shape(B), "sub", "shape mismatch");
  Matrix C = A;
  for (std::size_t i = 0; i < C.size(); ++i) C[i] -= B[i];
  Var out = push(std::move(C), needs(a) || needs(b));
  if (nodes_[out.id].needs_grad) {
    nodes_[out.id].backward = [this, a, b, out] {
      const Matrix& G = nodes_[out.id].grad;
      if (needs(a)) {
        Matrix& g = grad_ref(a.id);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += G[i];
      }
      if (needs(b)) {
        Matrix& g = grad_ref(b.id);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] -= G[i];
      }
    };
  }
  return out;
}

Var Graph::mul(Var a, Var b) {
  const Matrix& A = val(a.id);
  const Matrix& B = val(b.id);
  check(A.same_shape(B), "mul", "shape mismatch");
  Matrix C = A;
  for (std::size_t i = 0; i < C.size(); ++i) C[i] *= B[i];
  Var out = push(std::move(C), needs(a) || needs(b));
  if (nodes_[out.id].needs_grad) {
    nodes_[out.id].backward = [this, a, b, out] {
      const Matrix& G = nodes_[out.id].grad;
      if (needs(a)) {
        Matrix& g = grad_ref(a.id);
        const Matrix& B = val(b.id);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += G[i] * B[i];
      }
      if (needs(b)) {
        Matrix& g = grad_ref(b.id);
        const Matrix& A = val(a.id);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += G[i] * A[i];
      }
    };
  }
  return out;
}

Var Graph::scale(Var a, double s) {
  Matrix C = val(a.id);
  for (double& x : C.values()) x *= s;
  Var out = push(std::move(C), needs(a));
  if (nodes_[out.id].needs_grad) {
    nodes_[out.id].backward = [this, a, out, s] {
      const Matrix& G = nodes_[out.id].grad;
      Matrix& g = grad_ref(a.id);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * G[i];
    };
  }
  return out;
}

Var Graph::tanh(Var a) {
  Matrix C = val(a.id);
  for (double& x : C.values()) x = std::tanh(x);
  Var out = push(std::move(C), needs(a));
  if (nodes_[out.id].needs_grad) {
    nodes_[out.id].backward = [this, a, out] {
      const Matrix& G = nodes_[out.id].grad;
      const Matrix& Y = val(out.id);
      Matrix& g = grad_ref(a.id);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += G[i] * (1.0 - Y[i] * Y[i]);
    };
  }
  return out;
}

Var Graph::sigmoid(Var a) {
  Matrix C = val(a.id);
  for (double& x : C.values()) x = sigmoid_scalar(x);
  Var out = push(std::move(C), needs(a));
  if (nodes_[out.id].needs_grad) {
    nodes_[out.id].backward = [this, a, out] {
      const Matrix& G = nodes_[out.id].grad;
      const Matrix& Y = val(out.id);
      Matrix& g = grad_ref(a.id);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += G[i] * Y[i] * (1.0 - Y[i]);
    };
  }
  return out;
}

Var Graph::gelu(Var a) {
  Matrix C = val(a.id);
  for (double& x : C.values()) x = 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
  Var out = push(std::move(C), needs(a));
  if (nodes_[out.id].needs_grad) {
    nodes_[out.id].backward = [this, a, out] {
      const Matrix& G = nodes_[out.id].grad;
      const Matrix& X = val(a.id);
      Matrix& g = grad_ref(a.id);
      constexpr double inv_sqrt_2pi = 0.3989422804014327;
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double x = X[i];
        const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
        g[i] += G[i] * (cdf + x * inv_sqrt_2pi * std::exp(-0.5 * x * x));
      }
    };
  }
  return out;
}

Var Graph::relu(Var a) {
  Matrix C = val(a.id);
  for (double& x : C.values()) x = x > 0 ? x : 0.0;
  Var out = push(std::move(C), needs(a));
  if (nodes_[out.id].needs_grad) {
    nodes_[out.id].backward = [this, a, out] {
      const Matrix& G = nodes_[out.id].grad;
      const Matrix& X = val(a.id);
      Matrix& g = grad_ref(a.id);
      for (std::size_t i = 0; i < g.size(); ++i)
        if (X[i] > 0) g[i] += G[i];
    };
  }
  return out;
}

Var Graph::layer_norm(Var x, Var gamma, Var beta, double eps) {
  const Matrix& X = val(x.id);
  const Matrix& Gm = val(gamma.id);
  const Matrix& Bt = val(beta.id);
  const int rows = X.rows(), cols = X.cols();
  check(Gm.rows() == 1 && Gm.cols() == cols && Bt.same_shape(Gm), "layer_norm", "affine shape");
  Matrix Y(rows, cols);
  Matrix xhat(rows, cols);
  std::vector<double> inv_std(static_cast<std::size_t>(rows));
  for (int r = 0; r < rows; ++r) {
    double mean = 0.0;
    for (int c = 0; c < cols; ++c) mean += X(r, c);
    mean /= cols;
    double var = 0.0;
    for (int c = 0; c < cols; ++c) var += (X(r, c) - mean) * (X(r, c) - mean);
    var /= cols;
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[static_cast<std::size_t>(r)] = is;
    for (int c = 0; c < cols; ++c) {
      xhat(r, c) = (X(r, c) - mean) * is;
      Y(r, c) = Gm[c] * xhat(r, c) + Bt[c];
    }
  }
  Var out = push(std::move(Y), needs(x) || needs(gamma) || needs(beta));
  if (nodes_[out.id].needs_grad) {
    nodes_[out.id].backward = [this, x, gamma, beta, out, xhat = std::move(xhat),
                               inv_std = std::move(inv_std), rows, cols] {
      const Matrix& G = nodes_[out.id].grad;
      const Matrix& Gm = val(gamma.id);
      if (needs(gamma)) {
        Matrix& g = grad_ref(gamma.id);
        for (int r = 0; r < rows; ++r)
          for (int c = 0; c < cols; ++c) g[c] += G(r, c) * xhat(r, c);
      }
      if (needs(beta)) {
        Matrix& g = grad_ref(beta.id);
        for (int r = 0; r < rows; ++r)
          for (int c = 0; c < cols; ++c) g[c] += G(r, c);
      }
      if (needs(x)) {
        Matrix& g = grad_ref(x.id);
        for (int r = 0; r < rows; ++r) {
          double mean_d = 0.0, mean_dx = 0.0;
          for (int c = 0; c < cols; ++c) {
            const double d = G(r, c) * Gm[c];
            mean_d += d;
            mean_dx += d * xhat(r, c);
          }
          mean_d /= cols;
          mean_dx /= cols;
          const double is = inv_std[static_cast<std::size_t>(r)];
          for (int c = 0; c < cols; ++c) {
            const double d = G(r, c) * Gm[c];
            g(r, c) += is * (d - mean_d - xhat(r, c) * mean_dx);
          }
        }
      }
    };
  }
  return out;
}

Var Graph::softmax_rows(Var x) {
  Matrix Y = val(x.id);
  for (int r = 0; r < Y.rows(); ++r) {
    auto row = Y.row(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double s = 0.0;
    for (double& v : row) {
      v = std::exp(v - mx);
      s += v;
    }
    for (double& v : row) v /= s;
  }
  Var out = push(std::move(Y), needs(x));
  if (nodes_[out.id].needs_grad) {
    nodes_[out.id].backward = [this, x, out] {
      const Matrix& G = nodes_[out.id].grad;
      const Matrix& Y = val(out.id);
      Matrix& g = grad_ref(x.id);
      for (int r = 0; r < Y.rows(); ++r) {
        double dotv = 0.0;
        for (int c = 0; c < Y.cols(); ++c) dotv += G(r, c) * Y(r, c);
        for (int c = 0; c < Y.cols(); ++c) g(r, c) += Y(r, c) * (G(r, c) - dotv);
      }
    };
  }
  return out;
}

Var Graph::gather_rows(Var table, std::span<const int> ids) {
  const Matrix& T = val(table.id);
  Matrix Y(static_cast<int>(ids.size()), T.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    check(ids[i] >= 0 && ids[i] < T.rows(), "gather_rows", "index out of range");
    std::copy_n(T.row(ids[i]).begin(), T.cols(), Y.row(static_cast<int>(i)).begin());
  }
  Var out = push(std::move(Y), needs(table));
  if (nodes_[out.id].needs_grad) {
    nodes_[out.id].backward = [this, table, out, idx = std::vector<int>(ids.begin(), ids.end())] {
      const Matrix& G = nodes_[out.id].grad;
      Matrix& g = grad_ref(table.id);
      for (std::size_t i = 0; i < idx.size(); ++i) {
        auto src = G.row(static_cast<int>(i));
        auto dst = g.row(idx[i]);
        for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
      }
    };
  }
  return out;
}

Var Graph::concat_cols(std::span<const Var> parts) {
  check(!parts.empty(), "concat_cols", "no inputs");
  const int rows = val(parts[0].id).rows();
  int cols = 0;
  bool any = false;
  for (Var p : parts) {
    check(val(p.id).rows() == rows, "concat_cols", "row count mismatch");
    cols += val(p.id).cols();
    any = any || needs(p);
  }
  Matrix Y(rows, cols);
  int off = 0;
  for (Var p : parts) {
    const Matrix& P = val(p.id);
    for (int r = 0; r < rows; ++r) std::copy_n(P.row(r).begin(), P.cols(), Y.row(r).begin() + off);
    off += P.cols();
  }
  Var out = push(std::move(Y), any);
  if (nodes_[out.id].needs_grad) {
    nodes_[out.id].backward = [this, out, ps = std::vector<Var>(parts.begin(), parts.end())] {
      const Matrix& G = nodes_[out.id].grad;
      int off = 0;
      for (Var p : ps) {
        const int pc = val(p.id).cols();
        if (needs(p)) {
          Matrix& g = grad_ref(p.id);
          for (int r = 0; r < G.rows(); ++r)
            for (int c = 0; c < pc; ++c) g(r, c) += G(r, off + c);
        }
        off += pc;
      }
    };
  }
  return out;
}

Var Graph::concat_rows(std::span<const Var> parts) {
  check(!parts.empty(), "concat_rows", "no inputs");
  const int cols = val(parts[0].id).cols();
  int rows = 0;
  bool any = false;
  for (Var p : parts) {
    check(val(p.id).cols() == cols, "concat_rows", "column count mismatch");
    rows += val(p.id).rows();
    any = any || needs(p);
  }
  Matrix Y(rows, cols);
  std::size_t off = 0;
  for (Var p : parts) {
    const Matrix& P = val(p.id);
    std::copy(P.values().begin(), P.values().end(), Y.values().begin() + static_cast<std::ptrdiff_t>(off));
    off += P.size();
  }
  Var out = push(std::move(Y), any);
  if (nodes_[out.id].needs_grad) {
    nodes_[out.id].backward = [this, out, ps = std::vector<Var>(parts.begin(), parts.end())] {
      const Matrix& G = nodes_[out.id].grad;
      std::size_t off = 0;
      for (Var p : ps) {
        const std::size_t n = val(p.id).size();
        if (needs(p)) {
          Matrix& g = grad_ref(p.id);
          for (std::size_t i = 0; i < n; ++i) g[i] += G[off + i];
        }
        off += n;
      }
    };
  }
  return out;
}

Var Graph::slice_cols(Var a, int first, int count) {
  const Matrix& A = val(a.id);
  check(first >= 0 && count >= 0 && first + count <= A.cols(), "slice_cols", "range");
  Matrix Y(A.rows(), count);
  for (int r = 0; r < A.rows(); ++r) std::copy_n(A.row(r).begin() + first, count, Y.row(r).begin());
  Var out = push(std::move(Y), needs(a));
  if (nodes_[out.id].needs_grad) {
    nodes_[out.id].backward = [this, a, out, first, count] {
      const Matrix& G = nodes_[out.id].grad;
      Matrix& g = grad_ref(a.id);
      for (int r = 0; r < G.rows(); ++r)
        for (int c = 0; c < count; ++c) g(r, first + c) += G(r, c);
    };
  }
  return out;
}

Var Graph::slice_rows(Var a, int first, int count) {
  const Matrix& A = val(a.id);
  check(first >= 0 && count >= 0 && first + count <= A.rows(), "slice_rows", "range");
  Matrix Y(count, A.cols());
  std::copy_n(A.values().begin() + static_cast<std::ptrdiff_t>(first) * A.cols(),
              static_cast<std::size_t>(count) * A.cols(), Y.values().begin());
  Var out = push(std::move(Y), needs(a));
  if (nodes_[out.id].needs_grad) {
    nodes_[out.id].backward = [this, a, out, first] {
      const Matrix& G = nodes_[out.id].grad;
      Matrix& g = grad_ref(a.id);
      const std::size_t off = static_cast<std::size_t>(first) * G.cols();
      for (std::size_t i = 0; i < G.size(); ++i) g[off + i] += G[i];
    };
  }
  return out;
}

Var Graph::mean_rows(Var a) {
  const Matrix& A = val(a.id);
  check(A.rows() > 0, "mean_rows", "empty input");
  Matrix Y(1, A.cols());
  for (int r = 0; r < A.rows(); ++r)
    for (int c = 0; c < A.cols(); ++c) Y[c] += A(r, c);
  for (double& v : Y.values()) v /= A.rows();
  Var out = push(std::move(Y), needs(a));
  if (nodes_[out.id].needs_grad) {
    nodes_[out.id].backward = [this, a, out] {
      const Matrix& G = nodes_[out.id].grad;
      Matrix& g = grad_ref(a.id);
      const double inv = 1.0 / g.rows();
      for (int r = 0; r < g.rows(); ++r)
        for (int c = 0; c < g.cols(); ++c) g(r, c) += G[c] * inv;
    };
  }
  return out;
}

Var Graph::sum(Var a) {
  double s = 0.0;
  for (double v : val(a.id).values()) s += v;
  Var out = push(Matrix(1, 1, s), needs(a));
  if (nodes_[out.id].needs_grad) {
    nodes_[out.id].backward = [this, a, out] {
      const double G = nodes_[out.id].grad[0];
      for (double& g : grad_ref(a.id).values()) g += G;
    };
  }
  return out;
}

Var Graph::add_scalars(std::span<const Var> scalars) {
  double s = 0.0;
  bool any = false;
  for (Var v : scalars) {
    check(val(v.id).size() == 1, "add_scalars", "operand is not 1x1");
    s += val(v.id)[0];
    any = any || needs(v);
  }
  Var out = push(Matrix(1, 1, s), any);
  if (nodes_[out.id].needs_grad) {
    nodes_[out.id].backward = [this, out, vs = std::vector<Var>(scalars.begin(), scalars.end())] {
      const double G = nodes_[out.id].grad[0];
      for (Var v : vs)
        if (needs(v)) grad_ref(v.id)[0] += G;
    };
  }
  return out;
}

Var Graph::cross_entropy(Var logits, std::span<const int> targets) {
  const Matrix& L = val(logits.id);
  check(static_cast<std::size_t>(L.rows()) == targets.size(), "cross_entropy", "one target per row");
  check(L.rows() > 0, "cross_entropy", "empty batch");
  Matrix P(L.rows(), L.cols());
  double loss = 0.0;
  for (int r = 0; r < L.rows(); ++r) {
    const int t = targets[static_cast<std::size_t>(r)];
    check(t >= 0 && t < L.cols(), "cross_entropy", "target out of range");
    auto row = L.row(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double s = 0.0;
    for (int c = 0; c < L.cols(); ++c) {
      P(r, c) = std::exp(row[c] - mx);
      s += P(r, c);
    }
    for (int c = 0; c < L.cols(); ++c) P(r, c) /= s;
    loss += -(row[t] - mx - std::log(s));
  }
  loss /= L.rows();
  Var out = push(Matrix(1, 1, loss), needs(logits));
  if (nodes_[out.id].needs_grad) {
    nodes_[out.id].backward = [this, logits, out, P = std::move(P),
                               t = std::vector<int>(targets.begin(), targets.end())] {
      const double G = nodes_[out.id].grad[0] / P.rows();
      Matrix& g = grad_ref(logits.id);
      for (int r = 0; r < P.rows(); ++r) {
        for (int c = 0; c < P.cols(); ++c) g(r, c) += G * P(r, c);
        g(r, t[static_cast<std::size_t>(r)]) -= G;
      }
    };
  }
  return out;
}

Var Graph::bce_with_logits(Var logits, std::span<const double> targets, std::span<const double> weights) {
  const Matrix& L = val(logits.id);
  check(L.cols() == 1, "bce_with_logits", "expects an n x 1 column");
  check(targets.size() == static_cast<std::size_t>(L.rows()) && weights.size() == targets.size(),
        "bce_with_logits", "one target and weight per row");
  check(L.rows() > 0, "bce_with_logits", "empty batch");
  double loss = 0.0;
  for (int r = 0; r < L.rows(); ++r) {
    const double x = L[static_cast<std::size_t>(r)];
    const double y = targets[static_cast<std::size_t>(r)];
    loss += weights[static_cast<std::size_t>(r)] *
            (std::max(x, 0.0) - x * y + std::log1p(std::exp(-std::abs(x))));
  }
  loss /= L.rows();
  Var out = push(Matrix(1, 1, loss), needs(logits));
  if (nodes_[out.id].needs_grad) {
    nodes_[out.id].backward = [this, logits, out, y = std::vector<double>(targets.begin(), targets.end()),
                               w = std::vector<double>(weights.begin(), weights.end())] {
      const Matrix& L = val(logits.id);
      const double G = nodes_[out.id].grad[0] / L.rows();
      Matrix& g = grad_ref(logits.id);
      for (std::size_t r = 0; r < y.size(); ++r) g[r] += G * w[r] * (sigmoid_scalar(L[r]) - y[r]);
    };
  }
  return out;
}

}  // namespace dialnav::nn
