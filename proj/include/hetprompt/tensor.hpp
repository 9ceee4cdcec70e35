#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "hetprompt/error.hpp"
#include "hetprompt/matrix.hpp"
#include "hetprompt/sparse.hpp"

namespace hetprompt {

namespace detail {

struct Node {
  Matrix value;
  Matrix grad;
  bool requires_grad = false;
  bool has_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  void ensure_grad() {
    if (!has_grad) {
      grad = Matrix(value.rows(), value.cols());
      has_grad = true;
    }
  }
};

}  // namespace detail

/// Handle to a node of the computation graph. Copies share the node.
class Tensor {
 public:
  Tensor() = default;

  static Tensor constant(Matrix value) {
    Tensor t;
    t.node_ = std::make_shared<detail::Node>();
    t.node_->value = std::move(value);
    return t;
  }

  static Tensor variable(Matrix value) {
    Tensor t = constant(std::move(value));
    t.node_->requires_grad = true;
    return t;
  }

  bool defined() const noexcept { return node_ != nullptr; }
  const Matrix& value() const { return node_->value; }
  /// Direct access for optimizers and finite-difference probes.
  Matrix& mutable_value() { return node_->value; }
  std::size_t rows() const { return node_->value.rows(); }
  std::size_t cols() const { return node_->value.cols(); }
  double item() const {
    if (node_->value.size() != 1)
      throw Error(ErrorCode::shape, "item() on tensor of shape " + node_->value.shape_string());
    return node_->value[0];
  }

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return node_->has_grad; }
  const Matrix& grad() const { return node_->grad; }
  const char* op() const { return node_->op; }

  void zero_grad() {
    node_->grad = Matrix(rows(), cols());
    node_->has_grad = true;
  }

  /// Same value, cut from the graph.
  Tensor detach() const { return constant(node_->value); }

  std::shared_ptr<detail::Node> node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

namespace detail {

inline Tensor make_result(const char* op, Matrix value, std::vector<Tensor> inputs,
                          std::function<void(Node&)> backward) {
  Tensor out = Tensor::constant(std::move(value));
  auto node = out.node();
  node->op = op;
  bool any = false;
  for (const auto& t : inputs) any = any || t.requires_grad();
  if (any) {
    node->requires_grad = true;
    for (const auto& t : inputs) node->inputs.push_back(t.node());
    node->backward = std::move(backward);
  }
  return out;
}

/// Grad accumulator for input `k`, or nullptr when it does not need one.
inline Matrix* grad_of(Node& self, std::size_t k) {
  auto& in = *self.inputs[k];
  if (!in.requires_grad) return nullptr;
  in.ensure_grad();
  return &in.grad;
}

[[noreturn]] inline void shape_error(const char* op, const Matrix& a, const Matrix& b) {
  throw Error(ErrorCode::shape, std::string(op) + ": incompatible shapes " + a.shape_string() +
                                    " and " + b.shape_string());
}

template <class F, class G>
Tensor unary(const char* op, const Tensor& a, F forward, G derivative) {
  Matrix out(a.rows(), a.cols());
  const auto& x = a.value();
  for (std::size_t k = 0; k < x.size(); ++k) out[k] = forward(x[k]);
  return make_result(op, out, {a}, [derivative, x, out](Node& self) {
    if (auto* g = grad_of(self, 0))
      for (std::size_t k = 0; k < x.size(); ++k) (*g)[k] += self.grad[k] * derivative(x[k], out[k]);
  });
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) detail::shape_error("matmul", a.value(), b.value());
  Matrix out = kernels::matmul(a.value(), b.value());
  return detail::make_result("matmul", std::move(out), {a, b}, [](detail::Node& self) {
    const auto& av = self.inputs[0]->value;
    const auto& bv = self.inputs[1]->value;
    if (auto* ga = detail::grad_of(self, 0)) kernels::gemm_nt(self.grad, bv, *ga);
    if (auto* gb = detail::grad_of(self, 1)) kernels::gemm_tn(av, self.grad, *gb);
  });
}

/// Constant sparse matrix times dense tensor.
inline Tensor sparse_dense_matmul(const SparseMatrix& s, const Tensor& b) {
  if (s.cols() != b.rows())
    throw Error(ErrorCode::shape, "sparse_dense_matmul: incompatible shapes " +
                                      std::to_string(s.rows()) + "x" + std::to_string(s.cols()) +
                                      " and " + b.value().shape_string());
  const std::size_t m = b.cols();
  Matrix out(s.rows(), m);
  const auto& bv = b.value();
  for (std::size_t i = 0; i < s.rows(); ++i) {
    double* o = out.row(i).data();
    for (std::size_t k = s.row_begin(i); k < s.row_end(i); ++k) {
      const double v = s.value_at(k);
      const double* br = bv.row(s.col_at(k)).data();
      for (std::size_t j = 0; j < m; ++j) o[j] += v * br[j];
    }
  }
  return detail::make_result("sparse_dense_matmul", std::move(out), {b},
                             [s, m](detail::Node& self) {
                               auto* g = detail::grad_of(self, 0);
                               if (!g) return;
                               for (std::size_t i = 0; i < s.rows(); ++i) {
                                 const double* up = self.grad.row(i).data();
                                 for (std::size_t k = s.row_begin(i); k < s.row_end(i); ++k) {
                                   const double v = s.value_at(k);
                                   double* gr = g->row(s.col_at(k)).data();
                                   for (std::size_t j = 0; j < m; ++j) gr[j] += v * up[j];
                                 }
                               }
                             });
}

inline Tensor transpose(const Tensor& a) {
  return detail::make_result("transpose", kernels::transpose(a.value()), {a},
                             [](detail::Node& self) {
                               auto* g = detail::grad_of(self, 0);
                               if (!g) return;
                               for (std::size_t i = 0; i < self.grad.rows(); ++i)
                                 for (std::size_t j = 0; j < self.grad.cols(); ++j)
                                   (*g)(j, i) += self.grad(i, j);
                             });
}

// ---------------------------------------------------------------------------
// Elementwise arithmetic

inline Tensor add(const Tensor& a, const Tensor& b) {
  if (!a.value().same_shape(b.value())) detail::shape_error("add", a.value(), b.value());
  Matrix out = a.value();
  for (std::size_t k = 0; k < out.size(); ++k) out[k] += b.value()[k];
  return detail::make_result("add", std::move(out), {a, b}, [](detail::Node& self) {
    for (std::size_t in = 0; in < 2; ++in)
      if (auto* g = detail::grad_of(self, in))
        for (std::size_t k = 0; k < g->size(); ++k) (*g)[k] += self.grad[k];
  });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  if (!a.value().same_shape(b.value())) detail::shape_error("sub", a.value(), b.value());
  Matrix out = a.value();
  for (std::size_t k = 0; k < out.size(); ++k) out[k] -= b.value()[k];
  return detail::make_result("sub", std::move(out), {a, b}, [](detail::Node& self) {
    if (auto* g = detail::grad_of(self, 0))
      for (std::size_t k = 0; k < g->size(); ++k) (*g)[k] += self.grad[k];
    if (auto* g = detail::grad_of(self, 1))
      for (std::size_t k = 0; k < g->size(); ++k) (*g)[k] -= self.grad[k];
  });
}

/// Hadamard product.
inline Tensor mul(const Tensor& a, const Tensor& b) {
  if (!a.value().same_shape(b.value())) detail::shape_error("mul", a.value(), b.value());
  Matrix out = a.value();
  for (std::size_t k = 0; k < out.size(); ++k) out[k] *= b.value()[k];
  return detail::make_result("mul", std::move(out), {a, b}, [](detail::Node& self) {
    const auto& av = self.inputs[0]->value;
    const auto& bv = self.inputs[1]->value;
    if (auto* g = detail::grad_of(self, 0))
      for (std::size_t k = 0; k < g->size(); ++k) (*g)[k] += self.grad[k] * bv[k];
    if (auto* g = detail::grad_of(self, 1))
      for (std::size_t k = 0; k < g->size(); ++k) (*g)[k] += self.grad[k] * av[k];
  });
}

inline Tensor scale(const Tensor& a, double c) {
  Matrix out = a.value();
  for (auto& v : out.values()) v *= c;
  return detail::make_result("scale", std::move(out), {a}, [c](detail::Node& self) {
    if (auto* g = detail::grad_of(self, 0))
      for (std::size_t k = 0; k < g->size(); ++k) (*g)[k] += self.grad[k] * c;
  });
}

inline Tensor add_scalar(const Tensor& a, double c) {
  return detail::unary("add_scalar", a, [c](double x) { return x + c; },
                       [](double, double) { return 1.0; });
}

/// out[i, j] = a[i, j] * v[i]; v is n x 1.
inline Tensor scale_rows(const Tensor& a, const Tensor& v) {
  if (v.rows() != a.rows() || v.cols() != 1) detail::shape_error("scale_rows", a.value(), v.value());
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (double& x : out.row(i)) x *= v.value()[i];
  return detail::make_result("scale_rows", std::move(out), {a, v}, [](detail::Node& self) {
    const auto& av = self.inputs[0]->value;
    const auto& vv = self.inputs[1]->value;
    if (auto* g = detail::grad_of(self, 0))
      for (std::size_t i = 0; i < av.rows(); ++i)
        for (std::size_t j = 0; j < av.cols(); ++j) (*g)(i, j) += self.grad(i, j) * vv[i];
    if (auto* g = detail::grad_of(self, 1))
      for (std::size_t i = 0; i < av.rows(); ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < av.cols(); ++j) acc += self.grad(i, j) * av(i, j);
        (*g)[i] += acc;
      }
  });
}

// ---------------------------------------------------------------------------
// Structural

inline Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw Error(ErrorCode::shape, "concat_cols: no inputs");
  const std::size_t n = parts.front().rows();
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.rows() != n) detail::shape_error("concat_cols", parts.front().value(), p.value());
    total += p.cols();
  }
  Matrix out(n, total);
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < p.cols(); ++j) out(i, off + j) = p.value()(i, j);
    off += p.cols();
  }
  return detail::make_result("concat_cols", std::move(out), parts, [offsets](detail::Node& self) {
    for (std::size_t k = 0; k < self.inputs.size(); ++k)
      if (auto* g = detail::grad_of(self, k))
        for (std::size_t i = 0; i < g->rows(); ++i)
          for (std::size_t j = 0; j < g->cols(); ++j) (*g)(i, j) += self.grad(i, offsets[k] + j);
  });
}

inline Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw Error(ErrorCode::shape, "concat_rows: no inputs");
  const std::size_t m = parts.front().cols();
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.cols() != m) detail::shape_error("concat_rows", parts.front().value(), p.value());
    total += p.rows();
  }
  std::vector<double> data;
  data.reserve(total * m);
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    offsets.push_back(data.size());
    data.insert(data.end(), p.value().values().begin(), p.value().values().end());
  }
  return detail::make_result("concat_rows", Matrix(total, m, std::move(data)), parts,
                             [offsets](detail::Node& self) {
                               for (std::size_t k = 0; k < self.inputs.size(); ++k)
                                 if (auto* g = detail::grad_of(self, k))
                                   for (std::size_t e = 0; e < g->size(); ++e)
                                     (*g)[e] += self.grad[offsets[k] + e];
                             });
}

inline Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end) {
  if (begin > end || end > a.rows())
    throw Error(ErrorCode::shape, "slice_rows: [" + std::to_string(begin) + ", " +
                                      std::to_string(end) + ") of " + a.value().shape_string());
  const std::size_t m = a.cols();
  std::vector<double> data(a.value().values().begin() + static_cast<std::ptrdiff_t>(begin * m),
                           a.value().values().begin() + static_cast<std::ptrdiff_t>(end * m));
  return detail::make_result("slice_rows", Matrix(end - begin, m, std::move(data)), {a},
                             [begin, m](detail::Node& self) {
                               if (auto* g = detail::grad_of(self, 0))
                                 for (std::size_t e = 0; e < self.grad.size(); ++e)
                                   (*g)[begin * m + e] += self.grad[e];
                             });
}

inline Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end) {
  if (begin > end || end > a.cols())
    throw Error(ErrorCode::shape, "slice_cols: [" + std::to_string(begin) + ", " +
                                      std::to_string(end) + ") of " + a.value().shape_string());
  Matrix out(a.rows(), end - begin);
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = begin; j < end; ++j) out(i, j - begin) = a.value()(i, j);
  return detail::make_result("slice_cols", std::move(out), {a}, [begin](detail::Node& self) {
    if (auto* g = detail::grad_of(self, 0))
      for (std::size_t i = 0; i < self.grad.rows(); ++i)
        for (std::size_t j = 0; j < self.grad.cols(); ++j) (*g)(i, begin + j) += self.grad(i, j);
  });
}

/// Rows of `a` picked by index (repeats allowed); gradients scatter-add back.
inline Tensor gather_rows(const Tensor& a, std::vector<std::size_t> index) {
  const std::size_t m = a.cols();
  Matrix out(index.size(), m);
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (index[r] >= a.rows())
      throw Error(ErrorCode::shape, "gather_rows: index " + std::to_string(index[r]) +
                                        " out of range for " + a.value().shape_string());
    auto src = a.value().row(index[r]);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return detail::make_result("gather_rows", std::move(out), {a},
                             [index = std::move(index), m](detail::Node& self) {
                               auto* g = detail::grad_of(self, 0);
                               if (!g) return;
                               for (std::size_t r = 0; r < index.size(); ++r) {
                                 double* dst = g->row(index[r]).data();
                                 const double* up = self.grad.row(r).data();
                                 for (std::size_t j = 0; j < m; ++j) dst[j] += up[j];
                               }
                             });
}

/// Entries a[i, j] for each (i, j), as an n x 1 column.
inline Tensor gather_entries(const Tensor& a,
                             std::vector<std::pair<std::size_t, std::size_t>> index) {
  Matrix out(index.size(), 1);
  for (std::size_t r = 0; r < index.size(); ++r) {
    auto [i, j] = index[r];
    if (i >= a.rows() || j >= a.cols())
      throw Error(ErrorCode::shape, "gather_entries: index out of range for " +
                                        a.value().shape_string());
    out[r] = a.value()(i, j);
  }
  return detail::make_result("gather_entries", std::move(out), {a},
                             [index = std::move(index)](detail::Node& self) {
                               if (auto* g = detail::grad_of(self, 0))
                                 for (std::size_t r = 0; r < index.size(); ++r)
                                   (*g)(index[r].first, index[r].second) += self.grad[r];
                             });
}

inline Tensor reshape(const Tensor& a, std::size_t rows, std::size_t cols) {
  if (rows * cols != a.value().size())
    throw Error(ErrorCode::shape, "reshape: " + a.value().shape_string() + " to " +
                                      std::to_string(rows) + "x" + std::to_string(cols));
  return detail::make_result("reshape", Matrix(rows, cols, a.value().values()), {a},
                             [](detail::Node& self) {
                               if (auto* g = detail::grad_of(self, 0))
                                 for (std::size_t k = 0; k < g->size(); ++k)
                                   (*g)[k] += self.grad[k];
                             });
}

/// Main diagonal of a square matrix as an n x 1 column.
inline Tensor diagonal(const Tensor& a) {
  if (a.rows() != a.cols())
    throw Error(ErrorCode::shape, "diagonal: non-square " + a.value().shape_string());
  Matrix out(a.rows(), 1);
  for (std::size_t i = 0; i < a.rows(); ++i) out[i] = a.value()(i, i);
  return detail::make_result("diagonal", std::move(out), {a}, [](detail::Node& self) {
    if (auto* g = detail::grad_of(self, 0))
      for (std::size_t i = 0; i < g->rows(); ++i) (*g)(i, i) += self.grad[i];
  });
}

// ---------------------------------------------------------------------------
// Reductions

inline Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.value().values()) acc += v;
  return detail::make_result("sum", Matrix(1, 1, acc), {a}, [](detail::Node& self) {
    if (auto* g = detail::grad_of(self, 0))
      for (auto& v : g->values()) v += self.grad[0];
  });
}

inline Tensor mean(const Tensor& a) {
  if (a.value().empty()) throw Error(ErrorCode::shape, "mean: empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

/// Per-row sum, n x 1.
inline Tensor row_sum(const Tensor& a) {
  Matrix out(a.rows(), 1);
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (double v : a.value().row(i)) out[i] += v;
  return detail::make_result("row_sum", std::move(out), {a}, [](detail::Node& self) {
    if (auto* g = detail::grad_of(self, 0))
      for (std::size_t i = 0; i < g->rows(); ++i)
        for (double& v : g->row(i)) v += self.grad[i];
  });
}

/// Stable log(sum(exp(row))), n x 1. Entries equal to -inf are treated as
/// masked out.
inline Tensor logsumexp_rows(const Tensor& a) {
  const auto& x = a.value();
  Matrix out(x.rows(), 1);
  Matrix soft(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (double v : x.row(i)) mx = std::max(mx, v);
    if (!std::isfinite(mx))
      throw Error(ErrorCode::numeric, "logsumexp_rows: row " + std::to_string(i) + " has no finite entry");
    double s = 0.0;
    for (std::size_t j = 0; j < x.cols(); ++j) s += std::exp(x(i, j) - mx);
    out[i] = mx + std::log(s);
    for (std::size_t j = 0; j < x.cols(); ++j) soft(i, j) = std::exp(x(i, j) - mx) / s;
  }
  return detail::make_result("logsumexp_rows", std::move(out), {a},
                             [soft = std::move(soft)](detail::Node& self) {
                               if (auto* g = detail::grad_of(self, 0))
                                 for (std::size_t i = 0; i < g->rows(); ++i)
                                   for (std::size_t j = 0; j < g->cols(); ++j)
                                     (*g)(i, j) += self.grad[i] * soft(i, j);
                             });
}

inline Tensor softmax_rows(const Tensor& a) {
  const auto& x = a.value();
  Matrix out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (double v : x.row(i)) mx = std::max(mx, v);
    double s = 0.0;
    for (std::size_t j = 0; j < x.cols(); ++j) s += (out(i, j) = std::exp(x(i, j) - mx));
    for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) /= s;
  }
  Matrix y = out;
  return detail::make_result("softmax_rows", std::move(out), {a},
                             [y = std::move(y)](detail::Node& self) {
                               auto* g = detail::grad_of(self, 0);
                               if (!g) return;
                               for (std::size_t i = 0; i < y.rows(); ++i) {
                                 double dot = 0.0;
                                 for (std::size_t j = 0; j < y.cols(); ++j)
                                   dot += self.grad(i, j) * y(i, j);
                                 for (std::size_t j = 0; j < y.cols(); ++j)
                                   (*g)(i, j) += y(i, j) * (self.grad(i, j) - dot);
                               }
                             });
}

/// Rows scaled to unit L2 norm. All-zero rows stay zero.
inline Tensor l2_normalize_rows(const Tensor& a) {
  const auto& x = a.value();
  Matrix out(x.rows(), x.cols());
  std::vector<double> norms(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double s = 0.0;
    for (double v : x.row(i)) s += v * v;
    norms[i] = std::sqrt(s);
    const double inv = norms[i] > 0.0 ? 1.0 / norms[i] : 0.0;
    for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) = x(i, j) * inv;
  }
  Matrix y = out;
  return detail::make_result(
      "l2_normalize_rows", std::move(out), {a},
      [y = std::move(y), norms = std::move(norms)](detail::Node& self) {
        auto* g = detail::grad_of(self, 0);
        if (!g) return;
        for (std::size_t i = 0; i < y.rows(); ++i) {
          if (norms[i] == 0.0) continue;
          double dot = 0.0;
          for (std::size_t j = 0; j < y.cols(); ++j) dot += y(i, j) * self.grad(i, j);
          for (std::size_t j = 0; j < y.cols(); ++j)
            (*g)(i, j) += (self.grad(i, j) - y(i, j) * dot) / norms[i];
        }
      });
}

// ---------------------------------------------------------------------------
// Pointwise nonlinearities

inline Tensor exp(const Tensor& a) {
  return detail::unary("exp", a, [](double x) { return std::exp(x); },
                       [](double, double y) { return y; });
}

inline Tensor log(const Tensor& a) {
  return detail::unary("log", a, [](double x) { return std::log(x); },
                       [](double x, double) { return 1.0 / x; });
}

inline Tensor square(const Tensor& a) {
  return detail::unary("square", a, [](double x) { return x * x; },
                       [](double x, double) { return 2.0 * x; });
}

/// sqrt with a zero subgradient at 0, so distances between coincident points
/// stay differentiable.
inline Tensor sqrt(const Tensor& a) {
  return detail::unary("sqrt", a, [](double x) { return std::sqrt(x); },
                       [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}

inline Tensor sigmoid(const Tensor& a) {
  return detail::unary(
      "sigmoid", a,
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

/// log(sigmoid(x)), stable for large |x|.
inline Tensor log_sigmoid(const Tensor& a) {
  return detail::unary(
      "log_sigmoid", a,
      [](double x) { return x < 0.0 ? x - std::log1p(std::exp(x)) : -std::log1p(std::exp(-x)); },
      [](double x, double) {
        // 1 - sigmoid(x)
        if (x >= 0.0) {
          const double e = std::exp(-x);
          return e / (1.0 + e);
        }
        return 1.0 / (1.0 + std::exp(x));
      });
}

inline Tensor tanh(const Tensor& a) {
  return detail::unary("tanh", a, [](double x) { return std::tanh(x); },
                       [](double, double y) { return 1.0 - y * y; });
}

inline Tensor leaky_relu(const Tensor& a, double slope) {
  return detail::unary("leaky_relu", a, [slope](double x) { return x > 0.0 ? x : slope * x; },
                       [slope](double x, double) { return x > 0.0 ? 1.0 : slope; });
}

inline Tensor relu(const Tensor& a) { return leaky_relu(a, 0.0); }

inline Tensor elu(const Tensor& a, double alpha = 1.0) {
  return detail::unary("elu", a,
                       [alpha](double x) { return x > 0.0 ? x : alpha * std::expm1(x); },
                       [alpha](double x, double) { return x > 0.0 ? 1.0 : alpha * std::exp(x); });
}

// ---------------------------------------------------------------------------
// Sequence convolution

/// Width-3, same-padded 1-D convolution over a batch of sequences.
/// `x` stacks `x.rows() / length` sequences of `length` d_in-dim vectors;
/// `kernel` stacks the three taps (offsets -1, 0, +1) as a (3 d_in) x d_out
/// matrix. Returns the per-position feature maps.
inline Tensor conv1d_features(const Tensor& x, std::size_t length, const Tensor& kernel) {
  const std::size_t d_in = x.cols();
  if (length == 0 || x.rows() % length != 0)
    throw Error(ErrorCode::shape, "conv1d: " + std::to_string(x.rows()) +
                                      " rows is not a multiple of sequence length " +
                                      std::to_string(length));
  if (kernel.rows() != 3 * d_in) detail::shape_error("conv1d", x.value(), kernel.value());
  const std::size_t d_out = kernel.cols();
  const std::size_t batch = x.rows() / length;
  const auto& xv = x.value();
  const auto& kv = kernel.value();
  Matrix out(x.rows(), d_out);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t l = 0; l < length; ++l) {
      double* o = out.row(b * length + l).data();
      for (std::size_t tap = 0; tap < 3; ++tap) {
        if ((tap == 0 && l == 0) || (tap == 2 && l + 1 == length)) continue;
        const double* src = xv.row(b * length + l + tap - 1).data();
        for (std::size_t c = 0; c < d_in; ++c) {
          const double v = src[c];
          const double* kr = kv.row(tap * d_in + c).data();
          for (std::size_t j = 0; j < d_out; ++j) o[j] += v * kr[j];
        }
      }
    }
  return detail::make_result(
      "conv1d_features", std::move(out), {x, kernel},
      [length, batch, d_in, d_out](detail::Node& self) {
        const auto& xv = self.inputs[0]->value;
        auto* gx = detail::grad_of(self, 0);
        auto* gk = detail::grad_of(self, 1);
        // Transposed taps: row j holds output channel j's weights over all taps.
        const Matrix kt = kernels::transpose(self.inputs[1]->value);
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t l = 0; l < length; ++l) {
            const double* up = self.grad.row(b * length + l).data();
            for (std::size_t tap = 0; tap < 3; ++tap) {
              if ((tap == 0 && l == 0) || (tap == 2 && l + 1 == length)) continue;
              const std::size_t src_row = b * length + l + tap - 1;
              if (gx) {
                double* gxr = gx->row(src_row).data();
                for (std::size_t j = 0; j < d_out; ++j) {
                  const double u = up[j];
                  const double* ktr = kt.row(j).data() + tap * d_in;
                  for (std::size_t c = 0; c < d_in; ++c) gxr[c] += u * ktr[c];
                }
              }
              if (gk) {
                const double* src = xv.row(src_row).data();
                for (std::size_t c = 0; c < d_in; ++c) {
                  double* gkr = gk->row(tap * d_in + c).data();
                  const double v = src[c];
                  for (std::size_t j = 0; j < d_out; ++j) gkr[j] += v * up[j];
                }
              }
            }
          }
      });
}

/// Mean over each sequence of `length` consecutive rows.
inline Tensor mean_pool_seq(const Tensor& x, std::size_t length) {
  if (length == 0 || x.rows() % length != 0)
    throw Error(ErrorCode::shape, "mean_pool_seq: bad sequence length");
  const std::size_t batch = x.rows() / length;
  const double inv = 1.0 / static_cast<double>(length);
  Matrix out(batch, x.cols());
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t l = 0; l < length; ++l)
      for (std::size_t j = 0; j < x.cols(); ++j) out(b, j) += x.value()(b * length + l, j);
  for (auto& v : out.values()) v *= inv;
  return detail::make_result("mean_pool_seq", std::move(out), {x},
                             [length, batch, inv](detail::Node& self) {
                               auto* g = detail::grad_of(self, 0);
                               if (!g) return;
                               for (std::size_t b = 0; b < batch; ++b)
                                 for (std::size_t l = 0; l < length; ++l)
                                   for (std::size_t j = 0; j < g->cols(); ++j)
                                     (*g)(b * length + l, j) += self.grad(b, j) * inv;
                             });
}

/// Convolution followed by global mean pooling: one d_out row per sequence.
inline Tensor conv1d_seq(const Tensor& x, std::size_t length, const Tensor& kernel) {
  return mean_pool_seq(conv1d_features(x, length, kernel), length);
}

// ---------------------------------------------------------------------------
// Reverse pass

/// Accumulates d loss / d t into every tensor reachable from `loss` that
/// requires a gradient. Leaf gradients accumulate across calls; interior
/// gradients are recomputed.
inline void backward(const Tensor& loss) {
  if (loss.value().size() != 1)
    throw Error(ErrorCode::shape, "backward: loss must be scalar, got " +
                                      loss.value().shape_string());
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS; inputs are visited in declaration order so the
  // resulting order (and accumulation order) is fixed.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> visited;
  std::vector<std::pair<detail::Node*, std::size_t>> stack{{loss.node().get(), 0}};
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      detail::Node* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.push_back({child, 0});
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (auto* n : order)
    if (n->backward) {
      n->grad = Matrix(n->value.rows(), n->value.cols());
      n->has_grad = true;
    }
  auto* root = loss.node().get();
  root->ensure_grad();
  root->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backward) (*it)->backward(**it);
}

}  // namespace hetprompt
