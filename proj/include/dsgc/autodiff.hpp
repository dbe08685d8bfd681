#pragma once

// Dense reverse-mode automatic differentiation over small row-major matrices.
//
// A Tensor is a shared handle onto a node of the computation record. Nodes hold
// their parents, so the record stays alive exactly as long as some result that
// depends on it is reachable. Leaves created with Tensor::parameter accumulate
// gradients across backward() calls; interior nodes are reset at the start of
// every backward() call.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <limits>
#include <memory>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "dsgc/errors.hpp"

namespace dsgc::ad {

class Matrix {
public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw ShapeError("Matrix: " + std::to_string(data_.size()) + " values for shape " +
                       std::to_string(rows_) + "x" + std::to_string(cols_));
    }
  }
  Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
      if (r.size() != cols_) throw ShapeError("Matrix: ragged initializer");
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }
  static Matrix row_vector(std::span<const double> v) {
    return Matrix(1, v.size(), std::vector<double>(v.begin(), v.end()));
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool same_shape(const Matrix& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  std::string shape_string() const {
    return "(" + std::to_string(rows_) + "x" + std::to_string(cols_) + ")";
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Constant compressed-sparse-row matrix used for message passing.
struct SparseMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::size_t> row_ptr;  // rows + 1 entries
  std::vector<std::size_t> col;
  std::vector<double> val;

  std::size_t nnz() const noexcept { return col.size(); }

  Matrix to_dense() const {
    Matrix m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k) m(r, col[k]) += val[k];
    return m;
  }
};

namespace detail {

inline std::uint64_t next_node_id() {
  static std::atomic<std::uint64_t> counter{0};
  return counter.fetch_add(1, std::memory_order_relaxed) + 1;
}

struct Node {
  Matrix value;
  Matrix grad;
  std::vector<std::shared_ptr<Node>> parents;
  // Adds this node's grad, pushed through the local Jacobian, into parents' grads.
  std::function<void(Node&)> backward;
  std::uint64_t id = next_node_id();
  bool requires_grad = false;
  bool leaf = true;
};

}  // namespace detail

class Tensor {
public:
  Tensor() = default;

  /// Trainable leaf: gradients accumulate into it.
  static Tensor parameter(Matrix value) { return leaf(std::move(value), true); }
  /// Leaf excluded from differentiation.
  static Tensor constant(Matrix value) { return leaf(std::move(value), false); }
  static Tensor scalar(double v) { return constant(Matrix(1, 1, v)); }

  bool defined() const noexcept { return node_ != nullptr; }
  std::size_t rows() const { return node_->value.rows(); }
  std::size_t cols() const { return node_->value.cols(); }
  const Matrix& value() const { return node_->value; }
  const Matrix& grad() const { return node_->grad; }
  /// Mutable access for optimizers and test harnesses. Only meaningful on leaves.
  Matrix& mutable_value() { return node_->value; }
  Matrix& mutable_grad() { return node_->grad; }
  bool requires_grad() const { return node_->requires_grad; }
  bool is_leaf() const { return node_->leaf; }
  std::uint64_t id() const { return node_->id; }

  double item() const {
    if (rows() != 1 || cols() != 1) throw ShapeError("item: tensor is " + value().shape_string());
    return node_->value[0];
  }

  void zero_grad() { node_->grad.fill(0.0); }

  // Internal construction hook used by the primitives below.
  static Tensor from_node(std::shared_ptr<detail::Node> n) {
    Tensor t;
    t.node_ = std::move(n);
    return t;
  }
  const std::shared_ptr<detail::Node>& node() const { return node_; }

private:
  static Tensor leaf(Matrix value, bool trainable) {
    auto n = std::make_shared<detail::Node>();
    n->grad = Matrix(value.rows(), value.cols());
    n->value = std::move(value);
    n->requires_grad = trainable;
    n->leaf = true;
    return from_node(std::move(n));
  }

  std::shared_ptr<detail::Node> node_;
};

inline void zero_grads(std::span<Tensor> params) {
  for (auto& p : params) p.zero_grad();
}

namespace detail {

inline Tensor make_result(Matrix value, std::vector<Tensor> inputs,
                          std::function<void(Node&)> backward) {
  auto n = std::make_shared<Node>();
  n->grad = Matrix(value.rows(), value.cols());
  n->value = std::move(value);
  n->leaf = false;
  for (const auto& in : inputs) n->requires_grad = n->requires_grad || in.requires_grad();
  if (n->requires_grad) {
    n->parents.reserve(inputs.size());
    for (const auto& in : inputs) n->parents.push_back(in.node());
    n->backward = std::move(backward);
  }
  return Tensor::from_node(std::move(n));
}

inline std::string fmt_value(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

[[noreturn]] inline void domain_fail(const char* op, double v, const char* expectation) {
  throw DomainError(std::string(op) + ": argument " + fmt_value(v) + " " + expectation);
}

inline void require_finite(const char* op, const Matrix& m) {
  for (double v : m.values())
    if (!std::isfinite(v)) domain_fail(op, v, "is not finite");
}

inline std::size_t broadcast_dim(const char* op, std::size_t a, std::size_t b, const Matrix& ma,
                                 const Matrix& mb) {
  if (a == b) return a;
  if (a == 1) return b;
  if (b == 1) return a;
  throw ShapeError(std::string(op) + ": cannot broadcast " + ma.shape_string() + " with " +
                   mb.shape_string());
}

// Elementwise binary op with 2-D broadcasting (a dimension of extent 1 stretches).
// f(x, y) is the value; dfx/dfy return the partial derivatives at (x, y, out).
template <class F, class DX, class DY>
Tensor binary(const char* op, const Tensor& a, const Tensor& b, F f, DX dfx, DY dfy) {
  const Matrix& va = a.value();
  const Matrix& vb = b.value();
  const std::size_t r = broadcast_dim(op, va.rows(), vb.rows(), va, vb);
  const std::size_t c = broadcast_dim(op, va.cols(), vb.cols(), va, vb);
  Matrix out(r, c);
  const bool ar = va.rows() == 1, ac = va.cols() == 1, br = vb.rows() == 1, bc = vb.cols() == 1;
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j)
      out(i, j) = f(va(ar ? 0 : i, ac ? 0 : j), vb(br ? 0 : i, bc ? 0 : j));
  return make_result(std::move(out), {a, b}, [=](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) {
        const std::size_t ia = ar ? 0 : i, ja = ac ? 0 : j, ib = br ? 0 : i, jb = bc ? 0 : j;
        const double x = pa.value(ia, ja), y = pb.value(ib, jb), o = self.value(i, j);
        const double g = self.grad(i, j);
        if (pa.requires_grad) pa.grad(ia, ja) += g * dfx(x, y, o);
        if (pb.requires_grad) pb.grad(ib, jb) += g * dfy(x, y, o);
      }
  });
}

// Elementwise unary op; df(x, y) is the derivative given input x and output y.
template <class F, class DF>
Tensor unary(const Tensor& a, F f, DF df) {
  const Matrix& va = a.value();
  Matrix out(va.rows(), va.cols());
  for (std::size_t i = 0; i < va.size(); ++i) out[i] = f(va[i]);
  return make_result(std::move(out), {a}, [=](Node& self) {
    Node& p = *self.parents[0];
    for (std::size_t i = 0; i < self.value.size(); ++i)
      p.grad[i] += self.grad[i] * df(p.value[i], self.value[i]);
  });
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra and structure

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  const Matrix& va = a.value();
  const Matrix& vb = b.value();
  if (va.cols() != vb.rows())
    throw ShapeError("matmul: " + va.shape_string() + " x " + vb.shape_string());
  const std::size_t n = va.rows(), k = va.cols(), m = vb.cols();
  Matrix out(n, m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double x = va(i, p);
      if (x == 0.0) continue;
      for (std::size_t j = 0; j < m; ++j) out(i, j) += x * vb(p, j);
    }
  return detail::make_result(std::move(out), {a, b}, [n, k, m](detail::Node& self) {
    detail::Node& pa = *self.parents[0];
    detail::Node& pb = *self.parents[1];
    if (pa.requires_grad)  // dA = G B^T
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          for (std::size_t j = 0; j < m; ++j) s += self.grad(i, j) * pb.value(p, j);
          pa.grad(i, p) += s;
        }
    if (pb.requires_grad)  // dB = A^T G
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double x = pa.value(i, p);
          if (x == 0.0) continue;
          for (std::size_t j = 0; j < m; ++j) pb.grad(p, j) += x * self.grad(i, j);
        }
  });
}

inline Tensor transpose(const Tensor& a) {
  const Matrix& va = a.value();
  Matrix out(va.cols(), va.rows());
  for (std::size_t i = 0; i < va.rows(); ++i)
    for (std::size_t j = 0; j < va.cols(); ++j) out(j, i) = va(i, j);
  return detail::make_result(std::move(out), {a}, [](detail::Node& self) {
    detail::Node& p = *self.parents[0];
    for (std::size_t i = 0; i < p.value.rows(); ++i)
      for (std::size_t j = 0; j < p.value.cols(); ++j) p.grad(i, j) += self.grad(j, i);
  });
}

inline Tensor concat_cols(const Tensor& a, const Tensor& b) {
  const Matrix& va = a.value();
  const Matrix& vb = b.value();
  if (va.rows() != vb.rows())
    throw ShapeError("concat_cols: " + va.shape_string() + " with " + vb.shape_string());
  const std::size_t ca = va.cols(), cb = vb.cols();
  Matrix out(va.rows(), ca + cb);
  for (std::size_t i = 0; i < va.rows(); ++i) {
    for (std::size_t j = 0; j < ca; ++j) out(i, j) = va(i, j);
    for (std::size_t j = 0; j < cb; ++j) out(i, ca + j) = vb(i, j);
  }
  return detail::make_result(std::move(out), {a, b}, [ca, cb](detail::Node& self) {
    detail::Node& pa = *self.parents[0];
    detail::Node& pb = *self.parents[1];
    for (std::size_t i = 0; i < self.value.rows(); ++i) {
      if (pa.requires_grad)
        for (std::size_t j = 0; j < ca; ++j) pa.grad(i, j) += self.grad(i, j);
      if (pb.requires_grad)
        for (std::size_t j = 0; j < cb; ++j) pb.grad(i, j) += self.grad(i, ca + j);
    }
  });
}

inline Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const std::size_t c = parts.front().cols();
  std::size_t r = 0;
  for (const auto& p : parts) {
    if (p.cols() != c)
      throw ShapeError("concat_rows: column mismatch " + parts.front().value().shape_string() +
                       " with " + p.value().shape_string());
    r += p.rows();
  }
  Matrix out(r, c);
  std::size_t at = 0;
  for (const auto& p : parts) {
    std::copy(p.value().values().begin(), p.value().values().end(), out.values().begin() + at);
    at += p.value().size();
  }
  return detail::make_result(std::move(out), std::vector<Tensor>(parts.begin(), parts.end()),
                             [](detail::Node& self) {
                               std::size_t off = 0;
                               for (auto& p : self.parents) {
                                 if (p->requires_grad)
                                   for (std::size_t i = 0; i < p->grad.size(); ++i)
                                     p->grad[i] += self.grad[off + i];
                                 off += p->value.size();
                               }
                             });
}

/// Sparse constant times dense tensor: A * H.
inline Tensor spmm(const SparseMatrix& a, const Tensor& h) {
  const Matrix& vh = h.value();
  if (a.cols != vh.rows())
    throw ShapeError("spmm: sparse (" + std::to_string(a.rows) + "x" + std::to_string(a.cols) +
                     ") x " + vh.shape_string());
  const std::size_t m = vh.cols();
  Matrix out(a.rows, m);
  for (std::size_t r = 0; r < a.rows; ++r)
    for (std::size_t k = a.row_ptr[r]; k < a.row_ptr[r + 1]; ++k) {
      const double w = a.val[k];
      const std::size_t c = a.col[k];
      for (std::size_t j = 0; j < m; ++j) out(r, j) += w * vh(c, j);
    }
  auto op = std::make_shared<const SparseMatrix>(a);
  return detail::make_result(std::move(out), {h}, [op, m](detail::Node& self) {
    detail::Node& p = *self.parents[0];
    for (std::size_t r = 0; r < op->rows; ++r)
      for (std::size_t k = op->row_ptr[r]; k < op->row_ptr[r + 1]; ++k) {
        const double w = op->val[k];
        const std::size_t c = op->col[k];
        for (std::size_t j = 0; j < m; ++j) p.grad(c, j) += w * self.grad(r, j);
      }
  });
}

// ---------------------------------------------------------------------------
// Elementwise arithmetic (broadcasting)

inline Tensor add(const Tensor& a, const Tensor& b) {
  return detail::binary(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return 1.0; });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  return detail::binary(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return -1.0; });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  return detail::binary(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double, double y, double) { return y; }, [](double x, double, double) { return x; });
}

inline Tensor div(const Tensor& a, const Tensor& b) {
  for (double v : b.value().values())
    if (v == 0.0 || !std::isfinite(v)) detail::domain_fail("div", v, "is not a valid divisor");
  return detail::binary(
      "div", a, b, [](double x, double y) { return x / y; },
      [](double, double y, double) { return 1.0 / y; },
      [](double x, double y, double) { return -x / (y * y); });
}

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }

inline Tensor scale(const Tensor& a, double s) {
  return detail::unary(
      a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

inline Tensor add_scalar(const Tensor& a, double s) {
  return detail::unary(
      a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

inline Tensor neg(const Tensor& a) { return scale(a, -1.0); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

inline Tensor square(const Tensor& a) {
  return detail::unary(
      a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

// ---------------------------------------------------------------------------
// Elementwise transcendental functions

inline Tensor tanh(const Tensor& a) {
  return detail::unary(
      a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

inline Tensor artanh(const Tensor& a) {
  for (double v : a.value().values())
    if (!(v > -1.0 && v < 1.0)) detail::domain_fail("artanh", v, "outside (-1, 1)");
  return detail::unary(
      a, [](double x) { return std::atanh(x); }, [](double x, double) { return 1.0 / (1.0 - x * x); });
}

inline Tensor arcosh(const Tensor& a) {
  for (double v : a.value().values())
    if (!(v >= 1.0) || !std::isfinite(v)) detail::domain_fail("arcosh", v, "below 1");
  return detail::unary(
      a, [](double x) { return std::acosh(x); },
      [](double x, double) {
        const double d = x * x - 1.0;
        return d > 0.0 ? 1.0 / std::sqrt(d) : 0.0;
      });
}

inline double sigmoid_scalar(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline Tensor sigmoid(const Tensor& a) {
  return detail::unary(
      a, [](double x) { return sigmoid_scalar(x); }, [](double, double y) { return y * (1.0 - y); });
}

/// log(1 + e^x), evaluated without overflow.
inline Tensor softplus(const Tensor& a) {
  return detail::unary(
      a, [](double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); },
      [](double x, double) { return sigmoid_scalar(x); });
}

inline Tensor relu(const Tensor& a) {
  return detail::unary(
      a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

inline Tensor leaky_relu(const Tensor& a, double slope) {
  return detail::unary(
      a, [slope](double x) { return x > 0.0 ? x : slope * x; },
      [slope](double x, double) { return x > 0.0 ? 1.0 : slope; });
}

inline Tensor exp(const Tensor& a) {
  return detail::unary(
      a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

inline Tensor log(const Tensor& a) {
  for (double v : a.value().values())
    if (!(v > 0.0) || !std::isfinite(v)) detail::domain_fail("log", v, "is not positive");
  return detail::unary(
      a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

inline Tensor sqrt(const Tensor& a) {
  for (double v : a.value().values())
    if (!(v > 0.0) || !std::isfinite(v)) detail::domain_fail("sqrt", v, "is not positive");
  return detail::unary(
      a, [](double x) { return std::sqrt(x); }, [](double, double y) { return 0.5 / y; });
}

/// max(x, lo); the gradient is blocked where the bound is active.
inline Tensor clamp_min(const Tensor& a, double lo) {
  return detail::unary(
      a, [lo](double x) { return x < lo ? lo : x; }, [lo](double x, double) { return x < lo ? 0.0 : 1.0; });
}

/// min(x, hi); the gradient is blocked where the bound is active.
inline Tensor clamp_max(const Tensor& a, double hi) {
  return detail::unary(
      a, [hi](double x) { return x > hi ? hi : x; }, [hi](double x, double) { return x > hi ? 0.0 : 1.0; });
}

// ---------------------------------------------------------------------------
// Reductions

inline Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  return detail::make_result(Matrix(1, 1, s), {a}, [](detail::Node& self) {
    detail::Node& p = *self.parents[0];
    const double g = self.grad[0];
    for (std::size_t i = 0; i < p.grad.size(); ++i) p.grad[i] += g;
  });
}

inline Tensor mean(const Tensor& a) {
  if (a.value().size() == 0) throw ShapeError("mean: empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

/// Global maximum; the gradient flows to the first maximal entry.
inline Tensor max(const Tensor& a) {
  const auto vals = a.value().values();
  if (vals.empty()) throw ShapeError("max: empty tensor");
  const std::size_t at =
      static_cast<std::size_t>(std::max_element(vals.begin(), vals.end()) - vals.begin());
  return detail::make_result(Matrix(1, 1, vals[at]), {a}, [at](detail::Node& self) {
    self.parents[0]->grad[at] += self.grad[0];
  });
}

/// Column-wise mean over rows: (n x d) -> (1 x d).
inline Tensor mean_rows(const Tensor& a) {
  const Matrix& v = a.value();
  if (v.rows() == 0) throw ContractError("mean_rows: zero rows");
  const std::size_t n = v.rows(), d = v.cols();
  Matrix out(1, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out(0, j) += v(i, j);
  const double inv = 1.0 / static_cast<double>(n);
  for (std::size_t j = 0; j < d; ++j) out(0, j) *= inv;
  return detail::make_result(std::move(out), {a}, [n, d, inv](detail::Node& self) {
    detail::Node& p = *self.parents[0];
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) p.grad(i, j) += inv * self.grad(0, j);
  });
}

/// Euclidean norm of every row: (n x d) -> (n x 1). Zero rows get a zero subgradient.
inline Tensor row_norm(const Tensor& a) {
  const Matrix& v = a.value();
  const std::size_t n = v.rows(), d = v.cols();
  Matrix out(n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += v(i, j) * v(i, j);
    out(i, 0) = std::sqrt(s);
  }
  return detail::make_result(std::move(out), {a}, [n, d](detail::Node& self) {
    detail::Node& p = *self.parents[0];
    for (std::size_t i = 0; i < n; ++i) {
      const double nrm = self.value(i, 0);
      if (nrm == 0.0) continue;
      const double g = self.grad(i, 0) / nrm;
      for (std::size_t j = 0; j < d; ++j) p.grad(i, j) += g * p.value(i, j);
    }
  });
}

/// Squared Euclidean norm of every row: (n x d) -> (n x 1).
inline Tensor row_sq_norm(const Tensor& a) {
  const Matrix& v = a.value();
  const std::size_t n = v.rows(), d = v.cols();
  Matrix out(n, 1);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out(i, 0) += v(i, j) * v(i, j);
  return detail::make_result(std::move(out), {a}, [n, d](detail::Node& self) {
    detail::Node& p = *self.parents[0];
    for (std::size_t i = 0; i < n; ++i) {
      const double g = 2.0 * self.grad(i, 0);
      for (std::size_t j = 0; j < d; ++j) p.grad(i, j) += g * p.value(i, j);
    }
  });
}

/// log(sum_j exp(x_ij)) per row with max-shift: (n x m) -> (n x 1).
inline Tensor logsumexp_rows(const Tensor& a) {
  const Matrix& v = a.value();
  const std::size_t n = v.rows(), m = v.cols();
  if (m == 0) throw ShapeError("logsumexp_rows: zero columns");
  Matrix out(n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < m; ++j) mx = std::max(mx, v(i, j));
    double s = 0.0;
    for (std::size_t j = 0; j < m; ++j) s += std::exp(v(i, j) - mx);
    out(i, 0) = mx + std::log(s);
  }
  return detail::make_result(std::move(out), {a}, [n, m](detail::Node& self) {
    detail::Node& p = *self.parents[0];
    for (std::size_t i = 0; i < n; ++i) {
      const double lse = self.value(i, 0), g = self.grad(i, 0);
      for (std::size_t j = 0; j < m; ++j) p.grad(i, j) += g * std::exp(p.value(i, j) - lse);
    }
  });
}

// ---------------------------------------------------------------------------
// Graph attention aggregation

/// For every row i of `pattern` (a neighbor structure including i itself):
///   e_ij = leaky_relu(src_i + dst_j), alpha_i. = softmax_j(e_ij), out_i = sum_j alpha_ij z_j.
/// `src` and `dst` are (n x 1) score halves; pattern values are ignored.
inline Tensor edge_softmax_aggregate(const Tensor& z, const Tensor& src, const Tensor& dst,
                                     const SparseMatrix& pattern, double slope) {
  const Matrix& vz = z.value();
  const std::size_t n = vz.rows(), d = vz.cols();
  if (pattern.rows != n || pattern.cols != n || src.rows() != n || dst.rows() != n ||
      src.cols() != 1 || dst.cols() != 1)
    throw ShapeError("edge_softmax_aggregate: inconsistent shapes for " + vz.shape_string());
  auto pat = std::make_shared<const SparseMatrix>(pattern);
  auto alpha = std::make_shared<std::vector<double>>(pattern.nnz());
  auto pre = std::make_shared<std::vector<double>>(pattern.nnz());
  Matrix out(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t b = pat->row_ptr[i], e = pat->row_ptr[i + 1];
    if (b == e) continue;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t k = b; k < e; ++k) {
      const double s = src.value()(i, 0) + dst.value()(pat->col[k], 0);
      (*pre)[k] = s;
      const double act = s > 0.0 ? s : slope * s;
      (*alpha)[k] = act;
      mx = std::max(mx, act);
    }
    double tot = 0.0;
    for (std::size_t k = b; k < e; ++k) tot += ((*alpha)[k] = std::exp((*alpha)[k] - mx));
    for (std::size_t k = b; k < e; ++k) {
      (*alpha)[k] /= tot;
      for (std::size_t j = 0; j < d; ++j) out(i, j) += (*alpha)[k] * vz(pat->col[k], j);
    }
  }
  return detail::make_result(std::move(out), {z, src, dst}, [=](detail::Node& self) {
    detail::Node& pz = *self.parents[0];
    detail::Node& ps = *self.parents[1];
    detail::Node& pd = *self.parents[2];
    std::vector<double> dalpha;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t b = pat->row_ptr[i], e = pat->row_ptr[i + 1];
      dalpha.assign(e - b, 0.0);
      double weighted = 0.0;
      for (std::size_t k = b; k < e; ++k) {
        const std::size_t c = pat->col[k];
        double da = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          da += self.grad(i, j) * pz.value(c, j);
          if (pz.requires_grad) pz.grad(c, j) += (*alpha)[k] * self.grad(i, j);
        }
        dalpha[k - b] = da;
        weighted += (*alpha)[k] * da;
      }
      for (std::size_t k = b; k < e; ++k) {
        const double de = (*alpha)[k] * (dalpha[k - b] - weighted);
        const double dpre = de * ((*pre)[k] > 0.0 ? 1.0 : slope);
        if (ps.requires_grad) ps.grad(i, 0) += dpre;
        if (pd.requires_grad) pd.grad(pat->col[k], 0) += dpre;
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Reverse sweep

/// Accumulates d(root)/d(leaf) into the grad of every trainable leaf reachable
/// from the scalar `root`.
inline void backward(const Tensor& root) {
  if (!root.defined() || root.rows() != 1 || root.cols() != 1)
    throw ContractError("backward: root must be a 1x1 tensor, got " +
                        (root.defined() ? root.value().shape_string() : std::string("undefined")));
  if (!root.requires_grad()) return;

  // Iterative post-order DFS gives a topological order (parents before children).
  std::vector<detail::Node*> order;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  std::unordered_set<detail::Node*> visited;
  stack.emplace_back(root.node().get(), 0);
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* p = node->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) {
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (detail::Node* n : order)
    if (!n->leaf) n->grad.fill(0.0);
  root.node()->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (!n->leaf && n->backward) n->backward(*n);
  }
}

}  // namespace dsgc::ad
