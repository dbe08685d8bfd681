#pragma once

// Poincare-ball geometry. Tensor-level functions treat every row of their
// argument as one point (or one tangent vector at the origin) and are
// differentiable through the autodiff record.

#include <cmath>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dsgc/autodiff.hpp"
#include "dsgc/errors.hpp"

namespace dsgc::poincare {

using ad::Matrix;
using ad::Tensor;

/// Lower clamp applied to the arcosh argument of the geodesic length.
inline constexpr double kArcoshMargin = 1e-12;
/// Upper clamp on sqrt(c)*|u| before artanh.
inline constexpr double kArtanhBound = 1.0 - 1e-7;
/// Norm floor used to evaluate tanh(x)/x and artanh(x)/x at x = 0.
inline constexpr double kNormFloor = 1e-15;
/// Points are kept within (1 - kBoundaryMargin)/sqrt(c) of the origin.
inline constexpr double kBoundaryMargin = 1e-5;

/// Open ball { x : c*|x|^2 < 1 } of constant curvature -c.
class PoincareBall {
public:
  explicit PoincareBall(double c = 1.0) : c_(c), sqrt_c_(std::sqrt(c)) {
    if (!(c > 0.0) || !std::isfinite(c))
      throw ContractError("PoincareBall: curvature magnitude must be positive, got " + std::to_string(c));
  }

  double c() const noexcept { return c_; }
  double sqrt_c() const noexcept { return sqrt_c_; }
  double radius() const noexcept { return 1.0 / sqrt_c_; }
  double max_norm() const noexcept { return (1.0 - kBoundaryMargin) / sqrt_c_; }

  bool contains(std::span<const double> x) const {
    double s = 0.0;
    for (double v : x) {
      if (!std::isfinite(v)) return false;
      s += v * v;
    }
    return c_ * s < 1.0;
  }

  /// Throws DomainError if any row is on or outside the boundary.
  void require_inside(const char* op, const Matrix& points) const {
    for (std::size_t r = 0; r < points.rows(); ++r) {
      if (!contains(points.row(r))) {
        double s = 0.0;
        for (double v : points.row(r)) s += v * v;
        throw DomainError(std::string(op) + ": row " + std::to_string(r) + " has c*|u|^2 = " +
                          ad::detail::fmt_value(c_ * s) + ", outside the open ball");
      }
    }
  }

private:
  double c_;
  double sqrt_c_;
};

/// Coordinates of a point of the ball.
struct BallPoint {
  std::vector<double> coords;
};

/// Element of the tangent space at the origin.
struct TangentVector {
  std::vector<double> coords;
};

enum class Activation { relu, tanh, sigmoid };

inline Activation parse_activation(std::string_view name) {
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  if (name == "sigmoid") return Activation::sigmoid;
  throw ContractError("unknown activation '" + std::string(name) + "' (expected relu, tanh, sigmoid)");
}

inline Tensor apply_activation(const Tensor& x, Activation act) {
  switch (act) {
    case Activation::relu: return ad::relu(x);
    case Activation::tanh: return ad::tanh(x);
    case Activation::sigmoid: return ad::sigmoid(x);
  }
  throw ContractError("unknown activation kind");
}

// ---------------------------------------------------------------------------
// Tensor-level operations

/// Radially rescales rows whose norm exceeds ball.max_norm() onto that radius.
inline Tensor project(const Tensor& u, const PoincareBall& ball) {
  const Tensor norm = ad::clamp_min(ad::row_norm(u), kNormFloor);
  const Tensor factor =
      ad::clamp_max(ad::div(Tensor::constant(Matrix(1, 1, ball.max_norm())), norm), 1.0);
  return ad::mul(u, factor);
}

/// exp_o(t) = tanh(sqrt(c)|t|) t / (sqrt(c)|t|), row-wise, followed by projection.
inline Tensor exp_map_origin(const Tensor& t, const PoincareBall& ball) {
  ad::detail::require_finite("exp_map_origin", t.value());
  const Tensor scaled = ad::scale(ad::clamp_min(ad::row_norm(t), kNormFloor), ball.sqrt_c());
  const Tensor factor = ad::div(ad::tanh(scaled), scaled);
  return project(ad::mul(t, factor), ball);
}

/// log_o(u) = artanh(sqrt(c)|u|) u / (sqrt(c)|u|), row-wise.
inline Tensor log_map_origin(const Tensor& u, const PoincareBall& ball) {
  ball.require_inside("log_map_origin", u.value());
  const Tensor scaled = ad::clamp_max(
      ad::scale(ad::clamp_min(ad::row_norm(u), kNormFloor), ball.sqrt_c()), kArtanhBound);
  const Tensor factor = ad::div(ad::artanh(scaled), scaled);
  return ad::mul(u, factor);
}

/// Reciprocal of the geodesic length between rows of u and v (either side may
/// be a single row, which is broadcast). Returns an (n x 1) column.
inline Tensor geodesic_similarity(const Tensor& u, const Tensor& v, const PoincareBall& ball) {
  ball.require_inside("geodesic_similarity", u.value());
  ball.require_inside("geodesic_similarity", v.value());
  if (u.cols() != v.cols())
    throw ShapeError("geodesic_similarity: " + u.value().shape_string() + " vs " + v.value().shape_string());
  const Tensor us = ad::scale(u, ball.sqrt_c());
  const Tensor vs = ad::scale(v, ball.sqrt_c());
  const Tensor diff = ad::row_sq_norm(ad::sub(us, vs));
  const Tensor one = Tensor::scalar(1.0);
  const Tensor denom = ad::mul(ad::sub(one, ad::row_sq_norm(us)), ad::sub(one, ad::row_sq_norm(vs)));
  const Tensor arg = ad::clamp_min(ad::add_scalar(ad::scale(ad::div(diff, denom), 2.0), 1.0),
                                   1.0 + kArcoshMargin);
  const Tensor length = ad::scale(ad::arcosh(arg), 1.0 / ball.sqrt_c());
  return ad::div(one, length);
}

/// W (x) u = exp_o(W log_o(u)); rows of u are points, W is (out x in).
inline Tensor mobius_matvec(const Tensor& w, const Tensor& u, const PoincareBall& ball) {
  if (w.cols() != u.cols())
    throw ShapeError("mobius_matvec: W " + w.value().shape_string() + " incompatible with points " +
                     u.value().shape_string());
  return exp_map_origin(ad::matmul(log_map_origin(u, ball), ad::transpose(w)), ball);
}

/// u (+) b = exp_o(log_o(u) + b); b is a single row.
inline Tensor mobius_bias_add(const Tensor& u, const Tensor& b, const PoincareBall& ball) {
  if (b.rows() != 1 || b.cols() != u.cols())
    throw ShapeError("mobius_bias_add: bias " + b.value().shape_string() + " incompatible with points " +
                     u.value().shape_string());
  return exp_map_origin(ad::add(log_map_origin(u, ball), b), ball);
}

/// y = exp_o(act(log_o(W (x) u (+) b))).
inline Tensor hyperbolic_activation(const Tensor& u, const Tensor& w, const Tensor& b, Activation act,
                                    const PoincareBall& ball) {
  const Tensor affine = mobius_bias_add(mobius_matvec(w, u, ball), b, ball);
  return exp_map_origin(apply_activation(log_map_origin(affine, ball), act), ball);
}

// ---------------------------------------------------------------------------
// Value-level convenience wrappers

namespace detail {
inline Tensor as_row(std::span<const double> v) { return Tensor::constant(Matrix::row_vector(v)); }
inline std::vector<double> first_row(const Tensor& t) {
  const auto r = t.value().row(0);
  return {r.begin(), r.end()};
}
}  // namespace detail

inline double geodesic_similarity(const BallPoint& u, const BallPoint& v, const PoincareBall& ball = PoincareBall{}) {
  return geodesic_similarity(detail::as_row(u.coords), detail::as_row(v.coords), ball).item();
}

inline BallPoint exp_map_origin(const TangentVector& t, const PoincareBall& ball = PoincareBall{}) {
  return {detail::first_row(exp_map_origin(detail::as_row(t.coords), ball))};
}

inline TangentVector log_map_origin(const BallPoint& u, const PoincareBall& ball = PoincareBall{}) {
  return {detail::first_row(log_map_origin(detail::as_row(u.coords), ball))};
}

inline BallPoint mobius_matvec(const Matrix& w, const BallPoint& u, const PoincareBall& ball = PoincareBall{}) {
  return {detail::first_row(mobius_matvec(Tensor::constant(w), detail::as_row(u.coords), ball))};
}

inline BallPoint mobius_bias_add(const BallPoint& u, std::span<const double> b,
                                 const PoincareBall& ball = PoincareBall{}) {
  return {detail::first_row(mobius_bias_add(detail::as_row(u.coords), detail::as_row(b), ball))};
}

inline BallPoint hyperbolic_activation(const BallPoint& u, const Matrix& w, std::span<const double> b,
                                       Activation act, const PoincareBall& ball = PoincareBall{}) {
  return {detail::first_row(hyperbolic_activation(detail::as_row(u.coords), Tensor::constant(w),
                                                  detail::as_row(b), act, ball))};
}

}  // namespace dsgc::poincare
