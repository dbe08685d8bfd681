#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "dsgc/poincare.hpp"
#include "support/oracles.hpp"

using namespace dsgc;
using namespace dsgc::poincare;

namespace {

double norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

std::vector<double> random_direction(std::mt19937_64& rng, std::size_t dim) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> v(dim);
  for (auto& x : v) x = n(rng);
  const double s = norm(v);
  for (auto& x : v) x /= s;
  return v;
}

std::vector<double> random_ball_point(std::mt19937_64& rng, std::size_t dim, double max_radius = 0.95) {
  auto v = random_direction(rng, dim);
  const double r = std::uniform_real_distribution<double>(0.0, max_radius)(rng);
  for (auto& x : v) x *= r;
  return v;
}

}  // namespace

TEST(Poincare, WorkedSimilarityValue) {
  const double s = geodesic_similarity(BallPoint{{0.5, 0.0}}, BallPoint{{0.0, 0.0}});
  const long double ref = 1.0L / std::log(3.0L);
  EXPECT_NEAR(s, static_cast<double>(ref), 1e-12);
  EXPECT_NEAR(s, 0.91024, 1e-5);
  EXPECT_NEAR(static_cast<double>(oracle::similarity_ld({0.5, 0.0}, {0.0, 0.0})), s, 1e-12);
}

TEST(Poincare, CoincidentPointsHitCap) {
  const double s = geodesic_similarity(BallPoint{{0.3, 0.4}}, BallPoint{{0.3, 0.4}});
  const double cap = 1.0 / std::acosh(1.0 + kArcoshMargin);
  EXPECT_DOUBLE_EQ(s, cap);
  // arcosh(1 + x) ~ sqrt(2x); 1 + 1e-12 is itself rounded, hence the relative slack.
  EXPECT_NEAR(s, 1.0 / std::sqrt(2e-12), 1e-4 * s);
  EXPECT_TRUE(std::isfinite(s));
}

TEST(Poincare, SimilaritySymmetricAndMatchesOracle) {
  std::mt19937_64 rng(7);
  for (int k = 0; k < 500; ++k) {
    const auto u = random_ball_point(rng, 3), v = random_ball_point(rng, 3);
    const double a = geodesic_similarity(BallPoint{u}, BallPoint{v});
    const double b = geodesic_similarity(BallPoint{v}, BallPoint{u});
    EXPECT_NEAR(a, b, 1e-12);
    EXPECT_NEAR(a, static_cast<double>(oracle::similarity_ld(u, v)), 1e-9 * std::max(1.0, a));
  }
}

TEST(Poincare, SimilarityDecreasesAlongRay) {
  const std::vector<double> w{0.6, 0.8};
  double prev = std::numeric_limits<double>::infinity();
  for (int k = 1; k <= 9; ++k) {
    const double s = geodesic_similarity(BallPoint{{0.0, 0.0}}, BallPoint{{0.1 * k * w[0], 0.1 * k * w[1]}});
    EXPECT_LT(s, prev);
    prev = s;
  }
}

TEST(Poincare, BoundaryPointsRejected) {
  EXPECT_THROW(geodesic_similarity(BallPoint{{1.0, 0.0}}, BallPoint{{0.0, 0.0}}), DomainError);
  EXPECT_THROW(log_map_origin(BallPoint{{0.6, 0.8}}), DomainError);
  EXPECT_THROW(log_map_origin(BallPoint{{2.0, 0.0}}), DomainError);
  EXPECT_THROW(PoincareBall(0.0), ContractError);
  EXPECT_THROW(PoincareBall(-1.0), ContractError);
}

TEST(Poincare, ExpMapExamples) {
  const auto p = exp_map_origin(TangentVector{{0.5, 0.0}});
  EXPECT_NEAR(p.coords[0], std::tanh(0.5), 1e-15);
  EXPECT_NEAR(p.coords[0], 0.462117, 1e-6);
  EXPECT_EQ(p.coords[1], 0.0);
  const auto o = exp_map_origin(TangentVector{{0.0, 0.0}});
  EXPECT_EQ(o.coords, (std::vector<double>{0.0, 0.0}));
  const auto far = exp_map_origin(TangentVector{{100.0, 0.0}});
  EXPECT_LT(norm(far.coords), 1.0);
}

TEST(Poincare, LogMapExamples) {
  const auto t = log_map_origin(BallPoint{{std::tanh(0.5), 0.0}});
  EXPECT_NEAR(t.coords[0], 0.5, 1e-12);
  EXPECT_NEAR(log_map_origin(BallPoint{{0.462117, 0.0}}).coords[0], 0.5, 1e-6);
  const auto z = log_map_origin(BallPoint{{0.0, 0.0, 0.0}});
  EXPECT_EQ(z.coords, (std::vector<double>{0.0, 0.0, 0.0}));
}

TEST(Poincare, RoundTripLogExp) {
  std::mt19937_64 rng(99);
  double worst = 0.0;
  for (int k = 0; k < 2000; ++k) {
    auto t = random_direction(rng, 4);
    const double r = std::uniform_real_distribution<double>(0.0, 3.0)(rng);
    for (auto& x : t) x *= r;
    const auto back = log_map_origin(exp_map_origin(TangentVector{t}));
    for (std::size_t i = 0; i < t.size(); ++i) worst = std::max(worst, std::abs(back.coords[i] - t[i]));
  }
  EXPECT_LT(worst, 1e-9);
}

TEST(Poincare, RoundTripExpLog) {
  std::mt19937_64 rng(5);
  for (int k = 0; k < 500; ++k) {
    const auto u = random_ball_point(rng, 3, 0.99);
    const auto back = exp_map_origin(log_map_origin(BallPoint{u}));
    for (std::size_t i = 0; i < u.size(); ++i) EXPECT_NEAR(back.coords[i], u[i], 1e-9);
  }
}

TEST(Poincare, MobiusMatvecExamples) {
  const BallPoint u{{0.462117, 0.0}};
  const auto id = mobius_matvec(ad::Matrix::identity(2), u);
  EXPECT_NEAR(id.coords[0], u.coords[0], 1e-12);
  const auto zero = mobius_matvec(ad::Matrix(2, 2), u);
  EXPECT_EQ(zero.coords, (std::vector<double>{0.0, 0.0}));
  ad::Matrix two = ad::Matrix::identity(2);
  two(0, 0) = two(1, 1) = 2.0;
  const auto doubled = mobius_matvec(two, BallPoint{{std::tanh(0.5), 0.0}});
  EXPECT_NEAR(doubled.coords[0], std::tanh(1.0), 1e-12);
  EXPECT_NEAR(doubled.coords[0], 0.761594, 1e-6);
  EXPECT_THROW(mobius_matvec(ad::Matrix(2, 3), u), ShapeError);
}

TEST(Poincare, MobiusBiasExamples) {
  const BallPoint u{{0.2, -0.1}};
  const std::vector<double> zero{0.0, 0.0};
  const auto same = mobius_bias_add(u, zero);
  EXPECT_NEAR(same.coords[0], 0.2, 1e-12);
  EXPECT_NEAR(same.coords[1], -0.1, 1e-12);
  const std::vector<double> b{0.5, 0.0};
  const auto shifted = mobius_bias_add(BallPoint{{0.0, 0.0}}, b);
  EXPECT_NEAR(shifted.coords[0], std::tanh(0.5), 1e-15);
  EXPECT_EQ(mobius_bias_add(u, b).coords, mobius_bias_add(u, b).coords);
  const std::vector<double> wrong{1.0};
  EXPECT_THROW(mobius_bias_add(u, wrong), ShapeError);
}

TEST(Poincare, HyperbolicActivationExamples) {
  const std::vector<double> zero{0.0, 0.0};
  const auto o = hyperbolic_activation(BallPoint{{0.0, 0.0}}, ad::Matrix::identity(2), zero, Activation::tanh);
  EXPECT_NEAR(o.coords[0], 0.0, 1e-15);
  EXPECT_NEAR(o.coords[1], 0.0, 1e-15);
  const auto r = hyperbolic_activation(BallPoint{{std::tanh(0.5), 0.0}}, ad::Matrix::identity(2), zero,
                                       Activation::relu);
  EXPECT_NEAR(r.coords[0], std::tanh(0.5), 1e-12);
  EXPECT_NEAR(r.coords[1], 0.0, 1e-15);
  EXPECT_THROW(parse_activation("gelu"), ContractError);
  EXPECT_EQ(parse_activation("sigmoid"), Activation::sigmoid);
}

TEST(Poincare, OperationsStayInsideBall) {
  std::mt19937_64 rng(17);
  for (double c : {0.5, 1.0, 2.0}) {
    const PoincareBall ball(c);
    for (int k = 0; k < 200; ++k) {
      const auto u = random_ball_point(rng, 3, 0.99 * ball.radius());
      const ad::Matrix w = oracle::random_matrix(3, 3, rng, -5.0, 5.0);
      const auto b = random_direction(rng, 3);
      for (const auto& p : {mobius_matvec(w, BallPoint{u}, ball), mobius_bias_add(BallPoint{u}, b, ball),
                            hyperbolic_activation(BallPoint{u}, w, b, Activation::sigmoid, ball)})
        EXPECT_TRUE(ball.contains(p.coords));
      TangentVector t{random_direction(rng, 3)};
      for (auto& x : t.coords) x *= 50.0;
      EXPECT_LE(norm(exp_map_origin(t, ball).coords), ball.max_norm() + 1e-15);
    }
  }
}

TEST(Poincare, CurvatureRescaling) {
  // sim_c(u, v) = sqrt(c) * sim_1(sqrt(c) u, sqrt(c) v).
  const PoincareBall ball(4.0);
  const double s = geodesic_similarity(BallPoint{{0.25, 0.0}}, BallPoint{{0.0, 0.0}}, ball);
  EXPECT_NEAR(s, 2.0 / std::log(3.0), 1e-12);
  const auto p = exp_map_origin(TangentVector{{0.5, 0.0}}, ball);
  EXPECT_NEAR(p.coords[0], std::tanh(1.0) / 2.0, 1e-15);
}

TEST(Poincare, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(23);
  const PoincareBall ball;
  ad::Matrix um(3, 4), vm(3, 4);
  for (std::size_t r = 0; r < 3; ++r) {
    const auto a = random_ball_point(rng, 4, 0.8), b = random_ball_point(rng, 4, 0.8);
    for (std::size_t j = 0; j < 4; ++j) {
      um(r, j) = a[j];
      vm(r, j) = b[j];
    }
  }
  Tensor u = Tensor::parameter(um), v = Tensor::parameter(vm);
  Tensor t = Tensor::parameter(oracle::random_matrix(3, 4, rng));
  Tensor w = Tensor::parameter(oracle::random_matrix(3, 4, rng, -0.7, 0.7));
  Tensor b = Tensor::parameter(oracle::random_matrix(1, 3, rng, -0.5, 0.5));
  const std::vector<std::pair<const char*, std::function<Tensor()>>> cases = {
      {"geodesic_similarity", [&] { return ad::sum(geodesic_similarity(u, v, ball)); }},
      {"geodesic_similarity_broadcast",
       [&] { return ad::sum(geodesic_similarity(ad::mean_rows(u), v, ball)); }},
      {"exp_map_origin", [&] { return ad::sum(ad::tanh(exp_map_origin(t, ball))); }},
      {"log_map_origin", [&] { return ad::sum(ad::tanh(log_map_origin(u, ball))); }},
      {"mobius_matvec", [&] { return ad::sum(ad::tanh(mobius_matvec(w, u, ball))); }},
      {"mobius_bias_add", [&] { return ad::sum(ad::tanh(mobius_bias_add(mobius_matvec(w, u, ball), b, ball))); }},
      {"hyperbolic_activation_tanh",
       [&] { return ad::sum(ad::tanh(hyperbolic_activation(u, w, b, Activation::tanh, ball))); }},
      {"hyperbolic_activation_sigmoid",
       [&] { return ad::sum(ad::tanh(hyperbolic_activation(u, w, b, Activation::sigmoid, ball))); }},
  };
  for (const auto& [name, f] : cases)
    EXPECT_LT(oracle::check_gradients(f, {u, v, t, w, b}).max_rel_error, 1e-4) << name;
}

TEST(Poincare, ZeroVectorGradientFinite) {
  Tensor t = Tensor::parameter(ad::Matrix(1, 3));
  ad::backward(ad::sum(exp_map_origin(t, PoincareBall{})));
  EXPECT_TRUE(t.grad().all_finite());
}
