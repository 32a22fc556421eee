#include "support.hpp"

#include <Eigen/Dense>
#include <gtest/gtest.h>

using namespace calrecon;
using namespace testing_support;

namespace {

using Mat = Eigen::MatrixXcd;
using Vec = Eigen::VectorXcd;

Vec to_vec(ComplexImage const &x)
{
  Vec v(static_cast<Eigen::Index>(x.size()));
  for (std::size_t i = 0; i < x.size(); ++i) { v(static_cast<Eigen::Index>(i)) = x[i]; }
  return v;
}

ComplexImage from_vec(Vec const &v, std::size_t h, std::size_t w)
{
  ComplexImage x(h, w);
  for (std::size_t i = 0; i < x.size(); ++i) { x[i] = v(static_cast<Eigen::Index>(i)); }
  return x;
}

struct MatrixOp
{
  Mat m;
  std::size_t h, w;
  ComplexImage operator()(ComplexImage const &x) const { return from_vec(m * to_vec(x), h, w); }
};

Mat random_hpd(std::size_t n, std::uint64_t seed)
{
  CounterRng rng(seed, 3);
  Mat b(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < b.rows(); ++i) {
    for (Eigen::Index j = 0; j < b.cols(); ++j) { b(i, j) = rng.complex_normal(); }
  }
  return b.adjoint() * b + Mat::Identity(b.rows(), b.cols());
}

double p3_objective(ComplexImage const &x, ComplexImage const &x_dot, MultiCoilKSpace const &y, ForwardOperator const &op,
                    double gamma)
{
  auto const ax = apply_forward(x, op);
  double r = 0.0;
  for (std::size_t i = 0; i < ax.span().size(); ++i) { r += std::norm(y.span()[i] - ax.span()[i]); }
  return 0.5 * gamma * r + 0.5 * norm2_squared((x_dot - x).span());
}

} // namespace

TEST(Cg, IdentityOneIteration)
{
  auto const b = random_image(8, 8, 1);
  auto const r = cg_solve([](ComplexImage const &x) { return x; }, b, ComplexImage(8, 8), CgConfig{});
  EXPECT_EQ(r.iters, 1u);
  EXPECT_LE(max_abs_diff(r.solution, b), 1e-15);
  EXPECT_TRUE(r.converged);
}

TEST(Cg, TwoByTwo)
{
  MatrixOp op{Mat(2, 2), 1, 2};
  op.m << 2, 1, 1, 2;
  ComplexImage b(1, 2);
  b[0] = 1.0;
  b[1] = 1.0;
  auto const r = cg_solve(op, b, ComplexImage(1, 2), CgConfig{10, 1e-14});
  EXPECT_NEAR(std::abs(r.solution[0] - 1.0 / 3.0), 0.0, 1e-14);
  EXPECT_NEAR(std::abs(r.solution[1] - 1.0 / 3.0), 0.0, 1e-14);
}

TEST(Cg, MatchesDenseFactorization)
{
  MatrixOp const op{random_hpd(64, 2), 8, 8};
  auto const b = random_image(8, 8, 3);
  auto const r = cg_solve(op, b, ComplexImage(8, 8), CgConfig{500, 1e-14});
  Vec const ref = op.m.llt().solve(to_vec(b));
  EXPECT_LE((to_vec(r.solution) - ref).norm() / ref.norm(), 1e-8);
}

TEST(Cg, ZeroRhs)
{
  auto const r = cg_solve([](ComplexImage const &x) { return 2.0 * x; }, ComplexImage(4, 4), random_image(4, 4, 1), CgConfig{});
  EXPECT_EQ(max_abs(r.solution), 0.0);
  EXPECT_EQ(r.iters, 0u);
}

TEST(Cg, BreakdownOnIndefiniteOperator)
{
  auto const b = random_image(4, 4, 1);
  EXPECT_THROW(cg_solve([](ComplexImage const &x) { return -1.0 * x; }, b, ComplexImage(4, 4), CgConfig{}), NumericError);
}

TEST(Cg, ConfigValidation)
{
  auto const b = random_image(4, 4, 1);
  auto id = [](ComplexImage const &x) { return x; };
  EXPECT_THROW(cg_solve(id, b, ComplexImage(4, 4), CgConfig{0, 1e-6}), InvalidArgument);
  EXPECT_THROW(cg_solve(id, b, ComplexImage(4, 4), CgConfig{5, 0.0}), InvalidArgument);
  EXPECT_THROW(cg_solve(id, b, ComplexImage(4, 5), CgConfig{}), InvalidArgument);
}

TEST(Cg, NonConvergedReportsResidual)
{
  MatrixOp const op{random_hpd(64, 4), 8, 8};
  auto const b = random_image(8, 8, 5);
  auto const r = cg_solve(op, b, ComplexImage(8, 8), CgConfig{2, 1e-14});
  EXPECT_EQ(r.iters, 2u);
  EXPECT_FALSE(r.converged);
  EXPECT_NEAR(r.residual, norm2(b - op(r.solution)) / norm2(b), 1e-10);
}

TEST(SolveP3, ZeroGammaIsProximityOnly)
{
  auto const op = ForwardOperator(generate_mask(MaskKind::Gaussian1D, 16, 16, 4, 0.125, 1), synth_coil_maps(2, 16, 16, 1));
  auto const x_dot = random_image(16, 16, 1);
  auto const r = solve_p3(x_dot, random_kspace(2, 16, 16, 2), op, 0.0, CgConfig{});
  EXPECT_EQ(r.image, x_dot);
  EXPECT_THROW(solve_p3(x_dot, random_kspace(2, 16, 16, 2), op, -1.0, CgConfig{}), InvalidArgument);
}

TEST(SolveP3, FullMaskSingleCoilClosedForm)
{
  ForwardOperator const op(full_mask(16, 16), unit_coil(16, 16));
  auto const x_dot = random_image(16, 16, 1);
  auto const y = random_kspace(1, 16, 16, 2);
  double const g = 2.5;
  auto const r = solve_p3(x_dot, y, op, g, CgConfig{20, 1e-12});
  ComplexImage k(16, 16);
  for (std::size_t i = 0; i < k.size(); ++i) { k[i] = y.span()[i]; }
  auto const expect = (1.0 / (1.0 + g)) * (g * ifft2c(k) + x_dot);
  EXPECT_LE(max_abs_diff(r.image, expect), 1e-12);
}

TEST(SolveP3, NormalEquationResidualAndDenseSolve)
{
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    auto const op = ForwardOperator(generate_mask(MaskKind::Gaussian1D, 12, 12, 3, 0.17, seed), synth_coil_maps(3, 12, 12, seed));
    auto const x_dot = random_image(12, 12, seed + 10);
    auto const y = add_noise(apply_forward(random_image(12, 12, seed + 20), op), op.mask, 0.1, seed);
    double const g = 0.3 + seed;
    auto const r = solve_p3(x_dot, y, op, g, CgConfig{500, 1e-13});
    ProximalNormalOperator const N{op, g};
    ComplexImage rhs = g * apply_adjoint(y, op) + x_dot;
    EXPECT_LE(norm2(N(r.image) - rhs) / norm2(rhs), 1e-8);

    auto const dense = dense_matrix(N, 12, 12);
    Mat M(144, 144);
    for (Eigen::Index i = 0; i < 144; ++i) {
      for (Eigen::Index j = 0; j < 144; ++j) { M(i, j) = dense[static_cast<std::size_t>(i * 144 + j)]; }
    }
    Vec const ref = M.llt().solve(to_vec(rhs));
    EXPECT_LE((to_vec(r.image) - ref).norm() / ref.norm(), 1e-8);
  }
}

TEST(SolveP3, ResidualNonIncreasing)
{
  // Holds for the weights the pipeline starts from; plain CG only guarantees
  // it for the error in the operator norm (next test), and at gamma = 10 the
  // residual does rise on this setup.
  for (double g : {0.1, 0.5, 1.0, 2.0, 5.0}) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      auto const op = ForwardOperator(generate_mask(MaskKind::Gaussian1D, 32, 32, 4, 0.08, seed), synth_coil_maps(4, 32, 32, seed));
      ProximalNormalOperator const N{op, g};
      auto const rhs = random_image(32, 32, seed);
      auto const r = cg_solve(N, rhs, ComplexImage(32, 32), CgConfig{60, 1e-14});
      for (std::size_t i = 1; i < r.residuals.size(); ++i) {
        ASSERT_LE(r.residuals[i], r.residuals[i - 1]) << "gamma " << g << " seed " << seed << " iteration " << i;
      }
    }
  }
}

TEST(SolveP3, EnergyNormErrorNonIncreasing)
{
  auto const op = ForwardOperator(generate_mask(MaskKind::Gaussian1D, 16, 16, 4, 0.125, 2), synth_coil_maps(4, 16, 16, 2));
  for (double g : {1.0, 10.0, 1000.0}) {
    ProximalNormalOperator const N{op, g};
    auto const rhs = random_image(16, 16, 3);
    auto const exact = cg_solve(N, rhs, ComplexImage(16, 16), CgConfig{2000, 1e-15}).solution;
    double prev = std::numeric_limits<double>::infinity();
    for (std::size_t it = 1; it <= 25; ++it) {
      auto const x = cg_solve(N, rhs, ComplexImage(16, 16), CgConfig{it, 1e-15}).solution;
      auto const e = x - exact;
      double const en = dot(e, N(e)).real();
      EXPECT_LE(en, prev * (1.0 + 1e-9) + 1e-24) << "gamma " << g << " iteration " << it;
      prev = en;
    }
  }
}

TEST(SolveP3, LargeGammaFullSamplingApproachesAdjoint)
{
  ForwardOperator const op(full_mask(16, 16), synth_coil_maps(4, 16, 16, 3));
  auto const y = random_kspace(4, 16, 16, 4);
  auto const r = solve_p3(random_image(16, 16, 5), y, op, 1e6, CgConfig{50, 1e-12});
  auto const ahy = apply_adjoint(y, op);
  EXPECT_LE(rel_err(r.image, ahy), 1e-3);
}

TEST(SolveP3, FirstOrderOptimality)
{
  auto const op = ForwardOperator(generate_mask(MaskKind::Gaussian1D, 16, 16, 4, 0.125, 9), synth_coil_maps(4, 16, 16, 9));
  auto const x_dot = random_image(16, 16, 1);
  auto const y = random_kspace(4, 16, 16, 2);
  double const g = 1.7;
  auto const r = solve_p3(x_dot, y, op, g, CgConfig{200, 1e-13});
  double const f0 = p3_objective(r.image, x_dot, y, op, g);
  for (std::uint64_t s = 0; s < 20; ++s) {
    auto d = random_image(16, 16, 100 + s);
    for (double e : {1e-2, 1e-4}) {
      EXPECT_GE(p3_objective(r.image + e * d, x_dot, y, op, g), f0 - 1e-12 * f0);
      EXPECT_GE(p3_objective(r.image - e * d, x_dot, y, op, g), f0 - 1e-12 * f0);
    }
  }
}
