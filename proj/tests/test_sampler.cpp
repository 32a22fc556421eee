#include "support.hpp"

#include <gtest/gtest.h>

using namespace calrecon;
using namespace testing_support;

TEST(Schedule, HundredSteps)
{
  auto const s = build_schedule(100, 1.0, 0.01);
  EXPECT_EQ(s.steps(), 100u);
  EXPECT_DOUBLE_EQ(s.sigma(1), 0.01);
  EXPECT_DOUBLE_EQ(s.sigma(100), 1.0);
}

TEST(Schedule, SingleStepIsSigmaMax)
{
  auto const s = build_schedule(1, 2.5, 0.1);
  ASSERT_EQ(s.steps(), 1u);
  EXPECT_EQ(s.sigma(1), 2.5);
  EXPECT_EQ(s.next_sigma(1), 0.0);
}

TEST(Schedule, ThreeStepGeometric)
{
  auto const s = build_schedule(3, 1.0, 0.01);
  EXPECT_NEAR(s.sigma(1), 0.01, 1e-15);
  EXPECT_NEAR(s.sigma(2), 0.1, 1e-15);
  EXPECT_NEAR(s.sigma(3), 1.0, 1e-15);
  EXPECT_NEAR(s.next_sigma(3), 0.1, 1e-15);
}

TEST(Schedule, MonotoneForRandomParameters)
{
  CounterRng rng(5, 0);
  for (int trial = 0; trial < 200; ++trial) {
    std::size_t const T = 1 + rng.below(300);
    double const lo = std::exp(rng.uniform(-12, 0));
    double const hi = lo * std::exp(rng.uniform(1e-3, 10));
    auto const s = build_schedule(T, hi, lo);
    ASSERT_EQ(s.steps(), T);
    for (std::size_t t = 2; t <= T; ++t) { ASSERT_GT(s.sigma(t), s.sigma(t - 1)); }
    ASSERT_GT(s.sigma(1), 0.0);
  }
}

TEST(Schedule, InvalidBounds)
{
  EXPECT_THROW(build_schedule(0, 1, 0.1), InvalidArgument);
  EXPECT_THROW(build_schedule(10, 0.1, 0.1), InvalidArgument);
  EXPECT_THROW(build_schedule(10, 1, 0.0), InvalidArgument);
  EXPECT_THROW(NoiseSchedule({0.1, 0.1}), InvalidArgument);
}

TEST(Tweedie, WhitePriorIsExactMmse)
{
  GaussianPrior const prior(GaussianPriorParams::white(16, 16));
  auto const x = random_image(16, 16, 1);
  auto const s = build_schedule(100, 1.0, 0.01);
  for (std::size_t t = 1; t <= 100; ++t) {
    double const sg = s.sigma(t);
    auto const out = tweedie_denoise(x, {t, sg}, prior, {});
    EXPECT_LE(max_abs_diff(out, (1.0 / (1.0 + sg * sg)) * x), 1e-12);
  }
}

TEST(Tweedie, ZeroSigmaIsIdentity)
{
  GaussianPrior const prior(GaussianPriorParams::white(8, 8));
  auto const x = random_image(8, 8, 2);
  EXPECT_EQ(tweedie_denoise(x, {1, 0.0}, prior, {}), x);
}

TEST(Tweedie, FixedAtTheMean)
{
  auto p = GaussianPriorParams::white(8, 8, 2.0);
  p.mean = random_image(8, 8, 3);
  GaussianPrior const prior(p);
  EXPECT_LE(max_abs_diff(tweedie_denoise(p.mean, {4, 0.7}, prior, {}), p.mean), 1e-15);
}

namespace {

class NanPrior final : public ScorePrior
{
public:
  ComplexImage evaluate(ComplexImage const &x, Timestep, CalibrationVector const &) const override
  {
    ComplexImage s(x.height(), x.width());
    s[0] = std::nan("");
    return s;
  }
  std::size_t layer_count() const override { return 0; }
  std::string name() const override { return "nan"; }
};

} // namespace

TEST(Tweedie, NonFiniteScoreIsNumericError)
{
  EXPECT_THROW(tweedie_denoise(random_image(4, 4, 1), {1, 0.5}, NanPrior{}, {}), NumericError);
}

TEST(Renoise, ZeroNextLevelReturnsEstimate)
{
  auto const xh = random_image(8, 8, 1), xt = random_image(8, 8, 2);
  EXPECT_EQ(renoise(xh, xt, 0.0, 0.5, RenoiseMode::Deterministic), xh);
  EXPECT_EQ(renoise(xh, xt, 0.0, 0.5, RenoiseMode::Stochastic, 9), xh);
}

TEST(Renoise, DeterministicIgnoresSeedAndFollowsDirection)
{
  auto const xh = random_image(8, 8, 1), xt = random_image(8, 8, 2);
  auto const a = renoise(xh, xt, 0.2, 0.5, RenoiseMode::Deterministic, 1);
  auto const b = renoise(xh, xt, 0.2, 0.5, RenoiseMode::Deterministic, 2);
  EXPECT_EQ(a, b);
  EXPECT_LE(max_abs_diff(a, xh + 0.4 * (xt - xh)), 1e-15);
  auto const ref = random_image(8, 8, 3);
  EXPECT_LE(max_abs_diff(renoise(xh, xt, 0.2, 0.5, RenoiseMode::Deterministic, 0, &ref), xh + 0.4 * (xt - ref)), 1e-15);
}

TEST(Renoise, StochasticStd)
{
  ComplexImage const z(400, 250);
  auto const out = renoise(z, z, 0.3, 1.0, RenoiseMode::Stochastic, 5);
  double acc = 0.0;
  for (auto v : out.span()) { acc += std::norm(v); }
  EXPECT_NEAR(std::sqrt(acc / static_cast<double>(z.size())), 0.3, 0.3 * 0.02);
}

TEST(Renoise, OrderingChecked)
{
  auto const x = random_image(4, 4, 1);
  EXPECT_THROW(renoise(x, x, 0.6, 0.5, RenoiseMode::Deterministic), InvalidArgument);
  EXPECT_THROW(renoise(x, x, 0.1, 0.0, RenoiseMode::Deterministic), InvalidArgument);
}

TEST(ReversePass, PriorOnlyConvergesToMean)
{
  // Deterministic VE reverse pass with the analytic prior, no data term.
  auto p = GaussianPriorParams::white(16, 16, 1e-8);
  PhantomSpec ps;
  ps.size = 16;
  p.mean = make_phantom(ps);
  GaussianPrior const prior(p);
  auto const s = build_schedule(100, 1.0, 1e-3);
  ComplexImage x = random_image(16, 16, 4);
  for (std::size_t t = 100; t >= 1; --t) {
    auto const xh = tweedie_denoise(x, {t, s.sigma(t)}, prior, {});
    x = renoise(xh, x, s.next_sigma(t), s.sigma(t), RenoiseMode::Deterministic);
  }
  EXPECT_LE(rel_err(x, p.mean), 1e-3);
}
