#pragma once

#include "errors.hpp"
#include "image.hpp"
#include "rng.hpp"
#include "score_prior.hpp"

#include <cmath>
#include <vector>

namespace calrecon {

/// Geometric variance-exploding noise ladder. sigma(t) for t = 1..T with
/// sigma(1) = sigma_min and sigma(T) = sigma_max; reverse sampling walks
/// t = T down to 1.
class NoiseSchedule
{
public:
  NoiseSchedule() = default;

  /// Stored in increasing-t order.
  explicit NoiseSchedule(std::vector<double> sigmas) : sigmas_(std::move(sigmas))
  {
    if (sigmas_.empty()) { throw InvalidArgument("NoiseSchedule: empty"); }
    for (std::size_t i = 0; i < sigmas_.size(); ++i) {
      if (!(sigmas_[i] > 0.0)) { throw InvalidArgument("NoiseSchedule: sigmas must be positive"); }
      if (i > 0 && !(sigmas_[i] > sigmas_[i - 1])) { throw InvalidArgument("NoiseSchedule: sigmas must increase with t"); }
    }
  }

  std::size_t steps() const noexcept { return sigmas_.size(); }
  /// 1-based t.
  double sigma(std::size_t t) const { return sigmas_.at(t - 1); }
  /// Level after step t, 0 once t = 1.
  double next_sigma(std::size_t t) const { return t > 1 ? sigmas_.at(t - 2) : 0.0; }
  std::vector<double> const &sigmas() const noexcept { return sigmas_; }

private:
  std::vector<double> sigmas_;
};

inline NoiseSchedule build_schedule(std::size_t steps, double sigma_max, double sigma_min)
{
  if (steps < 1) { throw InvalidArgument("build_schedule: need at least one step"); }
  if (!(sigma_min > 0.0 && sigma_max > sigma_min)) { throw InvalidArgument("build_schedule: need sigma_max > sigma_min > 0"); }
  if (steps == 1) { return NoiseSchedule({sigma_max}); }
  std::vector<double> s(steps);
  double const ratio = sigma_max / sigma_min;
  for (std::size_t i = 0; i < steps; ++i) {
    s[i] = sigma_min * std::pow(ratio, static_cast<double>(i) / static_cast<double>(steps - 1));
  }
  s.back() = sigma_max;
  return NoiseSchedule(std::move(s));
}

/// One-step posterior-mean (Tweedie) update: x + sigma^2 * score(x).
inline ComplexImage tweedie_denoise(ComplexImage const &x, Timestep t, ScorePrior const &prior, CalibrationVector const &delta)
{
  if (t.sigma == 0.0) { return x; }
  ComplexImage s = prior.evaluate(x, t, delta);
  if (!all_finite(s.span())) { throw NumericError("tweedie_denoise: score is not finite"); }
  double const s2 = t.sigma * t.sigma;
  ComplexImage out = x;
  for (std::size_t p = 0; p < out.size(); ++p) { out[p] += s2 * s[p]; }
  return out;
}

enum class RenoiseMode
{
  Deterministic,
  Stochastic,
};

/// Transition from the estimate x_hat at level sigma_curr to level
/// sigma_next. Deterministic mode reuses the implied noise direction
/// (x_t - ref) / sigma_curr, where ref defaults to x_hat; stochastic mode
/// draws fresh CN(0, 1) noise.
inline ComplexImage renoise(ComplexImage const &x_hat, ComplexImage const &x_t, double sigma_next, double sigma_curr,
                            RenoiseMode mode, std::uint64_t seed = 0, ComplexImage const *ref = nullptr)
{
  if (!(sigma_next >= 0.0 && sigma_curr > 0.0 && sigma_next <= sigma_curr)) {
    throw InvalidArgument("renoise: need 0 <= sigma_next <= sigma_curr, sigma_curr > 0");
  }
  if (!x_hat.same_shape(x_t)) { throw InvalidArgument("renoise: shape mismatch"); }
  if (sigma_next == 0.0) { return x_hat; }
  ComplexImage out = x_hat;
  if (mode == RenoiseMode::Deterministic) {
    double const r = sigma_next / sigma_curr;
    ComplexImage const &base = ref ? *ref : x_hat;
    if (!base.same_shape(x_t)) { throw InvalidArgument("renoise: shape mismatch"); }
    for (std::size_t p = 0; p < out.size(); ++p) { out[p] += r * (x_t[p] - base[p]); }
  } else {
    CounterRng rng(seed, 0x72656e6full);
    for (std::size_t p = 0; p < out.size(); ++p) { out[p] += sigma_next * rng.complex_normal(); }
  }
  return out;
}

} // namespace calrecon
