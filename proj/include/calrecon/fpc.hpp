#pragma once

#include "cg.hpp"
#include "errors.hpp"
#include "forward_model.hpp"
#include "mask.hpp"
#include "rng.hpp"
#include "sampler.hpp"
#include "score_prior.hpp"

#include <cmath>
#include <functional>
#include <vector>

namespace calrecon {

/// Split of a sampling mask into a training part (lambda) and a held-out
/// part (gamma_mask): lambda + gamma_mask = mask and lambda * gamma_mask = 0.
struct MaskPartition
{
  SamplingMask lambda_mask;
  SamplingMask gamma_mask;
  std::uint64_t split_seed = 0;
  std::size_t attempts = 1;
};

/// Assigns each sampled k-space point to the held-out set independently with
/// probability proportional to a centred 2-D Gaussian (std H/4, W/4),
/// normalized so the expected held-out count is holdout_fraction times the
/// sampled count (probabilities capped at 1). Redraws on a fresh substream
/// when either side comes out empty.
inline MaskPartition partition_mask(SamplingMask const &mask, double holdout_fraction, std::uint64_t seed)
{
  if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) {
    throw InvalidArgument("partition_mask: holdout_fraction must be in (0, 1)");
  }
  std::size_t const n_sampled = mask.sampled();
  if (n_sampled < 2) { throw InvalidArgument("partition_mask: mask needs at least two sampled entries"); }

  std::size_t const h = mask.height, w = mask.width;
  double const sy = std::max(1.0, static_cast<double>(h) / 4.0);
  double const sx = std::max(1.0, static_cast<double>(w) / 4.0);
  std::vector<double> g(h * w, 0.0);
  double gsum = 0.0;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      if (!mask.bits[y * w + x]) { continue; }
      double const dy = (static_cast<double>(y) - static_cast<double>(h / 2)) / sy;
      double const dx = (static_cast<double>(x) - static_cast<double>(w / 2)) / sx;
      g[y * w + x] = std::exp(-0.5 * (dy * dy + dx * dx));
      gsum += g[y * w + x];
    }
  }
  double const scale = holdout_fraction * static_cast<double>(n_sampled) / gsum;

  constexpr std::size_t kMaxAttempts = 8;
  for (std::size_t attempt = 0; attempt < kMaxAttempts; ++attempt) {
    CounterRng rng(seed, 0x73706c6974ull + attempt);
    MaskPartition part{mask, mask, seed, attempt + 1};
    std::size_t n_gamma = 0;
    for (std::size_t i = 0; i < h * w; ++i) {
      double const u = rng.uniform();
      if (!mask.bits[i]) { continue; }
      bool const held = u < std::min(1.0, scale * g[i]);
      part.gamma_mask.bits[i] = held ? 1 : 0;
      part.lambda_mask.bits[i] = held ? 0 : 1;
      n_gamma += held;
    }
    if (n_gamma > 0 && n_gamma < n_sampled) { return part; }
  }
  throw NumericError("partition_mask: could not draw a non-empty partition in 8 attempts");
}

/// Inputs of the self-supervised calibration loss that do not change while
/// delta is being optimized within one reverse step.
struct SslProblem
{
  MultiCoilKSpace const &y_lambda;
  ForwardOperator const &op_lambda;
  MultiCoilKSpace const &y_gamma;
  ForwardOperator const &op_gamma;
  double gamma = 1.0;
  CgConfig cg;
  double tau = 1.0;
};

/// One denoise step followed by one data-fidelity step against the lambda
/// data, starting from the lambda-only iterate.
inline ComplexImage ssl_reconstruction(CalibrationVector const &delta, SslProblem const &prob,
                                       ComplexImage const &x_lambda_t, Timestep t, ScorePrior const &prior)
{
  ComplexImage const x_dot = tweedie_denoise(x_lambda_t, t, prior, delta);
  return solve_p3(x_dot, prob.y_lambda, prob.op_lambda, prob.gamma, prob.cg).image;
}

/// tau/2 ||y_gamma - A_gamma f(delta; x_lambda_t, t)||^2
inline double ssl_loss(CalibrationVector const &delta, SslProblem const &prob, ComplexImage const &x_lambda_t, Timestep t,
                       ScorePrior const &prior)
{
  if (!(prob.tau > 0.0)) { throw InvalidArgument("ssl_loss: tau must be > 0"); }
  ComplexImage const f = ssl_reconstruction(delta, prob, x_lambda_t, t, prior);
  MultiCoilKSpace const pred = apply_forward(f, prob.op_gamma);
  double acc = 0.0;
  auto const &bits = prob.op_gamma.mask.bits;
  std::size_t const n = pred.plane();
  for (std::size_t c = 0; c < pred.coils(); ++c) {
    auto const yc = prob.y_gamma.coil(c);
    auto const pc = pred.coil(c);
    for (std::size_t p = 0; p < n; ++p) {
      if (bits[p]) { acc += std::norm(yc[p] - pc[p]); }
    }
  }
  double const loss = 0.5 * prob.tau * acc;
  if (!std::isfinite(loss)) { throw NumericError("ssl_loss: non-finite loss"); }
  return loss;
}

/// -log N(delta | 1, I) up to a constant.
inline double delta_penalty(CalibrationVector const &delta)
{
  double acc = 0.0;
  for (double d : delta.packed()) { acc += (d - 1.0) * (d - 1.0); }
  return 0.5 * acc;
}

enum class GradientEstimator
{
  CentralDifference,
  Spsa,
};

enum class UpdateRule
{
  Plain,
  Adam,
};

struct DeltaOptState
{
  CalibrationVector delta;
  double step_size = 0.05;
  std::size_t iteration = 0;
  std::vector<double> loss_history;

  GradientEstimator estimator = GradientEstimator::CentralDifference;
  UpdateRule rule = UpdateRule::Adam;
  double fd_step = 1e-2;
  std::uint64_t seed = 0;

  std::vector<double> m;
  std::vector<double> v;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

using DeltaObjective = std::function<double(CalibrationVector const &)>;

/// One derivative-free step on delta. The objective is evaluated at the
/// current delta (appended to loss_history) and at perturbed points; the
/// gradient estimate then drives a plain or adaptive-moment step, and the
/// result is clamped into [0, 2]. Perturbations are kept inside the box, so
/// differences shrink to one-sided at the bounds.
inline DeltaOptState update_delta(DeltaOptState state, DeltaObjective const &objective)
{
  std::size_t const n = state.delta.size();
  if (n == 0) {
    state.loss_history.push_back(objective(state.delta));
    ++state.iteration;
    return state;
  }
  auto const &d0 = state.delta.packed();
  double const f0 = objective(state.delta);
  std::vector<double> grad(n, 0.0);
  std::size_t finite = 0, attempted = 0;

  auto eval_pair = [&](std::vector<double> const &dir) -> std::pair<double, bool> {
    std::vector<double> plus(d0), minus(d0);
    for (std::size_t i = 0; i < n; ++i) {
      plus[i] = std::clamp(d0[i] + state.fd_step * dir[i], CalibrationVector::kMin, CalibrationVector::kMax);
      minus[i] = std::clamp(d0[i] - state.fd_step * dir[i], CalibrationVector::kMin, CalibrationVector::kMax);
    }
    double const fp = objective(CalibrationVector(plus));
    double const fm = objective(CalibrationVector(minus));
    ++attempted;
    if (!std::isfinite(fp) || !std::isfinite(fm)) { return {0.0, false}; }
    ++finite;
    // Per-coordinate spans are the actual distance between the two points.
    for (std::size_t i = 0; i < n; ++i) {
      double const span = plus[i] - minus[i];
      if (dir[i] != 0.0 && span != 0.0) { grad[i] += (fp - fm) / span; }
    }
    return {fp - fm, true};
  };

  if (state.estimator == GradientEstimator::CentralDifference) {
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> dir(n, 0.0);
      dir[i] = 1.0;
      eval_pair(dir);
    }
  } else {
    CounterRng rng(state.seed, 0x73707361ull + state.iteration);
    std::vector<double> dir(n);
    for (auto &d : dir) { d = (rng.next_u64() & 1u) ? 1.0 : -1.0; }
    eval_pair(dir);
  }
  if (attempted > 0 && finite == 0) { throw NumericError("update_delta: every perturbed objective was non-finite"); }

  std::vector<double> next(d0);
  if (state.rule == UpdateRule::Plain) {
    for (std::size_t i = 0; i < n; ++i) { next[i] -= state.step_size * grad[i]; }
  } else {
    if (state.m.size() != n) { state.m.assign(n, 0.0); }
    if (state.v.size() != n) { state.v.assign(n, 0.0); }
    double const k = static_cast<double>(state.iteration + 1);
    double const c1 = 1.0 - std::pow(state.beta1, k);
    double const c2 = 1.0 - std::pow(state.beta2, k);
    for (std::size_t i = 0; i < n; ++i) {
      state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grad[i];
      state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grad[i] * grad[i];
      next[i] -= state.step_size * (state.m[i] / c1) / (std::sqrt(state.v[i] / c2) + state.eps);
    }
  }
  state.delta = CalibrationVector::clamped(std::move(next));
  state.loss_history.push_back(f0);
  ++state.iteration;
  return state;
}

} // namespace calrecon
