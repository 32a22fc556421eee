#pragma once

#include "errors.hpp"
#include "image.hpp"
#include "rng.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <vector>

namespace calrecon {

enum class SureForm
{
  Product,  // residual factor times divergence probe, as in the adaptation loss
  Additive, // classic MC-SURE: residual + 2 s^2 divergence
};

/// Composite denoise + data-fidelity map h(gamma; x).
using RegularizedMap = std::function<ComplexImage(double gamma, ComplexImage const &x)>;

struct SureTerms
{
  double residual_sq = 0.0; // ||x_zf - h(gamma; x)||^2
  double probe = 0.0;       // Re <mu, h(gamma; x + eps mu) - h(gamma; x)>
  double loss = 0.0;
};

/// Monte-Carlo divergence probe Re <mu, h(x + eps mu) - h(x)> with
/// mu ~ CN(0, I) drawn from `seed`. Its expectation is eps * Re tr(J_h) for
/// small eps (exactly so for linear h).
inline double divergence_probe(std::function<ComplexImage(ComplexImage const &)> const &h, ComplexImage const &x,
                               ComplexImage const &h_x, double eps, std::uint64_t seed)
{
  ComplexImage const mu = complex_noise(x.height(), x.width(), seed, 0x6d75ull);
  ComplexImage xp = x;
  xp.axpy(eps, mu);
  ComplexImage const h_p = h(xp);
  if (!all_finite(h_p.span())) { throw NumericError("divergence_probe: non-finite map output"); }
  double acc = 0.0;
  for (std::size_t p = 0; p < x.size(); ++p) { acc += (std::conj(mu[p]) * (h_p[p] - h_x[p])).real(); }
  return acc;
}

/// SURE-style risk of the regularization weight gamma, estimated without
/// ground truth. Product form:
///   ||x_zf - h(gamma; x)||^2 / (N eps) * Re <mu, h(gamma; x + eps mu) - h(gamma; x)>
/// Additive form (noise_var = s^2):
///   ||x_zf - h||^2 / N + 2 s^2 / (N eps) * Re <mu, ...>
/// `h_x`, when given, must equal h(gamma; x) and saves one evaluation.
inline SureTerms sure_loss(double gamma, ComplexImage const &x_t, ComplexImage const &x_zf, RegularizedMap const &h,
                           double eps, std::uint64_t seed, SureForm form = SureForm::Product, double noise_var = 0.0,
                           std::optional<ComplexImage> h_x = std::nullopt)
{
  if (!(eps > 0.0)) { throw InvalidArgument("sure_loss: eps must be > 0"); }
  if (!x_t.same_shape(x_zf)) { throw InvalidArgument("sure_loss: shape mismatch"); }
  ComplexImage const hx = h_x ? std::move(*h_x) : h(gamma, x_t);
  if (!all_finite(hx.span())) { throw NumericError("sure_loss: non-finite map output"); }
  auto const N = static_cast<double>(x_t.size());

  SureTerms out;
  for (std::size_t p = 0; p < hx.size(); ++p) { out.residual_sq += std::norm(x_zf[p] - hx[p]); }
  out.probe = divergence_probe([&](ComplexImage const &z) { return h(gamma, z); }, x_t, hx, eps, seed);
  if (form == SureForm::Product) {
    out.loss = out.residual_sq / (N * eps) * out.probe;
  } else {
    out.loss = out.residual_sq / N + 2.0 * noise_var * out.probe / (N * eps);
  }
  if (!std::isfinite(out.loss)) { throw NumericError("sure_loss: non-finite loss"); }
  return out;
}

/// Sliding-window relative change
///   E = 1 - sum(last k losses) / sum(previous k losses).
/// Empty when fewer than 2k values exist or the older window sums to zero.
inline std::optional<double> convergence_criterion(std::vector<double> const &history, std::size_t k)
{
  if (k == 0 || history.size() < 2 * k) { return std::nullopt; }
  std::size_t const n = history.size();
  double recent = 0.0, older = 0.0;
  for (std::size_t i = n - k; i < n; ++i) { recent += history[i]; }
  for (std::size_t i = n - 2 * k; i < n - k; ++i) { older += history[i]; }
  if (older == 0.0) { return std::nullopt; }
  return 1.0 - recent / older;
}

struct RegAdaptState
{
  double gamma = 1.0;
  std::vector<double> loss_history;
  bool stopped = false;
  std::size_t window = 5;
  double tau_reg = 1e-3;
  double eps_scale = 1e-3; // eps = eps_scale * max|x_t|
  std::uint64_t mc_seed = 0;

  double step_size = 0.05; // in log(gamma)
  double fd_step = 0.05;   // in log(gamma)
  double gamma_min = 1e-4;
  double gamma_max = 1e4;
  double m = 0.0;
  double v = 0.0;
  std::size_t iteration = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
};

/// One finite-difference adaptive-moment step on log(gamma). The loss at
/// the current gamma is appended to the history. A stopped state is
/// returned unchanged.
inline RegAdaptState update_gamma(RegAdaptState state, std::function<double(double)> const &loss_fn)
{
  if (state.stopped) { return state; }
  double const u = std::log(state.gamma);
  double const l0 = loss_fn(state.gamma);
  double const lp = loss_fn(std::exp(u + state.fd_step));
  double const lm = loss_fn(std::exp(u - state.fd_step));
  if (!std::isfinite(l0) || !std::isfinite(lp) || !std::isfinite(lm)) { throw NumericError("update_gamma: non-finite loss"); }
  double const g = (lp - lm) / (2.0 * state.fd_step);

  double const k = static_cast<double>(state.iteration + 1);
  state.m = state.beta1 * state.m + (1.0 - state.beta1) * g;
  state.v = state.beta2 * state.v + (1.0 - state.beta2) * g * g;
  double const mh = state.m / (1.0 - std::pow(state.beta1, k));
  double const vh = state.v / (1.0 - std::pow(state.beta2, k));
  double const step = vh > 0.0 ? state.step_size * mh / (std::sqrt(vh) + 1e-12) : 0.0;
  state.gamma = std::clamp(std::exp(u - step), state.gamma_min, state.gamma_max);
  state.loss_history.push_back(l0);
  ++state.iteration;
  return state;
}

/// Applies the early-stop rule to the latest history; returns E when ready.
/// Stops once the relative change is below tau_reg in magnitude, so a rising
/// loss (E < 0) keeps adapting.
inline std::optional<double> check_early_stop(RegAdaptState &state)
{
  auto const e = convergence_criterion(state.loss_history, state.window);
  if (e && std::abs(*e) < state.tau_reg) { state.stopped = true; }
  return e;
}

} // namespace calrecon
