#pragma once

#include "cg.hpp"
#include "errors.hpp"
#include "forward_model.hpp"
#include "fpc.hpp"
#include "metrics.hpp"
#include "rpa.hpp"
#include "sampler.hpp"
#include "score_prior.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

namespace calrecon {

struct ReconConfig
{
  // schedule
  std::size_t steps = 100;
  double sigma_max = 1.0;
  double sigma_min = 0.01;
  RenoiseMode renoise = RenoiseMode::Deterministic;
  // Noise direction for deterministic renoising: from the denoised estimate
  // (before the data step) or from the data-consistent estimate.
  bool noise_from_denoised = false;
  bool init_from_zero_filled = false; // x^T = x_zf + sigma_T noise instead of pure noise

  double gamma_init = 1.0;
  double delta_init = 1.0;
  CgConfig cg;

  // FPC
  bool enable_fpc = true;
  double holdout_fraction = 0.2;
  double tau = 1.0;
  bool redraw_partition = false;
  double delta_step = 0.05;
  GradientEstimator delta_estimator = GradientEstimator::CentralDifference;
  UpdateRule delta_rule = UpdateRule::Adam;
  double delta_fd_step = 1e-2;

  // RPA
  bool enable_rpa = true;
  double tau_reg = 1e-3;
  std::size_t window = 5;
  SureForm sure_form = SureForm::Product;
  double sure_noise_var = 0.0; // additive form only
  double sure_eps_scale = 1e-3;
  double gamma_step = 0.05;
  double gamma_fd_step = 0.05;

  // Only consumed when the CLI builds a network prior.
  double band_radius = 0.25;

  std::uint64_t mask_seed = 0;
  std::uint64_t partition_seed = 1;
  std::uint64_t mc_seed = 2;
  std::uint64_t noise_seed = 3;

  void validate() const
  {
    if (steps < 1) { throw InvalidArgument("ReconConfig: steps must be >= 1"); }
    if (!(sigma_min > 0.0 && sigma_max > sigma_min)) { throw InvalidArgument("ReconConfig: need sigma_max > sigma_min > 0"); }
    // gamma = 0 (prior only) is allowed as long as nothing adapts it in log space.
    if (!(gamma_init > 0.0 || (gamma_init == 0.0 && !enable_rpa))) {
      throw InvalidArgument("ReconConfig: gamma_init must be > 0 (or 0 with adaptation off)");
    }
    if (!(delta_init >= CalibrationVector::kMin && delta_init <= CalibrationVector::kMax)) {
      throw InvalidArgument("ReconConfig: delta_init must be in [0, 2]");
    }
    if (!(tau > 0.0)) { throw InvalidArgument("ReconConfig: tau must be > 0"); }
    if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) { throw InvalidArgument("ReconConfig: holdout_fraction must be in (0, 1)"); }
    if (window < 1) { throw InvalidArgument("ReconConfig: window must be >= 1"); }
    if (!(band_radius > 0.0)) { throw InvalidArgument("ReconConfig: band_radius must be > 0"); }
    cg.validate();
  }
};

struct StepRecord
{
  std::size_t t = 0;
  double sigma = 0.0;
  std::vector<double> delta; // in effect for this step's denoise
  double gamma = 0.0;        // in effect for this step's data-fidelity solve
  double ssl_loss = std::numeric_limits<double>::quiet_NaN();
  double reg_loss = std::numeric_limits<double>::quiet_NaN();
  double criterion = std::numeric_limits<double>::quiet_NaN();
  bool gamma_stopped = false;
  double cg_residual = 0.0;
  std::size_t cg_iters = 0;
};

struct ReconReport
{
  std::vector<StepRecord> steps;
  ComplexImage image;
  std::optional<ComplexImage> reference;
  std::optional<double> psnr;
  std::optional<double> ssim;
  double wall_seconds = 0.0;
  std::string prior_name;
  std::size_t gamma_stop_step = 0; // t at which gamma froze, 0 if never
};

/// Numeric failure inside reconstruct(); carries the records gathered so far.
class ReconAborted : public NumericError
{
public:
  ReconAborted(std::string const &what, ReconReport partial) : NumericError(what), partial_(std::move(partial)) {}
  ReconReport const &partial() const noexcept { return partial_; }

private:
  ReconReport partial_;
};

/// Keeps only the entries selected by `mask`.
inline MultiCoilKSpace restrict_kspace(MultiCoilKSpace y, SamplingMask const &mask)
{
  for (std::size_t c = 0; c < y.coils(); ++c) {
    auto plane = y.coil(c);
    for (std::size_t p = 0; p < plane.size(); ++p) {
      if (!mask.bits[p]) { plane[p] = Cx{}; }
    }
  }
  return y;
}

namespace detail {

inline std::uint64_t step_seed(std::uint64_t seed, std::size_t t, std::uint64_t salt)
{
  return splitmix64(seed ^ splitmix64(salt + static_cast<std::uint64_t>(t)));
}

struct FpcContext
{
  MaskPartition part;
  MultiCoilKSpace y_lambda;
  MultiCoilKSpace y_gamma;
  ForwardOperator op_lambda;
  ForwardOperator op_gamma;

  FpcContext(MultiCoilKSpace const &y, ForwardOperator const &op, double holdout, std::uint64_t seed)
    : part(partition_mask(op.mask, holdout, seed)), y_lambda(restrict_kspace(y, part.lambda_mask)),
      y_gamma(restrict_kspace(y, part.gamma_mask)), op_lambda(op.with_mask(part.lambda_mask)),
      op_gamma(op.with_mask(part.gamma_mask))
  {
  }
};

} // namespace detail

/// Alternating reverse-diffusion reconstruction. For t = T..1:
///   P1  one derivative-free step on delta against the held-out loss (FPC)
///   P2  Tweedie denoise with the calibrated prior
///   P3  proximal data-fidelity solve with weight gamma
///   RPA one SURE-driven step on gamma plus the sliding-window stop test
/// then renoise to the next level. The FPC loss is evaluated on a shadow
/// iterate that only ever sees the lambda part of the data.
inline ReconReport reconstruct(MultiCoilKSpace const &y, ForwardOperator const &op, ScorePrior const &prior,
                               ReconConfig const &cfg, std::optional<ComplexImage> reference = std::nullopt)
{
  cfg.validate();
  if (y.coils() != op.coils() || y.height() != op.height() || y.width() != op.width()) {
    throw InvalidArgument("reconstruct: k-space and operator shapes differ");
  }
  if (reference && (reference->height() != op.height() || reference->width() != op.width())) {
    throw InvalidArgument("reconstruct: reference shape differs");
  }
  auto const t_start = std::chrono::steady_clock::now();
  std::size_t const L = prior.layer_count();
  NoiseSchedule const sched = build_schedule(cfg.steps, cfg.sigma_max, cfg.sigma_min);
  std::size_t const T = sched.steps();

  ReconReport report;
  report.prior_name = prior.name();
  report.reference = reference;

  ComplexImage const x_zf = zero_filled(y, op);
  ComplexImage x = complex_noise(op.height(), op.width(), cfg.noise_seed, 0x696e6974ull);
  x *= sched.sigma(T);
  if (cfg.init_from_zero_filled) { x += x_zf; }

  DeltaOptState dstate;
  dstate.delta = CalibrationVector(std::vector<double>(2 * L, cfg.delta_init));
  dstate.step_size = cfg.delta_step;
  dstate.estimator = cfg.delta_estimator;
  dstate.rule = cfg.delta_rule;
  dstate.fd_step = cfg.delta_fd_step;
  dstate.seed = splitmix64(cfg.partition_seed ^ 0x64656c7461ull);

  RegAdaptState gstate;
  gstate.gamma = cfg.gamma_init;
  gstate.window = cfg.window;
  gstate.tau_reg = cfg.tau_reg;
  gstate.eps_scale = cfg.sure_eps_scale;
  gstate.mc_seed = cfg.mc_seed;
  gstate.step_size = cfg.gamma_step;
  gstate.fd_step = cfg.gamma_fd_step;

  bool const fpc = cfg.enable_fpc && L > 0;
  std::optional<detail::FpcContext> ctx;
  ComplexImage x_lambda;
  if (fpc) {
    ctx.emplace(y, op, cfg.holdout_fraction, cfg.partition_seed);
    x_lambda = x;
  }

  try {
    for (std::size_t t = T; t >= 1; --t) {
      double const sigma = sched.sigma(t);
      double const sigma_next = sched.next_sigma(t);
      Timestep const ts{t, sigma};
      StepRecord rec;
      rec.t = t;
      rec.sigma = sigma;

      // P1
      if (fpc) {
        if (cfg.redraw_partition && t != T) {
          ctx.emplace(y, op, cfg.holdout_fraction, detail::step_seed(cfg.partition_seed, t, 0x7061ull));
        }
        SslProblem const prob{ctx->y_lambda, ctx->op_lambda, ctx->y_gamma, ctx->op_gamma, gstate.gamma, cfg.cg, cfg.tau};
        CalibrationVector const before = dstate.delta;
        dstate = update_delta(std::move(dstate), [&](CalibrationVector const &d) {
          return ssl_loss(d, prob, x_lambda, ts, prior) + delta_penalty(d);
        });
        rec.ssl_loss = dstate.loss_history.back() - delta_penalty(before);
      }
      rec.delta = dstate.delta.packed();
      rec.gamma = gstate.gamma;

      // P2 + P3
      ComplexImage const x_dot = tweedie_denoise(x, ts, prior, dstate.delta);
      P3Result p3 = solve_p3(x_dot, y, op, gstate.gamma, cfg.cg);
      rec.cg_residual = p3.residual;
      rec.cg_iters = p3.iters;

      // RPA
      if (cfg.enable_rpa && !gstate.stopped) {
        CalibrationVector const &delta = dstate.delta;
        RegularizedMap const h = [&](double g, ComplexImage const &z) {
          return solve_p3(tweedie_denoise(z, ts, prior, delta), y, op, g, cfg.cg).image;
        };
        double const eps = std::max(cfg.sure_eps_scale * max_abs(x), 1e-12);
        std::uint64_t const probe_seed = detail::step_seed(cfg.mc_seed, t, 0x6d63ull);
        double const g_now = gstate.gamma;
        auto loss_fn = [&](double g) {
          std::optional<ComplexImage> hx;
          if (g == g_now) { hx = p3.image; }
          return sure_loss(g, x, x_zf, h, eps, probe_seed, cfg.sure_form, cfg.sure_noise_var, std::move(hx)).loss;
        };
        gstate = update_gamma(std::move(gstate), loss_fn);
        rec.reg_loss = gstate.loss_history.back();
        if (auto const e = check_early_stop(gstate)) { rec.criterion = *e; }
        if (gstate.stopped) {
          // The step that triggers the stop keeps gamma where it was judged converged.
          gstate.gamma = rec.gamma;
          report.gamma_stop_step = t;
        }
      }
      rec.gamma_stopped = gstate.stopped;

      // Shadow lambda-only trajectory for the next FPC evaluation.
      if (fpc && t > 1) {
        ComplexImage const xl_dot = tweedie_denoise(x_lambda, ts, prior, dstate.delta);
        ComplexImage const xl_hat = solve_p3(xl_dot, ctx->y_lambda, ctx->op_lambda, gstate.gamma, cfg.cg).image;
        x_lambda = renoise(xl_hat, x_lambda, sigma_next, sigma, cfg.renoise, detail::step_seed(cfg.noise_seed, t, 0x6c61ull),
                           cfg.noise_from_denoised ? &xl_dot : nullptr);
      }

      x = renoise(p3.image, x, sigma_next, sigma, cfg.renoise, detail::step_seed(cfg.noise_seed, t, 0x726eull),
                  cfg.noise_from_denoised ? &x_dot : nullptr);
      report.steps.push_back(std::move(rec));
    }
  } catch (NumericError const &e) {
    report.image = x;
    report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    throw ReconAborted(std::string("reconstruct aborted: ") + e.what(), std::move(report));
  }

  report.image = std::move(x);
  if (reference) {
    report.psnr = psnr(report.image, *reference);
    if (report.image.height() >= 11 && report.image.width() >= 11) { report.ssim = ssim(report.image, *reference); }
  }
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return report;
}

} // namespace calrecon
