// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include "support.hpp"

#include <Eigen/Dense>

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iterator>
#include <string>

using namespace calrecon;
using namespace testing_support;
namespace fs = std::filesystem;

namespace {

struct Outcome
{
  bool pass;
  std::string detail;
};

int failures = 0;

void run(int id, char const *what, double budget_s, std::function<Outcome()> const &body)
{
  auto const t0 = std::chrono::steady_clock::now();
  Outcome o{false, ""};
  try {
    o = body();
  } catch (std::exception const &e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  double const secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  bool const in_time = secs < budget_s;
  bool const ok = o.pass && in_time;
  if (!ok) { ++failures; }
  std::printf("[%s] %d. %s: %s (%.1f s%s)\n", ok ? "PASS" : "FAIL", id, what, o.detail.c_str(), secs,
              in_time ? "" : ", over budget");
  std::fflush(stdout);
}

std::string fmt(char const *f, double a, double b = 0.0, double c = 0.0, double d = 0.0)
{
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

Eigen::MatrixXcd to_eigen(std::vector<Cx> const &m, std::size_t n)
{
  Eigen::MatrixXcd M(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) { M(Eigen::Index(i), Eigen::Index(j)) = m[i * n + j]; }
  }
  return M;
}

ComplexImage dense_solve(Eigen::MatrixXcd const &M, ComplexImage const &rhs)
{
  Eigen::VectorXcd b(static_cast<Eigen::Index>(rhs.size()));
  for (std::size_t i = 0; i < rhs.size(); ++i) { b(Eigen::Index(i)) = rhs[i]; }
  Eigen::VectorXcd const x = M.llt().solve(b);
  ComplexImage out(rhs.height(), rhs.width());
  for (std::size_t i = 0; i < out.size(); ++i) { out[i] = x(Eigen::Index(i)); }
  return out;
}

Outcome adjoint_grid()
{
  double worst = 0.0;
  int cases = 0;
  for (auto kind : {MaskKind::Gaussian1D, MaskKind::Uniform1D}) {
    for (double r : {4.0, 8.0}) {
      for (std::size_t coils : {1u, 4u}) {
        std::uint64_t const s = 100 + static_cast<std::uint64_t>(cases);
        ForwardOperator const op(generate_mask(kind, 64, 64, r, 0.08, s), synth_coil_maps(coils, 64, 64, s));
        auto const x = random_image(64, 64, s);
        auto const y = random_kspace(coils, 64, 64, s);
        worst = std::max(worst, rel_diff(dot(apply_forward(x, op), y), dot(x, apply_adjoint(y, op))));
        ++cases;
      }
    }
  }
  return {worst <= 1e-10, fmt("worst relative mismatch %.2e over %g operators", worst, cases)};
}

Outcome cg_oracle()
{
  double worst_res = 0.0, worst_dense = 0.0;
  for (std::uint64_t c = 0; c < 20; ++c) {
    CounterRng rng(c, 0xcc);
    MaskKind const kind = c % 3 == 0 ? MaskKind::Gaussian2D : (c % 3 == 1 ? MaskKind::Gaussian1D : MaskKind::Uniform1D);
    double const accel = c % 2 == 0 ? 4.0 : 8.0;
    std::size_t const coils = 1 + c % 4;
    double const gamma = std::exp(rng.uniform(std::log(0.1), std::log(10.0)));
    ForwardOperator const op(generate_mask(kind, 32, 32, accel, 0.08, c), synth_coil_maps(coils, 32, 32, c + 1));
    auto const x_dot = random_image(32, 32, c + 2);
    auto const y = restrict_kspace(random_kspace(coils, 32, 32, c + 3), op.mask);
    auto const p3 = solve_p3(x_dot, y, op, gamma, CgConfig{500, 1e-12});

    ProximalNormalOperator const A{op, gamma};
    ComplexImage rhs = gamma * apply_adjoint(y, op) + x_dot;
    worst_res = std::max(worst_res, norm2(A(p3.image) - rhs) / norm2(rhs));
    auto const M = to_eigen(dense_matrix(A, 32, 32), 32 * 32);
    worst_dense = std::max(worst_dense, rel_err(p3.image, dense_solve(M, rhs)));
  }
  return {worst_res <= 1e-8 && worst_dense <= 1e-6,
          fmt("worst normal-equation residual %.2e, worst dense disagreement %.2e", worst_res, worst_dense)};
}

Outcome tweedie_exact()
{
  GaussianPrior const prior(GaussianPriorParams::white(32, 32, 1.0));
  auto const sched = build_schedule(100, 1.0, 0.01);
  auto const x = random_image(32, 32, 3);
  double worst = 0.0;
  for (std::size_t t = sched.steps(); t >= 1; --t) {
    double const s = sched.sigma(t);
    auto const d = tweedie_denoise(x, Timestep{t, s}, prior, {});
    worst = std::max(worst, max_abs_diff(d, (1.0 / (1.0 + s * s)) * x));
  }
  return {worst <= 1e-12, fmt("max abs error %.2e across %g steps", worst, double(sched.steps()))};
}

Outcome map_oracle()
{
  // Zero-mean circulant prior, sigma_min = 1 so the terminal data weight is
  // gamma itself.
  std::size_t const n = 32;
  PhantomSpec ps;
  ps.size = n;
  ps.seed = 41;
  auto const truth = make_phantom(ps);
  ForwardOperator const op(generate_mask(MaskKind::Gaussian1D, n, n, 4, 0.125, 41), synth_coil_maps(4, n, n, 41));
  auto const y = add_noise(apply_forward(truth, op), op.mask, 0.01, 42);

  GaussianPriorParams prior{ComplexImage(n, n), std::vector<double>(n * n)};
  CounterRng rng(43, 1);
  for (auto &l : prior.spectrum) { l = 1e-5 * rng.uniform(0.5, 2.0); }

  ReconConfig cfg;
  cfg.enable_fpc = false;
  cfg.enable_rpa = false;
  cfg.sigma_max = 10.0;
  cfg.sigma_min = 1.0;
  cfg.cg = CgConfig{200, 1e-12};
  auto const rep = reconstruct(y, op, GaussianPrior(prior), cfg);

  double const s2 = cfg.sigma_min * cfg.sigma_min;
  auto prec = [&](ComplexImage const &x) {
    auto k = fft2c(x);
    for (std::size_t i = 0; i < k.size(); ++i) { k[i] /= prior.spectrum[i] + s2; }
    return ifft2c(k);
  };
  double const g = cfg.gamma_init;
  auto const M = to_eigen(dense_matrix([&](ComplexImage const &x) { return g * apply_normal(x, op) + prec(x); }, n, n),
                          n * n);
  auto const oracle = dense_solve(M, g * apply_adjoint(y, op));
  double const err = rel_err(rep.image, oracle);
  return {err <= 1e-3, fmt("relative error %.2e vs dense MAP (T=%g, sigma %g..%g)", err, double(cfg.steps),
                           cfg.sigma_max, cfg.sigma_min)};
}

Outcome calibration_identity(UNetWeights const &w)
{
  std::size_t const n = 32;
  PhantomSpec ps;
  ps.size = n;
  ps.seed = 61;
  ps.kind = PhantomKind::TextureMix;
  auto c = simulate_case(make_phantom(ps), 4, MaskKind::Gaussian1D, 4, 0.08, 0.01, 61, 62, 63);

  ReconConfig cfg;
  cfg.steps = 30;
  cfg.enable_rpa = false;
  cfg.enable_fpc = false;

  // network prior: band modulation at delta = 1 vs no calibration at all
  auto const a = reconstruct(c.y, c.op, UNetPrior(w, {0.25, true}), cfg).image;
  auto const b = reconstruct(c.y, c.op, UNetPrior(w, {0.25, false}), cfg).image;
  double const net = max_abs_diff(a, b);

  // same, with the calibration loop running but its step frozen at zero
  ReconConfig frozen = cfg;
  frozen.enable_fpc = true;
  frozen.delta_step = 0.0;
  auto const fr = reconstruct(c.y, c.op, UNetPrior(w, {0.25, true}), frozen);
  double const net_loop = max_abs_diff(fr.image, b);
  bool ident = true;
  for (auto const &s : fr.steps) {
    for (double d : s.delta) { ident = ident && d == 1.0; }
  }

  // analytic prior has no skip layers: the FPC toggle must not change anything
  GaussianPrior const gp(GaussianPriorParams::white(n, n, 0.2));
  ReconConfig on = cfg;
  on.enable_fpc = true;
  double const analytic = max_abs_diff(reconstruct(c.y, c.op, gp, on).image, reconstruct(c.y, c.op, gp, cfg).image);

  double const worst = std::max({net, net_loop, analytic});
  return {worst <= 1e-9 && ident,
          fmt("max abs diff network %.2e, network with frozen loop %.2e, analytic %.2e", net, net_loop, analytic)};
}

Outcome sure_unbiased()
{
  std::size_t const n = 256;
  CounterRng rng(3, 4);
  std::vector<Cx> g(n * n);
  for (auto &v : g) { v = rng.complex_normal() / 16.0; }
  double const c = 0.8;
  auto H = [&](ComplexImage const &x) {
    ComplexImage out = x;
    for (std::size_t i = 0; i < n; ++i) {
      Cx acc{};
      for (std::size_t j = 0; j < n; ++j) { acc += g[i * n + j] * x[j]; }
      out[i] += c * acc;
    }
    return out;
  };
  double trace = 0.0;
  for (std::size_t i = 0; i < n; ++i) { trace += 1.0 + c * g[i * n + i].real(); }

  auto const x = random_image(16, 16, 4);
  auto const hx = H(x);
  double const eps = 1e-3;
  double mean = 0.0;
  for (std::uint64_t s = 0; s < 200; ++s) { mean += divergence_probe(H, x, hx, eps, s); }
  mean /= 200.0;
  double const rel = std::abs(mean - eps * trace) / std::abs(eps * trace);
  return {rel <= 0.05, fmt("mean probe %.5g vs eps*trace %.5g, relative gap %.2f%%", mean, eps * trace, 100.0 * rel)};
}

Outcome early_stop()
{
  RegAdaptState s; // k = 5, tau = 1e-3
  std::optional<double> e;
  std::size_t stop_at = 0;
  for (std::size_t i = 1; i <= 10 && !s.stopped; ++i) {
    s = update_gamma(s, [](double) { return 2.5; });
    e = check_early_stop(s);
    if (s.stopped) { stop_at = i; }
  }
  double const frozen = s.gamma;
  bool never_moves = true;
  for (int i = 0; i < 20; ++i) {
    s = update_gamma(s, [](double g) { return (std::log(g) - 3.0) * (std::log(g) - 3.0); });
    check_early_stop(s);
    never_moves = never_moves && s.gamma == frozen && s.stopped;
  }
  auto const e2 = convergence_criterion({4, 4, 2, 2}, 2);
  bool const ok = e && *e == 0.0 && stop_at == 10 && never_moves && s.loss_history.size() == 10 && e2 && *e2 == 0.5;
  return {ok, fmt("constant history E = %g (stop after %g steps, frozen %g), [4,4,2,2] k=2 E = %g", e ? *e : -1.0,
                  double(stop_at), never_moves ? 1.0 : 0.0, e2 ? *e2 : -1.0)};
}

std::vector<ComplexImage> training_set()
{
  std::vector<ComplexImage> ds;
  for (std::size_t i = 0; i < 40; ++i) {
    PhantomSpec ps;
    ps.size = 32;
    ps.seed = 500 + i;
    ps.kind = i % 2 == 0 ? PhantomKind::Ellipse : PhantomKind::PiecewiseSmooth;
    ds.push_back(make_phantom(ps));
  }
  return ds;
}

Outcome ablation(UNetWeights const &w)
{
  SuiteSpec suite;
  suite.cases = 20;
  suite.size = 32;
  suite.coils = 4;
  suite.accel = 4.0;
  suite.noise_std = 0.01;
  suite.shift.kind = PhantomKind::TextureMix;
  suite.shift.contrast_exponent = 1.5;
  suite.shift.bias_amplitude = 0.3;
  suite.shift.resolution_scale = 0.85;
  auto const table = run_ablation(make_suite(suite), UNetPrior(w), ReconConfig{});
  std::printf("%s", format_table(table).c_str());
  double const base = table.row("Baseline").psnr_mean, fpc = table.row("w/o RPA").psnr_mean,
               rpa = table.row("w/o FPC").psnr_mean, ours = table.row("Ours").psnr_mean;
  bool const ok = ours >= std::max(fpc, rpa) && std::min(fpc, rpa) >= base && ours - base >= 0.3;
  return {ok, fmt("mean PSNR both-off %.2f, FPC-only %.2f, RPA-only %.2f, both-on %.2f dB", base, fpc, rpa, ours)};
}

int cli(std::string const &args)
{
  std::string const cmd = std::string(CALRECON_CLI) + " " + args + " > /dev/null 2>&1";
  int const raw = std::system(cmd.c_str());
  return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
}

std::string bytes_of(fs::path const &p)
{
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

Outcome determinism(UNetWeights const &w)
{
  fs::path const d = fs::temp_directory_path() / "calrecon_acceptance_det";
  fs::remove_all(d);
  fs::create_directories(d);
  save_weights(d / "w.bt", w);
  if (cli("simulate --out-dir " + (d / "sim").string() + " --size 32 --phantom texture-mix --contrast 1.5") != 0) {
    return {false, "simulate failed"};
  }
  auto const s = d / "sim";
  std::string const args = "reconstruct --kspace " + (s / "kspace.bt").string() + " --mask " +
                           (s / "mask.bt").string() + " --sens " + (s / "sens.bt").string() + " --weights " +
                           (d / "w.bt").string() + " --out-dir ";
  int const r1 = cli(args + (d / "a").string());
  int const r2 = cli(args + (d / "b").string());
  if (r1 != 0 || r2 != 0) { return {false, fmt("reconstruct exit codes %g, %g", r1, r2)}; }
  auto const a = bytes_of(d / "a" / "image.bt"), b = bytes_of(d / "b" / "image.bt");
  bool const same = !a.empty() && a == b;
  return {same, fmt("image.bt %g bytes, ", double(a.size())) + (same ? "bit-identical" : "differs")};
}

} // namespace

int main()
{
  run(1, "adjoint identity", 10, adjoint_grid);
  run(2, "CG oracle", 30, cg_oracle);
  run(3, "Tweedie exactness", 5, tweedie_exact);
  run(4, "end-to-end MAP oracle", 120, map_oracle);

  std::printf("training toy denoiser (40 phantoms, 32x32)...\n");
  std::fflush(stdout);
  auto const t0 = std::chrono::steady_clock::now();
  auto const trained = train_toy_denoiser(training_set(), UNetDescriptor{}, TrainConfig{});
  double const train_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("  held-out loss %.4g -> %.4g in %.1f s\n", trained.initial_heldout_loss, trained.final_heldout_loss,
              train_s);

  run(5, "calibration identity", 60, [&] { return calibration_identity(trained.weights); });
  run(6, "SURE divergence unbiasedness", 60, sure_unbiased);
  run(7, "early stopping", 1, early_stop);
  run(8, "directional ablation", 1800 - train_s, [&] { return ablation(trained.weights); });
  run(9, "CLI determinism", 300, [&] { return determinism(trained.weights); });

  std::printf("%s: %d criteria failed\n", failures == 0 ? "ALL PASS" : "FAILURES", failures);
  return failures == 0 ? 0 : 1;
}
