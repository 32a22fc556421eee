// Command-line front end: simulate, train, reconstruct, ablate, traces.

#include <calrecon/calrecon.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>

namespace fs = std::filesystem;
using namespace calrecon;

namespace {

enum Exit
{
  kOk = 0,
  kArgument = 2,
  kNumeric = 3,
  kIo = 4,
};

template <typename E>
CLI::Transformer enum_map(std::map<std::string, E> m)
{
  return CLI::Transformer(std::move(m), CLI::ignore_case);
}

void add_recon_flags(CLI::App *app, ReconConfig &c)
{
  app->add_option("--steps", c.steps, "reverse steps T")->capture_default_str();
  app->add_option("--sigma-max", c.sigma_max)->capture_default_str();
  app->add_option("--sigma-min", c.sigma_min)->capture_default_str();
  app->add_option("--gamma-init", c.gamma_init, "initial data weight")->capture_default_str();
  app->add_option("--delta-init", c.delta_init, "initial calibration entries")->capture_default_str();
  app->add_option("--tau-reg", c.tau_reg, "early-stop threshold")->capture_default_str();
  app->add_option("--window", c.window, "early-stop window k")->capture_default_str();
  app->add_option("--cg-iters", c.cg.max_iters)->capture_default_str();
  app->add_option("--cg-tol", c.cg.tol)->capture_default_str();
  app->add_option("--holdout", c.holdout_fraction, "held-out fraction of sampled k-space")->capture_default_str();
  app->add_option("--tau", c.tau, "held-out loss precision")->capture_default_str();
  app->add_option("--band-radius", c.band_radius, "low/high split radius, fraction of Nyquist")->capture_default_str();
  app->add_flag("--fpc,!--no-fpc", c.enable_fpc, "prior calibration")->capture_default_str();
  app->add_flag("--rpa,!--no-rpa", c.enable_rpa, "regularization adaptation")->capture_default_str();
  app->add_flag("--redraw-partition", c.redraw_partition, "new held-out split every step");
  app->add_option("--delta-step", c.delta_step)->capture_default_str();
  app->add_option("--delta-fd-step", c.delta_fd_step)->capture_default_str();
  app->add_option("--delta-estimator", c.delta_estimator)
      ->transform(enum_map<GradientEstimator>({{"central", GradientEstimator::CentralDifference},
                                               {"spsa", GradientEstimator::Spsa}}));
  app->add_option("--delta-rule", c.delta_rule)
      ->transform(enum_map<UpdateRule>({{"adam", UpdateRule::Adam}, {"plain", UpdateRule::Plain}}));
  app->add_option("--gamma-step", c.gamma_step)->capture_default_str();
  app->add_option("--gamma-fd-step", c.gamma_fd_step)->capture_default_str();
  app->add_option("--sure-form", c.sure_form)
      ->transform(enum_map<SureForm>({{"product", SureForm::Product}, {"additive", SureForm::Additive}}));
  app->add_option("--sure-noise-var", c.sure_noise_var, "noise variance for the additive form")->capture_default_str();
  app->add_option("--sure-eps", c.sure_eps_scale, "probe scale relative to max|x_t|")->capture_default_str();
  app->add_option("--renoise", c.renoise)
      ->transform(enum_map<RenoiseMode>({{"deterministic", RenoiseMode::Deterministic},
                                         {"stochastic", RenoiseMode::Stochastic}}));
  app->add_flag("--noise-from-denoised", c.noise_from_denoised, "renoise along x_t minus the denoised estimate");
  app->add_flag("--init-zero-filled", c.init_from_zero_filled, "start from zero-filled plus noise");
  app->add_option("--partition-seed", c.partition_seed)->capture_default_str();
  app->add_option("--mc-seed", c.mc_seed)->capture_default_str();
  app->add_option("--noise-seed", c.noise_seed)->capture_default_str();
}

struct PriorArgs
{
  std::string kind = "unet";
  fs::path weights;
  double lambda = 1.0; // white gaussian prior variance
};

std::unique_ptr<ScorePrior> make_prior(PriorArgs const &a, ReconConfig const &c, std::size_t h, std::size_t w)
{
  if (a.kind == "gaussian") {
    return std::make_unique<GaussianPrior>(GaussianPriorParams::white(h, w, a.lambda));
  }
  if (a.kind == "unet") {
    if (a.weights.empty()) { throw InvalidArgument("--weights is required for the unet prior"); }
    return std::make_unique<UNetPrior>(load_weights(a.weights), UNetOptions{c.band_radius, true});
  }
  throw InvalidArgument("unknown prior '" + a.kind + "'");
}

struct SimArgs
{
  fs::path out_dir = "sim";
  std::size_t size = 64;
  std::size_t coils = 4;
  MaskKind mask_kind = MaskKind::Gaussian1D;
  double accel = 4.0;
  double acs = 0.08;
  std::uint64_t mask_seed = 0;
  std::uint64_t coil_seed = 11;
  double noise_std = 0.01;
  std::uint64_t noise_seed = 12;
  PhantomSpec phantom;
};

int run_simulate(SimArgs const &a)
{
  PhantomSpec ps = a.phantom;
  ps.size = a.size;
  ComplexImage const ref = make_phantom(ps);
  auto c = simulate_case(ref, a.coils, a.mask_kind, a.accel, a.acs, a.noise_std, a.mask_seed, a.coil_seed, a.noise_seed);
  fs::create_directories(a.out_dir);
  write_tensor(a.out_dir / "kspace.bt", to_tensor(c.y));
  write_mask(a.out_dir / "mask.bt", c.op.mask);
  write_tensor(a.out_dir / "sens.bt", to_tensor(c.op.sens));
  write_tensor(a.out_dir / "reference.bt", to_tensor(c.reference));
  std::printf("wrote %s (%zu coils, %zux%zu, %zu sampled)\n", a.out_dir.string().c_str(), a.coils, a.size, a.size,
              c.op.mask.sampled());
  return kOk;
}

struct TrainArgs
{
  fs::path out = "weights.bt";
  std::size_t count = 40;
  std::size_t size = 32;
  std::uint64_t seed = 500;
  TrainConfig cfg;
  UNetDescriptor desc;
};

std::vector<ComplexImage> training_set(std::size_t count, std::size_t size, std::uint64_t seed)
{
  std::vector<ComplexImage> ds;
  for (std::size_t i = 0; i < count; ++i) {
    PhantomSpec ps;
    ps.size = size;
    ps.seed = seed + i;
    ps.kind = i % 2 == 0 ? PhantomKind::Ellipse : PhantomKind::PiecewiseSmooth;
    ds.push_back(make_phantom(ps));
  }
  return ds;
}

int run_train(TrainArgs const &a)
{
  auto const res = train_toy_denoiser(training_set(a.count, a.size, a.seed), a.desc, a.cfg);
  save_weights(a.out, res.weights);
  std::printf("held-out loss %.6g -> %.6g (%.1f%% reduction)\n", res.initial_heldout_loss, res.final_heldout_loss,
              100.0 * (1.0 - res.final_heldout_loss / res.initial_heldout_loss));
  return kOk;
}

struct ReconArgs
{
  fs::path kspace, mask, sens, reference;
  fs::path out_dir = "recon";
  PriorArgs prior;
  ReconConfig cfg;
};

int run_reconstruct(ReconArgs const &a)
{
  MultiCoilKSpace const y = kspace_from_tensor(read_tensor(a.kspace));
  SamplingMask const mask = read_mask(a.mask);
  CoilSensitivities const sens = a.sens.empty() ? unit_coil(mask.height, mask.width)
                                                : sensitivities_from_tensor(read_tensor(a.sens));
  ForwardOperator const op(mask, sens);
  std::optional<ComplexImage> ref;
  if (!a.reference.empty()) { ref = image_from_tensor(read_tensor(a.reference)); }
  auto const prior = make_prior(a.prior, a.cfg, op.height(), op.width());

  ReconReport rep;
  try {
    rep = reconstruct(y, op, *prior, a.cfg, ref);
  } catch (ReconAborted const &e) {
    fs::create_directories(a.out_dir);
    write_text_file(a.out_dir / "report.partial.json", report_json(e.partial()).dump(2));
    throw;
  }
  fs::create_directories(a.out_dir);
  write_tensor(a.out_dir / "image.bt", to_tensor(rep.image));
  write_text_file(a.out_dir / "report.json", report_json(rep).dump(2));
  emit_images(rep, a.out_dir);
  if (rep.psnr) {
    std::printf("PSNR %.3f dB", *rep.psnr);
    if (rep.ssim) { std::printf("  SSIM %.4f", *rep.ssim); }
    std::printf("\n");
  }
  std::printf("final gamma %.6g  steps %zu  %.2f s\n", rep.steps.back().gamma, rep.steps.size(), rep.wall_seconds);
  return kOk;
}

struct AblateArgs
{
  fs::path weights;
  fs::path out;
  SuiteSpec suite;
  ReconConfig cfg;
};

int run_ablate(AblateArgs const &a)
{
  UNetPrior const prior(load_weights(a.weights), UNetOptions{a.cfg.band_radius, true});
  auto const cases = make_suite(a.suite);
  ReconConfig cfg = a.cfg;
  auto const table = run_ablation(cases, prior, cfg, [](std::string const &label, std::size_t i, double p) {
    std::fprintf(stderr, "%-9s case %2zu  %.2f dB\n", label.c_str(), i, p);
  });
  std::printf("%s", format_table(table).c_str());
  if (!a.out.empty()) { write_text_file(a.out, ablation_json(table).dump(2)); }
  return kOk;
}

int run_traces(fs::path const &report, fs::path const &out)
{
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(report));
  } catch (nlohmann::json::parse_error const &e) {
    throw FormatError(report.string() + ": " + e.what());
  }
  std::string const text = trace_text(report_from_json(j));
  if (out.empty()) {
    std::cout << text;
  } else {
    write_text_file(out, text);
  }
  return kOk;
}

} // namespace

int main(int argc, char **argv)
{
  CLI::App app{"calibrated diffusion reconstruction for undersampled multi-coil MRI"};
  app.require_subcommand(1);

  SimArgs sim;
  auto *s = app.add_subcommand("simulate", "phantom -> multi-coil k-space tensors");
  s->add_option("--out-dir", sim.out_dir)->capture_default_str();
  s->add_option("--size", sim.size)->capture_default_str();
  s->add_option("--coils", sim.coils)->capture_default_str();
  s->add_option("--mask", sim.mask_kind)
      ->transform(enum_map<MaskKind>({{"gaussian1d", MaskKind::Gaussian1D},
                                      {"uniform1d", MaskKind::Uniform1D},
                                      {"gaussian2d", MaskKind::Gaussian2D}}));
  s->add_option("--accel", sim.accel)->capture_default_str();
  s->add_option("--acs", sim.acs)->capture_default_str();
  s->add_option("--mask-seed", sim.mask_seed)->capture_default_str();
  s->add_option("--coil-seed", sim.coil_seed)->capture_default_str();
  s->add_option("--noise-std", sim.noise_std)->capture_default_str();
  s->add_option("--noise-seed", sim.noise_seed)->capture_default_str();
  s->add_option("--phantom", sim.phantom.kind)
      ->transform(enum_map<PhantomKind>({{"ellipse", PhantomKind::Ellipse},
                                         {"piecewise-smooth", PhantomKind::PiecewiseSmooth},
                                         {"texture-mix", PhantomKind::TextureMix}}));
  s->add_option("--contrast", sim.phantom.contrast_exponent)->capture_default_str();
  s->add_option("--bias", sim.phantom.bias_amplitude)->capture_default_str();
  s->add_option("--scale", sim.phantom.resolution_scale)->capture_default_str();
  s->add_option("--phantom-seed", sim.phantom.seed)->capture_default_str();

  TrainArgs tr;
  auto *t = app.add_subcommand("train", "fit the toy denoiser on synthetic phantoms");
  t->add_option("--out", tr.out)->capture_default_str();
  t->add_option("--count", tr.count, "training phantoms")->capture_default_str();
  t->add_option("--size", tr.size)->capture_default_str();
  t->add_option("--data-seed", tr.seed)->capture_default_str();
  t->add_option("--epochs", tr.cfg.epochs)->capture_default_str();
  t->add_option("--lr", tr.cfg.learning_rate)->capture_default_str();
  t->add_option("--momentum", tr.cfg.momentum)->capture_default_str();
  t->add_option("--seed", tr.cfg.seed)->capture_default_str();
  t->add_option("--widths", tr.desc.widths)->capture_default_str();

  ReconArgs rc;
  auto *r = app.add_subcommand("reconstruct", "k-space + prior -> image and report");
  r->add_option("--kspace", rc.kspace)->required();
  r->add_option("--mask", rc.mask)->required();
  r->add_option("--sens", rc.sens, "coil maps (default: single unit coil)");
  r->add_option("--reference", rc.reference, "ground truth for metrics");
  r->add_option("--out-dir", rc.out_dir)->capture_default_str();
  r->add_option("--prior", rc.prior.kind, "unet | gaussian")->capture_default_str();
  r->add_option("--weights", rc.prior.weights);
  r->add_option("--prior-lambda", rc.prior.lambda, "white gaussian prior variance")->capture_default_str();
  add_recon_flags(r, rc.cfg);

  AblateArgs ab;
  auto *a = app.add_subcommand("ablate", "four-way toggle study on shifted phantoms");
  a->add_option("--weights", ab.weights)->required();
  a->add_option("--out", ab.out, "table as JSON");
  a->add_option("--cases", ab.suite.cases)->capture_default_str();
  a->add_option("--size", ab.suite.size)->capture_default_str();
  a->add_option("--coils", ab.suite.coils)->capture_default_str();
  a->add_option("--accel", ab.suite.accel)->capture_default_str();
  a->add_option("--noise-std", ab.suite.noise_std)->capture_default_str();
  a->add_option("--suite-seed", ab.suite.seed)->capture_default_str();
  ab.suite.noise_std = 0.01;
  ab.suite.shift.kind = PhantomKind::TextureMix;
  ab.suite.shift.contrast_exponent = 1.5;
  ab.suite.shift.bias_amplitude = 0.3;
  ab.suite.shift.resolution_scale = 0.85;
  a->add_option("--contrast", ab.suite.shift.contrast_exponent)->capture_default_str();
  a->add_option("--bias", ab.suite.shift.bias_amplitude)->capture_default_str();
  a->add_option("--scale", ab.suite.shift.resolution_scale)->capture_default_str();
  add_recon_flags(a, ab.cfg);

  fs::path report_path, trace_out;
  auto *tc = app.add_subcommand("traces", "report -> per-step columns");
  tc->add_option("--report", report_path)->required();
  tc->add_option("--out", trace_out);

  try {
    app.parse(argc, argv);
  } catch (CLI::ParseError const &e) {
    int const rc_parse = app.exit(e);
    return rc_parse == 0 ? kOk : kArgument;
  }

  try {
    if (*s) { return run_simulate(sim); }
    if (*t) { return run_train(tr); }
    if (*r) { return run_reconstruct(rc); }
    if (*a) { return run_ablate(ab); }
    if (*tc) { return run_traces(report_path, trace_out); }
  } catch (InvalidArgument const &e) {
    std::fprintf(stderr, "argument error: %s\n", e.what());
    return kArgument;
  } catch (NumericError const &e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return kNumeric;
  } catch (IoError const &e) {
    std::fprintf(stderr, "i/o error: %s\n", e.what());
    return kIo;
  } catch (FormatError const &e) {
    std::fprintf(stderr, "format error: %s\n", e.what());
    return kIo;
  } catch (fs::filesystem_error const &e) {
    std::fprintf(stderr, "i/o error: %s\n", e.what());
    return kIo;
  }
  return kOk;
}
