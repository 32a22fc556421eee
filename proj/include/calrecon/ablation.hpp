#pragma once

#include "forward_model.hpp"
#include "mask.hpp"
#include "phantom.hpp"
#include "pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

namespace calrecon {

struct AblationCase
{
  ComplexImage reference;
  MultiCoilKSpace y;
  ForwardOperator op;
};

/// How test data are simulated: one phantom per case with the given shift.
struct SuiteSpec
{
  std::size_t cases = 20;
  std::size_t size = 32;
  std::size_t coils = 4;
  MaskKind mask_kind = MaskKind::Gaussian1D;
  double accel = 4.0;
  double acs_fraction = 0.08;
  double noise_std = 0.0;
  PhantomSpec shift; // kind and shift parameters; size and seed are overridden per case
  std::uint64_t seed = 1000;
};

inline AblationCase simulate_case(ComplexImage reference, std::size_t coils, MaskKind kind, double accel, double acs,
                                  double noise_std, std::uint64_t mask_seed, std::uint64_t coil_seed,
                                  std::uint64_t noise_seed)
{
  std::size_t const h = reference.height(), w = reference.width();
  SamplingMask mask = generate_mask(kind, h, w, accel, acs, mask_seed);
  ForwardOperator op(std::move(mask), synth_coil_maps(coils, h, w, coil_seed));
  MultiCoilKSpace y = add_noise(apply_forward(reference, op), op.mask, noise_std, noise_seed);
  return {std::move(reference), std::move(y), std::move(op)};
}

inline std::vector<AblationCase> make_suite(SuiteSpec const &s)
{
  std::vector<AblationCase> out;
  out.reserve(s.cases);
  for (std::size_t i = 0; i < s.cases; ++i) {
    PhantomSpec ps = s.shift;
    ps.size = s.size;
    ps.seed = s.seed + i;
    std::uint64_t const base = splitmix64(s.seed * 1315423911ull + i);
    out.push_back(simulate_case(make_phantom(ps), s.coils, s.mask_kind, s.accel, s.acs_fraction, s.noise_std, base,
                                base ^ 0xc011ull, base ^ 0x4015eull));
  }
  return out;
}

struct AblationRow
{
  std::string label;
  bool enable_fpc = false;
  bool enable_rpa = false;
  std::vector<double> psnr;
  std::vector<double> ssim;
  double psnr_mean = 0, psnr_std = 0, ssim_mean = 0, ssim_std = 0;
};

struct AblationTable
{
  std::vector<AblationRow> rows;

  AblationRow const &row(std::string const &label) const
  {
    for (auto const &r : rows) {
      if (r.label == label) { return r; }
    }
    throw InvalidArgument("no ablation row '" + label + "'");
  }
};

namespace detail {

inline void mean_std(std::vector<double> const &v, double &mean, double &sd)
{
  mean = 0.0;
  for (double x : v) { mean += x; }
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) { ss += (x - mean) * (x - mean); }
  sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
}

} // namespace detail

/// Runs every case under the four toggle settings. `progress`, if set, is
/// called after each reconstruction.
inline AblationTable run_ablation(std::vector<AblationCase> const &cases, ScorePrior const &prior, ReconConfig const &base,
                                  std::function<void(std::string const &, std::size_t, double)> const &progress = {})
{
  if (cases.empty()) { throw InvalidArgument("run_ablation: need at least one case"); }
  AblationTable table;
  struct Setting
  {
    char const *label;
    bool fpc, rpa;
  };
  for (Setting s : {Setting{"Baseline", false, false}, Setting{"w/o RPA", true, false}, Setting{"w/o FPC", false, true},
                    Setting{"Ours", true, true}}) {
    AblationRow row;
    row.label = s.label;
    row.enable_fpc = s.fpc;
    row.enable_rpa = s.rpa;
    ReconConfig cfg = base;
    cfg.enable_fpc = s.fpc;
    cfg.enable_rpa = s.rpa;
    for (std::size_t i = 0; i < cases.size(); ++i) {
      auto const rep = reconstruct(cases[i].y, cases[i].op, prior, cfg, cases[i].reference);
      row.psnr.push_back(*rep.psnr);
      row.ssim.push_back(rep.ssim.value_or(std::numeric_limits<double>::quiet_NaN()));
      if (progress) { progress(row.label, i, *rep.psnr); }
    }
    detail::mean_std(row.psnr, row.psnr_mean, row.psnr_std);
    detail::mean_std(row.ssim, row.ssim_mean, row.ssim_std);
    table.rows.push_back(std::move(row));
  }
  return table;
}

inline std::string format_table(AblationTable const &t)
{
  std::string out = "method      PSNR(dB)          SSIM\n";
  char buf[160];
  for (auto const &r : t.rows) {
    std::snprintf(buf, sizeof buf, "%-10s  %6.2f +/- %5.2f   %6.4f +/- %6.4f\n", r.label.c_str(), r.psnr_mean, r.psnr_std,
                  r.ssim_mean, r.ssim_std);
    out += buf;
  }
  return out;
}

} // namespace calrecon
