#pragma once

#include "errors.hpp"
#include "image.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace calrecon {

inline std::vector<double> magnitude(ComplexImage const &x)
{
  std::vector<double> m(x.size());
  for (std::size_t p = 0; p < x.size(); ++p) { m[p] = std::abs(x[p]); }
  return m;
}

/// 10 log10(max|ref|^2 / MSE) on magnitudes; +inf when the MSE is zero.
inline double psnr(ComplexImage const &x, ComplexImage const &ref)
{
  if (!x.same_shape(ref)) { throw InvalidArgument("psnr: shape mismatch"); }
  double peak = 0.0, mse = 0.0;
  for (std::size_t p = 0; p < x.size(); ++p) {
    double const r = std::abs(ref[p]);
    peak = std::max(peak, r);
    double const d = std::abs(x[p]) - r;
    mse += d * d;
  }
  if (!(peak > 0.0)) { throw InvalidArgument("psnr: reference maximum must be > 0"); }
  mse /= static_cast<double>(x.size());
  if (mse == 0.0) { return std::numeric_limits<double>::infinity(); }
  return 10.0 * std::log10(peak * peak / mse);
}

/// Mean SSIM over all fully contained 11x11 Gaussian windows (sigma 1.5) of
/// the magnitudes. The dynamic range L is taken over both images so the
/// score is symmetric in its arguments.
inline double ssim(ComplexImage const &x, ComplexImage const &ref)
{
  if (!x.same_shape(ref)) { throw InvalidArgument("ssim: shape mismatch"); }
  constexpr std::size_t kWin = 11;
  std::size_t const h = x.height(), w = x.width();
  if (h < kWin || w < kWin) { throw InvalidArgument("ssim: image smaller than the 11x11 window"); }
  auto const a = magnitude(x);
  auto const b = magnitude(ref);
  auto const [amin, amax] = std::ranges::minmax(a);
  auto const [bmin, bmax] = std::ranges::minmax(b);
  double const range = std::max(amax, bmax) - std::min(amin, bmin);
  if (!(std::ranges::max(b) > 0.0)) { throw InvalidArgument("ssim: reference maximum must be > 0"); }
  double const c1 = (0.01 * range) * (0.01 * range);
  double const c2 = (0.03 * range) * (0.03 * range);
  if (range == 0.0) { return 1.0; }

  double g[kWin];
  double gs = 0.0;
  for (std::size_t i = 0; i < kWin; ++i) {
    double const d = static_cast<double>(i) - 5.0;
    g[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
    gs += g[i];
  }
  for (auto &v : g) { v /= gs; }

  double acc = 0.0;
  std::size_t count = 0;
  for (std::size_t y0 = 0; y0 + kWin <= h; ++y0) {
    for (std::size_t x0 = 0; x0 + kWin <= w; ++x0) {
      double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
      for (std::size_t i = 0; i < kWin; ++i) {
        for (std::size_t j = 0; j < kWin; ++j) {
          double const wt = g[i] * g[j];
          double const va = a[(y0 + i) * w + x0 + j], vb = b[(y0 + i) * w + x0 + j];
          ma += wt * va;
          mb += wt * vb;
          saa += wt * va * va;
          sbb += wt * vb * vb;
          sab += wt * va * vb;
        }
      }
      double const va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
      acc += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  }
  return acc / static_cast<double>(count);
}

} // namespace calrecon
