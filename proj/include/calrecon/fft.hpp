#pragma once

#include "image.hpp"

#include <fftw3.h>

#include <cmath>
#include <map>
#include <mutex>
#include <tuple>

namespace calrecon {

namespace detail {

// FFTW planning is not thread-safe; execution of an existing plan on new
// arrays is. Plans are created once per (h, w, sign) and kept for the
// lifetime of the process.
class FftPlanCache
{
public:
  static FftPlanCache &instance()
  {
    static FftPlanCache cache;
    return cache;
  }

  fftw_plan get(std::size_t h, std::size_t w, int sign)
  {
    std::lock_guard lock(mutex_);
    auto key = std::make_tuple(h, w, sign);
    if (auto it = plans_.find(key); it != plans_.end()) { return it->second; }
    auto *buf = fftw_alloc_complex(h * w);
    fftw_plan p = fftw_plan_dft_2d(static_cast<int>(h), static_cast<int>(w), buf, buf, sign,
                                   FFTW_ESTIMATE | FFTW_UNALIGNED);
    fftw_free(buf);
    plans_.emplace(key, p);
    return p;
  }

  FftPlanCache(FftPlanCache const &) = delete;
  FftPlanCache &operator=(FftPlanCache const &) = delete;

private:
  FftPlanCache() = default;
  ~FftPlanCache()
  {
    for (auto &[k, p] : plans_) { fftw_destroy_plan(p); }
  }

  std::mutex mutex_;
  std::map<std::tuple<std::size_t, std::size_t, int>, fftw_plan> plans_;
};

// out[j] = in[(j + s) mod n] along both axes.
inline void circshift_into(Cx const *in, Cx *out, std::size_t h, std::size_t w, std::size_t sy, std::size_t sx)
{
  for (std::size_t y = 0; y < h; ++y) {
    Cx const *row = in + ((y + sy) % h) * w;
    Cx *orow = out + y * w;
    for (std::size_t x = 0; x < w; ++x) { orow[x] = row[(x + sx) % w]; }
  }
}

inline void centered_transform(Cx const *in, Cx *out, std::size_t h, std::size_t w, int sign)
{
  if (h == 0 || w == 0) { throw InvalidArgument("fft2c: zero dimension"); }
  std::vector<Cx> tmp(h * w);
  // ifftshift: shift by floor(n/2) forward
  circshift_into(in, tmp.data(), h, w, h / 2, w / 2);
  fftw_plan p = FftPlanCache::instance().get(h, w, sign);
  fftw_execute_dft(p, reinterpret_cast<fftw_complex *>(tmp.data()), reinterpret_cast<fftw_complex *>(tmp.data()));
  // fftshift: shift by ceil(n/2) forward, i.e. floor(n/2) backward
  circshift_into(tmp.data(), out, h, w, h - h / 2, w - w / 2);
  double const scale = 1.0 / std::sqrt(static_cast<double>(h * w));
  for (std::size_t i = 0; i < h * w; ++i) { out[i] *= scale; }
}

} // namespace detail

/// Centered, orthonormal 2-D DFT. The DC coefficient sits at (H/2, W/2).
inline ComplexImage fft2c(ComplexImage const &img)
{
  ComplexImage out(img.height(), img.width());
  detail::centered_transform(img.raw(), out.raw(), img.height(), img.width(), FFTW_FORWARD);
  return out;
}

/// Inverse (and adjoint) of fft2c.
inline ComplexImage ifft2c(ComplexImage const &ksp)
{
  ComplexImage out(ksp.height(), ksp.width());
  detail::centered_transform(ksp.raw(), out.raw(), ksp.height(), ksp.width(), FFTW_BACKWARD);
  return out;
}

/// In-place variants on a raw plane, used by the coil loops.
inline void fft2c_inplace(std::span<Cx> plane, std::size_t h, std::size_t w)
{
  detail::centered_transform(plane.data(), plane.data(), h, w, FFTW_FORWARD);
}
inline void ifft2c_inplace(std::span<Cx> plane, std::size_t h, std::size_t w)
{
  detail::centered_transform(plane.data(), plane.data(), h, w, FFTW_BACKWARD);
}

} // namespace calrecon
