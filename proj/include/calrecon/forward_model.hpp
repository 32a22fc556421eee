#pragma once

#include "fft.hpp"
#include "image.hpp"
#include "mask.hpp"
#include "rng.hpp"
#include "tensor_io.hpp"

#include <cmath>
#include <numbers>
#include <optional>

namespace calrecon {

/// Per-coil complex sensitivity maps, normalized so sum_c |S_c|^2 = 1 at
/// every pixel.
struct CoilSensitivities
{
  std::size_t coils = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<Cx> maps; // C x H x W

  std::span<Cx const> coil(std::size_t c) const
  {
    return std::span<Cx const>(maps).subspan(c * height * width, height * width);
  }

  bool operator==(CoilSensitivities const &) const = default;
};

/// Smooth synthetic coil profiles: Gaussian bumps centred on a ring outside
/// the field of view, each with a slowly varying phase ramp. Coil 0 carries
/// no phase, so the single-coil case normalizes to exactly 1.
inline CoilSensitivities synth_coil_maps(std::size_t coils, std::size_t height, std::size_t width, std::uint64_t seed)
{
  if (coils < 1) { throw InvalidArgument("synth_coil_maps: need at least one coil"); }
  if (height == 0 || width == 0) { throw InvalidArgument("synth_coil_maps: zero dimension"); }

  CoilSensitivities s{coils, height, width, std::vector<Cx>(coils * height * width)};
  CounterRng rng(seed, 0x636f696cull);
  double const size = static_cast<double>(std::max(height, width));
  double const ring = 0.7 * size;
  double const spread = 0.5 * size;
  double const cy = 0.5 * static_cast<double>(height);
  double const cx = 0.5 * static_cast<double>(width);

  for (std::size_t c = 0; c < coils; ++c) {
    double const angle = 2.0 * std::numbers::pi * (static_cast<double>(c) + rng.uniform(-0.15, 0.15)) / static_cast<double>(coils);
    double const py = cy + ring * std::sin(angle);
    double const px = cx + ring * std::cos(angle);
    double const phase0 = c == 0 ? 0.0 : rng.uniform(-std::numbers::pi, std::numbers::pi);
    double const gy = c == 0 ? 0.0 : rng.uniform(-1.0, 1.0) * std::numbers::pi / size;
    double const gx = c == 0 ? 0.0 : rng.uniform(-1.0, 1.0) * std::numbers::pi / size;
    for (std::size_t y = 0; y < height; ++y) {
      for (std::size_t x = 0; x < width; ++x) {
        double const dy = static_cast<double>(y) - py;
        double const dx = static_cast<double>(x) - px;
        double const mag = std::exp(-(dy * dy + dx * dx) / (2.0 * spread * spread));
        double const ph = phase0 + gy * (static_cast<double>(y) - cy) + gx * (static_cast<double>(x) - cx);
        s.maps[(c * height + y) * width + x] = c == 0 ? Cx{mag, 0.0} : std::polar(mag, ph);
      }
    }
  }

  std::size_t const n = height * width;
  for (std::size_t p = 0; p < n; ++p) {
    double acc = 0.0;
    for (std::size_t c = 0; c < coils; ++c) { acc += std::norm(s.maps[c * n + p]); }
    double const inv = 1.0 / std::sqrt(acc);
    for (std::size_t c = 0; c < coils; ++c) { s.maps[c * n + p] *= inv; }
  }
  return s;
}

/// Uniform unit sensitivity for C = 1 (single-coil experiments and oracles).
inline CoilSensitivities unit_coil(std::size_t height, std::size_t width)
{
  return {1, height, width, std::vector<Cx>(height * width, Cx{1.0, 0.0})};
}

inline Tensor to_tensor(CoilSensitivities const &s) { return Tensor{{s.coils, s.height, s.width}, s.maps}; }

inline CoilSensitivities sensitivities_from_tensor(Tensor const &t)
{
  if (t.dtype() != DType::Complex128 || t.dims.size() != 3) {
    throw FormatError("sensitivities must be a rank-3 complex128 tensor");
  }
  return {t.dims[0], t.dims[1], t.dims[2], t.complex()};
}

/// A = M F S_c for every coil.
struct ForwardOperator
{
  SamplingMask mask;
  CoilSensitivities sens;
  std::optional<double> noise_precision; // simulation only

  ForwardOperator() = default;
  ForwardOperator(SamplingMask m, CoilSensitivities s, std::optional<double> gamma_true = std::nullopt)
    : mask(std::move(m)), sens(std::move(s)), noise_precision(gamma_true)
  {
    if (mask.height != sens.height || mask.width != sens.width) {
      throw InvalidArgument("ForwardOperator: mask and sensitivities disagree on shape");
    }
  }

  std::size_t height() const { return mask.height; }
  std::size_t width() const { return mask.width; }
  std::size_t coils() const { return sens.coils; }

  /// Same coils, different sampling pattern.
  ForwardOperator with_mask(SamplingMask m) const { return ForwardOperator(std::move(m), sens, noise_precision); }
};

inline MultiCoilKSpace apply_forward(ComplexImage const &x, ForwardOperator const &op)
{
  if (x.height() != op.height() || x.width() != op.width()) { throw InvalidArgument("apply_forward: shape mismatch"); }
  std::size_t const h = op.height(), w = op.width(), n = h * w;
  MultiCoilKSpace y(op.coils(), h, w);
  for (std::size_t c = 0; c < op.coils(); ++c) {
    auto plane = y.coil(c);
    auto sc = op.sens.coil(c);
    for (std::size_t p = 0; p < n; ++p) { plane[p] = sc[p] * x[p]; }
    fft2c_inplace(plane, h, w);
    for (std::size_t p = 0; p < n; ++p) {
      if (!op.mask.bits[p]) { plane[p] = Cx{}; }
    }
  }
  return y;
}

inline ComplexImage apply_adjoint(MultiCoilKSpace const &y, ForwardOperator const &op)
{
  if (y.coils() != op.coils() || y.height() != op.height() || y.width() != op.width()) {
    throw InvalidArgument("apply_adjoint: shape mismatch");
  }
  std::size_t const h = op.height(), w = op.width(), n = h * w;
  ComplexImage x(h, w);
  std::vector<Cx> plane(n);
  for (std::size_t c = 0; c < op.coils(); ++c) {
    auto yc = y.coil(c);
    for (std::size_t p = 0; p < n; ++p) { plane[p] = op.mask.bits[p] ? yc[p] : Cx{}; }
    ifft2c_inplace(plane, h, w);
    auto sc = op.sens.coil(c);
    for (std::size_t p = 0; p < n; ++p) { x[p] += std::conj(sc[p]) * plane[p]; }
  }
  return x;
}

/// A^H A x without materializing k-space.
inline ComplexImage apply_normal(ComplexImage const &x, ForwardOperator const &op)
{
  return apply_adjoint(apply_forward(x, op), op);
}

/// Adds i.i.d. circular complex Gaussian noise with E|n|^2 = noise_std^2 to
/// the sampled entries only.
inline MultiCoilKSpace add_noise(MultiCoilKSpace y, SamplingMask const &mask, double noise_std, std::uint64_t seed)
{
  if (!(noise_std >= 0.0)) { throw InvalidArgument("add_noise: noise_std must be >= 0"); }
  if (y.height() != mask.height || y.width() != mask.width) { throw InvalidArgument("add_noise: shape mismatch"); }
  if (noise_std == 0.0) { return y; }
  std::size_t const n = y.plane();
  for (std::size_t c = 0; c < y.coils(); ++c) {
    CounterRng rng(seed, c);
    auto plane = y.coil(c);
    for (std::size_t p = 0; p < n; ++p) {
      Cx const z = rng.complex_normal();
      if (mask.bits[p]) { plane[p] += noise_std * z; }
    }
  }
  return y;
}

/// Sensitivity-weighted adjoint coil combination of the measured data.
inline ComplexImage zero_filled(MultiCoilKSpace const &y, ForwardOperator const &op) { return apply_adjoint(y, op); }

} // namespace calrecon
