#pragma once

#include "errors.hpp"
#include "image.hpp"
#include "rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

namespace calrecon {

enum class PhantomKind
{
  Ellipse,
  PiecewiseSmooth,
  TextureMix,
};

inline std::string to_string(PhantomKind k)
{
  switch (k) {
  case PhantomKind::Ellipse: return "ellipse";
  case PhantomKind::PiecewiseSmooth: return "piecewise-smooth";
  case PhantomKind::TextureMix: return "texture-mix";
  }
  return "?";
}

inline PhantomKind parse_phantom_kind(std::string const &s)
{
  if (s == "ellipse") { return PhantomKind::Ellipse; }
  if (s == "piecewise-smooth") { return PhantomKind::PiecewiseSmooth; }
  if (s == "texture-mix") { return PhantomKind::TextureMix; }
  throw InvalidArgument("unknown phantom kind '" + s + "'");
}

struct PhantomSpec
{
  PhantomKind kind = PhantomKind::Ellipse;
  std::size_t size = 64;
  double contrast_exponent = 1.0; // magnitude -> magnitude^exponent
  double bias_amplitude = 0.0;    // multiplicative smooth field in [1-a, 1+a]
  double resolution_scale = 1.0;  // >1 zooms in, <1 shrinks the object
  double phase_amplitude = 0.4;   // radians, smooth background phase
  std::uint64_t seed = 0;

  void validate() const
  {
    if (size < 4) { throw InvalidArgument("PhantomSpec: size must be >= 4"); }
    if (!(contrast_exponent > 0.0)) { throw InvalidArgument("PhantomSpec: contrast exponent must be > 0"); }
    if (!(bias_amplitude >= 0.0 && bias_amplitude < 1.0)) { throw InvalidArgument("PhantomSpec: bias amplitude must be in [0, 1)"); }
    if (!(resolution_scale > 0.0)) { throw InvalidArgument("PhantomSpec: resolution scale must be > 0"); }
  }
};

namespace detail {

struct Ellipse
{
  double value, a, b, x0, y0, theta;
};

inline bool inside(Ellipse const &e, double x, double y)
{
  double const c = std::cos(e.theta), s = std::sin(e.theta);
  double const u = ((x - e.x0) * c + (y - e.y0) * s) / e.a;
  double const v = (-(x - e.x0) * s + (y - e.y0) * c) / e.b;
  return u * u + v * v <= 1.0;
}

// Shepp-Logan style head with seeded jitter of geometry and intensities.
inline std::vector<Ellipse> head_ellipses(CounterRng &rng)
{
  std::vector<Ellipse> e = {
      {1.0, 0.69, 0.92, 0.0, 0.0, 0.0},          {-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0},
      {-0.2, 0.11, 0.31, 0.22, 0.0, -0.31416},   {-0.2, 0.16, 0.41, -0.22, 0.0, 0.31416},
      {0.1, 0.21, 0.25, 0.0, 0.35, 0.0},         {0.1, 0.046, 0.046, 0.0, 0.1, 0.0},
      {0.1, 0.046, 0.046, 0.0, -0.1, 0.0},       {0.1, 0.046, 0.023, -0.08, -0.605, 0.0},
      {0.1, 0.023, 0.023, 0.0, -0.606, 0.0},     {0.1, 0.023, 0.046, 0.06, -0.605, 0.0},
  };
  for (std::size_t i = 2; i < e.size(); ++i) {
    e[i].x0 += rng.uniform(-0.05, 0.05);
    e[i].y0 += rng.uniform(-0.05, 0.05);
    e[i].a *= rng.uniform(0.8, 1.2);
    e[i].b *= rng.uniform(0.8, 1.2);
    e[i].theta += rng.uniform(-0.3, 0.3);
    e[i].value *= rng.uniform(0.6, 1.6);
  }
  double const sx = rng.uniform(0.9, 1.05), sy = rng.uniform(0.9, 1.05);
  for (auto &el : e) {
    el.a *= sx;
    el.x0 *= sx;
    el.b *= sy;
    el.y0 *= sy;
  }
  return e;
}

// Low-order cosine field normalized to max |f| = 1 over the grid.
inline std::vector<double> smooth_field(std::size_t n, CounterRng &rng, int order)
{
  std::vector<double> f(n * n, 0.0);
  std::vector<double> coef;
  for (int ky = 0; ky <= order; ++ky) {
    for (int kx = 0; kx <= order; ++kx) { coef.push_back((ky + kx == 0) ? 0.0 : rng.uniform(-1.0, 1.0) / (1.0 + ky + kx)); }
  }
  std::vector<double> ph(coef.size());
  for (auto &p : ph) { p = rng.uniform(0.0, 2.0 * std::numbers::pi); }
  for (std::size_t y = 0; y < n; ++y) {
    for (std::size_t x = 0; x < n; ++x) {
      double const u = (static_cast<double>(x) + 0.5) / static_cast<double>(n);
      double const v = (static_cast<double>(y) + 0.5) / static_cast<double>(n);
      double acc = 0.0;
      std::size_t i = 0;
      for (int ky = 0; ky <= order; ++ky) {
        for (int kx = 0; kx <= order; ++kx, ++i) {
          acc += coef[i] * std::cos(std::numbers::pi * (kx * u + ky * v) + ph[i]);
        }
      }
      f[y * n + x] = acc;
    }
  }
  double const m = std::ranges::max(f, {}, [](double v) { return std::abs(v); });
  if (m > 0.0) {
    for (auto &v : f) { v /= std::abs(m); }
  }
  return f;
}

} // namespace detail

/// Unshifted magnitude in [0, 1] (max exactly 1 unless the image is empty).
inline std::vector<double> phantom_magnitude(PhantomSpec const &spec)
{
  spec.validate();
  std::size_t const n = spec.size;
  CounterRng rng(spec.seed, 0x7068616eull);
  auto const head = detail::head_ellipses(rng);

  // Extra structure for the non-ellipse kinds.
  std::vector<detail::Ellipse> blobs;
  std::vector<double> slopes;
  if (spec.kind == PhantomKind::PiecewiseSmooth) {
    for (int i = 0; i < 6; ++i) {
      blobs.push_back({rng.uniform(0.1, 0.4), rng.uniform(0.08, 0.3), rng.uniform(0.08, 0.3), rng.uniform(-0.4, 0.4),
                       rng.uniform(-0.5, 0.5), rng.uniform(0.0, std::numbers::pi)});
      slopes.push_back(rng.uniform(-0.6, 0.6));
      slopes.push_back(rng.uniform(-0.6, 0.6));
    }
  }
  double const f1 = rng.uniform(6.0, 14.0), f2 = rng.uniform(6.0, 14.0), tang = rng.uniform(0.0, std::numbers::pi);

  std::vector<double> m(n * n, 0.0);
  double const inv_scale = 1.0 / spec.resolution_scale;
  for (std::size_t y = 0; y < n; ++y) {
    for (std::size_t x = 0; x < n; ++x) {
      // [-1, 1] coordinates, y pointing up; scaling the grid zooms the object.
      double const u = (2.0 * (static_cast<double>(x) + 0.5) / static_cast<double>(n) - 1.0) * inv_scale;
      double const v = (1.0 - 2.0 * (static_cast<double>(y) + 0.5) / static_cast<double>(n)) * inv_scale;
      double val = 0.0;
      for (auto const &e : head) {
        if (detail::inside(e, u, v)) { val += e.value; }
      }
      bool const in_head = detail::inside(head[0], u, v);
      if (spec.kind == PhantomKind::PiecewiseSmooth && in_head) {
        for (std::size_t i = 0; i < blobs.size(); ++i) {
          if (detail::inside(blobs[i], u, v)) {
            val += blobs[i].value * (1.0 + slopes[2 * i] * (u - blobs[i].x0) + slopes[2 * i + 1] * (v - blobs[i].y0));
          }
        }
      } else if (spec.kind == PhantomKind::TextureMix && detail::inside(head[1], u, v)) {
        double const c = std::cos(tang), s = std::sin(tang);
        double const t = 0.5 + 0.5 * std::sin(f1 * (c * u + s * v)) * std::cos(f2 * (-s * u + c * v));
        val *= 0.6 + 0.4 * t;
        val += 0.08 * t;
      }
      m[y * n + x] = std::max(val, 0.0);
    }
  }
  double const mx = std::ranges::max(m);
  if (mx > 0.0) {
    for (auto &v : m) { v /= mx; }
  }
  return m;
}

/// Complex phantom: base magnitude in [0, 1], then the domain shift
/// (magnitude^contrast, times a smooth bias field in [1-a, 1+a]), then a
/// smooth phase. The bias field is not renormalized, so the shifted
/// magnitude can reach 1+a.
inline ComplexImage make_phantom(PhantomSpec const &spec)
{
  std::vector<double> mag = phantom_magnitude(spec);
  std::size_t const n = spec.size;
  CounterRng rng(spec.seed, 0x73686966ull);
  auto const bias = detail::smooth_field(n, rng, 2);
  auto const phase = detail::smooth_field(n, rng, 1);

  ComplexImage img(n, n);
  for (std::size_t p = 0; p < n * n; ++p) {
    double a = spec.contrast_exponent == 1.0 ? mag[p] : std::pow(mag[p], spec.contrast_exponent);
    if (spec.bias_amplitude > 0.0) { a *= 1.0 + spec.bias_amplitude * bias[p]; }
    img[p] = std::polar(a, spec.phase_amplitude * phase[p]);
  }
  return img;
}

/// Multiplicative bias field of a PhantomSpec (1 everywhere for a = 0).
inline std::vector<double> bias_field(PhantomSpec const &spec)
{
  spec.validate();
  CounterRng rng(spec.seed, 0x73686966ull);
  auto f = detail::smooth_field(spec.size, rng, 2);
  for (auto &v : f) { v = 1.0 + spec.bias_amplitude * v; }
  return f;
}

} // namespace calrecon
