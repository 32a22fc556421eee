#pragma once

#include "errors.hpp"
#include "rng.hpp"
#include "tensor_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

namespace calrecon {

enum class MaskKind
{
  Gaussian1D,
  Uniform1D,
  Gaussian2D,
};

inline std::string to_string(MaskKind k)
{
  switch (k) {
  case MaskKind::Gaussian1D: return "Gaussian1D";
  case MaskKind::Uniform1D: return "Uniform1D";
  case MaskKind::Gaussian2D: return "Gaussian2D";
  }
  return "?";
}

inline MaskKind parse_mask_kind(std::string const &s)
{
  if (s == "Gaussian1D" || s == "gaussian1d") { return MaskKind::Gaussian1D; }
  if (s == "Uniform1D" || s == "uniform1d") { return MaskKind::Uniform1D; }
  if (s == "Gaussian2D" || s == "gaussian2d") { return MaskKind::Gaussian2D; }
  throw InvalidArgument("unknown mask kind: " + s);
}

/// Binary k-space sampling pattern. 1-D kinds select whole columns (phase
/// encode lines); every row of such a mask is identical.
struct SamplingMask
{
  std::size_t height = 0;
  std::size_t width = 0;
  MaskKind kind = MaskKind::Gaussian1D;
  double accel = 1.0;
  double acs_fraction = 0.08;
  std::uint64_t seed = 0;
  std::vector<std::uint8_t> bits;

  std::uint8_t operator()(std::size_t y, std::size_t x) const { return bits[y * width + x]; }
  std::size_t sampled() const { return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1})); }
  bool column_sampled(std::size_t x) const { return bits[x] != 0; }

  bool operator==(SamplingMask const &) const = default;
};

namespace detail {

// Weighted sampling without replacement (Efraimidis-Spirakis): keep the n
// candidates with the largest log(u)/w.
inline std::vector<std::size_t> weighted_pick(std::vector<std::size_t> const &candidates,
                                              std::vector<double> const &weights, std::size_t n, CounterRng &rng)
{
  n = std::min(n, candidates.size());
  std::vector<std::pair<double, std::size_t>> keyed;
  keyed.reserve(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    double const u = rng.uniform_open();
    double const key = weights[i] > 0 ? std::log(u) / weights[i] : -std::numeric_limits<double>::infinity();
    keyed.emplace_back(key, candidates[i]);
  }
  std::partial_sort(keyed.begin(), keyed.begin() + static_cast<std::ptrdiff_t>(n), keyed.end(),
                    [](auto const &a, auto const &b) { return a.first > b.first || (a.first == b.first && a.second < b.second); });
  std::vector<std::size_t> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) { out.push_back(keyed[i].second); }
  return out;
}

inline std::size_t band_start(std::size_t n, std::size_t band) { return n / 2 - band / 2; }

} // namespace detail

/// Builds a deterministic undersampling mask with a fully sampled centre
/// band. The sampled budget is round(W / R) lines for 1-D kinds and
/// round(H * W / R) points for Gaussian2D, ACS included.
inline SamplingMask generate_mask(MaskKind kind, std::size_t height, std::size_t width, double accel,
                                  double acs_fraction, std::uint64_t seed)
{
  if (height == 0 || width == 0) { throw InvalidArgument("generate_mask: zero dimension"); }
  if (!(accel >= 1.0)) { throw InvalidArgument("generate_mask: acceleration must be >= 1"); }
  if (accel > static_cast<double>(width)) { throw InvalidArgument("generate_mask: acceleration exceeds width"); }
  if (!(acs_fraction * static_cast<double>(width) >= 1.0) || acs_fraction > 1.0) {
    throw InvalidArgument("generate_mask: acs_fraction * width must be >= 1");
  }

  SamplingMask m{height, width, kind, accel, acs_fraction, seed, std::vector<std::uint8_t>(height * width, 0)};
  CounterRng rng(seed, 0x6d61736bull);

  if (kind == MaskKind::Gaussian1D || kind == MaskKind::Uniform1D) {
    auto const budget = static_cast<std::size_t>(std::llround(static_cast<double>(width) / accel));
    std::size_t const acs = std::min<std::size_t>(static_cast<std::size_t>(std::llround(acs_fraction * width)), budget);
    std::vector<std::uint8_t> cols(width, 0);
    std::size_t const a0 = detail::band_start(width, acs);
    for (std::size_t x = a0; x < a0 + acs; ++x) { cols[x] = 1; }

    std::vector<std::size_t> cand;
    std::vector<double> wts;
    double const sigma = static_cast<double>(width) / 6.0;
    for (std::size_t x = 0; x < width; ++x) {
      if (cols[x]) { continue; }
      cand.push_back(x);
      double const d = static_cast<double>(x) - static_cast<double>(width / 2);
      wts.push_back(kind == MaskKind::Uniform1D ? 1.0 : std::exp(-d * d / (2.0 * sigma * sigma)));
    }
    for (auto x : detail::weighted_pick(cand, wts, budget - acs, rng)) { cols[x] = 1; }
    for (std::size_t y = 0; y < height; ++y) {
      std::copy(cols.begin(), cols.end(), m.bits.begin() + static_cast<std::ptrdiff_t>(y * width));
    }
    return m;
  }

  // Gaussian2D: a central ACS block plus variable-density random points.
  auto const budget = static_cast<std::size_t>(std::llround(static_cast<double>(height * width) / accel));
  auto const acs_h = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(acs_fraction * height)));
  auto const acs_w = static_cast<std::size_t>(std::llround(acs_fraction * width));
  std::size_t const y0 = detail::band_start(height, acs_h);
  std::size_t const x0 = detail::band_start(width, acs_w);
  std::size_t placed = 0;
  for (std::size_t y = y0; y < y0 + acs_h && placed < budget; ++y) {
    for (std::size_t x = x0; x < x0 + acs_w && placed < budget; ++x) {
      m.bits[y * width + x] = 1;
      ++placed;
    }
  }
  std::vector<std::size_t> cand;
  std::vector<double> wts;
  double const sy = static_cast<double>(height) / 6.0;
  double const sx = static_cast<double>(width) / 6.0;
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      if (m.bits[y * width + x]) { continue; }
      double const dy = (static_cast<double>(y) - static_cast<double>(height / 2)) / sy;
      double const dx = (static_cast<double>(x) - static_cast<double>(width / 2)) / sx;
      cand.push_back(y * width + x);
      wts.push_back(std::exp(-0.5 * (dy * dy + dx * dx)));
    }
  }
  for (auto i : detail::weighted_pick(cand, wts, budget - placed, rng)) { m.bits[i] = 1; }
  return m;
}

/// Mask bits as an H x W real64 tensor of 0/1.
inline Tensor to_tensor(SamplingMask const &m)
{
  std::vector<double> v(m.bits.begin(), m.bits.end());
  return Tensor{{m.height, m.width}, std::move(v)};
}

inline std::string mask_sidecar_text(SamplingMask const &m)
{
  std::ostringstream os;
  os.precision(17);
  os << "kind=" << to_string(m.kind) << "\n"
     << "height=" << m.height << "\n"
     << "width=" << m.width << "\n"
     << "accel=" << m.accel << "\n"
     << "acs_fraction=" << m.acs_fraction << "\n"
     << "seed=" << m.seed << "\n";
  return os.str();
}

inline std::map<std::string, std::string> parse_key_values(std::string const &text)
{
  std::map<std::string, std::string> kv;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') { continue; }
    auto const eq = line.find('=');
    if (eq == std::string::npos) { throw FormatError("expected key=value line: " + line); }
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

inline std::string read_text_file(std::filesystem::path const &p)
{
  std::ifstream f(p);
  if (!f) { throw IoError("cannot open for reading: " + p.string()); }
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

inline void write_text_file(std::filesystem::path const &p, std::string const &text)
{
  std::ofstream f(p, std::ios::trunc);
  if (!f) { throw IoError("cannot open for writing: " + p.string()); }
  f << text;
  if (!f) { throw IoError("write failed: " + p.string()); }
}

inline std::filesystem::path sidecar_path(std::filesystem::path p) { return p += ".txt"; }

inline void write_mask(std::filesystem::path const &path, SamplingMask const &m)
{
  write_tensor(path, to_tensor(m));
  write_text_file(sidecar_path(path), mask_sidecar_text(m));
}

/// Reads mask bits plus metadata. A missing sidecar is tolerated; the
/// metadata then carries defaults and only the bits are meaningful.
inline SamplingMask read_mask(std::filesystem::path const &path)
{
  Tensor const t = read_tensor(path);
  if (t.dtype() != DType::Real64 || t.dims.size() != 2) { throw FormatError("mask must be a rank-2 real64 tensor"); }
  SamplingMask m;
  m.height = t.dims[0];
  m.width = t.dims[1];
  m.bits.resize(m.height * m.width);
  for (std::size_t i = 0; i < m.bits.size(); ++i) {
    double const v = t.real()[i];
    if (v != 0.0 && v != 1.0) { throw FormatError("mask entries must be 0 or 1", 8 + 4 + 16 + 4 + 8 * i); }
    m.bits[i] = v != 0.0;
  }
  if (auto const sc = sidecar_path(path); std::filesystem::exists(sc)) {
    auto kv = parse_key_values(read_text_file(sc));
    try {
      if (kv.contains("kind")) { m.kind = parse_mask_kind(kv["kind"]); }
      if (kv.contains("accel")) { m.accel = std::stod(kv["accel"]); }
      if (kv.contains("acs_fraction")) { m.acs_fraction = std::stod(kv["acs_fraction"]); }
      if (kv.contains("seed")) { m.seed = std::stoull(kv["seed"]); }
    } catch (std::exception const &e) {
      throw FormatError(std::string("bad mask sidecar value: ") + e.what());
    }
  }
  return m;
}

} // namespace calrecon
