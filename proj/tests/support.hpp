#pragma once

#include <calrecon/calrecon.hpp>

#include <cstdlib>
#include <filesystem>
#include <string>

namespace testing_support {

using namespace calrecon;

inline ComplexImage random_image(std::size_t h, std::size_t w, std::uint64_t seed) { return complex_noise(h, w, seed, 77); }

inline MultiCoilKSpace random_kspace(std::size_t c, std::size_t h, std::size_t w, std::uint64_t seed)
{
  MultiCoilKSpace y(c, h, w);
  CounterRng rng(seed, 78);
  for (auto &v : y.span()) { v = rng.complex_normal(); }
  return y;
}

inline double rel_diff(Cx a, Cx b) { return std::abs(a - b) / std::max(std::abs(a), std::abs(b)); }

inline double rel_err(ComplexImage const &a, ComplexImage const &ref) { return norm2(a - ref) / norm2(ref); }

inline SamplingMask full_mask(std::size_t h, std::size_t w)
{
  SamplingMask m;
  m.height = h;
  m.width = w;
  m.accel = 1.0;
  m.acs_fraction = 1.0;
  m.bits.assign(h * w, 1);
  return m;
}

/// Column-by-column dense matrix of a linear image operator, row-major n x n.
template <typename Op>
std::vector<Cx> dense_matrix(Op const &op, std::size_t h, std::size_t w)
{
  std::size_t const n = h * w;
  std::vector<Cx> m(n * n);
  for (std::size_t j = 0; j < n; ++j) {
    ComplexImage e(h, w);
    e[j] = 1.0;
    ComplexImage const col = op(e);
    for (std::size_t i = 0; i < n; ++i) { m[i * n + j] = col[i]; }
  }
  return m;
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(std::string const &name)
{
  auto p = std::filesystem::temp_directory_path() / ("calrecon_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

} // namespace testing_support
