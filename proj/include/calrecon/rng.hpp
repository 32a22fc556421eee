#pragma once

#include "image.hpp"

#include <cmath>
#include <cstdint>
#include <numbers>

namespace calrecon {

inline constexpr std::uint64_t splitmix64(std::uint64_t z) noexcept
{
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

/// Counter-based generator: draw i of stream (seed, stream) is a pure function
/// of (seed, stream, i), so results do not depend on call interleaving.
class CounterRng
{
public:
  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0) noexcept
    : key_(splitmix64(seed ^ splitmix64(stream + 0x632BE59BD9B4E019ull)))
  {
  }

  std::uint64_t next_u64() noexcept { return splitmix64(key_ ^ splitmix64(counter_++)); }

  /// Uniform on [0, 1).
  double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform on (0, 1], safe for log().
  double uniform_open() noexcept { return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53; }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller; the second variate is cached.
  double normal() noexcept
  {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double const r = std::sqrt(-2.0 * std::log(uniform_open()));
    double const th = 2.0 * std::numbers::pi * uniform();
    spare_ = r * std::sin(th);
    has_spare_ = true;
    return r * std::cos(th);
  }

  /// Circular complex normal with E|z|^2 = 1.
  Cx complex_normal() noexcept
  {
    double const re = normal();
    double const im = normal();
    return {re * std::numbers::sqrt2 / 2.0, im * std::numbers::sqrt2 / 2.0};
  }

  std::uint64_t below(std::uint64_t n) noexcept { return n == 0 ? 0 : next_u64() % n; }

private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Image of i.i.d. CN(0, 1) samples.
inline ComplexImage complex_noise(std::size_t h, std::size_t w, std::uint64_t seed, std::uint64_t stream = 0)
{
  CounterRng rng(seed, stream);
  ComplexImage out(h, w);
  for (auto &v : out.span()) { v = rng.complex_normal(); }
  return out;
}

} // namespace calrecon
