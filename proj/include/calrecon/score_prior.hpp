#pragma once

#include "errors.hpp"
#include "fft.hpp"
#include "image.hpp"

#include <algorithm>
#include <cstddef>
#include <string>
#include <vector>

namespace calrecon {

/// Packed per-skip-layer gains [alpha_1, beta_1, ..., alpha_L, beta_L].
/// alpha scales the low-frequency band of a skip feature, beta the high
/// band. Every entry stays in [0, 2]; all ones leaves the network unchanged.
class CalibrationVector
{
public:
  static constexpr double kMin = 0.0;
  static constexpr double kMax = 2.0;

  CalibrationVector() = default;

  static CalibrationVector identity(std::size_t layers) { return CalibrationVector(std::vector<double>(2 * layers, 1.0)); }

  /// Throws InvalidArgument on odd length or out-of-range entries.
  explicit CalibrationVector(std::vector<double> packed) : v_(std::move(packed))
  {
    if (v_.size() % 2 != 0) { throw InvalidArgument("CalibrationVector: length must be even"); }
    for (double d : v_) {
      if (!(d >= kMin && d <= kMax)) { throw InvalidArgument("CalibrationVector: entries must lie in [0, 2]"); }
    }
  }

  /// Clamps arbitrary optimizer output into range. NaN maps to 1.
  static CalibrationVector clamped(std::vector<double> packed)
  {
    for (double &d : packed) { d = std::isnan(d) ? 1.0 : std::clamp(d, kMin, kMax); }
    return CalibrationVector(std::move(packed));
  }

  std::size_t layers() const noexcept { return v_.size() / 2; }
  std::size_t size() const noexcept { return v_.size(); }
  double alpha(std::size_t l) const { return v_.at(2 * l); }
  double beta(std::size_t l) const { return v_.at(2 * l + 1); }
  double operator[](std::size_t i) const { return v_[i]; }
  std::vector<double> const &packed() const noexcept { return v_; }

  bool is_identity() const
  {
    return std::all_of(v_.begin(), v_.end(), [](double d) { return d == 1.0; });
  }

  bool operator==(CalibrationVector const &) const = default;

private:
  std::vector<double> v_;
};

struct Timestep
{
  std::size_t index = 0; // 1-based reverse-step index t
  double sigma = 0.0;
};

/// Score model s(x, t; delta) ~ grad_x log p_t(x | delta).
class ScorePrior
{
public:
  virtual ~ScorePrior() = default;

  virtual ComplexImage evaluate(ComplexImage const &x, Timestep t, CalibrationVector const &delta) const = 0;

  /// Number of calibratable skip layers; 0 for analytic priors.
  virtual std::size_t layer_count() const = 0;

  virtual std::string name() const = 0;
};

/// Gaussian prior N(mu, Sigma) with Sigma circulant, i.e. diagonal in the
/// centered DFT basis with eigenvalues `spectrum` (k-space layout).
struct GaussianPriorParams
{
  ComplexImage mean;
  std::vector<double> spectrum;

  static GaussianPriorParams white(std::size_t h, std::size_t w, double variance = 1.0)
  {
    return {ComplexImage(h, w), std::vector<double>(h * w, variance)};
  }
};

/// Score of the noised density N(mu, Sigma + sigma^2 I):
///   -(Sigma + sigma^2 I)^{-1} (x - mu).
inline ComplexImage gaussian_score(ComplexImage const &x, double sigma, GaussianPriorParams const &p)
{
  if (!(sigma >= 0.0)) { throw InvalidArgument("gaussian_score: sigma must be >= 0"); }
  if (!x.same_shape(p.mean) || p.spectrum.size() != x.size()) { throw InvalidArgument("gaussian_score: shape mismatch"); }
  for (double l : p.spectrum) {
    if (!(l > 0.0)) { throw InvalidArgument("gaussian_score: spectrum must be strictly positive"); }
  }
  ComplexImage k = fft2c(p.mean - x);
  double const s2 = sigma * sigma;
  for (std::size_t i = 0; i < k.size(); ++i) { k[i] /= p.spectrum[i] + s2; }
  return ifft2c(k);
}

class GaussianPrior final : public ScorePrior
{
public:
  explicit GaussianPrior(GaussianPriorParams params) : params_(std::move(params))
  {
    for (double l : params_.spectrum) {
      if (!(l > 0.0)) { throw InvalidArgument("GaussianPrior: spectrum must be strictly positive"); }
    }
  }

  ComplexImage evaluate(ComplexImage const &x, Timestep t, CalibrationVector const &) const override
  {
    return gaussian_score(x, t.sigma, params_);
  }
  std::size_t layer_count() const override { return 0; }
  std::string name() const override { return "gaussian"; }

  GaussianPriorParams const &params() const { return params_; }

private:
  GaussianPriorParams params_;
};

} // namespace calrecon
