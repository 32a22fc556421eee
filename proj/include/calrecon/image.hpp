#pragma once

#include "errors.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace calrecon {

using Cx = std::complex<double>;

/// H x W complex image stored row-major. This is the reconstruction variable
/// and also the container for a single coil's k-space plane.
class ComplexImage
{
public:
  ComplexImage() = default;
  ComplexImage(std::size_t height, std::size_t width, Cx fill = Cx{})
    : h_(height), w_(width), data_(height * width, fill)
  {
  }
  ComplexImage(std::size_t height, std::size_t width, std::vector<Cx> data)
    : h_(height), w_(width), data_(std::move(data))
  {
    if (data_.size() != h_ * w_) { throw InvalidArgument("ComplexImage: data length != height*width"); }
  }

  std::size_t height() const noexcept { return h_; }
  std::size_t width() const noexcept { return w_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  Cx &operator()(std::size_t y, std::size_t x) { return data_[y * w_ + x]; }
  Cx const &operator()(std::size_t y, std::size_t x) const { return data_[y * w_ + x]; }
  Cx &operator[](std::size_t i) { return data_[i]; }
  Cx const &operator[](std::size_t i) const { return data_[i]; }

  std::span<Cx> span() noexcept { return data_; }
  std::span<Cx const> span() const noexcept { return data_; }
  std::vector<Cx> const &data() const noexcept { return data_; }
  std::vector<Cx> &data() noexcept { return data_; }
  Cx *raw() noexcept { return data_.data(); }
  Cx const *raw() const noexcept { return data_.data(); }

  bool same_shape(ComplexImage const &o) const noexcept { return h_ == o.h_ && w_ == o.w_; }

  ComplexImage &operator+=(ComplexImage const &o)
  {
    check_shape(o);
    for (std::size_t i = 0; i < data_.size(); ++i) { data_[i] += o.data_[i]; }
    return *this;
  }
  ComplexImage &operator-=(ComplexImage const &o)
  {
    check_shape(o);
    for (std::size_t i = 0; i < data_.size(); ++i) { data_[i] -= o.data_[i]; }
    return *this;
  }
  ComplexImage &operator*=(Cx a)
  {
    for (auto &v : data_) { v *= a; }
    return *this;
  }
  ComplexImage &operator*=(double a)
  {
    for (auto &v : data_) { v *= a; }
    return *this;
  }

  /// this += a * o
  void axpy(Cx a, ComplexImage const &o)
  {
    check_shape(o);
    for (std::size_t i = 0; i < data_.size(); ++i) { data_[i] += a * o.data_[i]; }
  }

  bool operator==(ComplexImage const &) const = default;

private:
  void check_shape(ComplexImage const &o) const
  {
    if (!same_shape(o)) { throw InvalidArgument("ComplexImage: shape mismatch"); }
  }

  std::size_t h_ = 0;
  std::size_t w_ = 0;
  std::vector<Cx> data_;
};

inline ComplexImage operator+(ComplexImage a, ComplexImage const &b) { return a += b; }
inline ComplexImage operator-(ComplexImage a, ComplexImage const &b) { return a -= b; }
inline ComplexImage operator*(Cx s, ComplexImage a) { return a *= s; }
inline ComplexImage operator*(double s, ComplexImage a) { return a *= s; }

/// <a, b> = sum conj(a_i) b_i
inline Cx dot(std::span<Cx const> a, std::span<Cx const> b)
{
  if (a.size() != b.size()) { throw InvalidArgument("dot: length mismatch"); }
  Cx acc{};
  for (std::size_t i = 0; i < a.size(); ++i) { acc += std::conj(a[i]) * b[i]; }
  return acc;
}
inline Cx dot(ComplexImage const &a, ComplexImage const &b) { return dot(a.span(), b.span()); }

inline double norm2_squared(std::span<Cx const> a)
{
  double acc = 0.0;
  for (auto const &v : a) { acc += std::norm(v); }
  return acc;
}
inline double norm2(std::span<Cx const> a) { return std::sqrt(norm2_squared(a)); }
inline double norm2(ComplexImage const &a) { return norm2(a.span()); }

inline double max_abs(std::span<Cx const> a)
{
  double m = 0.0;
  for (auto const &v : a) { m = std::max(m, std::abs(v)); }
  return m;
}
inline double max_abs(ComplexImage const &a) { return max_abs(a.span()); }

inline double max_abs_diff(ComplexImage const &a, ComplexImage const &b)
{
  if (!a.same_shape(b)) { throw InvalidArgument("max_abs_diff: shape mismatch"); }
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) { m = std::max(m, std::abs(a[i] - b[i])); }
  return m;
}

inline bool all_finite(std::span<Cx const> a)
{
  return std::all_of(a.begin(), a.end(), [](Cx const &v) { return std::isfinite(v.real()) && std::isfinite(v.imag()); });
}

/// C x H x W complex samples, coil-major then row-major.
class MultiCoilKSpace
{
public:
  MultiCoilKSpace() = default;
  MultiCoilKSpace(std::size_t coils, std::size_t height, std::size_t width)
    : c_(coils), h_(height), w_(width), data_(coils * height * width)
  {
  }
  MultiCoilKSpace(std::size_t coils, std::size_t height, std::size_t width, std::vector<Cx> data)
    : c_(coils), h_(height), w_(width), data_(std::move(data))
  {
    if (data_.size() != c_ * h_ * w_) { throw InvalidArgument("MultiCoilKSpace: data length != C*H*W"); }
  }

  std::size_t coils() const noexcept { return c_; }
  std::size_t height() const noexcept { return h_; }
  std::size_t width() const noexcept { return w_; }
  std::size_t plane() const noexcept { return h_ * w_; }

  std::span<Cx> coil(std::size_t c) { return std::span<Cx>(data_).subspan(c * plane(), plane()); }
  std::span<Cx const> coil(std::size_t c) const { return std::span<Cx const>(data_).subspan(c * plane(), plane()); }

  std::span<Cx> span() noexcept { return data_; }
  std::span<Cx const> span() const noexcept { return data_; }
  std::vector<Cx> const &data() const noexcept { return data_; }
  std::vector<Cx> &data() noexcept { return data_; }

  bool operator==(MultiCoilKSpace const &) const = default;

private:
  std::size_t c_ = 0;
  std::size_t h_ = 0;
  std::size_t w_ = 0;
  std::vector<Cx> data_;
};

inline Cx dot(MultiCoilKSpace const &a, MultiCoilKSpace const &b) { return dot(a.span(), b.span()); }

} // namespace calrecon
