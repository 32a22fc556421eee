#pragma once

#include "errors.hpp"
#include "image.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numeric>
#include <string>
#include <variant>
#include <vector>

namespace calrecon {

// Binary layout (all integers little-endian):
//   8 bytes   magic "BRTENSR1"
//   u32       rank
//   u64 x r   dims
//   u32       dtype code (1 = real64, 2 = complex128)
//   payload   little-endian IEEE-754 doubles, re/im interleaved for complex
inline constexpr std::array<char, 8> kTensorMagic{'B', 'R', 'T', 'E', 'N', 'S', 'R', '1'};
inline constexpr std::uint32_t kMaxTensorRank = 8;

enum class DType : std::uint32_t
{
  Real64 = 1,
  Complex128 = 2,
};

inline std::size_t dtype_size(DType d) { return d == DType::Real64 ? 8 : 16; }

struct Tensor
{
  std::vector<std::uint64_t> dims;
  std::variant<std::vector<double>, std::vector<Cx>> data;

  DType dtype() const { return std::holds_alternative<std::vector<double>>(data) ? DType::Real64 : DType::Complex128; }
  std::uint64_t element_count() const
  {
    return std::accumulate(dims.begin(), dims.end(), std::uint64_t{1}, std::multiplies<>());
  }
  std::vector<double> const &real() const { return std::get<std::vector<double>>(data); }
  std::vector<Cx> const &complex() const { return std::get<std::vector<Cx>>(data); }

  bool operator==(Tensor const &) const = default;
};

namespace detail {

inline void put_u32(std::vector<unsigned char> &buf, std::uint32_t v)
{
  for (int i = 0; i < 4; ++i) { buf.push_back(static_cast<unsigned char>(v >> (8 * i))); }
}
inline void put_u64(std::vector<unsigned char> &buf, std::uint64_t v)
{
  for (int i = 0; i < 8; ++i) { buf.push_back(static_cast<unsigned char>(v >> (8 * i))); }
}
inline void put_f64(std::vector<unsigned char> &buf, double v) { put_u64(buf, std::bit_cast<std::uint64_t>(v)); }

class ByteReader
{
public:
  explicit ByteReader(std::vector<unsigned char> const &b) : bytes_(b) {}

  std::uint64_t offset() const { return pos_; }
  std::uint64_t remaining() const { return bytes_.size() - pos_; }

  std::uint32_t u32(char const *field)
  {
    need(4, field);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) { v |= std::uint32_t{bytes_[pos_ + i]} << (8 * i); }
    pos_ += 4;
    return v;
  }
  std::uint64_t u64(char const *field)
  {
    need(8, field);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) { v |= std::uint64_t{bytes_[pos_ + i]} << (8 * i); }
    pos_ += 8;
    return v;
  }
  double f64(char const *field) { return std::bit_cast<double>(u64(field)); }

  void need(std::uint64_t n, char const *field) const
  {
    if (remaining() < n) { throw FormatError(std::string("truncated tensor file while reading ") + field, pos_); }
  }

  std::vector<unsigned char> const &bytes_;
  std::uint64_t pos_ = 0;
};

} // namespace detail

inline std::vector<unsigned char> encode_tensor(Tensor const &t)
{
  if (t.dims.empty() || t.dims.size() > kMaxTensorRank) { throw InvalidArgument("encode_tensor: rank must be in [1, 8]"); }
  std::uint64_t const n = t.element_count();
  std::uint64_t const stored = std::visit([](auto const &v) { return std::uint64_t(v.size()); }, t.data);
  if (n != stored) { throw InvalidArgument("encode_tensor: element count does not match dims"); }

  std::vector<unsigned char> buf(kTensorMagic.begin(), kTensorMagic.end());
  detail::put_u32(buf, static_cast<std::uint32_t>(t.dims.size()));
  for (auto d : t.dims) { detail::put_u64(buf, d); }
  detail::put_u32(buf, static_cast<std::uint32_t>(t.dtype()));
  buf.reserve(buf.size() + n * dtype_size(t.dtype()));
  if (t.dtype() == DType::Real64) {
    for (double v : t.real()) { detail::put_f64(buf, v); }
  } else {
    for (Cx const &v : t.complex()) {
      detail::put_f64(buf, v.real());
      detail::put_f64(buf, v.imag());
    }
  }
  return buf;
}

inline Tensor decode_tensor(std::vector<unsigned char> const &bytes)
{
  detail::ByteReader rd(bytes);
  rd.need(kTensorMagic.size(), "magic");
  if (!std::equal(kTensorMagic.begin(), kTensorMagic.end(), bytes.begin())) {
    throw FormatError("bad tensor magic", 0);
  }
  rd.pos_ = kTensorMagic.size();

  std::uint64_t const rank_at = rd.offset();
  std::uint32_t const rank = rd.u32("rank");
  if (rank == 0 || rank > kMaxTensorRank) { throw FormatError("tensor rank out of range", rank_at); }

  Tensor t;
  std::uint64_t n = 1;
  bool overflow = false;
  for (std::uint32_t i = 0; i < rank; ++i) {
    std::uint64_t const d = rd.u64("dims");
    t.dims.push_back(d);
    if (d != 0 && n > ~std::uint64_t{0} / d) { overflow = true; }
    n *= d;
  }
  std::uint64_t const dtype_at = rd.offset();
  std::uint32_t const code = rd.u32("dtype");
  if (code != static_cast<std::uint32_t>(DType::Real64) && code != static_cast<std::uint32_t>(DType::Complex128)) {
    throw FormatError("unknown tensor dtype code " + std::to_string(code), dtype_at);
  }
  auto const dtype = static_cast<DType>(code);
  std::uint64_t const esize = dtype_size(dtype);
  if (overflow || n > rd.remaining() / esize) {
    throw FormatError("truncated tensor payload", rd.offset() + rd.remaining());
  }
  std::uint64_t const payload = n * esize;
  if (rd.remaining() != payload) {
    throw FormatError("trailing bytes after tensor payload", rd.offset() + payload);
  }

  if (dtype == DType::Real64) {
    std::vector<double> v(n);
    for (auto &x : v) { x = rd.f64("payload"); }
    t.data = std::move(v);
  } else {
    std::vector<Cx> v(n);
    for (auto &x : v) {
      double const re = rd.f64("payload");
      double const im = rd.f64("payload");
      x = {re, im};
    }
    t.data = std::move(v);
  }
  return t;
}

inline void write_tensor(std::filesystem::path const &path, Tensor const &t)
{
  auto const bytes = encode_tensor(t);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) { throw IoError("cannot open for writing: " + path.string()); }
  f.write(reinterpret_cast<char const *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) { throw IoError("write failed: " + path.string()); }
}

inline Tensor read_tensor(std::filesystem::path const &path)
{
  std::ifstream f(path, std::ios::binary);
  if (!f) { throw IoError("cannot open for reading: " + path.string()); }
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (f.bad()) { throw IoError("read failed: " + path.string()); }
  return decode_tensor(bytes);
}

// Conversions between tensors and the domain containers. Each checks the
// dtype and rank it expects and reports a format error otherwise.

inline Tensor to_tensor(ComplexImage const &img)
{
  return Tensor{{img.height(), img.width()}, img.data()};
}

inline ComplexImage image_from_tensor(Tensor const &t)
{
  if (t.dtype() != DType::Complex128) { throw FormatError("expected complex128 tensor for image"); }
  if (t.dims.size() != 2) { throw FormatError("expected rank-2 tensor for image"); }
  return ComplexImage(t.dims[0], t.dims[1], t.complex());
}

inline Tensor to_tensor(MultiCoilKSpace const &k)
{
  return Tensor{{k.coils(), k.height(), k.width()}, k.data()};
}

inline MultiCoilKSpace kspace_from_tensor(Tensor const &t)
{
  if (t.dtype() != DType::Complex128) { throw FormatError("expected complex128 tensor for k-space"); }
  if (t.dims.size() != 3) { throw FormatError("expected rank-3 tensor for k-space"); }
  return MultiCoilKSpace(t.dims[0], t.dims[1], t.dims[2], t.complex());
}

} // namespace calrecon
