#pragma once

#include "errors.hpp"
#include "fft.hpp"
#include "image.hpp"
#include "mask.hpp"
#include "rng.hpp"
#include "score_prior.hpp"
#include "tensor_io.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

namespace calrecon {

/// Architecture of the toy score network.
///
/// widths[i] is the channel count at resolution level i (level 0 is full
/// resolution); the last entry is the bottleneck. Each of the first
/// widths.size() - 1 levels contributes one skip connection, so the network
/// exposes L = widths.size() - 1 calibratable layers. Layer l = 1 is the
/// shallowest (full resolution) skip, l = L the deepest.
///
/// The network is wrapped in the usual variance-exploding preconditioning:
///   D(x, sigma) = c_skip x + c_out F(c_in x, sigma)
/// with c_skip = sd^2 / (sigma^2 + sd^2), c_out = sigma sd / sqrt(sigma^2 + sd^2),
/// c_in = 1 / sqrt(sigma^2 + sd^2), sd = sigma_data. Noise level enters F as
/// a per-channel bias on the first layer and a per-channel log-gain on the
/// output, both interpolated in log(sigma) from tables of `embed_anchors`
/// rows spanning [sigma_min, sigma_max].
struct UNetDescriptor
{
  std::vector<std::size_t> widths{8, 16, 24};
  std::size_t kernel = 3;
  std::size_t embed_anchors = 8;
  double sigma_min = 0.01;
  double sigma_max = 1.0;
  double sigma_data = 0.5;

  std::size_t skip_layers() const { return widths.empty() ? 0 : widths.size() - 1; }

  bool operator==(UNetDescriptor const &) const = default;
};

struct ConvSpec
{
  std::size_t cin = 0;
  std::size_t cout = 0;
  std::size_t offset = 0; // weights [cout][cin][k][k], then bias [cout]

  std::size_t weight_count(std::size_t k) const { return cout * cin * k * k; }
  std::size_t param_count(std::size_t k) const { return weight_count(k) + cout; }
};

/// Flat parameter layout: encoder convs (levels 0..L-1), bottleneck, decoder
/// convs (levels L-1..0), output conv, then the bias and gain tables.
struct UNetLayout
{
  std::vector<ConvSpec> enc;
  ConvSpec bottleneck;
  std::vector<ConvSpec> dec; // dec[i] belongs to level i
  ConvSpec out;
  std::size_t embed_offset = 0;
  std::size_t gain_offset = 0; // [anchor][2] output log-gains
  std::size_t total = 0;

  explicit UNetLayout(UNetDescriptor const &d)
  {
    if (d.widths.size() < 2) { throw InvalidArgument("UNetDescriptor: need at least two levels"); }
    if (d.kernel % 2 == 0) { throw InvalidArgument("UNetDescriptor: kernel size must be odd"); }
    if (d.embed_anchors < 2) { throw InvalidArgument("UNetDescriptor: need at least two embedding anchors"); }
    if (!(d.sigma_max > d.sigma_min && d.sigma_min > 0.0 && d.sigma_data > 0.0)) {
      throw InvalidArgument("UNetDescriptor: bad sigma range");
    }
    std::size_t const k = d.kernel;
    std::size_t const L = d.skip_layers();
    std::size_t off = 0;
    auto add = [&](std::size_t cin, std::size_t cout) {
      ConvSpec c{cin, cout, off};
      off += c.param_count(k);
      return c;
    };
    enc.push_back(add(2, d.widths[0]));
    for (std::size_t i = 1; i < L; ++i) { enc.push_back(add(d.widths[i - 1], d.widths[i])); }
    bottleneck = add(d.widths[L - 1], d.widths[L]);
    dec.resize(L);
    for (std::size_t i = L; i-- > 0;) { dec[i] = add(d.widths[i + 1] + d.widths[i], d.widths[i]); }
    out = add(d.widths[0], 2);
    embed_offset = off;
    gain_offset = off + d.embed_anchors * d.widths[0];
    total = gain_offset + d.embed_anchors * 2;
  }
};

struct UNetWeights
{
  UNetDescriptor descriptor;
  std::vector<double> params;

  bool operator==(UNetWeights const &) const = default;
};

/// Multi-channel real feature map, channel-major then row-major.
struct FeatureMap
{
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> v;

  FeatureMap() = default;
  FeatureMap(std::size_t c, std::size_t h, std::size_t w) : channels(c), height(h), width(w), v(c * h * w, 0.0) {}

  std::size_t plane() const { return height * width; }
  double *channel(std::size_t c) { return v.data() + c * plane(); }
  double const *channel(std::size_t c) const { return v.data() + c * plane(); }
};

namespace nn {

inline FeatureMap conv2d(FeatureMap const &in, ConvSpec const &spec, std::size_t k, double const *params)
{
  if (in.channels != spec.cin) { throw InvalidArgument("conv2d: channel mismatch"); }
  std::size_t const h = in.height, w = in.width, n = in.plane();
  auto const r = static_cast<std::ptrdiff_t>(k / 2);
  FeatureMap out(spec.cout, h, w);
  double const *W = params + spec.offset;
  double const *B = W + spec.weight_count(k);
  for (std::size_t o = 0; o < spec.cout; ++o) {
    double *dst = out.channel(o);
    std::fill(dst, dst + n, B[o]);
    for (std::size_t i = 0; i < spec.cin; ++i) {
      double const *src = in.channel(i);
      double const *wk = W + (o * spec.cin + i) * k * k;
      for (std::size_t ky = 0; ky < k; ++ky) {
        std::ptrdiff_t const dy = static_cast<std::ptrdiff_t>(ky) - r;
        std::size_t const y0 = dy < 0 ? static_cast<std::size_t>(-dy) : 0;
        std::size_t const y1 = dy > 0 ? h - static_cast<std::size_t>(dy) : h;
        for (std::size_t kx = 0; kx < k; ++kx) {
          std::ptrdiff_t const dx = static_cast<std::ptrdiff_t>(kx) - r;
          std::size_t const x0 = dx < 0 ? static_cast<std::size_t>(-dx) : 0;
          std::size_t const x1 = dx > 0 ? w - static_cast<std::size_t>(dx) : w;
          double const wt = wk[ky * k + kx];
          for (std::size_t y = y0; y < y1; ++y) {
            double *drow = dst + y * w;
            double const *srow = src + static_cast<std::size_t>(static_cast<std::ptrdiff_t>(y) + dy) * w +
                                 static_cast<std::size_t>(static_cast<std::ptrdiff_t>(x0) + dx);
            for (std::size_t x = x0; x < x1; ++x) { drow[x] += wt * srow[x - x0]; }
          }
        }
      }
    }
  }
  return out;
}

inline void relu_inplace(FeatureMap &f)
{
  for (double &v : f.v) { v = v > 0.0 ? v : 0.0; }
}

inline FeatureMap avg_pool2(FeatureMap const &in)
{
  FeatureMap out(in.channels, in.height / 2, in.width / 2);
  for (std::size_t c = 0; c < in.channels; ++c) {
    double const *s = in.channel(c);
    double *d = out.channel(c);
    for (std::size_t y = 0; y < out.height; ++y) {
      for (std::size_t x = 0; x < out.width; ++x) {
        std::size_t const a = (2 * y) * in.width + 2 * x;
        d[y * out.width + x] = 0.25 * (s[a] + s[a + 1] + s[a + in.width] + s[a + in.width + 1]);
      }
    }
  }
  return out;
}

inline FeatureMap upsample2(FeatureMap const &in)
{
  FeatureMap out(in.channels, in.height * 2, in.width * 2);
  for (std::size_t c = 0; c < in.channels; ++c) {
    double const *s = in.channel(c);
    double *d = out.channel(c);
    for (std::size_t y = 0; y < out.height; ++y) {
      for (std::size_t x = 0; x < out.width; ++x) { d[y * out.width + x] = s[(y / 2) * in.width + x / 2]; }
    }
  }
  return out;
}

inline FeatureMap concat(FeatureMap const &a, FeatureMap const &b)
{
  FeatureMap out(a.channels + b.channels, a.height, a.width);
  std::copy(a.v.begin(), a.v.end(), out.v.begin());
  std::copy(b.v.begin(), b.v.end(), out.v.begin() + static_cast<std::ptrdiff_t>(a.v.size()));
  return out;
}

/// Noise-level embedding weights: linear interpolation in log(sigma)
/// between anchor rows. Returns (row0, row1, frac).
struct EmbedPick
{
  std::size_t row0 = 0;
  std::size_t row1 = 0;
  double frac = 0.0;
};

inline EmbedPick embed_pick(UNetDescriptor const &d, double sigma)
{
  double const lo = std::log(d.sigma_min), hi = std::log(d.sigma_max);
  double const K1 = static_cast<double>(d.embed_anchors - 1);
  double pos = (std::log(std::max(sigma, 1e-300)) - lo) / (hi - lo) * K1;
  pos = std::clamp(pos, 0.0, K1);
  auto const r0 = std::min(static_cast<std::size_t>(std::floor(pos)), d.embed_anchors - 2);
  return {r0, r0 + 1, pos - static_cast<double>(r0)};
}

inline double embed_value(double const *table, std::size_t stride, EmbedPick const &pk, std::size_t c)
{
  return (1.0 - pk.frac) * table[pk.row0 * stride + c] + pk.frac * table[pk.row1 * stride + c];
}

/// exp(log-gain) per output channel at this noise level.
inline std::array<double, 2> output_gain(UNetDescriptor const &, UNetLayout const &layout, double const *params,
                                         EmbedPick const &pk)
{
  double const *g = params + layout.gain_offset;
  return {std::exp(embed_value(g, 2, pk, 0)), std::exp(embed_value(g, 2, pk, 1))};
}

struct Precond
{
  double c_skip, c_out, c_in;
};

inline Precond preconditioning(double sigma, double sigma_data)
{
  double const s2 = sigma * sigma, d2 = sigma_data * sigma_data;
  return {d2 / (s2 + d2), sigma * sigma_data / std::sqrt(s2 + d2), 1.0 / std::sqrt(s2 + d2)};
}

inline FeatureMap to_channels(ComplexImage const &x, double scale)
{
  FeatureMap f(2, x.height(), x.width());
  for (std::size_t p = 0; p < x.size(); ++p) {
    f.v[p] = scale * x[p].real();
    f.v[x.size() + p] = scale * x[p].imag();
  }
  return f;
}

inline ComplexImage from_channels(FeatureMap const &f)
{
  ComplexImage x(f.height, f.width);
  for (std::size_t p = 0; p < x.size(); ++p) { x[p] = {f.v[p], f.v[x.size() + p]}; }
  return x;
}

} // namespace nn

/// Low band of a real feature plane: centered-DFT coefficients with
/// normalized radius |k| / Nyquist <= radius are kept, the rest zeroed.
inline std::vector<double> low_band(double const *plane, std::size_t h, std::size_t w, double radius)
{
  ComplexImage tmp(h, w);
  for (std::size_t p = 0; p < h * w; ++p) { tmp[p] = plane[p]; }
  tmp = fft2c(tmp);
  double const ny = h > 1 ? static_cast<double>(h / 2) : 1.0;
  double const nx = w > 1 ? static_cast<double>(w / 2) : 1.0;
  for (std::size_t y = 0; y < h; ++y) {
    double const fy = (static_cast<double>(y) - static_cast<double>(h / 2)) / ny;
    for (std::size_t x = 0; x < w; ++x) {
      double const fx = (static_cast<double>(x) - static_cast<double>(w / 2)) / nx;
      if (std::sqrt(fy * fy + fx * fx) > radius) { tmp(y, x) = Cx{}; }
    }
  }
  tmp = ifft2c(tmp);
  std::vector<double> out(h * w);
  for (std::size_t p = 0; p < h * w; ++p) { out[p] = tmp[p].real(); }
  return out;
}

/// F -> alpha * LOW(F) + beta * HIGH(F), HIGH(F) = F - LOW(F), per channel.
inline FeatureMap modulate_bands(FeatureMap const &f, double alpha, double beta, double radius)
{
  FeatureMap out(f.channels, f.height, f.width);
  for (std::size_t c = 0; c < f.channels; ++c) {
    double const *src = f.channel(c);
    auto const low = low_band(src, f.height, f.width, radius);
    double *dst = out.channel(c);
    for (std::size_t p = 0; p < f.plane(); ++p) { dst[p] = alpha * low[p] + beta * (src[p] - low[p]); }
  }
  return out;
}

struct UNetOptions
{
  double band_radius = 0.25;
  bool calibrate = true; // false bypasses the band split entirely
};

/// Skip features before and after calibration, for inspection.
struct UNetTrace
{
  std::vector<FeatureMap> skips;
  std::vector<FeatureMap> modulated;
};

inline void validate(UNetWeights const &w)
{
  UNetLayout const layout(w.descriptor);
  if (w.params.size() != layout.total) {
    throw FormatError("UNet payload length " + std::to_string(w.params.size()) + " does not match descriptor (" +
                      std::to_string(layout.total) + ")");
  }
}

/// Raw network output F(c_in x, sigma) as a complex image (channel 0 real,
/// channel 1 imaginary). Skip features are band-modulated by delta unless
/// options.calibrate is false.
inline ComplexImage unet_forward(ComplexImage const &x, double sigma, CalibrationVector const &delta, UNetWeights const &wts,
                                 UNetOptions const &options = {}, UNetTrace *trace = nullptr)
{
  validate(wts);
  auto const &d = wts.descriptor;
  UNetLayout const layout(d);
  std::size_t const L = d.skip_layers();
  std::size_t const k = d.kernel;
  std::size_t const div = std::size_t{1} << L;
  if (x.height() % div != 0 || x.width() % div != 0) {
    throw InvalidArgument("unet_forward: image dimensions must be divisible by 2^L");
  }
  if (options.calibrate && delta.size() != 2 * L) {
    throw InvalidArgument("unet_forward: calibration vector length must equal 2L");
  }
  double const *P = wts.params.data();
  auto const pc = nn::preconditioning(sigma, d.sigma_data);

  FeatureMap a = nn::conv2d(nn::to_channels(x, pc.c_in), layout.enc[0], k, P);
  auto const pick = nn::embed_pick(d, sigma);
  double const *E = P + layout.embed_offset;
  for (std::size_t c = 0; c < d.widths[0]; ++c) {
    double const b = nn::embed_value(E, d.widths[0], pick, c);
    double *ch = a.channel(c);
    for (std::size_t p = 0; p < a.plane(); ++p) { ch[p] += b; }
  }
  nn::relu_inplace(a);

  std::vector<FeatureMap> skips;
  skips.push_back(std::move(a));
  for (std::size_t i = 1; i < L; ++i) {
    FeatureMap s = nn::conv2d(nn::avg_pool2(skips.back()), layout.enc[i], k, P);
    nn::relu_inplace(s);
    skips.push_back(std::move(s));
  }
  FeatureMap u = nn::conv2d(nn::avg_pool2(skips.back()), layout.bottleneck, k, P);
  nn::relu_inplace(u);

  if (trace) {
    trace->skips = skips;
    trace->modulated.clear();
    trace->modulated.resize(L);
  }
  for (std::size_t i = L; i-- > 0;) {
    FeatureMap skip = options.calibrate ? modulate_bands(skips[i], delta.alpha(i), delta.beta(i), options.band_radius)
                                        : skips[i];
    if (trace) { trace->modulated[i] = skip; }
    u = nn::conv2d(nn::concat(nn::upsample2(u), skip), layout.dec[i], k, P);
    nn::relu_inplace(u);
  }
  FeatureMap o = nn::conv2d(u, layout.out, k, P);
  auto const gain = nn::output_gain(d, layout, P, pick);
  for (std::size_t c = 0; c < 2; ++c) {
    double *ch = o.channel(c);
    for (std::size_t p = 0; p < o.plane(); ++p) { ch[p] *= gain[c]; }
  }
  return nn::from_channels(o);
}

/// Denoiser D(x, sigma) = c_skip x + c_out F(c_in x, sigma).
inline ComplexImage unet_denoise(ComplexImage const &x, double sigma, CalibrationVector const &delta,
                                 UNetWeights const &wts, UNetOptions const &options = {})
{
  auto const pc = nn::preconditioning(sigma, wts.descriptor.sigma_data);
  ComplexImage out = unet_forward(x, sigma, delta, wts, options);
  for (std::size_t p = 0; p < out.size(); ++p) { out[p] = pc.c_skip * x[p] + pc.c_out * out[p]; }
  return out;
}

/// Seeded He-normal initialization; biases and the embedding table start at
/// zero and the output layer is scaled down.
inline UNetWeights init_weights(UNetDescriptor const &d, std::uint64_t seed)
{
  UNetLayout const layout(d);
  UNetWeights w{d, std::vector<double>(layout.total, 0.0)};
  CounterRng rng(seed, 0x756e6574ull);
  std::size_t const k = d.kernel;
  auto fill = [&](ConvSpec const &c, double gain) {
    double const sd = gain * std::sqrt(2.0 / static_cast<double>(c.cin * k * k));
    for (std::size_t i = 0; i < c.weight_count(k); ++i) { w.params[c.offset + i] = sd * rng.normal(); }
  };
  for (auto const &c : layout.enc) { fill(c, 1.0); }
  fill(layout.bottleneck, 1.0);
  for (auto const &c : layout.dec) { fill(c, 1.0); }
  fill(layout.out, 0.1);
  return w;
}

inline std::string descriptor_text(UNetDescriptor const &d)
{
  std::ostringstream os;
  os.precision(17);
  os << "widths=";
  for (std::size_t i = 0; i < d.widths.size(); ++i) { os << (i ? "," : "") << d.widths[i]; }
  os << "\nkernel=" << d.kernel << "\nembed_anchors=" << d.embed_anchors << "\nsigma_min=" << d.sigma_min
     << "\nsigma_max=" << d.sigma_max << "\nsigma_data=" << d.sigma_data << "\nskip_layers=" << d.skip_layers()
     << "\nparam_count=" << UNetLayout(d).total << "\n";
  return os.str();
}

inline std::filesystem::path arch_path(std::filesystem::path p) { return p += ".arch"; }

inline void save_weights(std::filesystem::path const &path, UNetWeights const &w)
{
  validate(w);
  write_tensor(path, Tensor{{w.params.size()}, w.params});
  write_text_file(arch_path(path), descriptor_text(w.descriptor));
}

inline UNetDescriptor parse_descriptor(std::string const &text)
{
  auto kv = parse_key_values(text);
  auto field = [&](char const *key) -> std::string const & {
    auto it = kv.find(key);
    if (it == kv.end()) { throw FormatError(std::string("UNet descriptor missing field '") + key + "'"); }
    return it->second;
  };
  auto as_size = [&](char const *key) {
    try {
      return static_cast<std::size_t>(std::stoull(field(key)));
    } catch (std::logic_error const &) {
      throw FormatError(std::string("UNet descriptor field '") + key + "' is not an integer");
    }
  };
  auto as_double = [&](char const *key) {
    try {
      return std::stod(field(key));
    } catch (std::logic_error const &) {
      throw FormatError(std::string("UNet descriptor field '") + key + "' is not a number");
    }
  };

  UNetDescriptor d;
  d.widths.clear();
  std::istringstream ws(field("widths"));
  std::string tok;
  while (std::getline(ws, tok, ',')) {
    try {
      d.widths.push_back(static_cast<std::size_t>(std::stoull(tok)));
    } catch (std::logic_error const &) {
      throw FormatError("UNet descriptor field 'widths' is malformed");
    }
  }
  d.kernel = as_size("kernel");
  d.embed_anchors = as_size("embed_anchors");
  d.sigma_min = as_double("sigma_min");
  d.sigma_max = as_double("sigma_max");
  d.sigma_data = as_double("sigma_data");
  if (as_size("skip_layers") != d.skip_layers()) {
    throw FormatError("UNet descriptor field 'skip_layers' disagrees with widths");
  }
  try {
    if (as_size("param_count") != UNetLayout(d).total) {
      throw FormatError("UNet descriptor field 'param_count' disagrees with architecture");
    }
  } catch (InvalidArgument const &e) {
    throw FormatError(std::string("UNet descriptor invalid: ") + e.what());
  }
  return d;
}

inline UNetWeights load_weights(std::filesystem::path const &path)
{
  UNetWeights w;
  w.descriptor = parse_descriptor(read_text_file(arch_path(path)));
  Tensor const t = read_tensor(path);
  if (t.dtype() != DType::Real64 || t.dims.size() != 1) { throw FormatError("UNet payload must be a rank-1 real64 tensor"); }
  w.params = t.real();
  validate(w);
  return w;
}

/// Score prior backed by the toy U-Net: s = (D(x, sigma) - x) / sigma^2.
class UNetPrior final : public ScorePrior
{
public:
  explicit UNetPrior(UNetWeights weights, UNetOptions options = {}) : w_(std::move(weights)), options_(options)
  {
    validate(w_);
  }

  ComplexImage evaluate(ComplexImage const &x, Timestep t, CalibrationVector const &delta) const override
  {
    // Below the trained range the score is evaluated at sigma_min; callers
    // scale it by sigma^2, so sigma = 0 still yields the identity step.
    double const sigma = std::max(t.sigma, w_.descriptor.sigma_min);
    ComplexImage const den = unet_denoise(x, sigma, delta, w_, options_);
    ComplexImage s(x.height(), x.width());
    double const inv = 1.0 / (sigma * sigma);
    for (std::size_t p = 0; p < s.size(); ++p) { s[p] = (den[p] - x[p]) * inv; }
    return s;
  }

  std::size_t layer_count() const override { return w_.descriptor.skip_layers(); }
  std::string name() const override { return "unet"; }

  UNetWeights const &weights() const { return w_; }
  UNetOptions const &options() const { return options_; }

private:
  UNetWeights w_;
  UNetOptions options_;
};

} // namespace calrecon
