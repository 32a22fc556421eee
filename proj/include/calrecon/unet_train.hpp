#pragma once

#include "rng.hpp"
#include "unet.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace calrecon {

namespace nn {

/// Backward pass of conv2d. Accumulates weight and bias gradients into
/// `grads` (same layout as the parameter vector) and returns dL/d(input)
/// when `want_input` is set.
inline FeatureMap conv2d_backward(FeatureMap const &in, FeatureMap const &gout, ConvSpec const &spec, std::size_t k,
                                  double const *params, double *grads, bool want_input)
{
  std::size_t const h = in.height, w = in.width, n = in.plane();
  auto const r = static_cast<std::ptrdiff_t>(k / 2);
  double const *W = params + spec.offset;
  double *gW = grads + spec.offset;
  double *gB = gW + spec.weight_count(k);
  FeatureMap gin;
  if (want_input) { gin = FeatureMap(spec.cin, h, w); }

  for (std::size_t o = 0; o < spec.cout; ++o) {
    double const *go = gout.channel(o);
    double bsum = 0.0;
    for (std::size_t p = 0; p < n; ++p) { bsum += go[p]; }
    gB[o] += bsum;
    for (std::size_t i = 0; i < spec.cin; ++i) {
      double const *src = in.channel(i);
      double *gi = want_input ? gin.channel(i) : nullptr;
      std::size_t const widx = (o * spec.cin + i) * k * k;
      for (std::size_t ky = 0; ky < k; ++ky) {
        std::ptrdiff_t const dy = static_cast<std::ptrdiff_t>(ky) - r;
        std::size_t const y0 = dy < 0 ? static_cast<std::size_t>(-dy) : 0;
        std::size_t const y1 = dy > 0 ? h - static_cast<std::size_t>(dy) : h;
        for (std::size_t kx = 0; kx < k; ++kx) {
          std::ptrdiff_t const dx = static_cast<std::ptrdiff_t>(kx) - r;
          std::size_t const x0 = dx < 0 ? static_cast<std::size_t>(-dx) : 0;
          std::size_t const x1 = dx > 0 ? w - static_cast<std::size_t>(dx) : w;
          double const wt = W[widx + ky * k + kx];
          double acc = 0.0;
          for (std::size_t y = y0; y < y1; ++y) {
            double const *grow = go + y * w;
            std::size_t const sbase = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(y) + dy) * w +
                                      static_cast<std::size_t>(static_cast<std::ptrdiff_t>(x0) + dx);
            double const *srow = src + sbase;
            for (std::size_t x = x0; x < x1; ++x) { acc += grow[x] * srow[x - x0]; }
            if (gi) {
              double *girow = gi + sbase;
              for (std::size_t x = x0; x < x1; ++x) { girow[x - x0] += wt * grow[x]; }
            }
          }
          gW[widx + ky * k + kx] += acc;
        }
      }
    }
  }
  return gin;
}

inline void relu_backward_inplace(FeatureMap &g, FeatureMap const &activated)
{
  for (std::size_t i = 0; i < g.v.size(); ++i) {
    if (!(activated.v[i] > 0.0)) { g.v[i] = 0.0; }
  }
}

inline FeatureMap avg_pool2_backward(FeatureMap const &g, std::size_t h, std::size_t w)
{
  FeatureMap out(g.channels, h, w);
  for (std::size_t c = 0; c < g.channels; ++c) {
    double const *s = g.channel(c);
    double *d = out.channel(c);
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) { d[y * w + x] = 0.25 * s[(y / 2) * g.width + x / 2]; }
    }
  }
  return out;
}

inline FeatureMap upsample2_backward(FeatureMap const &g)
{
  FeatureMap out(g.channels, g.height / 2, g.width / 2);
  for (std::size_t c = 0; c < g.channels; ++c) {
    double const *s = g.channel(c);
    double *d = out.channel(c);
    for (std::size_t y = 0; y < g.height; ++y) {
      for (std::size_t x = 0; x < g.width; ++x) { d[(y / 2) * out.width + x / 2] += s[y * g.width + x]; }
    }
  }
  return out;
}

inline void add_into(FeatureMap &a, FeatureMap const &b)
{
  for (std::size_t i = 0; i < a.v.size(); ++i) { a.v[i] += b.v[i]; }
}

/// Activations kept for the backward pass of the uncalibrated network.
struct ForwardCache
{
  FeatureMap z;
  std::vector<FeatureMap> enc_in;
  std::vector<FeatureMap> skips;
  FeatureMap bott_in;
  FeatureMap bott_out;
  std::vector<FeatureMap> dec_in;
  std::vector<FeatureMap> dec_out;
  FeatureMap raw;    // output conv before the gain
  FeatureMap output; // raw times the per-channel gain
  std::array<double, 2> gain{1.0, 1.0};
  EmbedPick pick;
};

inline ForwardCache forward_cached(FeatureMap z, double sigma, UNetWeights const &wts)
{
  auto const &d = wts.descriptor;
  UNetLayout const layout(d);
  std::size_t const L = d.skip_layers(), k = d.kernel;
  double const *P = wts.params.data();
  ForwardCache c;
  c.z = std::move(z);
  c.pick = embed_pick(d, sigma);

  FeatureMap a = conv2d(c.z, layout.enc[0], k, P);
  double const *E = P + layout.embed_offset;
  for (std::size_t ch = 0; ch < d.widths[0]; ++ch) {
    double const b = embed_value(E, d.widths[0], c.pick, ch);
    double *pl = a.channel(ch);
    for (std::size_t p = 0; p < a.plane(); ++p) { pl[p] += b; }
  }
  relu_inplace(a);
  c.skips.push_back(std::move(a));
  for (std::size_t i = 1; i < L; ++i) {
    c.enc_in.push_back(avg_pool2(c.skips.back()));
    FeatureMap s = conv2d(c.enc_in.back(), layout.enc[i], k, P);
    relu_inplace(s);
    c.skips.push_back(std::move(s));
  }
  c.bott_in = avg_pool2(c.skips.back());
  c.bott_out = conv2d(c.bott_in, layout.bottleneck, k, P);
  relu_inplace(c.bott_out);

  c.dec_in.resize(L);
  c.dec_out.resize(L);
  FeatureMap const *u = &c.bott_out;
  for (std::size_t i = L; i-- > 0;) {
    c.dec_in[i] = concat(upsample2(*u), c.skips[i]);
    c.dec_out[i] = conv2d(c.dec_in[i], layout.dec[i], k, P);
    relu_inplace(c.dec_out[i]);
    u = &c.dec_out[i];
  }
  c.raw = conv2d(c.dec_out[0], layout.out, k, P);
  c.gain = output_gain(d, layout, P, c.pick);
  c.output = c.raw;
  for (std::size_t ch = 0; ch < 2; ++ch) {
    double *pl = c.output.channel(ch);
    for (std::size_t p = 0; p < c.output.plane(); ++p) { pl[p] *= c.gain[ch]; }
  }
  return c;
}

/// Gradient of the loss with respect to every parameter, given dL/d(output).
inline void backward(ForwardCache const &c, FeatureMap const &gout, UNetWeights const &wts, std::vector<double> &grads)
{
  auto const &d = wts.descriptor;
  UNetLayout const layout(d);
  std::size_t const L = d.skip_layers(), k = d.kernel;
  double const *P = wts.params.data();
  double *G = grads.data();

  std::vector<FeatureMap> gskip;
  for (auto const &s : c.skips) { gskip.emplace_back(s.channels, s.height, s.width); }

  FeatureMap graw = gout;
  double *gG = G + layout.gain_offset;
  for (std::size_t ch = 0; ch < 2; ++ch) {
    double *g = graw.channel(ch);
    double const *r = c.raw.channel(ch);
    double s = 0.0;
    for (std::size_t p = 0; p < graw.plane(); ++p) {
      s += g[p] * r[p];
      g[p] *= c.gain[ch];
    }
    s *= c.gain[ch];
    gG[c.pick.row0 * 2 + ch] += (1.0 - c.pick.frac) * s;
    gG[c.pick.row1 * 2 + ch] += c.pick.frac * s;
  }
  FeatureMap gu = conv2d_backward(c.dec_out[0], graw, layout.out, k, P, G, true);
  for (std::size_t i = 0; i < L; ++i) {
    relu_backward_inplace(gu, c.dec_out[i]);
    FeatureMap gcat = conv2d_backward(c.dec_in[i], gu, layout.dec[i], k, P, G, true);
    std::size_t const up_ch = d.widths[i + 1];
    std::size_t const pl = gcat.plane();
    FeatureMap gup(up_ch, gcat.height, gcat.width);
    std::copy(gcat.v.begin(), gcat.v.begin() + static_cast<std::ptrdiff_t>(up_ch * pl), gup.v.begin());
    for (std::size_t j = 0; j < d.widths[i] * pl; ++j) { gskip[i].v[j] += gcat.v[up_ch * pl + j]; }
    gu = upsample2_backward(gup);
  }
  relu_backward_inplace(gu, c.bott_out);
  {
    FeatureMap gp = conv2d_backward(c.bott_in, gu, layout.bottleneck, k, P, G, true);
    add_into(gskip[L - 1], avg_pool2_backward(gp, c.skips[L - 1].height, c.skips[L - 1].width));
  }
  for (std::size_t i = L - 1; i >= 1; --i) {
    relu_backward_inplace(gskip[i], c.skips[i]);
    FeatureMap gp = conv2d_backward(c.enc_in[i - 1], gskip[i], layout.enc[i], k, P, G, true);
    add_into(gskip[i - 1], avg_pool2_backward(gp, c.skips[i - 1].height, c.skips[i - 1].width));
  }
  relu_backward_inplace(gskip[0], c.skips[0]);
  double *gE = G + layout.embed_offset;
  for (std::size_t ch = 0; ch < d.widths[0]; ++ch) {
    double const *g = gskip[0].channel(ch);
    double s = 0.0;
    for (std::size_t p = 0; p < gskip[0].plane(); ++p) { s += g[p]; }
    gE[c.pick.row0 * d.widths[0] + ch] += (1.0 - c.pick.frac) * s;
    gE[c.pick.row1 * d.widths[0] + ch] += c.pick.frac * s;
  }
  conv2d_backward(c.z, gskip[0], layout.enc[0], k, P, G, false);
}

/// Weighted denoising score-matching loss for one (clean, noisy) pair:
/// mean over both channels and all pixels of (F(c_in x_noisy) - target)^2,
/// target = (clean - c_skip x_noisy) / c_out. This equals
/// |D - clean|^2 / c_out^2 per element. Optionally accumulates gradients.
inline double dsm_loss(ComplexImage const &clean, ComplexImage const &noisy, double sigma, UNetWeights const &wts,
                       std::vector<double> *grads)
{
  auto const pc = preconditioning(sigma, wts.descriptor.sigma_data);
  ForwardCache c = forward_cached(to_channels(noisy, pc.c_in), sigma, wts);
  std::size_t const n = clean.size();
  double const inv_count = 1.0 / static_cast<double>(2 * n);
  FeatureMap g(2, clean.height(), clean.width());
  double loss = 0.0;
  for (std::size_t p = 0; p < n; ++p) {
    Cx const target = (clean[p] - pc.c_skip * noisy[p]) / pc.c_out;
    double const er = c.output.v[p] - target.real();
    double const ei = c.output.v[n + p] - target.imag();
    loss += er * er + ei * ei;
    g.v[p] = 2.0 * er * inv_count;
    g.v[n + p] = 2.0 * ei * inv_count;
  }
  if (grads) { backward(c, g, wts, *grads); }
  return loss * inv_count;
}

/// Random flip / transpose, used as data augmentation. Transposes are only
/// applied to square images.
inline ComplexImage augment(ComplexImage const &x, std::uint64_t code)
{
  std::size_t const h = x.height(), w = x.width();
  bool const fy = code & 1u, fx = code & 2u, tr = (code & 4u) && h == w;
  ComplexImage out(h, w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t xx = 0; xx < w; ++xx) {
      std::size_t sy = fy ? h - 1 - y : y;
      std::size_t sx = fx ? w - 1 - xx : xx;
      if (tr) { std::swap(sy, sx); }
      out(y, xx) = x(sy, sx);
    }
  }
  return out;
}

} // namespace nn

struct TrainConfig
{
  std::size_t epochs = 150;
  std::size_t batch_size = 4;
  double learning_rate = 0.05;
  double momentum = 0.9;
  double grad_clip = 1.0; // global-norm clip per batch; <= 0 disables
  double sigma_min = 0.01;
  double sigma_max = 1.0;
  double heldout_fraction = 0.2;
  std::size_t heldout_sigmas = 6;
  std::uint64_t seed = 0;
};

struct TrainResult
{
  UNetWeights weights;
  UNetWeights initial;
  double initial_heldout_loss = 0.0;
  double final_heldout_loss = 0.0;
  std::vector<double> epoch_losses;
};

/// Deterministic held-out score-matching loss over a fixed ladder of noise
/// levels and fixed noise draws.
inline double heldout_loss(std::vector<ComplexImage> const &images, UNetWeights const &w, TrainConfig const &cfg)
{
  if (images.empty()) { return 0.0; }
  double acc = 0.0;
  std::size_t count = 0;
  std::size_t const ns = std::max<std::size_t>(cfg.heldout_sigmas, 1);
  for (std::size_t i = 0; i < images.size(); ++i) {
    for (std::size_t j = 0; j < ns; ++j) {
      double const f = ns == 1 ? 0.5 : static_cast<double>(j) / static_cast<double>(ns - 1);
      double const sigma = cfg.sigma_min * std::pow(cfg.sigma_max / cfg.sigma_min, f);
      ComplexImage noisy = complex_noise(images[i].height(), images[i].width(), cfg.seed ^ 0x686f6c64ull, i * 131 + j);
      noisy *= sigma;
      noisy += images[i];
      acc += nn::dsm_loss(images[i], noisy, sigma, w, nullptr);
      ++count;
    }
  }
  return acc / static_cast<double>(count);
}

/// Trains the toy denoiser with minibatch SGD on the weighted
/// denoising-score-matching objective. Noise levels are drawn log-uniformly
/// from [sigma_min, sigma_max]. The last heldout_fraction of a seeded
/// shuffle of the dataset is held out for the reported losses.
inline TrainResult train_toy_denoiser(std::vector<ComplexImage> const &dataset, UNetDescriptor const &desc,
                                      TrainConfig const &cfg)
{
  if (dataset.empty()) { throw InvalidArgument("train_toy_denoiser: dataset is empty"); }
  if (cfg.batch_size == 0) { throw InvalidArgument("train_toy_denoiser: batch_size must be >= 1"); }
  if (!(cfg.sigma_max > cfg.sigma_min && cfg.sigma_min > 0.0)) { throw InvalidArgument("train_toy_denoiser: bad sigma range"); }
  if (!(cfg.heldout_fraction >= 0.0 && cfg.heldout_fraction < 1.0)) {
    throw InvalidArgument("train_toy_denoiser: heldout_fraction must be in [0, 1)");
  }

  CounterRng rng(cfg.seed, 0x747261696eull);
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = order.size(); i > 1; --i) { std::swap(order[i - 1], order[rng.below(i)]); }
  auto n_hold = static_cast<std::size_t>(std::ceil(cfg.heldout_fraction * static_cast<double>(dataset.size())));
  if (dataset.size() < 2) { n_hold = 0; }
  n_hold = std::min(n_hold, dataset.size() - 1);
  std::vector<ComplexImage> train, held;
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < order.size() - n_hold ? train : held).push_back(dataset[order[i]]);
  }
  if (held.empty()) { held = train; }

  TrainResult res;
  res.initial = init_weights(desc, cfg.seed);
  res.weights = res.initial;
  res.initial_heldout_loss = heldout_loss(held, res.initial, cfg);

  UNetWeights &w = res.weights;
  std::vector<double> grads(w.params.size());
  std::vector<double> velocity(w.params.size(), 0.0);
  double const log_lo = std::log(cfg.sigma_min), log_hi = std::log(cfg.sigma_max);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<std::size_t> idx(train.size());
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t i = idx.size(); i > 1; --i) { std::swap(idx[i - 1], idx[rng.below(i)]); }
    double epoch_loss = 0.0;
    for (std::size_t b0 = 0; b0 < idx.size(); b0 += cfg.batch_size) {
      std::size_t const b1 = std::min(idx.size(), b0 + cfg.batch_size);
      std::fill(grads.begin(), grads.end(), 0.0);
      for (std::size_t b = b0; b < b1; ++b) {
        ComplexImage const clean = nn::augment(train[idx[b]], rng.next_u64());
        double const sigma = std::exp(rng.uniform(log_lo, log_hi));
        ComplexImage noisy = complex_noise(clean.height(), clean.width(), rng.next_u64());
        noisy *= sigma;
        noisy += clean;
        epoch_loss += nn::dsm_loss(clean, noisy, sigma, w, &grads);
      }
      double const scale = 1.0 / static_cast<double>(b1 - b0);
      double gnorm = 0.0;
      for (double &g : grads) {
        g *= scale;
        gnorm += g * g;
      }
      gnorm = std::sqrt(gnorm);
      double const clip = cfg.grad_clip > 0.0 && gnorm > cfg.grad_clip ? cfg.grad_clip / gnorm : 1.0;
      for (std::size_t i = 0; i < grads.size(); ++i) {
        velocity[i] = cfg.momentum * velocity[i] + clip * grads[i];
        w.params[i] -= cfg.learning_rate * velocity[i];
      }
    }
    res.epoch_losses.push_back(epoch_loss / static_cast<double>(train.size()));
  }
  res.final_heldout_loss = heldout_loss(held, w, cfg);
  return res;
}

} // namespace calrecon
