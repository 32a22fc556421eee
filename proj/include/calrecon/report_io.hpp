#pragma once

#include "ablation.hpp"
#include "errors.hpp"
#include "mask.hpp"
#include "metrics.hpp"
#include "pipeline.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace calrecon {

/// 8-bit binary graymap; values are mapped by v / scale * 255 and clipped.
inline void write_pgm(std::filesystem::path const &path, std::vector<double> const &v, std::size_t h, std::size_t w,
                      double scale)
{
  if (v.size() != h * w) { throw InvalidArgument("write_pgm: size mismatch"); }
  std::ofstream f(path, std::ios::binary);
  if (!f) { throw IoError("cannot open '" + path.string() + "' for writing"); }
  f << "P5\n" << w << " " << h << "\n255\n";
  std::vector<unsigned char> px(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    double const s = scale > 0.0 ? v[i] / scale : 0.0;
    px[i] = static_cast<unsigned char>(std::lround(std::clamp(s, 0.0, 1.0) * 255.0));
  }
  f.write(reinterpret_cast<char const *>(px.data()), static_cast<std::streamsize>(px.size()));
  if (!f) { throw IoError("write failed for '" + path.string() + "'"); }
}

struct Graymap
{
  std::size_t width = 0, height = 0, maxval = 0;
  std::vector<unsigned char> pixels;
};

inline Graymap read_pgm(std::filesystem::path const &path)
{
  std::ifstream f(path, std::ios::binary);
  if (!f) { throw IoError("cannot open '" + path.string() + "'"); }
  std::string magic;
  Graymap g;
  f >> magic >> g.width >> g.height >> g.maxval;
  if (magic != "P5" || !f) { throw FormatError("'" + path.string() + "' is not a binary graymap"); }
  f.get();
  g.pixels.resize(g.width * g.height);
  f.read(reinterpret_cast<char *>(g.pixels.data()), static_cast<std::streamsize>(g.pixels.size()));
  if (!f) { throw FormatError("'" + path.string() + "': truncated pixel data"); }
  return g;
}

/// One row per reverse step, t descending. Columns:
/// t sigma gamma L_ssl L_reg E stopped cg_residual cg_iters alpha_1 beta_1 ...
inline std::string trace_text(ReconReport const &r)
{
  std::string out = "# t sigma gamma L_ssl L_reg E stopped cg_residual cg_iters";
  std::size_t const L = r.steps.empty() ? 0 : r.steps.front().delta.size() / 2;
  for (std::size_t l = 1; l <= L; ++l) { out += " alpha_" + std::to_string(l) + " beta_" + std::to_string(l); }
  out += "\n";
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, " %.10g", v);
    out += buf;
  };
  for (auto const &s : r.steps) {
    out += std::to_string(s.t);
    num(s.sigma);
    num(s.gamma);
    num(s.ssl_loss);
    num(s.reg_loss);
    num(s.criterion);
    out += s.gamma_stopped ? " 1" : " 0";
    num(s.cg_residual);
    out += " " + std::to_string(s.cg_iters);
    for (double d : s.delta) { num(d); }
    out += "\n";
  }
  return out;
}

/// Magnitude image, reference and absolute-error map as graymaps plus the
/// trace columns. All images share the reference peak as white level.
inline void emit_images(ReconReport const &r, std::filesystem::path const &dir)
{
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) { throw IoError("cannot create '" + dir.string() + "': " + ec.message()); }
  std::size_t const h = r.image.height(), w = r.image.width();
  auto const mag = magnitude(r.image);
  double scale = std::ranges::max(mag);
  if (r.reference) {
    auto const ref = magnitude(*r.reference);
    scale = std::ranges::max(ref);
    std::vector<double> err(mag.size());
    for (std::size_t i = 0; i < err.size(); ++i) { err[i] = std::abs(mag[i] - ref[i]); }
    write_pgm(dir / "reference.pgm", ref, h, w, scale);
    write_pgm(dir / "error.pgm", err, h, w, scale);
  }
  write_pgm(dir / "recon.pgm", mag, h, w, scale);
  write_text_file(dir / "trace.txt", trace_text(r));
}

namespace detail {

inline nlohmann::json num_json(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

inline double json_num(nlohmann::json const &j)
{
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

} // namespace detail

inline nlohmann::json report_json(ReconReport const &r)
{
  nlohmann::json j;
  j["prior"] = r.prior_name;
  j["height"] = r.image.height();
  j["width"] = r.image.width();
  j["wall_seconds"] = r.wall_seconds;
  j["gamma_stop_step"] = r.gamma_stop_step;
  j["psnr"] = r.psnr ? detail::num_json(*r.psnr) : nlohmann::json(nullptr);
  j["ssim"] = r.ssim ? detail::num_json(*r.ssim) : nlohmann::json(nullptr);
  auto &steps = j["steps"] = nlohmann::json::array();
  for (auto const &s : r.steps) {
    steps.push_back({{"t", s.t},
                     {"sigma", s.sigma},
                     {"delta", s.delta},
                     {"gamma", s.gamma},
                     {"ssl_loss", detail::num_json(s.ssl_loss)},
                     {"reg_loss", detail::num_json(s.reg_loss)},
                     {"criterion", detail::num_json(s.criterion)},
                     {"gamma_stopped", s.gamma_stopped},
                     {"cg_residual", s.cg_residual},
                     {"cg_iters", s.cg_iters}});
  }
  return j;
}

/// Rebuilds the per-step records of a report written by report_json (the
/// image itself lives in its own tensor file).
inline ReconReport report_from_json(nlohmann::json const &j)
{
  ReconReport r;
  try {
    r.prior_name = j.at("prior").get<std::string>();
    r.wall_seconds = j.at("wall_seconds").get<double>();
    r.gamma_stop_step = j.at("gamma_stop_step").get<std::size_t>();
    if (!j.at("psnr").is_null()) { r.psnr = j["psnr"].get<double>(); }
    if (!j.at("ssim").is_null()) { r.ssim = j["ssim"].get<double>(); }
    for (auto const &s : j.at("steps")) {
      StepRecord rec;
      rec.t = s.at("t").get<std::size_t>();
      rec.sigma = s.at("sigma").get<double>();
      rec.delta = s.at("delta").get<std::vector<double>>();
      rec.gamma = s.at("gamma").get<double>();
      rec.ssl_loss = detail::json_num(s.at("ssl_loss"));
      rec.reg_loss = detail::json_num(s.at("reg_loss"));
      rec.criterion = detail::json_num(s.at("criterion"));
      rec.gamma_stopped = s.at("gamma_stopped").get<bool>();
      rec.cg_residual = s.at("cg_residual").get<double>();
      rec.cg_iters = s.at("cg_iters").get<std::size_t>();
      r.steps.push_back(std::move(rec));
    }
  } catch (nlohmann::json::exception const &e) {
    throw FormatError(std::string("report: ") + e.what());
  }
  return r;
}

inline nlohmann::json ablation_json(AblationTable const &t)
{
  nlohmann::json rows = nlohmann::json::array();
  for (auto const &r : t.rows) {
    rows.push_back({{"label", r.label},
                    {"enable_fpc", r.enable_fpc},
                    {"enable_rpa", r.enable_rpa},
                    {"psnr", r.psnr},
                    {"ssim", r.ssim},
                    {"psnr_mean", r.psnr_mean},
                    {"psnr_std", r.psnr_std},
                    {"ssim_mean", r.ssim_mean},
                    {"ssim_std", r.ssim_std}});
  }
  return {{"rows", rows}};
}

} // namespace calrecon
