#include "vrae/metrics.hpp"

#include "vrae/parallel.hpp"
#include "vrae/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

namespace vrae::metrics {

namespace {

double squared_error(const Tensor4& pred, const Tensor4& target) {
  require_same_shape(pred.shape(), target.shape(), "metrics");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = double(pred[i]) - double(target[i]);
    acc += d * d;
  }
  return acc;
}

// Separable "valid" filtering of one plane: rows first, then columns.
std::vector<double> filter_valid(const std::vector<double>& plane, std::size_t h, std::size_t w,
                                 const std::vector<double>& taps) {
  const std::size_t k = taps.size();
  const std::size_t ow = w - k + 1, oh = h - k + 1;
  std::vector<double> rows(h * ow);
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < ow; ++j) {
      double acc = 0.0;
      for (std::size_t t = 0; t < k; ++t) acc += taps[t] * plane[i * w + j + t];
      rows[i * ow + j] = acc;
    }
  std::vector<double> out(oh * ow);
  for (std::size_t i = 0; i < oh; ++i)
    for (std::size_t j = 0; j < ow; ++j) {
      double acc = 0.0;
      for (std::size_t t = 0; t < k; ++t) acc += taps[t] * rows[(i + t) * ow + j];
      out[i * ow + j] = acc;
    }
  return out;
}

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

}  // namespace

Psnr psnr(const Tensor4& pred, const Tensor4& target) {
  const double mse = squared_error(pred, target) / static_cast<double>(pred.size());
  if (mse == 0.0) return {kPsnrSentinelDb, true};
  return {10.0 * std::log10(1.0 / mse), false};
}

std::optional<double> nmse(const Tensor4& pred, const Tensor4& target) {
  const double err = squared_error(pred, target);
  double energy = 0.0;
  for (float v : target.values()) energy += double(v) * double(v);
  if (energy == 0.0) return std::nullopt;
  return err / energy;
}

std::vector<double> gaussian_taps(std::size_t size, double sigma) {
  std::vector<double> taps(size);
  const double centre = (static_cast<double>(size) - 1.0) / 2.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < size; ++i) {
    const double d = static_cast<double>(i) - centre;
    taps[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    sum += taps[i];
  }
  for (auto& t : taps) t /= sum;
  return taps;
}

double ssim(const Tensor4& pred, const Tensor4& target, const SsimOptions& o) {
  require_same_shape(pred.shape(), target.shape(), "ssim");
  const Shape s = pred.shape();
  if (s.h < o.window || s.w < o.window) {
    throw ShapeError("ssim: image " + std::to_string(s.h) + "x" + std::to_string(s.w) + " is smaller than the " +
                     std::to_string(o.window) + "x" + std::to_string(o.window) + " window");
  }
  const auto taps = gaussian_taps(o.window, o.sigma);
  const double c1 = (o.k1 * o.dynamic_range) * (o.k1 * o.dynamic_range);
  const double c2 = (o.k2 * o.dynamic_range) * (o.k2 * o.dynamic_range);
  const std::size_t plane = s.plane_size();
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c) {
      std::vector<double> x(plane), y(plane), xx(plane), yy(plane), xy(plane);
      const auto px = pred.plane(n, c);
      const auto py = target.plane(n, c);
      for (std::size_t i = 0; i < plane; ++i) {
        x[i] = px[i];
        y[i] = py[i];
        xx[i] = x[i] * x[i];
        yy[i] = y[i] * y[i];
        xy[i] = x[i] * y[i];
      }
      const auto mx = filter_valid(x, s.h, s.w, taps);
      const auto my = filter_valid(y, s.h, s.w, taps);
      const auto exx = filter_valid(xx, s.h, s.w, taps);
      const auto eyy = filter_valid(yy, s.h, s.w, taps);
      const auto exy = filter_valid(xy, s.h, s.w, taps);
      for (std::size_t i = 0; i < mx.size(); ++i) {
        const double vx = exx[i] - mx[i] * mx[i];
        const double vy = eyy[i] - my[i] * my[i];
        const double cov = exy[i] - mx[i] * my[i];
        total += ((2 * mx[i] * my[i] + c1) * (2 * cov + c2)) /
                 ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
      }
      count += mx.size();
    }
  return total / static_cast<double>(count);
}

FpsResult measure_fps(Network& net, const FpsOptions& options) {
  FpsResult r;
  r.threads = num_threads();
  r.iters = options.iters;
  if (options.iters <= 0) return r;
  const auto& cfg = net.config();
  Tensor4 x({1, cfg.input_channels, cfg.input_h, cfg.input_w});
  Stream rng(options.seed);
  for (float& v : x.values()) v = static_cast<float>(rng.uniform());
  for (int i = 0; i < options.warmup; ++i) net.forward(x, Mode::eval);
  std::vector<double> times;
  times.reserve(static_cast<std::size_t>(options.iters));
  for (int i = 0; i < options.iters; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    net.forward(x, Mode::eval);
    times.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  std::sort(times.begin(), times.end());
  const std::size_t m = times.size();
  r.median_seconds = m % 2 == 1 ? times[m / 2] : 0.5 * (times[m / 2 - 1] + times[m / 2]);
  r.fps = r.median_seconds > 0.0 ? 1.0 / r.median_seconds : 0.0;
  return r;
}

std::string hardware_string() {
  std::ifstream in("/proc/cpuinfo");
  std::string line;
  while (std::getline(in, line)) {
    if (!line.starts_with("model name")) continue;
    auto pos = line.find(':');
    if (pos == std::string::npos) break;
    std::string name = line.substr(pos + 1);
    name.erase(0, name.find_first_not_of(" \t"));
    std::replace(name.begin(), name.end(), ',', ';');
    std::replace(name.begin(), name.end(), '"', '\'');
    if (!name.empty()) return name;
  }
  return "unknown";
}

MetricsReport evaluate(Network& net, const data::Dataset& dataset, const std::string& label, const FpsOptions& fps,
                       std::ostream& warn) {
  if (dataset.size() == 0) throw std::invalid_argument("evaluate: empty dataset");
  MetricsReport r;
  r.model = label;
  r.params = net.count_parameters().total();
  r.hardware = hardware_string();
  double psnr_sum = 0.0, nmse_sum = 0.0, ssim_sum = 0.0;
  std::size_t nmse_count = 0;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto pair = dataset.get(i);
    auto pred = net.forward(pair.degraded, Mode::eval);
    for (float& v : pred.values()) v = std::clamp(v, 0.0f, 1.0f);
    const auto p = psnr(pred, pair.clean);
    psnr_sum += p.db;
    if (p.capped) {
      ++r.psnr_capped;
      warn << "warning: image " << i << " reconstructed exactly; PSNR capped at " << kPsnrSentinelDb << " dB\n";
    }
    if (auto e = nmse(pred, pair.clean)) {
      nmse_sum += *e;
      ++nmse_count;
    } else {
      ++r.nmse_excluded;
      warn << "warning: image " << i << " has an all-zero target; excluded from NMSE\n";
    }
    ssim_sum += ssim(pred, pair.clean);
  }
  r.images = dataset.size();
  r.psnr_db = psnr_sum / static_cast<double>(r.images);
  r.nmse = nmse_count > 0 ? nmse_sum / static_cast<double>(nmse_count) : 0.0;
  r.ssim = ssim_sum / static_cast<double>(r.images);
  const auto timing = measure_fps(net, fps);
  r.fps = timing.fps;
  r.threads = timing.threads;
  return r;
}

std::string report_csv_header() { return "model,psnr_db,nmse,ssim,fps,params,threads,hardware\n"; }

std::string report_csv_row(const MetricsReport& r) {
  return r.model + "," + fmt("%.6f", r.psnr_db) + "," + fmt("%.8f", r.nmse) + "," + fmt("%.6f", r.ssim) + "," +
         fmt("%.3f", r.fps) + "," + std::to_string(r.params) + "," + std::to_string(r.threads) + "," + r.hardware + "\n";
}

std::vector<ReportRow> read_report_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("metrics CSV is empty");
  auto split = [](const std::string& l) {
    std::vector<std::string> out;
    std::stringstream ss(l);
    std::string f;
    while (std::getline(ss, f, ',')) out.push_back(f);
    if (!l.empty() && l.back() == ',') out.emplace_back();
    return out;
  };
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split(line);
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
  for (const char* need : {"model", "psnr_db", "nmse", "ssim", "fps", "params"}) {
    if (!col.count(need)) throw std::runtime_error(std::string("metrics CSV lacks column '") + need + "'");
  }
  std::vector<ReportRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split(line);
    if (f.size() < header.size()) throw std::runtime_error("metrics CSV line " + std::to_string(lineno) + ": too few fields");
    try {
      rows.push_back({f[col["model"]], std::stod(f[col["psnr_db"]]), std::stod(f[col["nmse"]]),
                      std::stod(f[col["ssim"]]), std::stod(f[col["fps"]]),
                      static_cast<std::size_t>(std::stoull(f[col["params"]]))});
    } catch (const std::logic_error&) {
      throw std::runtime_error("metrics CSV line " + std::to_string(lineno) + ": bad number");
    }
  }
  return rows;
}

}  // namespace vrae::metrics
