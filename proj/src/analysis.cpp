#include "vrae/analysis.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <map>
#include <numeric>
#include <stdexcept>

namespace vrae::analysis {

namespace {

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

std::string timestamp_comment() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[64];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  return std::string("<!-- generated ") + buf + " -->\n";
}

// Linear map from [lo, hi] onto [a, b]; degenerate ranges land mid-way.
struct Axis {
  double lo, hi, a, b;
  double operator()(double v) const { return hi > lo ? a + (v - lo) / (hi - lo) * (b - a) : (a + b) / 2; }
};

Axis padded_axis(double lo, double hi, double a, double b) {
  const double pad = hi > lo ? 0.05 * (hi - lo) : 1.0;
  return {lo - pad, hi + pad, a, b};
}

constexpr double kWidth = 640, kHeight = 420, kLeft = 70, kRight = 20, kTop = 30, kBottom = 50;

std::string svg_frame(const std::string& title, const std::string& xlabel, const std::string& ylabel, const Axis& x,
                      const Axis& y, bool timestamp) {
  std::string s = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  if (timestamp) s += timestamp_comment();
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt("%.0f", kWidth) + "\" height=\"" +
       fmt("%.0f", kHeight) + "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "<text x=\"" + fmt("%.1f", kWidth / 2) + "\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">" +
       xml_escape(title) + "</text>\n";
  s += "<line x1=\"" + fmt("%.1f", kLeft) + "\" y1=\"" + fmt("%.1f", kHeight - kBottom) + "\" x2=\"" +
       fmt("%.1f", kWidth - kRight) + "\" y2=\"" + fmt("%.1f", kHeight - kBottom) + "\" stroke=\"black\"/>\n";
  s += "<line x1=\"" + fmt("%.1f", kLeft) + "\" y1=\"" + fmt("%.1f", kTop) + "\" x2=\"" + fmt("%.1f", kLeft) +
       "\" y2=\"" + fmt("%.1f", kHeight - kBottom) + "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double xv = x.lo + (x.hi - x.lo) * t / 4.0;
    const double yv = y.lo + (y.hi - y.lo) * t / 4.0;
    s += "<text x=\"" + fmt("%.1f", x(xv)) + "\" y=\"" + fmt("%.1f", kHeight - kBottom + 15) +
         "\" text-anchor=\"middle\">" + fmt("%.4g", xv) + "</text>\n";
    s += "<text x=\"" + fmt("%.1f", kLeft - 5) + "\" y=\"" + fmt("%.1f", y(yv) + 4) + "\" text-anchor=\"end\">" +
         fmt("%.4g", yv) + "</text>\n";
  }
  s += "<text x=\"" + fmt("%.1f", (kLeft + kWidth - kRight) / 2) + "\" y=\"" + fmt("%.1f", kHeight - 12) +
       "\" text-anchor=\"middle\">" + xml_escape(xlabel) + "</text>\n";
  s += "<text x=\"16\" y=\"" + fmt("%.1f", (kTop + kHeight - kBottom) / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " +
       fmt("%.1f", (kTop + kHeight - kBottom) / 2) + ")\">" + xml_escape(ylabel) + "</text>\n";
  return s;
}

}  // namespace

double histogram_entropy(std::span<const float> values, std::size_t bins) {
  if (values.empty()) throw std::invalid_argument("histogram_entropy: empty input");
  if (bins == 0) throw std::invalid_argument("histogram_entropy: bins must be >= 1");
  const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
  const double lo = *mn, hi = *mx;
  if (!(hi > lo)) return 0.0;
  std::vector<std::size_t> counts(bins, 0);
  const double scale = static_cast<double>(bins) / (hi - lo);
  for (float v : values) {
    auto b = static_cast<std::size_t>((double(v) - lo) * scale);
    counts[std::min(b, bins - 1)]++;
  }
  const double total = static_cast<double>(values.size());
  double h = 0.0;
  for (auto c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / total;
    h -= p * std::log(p);
  }
  return h;
}

std::vector<double> entropy_change(const std::vector<double>& entropies) {
  std::vector<double> out;
  for (std::size_t i = 1; i < entropies.size(); ++i) out.push_back(entropies[i] - entropies[i - 1]);
  return out;
}

std::optional<double> proxy_entropy_change(std::size_t h, std::size_t w, std::size_t p, std::size_t q, double c11) {
  if (p == 0 || q == 0 || h < p || w < q) {
    throw std::invalid_argument("proxy_entropy_change: need h >= p >= 1 and w >= q >= 1");
  }
  if (!(std::abs(c11) > 1e-12)) return std::nullopt;
  return static_cast<double>((h - p + 1) * (w - q + 1)) * std::log(std::abs(c11));
}

std::vector<double> block_average(const std::vector<std::vector<double>>& grouped) {
  std::vector<double> out;
  for (std::size_t b = 0; b < grouped.size(); ++b) {
    if (grouped[b].empty()) throw std::invalid_argument("block_average: block " + std::to_string(b) + " is empty");
    out.push_back(std::accumulate(grouped[b].begin(), grouped[b].end(), 0.0) / static_cast<double>(grouped[b].size()));
  }
  return out;
}

EntropyProfile entropy_profile(Network& net, const Tensor4& probe, const std::string& label) {
  EntropyProfile profile;
  profile.model = label;
  FeatureObserver<float> observer = [&](const FeatureEvent<float>& e) {
    LayerEntropy rec;
    rec.block = e.block;
    rec.layer = std::string(e.layer);
    const Shape o = e.output.shape();
    rec.channels = o.c;
    rec.height = o.h;
    rec.width = o.w;
    rec.entropy_in = histogram_entropy(e.input.values());
    rec.entropy_out = histogram_entropy(e.output.values());
    rec.delta = rec.entropy_out - rec.entropy_in;
    const Shape in = e.input.shape();
    if (in.h >= e.spec.kernel_h && in.w >= e.spec.kernel_w) {
      rec.proxy = proxy_entropy_change(in.h, in.w, e.spec.kernel_h, e.spec.kernel_w, e.weight.at(0, 0, 0, 0));
    }
    profile.layers.push_back(std::move(rec));
  };
  net.forward(probe, Mode::eval, nullptr, &observer);

  std::map<int, std::vector<double>> deltas;
  std::map<int, std::vector<double>> proxies;
  for (const auto& l : profile.layers) {
    deltas[l.block].push_back(l.delta);
    if (l.proxy) proxies[l.block].push_back(*l.proxy);
  }
  std::vector<std::vector<double>> grouped;
  for (const auto& [block, values] : deltas) {
    profile.blocks.push_back(block);
    grouped.push_back(values);
    auto it = proxies.find(block);
    profile.avg_proxy.push_back(it == proxies.end() ? std::nullopt
                                                    : std::optional<double>(block_average({it->second})[0]));
  }
  profile.avg_delta_h = block_average(grouped);
  return profile;
}

std::string entropy_csv(const std::vector<EntropyProfile>& profiles) {
  std::string out = "model,block,avg_delta_h\n";
  for (const auto& p : profiles)
    for (std::size_t i = 0; i < p.blocks.size(); ++i)
      out += p.model + "," + std::to_string(p.blocks[i]) + "," + fmt("%.9g", p.avg_delta_h[i]) + "\n";
  return out;
}

std::string entropy_svg(const std::vector<EntropyProfile>& profiles, bool timestamp) {
  double xlo = 1e300, xhi = -1e300, ylo = 1e300, yhi = -1e300;
  for (const auto& p : profiles)
    for (std::size_t i = 0; i < p.blocks.size(); ++i) {
      xlo = std::min(xlo, double(p.blocks[i]));
      xhi = std::max(xhi, double(p.blocks[i]));
      ylo = std::min(ylo, p.avg_delta_h[i]);
      yhi = std::max(yhi, p.avg_delta_h[i]);
    }
  if (xlo > xhi) xlo = xhi = ylo = yhi = 0.0;
  const Axis x = padded_axis(xlo, xhi, kLeft, kWidth - kRight);
  const Axis y = padded_axis(ylo, yhi, kHeight - kBottom, kTop);
  std::string s = svg_frame("Average entropy change per encoder block", "encoder block", "avg dH (nats)", x, y, timestamp);
  static const char* colours[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
  for (std::size_t m = 0; m < profiles.size(); ++m) {
    const auto& p = profiles[m];
    const char* colour = colours[m % 6];
    std::string pts;
    for (std::size_t i = 0; i < p.blocks.size(); ++i) {
      pts += fmt("%.2f", x(p.blocks[i])) + "," + fmt("%.2f", y(p.avg_delta_h[i])) + " ";
      s += "<circle cx=\"" + fmt("%.2f", x(p.blocks[i])) + "\" cy=\"" + fmt("%.2f", y(p.avg_delta_h[i])) +
           "\" r=\"3\" fill=\"" + colour + "\"/>\n";
    }
    s += "<polyline fill=\"none\" stroke=\"" + std::string(colour) + "\" stroke-width=\"2\" points=\"" + pts + "\"/>\n";
    s += "<text x=\"" + fmt("%.1f", kWidth - kRight - 80) + "\" y=\"" + fmt("%.1f", kTop + 14.0 * double(m + 1)) +
         "\" fill=\"" + colour + "\">" + xml_escape(p.model) + "</text>\n";
  }
  return s + "</svg>\n";
}

std::string_view quality_metric_name(QualityMetric m) {
  switch (m) {
    case QualityMetric::psnr: return "psnr";
    case QualityMetric::ssim: return "ssim";
    case QualityMetric::nmse: return "nmse";
  }
  return "?";
}

QualityMetric parse_quality_metric(std::string_view text) {
  if (text == "psnr") return QualityMetric::psnr;
  if (text == "ssim") return QualityMetric::ssim;
  if (text == "nmse") return QualityMetric::nmse;
  throw std::invalid_argument("unknown quality metric '" + std::string(text) + "' (expected psnr, ssim or nmse)");
}

bool dominates(const ParetoPoint& a, const ParetoPoint& b, bool maximize_quality) {
  const double qa = maximize_quality ? a.quality : -a.quality;
  const double qb = maximize_quality ? b.quality : -b.quality;
  return qa >= qb && a.fps >= b.fps && (qa > qb || a.fps > b.fps);
}

std::vector<std::size_t> pareto_front(const std::vector<ParetoPoint>& points, bool maximize_quality) {
  for (const auto& p : points) {
    if (!std::isfinite(p.quality) || !std::isfinite(p.fps)) {
      throw std::invalid_argument("pareto_front: non-finite coordinate for '" + p.model + "'");
    }
  }
  auto q = [&](std::size_t i) { return maximize_quality ? points[i].quality : -points[i].quality; };
  std::vector<std::size_t> order(points.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (points[a].fps != points[b].fps) return points[a].fps > points[b].fps;
    return q(a) > q(b);
  });
  std::vector<std::size_t> front;
  for (std::size_t i : order) {
    if (front.empty() || q(i) > q(front.back())) {
      front.push_back(i);
    } else if (q(i) == q(front.back()) && points[i].fps == points[front.back()].fps) {
      front.push_back(i);  // identical coordinates
    }
  }
  return front;
}

std::string pareto_csv(const std::vector<ParetoPoint>& points, QualityMetric metric,
                       const std::vector<std::size_t>& front) {
  std::vector<bool> on(points.size(), false);
  for (auto i : front) on.at(i) = true;
  std::string out = "model,quality_metric,quality,fps,params,on_front\n";
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& p = points[i];
    out += p.model + "," + std::string(quality_metric_name(metric)) + "," + fmt("%.9g", p.quality) + "," +
           fmt("%.9g", p.fps) + "," + std::to_string(p.params) + "," + (on[i] ? "true" : "false") + "\n";
  }
  return out;
}

std::string pareto_svg(const std::vector<ParetoPoint>& points, QualityMetric metric,
                       const std::vector<std::size_t>& front, bool timestamp) {
  double xlo = 1e300, xhi = -1e300, ylo = 1e300, yhi = -1e300;
  for (const auto& p : points) {
    xlo = std::min(xlo, p.fps);
    xhi = std::max(xhi, p.fps);
    ylo = std::min(ylo, p.quality);
    yhi = std::max(yhi, p.quality);
  }
  if (points.empty()) xlo = xhi = ylo = yhi = 0.0;
  const Axis x = padded_axis(xlo, xhi, kLeft, kWidth - kRight);
  const Axis y = padded_axis(ylo, yhi, kHeight - kBottom, kTop);
  const std::string metric_name(quality_metric_name(metric));
  std::string s = svg_frame("Pareto front: " + metric_name + " vs fps", "fps", metric_name, x, y, timestamp);
  std::string pts;
  for (auto i : front) pts += fmt("%.2f", x(points[i].fps)) + "," + fmt("%.2f", y(points[i].quality)) + " ";
  s += "<polyline fill=\"none\" stroke=\"red\" stroke-width=\"2\" points=\"" + pts + "\"/>\n";
  std::vector<bool> on(points.size(), false);
  for (auto i : front) on[i] = true;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& p = points[i];
    s += "<circle cx=\"" + fmt("%.2f", x(p.fps)) + "\" cy=\"" + fmt("%.2f", y(p.quality)) + "\" r=\"4\" fill=\"" +
         (on[i] ? "red" : "#555555") + "\"><title>" + xml_escape(p.model) + " (" + std::to_string(p.params) +
         " params)</title></circle>\n";
    s += "<text x=\"" + fmt("%.2f", x(p.fps) + 6) + "\" y=\"" + fmt("%.2f", y(p.quality) - 6) + "\">" +
         xml_escape(p.model) + "</text>\n";
  }
  return s + "</svg>\n";
}

}  // namespace vrae::analysis
