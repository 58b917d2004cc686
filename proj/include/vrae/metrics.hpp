#pragma once

#include "vrae/data.hpp"
#include "vrae/model.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace vrae::metrics {

/// Reported in place of +inf when a prediction equals its target exactly.
inline constexpr double kPsnrSentinelDb = 99.0;

struct Psnr {
  double db;
  bool capped;
};

/// 10 log10(1 / MSE) with peak 1.0, over the whole tensor (one image).
Psnr psnr(const Tensor4& pred, const Tensor4& target);

/// |pred - target|^2 / |target|^2; nullopt for an all-zero target.
std::optional<double> nmse(const Tensor4& pred, const Tensor4& target);

struct SsimOptions {
  std::size_t window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
};

/// Gaussian-window SSIM over valid window positions, averaged over positions
/// and channels of a 1xCxHxW image pair.
double ssim(const Tensor4& pred, const Tensor4& target, const SsimOptions& options = {});

/// Normalised 1-D Gaussian taps; the 2-D window is their outer product.
std::vector<double> gaussian_taps(std::size_t size, double sigma);

struct FpsOptions {
  int warmup = 10;
  int iters = 100;
  std::uint64_t seed = 0;
};

struct FpsResult {
  double fps = 0.0;
  double median_seconds = 0.0;
  int iters = 0;
  int threads = 1;
};

/// Median single-image eval-mode latency, inverted. iters == 0 skips timing
/// and reports 0 fps.
FpsResult measure_fps(Network& net, const FpsOptions& options = {});

/// CPU model from /proc/cpuinfo, or "unknown"; never contains commas.
std::string hardware_string();

struct MetricsReport {
  std::string model;
  double psnr_db = 0.0;
  double nmse = 0.0;
  double ssim = 0.0;
  double fps = 0.0;
  std::size_t params = 0;
  int threads = 1;
  std::string hardware;
  std::size_t images = 0;
  std::size_t psnr_capped = 0;
  std::size_t nmse_excluded = 0;
};

/// Clamps predictions to [0,1], averages per-image PSNR/NMSE/SSIM over the
/// dataset, then times the network. Exclusions are reported on `warn`.
MetricsReport evaluate(Network& net, const data::Dataset& dataset, const std::string& label,
                       const FpsOptions& fps, std::ostream& warn);

std::string report_csv_header();
std::string report_csv_row(const MetricsReport& r);

struct ReportRow {
  std::string model;
  double psnr_db, nmse, ssim, fps;
  std::size_t params;
};

/// Reads rows written by report_csv_row (extra columns ignored).
std::vector<ReportRow> read_report_csv(const std::string& text);

}  // namespace vrae::metrics
