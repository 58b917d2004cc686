#pragma once

#include "vrae/model.hpp"

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace vrae::analysis {

inline constexpr std::size_t kEntropyBins = 256;

/// Shannon entropy in nats of a 256-bin (by default) histogram spanning
/// [min, max] of the values. Constant input gives 0.
double histogram_entropy(std::span<const float> values, std::size_t bins = kEntropyBins);

/// dH_l = H_{l+1} - H_l.
std::vector<double> entropy_change(const std::vector<double>& entropies);

/// (h - p + 1)(w - q + 1) ln|c11|; nullopt when |c11| <= 1e-12.
std::optional<double> proxy_entropy_change(std::size_t h, std::size_t w, std::size_t p, std::size_t q, double c11);

/// Mean of each group; throws on an empty group.
std::vector<double> block_average(const std::vector<std::vector<double>>& grouped);

/// One main-encoder convolution seen during a probe forward.
struct LayerEntropy {
  int block = 0;
  std::string layer;
  std::size_t channels = 0, height = 0, width = 0;  // output dims
  double entropy_in = 0.0;
  double entropy_out = 0.0;
  double delta = 0.0;
  std::optional<double> proxy;
};

struct EntropyProfile {
  std::string model;
  std::vector<int> blocks;           // 1 = stem, i = stage i
  std::vector<double> avg_delta_h;   // per block
  std::vector<std::optional<double>> avg_proxy;  // per block, undefined proxies excluded
  std::vector<LayerEntropy> layers;
};

/// Eval-mode forward of `probe`, recording H(output) - H(input) for every
/// main-encoder convolution (projection shortcuts included), averaged per block.
EntropyProfile entropy_profile(Network& net, const Tensor4& probe, const std::string& label);

/// `model,block,avg_delta_h`
std::string entropy_csv(const std::vector<EntropyProfile>& profiles);

/// Line chart of avg dH per block, one polyline per model.
std::string entropy_svg(const std::vector<EntropyProfile>& profiles, bool timestamp);

// ---------------------------------------------------------------------------
// Pareto analysis

enum class QualityMetric { psnr, ssim, nmse };

std::string_view quality_metric_name(QualityMetric m);
QualityMetric parse_quality_metric(std::string_view text);
inline bool maximize(QualityMetric m) { return m != QualityMetric::nmse; }

struct ParetoPoint {
  std::string model;
  double quality = 0.0;
  double fps = 0.0;
  std::size_t params = 0;
};

/// True if a is at least as good as b in both objectives and better in one.
bool dominates(const ParetoPoint& a, const ParetoPoint& b, bool maximize_quality);

/// Indices of non-dominated points, fps descending (ties: better quality, then
/// input order). Points with identical coordinates are all kept. Sort-and-sweep,
/// O(n log n).
std::vector<std::size_t> pareto_front(const std::vector<ParetoPoint>& points, bool maximize_quality);

/// `model,quality_metric,quality,fps,params,on_front`, rows in input order.
std::string pareto_csv(const std::vector<ParetoPoint>& points, QualityMetric metric,
                       const std::vector<std::size_t>& front);

/// Scatter of all points with the front as a red polyline.
std::string pareto_svg(const std::vector<ParetoPoint>& points, QualityMetric metric,
                       const std::vector<std::size_t>& front, bool timestamp);

}  // namespace vrae::analysis
