#include "oracles.hpp"

#include "vrae/analysis.hpp"
#include "vrae/metrics.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

using namespace vrae;
using namespace vrae::analysis;

namespace {

std::vector<metrics::ReportRow> published_rows() {
  std::ifstream in(std::string(VRAE_TEST_DATA_DIR) + "/comparison.csv");
  std::stringstream ss;
  ss << in.rdbuf();
  return metrics::read_report_csv(ss.str());
}

std::vector<ParetoPoint> points_for(const std::vector<metrics::ReportRow>& rows, QualityMetric m) {
  std::vector<ParetoPoint> pts;
  for (const auto& r : rows) {
    const double q = m == QualityMetric::psnr ? r.psnr_db : m == QualityMetric::ssim ? r.ssim : r.nmse;
    pts.push_back({r.model, q, r.fps, r.params});
  }
  return pts;
}

std::set<std::size_t> as_set(const std::vector<std::size_t>& v) { return {v.begin(), v.end()}; }

void expect_front_consistent(const std::vector<ParetoPoint>& pts, const std::vector<std::size_t>& front, bool maxq) {
  const auto on = as_set(front);
  for (auto a : front)
    for (auto b : front) EXPECT_FALSE(dominates(pts[a], pts[b], maxq)) << pts[a].model << " vs " << pts[b].model;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (on.count(i)) continue;
    bool covered = false;
    for (auto f : front) covered = covered || dominates(pts[f], pts[i], maxq);
    EXPECT_TRUE(covered) << pts[i].model;
  }
}

}  // namespace

TEST(Entropy, ConstantIsZero) {
  std::vector<float> v(1000, 0.37f);
  EXPECT_EQ(histogram_entropy(v), 0.0);
}

TEST(Entropy, UniformFillIsLog256) {
  // Integers 0..255 over [0, 255]: value b lands in bin floor(b * 256 / 255) = b.
  std::vector<float> v;
  for (int b = 0; b < 256; ++b)
    for (int k = 0; k < 4; ++k) v.push_back(float(b));
  EXPECT_NEAR(histogram_entropy(v), std::log(256.0), 1e-9);
  EXPECT_NEAR(std::log(256.0), 5.5452, 1e-4);
}

TEST(Entropy, MatchesHandBinnedReference) {
  std::mt19937_64 rng(11);
  std::normal_distribution<float> n(0.0f, 2.0f);
  for (int t = 0; t < 10; ++t) {
    std::vector<float> v(5000);
    for (auto& x : v) x = n(rng);
    EXPECT_NEAR(histogram_entropy(v), oracle::hand_binned_entropy(v, 256), 1e-12);
    EXPECT_NEAR(histogram_entropy(v, 7), oracle::hand_binned_entropy(v, 7), 1e-12);
  }
}

TEST(Entropy, BoundsAndAffineInvariance) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  std::vector<float> v(4096), w(4096);
  for (auto& x : v) x = u(rng);
  // Power-of-two scale and integer offset keep every transformed value exact.
  for (std::size_t i = 0; i < v.size(); ++i) w[i] = 4.0f * v[i] - 3.0f;
  const double h = histogram_entropy(v);
  EXPECT_GE(h, 0.0);
  EXPECT_LE(h, std::log(256.0));
  EXPECT_NEAR(histogram_entropy(w), h, 1e-12);
}

TEST(Entropy, EmptyInputRejected) {
  std::vector<float> v;
  EXPECT_THROW(histogram_entropy(v), std::invalid_argument);
}

TEST(EntropyChange, SubtractionAndTelescoping) {
  const auto d = entropy_change({5.0, 3.0, 2.5});
  ASSERT_EQ(d.size(), 2u);
  EXPECT_DOUBLE_EQ(d[0], -2.0);
  EXPECT_DOUBLE_EQ(d[1], -0.5);
  EXPECT_EQ(entropy_change({1.25, 1.25})[0], 0.0);

  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(0.0, 5.5);
  std::vector<double> h(40);
  for (auto& x : h) x = u(rng);
  double sum = 0;
  for (double x : entropy_change(h)) sum += x;
  EXPECT_NEAR(sum, h.back() - h.front(), 1e-12);
}

TEST(Proxy, HandValues) {
  EXPECT_EQ(*proxy_entropy_change(9, 7, 3, 3, 1.0), 0.0);
  EXPECT_NEAR(*proxy_entropy_change(4, 4, 3, 3, std::numbers::e), 4.0, 1e-12);
  EXPECT_NEAR(*proxy_entropy_change(6, 5, 3, 2, 0.5), -11.0904, 1e-4);
  EXPECT_NEAR(*proxy_entropy_change(6, 5, 3, 2, -0.5), 16.0 * std::log(0.5), 1e-12);
}

TEST(Proxy, UndefinedAndInvalid) {
  EXPECT_FALSE(proxy_entropy_change(4, 4, 3, 3, 0.0).has_value());
  EXPECT_FALSE(proxy_entropy_change(4, 4, 3, 3, 1e-13).has_value());
  EXPECT_THROW(proxy_entropy_change(2, 4, 3, 3, 1.0), std::invalid_argument);
  EXPECT_THROW(proxy_entropy_change(4, 2, 3, 3, 1.0), std::invalid_argument);
}

TEST(BlockAverage, CasesAndRegroupOracle) {
  EXPECT_EQ(block_average({{-1.5}})[0], -1.5);
  EXPECT_EQ(block_average({{-2.0, -4.0}})[0], -3.0);
  EXPECT_THROW(block_average({{1.0}, {}}), std::invalid_argument);

  std::mt19937_64 rng(14);
  std::uniform_real_distribution<double> u(-6.0, 1.0);
  std::vector<int> block_of(50);
  std::vector<double> flat(50);
  for (int i = 0; i < 50; ++i) {
    block_of[i] = i % 5;
    flat[i] = u(rng);
  }
  std::vector<std::vector<double>> grouped(5);
  for (int i = 0; i < 50; ++i) grouped[block_of[i]].push_back(flat[i]);
  const auto avg = block_average(grouped);
  for (int b = 0; b < 5; ++b) {
    double s = 0;
    int n = 0;
    for (int i = 0; i < 50; ++i)
      if (block_of[i] == b) {
        s += flat[i];
        ++n;
      }
    EXPECT_NEAR(avg[b], s / n, 1e-12);
  }
  for (auto& g : grouped) std::shuffle(g.begin(), g.end(), rng);
  const auto shuffled = block_average(grouped);
  for (int b = 0; b < 5; ++b) EXPECT_NEAR(shuffled[b], avg[b], 1e-12);
}

TEST(EntropyProfile, OneValuePerEncoderBlock) {
  for (int depth : {2, 3}) {
    auto net = Network::build(VraeConfig::reduced(Arch::vrae, depth, 32, 16), 3);
    std::mt19937_64 rng(15);
    const auto probe = oracle::random_tensor<float>({2, 3, 32, 32}, rng, 0.0, 1.0);
    const auto p = entropy_profile(net, probe, "VRAE");
    ASSERT_EQ(p.blocks.size(), static_cast<std::size_t>(depth));
    ASSERT_EQ(p.avg_delta_h.size(), p.blocks.size());
    ASSERT_EQ(p.avg_proxy.size(), p.blocks.size());
    for (int b = 0; b < depth; ++b) EXPECT_EQ(p.blocks[b], b + 1);
    for (const auto& l : p.layers) {
      EXPECT_GE(l.entropy_in, 0.0);
      EXPECT_LE(l.entropy_out, std::log(256.0) + 1e-12);
      EXPECT_DOUBLE_EQ(l.delta, l.entropy_out - l.entropy_in);
    }
    EXPECT_EQ(p.layers.front().layer, "stem.conv");
    EXPECT_EQ(p.layers.front().block, 1);
  }
}

TEST(EntropyProfile, CsvAndSvgAreDeterministic) {
  auto net = Network::build(VraeConfig::reduced(Arch::ae, 2, 32, 16), 3);
  std::mt19937_64 rng(16);
  const auto probe = oracle::random_tensor<float>({1, 3, 32, 32}, rng, 0.0, 1.0);
  const auto a = entropy_profile(net, probe, "AE2");
  const auto b = entropy_profile(net, probe, "AE2");
  EXPECT_EQ(entropy_csv({a}), entropy_csv({b}));
  EXPECT_EQ(entropy_csv({a}).substr(0, 24), "model,block,avg_delta_h\n");
  EXPECT_EQ(entropy_svg({a, b}, false), entropy_svg({a, b}, false));
  EXPECT_EQ(entropy_svg({a}, false).find("<!--"), std::string::npos);
  EXPECT_NE(entropy_svg({a}, true).find("<!-- generated"), std::string::npos);
}

TEST(Pareto, SinglePointAndDominance) {
  std::vector<ParetoPoint> one{{"A", 1.0, 1.0, 1}};
  EXPECT_EQ(pareto_front(one, true), std::vector<std::size_t>{0});
  std::vector<ParetoPoint> two{{"weak", 1.0, 1.0, 1}, {"strong", 2.0, 2.0, 1}};
  EXPECT_EQ(pareto_front(two, true), std::vector<std::size_t>{1});
  EXPECT_TRUE(dominates(two[1], two[0], true));
  EXPECT_FALSE(dominates(two[0], two[0], true));
}

TEST(Pareto, IdenticalPointsAreAllKept) {
  std::vector<ParetoPoint> pts{{"a", 2.0, 5.0, 1}, {"b", 2.0, 5.0, 2}, {"c", 1.0, 5.0, 3}};
  EXPECT_EQ(as_set(pareto_front(pts, true)), (std::set<std::size_t>{0, 1}));
}

TEST(Pareto, NonFiniteRejected) {
  std::vector<ParetoPoint> pts{{"a", std::nan(""), 5.0, 1}};
  EXPECT_THROW(pareto_front(pts, true), std::invalid_argument);
}

TEST(Pareto, PublishedRowsPsnrFront) {
  const auto rows = published_rows();
  ASSERT_EQ(rows.size(), 10u);
  const auto pts = points_for(rows, QualityMetric::psnr);
  const auto front = pareto_front(pts, true);
  std::vector<std::string> names;
  for (auto i : front) names.push_back(pts[i].model);
  EXPECT_EQ(names, (std::vector<std::string>{"AE2", "VRAE2", "VRAE3"}));
  EXPECT_EQ(as_set(front), as_set(oracle::brute_front(pts, true)));
}

TEST(Pareto, PublishedRowsOtherOrientationsSelfConsistent) {
  const auto rows = published_rows();
  for (auto m : {QualityMetric::ssim, QualityMetric::nmse}) {
    const auto pts = points_for(rows, m);
    const auto front = pareto_front(pts, maximize(m));
    EXPECT_EQ(as_set(front), as_set(oracle::brute_front(pts, maximize(m))));
    expect_front_consistent(pts, front, maximize(m));
    for (std::size_t k = 1; k < front.size(); ++k) EXPECT_GE(pts[front[k - 1]].fps, pts[front[k]].fps);
  }
}

TEST(Pareto, MatchesBruteForceOnRandomSetsWithTies) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = trial == 0 ? 1000 : 1 + rng() % 200;
    std::vector<ParetoPoint> pts;
    // Coarse integer grid forces many ties in each coordinate.
    for (std::size_t i = 0; i < n; ++i)
      pts.push_back({"p" + std::to_string(i), double(rng() % 25), double(rng() % 25), i});
    for (bool maxq : {true, false}) {
      const auto front = pareto_front(pts, maxq);
      EXPECT_EQ(as_set(front), as_set(oracle::brute_front(pts, maxq)));
      expect_front_consistent(pts, front, maxq);
    }
  }
}

TEST(Pareto, CsvAndSvg) {
  const auto pts = points_for(published_rows(), QualityMetric::psnr);
  const auto front = pareto_front(pts, true);
  const auto csv = pareto_csv(pts, QualityMetric::psnr, front);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "model,quality_metric,quality,fps,params,on_front");
  EXPECT_NE(csv.find("AE2,psnr,27.787,411,375000,true\n"), std::string::npos);
  EXPECT_NE(csv.find("AE4,psnr,29.404,189,14590000,false\n"), std::string::npos);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 11);
  const auto svg = pareto_svg(pts, QualityMetric::psnr, front, false);
  EXPECT_EQ(svg, pareto_svg(pts, QualityMetric::psnr, front, false));
  EXPECT_NE(svg.find("stroke=\"red\""), std::string::npos);
  EXPECT_EQ(parse_quality_metric("nmse"), QualityMetric::nmse);
  EXPECT_THROW(parse_quality_metric("fps"), std::invalid_argument);
}
