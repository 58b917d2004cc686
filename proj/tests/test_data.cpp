#include "oracles.hpp"

#include "vrae/data.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <unistd.h>
#include <sstream>

using namespace vrae;
using namespace vrae::data;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() / ("vrae_data_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

Tensor4 smooth_image(std::size_t size, double phase = 0.0) {
  Tensor4 t({1, 3, size, size});
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < size; ++i)
      for (std::size_t j = 0; j < size; ++j)
        t.at(0, c, i, j) = static_cast<float>(0.5 + 0.35 * std::sin(0.11 * double(i) + phase + double(c)) *
                                                        std::cos(0.07 * double(j) - phase));
  return t;
}

}  // namespace

TEST(Ingest, SolidGrayMapsTo128Over255) {
  TempDir dir;
  save_png(dir.path() / "gray.png", Tensor4({1, 3, 512, 512}, 128.0f / 255.0f));
  auto img = load_image(dir.path() / "gray.png", 256);
  ASSERT_EQ(img.shape(), (Shape{1, 3, 256, 256}));
  for (float v : img.values()) ASSERT_NEAR(v, 0.50196, 1e-5);
}

TEST(Ingest, ResizesAnyAspectTo256) {
  TempDir dir;
  save_png(dir.path() / "odd.png", Tensor4({1, 3, 37, 100}, 0.25f));
  EXPECT_EQ(load_image(dir.path() / "odd.png", 256).shape(), (Shape{1, 3, 256, 256}));
}

TEST(Ingest, KeepsChannelOrder) {
  TempDir dir;
  Tensor4 img({1, 3, 4, 4});
  for (float& v : img.plane(0, 0)) v = 1.0f;
  save_png(dir.path() / "red.png", img);
  auto back = load_image(dir.path() / "red.png", 0);
  EXPECT_EQ(back, img);
}

TEST(Ingest, SortedSkipsUndecodableAndRejectsEmpty) {
  TempDir dir;
  save_png(dir.path() / "b.png", Tensor4({1, 3, 8, 8}, 0.5f));
  save_png(dir.path() / "a.png", Tensor4({1, 3, 8, 8}, 0.1f));
  std::ofstream(dir.path() / "c.jpg") << "not an image";
  std::ofstream(dir.path() / "notes.txt") << "ignored";
  std::ostringstream warn;
  auto r = ingest(dir.path(), 16, warn);
  ASSERT_EQ(r.paths.size(), 2u);
  EXPECT_EQ(r.paths[0].filename(), "a.png");
  EXPECT_EQ(r.paths[1].filename(), "b.png");
  EXPECT_NE(warn.str().find("c.jpg"), std::string::npos);
  EXPECT_EQ(list_images(dir.path()), list_images(dir.path()));

  TempDir empty;
  EXPECT_THROW(ingest(empty.path(), 16, warn), std::runtime_error);
  EXPECT_THROW(list_images(empty.path() / "missing"), std::runtime_error);
}

TEST(Split, FloorRule) {
  auto s = split_sizes(3036);
  EXPECT_EQ(s.train, 2125u);
  EXPECT_EQ(s.val, 455u);
  EXPECT_EQ(s.test, 456u);
  for (std::size_t n : {1u, 2u, 7u, 10u, 99u, 1000u}) {
    auto t = split_sizes(n);
    EXPECT_EQ(t.train, static_cast<std::size_t>(std::floor(0.7 * double(n) + 1e-9)));
    EXPECT_EQ(t.train + t.val + t.test, n);
  }
}

TEST(Split, AugmentsTrainToTargetOnly) {
  std::vector<std::string> paths;
  for (int i = 0; i < 3036; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "img%05d.png", i);
    paths.push_back(name);
  }
  auto m = split_and_augment(paths, 7, 7000);
  EXPECT_EQ(m.of(Split::train).size(), 7000u);
  EXPECT_EQ(m.of(Split::val).size(), 455u);
  EXPECT_EQ(m.of(Split::test).size(), 456u);
  std::size_t originals = 0;
  for (const auto& r : m.of(Split::train)) {
    if (!r.angle_deg) {
      ++originals;
      continue;
    }
    EXPECT_NE(*r.angle_deg, 0.0);
    EXPECT_LE(std::abs(*r.angle_deg), 15.0);
  }
  EXPECT_EQ(originals, 2125u);
  for (auto s : {Split::val, Split::test})
    for (const auto& r : m.of(s)) EXPECT_FALSE(r.angle_deg);
  EXPECT_THROW(split_and_augment(paths, 7, 2000), std::invalid_argument);
}

TEST(Split, SplitsAreDisjointAndCoverEverything) {
  std::vector<std::string> paths;
  for (int i = 0; i < 50; ++i) paths.push_back("p" + std::to_string(100 + i));
  auto m = split_and_augment(paths, 3, std::nullopt);
  std::vector<std::string> seen;
  for (const auto& r : m.records) seen.push_back(r.path);
  std::sort(seen.begin(), seen.end());
  EXPECT_EQ(seen, paths);
}

TEST(Manifest, DeterministicAndRoundTrips) {
  std::vector<std::string> paths{"/d/a,b.png", "/d/b.png", "/d/c.png", "/d/d.png", "/d/e.png", "/d/f.jpg"};
  const auto a = split_and_augment(paths, 11, 20);
  const auto b = split_and_augment(paths, 11, 20);
  EXPECT_EQ(a.to_csv(), b.to_csv());
  EXPECT_NE(a.to_csv(), split_and_augment(paths, 12, 20).to_csv());
  const auto back = DatasetManifest::from_csv(a.to_csv());
  EXPECT_EQ(back.records, a.records);
  EXPECT_EQ(back.to_csv(), a.to_csv());
  EXPECT_EQ(back.source_count, paths.size());
  EXPECT_EQ(a.to_csv().substr(0, 21), "path,split,angle_deg\n");
  EXPECT_THROW(DatasetManifest::from_csv("bad header\n"), std::runtime_error);
}

TEST(Rotate, RoundTripPreservesSmoothInterior) {
  const auto img = smooth_image(64);
  for (double angle : {7.5, -12.0, 15.0}) {
    const auto back = rotate(rotate(img, angle), -angle);
    double err = 0;
    std::size_t count = 0;
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t i = 16; i < 48; ++i)
        for (std::size_t j = 16; j < 48; ++j) {
          err += std::abs(back.at(0, c, i, j) - img.at(0, c, i, j));
          ++count;
        }
    EXPECT_LT(err / double(count), 0.02) << angle;
  }
  EXPECT_EQ(rotate(img, 0.0), img);
}

TEST(Degrade, NoiseOffConstantIsUnchanged) {
  DegradationConfig cfg;
  cfg.noise = NoiseMode::off;
  Tensor4 img({1, 3, 20, 17}, 0.37f);
  EXPECT_EQ(degrade(img, cfg), img);
}

TEST(Degrade, NoiseOffImpulseSpreadsToNinth) {
  DegradationConfig cfg;
  cfg.noise = NoiseMode::off;
  cfg.pool_iterations = 1;
  Tensor4 img({1, 1, 7, 7});
  img.at(0, 0, 3, 3) = 1.0f;
  auto out = degrade(img, cfg);
  for (std::size_t i = 0; i < 7; ++i)
    for (std::size_t j = 0; j < 7; ++j) {
      const bool inside = i >= 2 && i <= 4 && j >= 2 && j <= 4;
      EXPECT_EQ(out.at(0, 0, i, j), inside ? 1.0f / 9.0f : 0.0f);
    }
}

TEST(Degrade, SeedDeterminism) {
  std::mt19937_64 rng(4);
  auto img = oracle::random_tensor<float>({1, 3, 32, 32}, rng, 0.0, 1.0);
  DegradationConfig cfg;
  cfg.seed = 5;
  EXPECT_EQ(degrade(img, cfg, "x.png"), degrade(img, cfg, "x.png"));
  EXPECT_NE(degrade(img, cfg, "x.png"), degrade(img, cfg, "y.png"));
  auto other = cfg;
  other.seed = 6;
  EXPECT_NE(degrade(img, cfg, "x.png"), degrade(img, other, "x.png"));
}

TEST(Degrade, LiteralNoiseBeforePoolingMatchesHandComputation) {
  // With no pooling the output is clamp(x + 0.1 n), n in {0..9}.
  DegradationConfig cfg;
  cfg.pool_iterations = 0;
  Tensor4 img({1, 3, 16, 16}, 0.2f);
  auto out = degrade(img, cfg, "id");
  std::set<int> levels;
  for (float v : out.values()) {
    const double n = (double(v) - 0.2) / 0.1;
    const long r = std::lround(n);
    EXPECT_NEAR(n, double(r), 1e-5);
    EXPECT_GE(r, 0);
    EXPECT_LE(r, 8);  // 0.2 + 0.9 clamps to 1.0 = level 8
    levels.insert(int(r));
  }
  EXPECT_EQ(levels.size(), 9u);
  cfg.noise = NoiseMode::zero_mean;
  double mean = 0;
  Tensor4 mid({1, 3, 64, 64}, 0.5f);
  for (float v : degrade(mid, cfg, "id").values()) mean += v;
  EXPECT_NEAR(mean / (3 * 64 * 64), 0.5, 0.02);
}

TEST(Degrade, StaysInRangeAndKeepsDims) {
  std::mt19937_64 rng(8);
  for (auto mode : {NoiseMode::literal, NoiseMode::zero_mean, NoiseMode::off}) {
    DegradationConfig cfg;
    cfg.noise = mode;
    auto img = oracle::random_tensor<float>({2, 3, 24, 20}, rng, 0.0, 1.0);
    auto out = degrade(img, cfg, std::vector<std::string>{"a", "b"});
    EXPECT_EQ(out.shape(), img.shape());
    for (float v : out.values()) {
      ASSERT_GE(v, 0.0f);
      ASSERT_LE(v, 1.0f);
    }
  }
  EXPECT_THROW(degrade(Tensor4({3, 3, 8, 8}), DegradationConfig{}, std::vector<std::string>{"a", "b"}),
               std::invalid_argument);
}

TEST(Degrade, PoolingStrictlyReducesTotalVariation) {
  std::mt19937_64 rng(9);
  DegradationConfig one;
  one.noise = NoiseMode::off;
  one.pool_iterations = 1;
  for (int k = 0; k < 20; ++k) {
    auto img = oracle::random_tensor<float>({1, 3, 24, 24}, rng, 0.0, 1.0);
    double tv = total_variation(img);
    for (int pass = 0; pass < 10; ++pass) {
      img = degrade(img, one);
      const double next = total_variation(img);
      ASSERT_LT(next, tv) << "image " << k << " pass " << pass;
      tv = next;
    }
  }
}

TEST(Degrade, ParseNoiseMode) {
  EXPECT_EQ(parse_noise_mode("zero-mean"), NoiseMode::zero_mean);
  EXPECT_EQ(parse_noise_mode("zero_mean"), NoiseMode::zero_mean);
  EXPECT_EQ(parse_noise_mode("off"), NoiseMode::off);
  EXPECT_THROW(parse_noise_mode("gauss"), std::invalid_argument);
}

TEST(ManifestDataset, ProducesRotatedCleanAndDegradedPairs) {
  TempDir dir;
  std::vector<std::string> paths;
  for (int i = 0; i < 10; ++i) {
    const auto p = dir.path() / ("im" + std::to_string(i) + ".png");
    save_png(p, smooth_image(40, 0.3 * i));
    paths.push_back(p.string());
  }
  auto m = split_and_augment(paths, 1, 12);
  DegradationConfig cfg;
  ManifestDataset train(m, Split::train, 32, cfg);
  ASSERT_EQ(train.size(), 12u);
  for (std::size_t i = 0; i < train.size(); ++i) {
    auto pair = train.get(i);
    EXPECT_EQ(pair.clean.shape(), (Shape{1, 3, 32, 32}));
    EXPECT_EQ(pair.degraded.shape(), pair.clean.shape());
    EXPECT_EQ(pair.degraded, degrade(pair.clean, cfg, record_id(train.record(i))));
    if (!train.record(i).angle_deg) {
      EXPECT_EQ(pair.clean, load_image(train.record(i).path, 32));
    }
  }
  EXPECT_EQ(ManifestDataset(m, Split::val, 32, cfg).size(), 1u);
  EXPECT_EQ(ManifestDataset(m, Split::test, 32, cfg).size(), 2u);
}
