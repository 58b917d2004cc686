#include "vrae/data.hpp"

#include "vrae/init.hpp"
#include "vrae/layers.hpp"
#include "vrae/rng.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>

namespace vrae::data {

namespace fs = std::filesystem;

std::string_view split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

Split parse_split(std::string_view text) {
  if (text == "train") return Split::train;
  if (text == "val") return Split::val;
  if (text == "test") return Split::test;
  throw std::invalid_argument("unknown split '" + std::string(text) + "'");
}

namespace {

Tensor4 from_mat(const cv::Mat& rgb) {
  const auto h = static_cast<std::size_t>(rgb.rows);
  const auto w = static_cast<std::size_t>(rgb.cols);
  Tensor4 out({1, 3, h, w});
  for (std::size_t i = 0; i < h; ++i) {
    const auto* row = rgb.ptr<cv::Vec3f>(static_cast<int>(i));
    for (std::size_t j = 0; j < w; ++j)
      for (std::size_t c = 0; c < 3; ++c) out.at(0, c, i, j) = row[j][static_cast<int>(c)];
  }
  return out;
}

cv::Mat to_mat(const Tensor4& image) {
  const Shape s = image.shape();
  if (s.n != 1 || s.c != 3) throw ShapeError("expected a 1x3xHxW image, got " + s.str());
  cv::Mat m(static_cast<int>(s.h), static_cast<int>(s.w), CV_32FC3);
  for (std::size_t i = 0; i < s.h; ++i) {
    auto* row = m.ptr<cv::Vec3f>(static_cast<int>(i));
    for (std::size_t j = 0; j < s.w; ++j)
      for (std::size_t c = 0; c < 3; ++c) row[j][static_cast<int>(c)] = image.at(0, c, i, j);
  }
  return m;
}

bool is_image_extension(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

std::string format_angle(double a) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", a);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back() += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        fields.back() += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.emplace_back();
    } else {
      fields.back() += ch;
    }
  }
  return fields;
}

}  // namespace

Tensor4 load_image(const fs::path& path, std::size_t size) {
  cv::Mat bgr;
  try {
    bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  } catch (const cv::Exception& e) {
    throw ImageError("cannot decode " + path.string() + ": " + e.what());
  }
  if (bgr.empty()) throw ImageError("cannot decode " + path.string());
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  if (size != 0 && (rgb.rows != static_cast<int>(size) || rgb.cols != static_cast<int>(size))) {
    cv::Mat resized;
    cv::resize(rgb, resized, cv::Size(static_cast<int>(size), static_cast<int>(size)), 0, 0, cv::INTER_LINEAR);
    rgb = resized;
  }
  cv::Mat f;
  rgb.convertTo(f, CV_32FC3, 1.0 / 255.0);
  return from_mat(f);
}

void save_png(const fs::path& path, const Tensor4& image) {
  cv::Mat rgb = to_mat(image);
  cv::Mat bytes;
  rgb.convertTo(bytes, CV_8UC3, 255.0);  // saturating, rounds to nearest
  cv::Mat bgr;
  cv::cvtColor(bytes, bgr, cv::COLOR_RGB2BGR);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), bgr)) throw ImageError("cannot write " + path.string());
}

std::vector<fs::path> list_images(const fs::path& folder) {
  if (!fs::is_directory(folder)) throw std::runtime_error("not a directory: " + folder.string());
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(folder)) {
    if (entry.is_regular_file() && is_image_extension(entry.path())) out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

IngestResult ingest(const fs::path& folder, std::size_t size, std::ostream& warn) {
  IngestResult result;
  for (const auto& p : list_images(folder)) {
    try {
      result.images.push_back(load_image(p, size));
      result.paths.push_back(p);
    } catch (const ImageError& e) {
      warn << "warning: skipping " << e.what() << "\n";
    }
  }
  if (result.paths.empty()) throw std::runtime_error("no decodable PNG/JPEG images in " + folder.string());
  return result;
}

Tensor4 rotate(const Tensor4& image, double degrees) {
  const cv::Mat src = to_mat(image);
  const cv::Point2f centre(static_cast<float>(src.cols - 1) / 2.0f, static_cast<float>(src.rows - 1) / 2.0f);
  const cv::Mat m = cv::getRotationMatrix2D(centre, degrees, 1.0);
  cv::Mat dst;
  cv::warpAffine(src, dst, m, src.size(), cv::INTER_LINEAR, cv::BORDER_REFLECT_101);
  return from_mat(dst);
}

SplitSizes split_sizes(std::size_t n) {
  // Integer arithmetic keeps the floor exact.
  const std::size_t train = n * 70 / 100;
  const std::size_t val = n * 15 / 100;
  return {train, val, n - train - val};
}

std::vector<ManifestRecord> DatasetManifest::of(Split split) const {
  std::vector<ManifestRecord> out;
  for (const auto& r : records)
    if (r.split == split) out.push_back(r);
  return out;
}

std::string DatasetManifest::to_csv() const {
  std::string out = "path,split,angle_deg\n";
  for (const auto& r : records) {
    out += csv_field(r.path);
    out += ',';
    out += split_name(r.split);
    out += ',';
    if (r.angle_deg) out += format_angle(*r.angle_deg);
    out += '\n';
  }
  return out;
}

DatasetManifest DatasetManifest::from_csv(std::string_view text) {
  DatasetManifest m;
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line) || line != "path,split,angle_deg") {
    throw std::runtime_error("manifest: missing header 'path,split,angle_deg'");
  }
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != 3) throw std::runtime_error("manifest line " + std::to_string(lineno) + ": expected 3 fields");
    ManifestRecord r;
    r.path = fields[0];
    r.split = parse_split(fields[1]);
    if (!fields[2].empty()) {
      double a = 0;
      const auto* end = fields[2].data() + fields[2].size();
      auto [ptr, ec] = std::from_chars(fields[2].data(), end, a);
      if (ec != std::errc{} || ptr != end) throw std::runtime_error("manifest line " + std::to_string(lineno) + ": bad angle");
      r.angle_deg = a;
    } else {
      ++m.source_count;
    }
    m.records.push_back(std::move(r));
  }
  return m;
}

void DatasetManifest::save(const fs::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << to_csv();
}

DatasetManifest DatasetManifest::load(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_csv(ss.str());
}

DatasetManifest split_and_augment(const std::vector<std::string>& sorted_paths, std::uint64_t seed,
                                  std::optional<std::size_t> augment_target) {
  if (sorted_paths.empty()) throw std::invalid_argument("split_and_augment: no images");
  const SplitSizes sizes = split_sizes(sorted_paths.size());
  if (augment_target && *augment_target < sizes.train) {
    throw std::invalid_argument("augment target " + std::to_string(*augment_target) + " is below the training split size " +
                                std::to_string(sizes.train));
  }
  std::vector<std::string> order = sorted_paths;
  Stream split_rng(derive_seed(seed, "split"));
  split_rng.shuffle(order);

  DatasetManifest m;
  m.seed = seed;
  m.source_count = order.size();
  for (std::size_t i = 0; i < order.size(); ++i) {
    const Split s = i < sizes.train ? Split::train : i < sizes.train + sizes.val ? Split::val : Split::test;
    m.records.push_back({order[i], s, std::nullopt});
  }
  if (augment_target && sizes.train > 0) {
    Stream aug_rng(derive_seed(seed, "augment"));
    std::vector<ManifestRecord> extra;
    for (std::size_t k = sizes.train; k < *augment_target; ++k) {
      const auto& base = order[aug_rng.below(sizes.train)];
      double angle = 0.0;
      // Rounded to the manifest's precision so the CSV round-trips exactly.
      while (angle == 0.0) angle = std::round((aug_rng.uniform() * 2.0 - 1.0) * kMaxRotationDeg * 1e4) / 1e4;
      extra.push_back({base, Split::train, angle});
    }
    m.records.insert(m.records.begin() + static_cast<std::ptrdiff_t>(sizes.train), extra.begin(), extra.end());
  }
  return m;
}

std::string record_id(const ManifestRecord& record) {
  std::string id = fs::path(record.path).filename().string();
  if (record.angle_deg) id += "@" + format_angle(*record.angle_deg);
  return id;
}

std::string_view noise_mode_name(NoiseMode mode) {
  switch (mode) {
    case NoiseMode::literal: return "literal";
    case NoiseMode::zero_mean: return "zero-mean";
    case NoiseMode::off: return "off";
  }
  return "?";
}

NoiseMode parse_noise_mode(std::string_view text) {
  if (text == "literal") return NoiseMode::literal;
  if (text == "zero-mean" || text == "zero_mean") return NoiseMode::zero_mean;
  if (text == "off") return NoiseMode::off;
  throw std::invalid_argument("unknown noise mode '" + std::string(text) + "' (expected literal, zero-mean or off)");
}

Tensor4 degrade(const Tensor4& clean, const DegradationConfig& config, const std::vector<std::string>& ids) {
  const Shape s = clean.shape();
  if (ids.size() != 1 && ids.size() != s.n) {
    throw std::invalid_argument("degrade: need one id per image (" + std::to_string(s.n) + "), got " +
                                std::to_string(ids.size()));
  }
  if (config.pool_iterations < 0) throw std::invalid_argument("degrade: pool iterations must be >= 0");
  Tensor4 out = clean;
  if (config.noise != NoiseMode::off) {
    if (config.noise_levels < 1) throw std::invalid_argument("degrade: noise levels must be >= 1");
    const double offset = config.noise == NoiseMode::zero_mean ? (config.noise_levels - 1) / 2.0 : 0.0;
    for (std::size_t n = 0; n < s.n; ++n) {
      Stream rng(derive_seed(config.seed, ids.size() == 1 ? ids[0] : ids[n]));
      for (float& v : out.image(n)) {
        const double level = static_cast<double>(rng.below(static_cast<std::uint64_t>(config.noise_levels)));
        v = static_cast<float>(std::clamp(v + config.noise_scale * (level - offset), 0.0, 1.0));
      }
    }
  }
  for (int i = 0; i < config.pool_iterations; ++i) out = avgpool3s1_forward(out);
  for (float& v : out.values()) v = std::clamp(v, 0.0f, 1.0f);
  return out;
}

Tensor4 degrade(const Tensor4& clean, const DegradationConfig& config, std::string_view id) {
  return degrade(clean, config, std::vector<std::string>{std::string(id)});
}

double total_variation(const Tensor4& image) {
  const Shape s = image.shape();
  double tv = 0.0;
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c)
      for (std::size_t i = 0; i < s.h; ++i)
        for (std::size_t j = 0; j < s.w; ++j) {
          const double v = image.at(n, c, i, j);
          if (j + 1 < s.w) tv += std::abs(image.at(n, c, i, j + 1) - v);
          if (i + 1 < s.h) tv += std::abs(image.at(n, c, i + 1, j) - v);
        }
  return tv;
}

ManifestDataset::ManifestDataset(const DatasetManifest& manifest, Split split, std::size_t image_size,
                                 DegradationConfig degradation)
    : records_(manifest.of(split)), image_size_(image_size), degradation_(degradation) {}

ImagePair ManifestDataset::get(std::size_t index) const {
  const auto& r = records_.at(index);
  auto it = cache_.find(r.path);
  if (it == cache_.end()) it = cache_.emplace(r.path, load_image(r.path, image_size_)).first;
  Tensor4 clean = r.angle_deg ? rotate(it->second, *r.angle_deg) : it->second;
  Tensor4 degraded = degrade(clean, degradation_, record_id(r));
  return {std::move(degraded), std::move(clean)};
}

}  // namespace vrae::data
