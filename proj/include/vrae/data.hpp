#pragma once

#include "vrae/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace vrae::data {

class ImageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Split { train, val, test };

std::string_view split_name(Split s);
Split parse_split(std::string_view text);

// ---------------------------------------------------------------------------
// Image I/O

/// Decodes a PNG/JPEG into a 1x3xHxW RGB tensor in [0,1], bilinearly resized
/// to size x size (no resize when size is 0).
Tensor4 load_image(const std::filesystem::path& path, std::size_t size);

/// Writes a 1x3xHxW tensor as an 8-bit RGB PNG after clamping to [0,1].
void save_png(const std::filesystem::path& path, const Tensor4& image);

/// PNG/JPEG files directly inside `folder`, sorted lexicographically.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& folder);

struct IngestResult {
  std::vector<std::filesystem::path> paths;
  std::vector<Tensor4> images;
};

/// Loads every decodable image in `folder`; undecodable files are skipped with
/// a line on `warn`. Throws if nothing usable remains.
IngestResult ingest(const std::filesystem::path& folder, std::size_t size, std::ostream& warn);

/// Rotation about the image centre, bilinear sampling, reflected border.
Tensor4 rotate(const Tensor4& image, double degrees);

// ---------------------------------------------------------------------------
// Splits and augmentation

struct SplitSizes {
  std::size_t train, val, test;
};

/// train = floor(0.7 N), val = floor(0.15 N), test takes the rest.
SplitSizes split_sizes(std::size_t n);

struct ManifestRecord {
  std::string path;
  Split split = Split::train;
  std::optional<double> angle_deg;

  friend bool operator==(const ManifestRecord&, const ManifestRecord&) = default;
};

struct DatasetManifest {
  std::vector<ManifestRecord> records;
  std::uint64_t seed = 0;
  std::size_t source_count = 0;

  std::vector<ManifestRecord> of(Split split) const;

  /// `path,split,angle_deg` with a header line; angle empty for originals.
  std::string to_csv() const;
  static DatasetManifest from_csv(std::string_view text);

  void save(const std::filesystem::path& path) const;
  static DatasetManifest load(const std::filesystem::path& path);
};

inline constexpr double kMaxRotationDeg = 15.0;

/// Seeded shuffle of `sorted_paths`, 70/15/15 split, then the training split is
/// grown to `augment_target` records of (image, angle) with angles uniform in
/// [-15, 15] degrees excluding 0. No augmentation when the target is absent.
DatasetManifest split_and_augment(const std::vector<std::string>& sorted_paths, std::uint64_t seed,
                                  std::optional<std::size_t> augment_target);

/// Stable id for per-image random streams: file name plus the angle, if any.
std::string record_id(const ManifestRecord& record);

// ---------------------------------------------------------------------------
// Degradation

enum class NoiseMode { literal, zero_mean, off };

std::string_view noise_mode_name(NoiseMode mode);
/// Accepts "literal", "zero-mean" / "zero_mean", "off".
NoiseMode parse_noise_mode(std::string_view text);

struct DegradationConfig {
  NoiseMode noise = NoiseMode::literal;
  double noise_scale = 0.1;
  int noise_levels = 10;  // draws from {0, .., levels-1}
  int pool_iterations = 10;
  std::uint64_t seed = 0;

  friend bool operator==(const DegradationConfig&, const DegradationConfig&) = default;
};

/// Discrete additive noise once, clamp to [0,1], then `pool_iterations` passes
/// of the 3x3 reflect-padded average pool. Image k of the batch draws from the
/// stream derive_seed(seed, ids[k]); a single id may be given for any batch.
Tensor4 degrade(const Tensor4& clean, const DegradationConfig& config, const std::vector<std::string>& ids);
Tensor4 degrade(const Tensor4& clean, const DegradationConfig& config, std::string_view id = "");

/// Sum of absolute horizontal and vertical neighbour differences.
double total_variation(const Tensor4& image);

// ---------------------------------------------------------------------------
// Datasets

struct ImagePair {
  Tensor4 degraded;
  Tensor4 clean;
};

class Dataset {
 public:
  virtual ~Dataset() = default;
  virtual std::size_t size() const = 0;
  /// Each side is 1xCxHxW.
  virtual ImagePair get(std::size_t index) const = 0;
};

/// Fixed in-memory pairs.
class PairDataset : public Dataset {
 public:
  explicit PairDataset(std::vector<ImagePair> pairs) : pairs_(std::move(pairs)) {}
  std::size_t size() const override { return pairs_.size(); }
  ImagePair get(std::size_t index) const override { return pairs_.at(index); }

 private:
  std::vector<ImagePair> pairs_;
};

/// One split of a manifest, decoded lazily and degraded on the fly from
/// (record id, degradation seed). Decoded base images are cached.
class ManifestDataset : public Dataset {
 public:
  ManifestDataset(const DatasetManifest& manifest, Split split, std::size_t image_size, DegradationConfig degradation);

  std::size_t size() const override { return records_.size(); }
  ImagePair get(std::size_t index) const override;

  const ManifestRecord& record(std::size_t index) const { return records_.at(index); }

 private:
  std::vector<ManifestRecord> records_;
  std::size_t image_size_;
  DegradationConfig degradation_;
  mutable std::map<std::string, Tensor4> cache_;
};

}  // namespace vrae::data
