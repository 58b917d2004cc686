#pragma once

#include "vrae/data.hpp"
#include "vrae/model.hpp"
#include "vrae/optim.hpp"

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace vrae {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CheckpointEntry {
  std::string name;
  int rank = 4;
  Tensor4 value;

  friend bool operator==(const CheckpointEntry&, const CheckpointEntry&) = default;
};

/// Layout, all integers little-endian:
///   "VRAE" | u32 version | u32 json length | json (config block)
///   u32 entry count | per entry: u32 name length, name, u8 rank, rank x u64 dims, f32 payload
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  VraeConfig config;
  data::DegradationConfig degradation;
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
  AdamHyperparams adam;
  bool has_optimizer = false;
  /// Parameters, then batch-norm buffers, then "adam.m.*" and "adam.v.*".
  std::vector<CheckpointEntry> entries;

  /// Snapshot of a network and, optionally, its optimizer.
  static Checkpoint capture(Network& net, const AdamState* optimizer, std::uint64_t seed,
                            const data::DegradationConfig& degradation);

  /// Fresh network carrying the stored parameters and running statistics.
  Network restore() const;
  /// Optimizer moments and step counter; zero state when none were stored.
  AdamState restore_optimizer() const;

  std::vector<std::uint8_t> serialize() const;
  static Checkpoint deserialize(const std::vector<std::uint8_t>& bytes);

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);

  const CheckpointEntry* find(std::string_view name) const;
};

}  // namespace vrae
