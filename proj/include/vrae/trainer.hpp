#pragma once

#include "vrae/checkpoint.hpp"
#include "vrae/data.hpp"
#include "vrae/model.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace vrae {

struct TrainConfig {
  int epochs = 100;
  std::size_t batch_size = 16;
  double lr = 1e-4;
  std::uint64_t seed = 0;
  VraeConfig model;
  int eval_every = 1;
  /// Final checkpoint goes here and the best-val one to "<path>.best"; empty
  /// keeps both in memory only.
  std::filesystem::path checkpoint_path;
  /// Recorded in checkpoints; the datasets apply it.
  data::DegradationConfig degradation;

  void validate() const;
};

struct EpochLog {
  int epoch = 0;
  double train_mse = 0.0;
  std::optional<double> val_mse;
};

struct StepInfo {
  int epoch;
  std::size_t batch;
  std::uint64_t step;
  double loss;
};

struct TrainResult {
  Checkpoint final_checkpoint;
  std::optional<Checkpoint> best_checkpoint;
  std::vector<EpochLog> epochs;
  std::vector<double> step_losses;
};

class NonFiniteLoss : public std::runtime_error {
 public:
  NonFiniteLoss(int epoch, std::size_t batch, double loss);
  int epoch;
  std::size_t batch;
};

/// Visiting order of `count` training records in `epoch` (1-based).
std::vector<std::size_t> epoch_order(std::size_t count, std::uint64_t seed, int epoch);

/// Stacks dataset items [indices] into (degraded, clean) batches.
data::ImagePair assemble_batch(const data::Dataset& dataset, const std::vector<std::size_t>& indices);

/// Mean squared error of eval-mode predictions over the whole dataset.
double evaluate_mse(Network& net, const data::Dataset& dataset, std::size_t batch_size);

using StepCallback = std::function<void(const StepInfo&)>;

/// Mini-batch MSE training with Adam. Builds the network from config.seed.
TrainResult train(const TrainConfig& config, const data::Dataset& train_set, const data::Dataset* val_set,
                  const StepCallback& on_step = {});

/// Continues from an existing network and optimizer state.
TrainResult train(const TrainConfig& config, Network& net, AdamState& optimizer, const data::Dataset& train_set,
                  const data::Dataset* val_set, const StepCallback& on_step = {});

/// `epoch,train_mse,val_mse` with an empty val cell on epochs without evaluation.
std::string loss_log_csv(const std::vector<EpochLog>& epochs);

}  // namespace vrae
