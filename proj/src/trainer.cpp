#include "vrae/trainer.hpp"

#include "vrae/init.hpp"
#include "vrae/rng.hpp"

#include <cmath>
#include <numeric>

namespace vrae {

namespace {

std::string format_loss(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  if (eval_every < 1) throw std::invalid_argument("eval-every must be >= 1");
  if (!(lr > 0.0)) throw std::invalid_argument("learning rate must be positive");
  model.validate();
}

NonFiniteLoss::NonFiniteLoss(int epoch_, std::size_t batch_, double loss)
    : std::runtime_error("non-finite loss " + format_loss(loss) + " at epoch " + std::to_string(epoch_) + ", batch " +
                         std::to_string(batch_)),
      epoch(epoch_),
      batch(batch_) {}

std::vector<std::size_t> epoch_order(std::size_t count, std::uint64_t seed, int epoch) {
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Stream rng(derive_seed(seed, "epoch" + std::to_string(epoch)));
  rng.shuffle(order);
  return order;
}

data::ImagePair assemble_batch(const data::Dataset& dataset, const std::vector<std::size_t>& indices) {
  std::vector<Tensor4> degraded, clean;
  degraded.reserve(indices.size());
  clean.reserve(indices.size());
  for (auto i : indices) {
    auto pair = dataset.get(i);
    degraded.push_back(std::move(pair.degraded));
    clean.push_back(std::move(pair.clean));
  }
  return {stack<float>(degraded), stack<float>(clean)};
}

double evaluate_mse(Network& net, const data::Dataset& dataset, std::size_t batch_size) {
  if (dataset.size() == 0) throw std::invalid_argument("evaluate_mse: empty dataset");
  double weighted = 0.0;
  std::size_t total = 0;
  for (std::size_t start = 0; start < dataset.size(); start += batch_size) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(dataset.size(), start + batch_size); ++i) idx.push_back(i);
    const auto batch = assemble_batch(dataset, idx);
    const auto pred = net.forward(batch.degraded, Mode::eval);
    weighted += mse_loss(pred, batch.clean).loss * static_cast<double>(pred.size());
    total += pred.size();
  }
  return weighted / static_cast<double>(total);
}

TrainResult train(const TrainConfig& config, const data::Dataset& train_set, const data::Dataset* val_set,
                  const StepCallback& on_step) {
  config.validate();
  auto net = Network::build(config.model, config.seed);
  AdamState optimizer;
  return train(config, net, optimizer, train_set, val_set, on_step);
}

TrainResult train(const TrainConfig& config, Network& net, AdamState& optimizer, const data::Dataset& train_set,
                  const data::Dataset* val_set, const StepCallback& on_step) {
  config.validate();
  if (train_set.size() == 0) throw std::invalid_argument("train: empty training split");
  if (val_set != nullptr && val_set->size() == 0) val_set = nullptr;
  optimizer.hyper.lr = config.lr;

  TrainResult result;
  std::optional<double> best_val;
  auto params = net.parameters();
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto order = epoch_order(train_set.size(), config.seed, epoch);
    double epoch_sum = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch_index) {
      const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                         order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + config.batch_size)));
      const auto batch = assemble_batch(train_set, idx);
      const auto pred = net.forward(batch.degraded, Mode::train);
      const auto loss = mse_loss(pred, batch.clean);
      if (!std::isfinite(loss.loss)) throw NonFiniteLoss(epoch, batch_index, loss.loss);
      net.zero_grad();
      net.backward(loss.grad);
      adam_step(params, optimizer);
      epoch_sum += loss.loss * static_cast<double>(idx.size());
      result.step_losses.push_back(loss.loss);
      if (on_step) on_step({epoch, batch_index, optimizer.step, loss.loss});
    }
    EpochLog log{epoch, epoch_sum / static_cast<double>(order.size()), std::nullopt};
    const bool evaluate = val_set != nullptr && (epoch % config.eval_every == 0 || epoch == config.epochs);
    if (evaluate) {
      log.val_mse = evaluate_mse(net, *val_set, config.batch_size);
      if (!best_val || *log.val_mse < *best_val) {
        best_val = log.val_mse;
        result.best_checkpoint = Checkpoint::capture(net, &optimizer, config.seed, config.degradation);
        if (!config.checkpoint_path.empty()) {
          result.best_checkpoint->save(config.checkpoint_path.string() + ".best");
        }
      }
    }
    result.epochs.push_back(log);
  }
  result.final_checkpoint = Checkpoint::capture(net, &optimizer, config.seed, config.degradation);
  if (!config.checkpoint_path.empty()) result.final_checkpoint.save(config.checkpoint_path);
  return result;
}

std::string loss_log_csv(const std::vector<EpochLog>& epochs) {
  std::string out = "epoch,train_mse,val_mse\n";
  for (const auto& e : epochs) {
    out += std::to_string(e.epoch) + "," + format_loss(e.train_mse) + ",";
    if (e.val_mse) out += format_loss(*e.val_mse);
    out += "\n";
  }
  return out;
}

}  // namespace vrae
