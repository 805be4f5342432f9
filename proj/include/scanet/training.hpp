#pragma once

// Loss assembly, the optimisation loop with gradient accumulation, and checkpoints.

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

#include "scanet/datagen.hpp"
#include "scanet/model.hpp"

namespace scanet {

struct LossWeights {
  double alpha = 1.0; // position
  double beta = 1.0;  // rotation
  double gamma = 0.5; // status
};

struct LossParts {
  torch::Tensor total;
  // Means over decoder layers.
  torch::Tensor position, rotation, status;
  // Per decoder layer, unweighted.
  std::vector<torch::Tensor> layer_position, layer_rotation, layer_status;
};

/// Cross-entropy parts per decoder layer, each the mean over samples of the per-sample mean
/// over its real components; position is the mean of the three axis terms. The total is the
/// layer mean of alpha*position + beta*rotation + gamma*status.
/// Throws DataError if a target index is outside its head's range.
LossParts compute_loss(const CorrectionOutput &out, const std::vector<Targets> &targets,
                       const LossWeights &w);

struct TrainConfig {
  double lr = 1e-4;
  double weight_decay = 1e-4;
  int batch = 8;
  int grad_accumulation = 4;
  int epochs = 100;
  LossWeights weights;
  int checkpoint_every = 1;
  /// Stop after this many batches (0 = no limit).
  std::int64_t max_iterations = 0;
  std::uint64_t seed = 0;
  bool double_precision = false;
  /// Keep built input tensors in memory when the training split has at most this many samples.
  int cache_limit = 2048;
  ReplaceMode replace = ReplaceMode::Selective;

  static TrainConfig from_config(const nlohmann::json &cfg);
};

struct EpochRecord {
  int epoch = 0;
  std::int64_t iterations = 0;
  std::int64_t optimizer_steps = 0;
  double train_loss = 0, train_position = 0, train_rotation = 0, train_status = 0;
  std::optional<double> val_loss, val_component_acc;

  nlohmann::json to_json() const;
};

struct TrainHooks {
  /// Overrides the dataset's train / val split when non-empty.
  std::vector<std::string> train_keys, val_keys;
  /// Called after every epoch; returning true ends training.
  std::function<bool(const EpochRecord &)> after_epoch;
};

struct TrainResult {
  std::vector<EpochRecord> epochs;
  std::int64_t iterations = 0;
  std::int64_t optimizer_steps = 0;
  std::optional<double> best_val_component_acc;
};

/// Seeds torch and builds a freshly initialised model.
ScaNet make_model(const ModelConfig &cfg, std::uint64_t seed, bool double_precision = false);

/// AdamW with the configured learning rate and decoupled weight decay.
std::unique_ptr<torch::optim::AdamW> make_optimizer(ScaNet &model, const TrainConfig &tc);

/// Gradient step bookkeeping shared by train() and the tests: accumulate `loss / accum` per
/// batch, step when the window is full; flush() steps a partial window with gradients rescaled
/// to a window mean.
class Accumulator {
public:
  Accumulator(torch::optim::Optimizer &opt, std::vector<torch::Tensor> params, int accumulation);
  /// Backpropagates one batch loss. Returns true if an optimizer step happened.
  bool add(const torch::Tensor &loss);
  /// Steps a partially filled window. Returns true if it stepped.
  bool flush();
  std::int64_t steps() const { return steps_; }

private:
  torch::optim::Optimizer &opt_;
  std::vector<torch::Tensor> params_;
  int accumulation_;
  int pending_ = 0;
  std::int64_t steps_ = 0;
};

/// Trains `model` on the dataset's train split. With a non-empty `out_dir` writes
/// train_log.jsonl (one record per epoch), last.ckpt every checkpoint_every epochs and
/// best.ckpt on the best val component accuracy. Throws NonFiniteLossError on a non-finite
/// loss after writing nonfinite.json with the batch keys and loss parts.
TrainResult train(const nlohmann::json &cfg, const Dataset &ds, ScaNet &model,
                  const std::filesystem::path &out_dir = {}, const TrainHooks &hooks = {});

/// Decodes the model's last layer for a batch of problems.
std::vector<std::vector<Correction>> predict(ScaNet &model, const std::vector<CorrectionInput> &inputs,
                                             ReplaceMode mode, bool double_precision = false);

inline constexpr int kCheckpointFormatVersion = 1;

/// Single-file archive: manifest JSON (format_version, config, config_hash, interface_hash,
/// epoch, metrics, parameter_count, dtype), named parameters and, when given, optimizer state.
void save_checkpoint(const std::filesystem::path &path, ScaNet &model, torch::optim::AdamW *opt,
                     const nlohmann::json &config, int epoch, const nlohmann::json &metrics);

/// Throws CheckpointError for unreadable, corrupt or version-mismatched files.
nlohmann::json read_checkpoint_manifest(const std::filesystem::path &path);

struct LoadedCheckpoint {
  nlohmann::json manifest;
  ScaNet model{nullptr};
};

/// Rebuilds the model from the stored config and loads its parameters.
LoadedCheckpoint load_checkpoint(const std::filesystem::path &path);
/// Restores the stored optimizer state into `opt` (built over the loaded model's parameters).
void load_optimizer_state(const std::filesystem::path &path, torch::optim::AdamW &opt);

} // namespace scanet
