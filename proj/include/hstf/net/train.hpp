#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "hstf/features/sample_io.hpp"
#include "hstf/net/checkpoint.hpp"
#include "hstf/net/model.hpp"

namespace hstf::net {

struct TrainConfig {
  int batch_size = 64;
  int max_epochs = 50;
  /// Epochs without a validation-F1 improvement before stopping.
  int patience = 5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Drives the per-epoch shuffle and the dropout masks.
  uint64_t seed = 42;
  /// Worker threads for gradient shards and scoring; 0 picks the core count.
  /// Results do not depend on this value.
  int threads = 1;
};

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;  ///< mean training loss (dropout active)
  double acc = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
  double val_precision = 0.0;
  double val_recall = 0.0;
  double val_f1 = 0.0;
  double seconds = 0.0;
};

struct EpochStats {
  double loss = 0.0;
  double acc = 0.0;
};

struct Evaluation {
  double loss = 0.0;
  double acc = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// Adam state plus the minibatch loop over a sample source.
class Trainer {
 public:
  Trainer(const ModelConfig& model_config, const TrainConfig& config);

  Model<float>& model() { return model_; }
  const Model<float>& model() const { return model_; }
  int steps() const { return steps_; }

  /// One pass over `indices` in a seeded shuffled order. Throws
  /// Error(kNumeric) naming the epoch if the loss goes non-finite.
  EpochStats train_epoch(const features::SampleSource& data, std::span<const size_t> indices, int epoch);

 private:
  void apply_adam(const ParamSet<float>& grads);

  ModelConfig model_config_;
  TrainConfig config_;
  Model<float> model_;
  ParamSet<float> m_;
  ParamSet<float> v_;
  int steps_ = 0;
};

/// p_malicious for each index, inference mode.
std::vector<double> predict_scores(const Model<float>& model, const features::SampleSource& data,
                                   std::span<const size_t> indices, int threads = 1);

/// Loss, accuracy and malicious-class P/R/F1 at threshold 0.5.
Evaluation evaluate(const Model<float>& model, const features::SampleSource& data,
                    std::span<const size_t> indices, int threads = 1);

struct TrainResult {
  Model<float> model;  ///< parameters from the best validation epoch
  std::vector<EpochRecord> history;
  CheckpointMeta meta;
};

/// Minibatch Adam with early stopping on validation F1 (ties resolved by the
/// lower validation loss). Throws Error(kData) on an empty or unlabeled split.
TrainResult train(const ModelConfig& model_config, const TrainConfig& config,
                  const features::SampleSource& data, std::span<const size_t> train_indices,
                  std::span<const size_t> val_indices,
                  const std::function<void(const EpochRecord&)>& on_epoch = {});

int resolve_threads(int requested);

}  // namespace hstf::net
