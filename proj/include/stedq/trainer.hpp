#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "stedq/checkpoint.hpp"
#include "stedq/dataset.hpp"
#include "stedq/network.hpp"

namespace stedq {

struct TrainingConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
  std::size_t batch_size = 100;
  std::size_t patience = 10;
  std::size_t max_epochs = 200;
  std::uint64_t seed = 0;

  void validate() const;
  std::string to_text() const;
  static TrainingConfig from_text(std::string_view text);
  friend bool operator==(const TrainingConfig&, const TrainingConfig&) = default;
};

/// Improvement means beating the best value by more than this.
inline constexpr double kImprovementTolerance = 1e-6;

/// Patience rule: stop once `patience` consecutive epochs fail to improve on the best.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience);
  /// Records the next epoch's value; returns true when training should stop.
  bool update(double value);
  bool improved() const { return improved_; }
  std::size_t best_epoch() const { return best_epoch_; }
  double best_value() const { return best_; }
  std::size_t epochs_seen() const { return epoch_; }

 private:
  std::size_t patience_;
  std::size_t epoch_ = 0;
  std::size_t best_epoch_ = 0;
  std::size_t since_best_ = 0;
  bool improved_ = false;
  double best_ = std::numeric_limits<double>::infinity();
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_rmse = 0.0;
  double val_rmse = 0.0;
};

struct TrainingHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  std::size_t stopped_epoch = 0;
  bool early_stopped = false;
  double test_rmse = std::numeric_limits<double>::quiet_NaN();

  double best_val_rmse() const;
  /// `epoch,train_rmse,val_rmse`
  std::string to_csv() const;
};

/// Raised when the loss stops being finite; carries the last epoch that finished cleanly.
class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(std::size_t last_finite_epoch, const std::string& what)
      : std::runtime_error(what), last_finite_epoch_(last_finite_epoch) {}
  std::size_t last_finite_epoch() const { return last_finite_epoch_; }

 private:
  std::size_t last_finite_epoch_;
};

struct TrainingResult {
  Checkpoint checkpoint;  // weights of the best validation epoch
  TrainingHistory history;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Mini-batch SGD with momentum over `split.train` (augmentation is the caller's job),
/// validation after every epoch, early stopping, best-weight retention. `norm` must
/// come from the training images. The test split, when non-empty, is scored once
/// with the best weights.
TrainingResult train(Network net, const DatasetSplit& split, const NormStats& norm, const TrainingConfig& config,
                     const EpochCallback& on_epoch = {});

/// Batch index lists for one epoch: seed-shuffled, last short batch kept, and a
/// trailing batch of one merged into its predecessor.
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size, std::mt19937_64& rng);

/// Inference-mode predictions for every item, evaluated in chunks.
std::vector<double> predict_items(const Network& net, std::span<const LabeledImage> items, const NormStats& norm);
/// sqrt(mean((prediction - label)^2)).
double rmse(std::span<const double> predictions, std::span<const double> labels);
double evaluate(const Network& net, std::span<const LabeledImage> items, const NormStats& norm);

}  // namespace stedq
