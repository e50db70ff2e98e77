#include "stedq/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "stedq/optimizer.hpp"
#include "stedq/text.hpp"

namespace stedq {

void TrainingConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("momentum must lie in [0,1)");
  if (batch_size < 2) throw std::invalid_argument("batch_size must be at least 2");
  if (patience < 1) throw std::invalid_argument("patience must be at least 1");
  if (max_epochs < 1) throw std::invalid_argument("max_epochs must be at least 1");
}

std::string TrainingConfig::to_text() const {
  KeyValueText kv;
  kv.set("learning_rate", format_double(learning_rate));
  kv.set("momentum", format_double(momentum));
  kv.set("batch_size", std::to_string(batch_size));
  kv.set("patience", std::to_string(patience));
  kv.set("max_epochs", std::to_string(max_epochs));
  kv.set("seed", std::to_string(seed));
  return kv.str();
}

TrainingConfig TrainingConfig::from_text(std::string_view text) {
  const auto kv = KeyValueText::parse(text);
  TrainingConfig c;
  for (const auto& [key, value] : kv.entries()) {
    if (key == "learning_rate") c.learning_rate = parse_double(value);
    else if (key == "momentum") c.momentum = parse_double(value);
    else if (key == "batch_size") c.batch_size = parse_uint(value);
    else if (key == "patience") c.patience = parse_uint(value);
    else if (key == "max_epochs") c.max_epochs = parse_uint(value);
    else if (key == "seed") c.seed = parse_uint(value);
    else throw std::invalid_argument("training config: unknown key '" + key + "'");
  }
  c.validate();
  return c;
}

EarlyStopping::EarlyStopping(std::size_t patience) : patience_(patience) {
  if (patience < 1) throw std::invalid_argument("patience must be at least 1");
}

bool EarlyStopping::update(double value) {
  ++epoch_;
  improved_ = value < best_ - kImprovementTolerance;
  if (improved_) {
    best_ = value;
    best_epoch_ = epoch_;
    since_best_ = 0;
  } else {
    ++since_best_;
  }
  return since_best_ >= patience_;
}

double TrainingHistory::best_val_rmse() const {
  for (const auto& e : epochs)
    if (e.epoch == best_epoch) return e.val_rmse;
  return std::numeric_limits<double>::quiet_NaN();
}

std::string TrainingHistory::to_csv() const {
  std::ostringstream out;
  out << "epoch,train_rmse,val_rmse\n";
  for (const auto& e : epochs) out << e.epoch << "," << format_double(e.train_rmse) << "," << format_double(e.val_rmse) << "\n";
  return out.str();
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size, std::mt19937_64& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n; start += batch_size)
    batches.emplace_back(order.begin() + start, order.begin() + std::min(n, start + batch_size));
  if (batches.size() > 1 && batches.back().size() == 1) {
    batches[batches.size() - 2].push_back(batches.back()[0]);
    batches.pop_back();
  }
  return batches;
}

std::vector<double> predict_items(const Network& net, std::span<const LabeledImage> items, const NormStats& norm) {
  constexpr std::size_t kChunk = 128;
  std::vector<double> out;
  out.reserve(items.size());
  for (std::size_t start = 0; start < items.size(); start += kChunk) {
    const auto chunk = items.subspan(start, std::min(kChunk, items.size() - start));
    const auto scores = net.predict(make_batch(chunk, norm));
    out.insert(out.end(), scores.begin(), scores.end());
  }
  return out;
}

double rmse(std::span<const double> predictions, std::span<const double> labels) {
  if (predictions.empty()) throw std::invalid_argument("rmse of an empty set");
  if (predictions.size() != labels.size()) throw std::invalid_argument("rmse: prediction/label count mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) sum += (predictions[i] - labels[i]) * (predictions[i] - labels[i]);
  return std::sqrt(sum / static_cast<double>(predictions.size()));
}

double evaluate(const Network& net, std::span<const LabeledImage> items, const NormStats& norm) {
  if (items.empty()) throw DataError("cannot evaluate on an empty set");
  return rmse(predict_items(net, items, norm), scores_of(items));
}

TrainingResult train(Network net, const DatasetSplit& split, const NormStats& norm, const TrainingConfig& config,
                     const EpochCallback& on_epoch) {
  config.validate();
  if (split.train.size() < 2) throw DataError("training split needs at least 2 images");
  if (split.validation.empty()) throw DataError("validation split is empty");
  if (!(norm.std > 0.0)) throw DataError("normalization std must be positive");

  std::mt19937_64 rng(config.seed);
  OptimizerState opt = make_optimizer_state(net.parameters(), config.learning_rate, config.momentum);
  EarlyStopping stopper(config.patience);
  TrainingResult result{{net, {}}, {}};
  auto& history = result.history;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    double sq_sum = 0.0;
    for (const auto& batch : epoch_batches(split.train.size(), config.batch_size, rng)) {
      const Tensor images = make_batch(split.train, batch, norm);
      Tensor target({batch.size(), 1});
      for (std::size_t i = 0; i < batch.size(); ++i) target[i] = split.train[batch[i]].score;
      ForwardTrace trace;
      Tensor scores;
      try {
        scores = net.forward(images, Mode::kTrain, &trace);
      } catch (const NumericError& e) {
        throw TrainingDiverged(epoch - 1, "training diverged in epoch " + std::to_string(epoch) +
                                              " (last finite epoch " + std::to_string(epoch - 1) + "): " + e.what());
      }
      const LossResult loss = mse_loss(scores, target);
      const ParameterMap grads = net.backward(trace, loss.grad);
      for (const auto& [name, g] : grads)
        if (!g.all_finite())
          throw TrainingDiverged(epoch - 1, "non-finite gradient for " + name + " in epoch " + std::to_string(epoch) +
                                                " (last finite epoch " + std::to_string(epoch - 1) + ")");
      sgd_momentum_step(net.parameters(), grads, opt);
      sq_sum += loss.value * static_cast<double>(batch.size());
    }

    EpochRecord rec{epoch, std::sqrt(sq_sum / static_cast<double>(split.train.size())), 0.0};
    try {
      rec.val_rmse = evaluate(net, split.validation, norm);
    } catch (const NumericError& e) {
      throw TrainingDiverged(epoch - 1, "validation scores not finite in epoch " + std::to_string(epoch) +
                                            " (last finite epoch " + std::to_string(epoch - 1) + ")");
    }
    history.epochs.push_back(rec);
    const bool stop = stopper.update(rec.val_rmse);
    if (stopper.improved()) result.checkpoint.network = net;
    if (on_epoch) on_epoch(rec);
    history.stopped_epoch = epoch;
    if (stop) {
      history.early_stopped = true;
      break;
    }
  }

  history.best_epoch = stopper.best_epoch();
  auto& meta = result.checkpoint.metadata;
  meta.epoch = history.best_epoch;
  meta.val_rmse = stopper.best_value();
  meta.norm_mean = norm.mean;
  meta.norm_std = norm.std;
  if (!split.test.empty()) history.test_rmse = evaluate(result.checkpoint.network, split.test, norm);
  return result;
}

}  // namespace stedq
