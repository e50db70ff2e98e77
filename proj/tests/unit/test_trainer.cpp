#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "stedq/optimizer.hpp"
#include "stedq/synth.hpp"
#include "stedq/trainer.hpp"

using namespace stedq;

namespace {

NetworkConfig tiny_net(std::uint64_t seed = 1) {
  NetworkConfig c;
  c.input_size = 16;
  c.pool_stride = 1;
  c.conv_channels = {2, 3, 3, 4, 4, 4};
  c.dense_widths = {6, 1};
  c.seed = seed;
  return c;
}

DatasetSplit tiny_split(std::size_t n = 60) {
  SynthConfig s;
  s.image_size = 16;
  s.filaments_min = 1;
  s.filaments_max = 3;
  s.seed = 4;
  return stratified_split(synth_generate(s, n), 5);
}

std::vector<std::size_t> stop_trace(const std::vector<double>& values, std::size_t patience) {
  EarlyStopping es(patience);
  for (double v : values)
    if (es.update(v)) return {es.epochs_seen(), es.best_epoch()};
  return {es.epochs_seen(), es.best_epoch()};
}

}  // namespace

TEST_CASE("early stopping rule") {
  // Strictly improving never triggers.
  CHECK(stop_trace({.5, .4, .3, .2, .1}, 10) == std::vector<std::size_t>{5, 5});
  CHECK(stop_trace({.30, .20, .25, .26, .10}, 2) == std::vector<std::size_t>{4, 2});
  // A change below the tolerance is not an improvement.
  CHECK(stop_trace({.30, .30 - 5e-7, .30 - 9e-7}, 2) == std::vector<std::size_t>{3, 1});
  CHECK(stop_trace({.3, .31, .29, .5, .5, .5}, 3) == std::vector<std::size_t>{6, 3});
  CHECK_THROWS(EarlyStopping(0));
}

TEST_CASE("epoch batching") {
  std::mt19937_64 rng(1);
  auto b = epoch_batches(250, 100, rng);
  REQUIRE(b.size() == 3);
  CHECK(b[2].size() == 50);
  b = epoch_batches(201, 100, rng);
  REQUIRE(b.size() == 2);
  CHECK(b[1].size() == 101);
  std::vector<int> seen(201, 0);
  for (auto& batch : b)
    for (auto i : batch) ++seen[i];
  CHECK(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));
  std::mt19937_64 r1(3), r2(3);
  CHECK(epoch_batches(57, 10, r1) == epoch_batches(57, 10, r2));
}

TEST_CASE("rmse examples") {
  const std::vector<double> labels{0.2, 0.7, 0.9};
  CHECK(rmse(labels, labels) == 0.0);
  CHECK(rmse(std::vector<double>{0.5, 0.5}, std::vector<double>{0.0, 1.0}) == 0.5);
  CHECK_THROWS(rmse(std::vector<double>{}, std::vector<double>{}));

  const auto split = tiny_split();
  const Network net = Network::build(tiny_net());
  const NormStats norm = compute_norm_stats(split.train);
  const double r = evaluate(net, split.validation, norm);
  Tensor scores({split.validation.size(), 1}), target({split.validation.size(), 1});
  const auto p = net.predict(make_batch(split.validation, norm));
  for (std::size_t i = 0; i < p.size(); ++i) {
    scores[i] = p[i];
    target[i] = split.validation[i].score;
  }
  CHECK(std::abs(r - std::sqrt(mse_loss(scores, target).value)) <= 1e-12);
  CHECK_THROWS_AS(evaluate(net, std::vector<LabeledImage>{}, norm), DataError);
}

TEST_CASE("one small step lowers the batch loss") {
  const auto split = tiny_split();
  const NormStats norm = compute_norm_stats(split.train);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    Network net = Network::build(tiny_net(seed));
    std::vector<std::size_t> idx(20);
    std::iota(idx.begin(), idx.end(), 0);
    const Tensor x = make_batch(split.train, idx, norm);
    Tensor t({20, 1});
    for (std::size_t i = 0; i < 20; ++i) t[i] = split.train[i].score;

    // Train-mode loss is measured from the same running statistics both times.
    const auto stats = net.running_stats();
    ForwardTrace trace;
    const auto before = mse_loss(net.forward(x, Mode::kTrain, &trace), t);
    auto opt = make_optimizer_state(net.parameters(), 1e-4, 0.9);
    sgd_momentum_step(net.parameters(), net.backward(trace, before.grad), opt);
    net.running_stats() = stats;
    const double after = mse_loss(net.forward(x, Mode::kTrain), t).value;
    CHECK(after < before.value);
  }
}

TEST_CASE("training is deterministic and keeps the best epoch") {
  const auto split = tiny_split(80);
  const NormStats norm = compute_norm_stats(split.train);
  TrainingConfig tc;
  tc.batch_size = 16;
  tc.max_epochs = 6;
  tc.patience = 2;
  tc.seed = 3;
  std::vector<EpochRecord> streamed;
  const auto a = train(Network::build(tiny_net()), split, norm, tc, [&](const EpochRecord& r) { streamed.push_back(r); });
  const auto b = train(Network::build(tiny_net()), split, norm, tc);

  CHECK(checkpoint_digest(a.checkpoint) == checkpoint_digest(b.checkpoint));
  CHECK(a.history.to_csv() == b.history.to_csv());
  CHECK(streamed.size() == a.history.epochs.size());
  CHECK(a.history.stopped_epoch <= tc.max_epochs);
  CHECK(a.history.stopped_epoch - a.history.best_epoch <= tc.patience);

  double best = INFINITY;
  for (const auto& e : a.history.epochs) best = std::min(best, e.val_rmse);
  CHECK(a.checkpoint.metadata.val_rmse == best);
  CHECK(a.history.best_val_rmse() == best);
  CHECK(a.checkpoint.metadata.epoch == a.history.best_epoch);
  CHECK(evaluate(a.checkpoint.network, split.validation, norm) == best);
  CHECK(a.checkpoint.metadata.norm_mean == norm.mean);
  CHECK(std::isfinite(a.history.test_rmse));
  CHECK(a.history.to_csv().rfind("epoch,train_rmse,val_rmse\n1,", 0) == 0);

  tc.seed = 4;
  CHECK(checkpoint_digest(train(Network::build(tiny_net()), split, norm, tc).checkpoint) !=
        checkpoint_digest(a.checkpoint));
}

TEST_CASE("training rejects bad inputs and reports divergence") {
  auto split = tiny_split();
  const NormStats norm = compute_norm_stats(split.train);
  TrainingConfig tc;
  tc.batch_size = 1;
  CHECK_THROWS(train(Network::build(tiny_net()), split, norm, tc));
  tc = {};
  DatasetSplit empty = split;
  empty.validation.clear();
  CHECK_THROWS_AS(train(Network::build(tiny_net()), empty, norm, tc), DataError);

  tc.learning_rate = 1e6;
  tc.max_epochs = 20;
  tc.batch_size = 8;
  try {
    train(Network::build(tiny_net()), split, norm, tc);
    // Saturated sigmoids may keep everything finite; that is also acceptable.
  } catch (const TrainingDiverged& e) {
    CHECK(e.last_finite_epoch() < 20);
  }
  CHECK(TrainingConfig::from_text(TrainingConfig{}.to_text()) == TrainingConfig{});
}
