// Acceptance suite: one PASS/FAIL line per criterion, details indented above it.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <unistd.h>
#include <vector>

#include "httplib.h"
#include "json.hpp"
#include "stedq/checkpoint.hpp"
#include "stedq/dataset.hpp"
#include "stedq/kernels.hpp"
#include "stedq/layers.hpp"
#include "stedq/network.hpp"
#include "stedq/pipeline.hpp"
#include "stedq/service.hpp"
#include "stedq/study.hpp"
#include "stedq/synth.hpp"
#include "stedq/trainer.hpp"
#include "testing.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace stedq;
using stedq::testing::numeric_gradient;
using stedq::testing::project;
using stedq::testing::random_tensor;
using stedq::testing::relative_error;

namespace {

using Clock = std::chrono::steady_clock;
double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void detail(const std::string& text) { std::cout << "  " << text << "\n" << std::flush; }

void verdict(const std::string& name, bool pass, const std::string& summary) {
  if (!pass) ++failures;
  std::cout << (pass ? "PASS " : "FAIL ") << name << ": " << summary << "\n" << std::flush;
}

std::string fmt(double v, int prec = 4) {
  std::ostringstream s;
  s.precision(prec);
  s << v;
  return s.str();
}

// ---- gradients ------------------------------------------------------------------

struct Worst {
  double value = 0.0;
  std::size_t checks = 0;
  void add(const Tensor& analytic, const Tensor& numeric) {
    for (std::size_t i = 0; i < analytic.size(); ++i) value = std::max(value, relative_error(analytic[i], numeric[i]));
    ++checks;
  }
};

Worst grad_conv() {
  Worst w;
  const std::array<std::pair<Shape, Shape>, 3> shapes{{{{1, 1, 6, 6}, {2, 1, 3, 3}},
                                                       {{2, 2, 5, 5}, {3, 2, 3, 3}},
                                                       {{2, 3, 4, 7}, {2, 3, 3, 3}}}};
  for (std::uint64_t seed = 1; seed <= 5; ++seed)
    for (const auto& [xs, ks] : shapes)
      for (Padding pad : {Padding::kSame, Padding::kValid}) {
        std::mt19937_64 rng(seed);
        Tensor x = random_tensor(xs, rng), k = random_tensor(ks, rng), b = random_tensor({ks[0]}, rng);
        const Tensor proj = random_tensor(conv2d(x, k, b, pad).shape(), rng);
        auto loss = [&] { return project(conv2d(x, k, b, pad), proj); };
        const auto g = conv2d_backward(x, k, proj, pad);
        w.add(g.input_grad, numeric_gradient(x, loss));
        w.add(g.parameter_grads.at("kernels"), numeric_gradient(k, loss));
        w.add(g.parameter_grads.at("bias"), numeric_gradient(b, loss));
      }
  return w;
}

Worst grad_batchnorm() {
  Worst w;
  for (std::uint64_t seed = 1; seed <= 5; ++seed)
    for (const Shape& shape : {Shape{5, 3}, Shape{2, 2, 3, 3}, Shape{3, 4, 2, 5}})
      for (Mode mode : {Mode::kTrain, Mode::kInfer}) {
        std::mt19937_64 rng(seed);
        const std::size_t ch = shape[1];
        Tensor x = random_tensor(shape, rng, -2.0, 2.0);
        Tensor gamma = random_tensor({ch}, rng, 0.5, 1.5), beta = random_tensor({ch}, rng);
        const RunningStats base{random_tensor({ch}, rng), random_tensor({ch}, rng, 0.5, 2.0)};
        const Tensor proj = random_tensor(shape, rng);
        auto loss = [&] {
          RunningStats s = base;
          return project(batchnorm(x, gamma, beta, s, mode).output, proj);
        };
        RunningStats s = base;
        const auto g = batchnorm_backward(batchnorm(x, gamma, beta, s, mode).cache, gamma, proj);
        w.add(g.input_grad, numeric_gradient(x, loss));
        w.add(g.parameter_grads.at("gamma"), numeric_gradient(gamma, loss));
        w.add(g.parameter_grads.at("beta"), numeric_gradient(beta, loss));
      }
  return w;
}

Worst grad_elu() {
  Worst w;
  for (std::uint64_t seed = 1; seed <= 5; ++seed)
    for (const Shape& shape : {Shape{7}, Shape{2, 3, 4}, Shape{3, 2, 5, 5}}) {
      std::mt19937_64 rng(seed);
      Tensor x = random_tensor(shape, rng, -4.0, 4.0);
      const Tensor proj = random_tensor(shape, rng);
      w.add(elu_backward(x, proj), numeric_gradient(x, [&] { return project(elu(x), proj); }));
    }
  return w;
}

Worst grad_pool() {
  Worst w;
  const std::array<std::pair<Shape, std::size_t>, 3> cases{{{{1, 1, 4, 4}, 2}, {{2, 2, 5, 6}, 2}, {{2, 3, 5, 5}, 1}}};
  for (std::uint64_t seed = 1; seed <= 5; ++seed)
    for (const auto& [shape, stride] : cases) {
      std::mt19937_64 rng(seed);
      Tensor x = random_tensor(shape, rng);
      const auto r = maxpool2d(x, stride);
      const Tensor proj = random_tensor(r.output.shape(), rng);
      w.add(maxpool2d_backward(x.shape(), r.argmax, proj),
            numeric_gradient(x, [&] { return project(maxpool2d(x, stride).output, proj); }));
    }
  return w;
}

Worst grad_dense() {
  Worst w;
  const std::array<std::pair<Shape, Shape>, 3> shapes{{{{1, 3}, {2, 3}}, {{4, 5}, {3, 5}}, {{3, 7}, {1, 7}}}};
  for (std::uint64_t seed = 1; seed <= 5; ++seed)
    for (const auto& [xs, ws] : shapes) {
      std::mt19937_64 rng(seed);
      Tensor x = random_tensor(xs, rng), wt = random_tensor(ws, rng), b = random_tensor({ws[0]}, rng);
      const Tensor proj = random_tensor({xs[0], ws[0]}, rng);
      auto loss = [&] { return project(dense(x, wt, b), proj); };
      const auto g = dense_backward(x, wt, proj);
      w.add(g.input_grad, numeric_gradient(x, loss));
      w.add(g.parameter_grads.at("weights"), numeric_gradient(wt, loss));
      w.add(g.parameter_grads.at("bias"), numeric_gradient(b, loss));
    }
  return w;
}

Worst grad_sigmoid() {
  Worst w;
  for (std::uint64_t seed = 1; seed <= 5; ++seed)
    for (const Shape& shape : {Shape{5}, Shape{3, 1}, Shape{2, 2, 3, 3}}) {
      std::mt19937_64 rng(seed);
      Tensor x = random_tensor(shape, rng, -6.0, 6.0);
      const Tensor proj = random_tensor(shape, rng);
      w.add(sigmoid_backward(sigmoid(x), proj), numeric_gradient(x, [&] { return project(sigmoid(x), proj); }));
    }
  return w;
}

Worst grad_mse() {
  Worst w;
  for (std::uint64_t seed = 1; seed <= 5; ++seed)
    for (const Shape& shape : {Shape{1}, Shape{6, 1}, Shape{3, 4}}) {
      std::mt19937_64 rng(seed);
      Tensor p = random_tensor(shape, rng, 0.0, 1.0);
      const Tensor t = random_tensor(shape, rng, 0.0, 1.0);
      w.add(mse_loss(p, t).grad, numeric_gradient(p, [&] { return mse_loss(p, t).value; }));
    }
  return w;
}

Worst grad_network() {
  NetworkConfig cfg;
  cfg.input_size = 32;
  cfg.pool_stride = 1;
  cfg.conv_channels = {2, 2, 3, 2, 2, 2};
  cfg.dense_widths = {3, 1};
  cfg.seed = 9;
  Worst w;
  for (Mode mode : {Mode::kInfer, Mode::kTrain}) {
    Network net = Network::build(cfg);
    std::mt19937_64 rng(mode == Mode::kTrain ? 1 : 2);
    for (auto& [name, rs] : net.running_stats()) {
      rs.mean = random_tensor(rs.mean.shape(), rng, -0.2, 0.2);
      rs.variance = random_tensor(rs.variance.shape(), rng, 0.5, 1.5);
    }
    const std::size_t batch = mode == Mode::kTrain ? 2 : 1;
    const Tensor x = random_tensor({batch, 1, 32, 32}, rng);
    const Tensor target = random_tensor({batch, 1}, rng, 0.0, 1.0);
    const auto saved = net.running_stats();
    auto loss = [&] {
      net.running_stats() = saved;
      return mse_loss(net.forward(x, mode), target).value;
    };
    ForwardTrace trace;
    const Tensor y = net.forward(x, mode, &trace);
    const auto grads = net.backward(trace, mse_loss(y, target).grad);
    for (auto& [name, param] : net.parameters()) w.add(grads.at(name), numeric_gradient(param, loss));
  }
  return w;
}

void criterion_gradients() {
  const auto t0 = Clock::now();
  const std::vector<std::pair<std::string, std::function<Worst()>>> layers{
      {"conv", grad_conv}, {"batchnorm", grad_batchnorm}, {"elu", grad_elu},  {"maxpool", grad_pool},
      {"dense", grad_dense}, {"sigmoid", grad_sigmoid},   {"mse", grad_mse}};
  bool ok = true;
  double worst_layer = 0.0;
  for (const auto& [name, fn] : layers) {
    const Worst w = fn();
    detail(name + ": max relative error " + fmt(w.value, 3) + " over " + std::to_string(w.checks) + " checks");
    ok = ok && w.value < 1e-4;
    worst_layer = std::max(worst_layer, w.value);
  }
  const Worst net = grad_network();
  detail("network at input 32: max relative error " + fmt(net.value, 3));
  const double secs = seconds_since(t0);
  ok = ok && net.value < 1e-3 && secs < 120.0;
  verdict("gradient correctness", ok,
          "layers " + fmt(worst_layer, 3) + " (< 1e-4), network " + fmt(net.value, 3) + " (< 1e-3), " + fmt(secs, 3) +
              " s (< 120 s)");
}

// ---- metric oracles -----------------------------------------------------------------

// Closed forms written out again here, independent of study-core.
double oracle_confusion(double t, double p, double e) {
  const double n = t + p + e;
  return 1.0 - std::abs(2.0 * p + e - n) / n;
}

void criterion_metrics() {
  std::size_t tallies = 0, bad = 0;
  for (std::size_t n = 1; n <= 30; ++n)
    for (std::size_t t = 0; t <= n; ++t)
      for (std::size_t p = 0; t + p <= n; ++p) {
        const std::size_t e = n - t - p;
        const auto tl = make_tally(t, p, e);
        const double c = *confusion(tl);
        ++tallies;
        if (!(c >= 0.0 && c <= 1.0)) ++bad;
        if (c != oracle_confusion(t, p, e)) ++bad;
        if (t + p > 0 && ((2 * p + e == n) != (*domination(tl) == 0.5))) ++bad;
        if (e == n && c != 1.0) ++bad;               // everything equivalent
        if (p == t && e == 0 && c != 1.0) ++bad;     // even split
      }
  detail("exhaustive: " + std::to_string(tallies) + " tallies with N <= 30, " + std::to_string(bad) + " violations");

  std::mt19937_64 rng(2024);
  std::size_t sessions = 0, mismatches = 0;
  for (int trial = 0; trial < 5000; ++trial) {
    const std::size_t len = rng() % 13;
    std::vector<Judgment> js;
    int t = 0, p = 0, e = 0;
    for (std::size_t i = 0; i < len; ++i) {
      const int raw = static_cast<int>(rng() % 4);
      const bool pred_left = rng() % 2;
      const RawChoice rc = std::array{RawChoice::kLeft, RawChoice::kRight, RawChoice::kEquivalent, RawChoice::kDiscard}[raw];
      js.push_back({"j" + std::to_string(i), rc, resolve(rc, pred_left)});
      if (raw == 2) ++e;
      else if (raw < 2) ((raw == 0) == pred_left ? p : t)++;
    }
    ++sessions;
    const auto tl = tally(js);
    const bool c_ok = t + p + e == 0 ? !confusion(tl).has_value() : *confusion(tl) == oracle_confusion(t, p, e);
    const bool d_ok = t + p == 0 ? !domination(tl).has_value()
                                 : *domination(tl) == static_cast<double>(p) / static_cast<double>(t + p);
    if (!c_ok || !d_ok) ++mismatches;
  }
  detail("randomized: " + std::to_string(sessions) + " sessions of <= 12 judgments, " + std::to_string(mismatches) +
         " mismatches against the recount");
  verdict("metric oracle equivalence", bad == 0 && mismatches == 0 && tallies == 5455,
          std::to_string(tallies) + " exhaustive tallies, " + std::to_string(sessions) + " recounted sessions");
}

// ---- split fidelity -------------------------------------------------------------------

std::array<double, 10> decile_shares(const std::vector<double>& scores) {
  std::array<double, 10> share{};
  for (double s : scores) share[std::min<std::size_t>(static_cast<std::size_t>(s * 10.0), 9)] += 1.0;
  for (auto& v : share) v /= static_cast<double>(scores.size());
  return share;
}

void criterion_split() {
  SynthConfig sc;
  sc.seed = 11;
  sc.target_histogram = kSkewedHistogram;
  std::vector<double> scores;
  for (const auto& p : synth_draw_params(sc, 1140)) scores.push_back(p.quality);

  const SplitIndices s = stratified_split_indices(scores, 3);
  const auto full = decile_shares(scores);
  double worst = 0.0;
  for (const auto* part : {&s.train, &s.validation, &s.test}) {
    std::vector<double> sub;
    for (auto i : *part) sub.push_back(scores[i]);
    const auto sh = decile_shares(sub);
    for (std::size_t d = 0; d < 10; ++d) worst = std::max(worst, std::abs(sh[d] - full[d]));
  }
  std::vector<std::size_t> all;
  for (const auto* part : {&s.train, &s.validation, &s.test}) all.insert(all.end(), part->begin(), part->end());
  std::sort(all.begin(), all.end());
  const bool partition = all.size() == 1140 && std::adjacent_find(all.begin(), all.end()) == all.end();
  detail("sizes " + std::to_string(s.train.size()) + "/" + std::to_string(s.validation.size()) + "/" +
         std::to_string(s.test.size()) + ", worst decile deviation " + fmt(100.0 * worst, 3) + " points");

  std::vector<LabeledImage> train;
  std::mt19937_64 rng(5);
  for (auto i : s.train) {
    LabeledImage li{Image(8, 8), scores[i], "i" + std::to_string(i), {}};
    for (double& v : li.image.pixels) v = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    train.push_back(std::move(li));
  }
  std::vector<Dihedral> applied;
  const auto aug = augment(train, 7, AugmentMode::kSingleCopy, &applied);
  bool copies_ok = aug.size() == 2 * train.size();
  for (std::size_t i = 0; copies_ok && i < train.size(); ++i)
    copies_ok = aug[i].image == train[i].image && aug[train.size() + i].image == apply(train[i].image, applied[i]) &&
                applied[i] != Dihedral::kIdentity && aug[train.size() + i].score == train[i].score;
  detail("augmentation " + std::to_string(train.size()) + " -> " + std::to_string(aug.size()));

  const bool ok = s.train.size() == 912 && s.validation.size() == 114 && s.test.size() == 114 && partition &&
                  worst <= 0.02 && copies_ok;
  verdict("split fidelity", ok,
          std::to_string(s.train.size()) + "/" + std::to_string(s.validation.size()) + "/" +
              std::to_string(s.test.size()) + ", decile drift " + fmt(100.0 * worst, 3) + " pts (<= 2), augmented " +
              std::to_string(aug.size()));
}

// ---- training -------------------------------------------------------------------------

struct TrainedModel {
  DatasetSplit split;
  NormStats norm;
  TrainingResult result;
};

NetworkConfig acceptance_network() {
  NetworkConfig nc;
  nc.input_size = 64;
  nc.conv_channels = {4, 8, 8, 16, 16, 16};
  nc.dense_widths = {32, 1};
  nc.seed = 3;
  return nc;
}

TrainingConfig acceptance_training() {
  TrainingConfig tc;
  tc.learning_rate = 0.01;
  tc.momentum = 0.9;
  tc.batch_size = 100;
  tc.patience = 10;
  tc.max_epochs = 200;
  tc.seed = 5;
  return tc;
}

TrainedModel criterion_training() {
  SynthConfig sc;
  sc.seed = 7;
  sc.target_histogram = kSkewedHistogram;
  const auto data = synth_generate(sc, 1000);
  TrainedModel m;
  m.split = stratified_split(data, 1);
  m.split.train = augment(m.split.train, 2);
  m.norm = compute_norm_stats(m.split.train);
  detail("dataset: 1000 synthetic 64x64 images; train " + std::to_string(m.split.train.size()) + " (augmented), val " +
         std::to_string(m.split.validation.size()) + ", test " + std::to_string(m.split.test.size()));

  const auto nc = acceptance_network();
  const auto tc = acceptance_training();
  std::vector<double> secs;
  std::vector<std::string> digests;
  for (int run = 0; run < 2; ++run) {
    const auto t0 = Clock::now();
    TrainingResult r = train(Network::build(nc), m.split, m.norm, tc);
    secs.push_back(seconds_since(t0));
    digests.push_back(checkpoint_digest(r.checkpoint));
    detail("run " + std::to_string(run + 1) + ": best val " + fmt(r.history.best_val_rmse()) + " at epoch " +
           std::to_string(r.history.best_epoch) + ", stopped at " + std::to_string(r.history.stopped_epoch) +
           ", test " + fmt(r.history.test_rmse) + ", " + fmt(secs.back(), 4) + " s, digest " +
           digests.back().substr(0, 16));
    if (run == 0) m.result = std::move(r);
  }

  // Constant predictor: mean training label.
  const auto train_labels = scores_of(m.split.train);
  const double mean_label = std::accumulate(train_labels.begin(), train_labels.end(), 0.0) / train_labels.size();
  double sq = 0.0;
  for (const auto& it : m.split.validation) sq += (it.score - mean_label) * (it.score - mean_label);
  const double mean_rmse = std::sqrt(sq / m.split.validation.size());
  const double val = m.result.history.best_val_rmse();
  const double gain = 1.0 - val / mean_rmse;
  detail("mean-label predictor val RMSE " + fmt(mean_rmse) + "; improvement " + fmt(100.0 * gain, 3) + "%");

  const auto& h = m.result.history;
  const bool ok = val <= 0.15 && gain >= 0.20 && h.early_stopped && h.stopped_epoch < tc.max_epochs &&
                  digests[0] == digests[1] && secs[0] < 900.0 && secs[1] < 900.0;
  verdict("training works", ok,
          "val RMSE " + fmt(val) + " (<= 0.15), " + fmt(100.0 * gain, 3) + "% better than mean (>= 20%), early stop " +
              (h.early_stopped ? "at " + std::to_string(h.stopped_epoch) : std::string("no")) + ", digests " +
              (digests[0] == digests[1] ? "identical" : "differ") + ", " + fmt(secs[0], 4) + " s per run (< 900 s)");
  return m;
}

// ---- study direction ----------------------------------------------------------------------

struct StudyOutcome {
  std::vector<LabeledImage> items;
  std::vector<double> predictions;
};

StudyOutcome criterion_study(const TrainedModel& m) {
  StudyOutcome out;
  out.items = m.split.validation;
  out.items.insert(out.items.end(), m.split.test.begin(), m.split.test.end());
  const Network& net = m.result.checkpoint.network;
  out.predictions = predict_items(net, out.items, m.norm);
  const auto train_labels = scores_of(m.split.train);

  StudySimConfig cfg;
  cfg.testers = 11;
  cfg.seed = 21;
  const auto ns = simulate_system("network", make_study_items(out.items, out.predictions), cfg);
  const auto rs =
      simulate_system("random", make_study_items(out.items, random_baseline(train_labels, 22, out.items.size())), cfg);

  // Sparsest bin of the label distribution the baseline samples from.
  std::array<std::size_t, kBins> label_counts{};
  for (double l : train_labels) ++label_counts[bin_of(l)];
  const std::size_t sparsest =
      static_cast<std::size_t>(std::min_element(label_counts.begin(), label_counts.end()) - label_counts.begin());

  int wins = 0;
  std::size_t random_lowest = kBins;
  double lowest = 2.0;
  for (std::size_t b = 0; b < kBins; ++b) {
    const auto& n = ns.report.bins[b];
    const auto& r = rs.report.bins[b];
    const bool defined = n.n_testers > 0 && r.n_testers > 0;
    if (defined && n.mean_confusion > r.mean_confusion) ++wins;
    if (r.n_testers > 0 && r.mean_confusion < lowest) {
      lowest = r.mean_confusion;
      random_lowest = b;
    }
    detail(bin_label(b) + ": network C " + (n.n_testers ? fmt(n.mean_confusion, 3) : std::string("-")) + ", random C " +
           (r.n_testers ? fmt(r.mean_confusion, 3) : std::string("-")) + ", training labels " +
           std::to_string(label_counts[b]));
  }
  const bool ok = wins >= 4 && random_lowest == sparsest;
  verdict("study direction", ok,
          "network beats random in " + std::to_string(wins) + "/5 bins (>= 4); random lowest in " +
              (random_lowest < kBins ? bin_label(random_lowest) : std::string("none")) + ", sparsest label bin " +
              bin_label(sparsest));
  return out;
}

// ---- service / offline equivalence --------------------------------------------------------

// Re-resolves every judgment in the journal from its raw click and the session's blind string.
std::map<std::string, std::vector<std::vector<Judgment>>> offline_from_journal(const fs::path& journal,
                                                                               bool& consistent) {
  struct Rec {
    std::string tester, dataset, left;
    std::size_t total = 0;
    std::vector<Judgment> js;
  };
  std::vector<Rec> sessions;
  std::map<std::string, std::size_t> index;
  std::ifstream in(journal);
  std::string line;
  consistent = true;
  while (std::getline(in, line)) {
    const json j = json::parse(line);
    if (j["type"] == "session") {
      index[j["session_id"]] = sessions.size();
      sessions.push_back({j["tester_id"], j["dataset_id"], j["left"], j["order"].size(), {}});
      continue;
    }
    Rec& s = sessions.at(index.at(j["session_id"]));
    const std::string raw = j["raw"];
    const bool pred_left = s.left.at(j["position"].get<std::size_t>()) == 'P';
    Choice c = Choice::kDiscard;
    if (raw == "equivalent") c = Choice::kEquivalent;
    else if (raw == "left") c = pred_left ? Choice::kPrediction : Choice::kTarget;
    else if (raw == "right") c = pred_left ? Choice::kTarget : Choice::kPrediction;
    if (name(c) != j["resolved"].get<std::string>()) consistent = false;
    s.js.push_back({j["item_id"], parse_raw_choice(raw), c});
  }
  // Latest completed session per tester, in that session's creation order.
  std::map<std::string, std::vector<std::vector<Judgment>>> out;
  for (std::size_t i = 0; i < sessions.size(); ++i) {
    const Rec& s = sessions[i];
    if (s.js.size() != s.total) continue;
    bool superseded = false;
    for (std::size_t k = i + 1; k < sessions.size(); ++k)
      superseded = superseded || (sessions[k].tester == s.tester && sessions[k].dataset == s.dataset &&
                                  sessions[k].js.size() == sessions[k].total);
    if (!superseded) out[s.dataset].push_back(s.js);
  }
  return out;
}

void criterion_service(const StudyOutcome& study) {
  const fs::path dir = fs::temp_directory_path() / ("stedq_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  std::vector<LabeledImage> items(study.items.begin(), study.items.begin() + std::min<std::size_t>(60, study.items.size()));
  const std::vector<double> preds(study.predictions.begin(), study.predictions.begin() + items.size());
  write_dataset(items, dir / "images_root");
  std::vector<StudyItem> sitems = make_study_items(items, preds);
  for (auto& it : sitems) it.image = fs::relative(it.image, dir / "datasets").generic_string();
  write_study_dataset(sitems, dir / "datasets" / "network.csv");

  bool ok = true;
  std::string summary;
  try {
    StudyService service(dir);
    StudyHttpServer server(service);
    const int port = server.bind("127.0.0.1", 0);
    std::thread th([&] { server.listen(); });
    httplib::Client cli("127.0.0.1", port);
    const TargetMap truth = targets_of(sitems);

    std::size_t submitted = 0, http_errors = 0;
    auto run_tester = [&](const std::string& tester, std::uint64_t seed, std::size_t stop_after) {
      auto r = cli.Post("/sessions", json{{"tester_id", tester}, {"dataset_id", "network"}, {"seed", seed}}.dump(),
                        "application/json");
      if (!r || r->status != 201) {
        ++http_errors;
        return;
      }
      const std::string sid = json::parse(r->body)["session_id"];
      SimTesterConfig cfg;
      std::mt19937_64 rng(seed * 7919 + 1);
      for (std::size_t k = 0; k < stop_after; ++k) {
        auto n = cli.Get("/sessions/" + sid + "/next");
        if (!n || n->status != 200) {
          ++http_errors;
          return;
        }
        const json view = json::parse(n->body);
        if (view["done"]) return;
        const std::string id = view["item_id"];
        // Blind tester: "target" here means the left score was preferred.
        const Choice c = simulate_choice(view["scores"][0], view["scores"][1], truth.at(id), cfg, rng);
        const RawChoice raw = unresolve(c, false);
        auto s = cli.Post("/sessions/" + sid + "/judgments", json{{"item_id", id}, {"choice", name(raw)}}.dump(),
                          "application/json");
        if (!s || s->status != 200) ++http_errors;
        else ++submitted;
        // A repeated click must be rejected without changing anything.
        auto dup = cli.Post("/sessions/" + sid + "/judgments", json{{"item_id", id}, {"choice", name(raw)}}.dump(),
                            "application/json");
        if (!dup || dup->status != 409) ++http_errors;
      }
    };
    for (int t = 0; t < 5; ++t) run_tester("tester" + std::to_string(t + 1), 100 + t, items.size());
    run_tester("tester2", 200, items.size());  // replaces tester2's first session
    run_tester("tester6", 300, items.size() / 2);  // left in progress

    auto res = cli.Get("/datasets/network/results");
    server.stop();
    th.join();

    bool consistent = false;
    const auto offline_sessions = offline_from_journal(service.journal_path(), consistent);
    const BinnedReport offline = binned_report(offline_sessions.at("network"), truth, "network");
    const BinnedReport live = service.results("network");

    bool http_equal = res && res->status == 200;
    if (http_equal) {
      const json body = json::parse(res->body);
      http_equal = body["testers"] == offline.testers;
      for (std::size_t b = 0; b < kBins && http_equal; ++b) {
        const auto& jb = body["bins"][b];
        const auto& ob = offline.bins[b];
        http_equal = jb["n_testers"] == ob.n_testers &&
                     (ob.n_testers == 0 || (jb["mean_confusion"].get<double>() == ob.mean_confusion &&
                                            jb["std_confusion"].get<double>() == ob.std_confusion)) &&
                     (ob.n_testers_domination == 0 || (jb["mean_domination"].get<double>() == ob.mean_domination &&
                                                       jb["std_domination"].get<double>() == ob.std_domination));
      }
    }
    StudyService replayed(dir);
    const bool replay_equal = replayed.results("network") == offline;

    detail(std::to_string(submitted) + " judgments submitted over HTTP, " + std::to_string(http_errors) +
           " unexpected responses; " + std::to_string(offline.testers) + " completed testers in the report");
    detail(std::string("journal re-resolution ") + (consistent ? "consistent" : "INCONSISTENT") + "; service " +
           (live == offline ? "==" : "!=") + " offline; HTTP JSON " + (http_equal ? "==" : "!=") + " offline; replay " +
           (replay_equal ? "==" : "!=") + " offline");
    ok = http_errors == 0 && consistent && live == offline && http_equal && replay_equal && offline.testers == 5;
    summary = "HTTP results, live service and journal replay identical to offline report over " +
              std::to_string(offline.testers) + " testers";
    if (!ok) summary = "mismatch (see details)";
  } catch (const std::exception& e) {
    ok = false;
    summary = std::string("exception: ") + e.what();
  }
  fs::remove_all(dir);
  verdict("service/offline equivalence", ok, summary);
}

}  // namespace

int main() {
  const auto t0 = Clock::now();
  criterion_gradients();
  criterion_metrics();
  criterion_split();
  const TrainedModel model = criterion_training();
  const StudyOutcome study = criterion_study(model);
  criterion_service(study);
  std::cout << failures << " criterion failure(s), " << fmt(seconds_since(t0), 4) << " s total\n";
  return failures == 0 ? 0 : 1;
}
