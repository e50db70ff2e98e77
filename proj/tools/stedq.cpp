// stedq: command-line entry point.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "stedq/checkpoint.hpp"
#include "stedq/dataset.hpp"
#include "stedq/pipeline.hpp"
#include "stedq/service.hpp"
#include "stedq/study.hpp"
#include "stedq/synth.hpp"
#include "stedq/text.hpp"
#include "stedq/trainer.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace stedq;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using FlagKeys = std::vector<std::pair<std::string, std::string>>;  // config key -> flag

// Runs a config validation; failures become usage errors naming the flag.
template <typename F>
void check_flags(const std::string& flags, F&& validate, const FlagKeys& keys = {}) {
  try {
    validate();
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    for (const auto& [key, flag] : keys)
      if (msg.find(key) != std::string::npos) throw UsageError(flag + ": " + msg);
    throw UsageError(flags + ": " + msg);
  }
}

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// Manifest + every referenced image, so a dataset digest changes when any image does.
std::string dataset_digest(const fs::path& manifest) {
  std::string acc = file_digest_hex(manifest.string());
  const fs::path base = fs::absolute(manifest).parent_path();
  for (const auto& row : read_manifest(manifest)) acc += file_digest_hex((base / row.path).string());
  return to_hex(sha256(acc));
}

class RunManifest {
 public:
  RunManifest(std::string command, const std::vector<std::string>& argv) : t0_(Clock::now()) {
    j_["command"] = std::move(command);
    j_["argv"] = argv;
    j_["config"] = json::object();
    j_["seeds"] = json::object();
    j_["inputs"] = json::object();
    j_["outputs"] = json::array();
    j_["timings"] = json::object();
  }
  json& config() { return j_["config"]; }
  void seed(const std::string& key, std::uint64_t v) { j_["seeds"][key] = v; }
  void input_file(const fs::path& p) { j_["inputs"][p.string()] = file_digest_hex(p.string()); }
  void input_dataset(const fs::path& manifest) { j_["inputs"][manifest.string()] = dataset_digest(manifest); }
  void output(const fs::path& p) { j_["outputs"].push_back(p.string()); }
  void timing(const std::string& phase, double s) { j_["timings"][phase] = s; }

  void write(const fs::path& path) {
    j_["timings"]["total_s"] = seconds_since(t0_);
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot write run manifest " + path.string());
    f << j_.dump(2) << "\n";
  }

 private:
  json j_;
  Clock::time_point t0_;
};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot write " + path.string());
  f << text;
}

std::string read_text(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot read " + path.string());
  return {std::istreambuf_iterator<char>(f), {}};
}

fs::path sidecar(const fs::path& file) { return fs::path(file.string() + ".run.json"); }

std::vector<double> parse_histogram(const std::string& text) {
  if (text == "skewed") return kSkewedHistogram;
  if (text == "natural") return {};
  std::vector<double> h;
  for (const auto& f : split(text, ',')) h.push_back(parse_double(f));
  return h;
}

// ---- split directories ---------------------------------------------------------
//
// `split` writes train.csv, validation.csv and test.csv plus images/ for augmented copies.

fs::path split_manifest(const fs::path& dir, const std::string& part) { return dir / (part + ".csv"); }

std::vector<LabeledImage> load_part(const fs::path& dir, const std::string& part,
                                    std::optional<std::size_t> size = std::nullopt) {
  return load_dataset(split_manifest(dir, part), size);
}

std::vector<std::string> parts_of(const std::string& which) {
  if (which == "heldout") return {"validation", "test"};
  return {which};
}

std::vector<LabeledImage> load_parts(const fs::path& dir, const std::string& which, std::size_t size,
                                     RunManifest& run) {
  std::vector<LabeledImage> out;
  for (const auto& p : parts_of(which)) {
    run.input_dataset(split_manifest(dir, p));
    auto items = load_part(dir, p, size);
    out.insert(out.end(), std::make_move_iterator(items.begin()), std::make_move_iterator(items.end()));
  }
  return out;
}

NormStats norm_of(const Checkpoint& c) { return {c.metadata.norm_mean, c.metadata.norm_std}; }

// Study datasets store image paths relative to their CSV.
std::vector<StudyItem> relative_to(std::vector<StudyItem> items, const fs::path& csv) {
  const fs::path base = fs::absolute(csv).parent_path();
  for (auto& it : items) it.image = fs::relative(fs::absolute(it.image), base).generic_string();
  return items;
}

void print_report(const std::vector<BinnedReport>& reports) { std::cout << report_csv(reports); }

// ---- commands ------------------------------------------------------------------

struct SynthArgs {
  std::size_t n = 1000;
  std::uint64_t seed = 0;
  std::size_t size = 64;
  std::string histogram = "skewed";
  std::string config;
  fs::path out;
};

void cmd_synth(const SynthArgs& a, RunManifest& run) {
  SynthConfig c;
  if (!a.config.empty()) {
    run.input_file(a.config);
    check_flags("--config", [&] { c = SynthConfig::from_text(read_text(a.config)); });
  } else {
    c.image_size = a.size;
    c.seed = a.seed;
    check_flags("--histogram", [&] { c.target_histogram = parse_histogram(a.histogram); });
  }
  check_flags("--size/--histogram/--config", [&] { c.validate(); });
  if (a.n == 0) throw UsageError("--n: must be at least 1");
  run.config() = {{"n", a.n}, {"synth", c.to_text()}};
  run.seed("synth", c.seed);

  auto t0 = Clock::now();
  auto items = synth_generate(c, a.n);
  run.timing("generate_s", seconds_since(t0));
  t0 = Clock::now();
  write_dataset(items, a.out);
  write_text(a.out / "synth.cfg", c.to_text());
  run.timing("write_s", seconds_since(t0));
  run.output(a.out / "manifest.csv");
  run.output(a.out / "images");
  run.output(a.out / "synth.cfg");
  run.write(a.out / "run_manifest.json");
  std::cerr << "wrote " << items.size() << " images to " << a.out.string() << "\n";
}

struct SplitArgs {
  fs::path manifest;
  std::uint64_t seed = 0;
  std::uint64_t augment_seed = 0;
  std::string augment = "single";
  double val = 0.1, test = 0.1;
  fs::path out;
};

void cmd_split(const SplitArgs& a, RunManifest& run) {
  run.input_dataset(a.manifest);
  const auto data = load_dataset(a.manifest);
  SplitFractions fr{1.0 - a.val - a.test, a.val, a.test};
  if (!(fr.train > 0.0)) throw UsageError("--val/--test: fractions leave no training data");
  DatasetSplit s = stratified_split(data, a.seed, fr);
  run.config() = {{"fractions", {fr.train, fr.validation, fr.test}}, {"augment", a.augment}};
  run.seed("split", a.seed);

  std::size_t originals = s.train.size();
  if (a.augment != "none") {
    run.seed("augment", a.augment_seed);
    s.train = augment(s.train, a.augment_seed, a.augment == "dihedral" ? AugmentMode::kFullDihedral
                                                                        : AugmentMode::kSingleCopy);
    fs::create_directories(a.out / "images");
    for (std::size_t i = originals; i < s.train.size(); ++i) {
      auto& item = s.train[i];
      item.file = fs::absolute(a.out / "images" / (item.source_id + ".pgm"));
      write_pgm16(item.image, item.file);
    }
  }
  write_manifest(s.train, split_manifest(a.out, "train"));
  write_manifest(s.validation, split_manifest(a.out, "validation"));
  write_manifest(s.test, split_manifest(a.out, "test"));
  for (const char* p : {"train", "validation", "test"}) run.output(split_manifest(a.out, p));
  if (a.augment != "none") run.output(a.out / "images");
  run.write(a.out / "run_manifest.json");
  std::cerr << "train " << s.train.size() << " (" << originals << " before augmentation), validation "
            << s.validation.size() << ", test " << s.test.size() << "\n";
}

struct TrainArgs {
  fs::path data;
  fs::path out;
  TrainingConfig train;
  std::string channels, dense;
  std::size_t batchnorm_from = 2;
  std::uint64_t net_seed = 0;
  bool quiet = false;
};

void cmd_train(TrainArgs a, RunManifest& run) {
  check_flags("--lr/--momentum/--batch-size/--patience/--max-epochs", [&] { a.train.validate(); },
              {{"learning_rate", "--lr"},
               {"momentum", "--momentum"},
               {"batch_size", "--batch-size"},
               {"patience", "--patience"},
               {"max_epochs", "--max-epochs"}});
  for (const char* p : {"train", "validation", "test"}) run.input_dataset(split_manifest(a.data, p));
  DatasetSplit split;
  split.train = load_part(a.data, "train");
  if (split.train.empty()) throw DataError(split_manifest(a.data, "train").string() + ": no training images");
  const std::size_t size = split.train.front().image.width;
  split.train = load_part(a.data, "train", size);
  split.validation = load_part(a.data, "validation", size);
  split.test = load_part(a.data, "test", size);

  NetworkConfig nc;
  nc.input_size = size;
  nc.seed = a.net_seed;
  nc.batchnorm_from_layer = a.batchnorm_from;
  check_flags("--channels", [&] {
    if (!a.channels.empty()) nc.conv_channels = parse_size_list(a.channels);
  });
  check_flags("--dense", [&] {
    if (!a.dense.empty()) nc.dense_widths = parse_size_list(a.dense);
  });
  check_flags("--channels/--dense/--batchnorm-from", [&] { nc.validate(); });
  run.config() = {{"training", a.train.to_text()}, {"network", nc.to_text()}};
  run.seed("training", a.train.seed);
  run.seed("network", nc.seed);

  const NormStats norm = compute_norm_stats(split.train);
  const auto t0 = Clock::now();
  const EpochCallback progress = [&](const EpochRecord& r) {
    if (!a.quiet)
      std::cerr << "epoch " << r.epoch << " train_rmse " << format_double(r.train_rmse) << " val_rmse "
                << format_double(r.val_rmse) << "\n";
  };
  const TrainingResult res = train(Network::build(nc), split, norm, a.train, progress);
  run.timing("train_s", seconds_since(t0));

  fs::create_directories(a.out);
  const std::string digest = save_checkpoint(res.checkpoint, a.out / "model.ckpt");
  write_text(a.out / "history.csv", res.history.to_csv());
  const json summary{{"best_epoch", res.history.best_epoch},
                     {"stopped_epoch", res.history.stopped_epoch},
                     {"early_stopped", res.history.early_stopped},
                     {"best_val_rmse", res.history.best_val_rmse()},
                     {"test_rmse", res.history.test_rmse},
                     {"checkpoint_digest", digest}};
  write_text(a.out / "summary.json", summary.dump(2) + "\n");
  for (const char* f : {"model.ckpt", "history.csv", "summary.json"}) run.output(a.out / f);
  run.write(a.out / "run_manifest.json");
  std::cout << summary.dump() << "\n";
}

struct EvalArgs {
  fs::path model, data, manifest;
  std::string split = "test";
};

void cmd_eval(const EvalArgs& a) {
  const Checkpoint c = load_checkpoint(a.model);
  const std::size_t size = c.network.config().input_size;
  std::vector<LabeledImage> items;
  std::string label;
  if (!a.manifest.empty()) {
    items = load_dataset(a.manifest, size);
    label = a.manifest.string();
  } else {
    if (a.data.empty()) throw UsageError("--data or --manifest is required");
    items = load_part(a.data, a.split, size);
    label = a.split;
  }
  const double r = evaluate(c.network, items, norm_of(c));
  std::cout << json{{"split", label}, {"n", items.size()}, {"rmse", r}}.dump() << "\n";
}

struct PredictArgs {
  fs::path model, manifest, out;
};

void cmd_predict(const PredictArgs& a, RunManifest& run) {
  run.input_file(a.model);
  run.input_dataset(a.manifest);
  const Checkpoint c = load_checkpoint(a.model);
  const auto items = load_dataset(a.manifest, c.network.config().input_size);
  const auto t0 = Clock::now();
  const auto preds = predict_items(c.network, items, norm_of(c));
  run.timing("predict_s", seconds_since(t0));
  write_study_dataset(relative_to(make_study_items(items, preds), a.out), a.out);
  run.output(a.out);
  run.write(sidecar(a.out));
}

struct BaselineArgs {
  fs::path train_manifest, manifest, out;
  std::uint64_t seed = 0;
};

void cmd_baseline(const BaselineArgs& a, RunManifest& run) {
  run.input_dataset(a.train_manifest);
  run.input_dataset(a.manifest);
  run.seed("baseline", a.seed);
  const auto labels = scores_of(load_dataset(a.train_manifest));
  const auto items = load_dataset(a.manifest);
  const auto preds = random_baseline(labels, a.seed, items.size());
  write_study_dataset(relative_to(make_study_items(items, preds), a.out), a.out);
  run.output(a.out);
  run.write(sidecar(a.out));
}

struct StudyArgs {
  fs::path model, data, out;
  std::string split = "test";
  StudySimConfig sim;
  std::uint64_t baseline_seed = 0;
};

void write_study(const SystemStudy& st, const fs::path& out, RunManifest& run) {
  const fs::path ds = out / "datasets" / (st.system + ".csv");
  write_study_dataset(relative_to(st.items, ds), ds);
  std::vector<TesterJudgments> tj;
  for (std::size_t k = 0; k < st.sessions.size(); ++k) tj.push_back({"tester" + std::to_string(k + 1), st.sessions[k]});
  write_text(out / ("judgments_" + st.system + ".csv"), judgments_csv(tj));
  write_text(out / ("counts_" + st.system + ".csv"),
             counts_csv(st.sessions[representative_tester(st)], targets_of(st.items)));
  run.output(ds);
  run.output(out / ("judgments_" + st.system + ".csv"));
  run.output(out / ("counts_" + st.system + ".csv"));
}

void cmd_simulate_study(StudyArgs a, RunManifest& run) {
  check_flags("--testers/--noise-std/--equivalence/--discard", [&] { a.sim.validate(); },
              {{"testers", "--testers"}, {"noise", "--noise-std"}, {"thresholds", "--equivalence/--discard"}});
  run.input_file(a.model);
  run.input_dataset(split_manifest(a.data, "train"));
  const Checkpoint c = load_checkpoint(a.model);
  const auto items = load_parts(a.data, a.split, c.network.config().input_size, run);
  const auto labels = scores_of(load_part(a.data, "train"));
  run.config() = {{"split", a.split},
                  {"testers", a.sim.testers},
                  {"noise_std", a.sim.tester.noise_std},
                  {"equivalence", a.sim.tester.equivalence},
                  {"discard", a.sim.tester.discard}};
  run.seed("testers", a.sim.seed);
  run.seed("baseline", a.baseline_seed);

  const auto t0 = Clock::now();
  const auto net = simulate_system("network", make_study_items(items, predict_items(c.network, items, norm_of(c))), a.sim);
  const auto rnd =
      simulate_system("random", make_study_items(items, random_baseline(labels, a.baseline_seed, items.size())), a.sim);
  run.timing("simulate_s", seconds_since(t0));

  write_study(net, a.out, run);
  write_study(rnd, a.out, run);
  const std::vector<BinnedReport> reports{net.report, rnd.report};
  write_text(a.out / "report.csv", report_csv(reports));
  run.output(a.out / "report.csv");
  run.write(a.out / "run_manifest.json");
  print_report(reports);
}

struct ReportArgs {
  fs::path study_dir;
  std::vector<std::string> systems{"network", "random"};
  bool from_journal = false;
  fs::path out, counts_dir;
};

void cmd_report(const ReportArgs& a, RunManifest& run) {
  std::vector<BinnedReport> reports;
  std::optional<StudyService> service;
  if (a.from_journal) {
    service.emplace(a.study_dir);
    run.input_file(service->journal_path());
  }
  for (const auto& sys : a.systems) {
    if (!valid_dataset_id(sys)) throw UsageError("--system: invalid name '" + sys + "'");
    const fs::path ds = a.study_dir / "datasets" / (sys + ".csv");
    run.input_file(ds);
    SystemStudy st{sys, read_study_dataset(ds, sys).items, {}, {}};
    if (a.from_journal) {
      for (const auto& s : service->completed_sessions(sys)) st.sessions.push_back(s.judgments);
      if (st.sessions.empty()) throw DataError("no completed sessions for '" + sys + "' in the journal");
    } else {
      const fs::path jf = a.study_dir / ("judgments_" + sys + ".csv");
      run.input_file(jf);
      for (auto& t : read_judgments(jf)) st.sessions.push_back(std::move(t.judgments));
      if (st.sessions.empty()) throw DataError(jf.string() + ": no judgments");
    }
    try {
      st.report = binned_report(st.sessions, targets_of(st.items), sys);
      if (!a.counts_dir.empty()) {
        const fs::path cf = a.counts_dir / ("counts_" + sys + ".csv");
        write_text(cf, counts_csv(st.sessions[representative_tester(st)], targets_of(st.items)));
        run.output(cf);
      }
    } catch (const std::invalid_argument& e) {
      throw DataError(sys + ": " + e.what());
    }
    reports.push_back(st.report);
  }
  if (a.out.empty()) {
    print_report(reports);
    return;
  }
  write_text(a.out, report_csv(reports));
  run.output(a.out);
  run.write(sidecar(a.out));
}

struct ServeArgs {
  fs::path data_dir;
  std::string host = "127.0.0.1";
  int port = 8080;
  fs::path static_dir;
};

void cmd_serve(const ServeArgs& a) {
  StudyService service(a.data_dir);
  StudyHttpServer server(service, a.static_dir.empty() ? std::nullopt : std::optional<fs::path>(a.static_dir));
  const int port = server.bind(a.host, a.port);
  if (port < 0) throw UsageError("--port: cannot bind " + a.host + ":" + std::to_string(a.port));
  std::cerr << "serving " << a.data_dir.string() << " on http://" << a.host << ":" << port << "\n";
  if (!server.listen()) throw DataError("server stopped unexpectedly");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"STED image quality: data, training, evaluation and study tools"};
  app.require_subcommand(1);
  const std::vector<std::string> args(argv, argv + argc);

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "Generate a labeled synthetic dataset");
  c_synth->add_option("--n", synth.n, "Number of images")->capture_default_str();
  c_synth->add_option("--seed", synth.seed, "Random seed")->capture_default_str();
  c_synth->add_option("--size", synth.size, "Image side in pixels")->capture_default_str();
  c_synth->add_option("--histogram", synth.histogram, "skewed, natural, or five comma-separated weights")
      ->capture_default_str();
  c_synth->add_option("--config", synth.config, "SynthConfig key=value file (overrides --seed/--size/--histogram)")
      ->check(CLI::ExistingFile);
  c_synth->add_option("--out", synth.out, "Output directory")->required();

  SplitArgs sp;
  auto* c_split = app.add_subcommand("split", "Stratified train/validation/test split with augmentation");
  c_split->add_option("--manifest", sp.manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
  c_split->add_option("--seed", sp.seed, "Split seed")->capture_default_str();
  c_split->add_option("--augment-seed", sp.augment_seed, "Augmentation seed")->capture_default_str();
  c_split->add_option("--augment", sp.augment, "single, dihedral or none")
      ->check(CLI::IsMember({"single", "dihedral", "none"}))
      ->capture_default_str();
  c_split->add_option("--val", sp.val, "Validation fraction")->check(CLI::Range(0.0, 1.0))->capture_default_str();
  c_split->add_option("--test", sp.test, "Test fraction")->check(CLI::Range(0.0, 1.0))->capture_default_str();
  c_split->add_option("--out", sp.out, "Output directory")->required();

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "Train the quality network on a split directory");
  c_train->add_option("--data", tr.data, "Split directory")->required()->check(CLI::ExistingDirectory);
  c_train->add_option("--out", tr.out, "Output directory")->required();
  c_train->add_option("--lr", tr.train.learning_rate, "Learning rate")->capture_default_str();
  c_train->add_option("--momentum", tr.train.momentum, "Momentum")->capture_default_str();
  c_train->add_option("--batch-size", tr.train.batch_size, "Mini-batch size")->capture_default_str();
  c_train->add_option("--patience", tr.train.patience, "Early-stopping patience")->capture_default_str();
  c_train->add_option("--max-epochs", tr.train.max_epochs, "Epoch limit")->capture_default_str();
  c_train->add_option("--seed", tr.train.seed, "Shuffling seed")->capture_default_str();
  c_train->add_option("--net-seed", tr.net_seed, "Weight initialization seed")->capture_default_str();
  c_train->add_option("--channels", tr.channels, "Six conv widths, e.g. 16,32,64,64,128,128");
  c_train->add_option("--dense", tr.dense, "Dense widths, e.g. 128,1");
  c_train->add_option("--batchnorm-from", tr.batchnorm_from, "First layer with batch norm")->capture_default_str();
  c_train->add_flag("--quiet", tr.quiet, "No per-epoch progress");

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("eval", "RMSE of a checkpoint on a split or manifest");
  c_eval->add_option("--model", ev.model, "Checkpoint")->required()->check(CLI::ExistingFile);
  c_eval->add_option("--data", ev.data, "Split directory")->check(CLI::ExistingDirectory);
  c_eval->add_option("--split", ev.split, "train, validation or test")
      ->check(CLI::IsMember({"train", "validation", "test"}))
      ->capture_default_str();
  c_eval->add_option("--manifest", ev.manifest, "Any manifest (instead of --data/--split)")
      ->check(CLI::ExistingFile);

  PredictArgs pr;
  auto* c_predict = app.add_subcommand("predict", "Score images into a study dataset CSV");
  c_predict->add_option("--model", pr.model, "Checkpoint")->required()->check(CLI::ExistingFile);
  c_predict->add_option("--manifest", pr.manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
  c_predict->add_option("--out", pr.out, "Output CSV (item_id,path,target,prediction)")->required();

  BaselineArgs bl;
  auto* c_baseline = app.add_subcommand("baseline", "Random-baseline predictions drawn from training labels");
  c_baseline->add_option("--train-manifest", bl.train_manifest, "Training manifest")
      ->required()
      ->check(CLI::ExistingFile);
  c_baseline->add_option("--manifest", bl.manifest, "Images to score")->required()->check(CLI::ExistingFile);
  c_baseline->add_option("--seed", bl.seed, "Random seed")->capture_default_str();
  c_baseline->add_option("--out", bl.out, "Output CSV")->required();

  StudyArgs st;
  auto* c_study = app.add_subcommand("simulate-study", "Network vs random baseline judged by simulated testers");
  c_study->add_option("--model", st.model, "Checkpoint")->required()->check(CLI::ExistingFile);
  c_study->add_option("--data", st.data, "Split directory")->required()->check(CLI::ExistingDirectory);
  c_study->add_option("--split", st.split, "test, validation or heldout (both)")
      ->check(CLI::IsMember({"test", "validation", "heldout"}))
      ->capture_default_str();
  c_study->add_option("--testers", st.sim.testers, "Number of simulated testers")->capture_default_str();
  c_study->add_option("--seed", st.sim.seed, "Tester seed")->capture_default_str();
  c_study->add_option("--baseline-seed", st.baseline_seed, "Random baseline seed")->capture_default_str();
  c_study->add_option("--noise-std", st.sim.tester.noise_std, "Tester perception noise")->capture_default_str();
  c_study->add_option("--equivalence", st.sim.tester.equivalence, "Equivalence threshold")->capture_default_str();
  c_study->add_option("--discard", st.sim.tester.discard, "Discard threshold")->capture_default_str();
  c_study->add_option("--out", st.out, "Output directory")->required();

  ReportArgs rp;
  auto* c_report = app.add_subcommand("report", "Binned confusion/domination report from stored judgments");
  c_report->add_option("--study-dir", rp.study_dir, "Directory with datasets/ and judgments_<system>.csv")
      ->required()
      ->check(CLI::ExistingDirectory);
  c_report->add_option("--system", rp.systems, "Systems to report, in order")->capture_default_str();
  c_report->add_flag("--from-journal", rp.from_journal, "Use the service journal instead of judgment CSVs");
  c_report->add_option("--out", rp.out, "Output CSV (stdout when omitted)");
  c_report->add_option("--counts-dir", rp.counts_dir, "Also write per-bin counts of the representative tester");

  ServeArgs sv;
  auto* c_serve = app.add_subcommand("serve", "Run the study HTTP service");
  c_serve->add_option("--data-dir", sv.data_dir, "Service data directory (datasets/, journal)")->required();
  c_serve->add_option("--host", sv.host, "Bind address")->capture_default_str();
  c_serve->add_option("--port", sv.port, "Port (0 picks a free one)")->check(CLI::Range(0, 65535))->capture_default_str();
  c_serve->add_option("--static", sv.static_dir, "Directory of UI files to serve at /")->check(CLI::ExistingDirectory);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  const std::string cmd = app.get_subcommands().front()->get_name();
  try {
    RunManifest run(cmd, args);
    if (cmd == "synth") cmd_synth(synth, run);
    else if (cmd == "split") cmd_split(sp, run);
    else if (cmd == "train") cmd_train(tr, run);
    else if (cmd == "eval") cmd_eval(ev);
    else if (cmd == "predict") cmd_predict(pr, run);
    else if (cmd == "baseline") cmd_baseline(bl, run);
    else if (cmd == "simulate-study") cmd_simulate_study(st, run);
    else if (cmd == "report") cmd_report(rp, run);
    else if (cmd == "serve") cmd_serve(sv);
    return 0;
  } catch (const UsageError& e) {
    std::cerr << "stedq " << cmd << ": usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const TrainingDiverged& e) {
    std::cerr << "stedq " << cmd << ": numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const NumericError& e) {
    std::cerr << "stedq " << cmd << ": numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const ServiceError& e) {
    std::cerr << "stedq " << cmd << ": data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    // Bad files, shape mismatches, checkpoint and filesystem errors.
    std::cerr << "stedq " << cmd << ": data error: " << e.what() << "\n";
    return kExitData;
  }
}
