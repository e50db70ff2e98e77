#include "stedq/study.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>

#include "stedq/text.hpp"

namespace stedq {

const char* name(RawChoice c) {
  switch (c) {
    case RawChoice::kLeft: return "left";
    case RawChoice::kRight: return "right";
    case RawChoice::kEquivalent: return "equivalent";
    case RawChoice::kDiscard: return "discard";
  }
  return "?";
}

const char* name(Choice c) {
  switch (c) {
    case Choice::kTarget: return "target";
    case Choice::kPrediction: return "prediction";
    case Choice::kEquivalent: return "equivalent";
    case Choice::kDiscard: return "discard";
  }
  return "?";
}

RawChoice parse_raw_choice(std::string_view text) {
  for (auto c : {RawChoice::kLeft, RawChoice::kRight, RawChoice::kEquivalent, RawChoice::kDiscard})
    if (text == name(c)) return c;
  throw std::invalid_argument("unknown choice '" + std::string(text) + "' (left|right|equivalent|discard)");
}

Choice parse_choice(std::string_view text) {
  for (auto c : {Choice::kTarget, Choice::kPrediction, Choice::kEquivalent, Choice::kDiscard})
    if (text == name(c)) return c;
  throw std::invalid_argument("unknown resolved choice '" + std::string(text) + "'");
}

Choice resolve(RawChoice raw, bool prediction_left) {
  switch (raw) {
    case RawChoice::kLeft: return prediction_left ? Choice::kPrediction : Choice::kTarget;
    case RawChoice::kRight: return prediction_left ? Choice::kTarget : Choice::kPrediction;
    case RawChoice::kEquivalent: return Choice::kEquivalent;
    case RawChoice::kDiscard: return Choice::kDiscard;
  }
  return Choice::kDiscard;
}

RawChoice unresolve(Choice choice, bool prediction_left) {
  switch (choice) {
    case Choice::kPrediction: return prediction_left ? RawChoice::kLeft : RawChoice::kRight;
    case Choice::kTarget: return prediction_left ? RawChoice::kRight : RawChoice::kLeft;
    case Choice::kEquivalent: return RawChoice::kEquivalent;
    case Choice::kDiscard: return RawChoice::kDiscard;
  }
  return RawChoice::kDiscard;
}

SessionTally make_tally(std::size_t t, std::size_t p, std::size_t e, std::size_t discards) {
  return {t + p + e + discards, t + p + e, t, p, e};
}

SessionTally tally(std::span<const Judgment> judgments) {
  SessionTally out;
  std::set<std::string> seen;
  for (const auto& j : judgments) {
    if (!seen.insert(j.item_id).second) throw std::invalid_argument("duplicate judgment for item '" + j.item_id + "'");
    ++out.n;
    switch (j.resolved) {
      case Choice::kTarget: ++out.t; break;
      case Choice::kPrediction: ++out.p; break;
      case Choice::kEquivalent: ++out.e; break;
      case Choice::kDiscard: break;
    }
  }
  out.effective = out.t + out.p + out.e;
  return out;
}

std::optional<double> confusion(const SessionTally& t) {
  if (t.effective == 0) return std::nullopt;
  const double n = static_cast<double>(t.effective);
  return 1.0 - std::abs(static_cast<double>(2 * t.p + t.e) - n) / n;
}

std::optional<double> domination(const SessionTally& t) {
  if (t.t + t.p == 0) return std::nullopt;
  return static_cast<double>(t.p) / static_cast<double>(t.t + t.p);
}

std::size_t bin_of(double target) {
  if (!(target >= 0.0 && target <= 1.0)) throw std::invalid_argument("target " + format_double(target) + " outside [0,1]");
  for (std::size_t b = 0; b + 1 < kBins; ++b)
    if (target < kBinEdges[b + 1]) return b;
  return kBins - 1;
}

std::string bin_label(std::size_t bin) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f-%.2f", kBinEdges[bin], kBinEdges[bin + 1]);
  return buf;
}

namespace {

void mean_std(const std::vector<double>& v, std::size_t& n, double& mean, double& sd) {
  n = v.size();
  mean = sd = 0.0;
  if (v.empty()) return;
  for (double x : v) mean += x;
  mean /= static_cast<double>(n);
  for (double x : v) sd += (x - mean) * (x - mean);
  sd = std::sqrt(sd / static_cast<double>(n));
}

std::array<std::vector<Judgment>, kBins> by_bin(std::span<const Judgment> session, const TargetMap& targets) {
  std::array<std::vector<Judgment>, kBins> out;
  for (const auto& j : session) {
    const auto it = targets.find(j.item_id);
    if (it == targets.end()) throw std::invalid_argument("no target for item '" + j.item_id + "'");
    out[bin_of(it->second)].push_back(j);
  }
  return out;
}

std::string cell(std::size_t n, double v) { return n == 0 ? "-" : format_double(v); }

}  // namespace

BinnedReport binned_report(const std::vector<std::vector<Judgment>>& sessions, const TargetMap& targets,
                           const std::string& system) {
  if (sessions.empty()) throw std::invalid_argument("binned report needs at least one tester");
  BinnedReport r;
  r.system = system;
  r.testers = sessions.size();
  std::array<std::vector<double>, kBins> cs, ds;
  for (const auto& session : sessions) {
    tally(session);  // duplicate check across the whole session
    const auto bins = by_bin(session, targets);
    for (std::size_t b = 0; b < kBins; ++b) {
      const SessionTally t = tally(bins[b]);
      auto& tot = r.bins[b].totals;
      tot = make_tally(tot.t + t.t, tot.p + t.p, tot.e + t.e, tot.n - tot.effective + t.n - t.effective);
      if (auto c = confusion(t)) cs[b].push_back(*c);
      if (auto d = domination(t)) ds[b].push_back(*d);
    }
  }
  for (std::size_t b = 0; b < kBins; ++b) {
    auto& s = r.bins[b];
    mean_std(cs[b], s.n_testers, s.mean_confusion, s.std_confusion);
    mean_std(ds[b], s.n_testers_domination, s.mean_domination, s.std_domination);
  }
  return r;
}

std::string report_csv(std::span<const BinnedReport> reports) {
  std::ostringstream out;
  out << kReportHeader << "\n";
  for (const auto& r : reports)
    for (std::size_t b = 0; b < kBins; ++b) {
      const auto& s = r.bins[b];
      out << bin_label(b) << "," << r.system << "," << cell(s.n_testers, s.mean_confusion) << ","
          << cell(s.n_testers, s.std_confusion) << "," << cell(s.n_testers_domination, s.mean_domination) << ","
          << cell(s.n_testers_domination, s.std_domination) << "," << s.n_testers << "\n";
    }
  return out.str();
}

std::string counts_csv(std::span<const Judgment> session, const TargetMap& targets) {
  const auto bins = by_bin(session, targets);
  std::ostringstream out;
  out << kCountsHeader << "\n";
  for (std::size_t b = 0; b < kBins; ++b) {
    const auto t = tally(bins[b]);
    out << bin_label(b) << "," << t.t << "," << t.p << "," << t.e << "\n";
  }
  return out.str();
}

std::vector<double> random_baseline(std::span<const double> train_labels, std::uint64_t seed, std::size_t n) {
  if (train_labels.empty()) throw std::invalid_argument("random baseline needs at least one training label");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, train_labels.size() - 1);
  std::vector<double> out(n);
  for (auto& v : out) v = train_labels[pick(rng)];
  return out;
}

void SimTesterConfig::validate() const {
  if (!(noise_std >= 0.0)) throw std::invalid_argument("tester noise std must be non-negative");
  if (!(equivalence >= 0.0 && equivalence < discard && discard <= 1.0))
    throw std::invalid_argument("tester thresholds must satisfy 0 <= equivalence < discard <= 1");
}

Choice simulate_choice(double target, double prediction, double true_quality, const SimTesterConfig& cfg,
                       std::mt19937_64& rng) {
  double perceived = true_quality;
  if (cfg.noise_std > 0.0) perceived += std::normal_distribution<double>(0.0, cfg.noise_std)(rng);
  perceived = std::clamp(perceived, 0.0, 1.0);
  const double dt = std::abs(target - perceived), dp = std::abs(prediction - perceived);
  if (std::min(dt, dp) > cfg.discard) return Choice::kDiscard;
  if (std::abs(dt - dp) <= cfg.equivalence) return Choice::kEquivalent;
  return dt < dp ? Choice::kTarget : Choice::kPrediction;
}

Judgment simulate_tester(const StudyItem& item, double true_quality, const SimTesterConfig& cfg,
                         std::mt19937_64& rng) {
  const Choice c = simulate_choice(item.target, item.prediction, true_quality, cfg, rng);
  return {item.item_id, unresolve(c, item.prediction_left), c};
}

std::vector<Judgment> simulate_session(std::span<const StudyItem> items, const SimTesterConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  std::vector<Judgment> out;
  out.reserve(items.size());
  for (const auto& item : items) out.push_back(simulate_tester(item, item.target, cfg, rng));
  return out;
}

void assign_blind_order(std::vector<StudyItem>& items, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(0.5);
  for (auto& item : items) item.prediction_left = coin(rng);
}

}  // namespace stedq
