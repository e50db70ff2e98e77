#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace stedq {

/// What the tester clicked, by screen position.
enum class RawChoice { kLeft, kRight, kEquivalent, kDiscard };
/// What the click means once the blind order is known.
enum class Choice { kTarget, kPrediction, kEquivalent, kDiscard };

const char* name(RawChoice c);
const char* name(Choice c);
RawChoice parse_raw_choice(std::string_view text);
Choice parse_choice(std::string_view text);

struct StudyItem {
  std::string item_id;
  std::string image;  // path of the backing image, relative to the dataset file
  double target = 0.0;
  double prediction = 0.0;
  bool prediction_left = false;  // blind order
};

struct Judgment {
  std::string item_id;
  RawChoice raw = RawChoice::kDiscard;
  Choice resolved = Choice::kDiscard;
};

Choice resolve(RawChoice raw, bool prediction_left);
/// The click that resolves to `choice` under the given blind order.
RawChoice unresolve(Choice choice, bool prediction_left);

struct SessionTally {
  std::size_t n = 0;          // all judged items
  std::size_t effective = 0;  // n minus discards
  std::size_t t = 0, p = 0, e = 0;
  friend bool operator==(const SessionTally&, const SessionTally&) = default;
};

SessionTally make_tally(std::size_t t, std::size_t p, std::size_t e, std::size_t discards = 0);
/// Counts resolved choices; rejects a repeated item_id.
SessionTally tally(std::span<const Judgment> judgments);

/// 1 - |(2P + E) - N~| / N~; empty when N~ = 0.
std::optional<double> confusion(const SessionTally& t);
/// P / (T + P); empty when T + P = 0.
std::optional<double> domination(const SessionTally& t);

// ---- binned reports ----------------------------------------------------------

inline constexpr std::size_t kBins = 5;
inline constexpr std::array<double, kBins + 1> kBinEdges{0.0, 0.2, 0.4, 0.6, 0.8, 1.0};

/// Left-closed, right-open; the last bin also takes 1.0.
std::size_t bin_of(double target);
std::string bin_label(std::size_t bin);

struct BinStats {
  std::size_t n_testers = 0;  // testers with a defined confusion in this bin
  double mean_confusion = 0.0, std_confusion = 0.0;
  std::size_t n_testers_domination = 0;  // testers with a defined domination
  double mean_domination = 0.0, std_domination = 0.0;
  SessionTally totals;  // summed over testers
  friend bool operator==(const BinStats&, const BinStats&) = default;
};

struct BinnedReport {
  std::string system;
  std::size_t testers = 0;
  std::array<BinStats, kBins> bins{};
  friend bool operator==(const BinnedReport&, const BinnedReport&) = default;
};

using TargetMap = std::map<std::string, double>;

/// Per tester and bin: C and D; then mean and population std across testers, skipping
/// testers for whom the value is undefined in that bin.
BinnedReport binned_report(const std::vector<std::vector<Judgment>>& sessions, const TargetMap& targets,
                           const std::string& system);

inline constexpr const char* kReportHeader =
    "bin,system,mean_confusion,std_confusion,mean_domination,std_domination,n_testers";
inline constexpr const char* kCountsHeader = "bin,T,P,E";

/// Rows for each report in order under one header; undefined cells are "-".
std::string report_csv(std::span<const BinnedReport> reports);
/// Per-bin T/P/E counts of one session.
std::string counts_csv(std::span<const Judgment> session, const TargetMap& targets);

// ---- baselines and simulated testers -----------------------------------------

/// n uniform draws with replacement from `train_labels`.
std::vector<double> random_baseline(std::span<const double> train_labels, std::uint64_t seed, std::size_t n);

struct SimTesterConfig {
  double noise_std = 0.05;
  double equivalence = 0.05;
  double discard = 0.35;
  std::uint64_t seed = 0;
  void validate() const;
};

/// The tester perceives clamp(true_quality + N(0, noise_std)) and answers by distance.
Choice simulate_choice(double target, double prediction, double true_quality, const SimTesterConfig& cfg,
                       std::mt19937_64& rng);
Judgment simulate_tester(const StudyItem& item, double true_quality, const SimTesterConfig& cfg,
                         std::mt19937_64& rng);
/// One tester judging every item in order, with the item's target as the true quality.
std::vector<Judgment> simulate_session(std::span<const StudyItem> items, const SimTesterConfig& cfg);

/// Draws each item's blind order from `seed`.
void assign_blind_order(std::vector<StudyItem>& items, std::uint64_t seed);

}  // namespace stedq
