#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "stedq/dataset.hpp"
#include "stedq/study.hpp"

namespace stedq {

/// Study items pairing each image's label (target) with a prediction. Item ids are
/// the source ids; image paths come from the backing files.
std::vector<StudyItem> make_study_items(std::span<const LabeledImage> items, std::span<const double> predictions);
TargetMap targets_of(std::span<const StudyItem> items);

struct StudySimConfig {
  std::size_t testers = 11;
  std::uint64_t seed = 0;
  SimTesterConfig tester;  // seed ignored; each tester gets its own
  void validate() const;
};

struct TesterSeeds {
  std::uint64_t blind = 0;
  std::uint64_t noise = 0;
};

/// Per-tester seeds, shared by every system judged in one study.
std::vector<TesterSeeds> tester_seeds(std::uint64_t seed, std::size_t testers);

struct SystemStudy {
  std::string system;
  std::vector<StudyItem> items;
  std::vector<std::vector<Judgment>> sessions;  // one per tester
  BinnedReport report;
};

/// Every tester judges every item once, with a fresh blind order.
SystemStudy simulate_system(const std::string& system, std::vector<StudyItem> items, const StudySimConfig& config);

/// Tester whose per-bin confusion lies closest (squared distance over defined bins) to the mean.
std::size_t representative_tester(const SystemStudy& study);

// ---- judgment files ----------------------------------------------------------
//
// CSV `tester_id,item_id,raw,resolved`, rows grouped by tester in judging order.

inline constexpr const char* kJudgmentsHeader = "tester_id,item_id,raw,resolved";

struct TesterJudgments {
  std::string tester_id;
  std::vector<Judgment> judgments;
};

std::string judgments_csv(std::span<const TesterJudgments> testers);
std::vector<TesterJudgments> read_judgments(const std::filesystem::path& csv);

}  // namespace stedq
