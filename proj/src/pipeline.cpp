#include "stedq/pipeline.hpp"

#include <fstream>
#include <limits>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>

#include "stedq/text.hpp"

namespace stedq {

namespace fs = std::filesystem;

std::vector<StudyItem> make_study_items(std::span<const LabeledImage> items, std::span<const double> predictions) {
  if (items.size() != predictions.size())
    throw std::invalid_argument("make_study_items: " + std::to_string(items.size()) + " items but " +
                                std::to_string(predictions.size()) + " predictions");
  std::vector<StudyItem> out;
  out.reserve(items.size());
  for (std::size_t i = 0; i < items.size(); ++i)
    out.push_back({items[i].source_id, items[i].file.string(), items[i].score, predictions[i], false});
  return out;
}

TargetMap targets_of(std::span<const StudyItem> items) {
  TargetMap m;
  for (const auto& it : items) m[it.item_id] = it.target;
  return m;
}

void StudySimConfig::validate() const {
  if (testers == 0) throw std::invalid_argument("testers must be at least 1");
  tester.validate();
}

std::vector<TesterSeeds> tester_seeds(std::uint64_t seed, std::size_t testers) {
  std::mt19937_64 rng(seed);
  std::vector<TesterSeeds> out(testers);
  for (auto& s : out) {
    s.blind = rng();
    s.noise = rng();
  }
  return out;
}

SystemStudy simulate_system(const std::string& system, std::vector<StudyItem> items, const StudySimConfig& config) {
  config.validate();
  SystemStudy st{system, std::move(items), {}, {}};
  for (const auto& seeds : tester_seeds(config.seed, config.testers)) {
    std::vector<StudyItem> blind = st.items;
    assign_blind_order(blind, seeds.blind);
    SimTesterConfig cfg = config.tester;
    cfg.seed = seeds.noise;
    st.sessions.push_back(simulate_session(blind, cfg));
  }
  st.report = binned_report(st.sessions, targets_of(st.items), system);
  return st;
}

std::size_t representative_tester(const SystemStudy& study) {
  const TargetMap targets = targets_of(study.items);
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < study.sessions.size(); ++k) {
    const BinnedReport one = binned_report({study.sessions[k]}, targets, study.system);
    double d = 0.0;
    for (std::size_t b = 0; b < kBins; ++b) {
      if (one.bins[b].n_testers == 0 || study.report.bins[b].n_testers == 0) continue;
      const double diff = one.bins[b].mean_confusion - study.report.bins[b].mean_confusion;
      d += diff * diff;
    }
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

std::string judgments_csv(std::span<const TesterJudgments> testers) {
  std::ostringstream out;
  out << kJudgmentsHeader << "\n";
  for (const auto& t : testers)
    for (const auto& j : t.judgments)
      out << t.tester_id << "," << j.item_id << "," << name(j.raw) << "," << name(j.resolved) << "\n";
  return out.str();
}

std::vector<TesterJudgments> read_judgments(const fs::path& csv) {
  std::ifstream in(csv, std::ios::binary);
  if (!in) throw DataError("cannot read judgments " + csv.string());
  std::vector<TesterJudgments> out;
  std::map<std::string, std::size_t> index;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1) {
      if (line != kJudgmentsHeader)
        throw DataError(csv.string() + " line 1: expected header '" + kJudgmentsHeader + "'");
      continue;
    }
    if (trim(line).empty()) continue;
    const std::string where = csv.string() + " line " + std::to_string(line_no);
    const auto f = split(line, ',');
    if (f.size() != 4) throw DataError(where + ": expected 4 fields");
    Judgment j;
    try {
      j = {std::string(trim(f[1])), parse_raw_choice(trim(f[2])), parse_choice(trim(f[3]))};
    } catch (const std::invalid_argument& e) {
      throw DataError(where + ": " + e.what());
    }
    if (j.raw == RawChoice::kEquivalent || j.raw == RawChoice::kDiscard) {
      if (resolve(j.raw, false) != j.resolved) throw DataError(where + ": raw and resolved choices disagree");
    } else if (j.resolved != Choice::kTarget && j.resolved != Choice::kPrediction) {
      throw DataError(where + ": raw and resolved choices disagree");
    }
    const std::string tester(trim(f[0]));
    auto [it, fresh] = index.try_emplace(tester, out.size());
    if (fresh) out.push_back({tester, {}});
    out[it->second].judgments.push_back(std::move(j));
  }
  return out;
}

}  // namespace stedq
