#include "stedq/service.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "json.hpp"
#include "stedq/text.hpp"

namespace stedq {

namespace fs = std::filesystem;
using json = nlohmann::json;

bool valid_dataset_id(std::string_view id) {
  if (id.empty() || id == "." || id == "..") return false;
  return std::all_of(id.begin(), id.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.';
  });
}

StudyDataset read_study_dataset(const fs::path& csv, const std::string& id) {
  std::ifstream in(csv, std::ios::binary);
  if (!in) throw DataError("cannot read study dataset " + csv.string());
  StudyDataset ds{id, csv.parent_path(), {}};
  std::string line;
  std::size_t line_no = 0;
  std::map<std::string, bool> seen;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1) {
      if (line != kStudyDatasetHeader)
        throw DataError(csv.string() + " line 1: expected header '" + kStudyDatasetHeader + "'");
      continue;
    }
    if (trim(line).empty()) continue;
    const auto f = split(line, ',');
    const std::string where = csv.string() + " line " + std::to_string(line_no);
    if (f.size() != 4) throw DataError(where + ": expected 4 fields");
    StudyItem item;
    item.item_id = std::string(trim(f[0]));
    item.image = std::string(trim(f[1]));
    try {
      item.target = parse_double(f[2]);
      item.prediction = parse_double(f[3]);
    } catch (const std::invalid_argument& e) {
      throw DataError(where + ": " + e.what());
    }
    if (item.item_id.empty()) throw DataError(where + ": empty item_id");
    if (!(item.target >= 0 && item.target <= 1 && item.prediction >= 0 && item.prediction <= 1))
      throw DataError(where + ": scores must lie in [0,1]");
    if (seen[item.item_id]) throw DataError(where + ": duplicate item_id '" + item.item_id + "'");
    seen[item.item_id] = true;
    ds.items.push_back(std::move(item));
  }
  return ds;
}

void write_study_dataset(std::span<const StudyItem> items, const fs::path& csv) {
  if (csv.has_parent_path()) fs::create_directories(csv.parent_path());
  std::ostringstream out;
  out << kStudyDatasetHeader << "\n";
  for (const auto& it : items)
    out << it.item_id << "," << it.image << "," << format_fixed_min(it.target, 3) << ","
        << format_fixed_min(it.prediction, 3) << "\n";
  std::ofstream f(csv, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot write study dataset " + csv.string());
  f << out.str();
}

void plan_session(Session& s, const StudyDataset& ds) {
  std::vector<std::size_t> idx(ds.items.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(s.seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  std::bernoulli_distribution coin(0.5);
  s.order.clear();
  s.prediction_left.clear();
  for (auto i : idx) {
    s.order.push_back(ds.items[i].item_id);
    s.prediction_left.push_back(coin(rng));
  }
}

namespace {

std::string session_record(const Session& s) {
  json j;
  j["type"] = "session";
  j["session_id"] = s.session_id;
  j["tester_id"] = s.tester_id;
  j["dataset_id"] = s.dataset_id;
  j["seed"] = s.seed;
  j["order"] = s.order;
  std::string blind;
  for (bool left : s.prediction_left) blind += left ? 'P' : 'T';  // what sits on the left
  j["left"] = blind;
  return j.dump();
}

std::string judgment_record(const Session& s, std::size_t position, const Judgment& jd) {
  json j;
  j["type"] = "judgment";
  j["session_id"] = s.session_id;
  j["position"] = position;
  j["item_id"] = jd.item_id;
  j["raw"] = name(jd.raw);
  j["resolved"] = name(jd.resolved);
  return j.dump();
}

}  // namespace

StudyService::StudyService(fs::path data_dir) : data_dir_(std::move(data_dir)) {
  fs::create_directories(data_dir_);
  journal_path_ = data_dir_ / "journal.jsonl";
  replay();
  journal_fd_ = ::open(journal_path_.c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644);
  if (journal_fd_ < 0) throw DataError("cannot open journal " + journal_path_.string() + ": " + std::strerror(errno));
}

StudyService::~StudyService() {
  if (journal_fd_ >= 0) ::close(journal_fd_);
}

void StudyService::replay() {
  if (!fs::exists(journal_path_)) return;
  std::ifstream in(journal_path_, std::ios::binary);
  const std::string content{std::istreambuf_iterator<char>(in), {}};
  std::size_t complete_end = content.rfind('\n');
  complete_end = complete_end == std::string::npos ? 0 : complete_end + 1;
  if (complete_end < content.size()) fs::resize_file(journal_path_, complete_end);  // drop a torn tail

  std::size_t line_no = 0, start = 0;
  while (start < complete_end) {
    const std::size_t end = content.find('\n', start);
    const std::string line = content.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (line.empty()) continue;
    const std::string where = journal_path_.string() + " line " + std::to_string(line_no);
    json j;
    try {
      j = json::parse(line);
      if (j.at("type") == "session") {
        Session s;
        s.session_id = j.at("session_id");
        s.tester_id = j.at("tester_id");
        s.dataset_id = j.at("dataset_id");
        s.seed = j.at("seed");
        s.order = j.at("order").get<std::vector<std::string>>();
        const std::string left = j.at("left");
        if (left.size() != s.order.size()) throw DataError(where + ": blind order length mismatch");
        for (char c : left) s.prediction_left.push_back(c == 'P');
        if (session_index_.count(s.session_id)) throw DataError(where + ": duplicate session " + s.session_id);
        session_index_[s.session_id] = sessions_.size();
        sessions_.push_back(std::move(s));
      } else if (j.at("type") == "judgment") {
        const std::string sid = j.at("session_id");
        const auto it = session_index_.find(sid);
        if (it == session_index_.end()) throw DataError(where + ": judgment for unknown session " + sid);
        Session& s = sessions_[it->second];
        const std::size_t pos = j.at("position");
        Judgment jd{j.at("item_id"), parse_raw_choice(j.at("raw").get<std::string>()),
                    parse_choice(j.at("resolved").get<std::string>())};
        if (pos != s.cursor() || s.complete() || s.order[pos] != jd.item_id)
          throw DataError(where + ": judgment out of sequence for " + sid);
        if (resolve(jd.raw, s.prediction_left[pos]) != jd.resolved)
          throw DataError(where + ": resolved choice disagrees with the blind order");
        s.judgments.push_back(std::move(jd));
      } else {
        throw DataError(where + ": unknown record type");
      }
    } catch (const json::exception& e) {
      throw DataError(where + ": " + e.what());
    } catch (const std::invalid_argument& e) {
      throw DataError(where + ": " + e.what());
    }
  }
}

void StudyService::append(const std::string& line) {
  const std::string rec = line + "\n";
  std::size_t done = 0;
  while (done < rec.size()) {
    const ssize_t n = ::write(journal_fd_, rec.data() + done, rec.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw ServiceError("storage", 500, std::string("journal write failed: ") + std::strerror(errno));
    }
    done += static_cast<std::size_t>(n);
  }
  if (::fsync(journal_fd_) != 0)
    throw ServiceError("storage", 500, std::string("journal fsync failed: ") + std::strerror(errno));
}

const StudyDataset& StudyService::dataset_locked(const std::string& id) {
  if (auto it = datasets_.find(id); it != datasets_.end()) return it->second;
  if (!valid_dataset_id(id)) throw ServiceError("unknown_dataset", 404, "unknown dataset '" + id + "'");
  const fs::path csv = data_dir_ / "datasets" / (id + ".csv");
  if (!fs::exists(csv)) throw ServiceError("unknown_dataset", 404, "unknown dataset '" + id + "'");
  return datasets_.emplace(id, read_study_dataset(csv, id)).first->second;
}

const StudyDataset& StudyService::dataset(const std::string& id) {
  std::lock_guard lock(mutex_);
  return dataset_locked(id);
}

Session& StudyService::session_locked(const std::string& id) {
  const auto it = session_index_.find(id);
  if (it == session_index_.end()) throw ServiceError("unknown_session", 404, "unknown session '" + id + "'");
  return sessions_[it->second];
}

Session StudyService::create_session(const std::string& tester_id, const std::string& dataset_id,
                                     std::uint64_t seed) {
  std::lock_guard lock(mutex_);
  if (tester_id.empty()) throw ServiceError("bad_request", 400, "tester_id is required");
  const StudyDataset& ds = dataset_locked(dataset_id);
  Session s;
  char id[32];
  std::snprintf(id, sizeof id, "s%06zu", sessions_.size() + 1);
  s.session_id = id;
  s.tester_id = tester_id;
  s.dataset_id = dataset_id;
  s.seed = seed;
  plan_session(s, ds);
  append(session_record(s));
  session_index_[s.session_id] = sessions_.size();
  sessions_.push_back(s);
  return s;
}

NextItem StudyService::next_item(const std::string& session_id) {
  std::lock_guard lock(mutex_);
  const Session& s = session_locked(session_id);
  NextItem out;
  out.position = s.cursor();
  out.total = s.order.size();
  if (s.complete()) {
    out.done = true;
    return out;
  }
  const StudyDataset& ds = dataset_locked(s.dataset_id);
  const std::string& item_id = s.order[s.cursor()];
  const auto it = std::find_if(ds.items.begin(), ds.items.end(), [&](const StudyItem& i) { return i.item_id == item_id; });
  if (it == ds.items.end()) throw ServiceError("unknown_item", 500, "item '" + item_id + "' left the dataset");
  out.item_id = item_id;
  const bool pred_left = s.prediction_left[s.cursor()];
  out.left = pred_left ? it->prediction : it->target;
  out.right = pred_left ? it->target : it->prediction;
  return out;
}

Acknowledgment StudyService::submit_judgment(const std::string& session_id, const std::string& item_id,
                                             RawChoice raw) {
  std::lock_guard lock(mutex_);
  Session& s = session_locked(session_id);
  for (const auto& j : s.judgments)
    if (j.item_id == item_id) throw ServiceError("duplicate", 409, "item '" + item_id + "' was already judged");
  if (s.complete()) throw ServiceError("session_closed", 409, "session " + session_id + " is complete");
  if (s.order[s.cursor()] != item_id)
    throw ServiceError("out_of_order", 409, "item '" + item_id + "' is not the current item");
  const std::size_t pos = s.cursor();
  Judgment jd{item_id, raw, resolve(raw, s.prediction_left[pos])};
  append(judgment_record(s, pos, jd));
  s.judgments.push_back(std::move(jd));
  return {s.judgments.size(), s.order.size()};
}

std::vector<Session> StudyService::completed_sessions(const std::string& dataset_id) {
  std::lock_guard lock(mutex_);
  dataset_locked(dataset_id);
  std::map<std::string, std::size_t> latest;  // tester -> index of latest completed session
  for (std::size_t i = 0; i < sessions_.size(); ++i)
    if (sessions_[i].dataset_id == dataset_id && sessions_[i].complete()) latest[sessions_[i].tester_id] = i;
  std::vector<std::size_t> picked;
  for (const auto& [tester, i] : latest) picked.push_back(i);
  std::sort(picked.begin(), picked.end());
  std::vector<Session> out;
  for (auto i : picked) out.push_back(sessions_[i]);
  return out;
}

BinnedReport StudyService::results(const std::string& dataset_id) {
  const auto done = completed_sessions(dataset_id);
  if (done.empty()) throw ServiceError("no_sessions", 404, "dataset '" + dataset_id + "' has no completed sessions");
  TargetMap targets;
  for (const auto& item : dataset(dataset_id).items) targets[item.item_id] = item.target;
  std::vector<std::vector<Judgment>> judgments;
  for (const auto& s : done) judgments.push_back(s.judgments);
  return binned_report(judgments, targets, dataset_id);
}

Session StudyService::session(const std::string& session_id) const {
  std::lock_guard lock(mutex_);
  return const_cast<StudyService*>(this)->session_locked(session_id);
}

std::vector<Session> StudyService::sessions() const {
  std::lock_guard lock(mutex_);
  return sessions_;
}

fs::path StudyService::image_path(const std::string& item_id) {
  std::lock_guard lock(mutex_);
  const fs::path dir = data_dir_ / "datasets";
  std::vector<std::string> ids;
  if (fs::exists(dir))
    for (const auto& e : fs::directory_iterator(dir))
      if (e.path().extension() == ".csv" && valid_dataset_id(e.path().stem().string())) ids.push_back(e.path().stem());
  std::sort(ids.begin(), ids.end());
  for (const auto& id : ids) {
    const StudyDataset& ds = dataset_locked(id);
    for (const auto& item : ds.items)
      if (item.item_id == item_id) return ds.dir / item.image;
  }
  throw ServiceError("unknown_item", 404, "unknown item '" + item_id + "'");
}

}  // namespace stedq
