#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "stedq/image.hpp"
#include "stedq/study.hpp"

namespace stedq {

// ---- study datasets ----------------------------------------------------------
//
// `<data_dir>/datasets/<id>.csv` with header `item_id,path,target,prediction`; image
// paths are relative to the CSV. The dataset id doubles as the system name in reports.

struct StudyDataset {
  std::string id;
  std::filesystem::path dir;  // base for image paths
  std::vector<StudyItem> items;
};

inline constexpr const char* kStudyDatasetHeader = "item_id,path,target,prediction";

StudyDataset read_study_dataset(const std::filesystem::path& csv, const std::string& id);
void write_study_dataset(std::span<const StudyItem> items, const std::filesystem::path& csv);
/// Dataset ids are restricted to [A-Za-z0-9_.-] so they can name files safely.
bool valid_dataset_id(std::string_view id);

// ---- sessions and the journal ----------------------------------------------

class ServiceError : public std::runtime_error {
 public:
  ServiceError(std::string code, int http_status, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)), status_(http_status) {}
  const std::string& code() const { return code_; }
  int http_status() const { return status_; }

 private:
  std::string code_;
  int status_;
};

struct Session {
  std::string session_id;
  std::string tester_id;
  std::string dataset_id;
  std::uint64_t seed = 0;
  std::vector<std::string> order;     // item ids in presentation order
  std::vector<bool> prediction_left;  // blind order per position
  std::vector<Judgment> judgments;    // one per judged position, in order

  std::size_t cursor() const { return judgments.size(); }
  bool complete() const { return judgments.size() == order.size(); }
};

struct NextItem {
  bool done = false;
  std::string item_id;
  double left = 0.0, right = 0.0;  // the two scores in display order
  std::size_t position = 0;         // judged so far
  std::size_t total = 0;
};

struct Acknowledgment {
  std::size_t judged = 0;
  std::size_t total = 0;
};

/// Session store backed by an append-only journal (`<data_dir>/journal.jsonl`). Each
/// record is one canonical JSON line, flushed with fsync before the call returns. The
/// constructor replays the journal; a torn final line is ignored.
class StudyService {
 public:
  explicit StudyService(std::filesystem::path data_dir);
  ~StudyService();
  StudyService(const StudyService&) = delete;
  StudyService& operator=(const StudyService&) = delete;

  Session create_session(const std::string& tester_id, const std::string& dataset_id, std::uint64_t seed);
  NextItem next_item(const std::string& session_id);
  Acknowledgment submit_judgment(const std::string& session_id, const std::string& item_id, RawChoice raw);
  /// Latest completed session per tester, testers ordered by that session's creation.
  BinnedReport results(const std::string& dataset_id);
  std::vector<Session> completed_sessions(const std::string& dataset_id);

  Session session(const std::string& session_id) const;
  std::vector<Session> sessions() const;
  /// Backing image of an item, searched over all datasets in id order.
  std::filesystem::path image_path(const std::string& item_id);
  const StudyDataset& dataset(const std::string& dataset_id);
  const std::filesystem::path& journal_path() const { return journal_path_; }

 private:
  void replay();
  void append(const std::string& line);
  const StudyDataset& dataset_locked(const std::string& dataset_id);
  Session& session_locked(const std::string& session_id);

  std::filesystem::path data_dir_;
  std::filesystem::path journal_path_;
  int journal_fd_ = -1;
  mutable std::mutex mutex_;
  std::map<std::string, StudyDataset> datasets_;
  std::vector<Session> sessions_;  // creation order
  std::map<std::string, std::size_t> session_index_;
};

/// Presentation order and blind order for a new session, drawn from `seed`.
void plan_session(Session& session, const StudyDataset& dataset);

/// 8-bit grayscale PNG of an image.
std::string encode_png(const Image& image);

/// HTTP front end. Routes:
///   POST /sessions                  {"tester_id","dataset_id","seed"}
///   GET  /sessions/{id}/next
///   POST /sessions/{id}/judgments   {"item_id","choice": left|right|equivalent|discard}
///   GET  /datasets/{id}/results     JSON, or CSV with ?format=csv
///   GET  /items/{id}/image          PNG
/// Errors are {"error": code, "message": text}.
class StudyHttpServer {
 public:
  explicit StudyHttpServer(StudyService& service, std::optional<std::filesystem::path> static_dir = std::nullopt);
  ~StudyHttpServer();
  /// Binds to `port` (0 picks a free one); returns the bound port or -1.
  int bind(const std::string& host, int port);
  /// Serves until stop(); call after bind().
  bool listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace stedq
