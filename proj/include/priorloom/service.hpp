#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "priorloom/corpus.hpp"
#include "priorloom/elicitation.hpp"
#include "priorloom/metric.hpp"

namespace priorloom {

struct DatasetInfo {
  std::string id;
  std::filesystem::path path;
  std::size_t n = 0;
  std::size_t d = 0;
};

nlohmann::json to_json(const DatasetInfo& info);

// In-memory registry of datasets and elicitation sessions. Every public
// method is safe to call from several threads. Mutations of one session are
// applied one at a time; reads of one session may run concurrently with each
// other but never with a mutation.
class SessionService {
public:
  // Registers every "*.plfm" file found directly under `data_dir` (by stem).
  explicit SessionService(std::filesystem::path data_dir = {});

  const std::filesystem::path& data_dir() const { return data_dir_; }

  // Relative paths resolve against the data directory. `id` defaults to the
  // file stem; re-registering an id replaces it.
  DatasetInfo register_dataset(const std::filesystem::path& matrix_file, std::optional<std::string> id = {});
  std::vector<DatasetInfo> datasets() const;

  struct Created {
    std::string id;
    int round = 0;
    Layout layout;
    std::vector<std::string> names;
  };
  Created create_session(const std::string& dataset_ref, const SessionConfig& config = {});

  Layout layout(const std::string& id) const;
  std::vector<std::string> feature_names(const std::string& id) const;
  int post_feedback(const std::string& id, const std::vector<FeedbackPair>& batch);
  Layout refresh(const std::string& id);

  struct Metrics {
    int round = 0;
    int layout_round = 0;
    std::size_t feedback_count = 0;
    double cost = 0.0;  // NaN for headless sessions
    std::optional<double> mse;
  };
  // With a test dataset, finalizes a copy of the session; the session itself
  // is not modified.
  Metrics metrics(const std::string& id, const std::optional<std::string>& test_ref = {}) const;

  // Writes export_snapshot output; `dir` defaults to <data_dir>/snapshots/<id>.
  std::filesystem::path snapshot(const std::string& id, std::optional<std::filesystem::path> dir = {}) const;

  SessionState state(const std::string& id) const;

private:
  struct Entry {
    mutable std::shared_mutex mutex;
    SessionState state;
    std::chrono::system_clock::time_point created_at;
  };

  std::shared_ptr<Entry> find(const std::string& id) const;
  std::shared_ptr<const FeatureMatrix> dataset(const std::string& ref) const;

  std::filesystem::path data_dir_;
  mutable std::shared_mutex registry_mutex_;
  std::map<std::string, std::pair<DatasetInfo, std::shared_ptr<const FeatureMatrix>>> datasets_;
  std::map<std::string, std::shared_ptr<Entry>> sessions_;
  std::size_t next_session_ = 1;
};

nlohmann::json to_json(const SessionService::Metrics& metrics);

// Accepts a jsonl body, a json array of records, or one record.
std::vector<FeedbackPair> parse_feedback_body(const std::string& body);

}  // namespace priorloom
