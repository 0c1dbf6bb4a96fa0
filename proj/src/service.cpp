#include "priorloom/service.hpp"

#include <algorithm>
#include <cmath>

#include "priorloom/errors.hpp"
#include "priorloom/log.hpp"

namespace priorloom {

nlohmann::json to_json(const DatasetInfo& info) {
  return {{"id", info.id}, {"path", info.path.string()}, {"n", info.n}, {"d", info.d}};
}

nlohmann::json to_json(const SessionService::Metrics& m) {
  nlohmann::json j{{"round", m.round}, {"layout_round", m.layout_round}, {"feedback_count", m.feedback_count}};
  j["cost"] = std::isfinite(m.cost) ? nlohmann::json(m.cost) : nlohmann::json(nullptr);
  if (m.mse) j["mse"] = *m.mse;
  return j;
}

std::vector<FeedbackPair> parse_feedback_body(const std::string& body) {
  const auto first = body.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) throw ValidationError("no feedback in batch");
  if (body[first] == '[') {
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(body);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(std::string("feedback body is not valid json: ") + e.what());
    }
    std::vector<FeedbackPair> out;
    for (const auto& rec : doc) out.push_back(feedback_from_json(rec));
    return out;
  }
  return feedback_from_jsonl(body);
}

SessionService::SessionService(std::filesystem::path data_dir) : data_dir_(std::move(data_dir)) {
  if (data_dir_.empty() || !std::filesystem::is_directory(data_dir_)) return;
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(data_dir_))
    if (entry.is_regular_file() && entry.path().extension() == ".plfm") files.push_back(entry.path().filename());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    try {
      register_dataset(f);
    } catch (const std::exception& e) {
      warn("skipping " + f.string() + ": " + e.what());
    }
  }
}

DatasetInfo SessionService::register_dataset(const std::filesystem::path& matrix_file, std::optional<std::string> id) {
  std::filesystem::path path = matrix_file;
  if (path.is_relative() && !data_dir_.empty()) path = (data_dir_ / path).lexically_normal();
  if (!std::filesystem::exists(path)) throw NotFoundError("dataset file not found: " + path.string());
  auto matrix = std::make_shared<const FeatureMatrix>(read_feature_matrix(path));
  DatasetInfo info;
  info.id = id && !id->empty() ? *id : path.stem().string();
  info.path = path;
  info.n = matrix->n();
  info.d = matrix->d();
  std::unique_lock lock(registry_mutex_);
  datasets_[info.id] = {info, std::move(matrix)};
  return info;
}

std::vector<DatasetInfo> SessionService::datasets() const {
  std::shared_lock lock(registry_mutex_);
  std::vector<DatasetInfo> out;
  for (const auto& [id, entry] : datasets_) out.push_back(entry.first);
  return out;
}

std::shared_ptr<const FeatureMatrix> SessionService::dataset(const std::string& ref) const {
  std::shared_lock lock(registry_mutex_);
  auto it = datasets_.find(ref);
  if (it == datasets_.end()) throw NotFoundError("unknown dataset '" + ref + "'");
  return it->second.second;
}

std::shared_ptr<SessionService::Entry> SessionService::find(const std::string& id) const {
  std::shared_lock lock(registry_mutex_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw NotFoundError("unknown session '" + id + "'");
  return it->second;
}

SessionService::Created SessionService::create_session(const std::string& dataset_ref, const SessionConfig& config) {
  const auto matrix = dataset(dataset_ref);
  auto entry = std::make_shared<Entry>();
  entry->state = start_session(*matrix, config);
  entry->created_at = std::chrono::system_clock::now();
  Created out;
  out.round = entry->state.round;
  out.layout = entry->state.layout;
  out.names = entry->state.dataset.feature_names;
  std::unique_lock lock(registry_mutex_);
  out.id = "s" + std::to_string(next_session_++);
  sessions_[out.id] = std::move(entry);
  return out;
}

Layout SessionService::layout(const std::string& id) const {
  auto e = find(id);
  std::shared_lock lock(e->mutex);
  return e->state.layout;
}

std::vector<std::string> SessionService::feature_names(const std::string& id) const {
  auto e = find(id);
  std::shared_lock lock(e->mutex);
  return e->state.dataset.feature_names;
}

int SessionService::post_feedback(const std::string& id, const std::vector<FeedbackPair>& batch) {
  auto e = find(id);
  std::unique_lock lock(e->mutex);
  e->state = submit_feedback(e->state, batch);
  return e->state.round;
}

Layout SessionService::refresh(const std::string& id) {
  auto e = find(id);
  std::unique_lock lock(e->mutex);
  e->state = refresh_visualization(e->state);
  return e->state.layout;
}

SessionService::Metrics SessionService::metrics(const std::string& id, const std::optional<std::string>& test_ref) const {
  auto e = find(id);
  std::shared_ptr<const FeatureMatrix> test;
  if (test_ref) test = dataset(*test_ref);
  std::shared_lock lock(e->mutex);
  Metrics m;
  m.round = e->state.round;
  m.layout_round = e->state.layout.iteration;
  m.feedback_count = e->state.metric.feedback_log.size();
  m.cost = e->state.layout_cost;
  if (test) {
    const SessionState copy = e->state;
    lock.unlock();
    m.mse = finalize_and_fit(copy, *test).test_mse;
  }
  return m;
}

std::filesystem::path SessionService::snapshot(const std::string& id, std::optional<std::filesystem::path> dir) const {
  auto e = find(id);
  std::filesystem::path target = dir ? *dir : (data_dir_.empty() ? std::filesystem::path(".") : data_dir_) /
                                                  "snapshots" / id;
  std::shared_lock lock(e->mutex);
  export_snapshot(e->state, target);
  return target;
}

SessionState SessionService::state(const std::string& id) const {
  auto e = find(id);
  std::shared_lock lock(e->mutex);
  return e->state;
}

}  // namespace priorloom
