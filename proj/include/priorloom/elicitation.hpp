#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "priorloom/corpus.hpp"
#include "priorloom/embedding.hpp"
#include "priorloom/linreg.hpp"
#include "priorloom/metric.hpp"

namespace priorloom {

struct SessionConfig {
  EmbeddingConfig embedding;
  MetricConfig metric;
  // Kernel bandwidth candidates, as multiples of the median pairwise
  // distance under the final metric.
  std::vector<double> kernel_grid = {0.25, 0.5, 1.0, 2.0, 4.0};
  int cv_folds = 5;
  std::uint64_t cv_seed = 0;
  HyperPriors hypers;
  VbOptions vb;
  // Headless sessions (batch experiments) skip layout optimization.
  bool visualize = true;

  void validate() const;
};

nlohmann::json to_json(const SessionConfig& config);
// Missing keys keep their defaults; unknown keys are rejected.
SessionConfig session_config_from_json(const nlohmann::json& doc);

struct RoundSnapshot {
  int round = 0;
  std::size_t feedback_count = 0;
  Eigen::VectorXd weight_mean;
  Eigen::VectorXd weight_variance;
  // Cost of the displayed layout under the updated metric (NaN when headless).
  double layout_cost = 0.0;
};

struct SessionState {
  FeatureMatrix dataset;
  std::vector<FeatureVector> features;
  MetricPosterior metric;
  Layout layout;  // layout.iteration is the round whose metric produced it
  double layout_cost = 0.0;
  int round = 0;
  SessionConfig config;
  std::vector<RoundSnapshot> history;
};

SessionState start_session(const FeatureMatrix& train, const SessionConfig& config = {});

// Updates the metric from one batch and advances the round. The layout is
// left as is until refresh_visualization.
SessionState submit_feedback(const SessionState& session, std::vector<FeedbackPair> batch);

// Re-optimizes the layout under the current metric, warm-started from the
// previous layout. A no-op when the layout already reflects the metric.
SessionState refresh_visualization(const SessionState& session);

// c_ij = exp(-d_ij / (2 bandwidth^2)) on squared distances.
PriorCovariance prior_covariance_from_distances(const Eigen::MatrixXd& sq_distances, double kernel_bandwidth);

PriorCovariance build_prior_covariance(const MetricPosterior& metric, const std::vector<FeatureVector>& features,
                                       double kernel_bandwidth);

// Median over pairs of the (unsquared) distance.
double median_distance(const Eigen::MatrixXd& sq_distances);

// k-fold CV over absolute bandwidth values; ties go to the smaller value.
double select_kernel_bandwidth(const FeatureMatrix& train, const Eigen::MatrixXd& sq_distances,
                               const std::vector<double>& grid, int folds, std::uint64_t seed,
                               const HyperPriors& hypers = {}, const VbOptions& vb = {});
double select_kernel_bandwidth(const FeatureMatrix& train, const MetricPosterior& metric,
                               const std::vector<double>& grid, int folds, std::uint64_t seed,
                               const HyperPriors& hypers = {}, const VbOptions& vb = {});

struct FitResult {
  RegressionPosterior posterior;
  Eigen::VectorXd predictions;
  double test_mse = 0.0;
  double kernel_bandwidth = 0.0;
};

// Kernel prior on the given feature distances: bandwidth by CV, VB fit,
// test predictions.
FitResult fit_with_distances(const FeatureMatrix& train, const FeatureMatrix& test,
                             const Eigen::MatrixXd& sq_distances, const SessionConfig& config);

FitResult finalize_and_fit(const SessionState& session, const FeatureMatrix& test);

// Baselines: C = I, and the Euclidean-kernel prior with no feedback.
FitResult fit_unit_prior(const FeatureMatrix& train, const FeatureMatrix& test, const SessionConfig& config);
FitResult fit_without_feedback(const FeatureMatrix& train, const FeatureMatrix& test, const SessionConfig& config);

// layout.jsonl, feedback.jsonl, config.json and metric.json under `dir`.
void export_snapshot(const SessionState& session, const std::filesystem::path& dir);

}  // namespace priorloom
