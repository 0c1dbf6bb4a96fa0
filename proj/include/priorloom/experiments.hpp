#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "priorloom/corpus.hpp"
#include "priorloom/elicitation.hpp"

namespace priorloom {

// Latent-topic design with two planted coefficient clusters:
//   X = feature_scale * (Z W + E),  Z ~ N(0, 1) (rows x topics),
//   E ~ N(0, feature_noise^2)
// The first `cluster_size` columns load +cluster_loading on topic 0 and get
// coefficient +cluster_coef; the next `cluster_size` load -cluster_loading and
// get -cluster_coef. Remaining features load N(0, rest_anchor_sd^2) on topic 0.
// Loadings on the other topics are N(0, topic_scale^2), other coefficients
// N(0, rest_coef_sd^2); all coefficients are divided by feature_scale. With
// paired_topics the second cluster's loadings on topics 1.. are shifted to
// match the first cluster's means, so the clusters add no signal there. Target
// noise is set so the population R^2 equals `r_squared`.
struct SyntheticSpec {
  std::size_t rows = 1300;
  std::size_t features = 200;
  std::size_t topics = 8;
  std::size_t cluster_size = 30;
  double cluster_loading = 0.45;
  double topic_scale = 3.0;
  double rest_anchor_sd = 0.0;
  bool paired_topics = true;
  double feature_scale = 0.1;  // multiplies X (coefficients divided by it)
  double feature_noise = 1.0;
  double cluster_coef = 1.0;
  double rest_coef_sd = 0.05;
  double r_squared = 0.7;

  void validate() const;
};

nlohmann::json to_json(const SyntheticSpec& spec);
SyntheticSpec synthetic_spec_from_json(const nlohmann::json& doc);

struct SyntheticData {
  FeatureMatrix matrix;
  Eigen::VectorXd beta;
  double noise_sd = 0.0;
};

SyntheticData generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

enum class Baseline { unit_prior, without_feedback, with_feedback };
std::string to_string(Baseline b);
Baseline parse_baseline(const std::string& name);

struct ExperimentConfig {
  // Exactly one of these describes the data.
  std::optional<SyntheticSpec> synthetic;
  std::filesystem::path matrix_path;  // "PLFM" file

  std::vector<std::size_t> training_sizes = {50, 100, 200};
  std::size_t test_size = 500;
  std::size_t user_set_size = 600;  // rows used to construct the simulated user
  int cluster_k = 30;
  int rounds = 20;
  int per_round_similar = 10;
  int per_round_dissimilar = 10;
  // Total pairs given at once in batch mode; 0 means rounds * per-round count.
  int batch_similar = 0;
  int batch_dissimilar = 0;
  int user_constructions = 3;
  int data_selections = 10;
  std::uint64_t seed = 0;
  std::vector<Baseline> baselines = {Baseline::unit_prior, Baseline::without_feedback, Baseline::with_feedback};
  SessionConfig session;  // visualize is forced off
  int threads = 1;

  int repeats() const { return user_constructions * data_selections; }
  void validate() const;
};

nlohmann::json to_json(const ExperimentConfig& config);
// Keys mirror the struct fields; "synthetic" holds SyntheticSpec fields and
// "matrix" a feature matrix path. Unknown keys are rejected.
ExperimentConfig experiment_config_from_json(const nlohmann::json& doc);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

// Seeds used by one repeat, derived from the base seed and repeat position
// so results do not depend on scheduling.
struct RepeatSeeds {
  int user_construction = 0;
  int data_selection = 0;
  std::uint64_t data = 0;      // synthetic draw (per user construction)
  std::uint64_t user_set = 0;  // rows for the simulated user
  std::uint64_t split = 0;     // train/test selection
  std::uint64_t feedback = 0;
};

std::vector<RepeatSeeds> repeat_seeds(const ExperimentConfig& config);

struct ResultCurve {
  std::string label;
  std::vector<double> x;
  std::vector<double> mean_mse;
  Eigen::MatrixXd per_repeat_mse;  // x.size() rows, one column per repeat

  void validate() const;
};

// One curve per baseline, x = training size.
std::vector<ResultCurve> run_batch_experiment(const ExperimentConfig& config);

// One curve per baseline, x = round 0..rounds, at the first training size.
// Round 0 of the feedback curve is the session's no-feedback fit.
std::vector<ResultCurve> run_sequential_experiment(const ExperimentConfig& config);

// Two-sided label-permutation test on |mean(a) - mean(b)|.
double permutation_test(const std::vector<double>& group_a, const std::vector<double>& group_b,
                        int n_permutations, std::uint64_t seed);

// <dir>/<label>.csv per curve and <dir>/manifest.jsonl.
void emit_results(const std::vector<ResultCurve>& curves, const ExperimentConfig& config,
                  const std::filesystem::path& dir);
ResultCurve read_curve_csv(const std::filesystem::path& path);

}  // namespace priorloom
