#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "priorloom/corpus.hpp"
#include "priorloom/metric.hpp"

namespace priorloom {

// Row-stochastic neighbour distribution with a zero diagonal.
struct AffinityMatrix {
  Eigen::MatrixXd probs;
  Eigen::VectorXd bandwidths;  // sigma_i^2 per row
};

// 2-D display coordinates of every feature; `iteration` is the session round.
struct Layout {
  Eigen::MatrixXd coords;  // D x 2
  int iteration = 0;
};

struct EmbeddingConfig {
  double lambda = 0.5;       // weight of the recall (forward KL) term
  double perplexity = 15.0;
  int max_iters = 500;
  // Initial step, in units of D * mean(sigma^2), adapted during descent.
  double learning_rate = 0.1;
  int mc_samples = 5;        // 0: posterior-mean metric only
  std::uint64_t seed = 0;
  bool unit_lowdim_bandwidth = false;
  double tolerance = 1e-6;   // relative cost change that ends descent

  void validate() const;
};

// Per-row sigma^2 whose row entropy matches log2(perplexity) bits.
Eigen::VectorXd compute_bandwidths(const Eigen::MatrixXd& sq_distances, double perplexity);
Eigen::VectorXd compute_bandwidths(const std::vector<FeatureVector>& features, const MetricPosterior& metric,
                                   double perplexity);

// p_{j|i} = exp(-d_ij / s_i) / sum_{k != i} exp(-d_ik / s_i)
AffinityMatrix affinities_from_distances(const Eigen::MatrixXd& sq_distances, const Eigen::VectorXd& bandwidths);
AffinityMatrix high_dim_affinities(const std::vector<FeatureVector>& features, const Metric& metric,
                                   const Eigen::VectorXd& bandwidths);
AffinityMatrix low_dim_affinities(const Layout& layout, const Eigen::VectorXd& bandwidths);

// Row entropy of an affinity matrix in bits.
double row_entropy_bits(const AffinityMatrix& a, Eigen::Index row);

// Affinities below this floor are clamped inside logarithms.
inline constexpr double kAffinityFloor = 1e-12;

// Mean over samples of lambda * mean_i KL(P_i||Q_i) + (1-lambda) * mean_i KL(Q_i||P_i).
// `clamped`, when given, reports whether the floor was needed.
double cost(const std::vector<AffinityMatrix>& p_samples, const AffinityMatrix& q, double lambda,
            bool* clamped = nullptr);

// Exact gradient of `cost` with respect to layout coordinates, Q built
// from `bandwidths` as in low_dim_affinities.
Eigen::MatrixXd cost_gradient(const std::vector<AffinityMatrix>& p_samples, const Layout& layout,
                              const Eigen::VectorXd& bandwidths, double lambda);

// Projection of the centered feature vectors on their top two principal
// directions (sign fixed so each direction's largest component is positive).
Layout pca_layout(const std::vector<FeatureVector>& features);

struct LayoutResult {
  Layout layout;
  double cost = 0.0;
  int accepted_steps = 0;
  std::vector<double> cost_trace;  // cost after each accepted step, starting value first
  Eigen::VectorXd bandwidths;
};

LayoutResult optimize_layout_detailed(const std::vector<FeatureVector>& features, const MetricPosterior& posterior,
                                      const EmbeddingConfig& config, const std::optional<Layout>& init);

Layout optimize_layout(const std::vector<FeatureVector>& features, const MetricPosterior& posterior,
                       const EmbeddingConfig& config, const std::optional<Layout>& init = std::nullopt);

// {"index":..,"name":..,"x":..,"y":..} per feature.
std::string layout_to_jsonl(const Layout& layout, const std::vector<std::string>& names);
Layout layout_from_jsonl(const std::string& text);

}  // namespace priorloom
