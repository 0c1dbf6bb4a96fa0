#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "priorloom/corpus.hpp"
#include "priorloom/truncnorm.hpp"

namespace priorloom {

enum class FeedbackLabel { similar, dissimilar };

std::string to_string(FeedbackLabel label);
FeedbackLabel parse_feedback_label(const std::string& text);

// One pairwise judgment. Stored canonically with i < j.
struct FeedbackPair {
  std::size_t i = 0;
  std::size_t j = 0;
  FeedbackLabel label = FeedbackLabel::similar;
  int round = 0;

  // Orders the indices; throws ValidationError when i == j.
  static FeedbackPair make(std::size_t a, std::size_t b, FeedbackLabel label, int round = 0);
  bool same_pair(const FeedbackPair& o) const { return i == o.i && j == o.j; }
  bool operator==(const FeedbackPair&) const = default;
};

// {"i":..,"j":..,"label":"similar"|"dissimilar","round":..}
nlohmann::json to_json(const FeedbackPair& pair);
// Throws ValidationError on missing fields, bad label or i == j.
FeedbackPair feedback_from_json(const nlohmann::json& record);
std::string feedback_to_jsonl(const std::vector<FeedbackPair>& pairs);
std::vector<FeedbackPair> feedback_from_jsonl(const std::string& text);

// A = sum_k w_k v_k v_k^T + (I - V^T V), V the K x n orthonormal basis.
// Unit weights give the identity; nonnegative weights keep A PSD.
class Metric {
public:
  Metric(std::shared_ptr<const Eigen::MatrixXd> basis, Eigen::VectorXd weights);
  static Metric identity(Eigen::Index n);

  double sq_distance(const Eigen::VectorXd& delta) const;
  double sq_distance(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const {
    return sq_distance(Eigen::VectorXd(a - b));
  }
  Eigen::MatrixXd dense() const;

  const Eigen::MatrixXd& basis() const { return *basis_; }
  const std::shared_ptr<const Eigen::MatrixXd>& shared_basis() const { return basis_; }
  const Eigen::VectorXd& weights() const { return weights_; }
  Eigen::Index dim() const { return dim_; }

private:
  std::shared_ptr<const Eigen::MatrixXd> basis_;
  Eigen::VectorXd weights_;
  Eigen::Index dim_;
};

// Cached Euclidean distances and basis projections for a fixed feature set;
// distances under any weight vector are then O(D^2 K).
class PairwiseGeometry {
public:
  PairwiseGeometry(const Eigen::MatrixXd& features, const Eigen::MatrixXd& basis);
  PairwiseGeometry(const std::vector<FeatureVector>& features, const Eigen::MatrixXd& basis);

  Eigen::MatrixXd sq_distances(const Eigen::VectorXd& weights) const;
  Eigen::MatrixXd sq_distances(const Metric& metric) const { return sq_distances(metric.weights()); }
  const Eigen::MatrixXd& euclidean_sq() const { return euclid_; }
  Eigen::Index size() const { return euclid_.rows(); }

private:
  Eigen::MatrixXd euclid_;
  Eigen::MatrixXd projections_;  // K x D
};

// Squared Euclidean distances computed from coordinate differences, so
// identical columns give exactly zero.
Eigen::MatrixXd euclidean_sq_distances(const Eigen::MatrixXd& columns);

struct MetricConfig {
  int rank = 20;
  // Prior variance of each weight before truncation at zero.
  double prior_variance = 1.0;
  // Likelihood margin; defaults to the median squared Euclidean distance.
  std::optional<double> margin;
  int max_iters = 1000;
  double tol = 1e-12;
};

// Mean-field posterior over metric weights, each factor a normal truncated
// at zero. The feedback log and batch boundaries allow replays.
struct MetricPosterior {
  std::shared_ptr<const Eigen::MatrixXd> basis;  // K x n, orthonormal rows
  Eigen::VectorXd weight_mean;
  Eigen::VectorXd weight_variance;
  std::vector<TruncatedNormal> factors;
  std::vector<TruncatedNormal> initial_factors;
  std::vector<FeedbackPair> feedback_log;
  std::vector<std::size_t> batch_ends;
  double margin = 1.0;
  // Variational objective reached by the last update (0 before any update).
  double objective = 0.0;
  int last_update_iterations = 0;

  std::size_t rank() const { return factors.size(); }
  Metric point_estimate() const { return Metric(basis, weight_mean); }
  Metric with_weights(const Eigen::VectorXd& w) const { return Metric(basis, w); }
};

nlohmann::json to_json(const MetricPosterior& posterior);
MetricPosterior metric_posterior_from_json(const nlohmann::json& doc);

// Basis = top-K principal directions of the (centered) feature vectors,
// weights start at one so distances are Euclidean. K is clipped to the
// numerical rank with a warning.
MetricPosterior init_metric(const std::vector<FeatureVector>& features, int rank,
                            const MetricConfig& config = {});

MetricPosterior update_metric(const MetricPosterior& posterior, const std::vector<FeedbackPair>& batch,
                              const std::vector<FeatureVector>& features,
                              const MetricConfig& config = {});

double mahalanobis(const Metric& metric, const FeatureVector& a, const FeatureVector& b);
double mahalanobis(const MetricPosterior& posterior, const FeatureVector& a, const FeatureVector& b);

// Draws weights from the truncated-normal factors; deterministic in seed.
std::vector<Metric> sample_metrics(const MetricPosterior& posterior, int count, std::uint64_t seed);

// Pair statistics entering the likelihood: d_A = residual + z . w.
struct PairTerm {
  double residual = 0.0;
  Eigen::VectorXd z;
  double sign = 1.0;  // +1 similar, -1 dissimilar
};

// The variational objective maximized by update_metric:
//   sum_p E_q[log sigmoid(sign_p (margin - d_p))]
//   + sum_k (E_q[log prior_k] + H[q_k]),
// where the expectation over the likelihood uses the exact first two
// moments of d_p under q and a Gaussian shape for its distribution.
class FeedbackObjective {
public:
  FeedbackObjective(std::vector<PairTerm> terms, std::vector<TruncatedNormal> prior, double margin);
  static FeedbackObjective from_batch(const MetricPosterior& prior_posterior,
                                      const std::vector<FeedbackPair>& batch,
                                      const std::vector<FeatureVector>& features);

  double value(const std::vector<TruncatedNormal>& q) const;
  // Mean and variance of d_p under q.
  std::pair<double, double> distance_moments(std::size_t pair, const std::vector<TruncatedNormal>& q) const;

  const std::vector<PairTerm>& terms() const { return terms_; }
  const std::vector<TruncatedNormal>& prior() const { return prior_; }
  double margin() const { return margin_; }

  struct Maximum {
    std::vector<TruncatedNormal> q;
    double value;
    int iterations;
  };
  Maximum maximize(const std::vector<TruncatedNormal>& start, int max_iters, double tol) const;

private:
  std::vector<PairTerm> terms_;
  std::vector<TruncatedNormal> prior_;
  double margin_;
};

// E[log sigmoid(x)], E[sigmoid(-x)] and E[-sigmoid(x) sigmoid(-x)] for
// x ~ N(mean, var), integrated by graded Gauss-Legendre panels.
struct LogisticExpectations {
  double log_sig;
  double d1;
  double d2;
};
LogisticExpectations logistic_expectations(double mean, double var);

double log_sigmoid(double x);

}  // namespace priorloom
