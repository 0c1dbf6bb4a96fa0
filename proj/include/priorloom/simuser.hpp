#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "priorloom/corpus.hpp"
#include "priorloom/linreg.hpp"
#include "priorloom/metric.hpp"

namespace priorloom {

// Oracle built from a large-data fit. Features within one cluster are
// similar to each other; features in different clusters are dissimilar.
struct SimulatedUser {
  Eigen::VectorXd reference_beta;
  std::vector<std::size_t> high_cluster;  // ascending feature indices
  std::vector<std::size_t> low_cluster;
  int k = 0;

  void validate() const;
};

nlohmann::json to_json(const SimulatedUser& user);
SimulatedUser simulated_user_from_json(const nlohmann::json& doc);

// Fits the identity-prior model on `held_out` and takes the k largest and
// k smallest posterior-mean coefficients. Boundary ties go to the lower index.
SimulatedUser construct_simulated_user(const FeatureMatrix& held_out, int k, const HyperPriors& hypers = {},
                                       const VbOptions& vb = {});

// Clusters from a known coefficient vector (no fit).
SimulatedUser simulated_user_from_beta(const Eigen::VectorXd& beta, int k);

struct FeedbackBatch {
  std::vector<FeedbackPair> pairs;
  // True when fewer unused pairs remained than were requested.
  bool exhausted = false;
};

// Draws pairs uniformly without replacement, excluding every pair in
// `history`. Similar pairs lie within one cluster, dissimilar pairs span the
// two. Pairs carry round 0; submit_feedback stamps the real round.
FeedbackBatch generate_feedback(const SimulatedUser& user, int n_similar, int n_dissimilar,
                                const std::vector<FeedbackPair>& history, std::uint64_t seed);

}  // namespace priorloom
