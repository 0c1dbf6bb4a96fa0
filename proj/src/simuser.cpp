#include "priorloom/simuser.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <utility>

#include "priorloom/errors.hpp"
#include "priorloom/log.hpp"

namespace priorloom {

void SimulatedUser::validate() const {
  const auto d = static_cast<std::size_t>(reference_beta.size());
  if (k < 1) throw ValidationError("k must be >= 1");
  if (high_cluster.size() != static_cast<std::size_t>(k) || low_cluster.size() != static_cast<std::size_t>(k))
    throw ValidationError("each cluster must hold exactly k features");
  std::set<std::size_t> seen;
  for (auto i : high_cluster) seen.insert(i);
  for (auto i : low_cluster) seen.insert(i);
  if (seen.size() != 2 * static_cast<std::size_t>(k)) throw ValidationError("clusters overlap or repeat indices");
  if (*seen.rbegin() >= d) throw ValidationError("cluster index out of range");
}

nlohmann::json to_json(const SimulatedUser& u) {
  return {{"k", u.k},
          {"reference_beta", std::vector<double>(u.reference_beta.data(),
                                                 u.reference_beta.data() + u.reference_beta.size())},
          {"high_cluster", u.high_cluster},
          {"low_cluster", u.low_cluster}};
}

SimulatedUser simulated_user_from_json(const nlohmann::json& doc) {
  SimulatedUser u;
  try {
    u.k = doc.at("k").get<int>();
    const auto beta = doc.at("reference_beta").get<std::vector<double>>();
    u.reference_beta = Eigen::Map<const Eigen::VectorXd>(beta.data(), static_cast<Eigen::Index>(beta.size()));
    u.high_cluster = doc.at("high_cluster").get<std::vector<std::size_t>>();
    u.low_cluster = doc.at("low_cluster").get<std::vector<std::size_t>>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("bad simulated user record: ") + e.what());
  }
  u.validate();
  return u;
}

SimulatedUser simulated_user_from_beta(const Eigen::VectorXd& beta, int k) {
  const auto d = static_cast<std::size_t>(beta.size());
  if (k < 1) throw ValidationError("k must be >= 1");
  if (2 * static_cast<std::size_t>(k) > d)
    throw ValidationError("2k = " + std::to_string(2 * k) + " exceeds the feature count " + std::to_string(d));
  std::vector<std::size_t> order(d);
  std::iota(order.begin(), order.end(), 0);
  // Largest first; equal values keep ascending index order.
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return beta(static_cast<Eigen::Index>(a)) > beta(static_cast<Eigen::Index>(b));
  });
  SimulatedUser u;
  u.reference_beta = beta;
  u.k = k;
  u.high_cluster.assign(order.begin(), order.begin() + k);
  // Smallest first among the rest, again lower index on ties.
  std::vector<std::size_t> rest(order.begin() + k, order.end());
  std::stable_sort(rest.begin(), rest.end(), [&](std::size_t a, std::size_t b) {
    const double va = beta(static_cast<Eigen::Index>(a)), vb = beta(static_cast<Eigen::Index>(b));
    return va < vb || (va == vb && a < b);
  });
  u.low_cluster.assign(rest.begin(), rest.begin() + k);
  std::sort(u.high_cluster.begin(), u.high_cluster.end());
  std::sort(u.low_cluster.begin(), u.low_cluster.end());
  return u;
}

SimulatedUser construct_simulated_user(const FeatureMatrix& held_out, int k, const HyperPriors& hypers,
                                       const VbOptions& vb) {
  held_out.validate();
  if (k < 1 || 2 * static_cast<std::size_t>(k) > held_out.d())
    throw ValidationError("need 1 <= k and 2k <= D (k=" + std::to_string(k) + ", D=" +
                          std::to_string(held_out.d()) + ")");
  if (held_out.n() < 2 * held_out.d())
    warn("simulated user fit on n=" + std::to_string(held_out.n()) + " rows for D=" +
         std::to_string(held_out.d()) + " features; the reference coefficients may be unstable");
  const auto post =
      fit_vb(held_out.X, held_out.y, PriorCovariance::identity(static_cast<Eigen::Index>(held_out.d())), hypers, vb);
  return simulated_user_from_beta(post.beta_mean, k);
}

namespace {

using PairKey = std::pair<std::size_t, std::size_t>;

std::vector<FeedbackPair> draw(std::vector<PairKey> candidates, const std::set<PairKey>& used, int count,
                               FeedbackLabel label, std::uint64_t seed, bool& exhausted) {
  std::erase_if(candidates, [&](const PairKey& p) { return used.count(p) > 0; });
  std::sort(candidates.begin(), candidates.end());
  const auto perm = seeded_permutation(candidates.size(), seed);
  const std::size_t want = static_cast<std::size_t>(std::max(count, 0));
  if (candidates.size() < want) exhausted = true;
  std::vector<FeedbackPair> out;
  for (std::size_t t = 0; t < std::min(want, candidates.size()); ++t) {
    const auto& p = candidates[perm[t]];
    out.push_back(FeedbackPair::make(p.first, p.second, label, 0));
  }
  return out;
}

}  // namespace

FeedbackBatch generate_feedback(const SimulatedUser& user, int n_similar, int n_dissimilar,
                                const std::vector<FeedbackPair>& history, std::uint64_t seed) {
  user.validate();
  if (n_similar < 0 || n_dissimilar < 0) throw ValidationError("feedback counts must be >= 0");
  std::set<PairKey> used;
  for (const auto& p : history) used.insert({std::min(p.i, p.j), std::max(p.i, p.j)});

  std::vector<PairKey> within, across;
  for (const auto* cluster : {&user.high_cluster, &user.low_cluster})
    for (std::size_t a = 0; a < cluster->size(); ++a)
      for (std::size_t b = a + 1; b < cluster->size(); ++b)
        within.push_back({std::min((*cluster)[a], (*cluster)[b]), std::max((*cluster)[a], (*cluster)[b])});
  for (auto h : user.high_cluster)
    for (auto l : user.low_cluster) across.push_back({std::min(h, l), std::max(h, l)});

  FeedbackBatch batch;
  // Separate seed streams so the two draws do not share a permutation.
  batch.pairs = draw(within, used, n_similar, FeedbackLabel::similar, seed, batch.exhausted);
  auto dis = draw(across, used, n_dissimilar, FeedbackLabel::dissimilar, seed ^ 0x9e3779b97f4a7c15ULL,
                  batch.exhausted);
  batch.pairs.insert(batch.pairs.end(), dis.begin(), dis.end());
  return batch;
}

}  // namespace priorloom
