#include "priorloom/metric.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numbers>
#include <random>

#include "priorloom/errors.hpp"
#include "priorloom/log.hpp"

namespace priorloom {
namespace {

constexpr int kLegendreOrder = 10;

struct LegendreRule {
  std::array<double, kLegendreOrder> nodes;
  std::array<double, kLegendreOrder> weights;
};

// Golub-Welsch on the Jacobi matrix of the Legendre recurrence.
const LegendreRule& legendre_rule() {
  static const LegendreRule rule = [] {
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(kLegendreOrder, kLegendreOrder);
    for (int k = 1; k < kLegendreOrder; ++k) {
      const double b = k / std::sqrt(4.0 * k * k - 1.0);
      J(k, k - 1) = b;
      J(k - 1, k) = b;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
    LegendreRule r{};
    for (int k = 0; k < kLegendreOrder; ++k) {
      r.nodes[k] = es.eigenvalues()(k);
      const double v0 = es.eigenvectors()(0, k);
      r.weights[k] = 2.0 * v0 * v0;
    }
    return r;
  }();
  return rule;
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double standard_pdf(double t) { return std::exp(-0.5 * t * t) / std::sqrt(2.0 * std::numbers::pi); }

void sign_normalize(Eigen::MatrixXd& rows) {
  for (Eigen::Index k = 0; k < rows.rows(); ++k) {
    Eigen::Index arg = 0;
    rows.row(k).cwiseAbs().maxCoeff(&arg);
    if (rows(k, arg) < 0) rows.row(k) *= -1.0;
  }
}

double median_upper_triangle(const Eigen::MatrixXd& m) {
  std::vector<double> v;
  v.reserve(static_cast<std::size_t>(m.rows() * (m.rows() - 1) / 2));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = i + 1; j < m.cols(); ++j) v.push_back(m(i, j));
  if (v.empty()) return 0.0;
  auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (v.size() % 2 == 1) return *mid;
  const double hi = *mid;
  const double lo = *std::max_element(v.begin(), mid);
  return 0.5 * (lo + hi);
}

Eigen::VectorXd means_of(const std::vector<TruncatedNormal>& q) {
  Eigen::VectorXd m(static_cast<Eigen::Index>(q.size()));
  for (std::size_t k = 0; k < q.size(); ++k) m(static_cast<Eigen::Index>(k)) = q[k].mean();
  return m;
}

Eigen::VectorXd variances_of(const std::vector<TruncatedNormal>& q) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(q.size()));
  for (std::size_t k = 0; k < q.size(); ++k) v(static_cast<Eigen::Index>(k)) = q[k].variance();
  return v;
}

void validate_batch(const std::vector<FeedbackPair>& batch, std::size_t d) {
  if (batch.empty()) throw ValidationError("no feedback in batch");
  for (const auto& p : batch) {
    if (p.i == p.j) throw ValidationError("feedback pair has i == j");
    if (p.i >= d || p.j >= d)
      throw ValidationError("feedback index out of range [0, " + std::to_string(d) + ")");
  }
}

FeedbackPair canonical(FeedbackPair p) {
  if (p.i > p.j) std::swap(p.i, p.j);
  return p;
}

}  // namespace

// ---------------------------------------------------------------- feedback

std::string to_string(FeedbackLabel label) {
  return label == FeedbackLabel::similar ? "similar" : "dissimilar";
}

FeedbackLabel parse_feedback_label(const std::string& text) {
  if (text == "similar") return FeedbackLabel::similar;
  if (text == "dissimilar") return FeedbackLabel::dissimilar;
  throw ValidationError("label must be \"similar\" or \"dissimilar\", got \"" + text + "\"");
}

FeedbackPair FeedbackPair::make(std::size_t a, std::size_t b, FeedbackLabel label, int round) {
  if (a == b) throw ValidationError("feedback pair has i == j (" + std::to_string(a) + ")");
  if (round < 0) throw ValidationError("feedback round must be >= 0");
  return FeedbackPair{std::min(a, b), std::max(a, b), label, round};
}

nlohmann::json to_json(const FeedbackPair& pair) {
  return nlohmann::json{{"i", pair.i}, {"j", pair.j}, {"label", to_string(pair.label)}, {"round", pair.round}};
}

FeedbackPair feedback_from_json(const nlohmann::json& rec) {
  if (!rec.is_object()) throw ValidationError("feedback record must be a json object");
  for (const char* key : {"i", "j", "label"})
    if (!rec.contains(key)) throw ValidationError(std::string("feedback record missing \"") + key + "\"");
  if (!rec["i"].is_number_unsigned() || !rec["j"].is_number_unsigned())
    throw ValidationError("feedback indices must be nonnegative integers");
  if (!rec["label"].is_string()) throw ValidationError("feedback label must be a string");
  int round = 0;
  if (rec.contains("round")) {
    if (!rec["round"].is_number_integer()) throw ValidationError("feedback round must be an integer");
    round = rec["round"].get<int>();
  }
  return FeedbackPair::make(rec["i"].get<std::size_t>(), rec["j"].get<std::size_t>(),
                            parse_feedback_label(rec["label"].get<std::string>()), round);
}

std::string feedback_to_jsonl(const std::vector<FeedbackPair>& pairs) {
  std::string out;
  for (const auto& p : pairs) out += to_json(p).dump() + "\n";
  return out;
}

std::vector<FeedbackPair> feedback_from_jsonl(const std::string& text) {
  std::vector<FeedbackPair> out;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    std::string line = text.substr(start, end - start);
    start = end + 1;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ValidationError(std::string("malformed feedback record: ") + e.what());
    }
    out.push_back(feedback_from_json(rec));
  }
  return out;
}

// ---------------------------------------------------------------- metric

Metric::Metric(std::shared_ptr<const Eigen::MatrixXd> basis, Eigen::VectorXd weights)
    : basis_(std::move(basis)), weights_(std::move(weights)), dim_(basis_->cols()) {
  if (basis_->rows() != weights_.size()) throw ValidationError("metric weights do not match basis rank");
  if ((weights_.array() < 0.0).any()) throw ValidationError("metric weights must be nonnegative");
}

Metric Metric::identity(Eigen::Index n) {
  return Metric(std::make_shared<const Eigen::MatrixXd>(0, n), Eigen::VectorXd(0));
}

double Metric::sq_distance(const Eigen::VectorXd& delta) const {
  if (delta.size() != dim_) throw ValidationError("vector length does not match metric dimension");
  const Eigen::VectorXd proj = *basis_ * delta;
  double d = delta.squaredNorm();
  for (Eigen::Index k = 0; k < proj.size(); ++k) d += (weights_(k) - 1.0) * proj(k) * proj(k);
  return std::max(d, 0.0);
}

Eigen::MatrixXd Metric::dense() const {
  const Eigen::MatrixXd& V = *basis_;
  Eigen::MatrixXd A = Eigen::MatrixXd::Identity(dim_, dim_);
  A += V.transpose() * (weights_.array() - 1.0).matrix().asDiagonal() * V;
  return 0.5 * (A + A.transpose());
}

Eigen::MatrixXd euclidean_sq_distances(const Eigen::MatrixXd& F) {
  const Eigen::Index d = F.cols();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(d, d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = i + 1; j < d; ++j) {
      const double v = (F.col(i) - F.col(j)).squaredNorm();
      out(i, j) = v;
      out(j, i) = v;
    }
  return out;
}

PairwiseGeometry::PairwiseGeometry(const Eigen::MatrixXd& features, const Eigen::MatrixXd& basis)
    : euclid_(euclidean_sq_distances(features)), projections_(basis * features) {
  if (basis.cols() != features.rows()) throw ValidationError("basis dimension does not match features");
}

PairwiseGeometry::PairwiseGeometry(const std::vector<FeatureVector>& features, const Eigen::MatrixXd& basis)
    : PairwiseGeometry(stack_columns(features), basis) {}

Eigen::MatrixXd PairwiseGeometry::sq_distances(const Eigen::VectorXd& weights) const {
  if (weights.size() != projections_.rows()) throw ValidationError("weights do not match basis rank");
  const Eigen::Index d = euclid_.rows();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(d, d);
  const Eigen::VectorXd shift = weights.array() - 1.0;
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = i + 1; j < d; ++j) {
      double v = euclid_(i, j);
      for (Eigen::Index k = 0; k < shift.size(); ++k) {
        const double p = projections_(k, i) - projections_(k, j);
        v += shift(k) * p * p;
      }
      v = std::max(v, 0.0);
      out(i, j) = v;
      out(j, i) = v;
    }
  return out;
}

double mahalanobis(const Metric& metric, const FeatureVector& a, const FeatureVector& b) {
  if (a.values.size() != b.values.size()) throw ValidationError("feature vectors differ in length");
  return metric.sq_distance(a.values, b.values);
}

double mahalanobis(const MetricPosterior& posterior, const FeatureVector& a, const FeatureVector& b) {
  return mahalanobis(posterior.point_estimate(), a, b);
}

// ---------------------------------------------------------------- expectations

double log_sigmoid(double x) {
  if (x >= 0) return -std::log1p(std::exp(-x));
  return x - std::log1p(std::exp(x));
}

LogisticExpectations logistic_expectations(double mean, double var) {
  if (!(var > 1e-24)) {
    const double s = sigmoid(mean);
    return {log_sigmoid(mean), sigmoid(-mean), -s * sigmoid(-mean)};
  }
  const double sd = std::sqrt(var);
  constexpr double kSpan = 10.0;
  // Unit panels in standardized coordinates, refined around the point where
  // x crosses zero (the logistic's curvature lives within |x| <~ 20).
  std::vector<double> cuts;
  for (int k = -10; k <= 10; ++k) cuts.push_back(k);
  const double t0 = -mean / sd;
  for (double off : {0.0, 1.0, -1.0, 4.0, -4.0, 8.0, -8.0, 20.0, -20.0}) {
    const double c = t0 + off / sd;
    if (c > -kSpan && c < kSpan) cuts.push_back(c);
  }
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

  const auto& rule = legendre_rule();
  LogisticExpectations out{0, 0, 0};
  for (std::size_t p = 0; p + 1 < cuts.size(); ++p) {
    const double half = 0.5 * (cuts[p + 1] - cuts[p]);
    if (half <= 0) continue;
    const double mid = 0.5 * (cuts[p + 1] + cuts[p]);
    for (int k = 0; k < kLegendreOrder; ++k) {
      const double t = mid + half * rule.nodes[static_cast<std::size_t>(k)];
      const double w = half * rule.weights[static_cast<std::size_t>(k)] * standard_pdf(t);
      const double x = mean + sd * t;
      const double sp = sigmoid(x);
      const double sn = sigmoid(-x);
      out.log_sig += w * log_sigmoid(x);
      out.d1 += w * sn;
      out.d2 -= w * sp * sn;
    }
  }
  return out;
}

// ---------------------------------------------------------------- objective

FeedbackObjective::FeedbackObjective(std::vector<PairTerm> terms, std::vector<TruncatedNormal> prior,
                                     double margin)
    : terms_(std::move(terms)), prior_(std::move(prior)), margin_(margin) {}

FeedbackObjective FeedbackObjective::from_batch(const MetricPosterior& post,
                                                const std::vector<FeedbackPair>& batch,
                                                const std::vector<FeatureVector>& features) {
  validate_batch(batch, features.size());
  std::vector<PairTerm> terms;
  terms.reserve(batch.size());
  for (const auto& raw : batch) {
    const auto p = canonical(raw);
    const Eigen::VectorXd delta = features[p.i].values - features[p.j].values;
    const Eigen::VectorXd proj = *post.basis * delta;
    PairTerm t;
    t.z = proj.array().square();
    t.residual = std::max(delta.squaredNorm() - t.z.sum(), 0.0);
    t.sign = p.label == FeedbackLabel::similar ? 1.0 : -1.0;
    terms.push_back(std::move(t));
  }
  return FeedbackObjective(std::move(terms), post.factors, post.margin);
}

std::pair<double, double> FeedbackObjective::distance_moments(std::size_t pair,
                                                              const std::vector<TruncatedNormal>& q) const {
  const auto& t = terms_.at(pair);
  double m = t.residual;
  double v = 0.0;
  for (Eigen::Index k = 0; k < t.z.size(); ++k) {
    const auto& f = q[static_cast<std::size_t>(k)];
    m += t.z(k) * f.mean();
    v += t.z(k) * t.z(k) * f.variance();
  }
  return {m, v};
}

double FeedbackObjective::value(const std::vector<TruncatedNormal>& q) const {
  if (q.size() != prior_.size()) throw ValidationError("variational factor count mismatch");
  const Eigen::VectorXd mean = means_of(q);
  const Eigen::VectorXd var = variances_of(q);
  double total = 0.0;
  for (const auto& t : terms_) {
    const double md = t.residual + t.z.dot(mean);
    const double vd = t.z.array().square().matrix().dot(var);
    total += logistic_expectations(t.sign * (margin_ - md), vd).log_sig;
  }
  for (std::size_t k = 0; k < q.size(); ++k) {
    const auto& p0 = prior_[k];
    const auto kk = static_cast<Eigen::Index>(k);
    const double s2 = p0.scale * p0.scale;
    const double sq = var(kk) + (mean(kk) - p0.loc) * (mean(kk) - p0.loc);
    total += -sq / (2.0 * s2) - std::log(p0.scale * std::sqrt(2.0 * std::numbers::pi)) - p0.log_mass();
    total += q[k].entropy();
  }
  return total;
}

FeedbackObjective::Maximum FeedbackObjective::maximize(const std::vector<TruncatedNormal>& start,
                                                       int max_iters, double tol) const {
  const std::size_t K = prior_.size();
  std::vector<TruncatedNormal> q = start;
  double current = value(q);
  double step = 1.0;
  int it = 0;
  for (; it < max_iters; ++it) {
    const Eigen::VectorXd mean = means_of(q);
    const Eigen::VectorXd var = variances_of(q);
    Eigen::VectorXd g_mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(K));
    Eigen::VectorXd g_second = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(K));
    for (const auto& t : terms_) {
      const double md = t.residual + t.z.dot(mean);
      const double vd = t.z.array().square().matrix().dot(var);
      const auto e = logistic_expectations(t.sign * (margin_ - md), vd);
      const Eigen::ArrayXd z2 = t.z.array().square();
      g_mean.array() += -t.sign * e.d1 * t.z.array() - e.d2 * z2 * mean.array();
      g_second.array() += 0.5 * e.d2 * z2;
    }

    // Fixed point of the natural parameters, approached by damped steps that
    // must not decrease the objective.
    std::vector<double> prec_target(K), lin_target(K), prec_now(K), lin_now(K);
    for (std::size_t k = 0; k < K; ++k) {
      const auto kk = static_cast<Eigen::Index>(k);
      const double v0 = prior_[k].scale * prior_[k].scale;
      prec_target[k] = 1.0 / v0 - 2.0 * g_second(kk);
      lin_target[k] = prior_[k].loc / v0 + g_mean(kk);
      prec_now[k] = 1.0 / (q[k].scale * q[k].scale);
      lin_now[k] = q[k].loc * prec_now[k];
    }

    bool accepted = false;
    double next_value = current;
    std::vector<TruncatedNormal> candidate(K);
    for (int tries = 0; tries < 60; ++tries) {
      for (std::size_t k = 0; k < K; ++k) {
        const double prec = (1.0 - step) * prec_now[k] + step * prec_target[k];
        const double lin = (1.0 - step) * lin_now[k] + step * lin_target[k];
        candidate[k] = TruncatedNormal{lin / prec, 1.0 / std::sqrt(prec)};
      }
      next_value = value(candidate);
      if (std::isfinite(next_value) && next_value >= current) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    const double change = next_value - current;
    q = candidate;
    current = next_value;
    step = std::min(1.0, step * 2.0);
    if (change <= tol * std::max(1.0, std::abs(current))) {
      ++it;
      break;
    }
  }
  return Maximum{std::move(q), current, it};
}

// ---------------------------------------------------------------- posterior

MetricPosterior init_metric(const std::vector<FeatureVector>& features, int rank, const MetricConfig& config) {
  if (rank < 1) throw ValidationError("metric rank must be >= 1");
  if (features.size() < 2) throw ValidationError("need at least two features");
  if (!(config.prior_variance > 0)) throw ValidationError("prior_variance must be positive");
  const Eigen::MatrixXd F = stack_columns(features);
  const Eigen::Index n = F.rows();
  const Eigen::Index D = F.cols();

  Eigen::MatrixXd centered = F.colwise() - F.rowwise().mean();
  const double scale = std::max(1.0, F.cwiseAbs().maxCoeff());
  if (centered.cwiseAbs().maxCoeff() <= 1e-13 * scale)
    throw ValidationError("degenerate feature set: all feature vectors are identical");

  Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinU);
  const Eigen::VectorXd& sv = svd.singularValues();
  Eigen::Index numeric_rank = 0;
  for (Eigen::Index k = 0; k < sv.size(); ++k)
    if (sv(k) > 1e-9 * sv(0)) ++numeric_rank;

  Eigen::Index K = rank;
  if (K > std::min(n, D) || K > numeric_rank) {
    K = std::min<Eigen::Index>({K, n, D, numeric_rank});
    warn("metric rank " + std::to_string(rank) + " exceeds the rank of the feature set; clipped to " +
         std::to_string(K));
  }

  Eigen::MatrixXd basis = svd.matrixU().leftCols(K).transpose();
  sign_normalize(basis);

  MetricPosterior post;
  post.basis = std::make_shared<const Eigen::MatrixXd>(std::move(basis));
  const auto prior = TruncatedNormal::with_mean(1.0, std::sqrt(config.prior_variance));
  post.factors.assign(static_cast<std::size_t>(K), prior);
  post.initial_factors = post.factors;
  post.weight_mean = Eigen::VectorXd::Ones(K);
  post.weight_variance = Eigen::VectorXd::Constant(K, prior.variance());

  if (config.margin) {
    if (!(*config.margin > 0)) throw ValidationError("margin must be positive");
    post.margin = *config.margin;
  } else {
    const Eigen::MatrixXd euclid = euclidean_sq_distances(F);
    double mu = median_upper_triangle(euclid);
    if (!(mu > 0)) mu = euclid.sum() / static_cast<double>(D * (D - 1));
    post.margin = mu;
  }
  return post;
}

namespace {

MetricPosterior apply_batch(const MetricPosterior& post, const std::vector<FeedbackPair>& batch,
                            const std::vector<FeatureVector>& features, const MetricConfig& config) {
  const auto objective = FeedbackObjective::from_batch(post, batch, features);
  auto best = objective.maximize(post.factors, config.max_iters, config.tol);
  MetricPosterior out = post;
  out.factors = std::move(best.q);
  out.weight_mean = means_of(out.factors);
  out.weight_variance = variances_of(out.factors);
  out.objective = best.value;
  out.last_update_iterations = best.iterations;
  for (const auto& p : batch) out.feedback_log.push_back(canonical(p));
  out.batch_ends.push_back(out.feedback_log.size());
  return out;
}

}  // namespace

MetricPosterior update_metric(const MetricPosterior& posterior, const std::vector<FeedbackPair>& batch,
                              const std::vector<FeatureVector>& features, const MetricConfig& config) {
  validate_batch(batch, features.size());
  if (features.front().values.size() != posterior.basis->cols())
    throw ValidationError("feature length does not match the metric dimension");

  // Later entries win within a batch.
  std::vector<FeedbackPair> cleaned;
  for (const auto& raw : batch) {
    const auto p = canonical(raw);
    auto clash = std::find_if(cleaned.begin(), cleaned.end(),
                              [&](const FeedbackPair& o) { return o.same_pair(p) && o.label != p.label; });
    if (clash != cleaned.end()) {
      warn("contradictory feedback for pair (" + std::to_string(p.i) + ", " + std::to_string(p.j) +
           ") within one batch; keeping the most recent label");
      cleaned.erase(std::remove_if(cleaned.begin(), cleaned.end(),
                                   [&](const FeedbackPair& o) { return o.same_pair(p); }),
                    cleaned.end());
    }
    cleaned.push_back(p);
  }

  // A label that overturns history: drop the older entries and replay.
  std::vector<bool> overturned(posterior.feedback_log.size(), false);
  bool any = false;
  for (std::size_t e = 0; e < posterior.feedback_log.size(); ++e) {
    const auto& old = posterior.feedback_log[e];
    for (const auto& p : cleaned)
      if (old.same_pair(p) && old.label != p.label) {
        overturned[e] = true;
        any = true;
      }
  }
  if (!any) return apply_batch(posterior, cleaned, features, config);

  warn("new feedback contradicts earlier labels; keeping the most recent label and replaying history");
  MetricPosterior replay = posterior;
  replay.factors = posterior.initial_factors;
  replay.weight_mean = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(replay.factors.size()));
  replay.weight_variance = variances_of(replay.factors);
  replay.feedback_log.clear();
  replay.batch_ends.clear();
  replay.objective = 0.0;
  std::size_t begin = 0;
  for (std::size_t end : posterior.batch_ends) {
    std::vector<FeedbackPair> kept;
    for (std::size_t e = begin; e < end; ++e)
      if (!overturned[e]) kept.push_back(posterior.feedback_log[e]);
    if (!kept.empty()) replay = apply_batch(replay, kept, features, config);
    begin = end;
  }
  return apply_batch(replay, cleaned, features, config);
}

std::vector<Metric> sample_metrics(const MetricPosterior& posterior, int count, std::uint64_t seed) {
  if (count < 1) throw ValidationError("sample count must be >= 1");
  std::mt19937_64 rng(seed);
  std::vector<Metric> out;
  out.reserve(static_cast<std::size_t>(count));
  const auto K = static_cast<Eigen::Index>(posterior.factors.size());
  for (int s = 0; s < count; ++s) {
    Eigen::VectorXd w(K);
    for (Eigen::Index k = 0; k < K; ++k) w(k) = posterior.factors[static_cast<std::size_t>(k)].sample(rng);
    out.emplace_back(posterior.basis, std::move(w));
  }
  return out;
}

// ---------------------------------------------------------------- json

nlohmann::json to_json(const MetricPosterior& post) {
  nlohmann::json doc;
  const auto& B = *post.basis;
  doc["rank"] = B.rows();
  doc["dim"] = B.cols();
  nlohmann::json basis = nlohmann::json::array();
  for (Eigen::Index k = 0; k < B.rows(); ++k) {
    std::vector<double> row(static_cast<std::size_t>(B.cols()));
    for (Eigen::Index c = 0; c < B.cols(); ++c) row[static_cast<std::size_t>(c)] = B(k, c);
    basis.push_back(std::move(row));
  }
  doc["basis"] = std::move(basis);
  auto factors = [](const std::vector<TruncatedNormal>& fs) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& f : fs) a.push_back({f.loc, f.scale});
    return a;
  };
  doc["factors"] = factors(post.factors);
  doc["initial_factors"] = factors(post.initial_factors);
  doc["weight_mean"] = std::vector<double>(post.weight_mean.data(), post.weight_mean.data() + post.weight_mean.size());
  doc["weight_variance"] =
      std::vector<double>(post.weight_variance.data(), post.weight_variance.data() + post.weight_variance.size());
  nlohmann::json log = nlohmann::json::array();
  for (const auto& p : post.feedback_log) log.push_back(to_json(p));
  doc["feedback_log"] = std::move(log);
  doc["batch_ends"] = post.batch_ends;
  doc["margin"] = post.margin;
  doc["objective"] = post.objective;
  return doc;
}

MetricPosterior metric_posterior_from_json(const nlohmann::json& doc) {
  MetricPosterior post;
  const auto K = doc.at("rank").get<Eigen::Index>();
  const auto n = doc.at("dim").get<Eigen::Index>();
  Eigen::MatrixXd B(K, n);
  for (Eigen::Index k = 0; k < K; ++k)
    for (Eigen::Index c = 0; c < n; ++c) B(k, c) = doc.at("basis").at(static_cast<std::size_t>(k)).at(static_cast<std::size_t>(c)).get<double>();
  post.basis = std::make_shared<const Eigen::MatrixXd>(std::move(B));
  auto factors = [](const nlohmann::json& a) {
    std::vector<TruncatedNormal> fs;
    for (const auto& f : a) fs.push_back({f.at(0).get<double>(), f.at(1).get<double>()});
    return fs;
  };
  post.factors = factors(doc.at("factors"));
  post.initial_factors = factors(doc.at("initial_factors"));
  const auto wm = doc.at("weight_mean").get<std::vector<double>>();
  const auto wv = doc.at("weight_variance").get<std::vector<double>>();
  post.weight_mean = Eigen::Map<const Eigen::VectorXd>(wm.data(), static_cast<Eigen::Index>(wm.size()));
  post.weight_variance = Eigen::Map<const Eigen::VectorXd>(wv.data(), static_cast<Eigen::Index>(wv.size()));
  for (const auto& rec : doc.at("feedback_log")) post.feedback_log.push_back(feedback_from_json(rec));
  post.batch_ends = doc.at("batch_ends").get<std::vector<std::size_t>>();
  post.margin = doc.at("margin").get<double>();
  post.objective = doc.value("objective", 0.0);
  if (static_cast<Eigen::Index>(post.factors.size()) != K || post.weight_mean.size() != K)
    throw ParseError("metric posterior json is inconsistent");
  return post;
}

}  // namespace priorloom
