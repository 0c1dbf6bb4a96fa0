#include "priorloom/elicitation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>

#include "priorloom/errors.hpp"
#include "priorloom/log.hpp"

namespace priorloom {
namespace {

void reject_unknown(const nlohmann::json& obj, std::initializer_list<const char*> known, const char* where) {
  if (!obj.is_object()) throw ValidationError(std::string(where) + " must be a json object");
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw ValidationError(std::string("unknown key \"") + key + "\" in " + where);
  }
}

template <typename T>
void read_opt(const nlohmann::json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

double layout_cost_under(const SessionState& s) {
  EmbeddingConfig cfg = s.config.embedding;
  cfg.max_iters = 0;
  return optimize_layout_detailed(s.features, s.metric, cfg, s.layout).cost;
}

}  // namespace

void SessionConfig::validate() const {
  embedding.validate();
  if (metric.rank < 1) throw ValidationError("metric rank must be >= 1");
  if (kernel_grid.empty()) throw ValidationError("kernel grid must not be empty");
  for (double g : kernel_grid)
    if (!(g > 0)) throw ValidationError("kernel grid values must be positive");
  if (cv_folds < 2) throw ValidationError("cv_folds must be >= 2");
  hypers.validate();
}

nlohmann::json to_json(const SessionConfig& c) {
  nlohmann::json j;
  j["embedding"] = {{"lambda", c.embedding.lambda},
                    {"perplexity", c.embedding.perplexity},
                    {"max_iters", c.embedding.max_iters},
                    {"learning_rate", c.embedding.learning_rate},
                    {"mc_samples", c.embedding.mc_samples},
                    {"seed", c.embedding.seed},
                    {"unit_lowdim_bandwidth", c.embedding.unit_lowdim_bandwidth},
                    {"tolerance", c.embedding.tolerance}};
  j["metric"] = {{"rank", c.metric.rank},
                 {"prior_variance", c.metric.prior_variance},
                 {"margin", c.metric.margin ? nlohmann::json(*c.metric.margin) : nlohmann::json(nullptr)},
                 {"max_iters", c.metric.max_iters},
                 {"tol", c.metric.tol}};
  j["kernel_grid"] = c.kernel_grid;
  j["cv_folds"] = c.cv_folds;
  j["cv_seed"] = c.cv_seed;
  j["hypers"] = {{"tau_shape", c.hypers.tau_shape},
                 {"tau_rate", c.hypers.tau_rate},
                 {"noise_shape", c.hypers.noise_shape},
                 {"noise_rate", c.hypers.noise_rate},
                 {"pinned", c.hypers.pinned}};
  j["vb"] = {{"tol", c.vb.tol}, {"max_iters", c.vb.max_iters}, {"center", c.vb.center}};
  j["visualize"] = c.visualize;
  return j;
}

SessionConfig session_config_from_json(const nlohmann::json& j) {
  SessionConfig c;
  if (j.is_null()) return c;
  reject_unknown(j, {"embedding", "metric", "kernel_grid", "cv_folds", "cv_seed", "hypers", "vb", "visualize"},
                 "session config");
  try {
    if (j.contains("embedding")) {
      const auto& e = j["embedding"];
      reject_unknown(e, {"lambda", "perplexity", "max_iters", "learning_rate", "mc_samples", "seed",
                         "unit_lowdim_bandwidth", "tolerance"},
                     "embedding config");
      read_opt(e, "lambda", c.embedding.lambda);
      read_opt(e, "perplexity", c.embedding.perplexity);
      read_opt(e, "max_iters", c.embedding.max_iters);
      read_opt(e, "learning_rate", c.embedding.learning_rate);
      read_opt(e, "mc_samples", c.embedding.mc_samples);
      read_opt(e, "seed", c.embedding.seed);
      read_opt(e, "unit_lowdim_bandwidth", c.embedding.unit_lowdim_bandwidth);
      read_opt(e, "tolerance", c.embedding.tolerance);
    }
    if (j.contains("metric")) {
      const auto& m = j["metric"];
      reject_unknown(m, {"rank", "prior_variance", "margin", "max_iters", "tol"}, "metric config");
      read_opt(m, "rank", c.metric.rank);
      read_opt(m, "prior_variance", c.metric.prior_variance);
      if (m.contains("margin") && !m["margin"].is_null()) c.metric.margin = m["margin"].get<double>();
      read_opt(m, "max_iters", c.metric.max_iters);
      read_opt(m, "tol", c.metric.tol);
    }
    read_opt(j, "kernel_grid", c.kernel_grid);
    read_opt(j, "cv_folds", c.cv_folds);
    read_opt(j, "cv_seed", c.cv_seed);
    if (j.contains("hypers")) {
      const auto& h = j["hypers"];
      reject_unknown(h, {"tau_shape", "tau_rate", "noise_shape", "noise_rate", "pinned"}, "hypers config");
      read_opt(h, "tau_shape", c.hypers.tau_shape);
      read_opt(h, "tau_rate", c.hypers.tau_rate);
      read_opt(h, "noise_shape", c.hypers.noise_shape);
      read_opt(h, "noise_rate", c.hypers.noise_rate);
      read_opt(h, "pinned", c.hypers.pinned);
    }
    if (j.contains("vb")) {
      const auto& v = j["vb"];
      reject_unknown(v, {"tol", "max_iters", "center"}, "vb config");
      read_opt(v, "tol", c.vb.tol);
      read_opt(v, "max_iters", c.vb.max_iters);
      read_opt(v, "center", c.vb.center);
    }
    read_opt(j, "visualize", c.visualize);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("bad session config value: ") + e.what());
  }
  c.validate();
  return c;
}

SessionState start_session(const FeatureMatrix& train, const SessionConfig& config) {
  config.validate();
  train.validate();
  if (train.n() == 0 || train.d() < 2) throw ValidationError("training matrix must have rows and >= 2 features");
  SessionState s;
  s.dataset = train;
  s.features = feature_columns(train);
  s.config = config;
  s.metric = init_metric(s.features, config.metric.rank, config.metric);
  s.round = 0;
  if (config.visualize) {
    auto result = optimize_layout_detailed(s.features, s.metric, config.embedding, std::nullopt);
    s.layout = std::move(result.layout);
    s.layout_cost = result.cost;
  } else {
    s.layout.coords = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(train.d()), 2);
    s.layout_cost = std::numeric_limits<double>::quiet_NaN();
  }
  s.layout.iteration = 0;
  return s;
}

SessionState submit_feedback(const SessionState& session, std::vector<FeedbackPair> batch) {
  if (batch.empty()) throw ValidationError("no feedback in batch");
  for (auto& p : batch) {
    p = FeedbackPair::make(p.i, p.j, p.label, session.round);
  }
  SessionState next = session;
  next.metric = update_metric(session.metric, batch, session.features, session.config.metric);
  next.round = session.round + 1;
  RoundSnapshot snap;
  snap.round = next.round;
  snap.feedback_count = next.metric.feedback_log.size();
  snap.weight_mean = next.metric.weight_mean;
  snap.weight_variance = next.metric.weight_variance;
  snap.layout_cost = session.config.visualize ? layout_cost_under(next) : std::numeric_limits<double>::quiet_NaN();
  next.history.push_back(std::move(snap));
  return next;
}

SessionState refresh_visualization(const SessionState& session) {
  if (!session.config.visualize || session.layout.iteration == session.round) return session;
  SessionState next = session;
  auto result = optimize_layout_detailed(session.features, session.metric, session.config.embedding, session.layout);
  next.layout = std::move(result.layout);
  next.layout.iteration = session.round;
  next.layout_cost = result.cost;
  return next;
}

PriorCovariance prior_covariance_from_distances(const Eigen::MatrixXd& sq, double bandwidth) {
  if (!(bandwidth > 0) || !std::isfinite(bandwidth)) throw ValidationError("kernel bandwidth must be positive");
  PriorCovariance p;
  p.kernel_bandwidth = bandwidth;
  const double denom = 2.0 * bandwidth * bandwidth;
  p.C = (-sq.array() / denom).exp().matrix();
  p.C.diagonal().setOnes();
  p.jitter = default_jitter(p.C);
  return p;
}

PriorCovariance build_prior_covariance(const MetricPosterior& metric, const std::vector<FeatureVector>& features,
                                       double kernel_bandwidth) {
  PairwiseGeometry geo(features, *metric.basis);
  return prior_covariance_from_distances(geo.sq_distances(metric.weight_mean), kernel_bandwidth);
}

double median_distance(const Eigen::MatrixXd& sq) {
  std::vector<double> v;
  for (Eigen::Index i = 0; i < sq.rows(); ++i)
    for (Eigen::Index j = i + 1; j < sq.cols(); ++j) v.push_back(std::sqrt(sq(i, j)));
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

double select_kernel_bandwidth(const FeatureMatrix& train, const Eigen::MatrixXd& sq, const std::vector<double>& grid,
                               int folds, std::uint64_t seed, const HyperPriors& hypers, const VbOptions& vb) {
  if (grid.empty()) throw ValidationError("bandwidth grid must not be empty");
  const std::size_t n = train.n();
  if (folds < 2 || static_cast<std::size_t>(folds) > n)
    throw ValidationError("folds must satisfy 2 <= folds <= n");
  std::vector<double> values(grid.begin(), grid.end());
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());

  const auto perm = seeded_permutation(n, seed);
  std::vector<std::vector<std::size_t>> fold_rows(static_cast<std::size_t>(folds));
  for (std::size_t pos = 0; pos < n; ++pos) fold_rows[pos % static_cast<std::size_t>(folds)].push_back(perm[pos]);
  for (auto& f : fold_rows) std::sort(f.begin(), f.end());

  double best = std::numeric_limits<double>::quiet_NaN();
  double best_score = std::numeric_limits<double>::infinity();
  for (double sigma : values) {
    PriorCovariance prior;
    try {
      prior = prior_covariance_from_distances(sq, sigma);
    } catch (const ValidationError&) {
      warn("skipping kernel bandwidth " + std::to_string(sigma));
      continue;
    }
    double total = 0.0;
    bool failed = false;
    for (int f = 0; f < folds && !failed; ++f) {
      std::vector<std::size_t> fit_rows;
      for (int g = 0; g < folds; ++g)
        if (g != f) fit_rows.insert(fit_rows.end(), fold_rows[static_cast<std::size_t>(g)].begin(),
                                    fold_rows[static_cast<std::size_t>(g)].end());
      std::sort(fit_rows.begin(), fit_rows.end());
      const auto fit_part = train.rows(fit_rows);
      const auto val_part = train.rows(fold_rows[static_cast<std::size_t>(f)]);
      try {
        const auto post = fit_vb(fit_part.X, fit_part.y, prior, hypers, vb);
        total += mse(predict(post, val_part.X), val_part.y);
      } catch (const NumericalError& e) {
        warn("skipping kernel bandwidth " + std::to_string(sigma) + ": " + e.what());
        failed = true;
      }
    }
    if (failed) continue;
    const double score = total / folds;
    if (score < best_score) {
      best_score = score;
      best = sigma;
    }
  }
  if (std::isnan(best)) throw NumericalError("every kernel bandwidth candidate failed");
  return best;
}

double select_kernel_bandwidth(const FeatureMatrix& train, const MetricPosterior& metric,
                               const std::vector<double>& grid, int folds, std::uint64_t seed,
                               const HyperPriors& hypers, const VbOptions& vb) {
  PairwiseGeometry geo(feature_columns(train), *metric.basis);
  return select_kernel_bandwidth(train, geo.sq_distances(metric.weight_mean), grid, folds, seed, hypers, vb);
}

FitResult fit_with_distances(const FeatureMatrix& train, const FeatureMatrix& test, const Eigen::MatrixXd& sq,
                             const SessionConfig& config) {
  const double base = median_distance(sq);
  if (!(base > 0)) throw NumericalError("median feature distance is zero; cannot scale the kernel grid");
  std::vector<double> grid;
  for (double g : config.kernel_grid) grid.push_back(g * base);

  FitResult r;
  r.kernel_bandwidth =
      grid.size() == 1 ? grid.front()
                       : select_kernel_bandwidth(train, sq, grid, config.cv_folds, config.cv_seed, config.hypers,
                                                 config.vb);
  const auto prior = prior_covariance_from_distances(sq, r.kernel_bandwidth);
  r.posterior = fit_vb(train.X, train.y, prior, config.hypers, config.vb);
  r.predictions = predict(r.posterior, test.X);
  r.test_mse = mse(r.predictions, test.y);
  return r;
}

FitResult finalize_and_fit(const SessionState& session, const FeatureMatrix& test) {
  PairwiseGeometry geo(session.features, *session.metric.basis);
  return fit_with_distances(session.dataset, test, geo.sq_distances(session.metric.weight_mean), session.config);
}

FitResult fit_unit_prior(const FeatureMatrix& train, const FeatureMatrix& test, const SessionConfig& config) {
  FitResult r;
  r.posterior = fit_vb(train.X, train.y, PriorCovariance::identity(static_cast<Eigen::Index>(train.d())),
                       config.hypers, config.vb);
  r.predictions = predict(r.posterior, test.X);
  r.test_mse = mse(r.predictions, test.y);
  return r;
}

FitResult fit_without_feedback(const FeatureMatrix& train, const FeatureMatrix& test, const SessionConfig& config) {
  return fit_with_distances(train, test, euclidean_sq_distances(train.X), config);
}

void export_snapshot(const SessionState& session, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto write = [&](const char* name, const std::string& body) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
    out << body;
  };
  write("layout.jsonl", layout_to_jsonl(session.layout, session.dataset.feature_names));
  write("feedback.jsonl", feedback_to_jsonl(session.metric.feedback_log));
  nlohmann::json cfg = to_json(session.config);
  cfg["round"] = session.round;
  cfg["layout_round"] = session.layout.iteration;
  write("config.json", cfg.dump(2) + "\n");
  write("metric.json", to_json(session.metric).dump() + "\n");
}

}  // namespace priorloom
