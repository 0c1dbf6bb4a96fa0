// Acceptance suite: one PASS/FAIL line per criterion. Arguments, when given,
// select criteria whose name contains any of them.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "priorloom/elicitation.hpp"
#include "priorloom/embedding.hpp"
#include "priorloom/errors.hpp"
#include "priorloom/experiments.hpp"
#include "priorloom/linreg.hpp"
#include "priorloom/log.hpp"
#include "priorloom/metric.hpp"

using namespace priorloom;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

Eigen::MatrixXd gaussian(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = n(rng);
  return m;
}

std::vector<FeatureVector> random_features(Eigen::Index n, Eigen::Index d, std::mt19937_64& rng) {
  const Eigen::MatrixXd F = gaussian(n, d, rng);
  std::vector<FeatureVector> out;
  for (Eigen::Index j = 0; j < d; ++j) out.push_back({F.col(j), "f" + std::to_string(j), std::size_t(j)});
  return out;
}

PriorCovariance random_kernel_prior(Eigen::Index d, std::mt19937_64& rng) {
  const Eigen::MatrixXd pts = gaussian(3, d, rng);
  const Eigen::MatrixXd sq = euclidean_sq_distances(pts);
  std::uniform_real_distribution<double> u(0.3, 3.0);
  return prior_covariance_from_distances(sq, u(rng) * median_distance(sq));
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// Average ranks, ties shared.
std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = 0.5 * static_cast<double>(i + j) + 1.0;
    i = j + 1;
  }
  return r;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  const auto ra = ranks(a), rb = ranks(b);
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / ra.size();
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / rb.size();
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

const ResultCurve& find_curve(const std::vector<ResultCurve>& cs, Baseline b) {
  for (const auto& c : cs)
    if (c.label == to_string(b)) return c;
  throw std::runtime_error("missing curve " + to_string(b));
}

// The synthetic family shared by both trend criteria: n=100 (sequential),
// D=200, two planted 30-feature clusters, 10 user constructions.
ExperimentConfig trend_config() {
  ExperimentConfig cfg;
  cfg.synthetic = SyntheticSpec{};
  cfg.rounds = 20;
  cfg.per_round_similar = 10;
  cfg.per_round_dissimilar = 10;
  cfg.user_constructions = 10;
  cfg.data_selections = 1;
  cfg.cluster_k = 30;
  cfg.seed = 1;
  return cfg;
}

Outcome ridge_oracle() {
  std::mt19937_64 rng(11);
  const Eigen::MatrixXd X = gaussian(20, 50, rng);
  const Eigen::VectorXd y = gaussian(20, 1, rng).col(0);
  const auto prior = random_kernel_prior(50, rng);
  VbOptions opt;
  opt.center = false;
  const auto t0 = Clock::now();
  const auto post = fit_vb(X, y, prior, HyperPriors::pinned_at(1.0, 1.0), opt);
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  // Closed form with the jitter that fit_vb adds to C.
  const Eigen::MatrixXd Cj = prior.C + prior.jitter * Eigen::MatrixXd::Identity(50, 50);
  const Eigen::MatrixXd M = X.transpose() * X + Cj.fullPivLu().inverse();
  const Eigen::VectorXd ridge = M.fullPivLu().solve(X.transpose() * y);
  const double rel = (post.beta_mean - ridge).norm() / ridge.norm();
  return {rel <= 1e-6 && secs < 1.0, fmt("relative error %.3g", rel) + fmt(", fit %.3g s", secs)};
}

Outcome elbo_monotone() {
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<int> nd(10, 60), dd(5, 80);
  int bad = 0;
  std::size_t steps = 0;
  for (int t = 0; t < 50; ++t) {
    const int n = nd(rng), d = dd(rng);
    const Eigen::MatrixXd X = gaussian(n, d, rng);
    const Eigen::VectorXd beta = gaussian(d, 1, rng).col(0);
    const Eigen::VectorXd y = X * beta + gaussian(n, 1, rng).col(0) * (1.0 + t % 5);
    HyperPriors h;
    if (t % 3 == 1) h = HyperPriors{2.0, 1.0, 2.0, 3.0, false};
    RegressionPosterior post;
    try {
      post = fit_vb(X, y, random_kernel_prior(d, rng), h);
    } catch (const NumericalError&) {
      ++bad;  // fit_vb throws on a decrease
      continue;
    }
    for (std::size_t i = 1; i < post.elbo_trace.size(); ++i, ++steps) {
      if (post.elbo_trace[i] < post.elbo_trace[i - 1] - 1e-8) {
        ++bad;
        break;
      }
    }
  }
  return {bad == 0, std::to_string(bad) + " of 50 fits decreased, " + std::to_string(steps) + " steps checked"};
}

Outcome gradient_check() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(13);
  double worst = 0;
  for (int inst = 0; inst < 5; ++inst)
    for (double lambda : {0.0, 0.5, 1.0}) {
      const auto f = random_features(6, 8, rng);
      auto post = init_metric(f, 4);
      post = update_metric(post, {FeedbackPair::make(0, 1, FeedbackLabel::similar),
                                  FeedbackPair::make(2, 5, FeedbackLabel::dissimilar)}, f);
      const auto bw = compute_bandwidths(f, post, 3.0);
      std::vector<AffinityMatrix> ps;
      for (const auto& m : sample_metrics(post, 3, static_cast<std::uint64_t>(inst)))
        ps.push_back(high_dim_affinities(f, m, bw));
      Layout l;
      l.coords = gaussian(8, 2, rng) * std::sqrt(bw.mean());
      const Eigen::MatrixXd g = cost_gradient(ps, l, bw, lambda);
      const double h = 1e-5;
      for (Eigen::Index i = 0; i < 8; ++i)
        for (Eigen::Index c = 0; c < 2; ++c) {
          Layout a = l, b = l;
          a.coords(i, c) += h;
          b.coords(i, c) -= h;
          const double fd =
              (cost(ps, low_dim_affinities(a, bw), lambda) - cost(ps, low_dim_affinities(b, bw), lambda)) / (2 * h);
          const double denom = std::max({std::abs(fd), std::abs(g(i, c)), 1e-300});
          worst = std::max(worst, std::abs(g(i, c) - fd) / denom);
        }
    }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  return {worst < 1e-4 && secs < 10.0, fmt("max relative entry error %.3g", worst) + fmt(", %.3g s", secs)};
}

Outcome affinity_structure() {
  std::mt19937_64 rng(14);
  double row_err = 0, asym = 0, diag = 0, min_eig = 1e300;
  for (int t = 0; t < 20; ++t) {
    const auto f = random_features(8, 25, rng);
    auto post = init_metric(f, 6);
    post = update_metric(post, {FeedbackPair::make(0, 1 + t % 20, FeedbackLabel::similar),
                                FeedbackPair::make(3, 4, FeedbackLabel::dissimilar)}, f);
    const auto bw = compute_bandwidths(f, post, 5.0);
    for (const auto& m : sample_metrics(post, 3, static_cast<std::uint64_t>(t))) {
      const auto p = high_dim_affinities(f, m, bw);
      row_err = std::max(row_err, (p.probs.rowwise().sum().array() - 1.0).abs().maxCoeff());
    }
    Layout l;
    l.coords = gaussian(25, 2, rng);
    const auto q = low_dim_affinities(l, bw);
    row_err = std::max(row_err, (q.probs.rowwise().sum().array() - 1.0).abs().maxCoeff());

    const PairwiseGeometry geo(f, *post.basis);
    const Eigen::MatrixXd sq = geo.sq_distances(post.weight_mean);
    std::uniform_real_distribution<double> u(0.25, 4.0);
    const auto prior = prior_covariance_from_distances(sq, u(rng) * median_distance(sq));
    asym = std::max(asym, (prior.C - prior.C.transpose()).cwiseAbs().maxCoeff());
    diag = std::max(diag, (prior.C.diagonal().array() - 1.0).abs().maxCoeff());
    min_eig = std::min(min_eig, Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(prior.C).eigenvalues().minCoeff());
  }
  const bool ok = row_err <= 1e-10 && asym == 0.0 && diag == 0.0 && min_eig >= -1e-8;
  return {ok, fmt("max row-sum error %.3g", row_err) + fmt(", asymmetry %.3g", asym) +
                  fmt(", diagonal error %.3g", diag) + fmt(", min eigenvalue %.3g", min_eig)};
}

Outcome sequential_trend() {
  const auto t0 = Clock::now();
  auto cfg = trend_config();
  cfg.training_sizes = {100};
  cfg.baselines = {Baseline::without_feedback, Baseline::with_feedback};
  const auto curves = run_sequential_experiment(cfg);
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  const auto& fb = find_curve(curves, Baseline::with_feedback);
  const double r0 = fb.mean_mse.front(), r20 = fb.mean_mse.back();
  const double gain = 1.0 - r20 / r0;
  std::vector<double> rounds(fb.x.size());
  std::iota(rounds.begin(), rounds.end(), 0.0);
  const double rho = spearman(rounds, fb.mean_mse);
  const bool ok = fb.x.size() == 21 && gain >= 0.05 && rho < 0 && secs < 600;
  return {ok, fmt("round0 %.4g", r0) + fmt(", round20 %.4g", r20) + fmt(", gain %.2f%%", 100 * gain) +
                  fmt(", spearman %.3f", rho) + fmt(", %.0f s", secs)};
}

Outcome batch_trend() {
  const auto t0 = Clock::now();
  auto cfg = trend_config();
  cfg.training_sizes = {50, 100, 200};
  cfg.baselines = {Baseline::unit_prior, Baseline::with_feedback};
  const auto curves = run_batch_experiment(cfg);
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  const auto& unit = find_curve(curves, Baseline::unit_prior);
  const auto& fb = find_curve(curves, Baseline::with_feedback);
  bool ok = secs < 900;
  std::string detail;
  for (std::size_t i = 0; i < unit.x.size(); ++i) {
    ok = ok && fb.mean_mse[i] <= unit.mean_mse[i];
    detail += fmt("n=%.0f: ", unit.x[i]) + fmt("feedback %.4g", fb.mean_mse[i]) + fmt(" vs unit %.4g; ", unit.mean_mse[i]);
  }
  return {ok, detail + fmt("%.0f s", secs)};
}

Outcome round_zero_identity() {
  int mismatches = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto data = generate_synthetic(SyntheticSpec{}, 100 + seed).matrix;
    const auto parts = split(data, 100, seed);
    SessionConfig cfg;
    cfg.visualize = false;
    cfg.cv_seed = seed;
    const auto session = start_session(parts.train, cfg);
    const auto a = finalize_and_fit(session, parts.test);
    const auto b = fit_without_feedback(parts.train, parts.test, cfg);
    if (!(a.predictions.size() == b.predictions.size() &&
          std::memcmp(a.predictions.data(), b.predictions.data(), sizeof(double) * a.predictions.size()) == 0))
      ++mismatches;
  }
  return {mismatches == 0, std::to_string(mismatches) + " of 5 splits differ bitwise"};
}

Outcome permutation_correctness() {
  const std::vector<double> lo(5, 0.0), hi(5, 10.0);
  const int perms = 100000;
  const double exact = 2.0 / 252.0;
  const double p = permutation_test(lo, hi, perms, 7);
  const double se = std::sqrt(exact * (1 - exact) / perms);
  const bool exact_ok = std::abs(p - exact) <= 4 * se;

  std::mt19937_64 rng(15);
  int rejections = 0;
  for (int t = 0; t < 200; ++t) {
    const Eigen::MatrixXd a = gaussian(10, 1, rng), b = gaussian(10, 1, rng);
    const std::vector<double> ga(a.data(), a.data() + 10), gb(b.data(), b.data() + 10);
    if (permutation_test(ga, gb, 2000, static_cast<std::uint64_t>(t)) < 0.05) ++rejections;
  }
  const double frac = rejections / 200.0;
  const bool null_ok = frac >= 0.01 && frac <= 0.12;
  return {exact_ok && null_ok, fmt("p %.5f", p) + fmt(" vs exact %.5f", exact) + fmt(" (4 se = %.5f)", 4 * se) +
                                   fmt(", null rejection rate %.3f", frac)};
}

Outcome metric_responsiveness() {
  std::mt19937_64 rng(16);
  int failures = 0;
  for (int t = 0; t < 20; ++t) {
    const auto f = random_features(30, 40, rng);
    const auto post = init_metric(f, 20);
    const PairwiseGeometry geo(f, *post.basis);
    const Eigen::MatrixXd d0 = geo.sq_distances(post.weight_mean);
    Eigen::MatrixXd masked = d0;
    masked.diagonal().setConstant(std::numeric_limits<double>::infinity());
    Eigen::Index fi, fj, ni, nj;
    d0.maxCoeff(&fi, &fj);
    masked.minCoeff(&ni, &nj);

    const auto sim = update_metric(post, {FeedbackPair::make(fi, fj, FeedbackLabel::similar)}, f);
    if (!(geo.sq_distances(sim.weight_mean)(fi, fj) < d0(fi, fj))) ++failures;
    const auto dis = update_metric(post, {FeedbackPair::make(ni, nj, FeedbackLabel::dissimilar)}, f);
    if (!(geo.sq_distances(dis.weight_mean)(ni, nj) > d0(ni, nj))) ++failures;
  }
  return {failures == 0, std::to_string(failures) + " of 40 updates moved the wrong way"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"ridge_oracle_equivalence", ridge_oracle},
      {"elbo_monotonicity", elbo_monotone},
      {"embedding_gradient_finite_differences", gradient_check},
      {"affinity_covariance_structure", affinity_structure},
      {"round_zero_identity", round_zero_identity},
      {"permutation_test_correctness", permutation_correctness},
      {"metric_responsiveness", metric_responsiveness},
      {"sequential_feedback_trend", sequential_trend},
      {"batch_feedback_trend", batch_trend},
  };
  // Warnings from the library go to stderr; keep stdout to one line per criterion.
  int failed = 0, ran = 0;
  for (const auto& [name, run] : criteria) {
    bool selected = argc < 2;
    for (int a = 1; a < argc; ++a) selected = selected || name.find(argv[a]) != std::string::npos;
    if (!selected) continue;
    ++ran;
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %d criteria passed\n", ran - failed, ran);
  return failed == 0 ? 0 : 1;
}
