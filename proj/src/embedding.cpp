#include "priorloom/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <json.hpp>

#include "priorloom/errors.hpp"
#include "priorloom/log.hpp"

namespace priorloom {
namespace {

constexpr int kMaxBisection = 200;
constexpr double kEntropyTol = 1e-5;

// Entropy (bits) of row i of exp(-d / s) normalized over j != i.
double entropy_bits(const Eigen::MatrixXd& dist, Eigen::Index i, double s) {
  const Eigen::Index D = dist.rows();
  double dmin = std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < D; ++j)
    if (j != i) dmin = std::min(dmin, dist(i, j));
  double z = 0.0, acc = 0.0;
  for (Eigen::Index j = 0; j < D; ++j) {
    if (j == i) continue;
    const double e = (dist(i, j) - dmin) / s;
    const double w = std::exp(-e);
    z += w;
    acc += w * e;
  }
  return (std::log(z) + acc / z) / std::log(2.0);
}

}  // namespace

void EmbeddingConfig::validate() const {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ValidationError("lambda must lie in [0, 1]");
  if (!(perplexity > 1.0)) throw ValidationError("perplexity must exceed 1");
  if (max_iters < 0) throw ValidationError("max_iters must be >= 0");
  if (!(learning_rate > 0)) throw ValidationError("learning_rate must be positive");
  if (mc_samples < 0) throw ValidationError("mc_samples must be >= 0");
}

Eigen::VectorXd compute_bandwidths(const Eigen::MatrixXd& dist, double perplexity) {
  const Eigen::Index D = dist.rows();
  if (!(perplexity > 1.0 && perplexity < static_cast<double>(D)))
    throw ValidationError("perplexity must satisfy 1 < perplexity < D (D=" + std::to_string(D) + ")");
  const double target = std::log2(perplexity);
  Eigen::VectorXd out(D);
  for (Eigen::Index i = 0; i < D; ++i) {
    double dmax = 0.0, dsum = 0.0;
    for (Eigen::Index j = 0; j < D; ++j)
      if (j != i) {
        dmax = std::max(dmax, dist(i, j));
        dsum += dist(i, j);
      }
    if (dmax <= 0.0) {
      warn("all distances from feature " + std::to_string(i) + " are zero; using bandwidth 1");
      out(i) = 1.0;
      continue;
    }
    // Entropy grows with s; bracket in log space, then bisect.
    double s = dsum / static_cast<double>(D - 1);
    double lo = 0.0, hi = 0.0;
    double h = entropy_bits(dist, i, s);
    int steps = 0;
    while (std::abs(h - target) > kEntropyTol && steps < kMaxBisection) {
      if (h > target) {
        hi = s;
        s = lo > 0 ? std::sqrt(lo * hi) : s * 0.5;
      } else {
        lo = s;
        s = hi > 0 ? std::sqrt(lo * hi) : s * 2.0;
      }
      h = entropy_bits(dist, i, s);
      ++steps;
    }
    if (std::abs(h - target) > kEntropyTol)
      warn("bandwidth search for feature " + std::to_string(i) + " stopped " + std::to_string(h - target) +
           " bits from the target entropy");
    out(i) = s;
  }
  return out;
}

Eigen::VectorXd compute_bandwidths(const std::vector<FeatureVector>& features, const MetricPosterior& metric,
                                   double perplexity) {
  PairwiseGeometry geo(features, *metric.basis);
  return compute_bandwidths(geo.sq_distances(metric.weight_mean), perplexity);
}

AffinityMatrix affinities_from_distances(const Eigen::MatrixXd& dist, const Eigen::VectorXd& bw) {
  const Eigen::Index D = dist.rows();
  if (bw.size() != D) throw ValidationError("bandwidth count does not match feature count");
  if ((bw.array() <= 0.0).any()) throw ValidationError("bandwidths must be positive");
  AffinityMatrix a;
  a.bandwidths = bw;
  a.probs = Eigen::MatrixXd::Zero(D, D);
  for (Eigen::Index i = 0; i < D; ++i) {
    double dmin = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < D; ++j)
      if (j != i) dmin = std::min(dmin, dist(i, j));
    double z = 0.0;
    for (Eigen::Index j = 0; j < D; ++j) {
      if (j == i) continue;
      const double w = std::exp(-(dist(i, j) - dmin) / bw(i));
      a.probs(i, j) = w;
      z += w;
    }
    a.probs.row(i) /= z;
  }
  return a;
}

AffinityMatrix high_dim_affinities(const std::vector<FeatureVector>& features, const Metric& metric,
                                   const Eigen::VectorXd& bandwidths) {
  PairwiseGeometry geo(features, metric.basis());
  return affinities_from_distances(geo.sq_distances(metric), bandwidths);
}

AffinityMatrix low_dim_affinities(const Layout& layout, const Eigen::VectorXd& bandwidths) {
  return affinities_from_distances(euclidean_sq_distances(layout.coords.transpose()), bandwidths);
}

double row_entropy_bits(const AffinityMatrix& a, Eigen::Index row) {
  double h = 0.0;
  for (Eigen::Index j = 0; j < a.probs.cols(); ++j) {
    const double p = a.probs(row, j);
    if (p > 0) h -= p * std::log2(p);
  }
  return h;
}

double cost(const std::vector<AffinityMatrix>& ps, const AffinityMatrix& q, double lambda, bool* clamped) {
  if (ps.empty()) throw ValidationError("cost needs at least one P sample");
  const Eigen::Index D = q.probs.rows();
  bool floor_hit = false;
  double total = 0.0;
  for (const auto& p : ps) {
    if (p.probs.rows() != D || p.probs.cols() != q.probs.cols())
      throw ValidationError("affinity matrices differ in shape");
    double forward = 0.0, reverse = 0.0;
    for (Eigen::Index i = 0; i < D; ++i)
      for (Eigen::Index j = 0; j < D; ++j) {
        if (i == j) continue;
        const double pv = p.probs(i, j), qv = q.probs(i, j);
        const double lp = std::log(std::max(pv, kAffinityFloor));
        const double lq = std::log(std::max(qv, kAffinityFloor));
        if ((pv > 0 && qv < kAffinityFloor) || (qv > 0 && pv < kAffinityFloor)) floor_hit = true;
        forward += pv * (lp - lq);
        reverse += qv * (lq - lp);
      }
    total += (lambda * forward + (1.0 - lambda) * reverse) / static_cast<double>(D);
  }
  if (clamped) *clamped = floor_hit;
  return total / static_cast<double>(ps.size());
}

Eigen::MatrixXd cost_gradient(const std::vector<AffinityMatrix>& ps, const Layout& layout,
                              const Eigen::VectorXd& bandwidths, double lambda) {
  if (ps.empty()) throw ValidationError("cost needs at least one P sample");
  const AffinityMatrix q = low_dim_affinities(layout, bandwidths);
  const Eigen::Index D = q.probs.rows();
  const double S = static_cast<double>(ps.size());
  const double inv_d = 1.0 / static_cast<double>(D);

  // c_ij = d cost / d q_ij (averaged over samples), then through the softmax.
  Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(D, 2);
  Eigen::VectorXd c(D);
  for (Eigen::Index i = 0; i < D; ++i) {
    c.setZero();
    for (Eigen::Index j = 0; j < D; ++j) {
      if (j == i) continue;
      const double qv = q.probs(i, j);
      const bool live = qv > kAffinityFloor;
      const double lq = std::log(std::max(qv, kAffinityFloor));
      double acc = 0.0;
      for (const auto& p : ps) {
        const double pv = p.probs(i, j);
        const double lp = std::log(std::max(pv, kAffinityFloor));
        const double fwd = live ? -pv / qv : 0.0;
        const double rev = lq - lp + (live ? 1.0 : 0.0);
        acc += lambda * fwd + (1.0 - lambda) * rev;
      }
      c(j) = acc * inv_d / S;
    }
    double mean_c = 0.0;
    for (Eigen::Index j = 0; j < D; ++j)
      if (j != i) mean_c += c(j) * q.probs(i, j);
    for (Eigen::Index l = 0; l < D; ++l) {
      if (l == i) continue;
      const double w = q.probs(i, l) * (c(l) - mean_c);  // d cost / d logit_il
      const double scale = 2.0 * w / bandwidths(i);
      const double dx = layout.coords(i, 0) - layout.coords(l, 0);
      const double dy = layout.coords(i, 1) - layout.coords(l, 1);
      grad(i, 0) -= scale * dx;
      grad(i, 1) -= scale * dy;
      grad(l, 0) += scale * dx;
      grad(l, 1) += scale * dy;
    }
  }
  return grad;
}

Layout pca_layout(const std::vector<FeatureVector>& features) {
  const Eigen::MatrixXd F = stack_columns(features);
  const Eigen::MatrixXd centered = F.colwise() - F.rowwise().mean();
  Layout layout;
  layout.coords = Eigen::MatrixXd::Zero(F.cols(), 2);
  if (centered.cwiseAbs().maxCoeff() == 0.0) return layout;
  Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinU);
  const Eigen::Index k = std::min<Eigen::Index>(2, svd.matrixU().cols());
  for (Eigen::Index c = 0; c < k; ++c) {
    Eigen::VectorXd dir = svd.matrixU().col(c);
    Eigen::Index arg = 0;
    dir.cwiseAbs().maxCoeff(&arg);
    if (dir(arg) < 0) dir = -dir;
    layout.coords.col(c) = centered.transpose() * dir;
  }
  return layout;
}

LayoutResult optimize_layout_detailed(const std::vector<FeatureVector>& features, const MetricPosterior& posterior,
                                      const EmbeddingConfig& config, const std::optional<Layout>& init) {
  config.validate();
  const Eigen::MatrixXd F = stack_columns(features);
  PairwiseGeometry geo(F, *posterior.basis);
  const Eigen::MatrixXd mean_dist = geo.sq_distances(posterior.weight_mean);
  const Eigen::VectorXd bw = compute_bandwidths(mean_dist, config.perplexity);

  std::vector<AffinityMatrix> ps;
  if (config.mc_samples == 0) {
    ps.push_back(affinities_from_distances(mean_dist, bw));
  } else {
    for (const auto& m : sample_metrics(posterior, config.mc_samples, config.seed))
      ps.push_back(affinities_from_distances(geo.sq_distances(m), bw));
  }
  const Eigen::VectorXd low_bw =
      config.unit_lowdim_bandwidth ? Eigen::VectorXd::Ones(bw.size()).eval() : bw;

  LayoutResult result;
  result.bandwidths = bw;
  result.layout = init ? *init : pca_layout(features);
  if (result.layout.coords.rows() != F.cols() || result.layout.coords.cols() != 2)
    throw ValidationError("initial layout has the wrong shape");

  auto evaluate = [&](const Layout& l) {
    const double c = cost(ps, low_dim_affinities(l, low_bw), config.lambda);
    if (!std::isfinite(c)) throw NumericalError("layout cost became non-finite");
    return c;
  };

  double current = evaluate(result.layout);
  result.cost_trace.push_back(current);
  double step = config.learning_rate * static_cast<double>(F.cols()) * low_bw.mean();
  Layout candidate = result.layout;
  for (int it = 0; it < config.max_iters; ++it) {
    const Eigen::MatrixXd g = cost_gradient(ps, result.layout, low_bw, config.lambda);
    if (!g.allFinite()) throw NumericalError("layout gradient became non-finite");
    if (g.cwiseAbs().maxCoeff() == 0.0) break;
    candidate.coords = result.layout.coords - step * g;
    const double next = evaluate(candidate);
    if (next <= current) {
      const double rel = (current - next) / std::max(current, 1e-300);
      result.layout.coords = candidate.coords;
      current = next;
      result.cost_trace.push_back(current);
      ++result.accepted_steps;
      step *= 1.1;
      if (rel < config.tolerance) break;
    } else {
      step *= 0.5;
      if (step < 1e-300) break;
    }
  }
  result.cost = current;
  return result;
}

Layout optimize_layout(const std::vector<FeatureVector>& features, const MetricPosterior& posterior,
                       const EmbeddingConfig& config, const std::optional<Layout>& init) {
  return optimize_layout_detailed(features, posterior, config, init).layout;
}

std::string layout_to_jsonl(const Layout& layout, const std::vector<std::string>& names) {
  std::string out;
  for (Eigen::Index i = 0; i < layout.coords.rows(); ++i) {
    nlohmann::json rec{{"index", i},
                       {"name", static_cast<std::size_t>(i) < names.size() ? names[static_cast<std::size_t>(i)]
                                                                           : std::to_string(i)},
                       {"x", layout.coords(i, 0)},
                       {"y", layout.coords(i, 1)}};
    out += rec.dump() + "\n";
  }
  return out;
}

Layout layout_from_jsonl(const std::string& text) {
  std::vector<std::pair<std::size_t, std::pair<double, double>>> rows;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    const std::string line = text.substr(start, end - start);
    start = end + 1;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto rec = nlohmann::json::parse(line);
    rows.push_back({rec.at("index").get<std::size_t>(), {rec.at("x").get<double>(), rec.at("y").get<double>()}});
  }
  Layout layout;
  layout.coords = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows.size()), 2);
  for (const auto& [idx, xy] : rows) {
    if (idx >= rows.size()) throw ParseError("layout index out of range");
    layout.coords(static_cast<Eigen::Index>(idx), 0) = xy.first;
    layout.coords(static_cast<Eigen::Index>(idx), 1) = xy.second;
  }
  return layout;
}

}  // namespace priorloom
