#include "priorloom/linreg.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <boost/math/special_functions/digamma.hpp>

#include "binary_io.hpp"
#include "priorloom/errors.hpp"

namespace priorloom {
namespace {

constexpr std::uint32_t kPosteriorVersion = 1;
const double kLog2Pi = std::log(2.0 * std::numbers::pi);

struct GammaMoments {
  double mean;
  double log_mean;
  double entropy;
};

GammaMoments gamma_moments(double shape, double rate) {
  return {shape / rate, boost::math::digamma(shape) - std::log(rate),
          shape - std::log(rate) + std::lgamma(shape) + (1.0 - shape) * boost::math::digamma(shape)};
}

double gamma_log_prior(double shape, double rate, const GammaMoments& m) {
  return shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * m.log_mean - rate * m.mean;
}

}  // namespace

PriorCovariance PriorCovariance::identity(Eigen::Index d) {
  PriorCovariance p;
  p.C = Eigen::MatrixXd::Identity(d, d);
  p.jitter = default_jitter(p.C);
  return p;
}

double default_jitter(const Eigen::MatrixXd& C) {
  if (C.rows() == 0) return 0.0;
  return 1e-8 * C.trace() / static_cast<double>(C.rows());
}

HyperPriors HyperPriors::pinned_at(double tau2, double noise2) {
  if (!(tau2 > 0) || !(noise2 > 0)) throw ValidationError("pinned scales must be positive");
  HyperPriors h;
  h.tau_shape = 1.0;
  h.tau_rate = tau2;
  h.noise_shape = 1.0;
  h.noise_rate = noise2;
  h.pinned = true;
  return h;
}

void HyperPriors::validate() const {
  if (!(tau_shape > 0 && tau_rate > 0 && noise_shape > 0 && noise_rate > 0))
    throw ValidationError("gamma hyperprior parameters must be positive");
}

RegressionPosterior fit_vb(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const PriorCovariance& prior,
                           const HyperPriors& hypers, const VbOptions& options) {
  hypers.validate();
  const Eigen::Index n = X.rows();
  const Eigen::Index D = X.cols();
  if (n < 1) throw ValidationError("fit_vb needs at least one sample");
  if (y.size() != n) throw ValidationError("X and y row counts differ");
  if (prior.C.rows() != D || prior.C.cols() != D) throw ValidationError("prior covariance does not match D");
  if (prior.jitter < 0) throw ValidationError("jitter must be nonnegative");

  Eigen::RowVectorXd x_mean = Eigen::RowVectorXd::Zero(D);
  double y_mean = 0.0;
  if (options.center) {
    x_mean = X.colwise().mean();
    y_mean = y.mean();
  }
  const Eigen::MatrixXd Xc = X.rowwise() - x_mean;
  const Eigen::VectorXd yc = y.array() - y_mean;

  Eigen::MatrixXd Cj = prior.C;
  Cj.diagonal().array() += prior.jitter;
  Eigen::LLT<Eigen::MatrixXd> llt(Cj);
  if (llt.info() != Eigen::Success) {
    std::ostringstream msg;
    msg << "prior covariance is not positive definite with jitter " << prior.jitter << "; raise the jitter";
    throw NumericalError(msg.str());
  }
  const Eigen::MatrixXd L = llt.matrixL();

  // Whitened design: beta = L alpha, alpha ~ N(0, (omega rho)^-1 I).
  const Eigen::MatrixXd Xw = Xc * L;
  Eigen::BDCSVD<Eigen::MatrixXd> svd(Xw, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd s = svd.singularValues();
  const Eigen::ArrayXd e = s.array().square();
  const Eigen::VectorXd b = svd.matrixU().transpose() * yc;
  const double yy = yc.squaredNorm();
  const double r = static_cast<double>(s.size());
  const double dd = static_cast<double>(D);
  const double nn = static_cast<double>(n);

  const double a_post = hypers.tau_shape + 0.5 * dd;
  const double c_post = hypers.noise_shape + 0.5 * (nn + dd);
  double rho_rate = hypers.tau_rate;
  double omega_rate = hypers.noise_rate;
  GammaMoments rho = gamma_moments(hypers.tau_shape, hypers.tau_rate);
  GammaMoments omega = gamma_moments(hypers.noise_shape, hypers.noise_rate);
  if (hypers.pinned) {
    rho = {hypers.tau_shape / hypers.tau_rate, std::log(hypers.tau_shape / hypers.tau_rate), 0.0};
    omega = {hypers.noise_shape / hypers.noise_rate, std::log(hypers.noise_shape / hypers.noise_rate), 0.0};
  } else {
    // Start from unit coefficient scale and the sample noise level.
    rho = gamma_moments(1.0, 1.0);
    const double v = yy / std::max(nn - 1.0, 1.0);
    omega = gamma_moments(1.0, v > 0 ? v : 1.0);
  }

  RegressionPosterior post;
  Eigen::ArrayXd shrink;
  double e_alpha2 = 0.0, e_resid = 0.0, log_det_s = 0.0;

  auto update_beta = [&]() {
    shrink = 1.0 / (e + rho.mean);
    const Eigen::ArrayXd coef = s.array() * b.array() * shrink;
    const double tr_s = (shrink.sum() + (dd - r) / rho.mean) / omega.mean;
    e_alpha2 = coef.square().sum() + tr_s;
    const double resid = yy - b.squaredNorm() + (rho.mean * b.array() * shrink).square().sum();
    e_resid = std::max(resid, 0.0) + (e * shrink).sum() / omega.mean;
    log_det_s = -dd * std::log(omega.mean) + shrink.log().sum() - (dd - r) * std::log(rho.mean);
  };

  auto elbo = [&]() {
    double v = 0.5 * nn * (omega.log_mean - kLog2Pi) - 0.5 * omega.mean * e_resid;
    v += 0.5 * dd * (omega.log_mean + rho.log_mean - kLog2Pi) - 0.5 * omega.mean * rho.mean * e_alpha2;
    v += 0.5 * log_det_s + 0.5 * dd * (1.0 + kLog2Pi);
    if (!hypers.pinned) {
      v += gamma_log_prior(hypers.tau_shape, hypers.tau_rate, rho) + rho.entropy;
      v += gamma_log_prior(hypers.noise_shape, hypers.noise_rate, omega) + omega.entropy;
    }
    return v;
  };

  for (int it = 0; it < std::max(options.max_iters, 1); ++it) {
    update_beta();
    if (!hypers.pinned) {
      // q(beta) moments enter with the current E[omega]; tr terms scale as 1/omega.
      rho_rate = hypers.tau_rate + 0.5 * omega.mean * e_alpha2;
      rho = gamma_moments(a_post, rho_rate);
      update_beta();
      omega_rate = hypers.noise_rate + 0.5 * e_resid + 0.5 * rho.mean * e_alpha2;
      omega = gamma_moments(c_post, omega_rate);
      update_beta();
    }
    const double value = elbo();
    if (!std::isfinite(value)) throw NumericalError("ELBO became non-finite");
    if (!post.elbo_trace.empty()) {
      const double prev = post.elbo_trace.back();
      if (value < prev - 1e-8 * std::max(1.0, std::abs(prev))) {
        std::ostringstream msg;
        msg.precision(17);
        msg << "ELBO decreased from " << prev << " to " << value << " at iteration " << it;
        throw NumericalError(msg.str());
      }
      post.elbo_trace.push_back(value);
      if (std::abs(value - prev) <= options.tol * std::abs(prev)) break;
    } else {
      post.elbo_trace.push_back(value);
      if (hypers.pinned) break;
    }
  }

  const Eigen::MatrixXd& V = svd.matrixV();
  const Eigen::VectorXd coef = (s.array() * b.array() * shrink).matrix();
  const Eigen::VectorXd alpha = V * coef;
  post.beta_mean = L * alpha;
  // S_alpha = omega^-1 [V diag(shrink - 1/rho) V^T + I / rho]
  Eigen::MatrixXd s_alpha = V * (shrink - 1.0 / rho.mean).matrix().asDiagonal() * V.transpose();
  s_alpha.diagonal().array() += 1.0 / rho.mean;
  s_alpha /= omega.mean;
  post.beta_cov = L * s_alpha * L.transpose();
  post.beta_cov = 0.5 * (post.beta_cov + post.beta_cov.transpose()).eval();
  if (hypers.pinned) {
    post.tau2_inv_shape = hypers.tau_shape;
    post.tau2_inv_rate = hypers.tau_rate;
    post.noise2_inv_shape = hypers.noise_shape;
    post.noise2_inv_rate = hypers.noise_rate;
  } else {
    post.tau2_inv_shape = a_post;
    post.tau2_inv_rate = rho_rate;
    post.noise2_inv_shape = c_post;
    post.noise2_inv_rate = omega_rate;
  }
  post.intercept = y_mean - x_mean.dot(post.beta_mean);
  return post;
}

Eigen::VectorXd predict(const RegressionPosterior& posterior, const Eigen::MatrixXd& X_test) {
  if (X_test.cols() != posterior.beta_mean.size())
    throw ValidationError("test matrix has " + std::to_string(X_test.cols()) + " columns, model expects " +
                          std::to_string(posterior.beta_mean.size()));
  return (X_test * posterior.beta_mean).array() + posterior.intercept;
}

double mse(const Eigen::VectorXd& predicted, const Eigen::VectorXd& actual) {
  if (predicted.size() != actual.size()) throw ValidationError("mse: length mismatch");
  if (predicted.size() == 0) throw ValidationError("mse: empty input");
  return (predicted - actual).squaredNorm() / static_cast<double>(predicted.size());
}

void write_regression_posterior(const std::filesystem::path& path, const RegressionPosterior& p) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  const auto D = static_cast<std::uint64_t>(p.beta_mean.size());
  detail::put_magic(out, "PLRP");
  detail::put<std::uint32_t>(out, kPosteriorVersion);
  detail::put<std::uint64_t>(out, D);
  detail::put<std::uint64_t>(out, p.elbo_trace.size());
  for (double v : {p.tau2_inv_shape, p.tau2_inv_rate, p.noise2_inv_shape, p.noise2_inv_rate, p.intercept})
    detail::put<double>(out, v);
  for (double v : p.elbo_trace) detail::put<double>(out, v);
  for (Eigen::Index i = 0; i < p.beta_mean.size(); ++i) detail::put<double>(out, p.beta_mean(i));
  for (Eigen::Index r = 0; r < p.beta_cov.rows(); ++r)
    for (Eigen::Index c = 0; c < p.beta_cov.cols(); ++c) detail::put<double>(out, p.beta_cov(r, c));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

RegressionPosterior read_regression_posterior(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open regression posterior " + path.string());
  detail::expect_magic(in, "PLRP");
  const auto version = detail::get<std::uint32_t>(in, "version");
  if (version != kPosteriorVersion) throw ParseError("unsupported posterior version " + std::to_string(version));
  const auto D = static_cast<Eigen::Index>(detail::get<std::uint64_t>(in, "D"));
  const auto T = detail::get<std::uint64_t>(in, "trace length");
  RegressionPosterior p;
  p.tau2_inv_shape = detail::get<double>(in, "tau shape");
  p.tau2_inv_rate = detail::get<double>(in, "tau rate");
  p.noise2_inv_shape = detail::get<double>(in, "noise shape");
  p.noise2_inv_rate = detail::get<double>(in, "noise rate");
  p.intercept = detail::get<double>(in, "intercept");
  for (std::uint64_t t = 0; t < T; ++t) p.elbo_trace.push_back(detail::get<double>(in, "elbo"));
  p.beta_mean.resize(D);
  for (Eigen::Index i = 0; i < D; ++i) p.beta_mean(i) = detail::get<double>(in, "beta");
  p.beta_cov.resize(D, D);
  for (Eigen::Index r = 0; r < D; ++r)
    for (Eigen::Index c = 0; c < D; ++c) p.beta_cov(r, c) = detail::get<double>(in, "covariance");
  return p;
}

}  // namespace priorloom
