#pragma once

#include <filesystem>
#include <vector>

#include <Eigen/Dense>

namespace priorloom {

// Prior correlation structure of the coefficients. `C` is stored without
// jitter; fit_vb factorizes C + jitter * I.
struct PriorCovariance {
  Eigen::MatrixXd C;
  double kernel_bandwidth = 0.0;  // 0 when C is not a kernel matrix
  double jitter = 0.0;

  static PriorCovariance identity(Eigen::Index d);
};

// 1e-8 * trace(C) / D
double default_jitter(const Eigen::MatrixXd& C);

// Gamma(shape, rate) priors on tau^-2 and on the noise precision.
// With `pinned`, both precisions are held at shape/rate (the infinite-shape
// limit at fixed mean) and only q(beta) is updated.
struct HyperPriors {
  double tau_shape = 1e-3;
  double tau_rate = 1e-3;
  double noise_shape = 1e-3;
  double noise_rate = 1e-3;
  bool pinned = false;

  static HyperPriors pinned_at(double tau2, double noise2);
  void validate() const;
};

struct RegressionPosterior {
  Eigen::VectorXd beta_mean;
  Eigen::MatrixXd beta_cov;
  double tau2_inv_shape = 0.0;
  double tau2_inv_rate = 0.0;
  double noise2_inv_shape = 0.0;
  double noise2_inv_rate = 0.0;
  double intercept = 0.0;
  std::vector<double> elbo_trace;

  double tau2_inv_mean() const { return tau2_inv_shape / tau2_inv_rate; }
  double noise2_inv_mean() const { return noise2_inv_shape / noise2_inv_rate; }
};

struct VbOptions {
  double tol = 1e-8;     // relative ELBO change
  int max_iters = 500;
  bool center = true;    // center X columns and y; intercept restored at prediction
};

// Mean-field q(beta) q(tau^-2) q(sigma_noise^-2) for
//   y ~ N(X beta, sigma^2 I),  beta ~ N(0, sigma^2 tau^2 C).
// Throws NumericalError if C + jitter is not positive definite or the ELBO
// decreases.
RegressionPosterior fit_vb(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const PriorCovariance& prior,
                           const HyperPriors& hypers, const VbOptions& options = {});

Eigen::VectorXd predict(const RegressionPosterior& posterior, const Eigen::MatrixXd& X_test);

double mse(const Eigen::VectorXd& predicted, const Eigen::VectorXd& actual);

// "PLRP" blob with the same conventions as the feature matrix container.
void write_regression_posterior(const std::filesystem::path& path, const RegressionPosterior& posterior);
RegressionPosterior read_regression_posterior(const std::filesystem::path& path);

}  // namespace priorloom
