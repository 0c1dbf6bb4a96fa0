#include <doctest.h>

#include "helpers.hpp"
#include "priorloom/errors.hpp"
#include "priorloom/linreg.hpp"

using namespace priorloom;

namespace {

PriorCovariance random_kernel_prior(Eigen::Index d, std::uint64_t seed) {
  const Eigen::MatrixXd pts = testing::random_matrix(3, d, seed);
  PriorCovariance p;
  p.C.resize(d, d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j) p.C(i, j) = std::exp(-(pts.col(i) - pts.col(j)).squaredNorm() / 4.0);
  p.jitter = 1e-3;
  return p;
}

}  // namespace

TEST_SUITE("linreg") {

TEST_CASE("zero targets give zero coefficients") {
  const Eigen::MatrixXd X = testing::random_matrix(15, 30, 1);
  const auto post = fit_vb(X, Eigen::VectorXd::Zero(15), PriorCovariance::identity(30), HyperPriors{});
  CHECK(post.beta_mean.cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("pinned scales reproduce the closed-form ridge solution") {
  const Eigen::MatrixXd X = testing::random_matrix(20, 50, 2);
  const Eigen::VectorXd y = testing::random_vector(20, 3);
  const auto prior = random_kernel_prior(50, 4);
  VbOptions opt;
  opt.center = false;
  const auto post = fit_vb(X, y, prior, HyperPriors::pinned_at(1.0, 1.0), opt);

  const Eigen::MatrixXd Cj = prior.C + prior.jitter * Eigen::MatrixXd::Identity(50, 50);
  const Eigen::MatrixXd M = X.transpose() * X + Cj.fullPivLu().inverse();
  const Eigen::VectorXd ridge = M.fullPivLu().solve(X.transpose() * y);
  CHECK(testing::max_rel_diff(post.beta_mean, ridge) < 1e-6);
  CHECK(post.noise2_inv_mean() == 1.0);
}

TEST_CASE("ELBO never decreases") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto data = testing::random_dataset(25, 40, 100 + seed);
    const auto post = fit_vb(data.X, data.y, random_kernel_prior(40, seed), HyperPriors{});
    REQUIRE(post.elbo_trace.size() >= 2);
    for (std::size_t t = 1; t < post.elbo_trace.size(); ++t)
      CHECK(post.elbo_trace[t] >= post.elbo_trace[t - 1] - 1e-8 * std::abs(post.elbo_trace[t - 1]));
  }
}

TEST_CASE("duplicated columns tied by the prior share their posterior mean") {
  Eigen::MatrixXd X = testing::random_matrix(12, 6, 9);
  X.col(4) = X.col(1);
  const Eigen::VectorXd y = X.col(1) * 2.0 + testing::random_vector(12, 10, 0.1);
  PriorCovariance prior;
  prior.C = Eigen::MatrixXd::Identity(6, 6);
  prior.C(1, 4) = prior.C(4, 1) = 1.0 - 1e-6;
  prior.jitter = default_jitter(prior.C);
  const auto post = fit_vb(X, y, prior, HyperPriors{});
  CHECK(std::abs(post.beta_mean(1) - post.beta_mean(4)) < 1e-4);
}

TEST_CASE("an indefinite prior covariance is rejected") {
  PriorCovariance bad;
  bad.C = Eigen::MatrixXd::Identity(3, 3);
  bad.C(0, 1) = bad.C(1, 0) = 2.0;
  const Eigen::MatrixXd X = testing::random_matrix(5, 3, 1);
  CHECK_THROWS_AS(fit_vb(X, testing::random_vector(5, 2), bad, HyperPriors{}), NumericalError);
}

TEST_CASE("predict") {
  const auto data = testing::random_dataset(30, 5, 12);
  VbOptions opt;
  opt.center = false;
  const auto post = fit_vb(data.X, data.y, PriorCovariance::identity(5), HyperPriors{}, opt);
  CHECK(predict(post, Eigen::MatrixXd::Identity(5, 5)) == post.beta_mean);
  CHECK(predict(post, Eigen::MatrixXd::Zero(3, 5)).isZero(0.0));
}

TEST_CASE("well-posed fit predicts a training row within the noise scale") {
  // n >> D with noise sd 0.5
  const auto data = testing::random_dataset(400, 5, 13);
  const auto post = fit_vb(data.X, data.y, PriorCovariance::identity(5), HyperPriors{});
  const Eigen::VectorXd pred = predict(post, data.X.topRows(1));
  CHECK(std::abs(pred(0) - data.y(0)) < 3 * 0.5);
  CHECK(std::sqrt(1.0 / post.noise2_inv_mean()) == doctest::Approx(0.5).epsilon(0.15));
}

TEST_CASE("mse") {
  CHECK(mse(Eigen::Vector2d(0, 0), Eigen::Vector2d(0, 0)) == 0.0);
  CHECK(mse(Eigen::Vector2d(0, 0), Eigen::Vector2d(1, 1)) == 1.0);
  CHECK(mse(Eigen::Vector3d(1, 2, 3), Eigen::Vector3d(2, 4, 6)) == doctest::Approx(14.0 / 3.0).epsilon(1e-15));
  CHECK_THROWS_AS(mse(Eigen::Vector2d(0, 0), Eigen::Vector3d(0, 0, 0)), ValidationError);
}

TEST_CASE("posterior file round trip") {
  testing::TempDir dir("post");
  const auto data = testing::random_dataset(10, 4, 5);
  const auto post = fit_vb(data.X, data.y, PriorCovariance::identity(4), HyperPriors{});
  write_regression_posterior(dir.path() / "p.plrp", post);
  const auto back = read_regression_posterior(dir.path() / "p.plrp");
  CHECK(back.beta_mean == post.beta_mean);
  CHECK(back.beta_cov == post.beta_cov);
  CHECK(back.intercept == post.intercept);
  CHECK(back.noise2_inv_rate == post.noise2_inv_rate);
}

}  // TEST_SUITE
