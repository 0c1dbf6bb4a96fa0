#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include <unistd.h>

#include <Eigen/Dense>

#include "priorloom/corpus.hpp"

namespace testing {

inline Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed, double sd = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, sd);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = n(rng);
  return m;
}

inline Eigen::VectorXd random_vector(Eigen::Index size, std::uint64_t seed, double sd = 1.0) {
  return random_matrix(size, 1, seed, sd).col(0);
}

inline priorloom::FeatureMatrix random_dataset(Eigen::Index n, Eigen::Index d, std::uint64_t seed) {
  priorloom::FeatureMatrix m;
  m.X = random_matrix(n, d, seed);
  Eigen::VectorXd beta = random_vector(d, seed + 1);
  m.y = m.X * beta + random_vector(n, seed + 2, 0.5);
  for (Eigen::Index j = 0; j < d; ++j) m.feature_names.push_back("f" + std::to_string(j));
  return m;
}

inline double max_rel_diff(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a - b).cwiseAbs().maxCoeff() / std::max(1e-300, b.cwiseAbs().maxCoeff());
}

// Fresh directory under the system temp path, removed on destruction.
class TempDir {
public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("priorloom_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

private:
  std::filesystem::path path_;
};

}  // namespace testing
