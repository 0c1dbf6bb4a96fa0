#pragma once

#include <random>

namespace priorloom {

// Normal distribution N(loc, scale^2) truncated to [0, inf).
//
// Moments are evaluated through the inverse Mills ratio; for strongly
// negative locations (alpha = -loc/scale >= 5) a continued fraction is used
// so that mean and variance keep full relative precision deep in the tail.
struct TruncatedNormal {
  double loc = 0.0;
  double scale = 1.0;

  double alpha() const { return -loc / scale; }
  double mean() const;
  double variance() const;
  double second_moment() const { double m = mean(); return variance() + m * m; }
  double entropy() const;
  // log of P(X >= 0) for the untruncated parent.
  double log_mass() const;
  double sample(std::mt19937_64& rng) const;

  // Finds the location whose truncated mean equals `target` for fixed scale.
  static TruncatedNormal with_mean(double target, double scale);
};

// phi(a) / (1 - Phi(a)).
double inverse_mills_ratio(double a);

}  // namespace priorloom
