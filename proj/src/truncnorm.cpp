#include "priorloom/truncnorm.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace priorloom {
namespace {

constexpr double kTailSwitch = 5.0;
constexpr int kFractionDepth = 80;

struct Tail {
  double t;  // lambda - alpha
  double u;
  double w;
};

// T_k = k / (a + T_{k+1}); returns T_1, T_2, T_3.
Tail tail_fraction(double a) {
  double next = 0.0;
  Tail out{0, 0, 0};
  for (int k = kFractionDepth; k >= 1; --k) {
    next = k / (a + next);
    if (k == 3) out.w = next;
    if (k == 2) out.u = next;
    if (k == 1) out.t = next;
  }
  return out;
}

double normal_pdf(double a) {
  return std::exp(-0.5 * a * a) / std::sqrt(2.0 * std::numbers::pi);
}

double upper_tail(double a) { return 0.5 * std::erfc(a / std::numbers::sqrt2); }

}  // namespace

double inverse_mills_ratio(double a) {
  if (a >= kTailSwitch) return a + tail_fraction(a).t;
  return normal_pdf(a) / upper_tail(a);
}

double TruncatedNormal::mean() const {
  const double a = alpha();
  if (a >= kTailSwitch) return scale * tail_fraction(a).t;
  return loc + scale * inverse_mills_ratio(a);
}

double TruncatedNormal::variance() const {
  const double a = alpha();
  double ratio;
  if (a >= kTailSwitch) {
    const Tail tl = tail_fraction(a);
    ratio = tl.t * tl.t * (a + 2.0 * tl.u - tl.w) / (a + tl.w);
  } else {
    const double lam = inverse_mills_ratio(a);
    ratio = 1.0 + a * lam - lam * lam;
  }
  return scale * scale * std::max(ratio, 1e-300);
}

double TruncatedNormal::log_mass() const {
  const double a = alpha();
  if (a >= kTailSwitch)
    return -0.5 * a * a - 0.5 * std::log(2.0 * std::numbers::pi) -
           std::log(inverse_mills_ratio(a));
  return std::log(upper_tail(a));
}

double TruncatedNormal::entropy() const {
  const double a = alpha();
  return 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e) +
         std::log(scale) + log_mass() + 0.5 * a * inverse_mills_ratio(a);
}

double TruncatedNormal::sample(std::mt19937_64& rng) const {
  const double a = alpha();
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  if (a <= 0.5) {
    std::normal_distribution<double> normal(0.0, 1.0);
    for (;;) {
      const double z = normal(rng);
      if (z >= a) return loc + scale * z;
    }
  }
  // Exponential proposal with the optimal rate for a one-sided tail.
  const double rate = 0.5 * (a + std::sqrt(a * a + 4.0));
  for (;;) {
    const double z = a - std::log1p(-unif(rng)) / rate;
    const double accept = std::exp(-0.5 * (z - rate) * (z - rate));
    if (unif(rng) <= accept) return std::max(0.0, loc + scale * z);
  }
}

TruncatedNormal TruncatedNormal::with_mean(double target, double scale) {
  if (!(target > 0.0) || !(scale > 0.0))
    throw std::invalid_argument("truncated normal: target mean and scale must be positive");
  double lo = target - 60.0 * scale;
  double hi = target;
  if (TruncatedNormal{lo, scale}.mean() > target)
    throw std::invalid_argument("truncated normal: target mean too small for scale");
  for (int it = 0; it < 200 && hi - lo > 0.0; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    if (TruncatedNormal{mid, scale}.mean() < target)
      lo = mid;
    else
      hi = mid;
  }
  return TruncatedNormal{0.5 * (lo + hi), scale};
}

}  // namespace priorloom
