#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "laplace_audit/common.hpp"
#include "laplace_audit/rng.hpp"

namespace laplace_audit {

// theta_tilde = r * e with r = |theta_tilde| and e on the unit sphere.
struct SphericalPoint {
  double r;
  Eigen::VectorXd e;
};

inline SphericalPoint decompose(const Eigen::VectorXd& theta_tilde) {
  double r = theta_tilde.norm();
  if (r == 0.0) throw std::invalid_argument("decompose: zero vector has no direction");
  return {r, theta_tilde / r};
}

inline Eigen::VectorXd compose(const SphericalPoint& pt) { return pt.r * pt.e; }

// E[r^k] for r ~ chi_p: 2^{k/2} Gamma((p+k)/2) / Gamma(p/2), via log-gamma.
inline double chi_moment(int p, double k) {
  require(p >= 1, "chi_moment: p must be >= 1");
  require(k >= 0.0, "chi_moment: k must be >= 0");
  double lp = 0.5 * static_cast<double>(p);
  return std::exp(0.5 * k * std::numbers::ln2 + std::lgamma(lp + 0.5 * k) - std::lgamma(lp));
}

namespace detail {
// Marsaglia-Tsang Gamma(alpha, 1) for alpha >= 1.
inline double sample_gamma(double alpha, RngStream& rng) {
  double d = alpha - 1.0 / 3.0;
  double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x = rng.normal();
    double t = 1.0 + c * x;
    if (t <= 0.0) continue;
    double v = t * t * t;
    double u = rng.uniform01_open();
    double x2 = x * x;
    if (u < 1.0 - 0.0331 * x2 * x2) return d * v;
    if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v;
  }
}
}  // namespace detail

inline Eigen::VectorXd sample_std_normal(int p, RngStream& rng) {
  require(p >= 1, "sample_std_normal: p must be >= 1");
  return rng.normal_vector(p);
}

// chi_p draw: Gaussian-norm route for small p, Gamma route (r = sqrt(2 Gamma(p/2,1)))
// for p > 50 where the norm would cost O(p) per draw.
inline double sample_chi(int p, RngStream& rng) {
  require(p >= 1, "sample_chi: p must be >= 1");
  if (p <= 50) return rng.normal_vector(p).norm();
  return std::sqrt(2.0 * detail::sample_gamma(0.5 * static_cast<double>(p), rng));
}

inline Eigen::VectorXd sample_sphere(int p, RngStream& rng) {
  require(p >= 1, "sample_sphere: p must be >= 1");
  for (;;) {
    Eigen::VectorXd v = rng.normal_vector(p);
    double n = v.norm();
    if (n > 0.0) return v / n;
  }
}

}  // namespace laplace_audit
