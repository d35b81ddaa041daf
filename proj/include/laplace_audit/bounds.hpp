#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "laplace_audit/diagnostics.hpp"
#include "laplace_audit/laplace.hpp"

namespace laplace_audit {

enum class CurvatureBranch { gaussian_limit, c0_branch, fixed_point_branch };

inline std::string to_string(CurvatureBranch b) {
  switch (b) {
    case CurvatureBranch::gaussian_limit: return "gaussian_limit";
    case CurvatureBranch::c0_branch: return "c0_branch";
    case CurvatureBranch::fixed_point_branch: return "fixed_point_branch";
  }
  return "unknown";
}

// Certified lower bound on the curvature of the radial conditional in the
// cubic-root variable c = r^{1/3}.
struct CurvatureBound {
  int p = 0;
  double delta3 = 0.0;
  double psi_min_second = 0.0;
  CurvatureBranch branch = CurvatureBranch::gaussian_limit;
  double r_infinity = std::numeric_limits<double>::quiet_NaN();
};

// Upper bound on the standardized third-derivative max norm for the logistic
// model: max_a |sigma(1-sigma)(1-2sigma)| * sum_i |L^T x_i|^3. The logistic
// third derivative attains its global maximum 1/(6 sqrt 3) at sigma = (3 +- sqrt 3)/6;
// the Gaussian prior contributes nothing. Sub-additive over dataset splits.
inline double delta3_upper_logistic(const LogisticDataset& data, const LaplaceApprox& lap) {
  require(data.p() == lap.dim(), "delta3_upper_logistic: dimension mismatch");
  double lmax = 1.0 / (6.0 * std::sqrt(3.0));
  double acc = 0.0;
  MatrixXd lt_x = data.X * lap.factor;  // row i = (L^T x_i)^T
  for (long i = 0; i < data.n(); ++i) {
    double nrm = lt_x.row(i).norm();
    acc += nrm * nrm * nrm;
  }
  return lmax * acc;
}

namespace detail {

// Gaussian-case minimum curvature: 45 (1/10)^{2/3} ((3p-1)/3)^{2/3}.
inline double psi_min_second_gaussian(int p) {
  double q = (3.0 * p - 1.0) / 3.0;
  return 45.0 * std::pow(0.1, 2.0 / 3.0) * std::pow(q, 2.0 / 3.0);
}

// r_(0) = sqrt((3p-1)/30), r_(n+1) = sqrt(((3p-1)/3 + 14 d r_n^3)/10);
// growing and bounded by (10/21)/d, limit is the first root of the cubic.
inline double fixed_point_radius(int p, double delta3, std::vector<double>* iterates = nullptr,
                                 double rel_tol = 1e-12, int max_iter = 10000) {
  double q = (3.0 * p - 1.0) / 3.0;
  double r = std::sqrt(q / 10.0);
  if (iterates) iterates->push_back(r);
  for (int n = 0; n < max_iter; ++n) {
    double next = std::sqrt((q + 14.0 * delta3 * r * r * r) / 10.0);
    if (iterates) iterates->push_back(next);
    if (std::abs(next - r) <= rel_tol * next) return next;
    r = next;
  }
  return r;
}

inline double fixed_point_value(int p, double r_inf, double delta3) {
  double q = 3.0 * p - 1.0;
  return std::pow(r_inf, 4.0 / 3.0) * (15.0 + q / (r_inf * r_inf)) -
         12.0 * delta3 * std::pow(r_inf, 7.0 / 3.0);
}

}  // namespace detail

// Piecewise-minimum lower bound on min_c psi_f''(c|e):
//   - boundary value  (3p-1) d^{2/3} + 3 d^{-4/3}                 (always valid)
//   - tail interior   (9/2) ((2/3)(3p-1))^{1/3} / d^{2/3}         (d > sqrt(3/(2(3p-1))))
//   - fixed point     r^{4/3} [15 + (3p-1)/r^2] - 12 d r^{7/3}    (d <= sqrt(1000/(441(3p-1))))
// d = 0 returns the analytic Gaussian limit.
inline CurvatureBound psi_min_second(int p, double delta3) {
  require(p >= 1, "psi_min_second: p must be >= 1");
  require(delta3 >= 0.0, "psi_min_second: delta3 must be >= 0");

  CurvatureBound cb;
  cb.p = p;
  cb.delta3 = delta3;

  double q = 3.0 * p - 1.0;
  if (delta3 == 0.0) {
    cb.psi_min_second = detail::psi_min_second_gaussian(p);
    cb.branch = CurvatureBranch::gaussian_limit;
    cb.r_infinity = std::sqrt(q / 30.0);
    return cb;
  }

  double best = q * std::pow(delta3, 2.0 / 3.0) + 3.0 * std::pow(delta3, -4.0 / 3.0);
  CurvatureBranch branch = CurvatureBranch::c0_branch;

  if (delta3 > std::sqrt(1.5 / q)) {
    double tail = 4.5 * std::cbrt((2.0 / 3.0) * q) / std::pow(delta3, 2.0 / 3.0);
    if (tail < best) best = tail;  // still the c >= c0 region analysis
  }

  if (delta3 <= std::sqrt(1000.0 / (441.0 * q))) {
    double r_inf = detail::fixed_point_radius(p, delta3);
    cb.r_infinity = r_inf;
    double fp = detail::fixed_point_value(p, r_inf, delta3);
    if (fp < best) {
      best = fp;
      branch = CurvatureBranch::fixed_point_branch;
    }
  }

  cb.psi_min_second = best;
  cb.branch = branch;
  return cb;
}

// Rigorous counterpart of the LSI term: MC estimate of
// (9 / (2 psi_min'')) E[ r^{4/3} (e^T grad_tilde(r e) - r)^2 ],
// using the certified curvature instead of the asymptotic p^{2/3}.
inline KlEstimate radial_kl_bound(const StandardizedTarget& st, const CurvatureBound& cb, long s,
                                  RngStream rng) {
  if (cb.psi_min_second <= 0.0)
    throw std::invalid_argument("radial_kl_bound: nonpositive curvature bound is vacuous");
  KlEstimate lsi = estimate_lsi(st, s, rng);
  // same expectation; rescale the 1/(2 p^{2/3}) factor to 9/(2 psi'')
  double ratio = 9.0 * std::pow(static_cast<double>(st.dim()), 2.0 / 3.0) / cb.psi_min_second;
  KlEstimate est;
  est.value = lsi.value * ratio;
  est.std_error = lsi.std_error * ratio;
  est.n_samples = lsi.n_samples;
  est.estimator = Estimator::radial_bound;
  return est;
}

// d(pg, pf) = pg log(pg/pf) + (1-pg) log((1-pg)/(1-pf)); +inf at the endpoints.
inline double binary_kl(double p_g, double p_f) {
  if (p_f <= 0.0 || p_f >= 1.0) return std::numeric_limits<double>::infinity();
  double a = p_g > 0.0 ? p_g * std::log(p_g / p_f) : 0.0;
  double b = p_g < 1.0 ? (1.0 - p_g) * std::log((1.0 - p_g) / (1.0 - p_f)) : 0.0;
  return a + b;
}

// Interval of p_f compatible with d(p_g, p_f) <= kl; d is strictly decreasing
// below p_g and increasing above, so bisection on each side.
inline std::pair<double, double> coverage_bounds(double p_g, double kl, double tol = 1e-10) {
  require(p_g > 0.0 && p_g < 1.0, "coverage_bounds: p_g must be in (0,1)");
  require(kl >= 0.0, "coverage_bounds: kl must be >= 0");
  if (kl == 0.0) return {p_g, p_g};

  auto bisect = [&](double lo, double hi, bool decreasing) {
    // invariant: d(lo) and d(hi) bracket kl
    for (int it = 0; it < 200 && hi - lo > tol; ++it) {
      double mid = 0.5 * (lo + hi);
      double v = binary_kl(p_g, mid);
      bool inside = v <= kl;
      if (decreasing) {
        // d decreases toward p_g from the left
        (inside ? hi : lo) = mid;
      } else {
        (inside ? lo : hi) = mid;
      }
    }
    return 0.5 * (lo + hi);
  };

  double lo = bisect(0.0, p_g, true);
  double hi = bisect(p_g, 1.0, false);
  return {lo, hi};
}

// Pinsker: d_TV(g,f) <= sqrt(KL/2), clamped at 1.
inline double pinsker_tv_bound(double kl) {
  require(kl >= 0.0, "pinsker_tv_bound: kl must be >= 0");
  return std::min(1.0, std::sqrt(0.5 * kl));
}

}  // namespace laplace_audit
