#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace laplace_audit {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// log(1 + exp(t)) without overflow for large |t|.
inline double log1p_exp(double t) {
  if (t > 0.0) return t + std::log1p(std::exp(-t));
  return std::log1p(std::exp(t));
}

inline double logistic_sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  double e = std::exp(t);
  return e / (1.0 + e);
}

inline double log_sum_exp(std::span<const double> v) {
  if (v.empty()) throw std::invalid_argument("log_sum_exp: empty input");
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

inline double log_mean_exp(std::span<const double> v) {
  return log_sum_exp(v) - std::log(static_cast<double>(v.size()));
}

inline double mean_of(std::span<const double> v) {
  if (v.empty()) throw std::invalid_argument("mean_of: empty input");
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// Unbiased sample variance (denominator n-1).
inline double sample_variance(std::span<const double> v) {
  if (v.size() < 2) throw std::invalid_argument("sample_variance: need at least 2 values");
  double m = mean_of(v);
  double s = 0.0;
  for (double x : v) {
    double d = x - m;
    s += d * d;
  }
  return s / static_cast<double>(v.size() - 1);
}

inline double sample_sd(std::span<const double> v) { return std::sqrt(sample_variance(v)); }

// Standard error of the mean from B contiguous batches: sd of batch means / sqrt(B).
inline double batch_means_se(std::span<const double> v, int n_batches = 100) {
  if (n_batches < 2) throw std::invalid_argument("batch_means_se: need >= 2 batches");
  std::size_t b = static_cast<std::size_t>(n_batches);
  if (v.size() < 2 * b) b = v.size() / 2;
  if (b < 2) throw std::invalid_argument("batch_means_se: series too short");
  std::size_t len = v.size() / b;
  std::vector<double> means(b);
  for (std::size_t i = 0; i < b; ++i) means[i] = mean_of(v.subspan(i * len, len));
  return sample_sd(means) / std::sqrt(static_cast<double>(b));
}

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

}  // namespace laplace_audit
