#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "laplace_audit/geometry.hpp"
#include "laplace_audit/laplace.hpp"

namespace laplace_audit {

enum class Estimator {
  klvar,
  lsi,
  var_elbo,
  klvar_plus_lsi,
  varelbo_plus_lsi,
  kl_direct,
  kl_via_chain,
  radial_bound,
  taylor3,
  taylor4,
};

inline std::string to_string(Estimator e) {
  switch (e) {
    case Estimator::klvar: return "klvar";
    case Estimator::lsi: return "lsi";
    case Estimator::var_elbo: return "var_elbo";
    case Estimator::klvar_plus_lsi: return "klvar_plus_lsi";
    case Estimator::varelbo_plus_lsi: return "varelbo_plus_lsi";
    case Estimator::kl_direct: return "kl_direct";
    case Estimator::kl_via_chain: return "kl_via_chain";
    case Estimator::radial_bound: return "radial_bound";
    case Estimator::taylor3: return "taylor3";
    case Estimator::taylor4: return "taylor4";
  }
  return "unknown";
}

// A Monte-Carlo KL approximation in nats, with its standard error.
struct KlEstimate {
  double value = 0.0;
  double std_error = 0.0;
  long n_samples = 0;
  Estimator estimator = Estimator::klvar;
  std::string note;
};

namespace detail {

inline std::vector<double> draw_deltas(const StandardizedTarget& st, long s, RngStream& rng,
                                       const char* who) {
  int p = st.dim();
  std::vector<double> deltas(static_cast<std::size_t>(s));
  for (long i = 0; i < s; ++i) {
    double d = st.delta(rng.normal_vector(p));
    if (!std::isfinite(d))
      throw std::runtime_error(std::string(who) + ": non-finite log-density difference at draw " +
                               std::to_string(i));
    deltas[static_cast<std::size_t>(i)] = d;
  }
  return deltas;
}

// sd over batch variances / sqrt(B); pairs with a value that is a sample variance.
inline double batch_variance_se(std::span<const double> v, int n_batches = 100) {
  std::size_t b = static_cast<std::size_t>(n_batches);
  if (v.size() < 2 * b) b = v.size() / 2;
  if (b < 2) throw std::invalid_argument("batch_variance_se: series too short");
  std::size_t len = v.size() / b;
  std::vector<double> vars(b);
  for (std::size_t i = 0; i < b; ++i) vars[i] = sample_variance(v.subspan(i * len, len));
  return sample_sd(vars) / std::sqrt(static_cast<double>(b));
}

}  // namespace detail

// 1/2 Var_g[delta]: half the KL variance, the primary KL surrogate.
inline KlEstimate estimate_klvar(const StandardizedTarget& st, long s, RngStream rng) {
  require(s >= 100, "estimate_klvar: need s >= 100");
  std::vector<double> deltas = detail::draw_deltas(st, s, rng, "estimate_klvar");
  KlEstimate est;
  est.value = 0.5 * sample_variance(deltas);
  est.std_error = 0.5 * detail::batch_variance_se(deltas);
  est.n_samples = s;
  est.estimator = Estimator::klvar;
  return est;
}

// LSI radial term: 1/(2 p^{2/3}) E[ r^{4/3} (e^T grad_tilde(r e) - r)^2 ].
inline KlEstimate estimate_lsi(const StandardizedTarget& st, long s, RngStream rng) {
  require(s >= 100, "estimate_lsi: need s >= 100");
  int p = st.dim();
  double scale = 0.5 / std::pow(static_cast<double>(p), 2.0 / 3.0);
  std::vector<double> vals(static_cast<std::size_t>(s));
  for (long i = 0; i < s; ++i) {
    SphericalPoint pt = decompose(rng.normal_vector(p));
    double radial_grad = pt.e.dot(st.grad_tilde(pt.r * pt.e));
    double mismatch = radial_grad - pt.r;
    double v = std::pow(pt.r, 4.0 / 3.0) * mismatch * mismatch;
    if (!std::isfinite(v))
      throw std::runtime_error("estimate_lsi: non-finite integrand at draw " + std::to_string(i));
    vals[static_cast<std::size_t>(i)] = v;
  }
  KlEstimate est;
  est.value = scale * mean_of(vals);
  est.std_error = scale * sample_sd(vals) / std::sqrt(static_cast<double>(s));
  est.n_samples = s;
  est.estimator = Estimator::lsi;
  return est;
}

// 1/2 Var_e[ E_r[delta(r e)] ] by nested Monte Carlo. The same s_r radii are
// reused across directions (common random numbers). The plain nested estimator
// is biased upward by E[Var_r]/s_r; the standard ANOVA correction subtracts
// the mean inner-sample variance / s_r (switchable).
inline KlEstimate estimate_var_elbo(const StandardizedTarget& st, long s_e, long s_r,
                                    RngStream rng, bool bias_correction = true) {
  require(s_e >= 100, "estimate_var_elbo: need s_e >= 100");
  if (bias_correction && s_r < 2)
    throw std::invalid_argument("estimate_var_elbo: bias correction needs s_r >= 2");
  require(s_r >= 10, "estimate_var_elbo: need s_r >= 10");
  int p = st.dim();

  RngStream radius_rng = rng.substream(1);
  RngStream dir_rng = rng.substream(2);
  std::vector<double> radii(static_cast<std::size_t>(s_r));
  for (long k = 0; k < s_r; ++k) radii[static_cast<std::size_t>(k)] = sample_chi(p, radius_rng);

  std::vector<double> inner_means(static_cast<std::size_t>(s_e));
  std::vector<double> inner_vars(static_cast<std::size_t>(s_e));
  std::vector<double> work(static_cast<std::size_t>(s_r));
  for (long j = 0; j < s_e; ++j) {
    VectorXd e = sample_sphere(p, dir_rng);
    for (long k = 0; k < s_r; ++k) {
      double d = st.delta(radii[static_cast<std::size_t>(k)] * e);
      if (!std::isfinite(d))
        throw std::runtime_error("estimate_var_elbo: non-finite delta at direction " +
                                 std::to_string(j) + ", radius " + std::to_string(k));
      work[static_cast<std::size_t>(k)] = d;
    }
    inner_means[static_cast<std::size_t>(j)] = mean_of(work);
    inner_vars[static_cast<std::size_t>(j)] = sample_variance(work);
  }

  double correction =
      bias_correction ? mean_of(inner_vars) / static_cast<double>(s_r) : 0.0;
  KlEstimate est;
  est.value = std::max(0.0, 0.5 * (sample_variance(inner_means) - correction));

  // batch means over directions
  std::size_t b = 100;
  if (inner_means.size() < 2 * b) b = inner_means.size() / 2;
  std::size_t len = inner_means.size() / b;
  std::vector<double> batch_vals(b);
  for (std::size_t i = 0; i < b; ++i) {
    std::span<const double> ms(inner_means.data() + i * len, len);
    std::span<const double> vs(inner_vars.data() + i * len, len);
    double corr_b = bias_correction ? mean_of(vs) / static_cast<double>(s_r) : 0.0;
    batch_vals[i] = 0.5 * (sample_variance(ms) - corr_b);
  }
  est.std_error = sample_sd(batch_vals) / std::sqrt(static_cast<double>(b));
  est.n_samples = s_e * s_r;
  est.estimator = Estimator::var_elbo;
  return est;
}

namespace detail {
inline KlEstimate combine_sum(const KlEstimate& a, const KlEstimate& b, Estimator name) {
  KlEstimate est;
  est.value = a.value + b.value;
  est.std_error = std::hypot(a.std_error, b.std_error);
  est.n_samples = a.n_samples + b.n_samples;
  est.estimator = name;
  return est;
}
}  // namespace detail

// 1/2 KL_var + LSI
inline KlEstimate klvar_plus_lsi(const StandardizedTarget& st, long s, RngStream rng) {
  KlEstimate a = estimate_klvar(st, s, rng.substream(1));
  KlEstimate b = estimate_lsi(st, s, rng.substream(2));
  return detail::combine_sum(a, b, Estimator::klvar_plus_lsi);
}

// 1/2 VarELBO + LSI
inline KlEstimate varelbo_plus_lsi(const StandardizedTarget& st, long s_e, long s_r,
                                   RngStream rng) {
  KlEstimate a = estimate_var_elbo(st, s_e, s_r, rng.substream(1));
  KlEstimate b = estimate_lsi(st, s_e * s_r, rng.substream(2));
  return detail::combine_sum(a, b, Estimator::varelbo_plus_lsi);
}

}  // namespace laplace_audit
