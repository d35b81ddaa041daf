#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "laplace_audit/diagnostics.hpp"
#include "laplace_audit/laplace.hpp"
#include "laplace_audit/quadrature.hpp"

namespace laplace_audit {

// Post-warmup MCMC output in original theta coordinates.
struct Chain {
  MatrixXd samples;      // m x p
  VectorXd phi_values;   // phi_f at each sample
  double step_size = 0.0;
  int n_divergences = 0;
  long warmup = 0;
  double mean_accept_stat = 0.0;

  long size() const { return samples.rows(); }
};

namespace detail {

struct PhasePoint {
  VectorXd q;     // position (standardized)
  VectorXd rho;   // momentum
  double U;       // potential: phi_tilde - phi_tilde(0)
  VectorXd gradU;
};

struct NutsTree {
  PhasePoint z_minus, z_plus;
  VectorXd q_prop;
  double U_prop = 0.0;
  double log_weight = -std::numeric_limits<double>::infinity();
  bool divergent = false;
  bool turning = false;
  double sum_accept = 0.0;
  long n_leapfrog = 0;
};

class NutsKernel {
 public:
  explicit NutsKernel(const StandardizedTarget& st) : st_(&st) {}

  PhasePoint make_point(const VectorXd& q) const {
    PhasePoint z;
    z.q = q;
    z.U = st_->phi_grad_tilde(q, z.gradU) - st_->phi_at_mode();
    return z;
  }

  void leapfrog(PhasePoint& z, double eps) const {
    z.rho -= 0.5 * eps * z.gradU;
    z.q += eps * z.rho;
    z.U = st_->phi_grad_tilde(z.q, z.gradU) - st_->phi_at_mode();
    z.rho -= 0.5 * eps * z.gradU;
  }

  static double hamiltonian(const PhasePoint& z) { return z.U + 0.5 * z.rho.squaredNorm(); }

  static bool uturn(const PhasePoint& minus, const PhasePoint& plus) {
    VectorXd dq = plus.q - minus.q;
    return dq.dot(minus.rho) < 0.0 || dq.dot(plus.rho) < 0.0;
  }

  static double log_add(double a, double b) {
    if (a == -std::numeric_limits<double>::infinity()) return b;
    if (b == -std::numeric_limits<double>::infinity()) return a;
    double m = std::max(a, b);
    return m + std::log(std::exp(a - m) + std::exp(b - m));
  }

  // Multinomial NUTS subtree of the given depth grown from z in direction v.
  NutsTree build_tree(const PhasePoint& z, int depth, int v, double eps, double h0,
                      RngStream& rng) const {
    if (depth == 0) {
      PhasePoint znew = z;
      leapfrog(znew, v > 0 ? eps : -eps);
      double h = hamiltonian(znew);
      double dh = h - h0;
      NutsTree t;
      t.z_minus = t.z_plus = znew;
      t.q_prop = znew.q;
      t.U_prop = znew.U;
      t.divergent = !std::isfinite(h) || dh > 1000.0;
      t.log_weight = t.divergent ? -std::numeric_limits<double>::infinity() : -dh;
      t.sum_accept = std::isfinite(dh) ? std::min(1.0, std::exp(-dh)) : 0.0;
      t.n_leapfrog = 1;
      return t;
    }

    NutsTree first = build_tree(z, depth - 1, v, eps, h0, rng);
    if (first.divergent || first.turning) return first;

    const PhasePoint& edge = v > 0 ? first.z_plus : first.z_minus;
    NutsTree second = build_tree(edge, depth - 1, v, eps, h0, rng);

    NutsTree t;
    t.z_minus = v > 0 ? first.z_minus : second.z_minus;
    t.z_plus = v > 0 ? second.z_plus : first.z_plus;
    t.divergent = second.divergent;
    t.sum_accept = first.sum_accept + second.sum_accept;
    t.n_leapfrog = first.n_leapfrog + second.n_leapfrog;
    t.log_weight = log_add(first.log_weight, second.log_weight);
    if (rng.uniform01() < std::exp(second.log_weight - t.log_weight)) {
      t.q_prop = second.q_prop;
      t.U_prop = second.U_prop;
    } else {
      t.q_prop = first.q_prop;
      t.U_prop = first.U_prop;
    }
    t.turning = second.turning || uturn(t.z_minus, t.z_plus);
    return t;
  }

 private:
  const StandardizedTarget* st_;
};

// Double/halve until the one-step acceptance probability crosses 1/2.
inline double find_initial_step(const NutsKernel& k, const VectorXd& q0, RngStream& rng) {
  PhasePoint z0 = k.make_point(q0);
  z0.rho = rng.normal_vector(static_cast<int>(q0.size()));
  double h0 = NutsKernel::hamiltonian(z0);
  auto log_accept = [&](double e) {
    PhasePoint z = z0;
    k.leapfrog(z, e);
    double h = NutsKernel::hamiltonian(z);
    return std::isfinite(h) ? h0 - h : -std::numeric_limits<double>::infinity();
  };
  double eps = 1.0;
  double dir = log_accept(eps) > std::log(0.5) ? 1.0 : -1.0;
  for (int it = 0; it < 60; ++it) {
    double la = log_accept(eps);
    if (dir > 0 && la <= std::log(0.5)) break;
    if (dir < 0 && la >= std::log(0.5)) break;
    eps *= dir > 0 ? 2.0 : 0.5;
  }
  return eps;
}

}  // namespace detail

// Multinomial No-U-Turn sampler in standardized coordinates with identity mass
// matrix (Laplace preconditioning); dual-averaging step-size adaptation toward
// target_accept during warmup; warmup samples discarded; max tree depth 10.
inline Chain nuts_sample(const StandardizedTarget& st, const VectorXd& init, long n_samples,
                         long n_warmup, std::uint64_t seed, double target_accept = 0.8,
                         int max_depth = 10) {
  require(n_samples >= 1, "nuts_sample: need n_samples >= 1");
  require(n_warmup >= 100, "nuts_sample: need n_warmup >= 100");
  require(target_accept > 0.0 && target_accept < 1.0,
          "nuts_sample: target_accept must be in (0,1)");
  int p = st.dim();
  require(init.size() == p, "nuts_sample: init has wrong dimension");

  detail::NutsKernel kernel(st);
  RngStream rng(seed, 0x4e757473ULL);
  VectorXd q = st.to_standardized(init);

  double eps = detail::find_initial_step(kernel, q, rng);
  // dual averaging (Hoffman-Gelman): gamma=0.05, t0=10, kappa=0.75
  const double gamma = 0.05, t0 = 10.0, kappa = 0.75;
  double mu_da = std::log(10.0 * eps);
  double log_eps_bar = 0.0;
  double h_bar = 0.0;

  Chain chain;
  chain.samples.resize(n_samples, p);
  chain.phi_values.resize(n_samples);
  chain.warmup = n_warmup;

  double accept_accum = 0.0;
  long total = n_warmup + n_samples;
  for (long m = 0; m < total; ++m) {
    detail::PhasePoint z = kernel.make_point(q);
    z.rho = rng.normal_vector(p);
    double h0 = detail::NutsKernel::hamiltonian(z);

    detail::PhasePoint z_minus = z, z_plus = z;
    VectorXd q_prop = z.q;
    double u_prop = z.U;
    double log_weight = 0.0;  // the root point has H = h0
    bool divergent_this_iter = false;
    double sum_accept = 0.0;
    long n_leapfrog = 0;

    for (int depth = 0; depth < max_depth; ++depth) {
      int v = rng.uniform01() < 0.5 ? -1 : 1;
      const detail::PhasePoint& edge = v > 0 ? z_plus : z_minus;
      detail::NutsTree sub = kernel.build_tree(edge, depth, v, eps, h0, rng);

      sum_accept += sub.sum_accept;
      n_leapfrog += sub.n_leapfrog;
      if (sub.divergent) {
        divergent_this_iter = true;
        break;
      }
      if (!sub.turning) {
        // biased progressive sampling toward the new subtree
        if (rng.uniform01() < std::exp(std::min(0.0, sub.log_weight - log_weight))) {
          q_prop = sub.q_prop;
          u_prop = sub.U_prop;
        }
        if (v > 0)
          z_plus = sub.z_plus;
        else
          z_minus = sub.z_minus;
        log_weight = detail::NutsKernel::log_add(log_weight, sub.log_weight);
        if (detail::NutsKernel::uturn(z_minus, z_plus)) break;
      } else {
        break;
      }
    }

    q = q_prop;
    double accept_stat = n_leapfrog > 0 ? sum_accept / static_cast<double>(n_leapfrog) : 0.0;

    if (m < n_warmup) {
      double t = static_cast<double>(m + 1);
      h_bar = (1.0 - 1.0 / (t + t0)) * h_bar + (target_accept - accept_stat) / (t + t0);
      double log_eps = mu_da - std::sqrt(t) / gamma * h_bar;
      double w = std::pow(t, -kappa);
      log_eps_bar = w * log_eps + (1.0 - w) * log_eps_bar;
      eps = m + 1 < n_warmup ? std::exp(log_eps) : std::exp(log_eps_bar);
    } else {
      long i = m - n_warmup;
      chain.samples.row(i) = st.to_original(q).transpose();
      chain.phi_values[i] = u_prop + st.phi_at_mode();
      if (divergent_this_iter) ++chain.n_divergences;
      accept_accum += accept_stat;
    }
  }

  chain.step_size = eps;
  chain.mean_accept_stat = accept_accum / static_cast<double>(n_samples);
  if (chain.n_divergences * 10 > n_samples)
    throw std::runtime_error(
        "nuts_sample: " + std::to_string(chain.n_divergences) + " divergences in " +
        std::to_string(n_samples) + " post-warmup iterations (step_size " +
        std::to_string(chain.step_size) + ", mean accept " +
        std::to_string(chain.mean_accept_stat) + ")");
  return chain;
}

struct GateReport {
  bool passed = false;
  double max_autocorr = 0.0;
  int argmax_lag = 0;
  int lag_lo = 0;
  int lag_hi = 0;
  double threshold = 0.0;
};

// Chain-quality gate: the max empirical autocorrelation of phi_f(theta_t) over
// lags in [lag_lo, lag_hi] must stay below the threshold.
inline GateReport autocorr_gate(const VectorXd& phi_values, int lag_lo = 30, int lag_hi = 100,
                                double threshold = 0.05) {
  require(lag_lo >= 1 && lag_hi >= lag_lo, "autocorr_gate: bad lag window");
  long m = phi_values.size();
  require(m > 2L * lag_hi, "autocorr_gate: series shorter than twice the top lag");
  double mean = phi_values.mean();
  VectorXd c = phi_values.array() - mean;
  double denom = c.squaredNorm();
  if (denom <= 0.0) throw std::invalid_argument("autocorr_gate: constant series");

  GateReport rep;
  rep.lag_lo = lag_lo;
  rep.lag_hi = lag_hi;
  rep.threshold = threshold;
  rep.max_autocorr = -std::numeric_limits<double>::infinity();
  for (int lag = lag_lo; lag <= lag_hi; ++lag) {
    double rho = c.head(m - lag).dot(c.tail(m - lag)) / denom;
    if (rho > rep.max_autocorr) {
      rep.max_autocorr = rho;
      rep.argmax_lag = lag;
    }
  }
  rep.passed = rep.max_autocorr < threshold;
  return rep;
}

// KL(g,f) = E_g[delta] + log E_g[exp(-delta)]: the normalization-free rewrite.
inline KlEstimate kl_direct(const StandardizedTarget& st, long s, RngStream rng) {
  require(s >= 1000, "kl_direct: need s >= 1000");
  std::vector<double> deltas = detail::draw_deltas(st, s, rng, "kl_direct");
  std::vector<double> neg(deltas.size());
  for (std::size_t i = 0; i < deltas.size(); ++i) neg[i] = -deltas[i];

  KlEstimate est;
  est.value = mean_of(deltas) + log_mean_exp(neg);
  est.n_samples = s;
  est.estimator = Estimator::kl_direct;

  // batch means on the full expression
  std::size_t b = 100;
  if (deltas.size() < 2 * b) b = deltas.size() / 2;
  std::size_t len = deltas.size() / b;
  std::vector<double> batch_vals(b);
  for (std::size_t i = 0; i < b; ++i) {
    std::span<const double> d(deltas.data() + i * len, len);
    std::span<const double> n(neg.data() + i * len, len);
    batch_vals[i] = mean_of(d) + log_mean_exp(n);
  }
  est.std_error = sample_sd(batch_vals) / std::sqrt(static_cast<double>(b));
  return est;
}

// Chain route: log(1/Z) from importance weights exp(delta) over the chain in
// standardized coordinates, then KL = E_g[delta] - logmeanexp_chain[delta];
// the normalization conventions cancel by construction.
inline KlEstimate kl_via_chain(const StandardizedTarget& st, const Chain& chain, long s_g,
                               RngStream rng) {
  require(s_g >= 100, "kl_via_chain: need s_g >= 100");
  GateReport gate = autocorr_gate(chain.phi_values);
  if (!gate.passed)
    throw std::runtime_error("kl_via_chain: chain failed the autocorrelation gate (max " +
                             std::to_string(gate.max_autocorr) + " at lag " +
                             std::to_string(gate.argmax_lag) + ")");

  long m = chain.size();
  std::vector<double> chain_deltas(static_cast<std::size_t>(m));
  for (long i = 0; i < m; ++i) {
    VectorXd tt = st.to_standardized(chain.samples.row(i).transpose());
    chain_deltas[static_cast<std::size_t>(i)] = st.delta(tt);
  }

  std::vector<double> g_deltas = detail::draw_deltas(st, s_g, rng, "kl_via_chain");

  KlEstimate est;
  est.value = mean_of(g_deltas) - log_mean_exp(chain_deltas);
  est.n_samples = s_g + m;
  est.estimator = Estimator::kl_via_chain;

  // importance-weight diagnostics for the log-mean-exp
  double wmax = *std::max_element(chain_deltas.begin(), chain_deltas.end());
  double sum_w = 0.0, sum_w2 = 0.0;
  for (double d : chain_deltas) {
    double w = std::exp(d - wmax);
    sum_w += w;
    sum_w2 += w * w;
  }
  double max_weight_fraction = 1.0 / sum_w;
  double ess = sum_w * sum_w / sum_w2;
  if (max_weight_fraction > 0.1 || ess < 100.0)
    est.note = "low-ess: max weight fraction " + std::to_string(max_weight_fraction) + ", ess " +
               std::to_string(ess);

  // g-side mean error in quadrature with a batch-means error of the
  // log-mean-exp over the (correlated) chain
  double se_g = sample_sd(g_deltas) / std::sqrt(static_cast<double>(s_g));
  std::size_t b = 100;
  std::size_t mm = chain_deltas.size();
  if (mm < 2 * b) b = mm / 2;
  std::size_t len = mm / b;
  std::vector<double> batch_lme(b);
  for (std::size_t i = 0; i < b; ++i)
    batch_lme[i] = log_mean_exp(std::span<const double>(chain_deltas.data() + i * len, len));
  double se_chain = sample_sd(batch_lme) / std::sqrt(static_cast<double>(b));
  est.std_error = std::hypot(se_g, se_chain);
  return est;
}

// 1-D ground truth by adaptive quadrature:
// KL = E_g[delta] + log Z' - log sqrt(2 pi) with Z' = int exp(-delta - t^2/2) dt,
// the domain grown until the tails are negligible. Absolute error target 1e-10.
inline double kl_quadrature_1d(const StandardizedTarget& st) {
  require(st.dim() == 1, "kl_quadrature_1d: target must be 1-D");

  auto delta1 = [&st](double t) {
    VectorXd v(1);
    v[0] = t;
    return st.delta(v);
  };
  auto integrand_z = [&](double t) { return std::exp(-delta1(t) - 0.5 * t * t); };

  double r = 16.0;
  double z = integrate(integrand_z, -r, r, 1e-13);
  for (int it = 0;; ++it) {
    if (it >= 40) throw std::runtime_error("kl_quadrature_1d: tails do not decay");
    double tail = std::max(integrand_z(r), integrand_z(-r));
    if (tail * r < 1e-14 * z) break;
    r *= 2.0;
    z = integrate(integrand_z, -r, r, 1e-13);
    if (!std::isfinite(z)) throw std::runtime_error("kl_quadrature_1d: tail growth diverges");
  }

  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  auto integrand_mean = [&](double t) {
    return delta1(t) * std::exp(-0.5 * t * t - half_log_2pi);
  };
  double e_delta = integrate(integrand_mean, -12.0, 12.0, 1e-13);
  return e_delta + std::log(z) - half_log_2pi;
}

// K(lambda) = KL(g, h(.;lambda)) along the exponential family
// h(.;lambda) = g exp(-lambda delta)/normalizer, plus cumulants of delta under
// h, all by quadrature; the Taylor structure of K at 0 is then verified.
struct Prop1Report {
  std::vector<double> lambda;
  std::vector<double> K;
  std::vector<double> k1, k2, k3;
  double var_g_delta = 0.0;
  double delta_sup = 0.0;   // max |delta| on the quadrature window
  double k_prime_0 = 0.0;   // finite-difference K'(0)
  double k_second_0 = 0.0;  // finite-difference K''(0)
  double gap = 0.0;         // |K(1) - 1/2 Var_g(delta)|
  double bound = 0.0;       // M^3/6
  bool k0_ok = false;
  bool k_prime0_ok = false;
  bool k_second0_ok = false;
  bool bound_ok = false;
};

inline Prop1Report prop1_path_check(const StandardizedTarget& st,
                                    const std::vector<double>& lambda_grid, double m_bound,
                                    double window = 12.0) {
  require(st.dim() == 1, "prop1_path_check: target must be 1-D");
  require(lambda_grid.size() >= 4, "prop1_path_check: need at least 4 grid points");
  require(lambda_grid.front() == 0.0, "prop1_path_check: grid must start at 0");
  require(lambda_grid.back() == 1.0, "prop1_path_check: grid must end at 1");

  auto delta1 = [&st](double t) {
    VectorXd v(1);
    v[0] = t;
    return st.delta(v);
  };

  // precondition: |delta| <= M on the effective support
  double sup = 0.0;
  for (int i = 0; i <= 4000; ++i) {
    double t = -window + 2.0 * window * i / 4000.0;
    sup = std::max(sup, std::abs(delta1(t)));
  }
  if (sup > m_bound * (1.0 + 1e-9))
    throw std::invalid_argument("prop1_path_check: |delta| reaches " + std::to_string(sup) +
                                " > M = " + std::to_string(m_bound) + " on the window");

  const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  auto gauss = [&](double t) { return inv_sqrt_2pi * std::exp(-0.5 * t * t); };

  auto moments_under_h = [&](double lam, double* m1, double* m2, double* m3) {
    auto w = [&](double t) { return gauss(t) * std::exp(-lam * delta1(t)); };
    double z = integrate(w, -window, window, 1e-13);
    double mm1 = integrate([&](double t) { return delta1(t) * w(t); }, -window, window, 1e-13) / z;
    double mm2 = integrate([&](double t) { double d = delta1(t) - mm1; return d * d * w(t); },
                           -window, window, 1e-13) /
                 z;
    double mm3 =
        integrate([&](double t) { double d = delta1(t) - mm1; return d * d * d * w(t); }, -window,
                  window, 1e-13) /
        z;
    *m1 = mm1;
    *m2 = mm2;
    *m3 = mm3;
  };

  double e_delta, var_delta, skew0;
  moments_under_h(0.0, &e_delta, &var_delta, &skew0);

  Prop1Report rep;
  rep.lambda = lambda_grid;
  rep.var_g_delta = var_delta;
  rep.delta_sup = sup;
  for (double lam : lambda_grid) {
    // K(lam) = lam E_g[delta] + log E_g[exp(-lam delta)]
    double ctilde = std::log(integrate(
        [&](double t) { return gauss(t) * std::exp(-lam * delta1(t)); }, -window, window, 1e-13));
    rep.K.push_back(lam * e_delta + ctilde);
    double m1, m2, m3;
    moments_under_h(lam, &m1, &m2, &m3);
    rep.k1.push_back(m1);
    rep.k2.push_back(m2);
    rep.k3.push_back(m3);
  }

  // finite differences at 0; assumes the first four grid points are uniform
  double h = lambda_grid[1] - lambda_grid[0];
  rep.k_prime_0 = (-3.0 * rep.K[0] + 4.0 * rep.K[1] - rep.K[2]) / (2.0 * h);
  rep.k_second_0 = (2.0 * rep.K[0] - 5.0 * rep.K[1] + 4.0 * rep.K[2] - rep.K[3]) / (h * h);

  rep.gap = std::abs(rep.K.back() - 0.5 * var_delta);
  rep.bound = m_bound * m_bound * m_bound / 6.0;

  double fd_tol = std::max(1e-8, 10.0 * h * h * std::max(1.0, std::abs(var_delta)));
  rep.k0_ok = std::abs(rep.K[0]) <= 1e-10;
  rep.k_prime0_ok = std::abs(rep.k_prime_0) <= fd_tol;
  rep.k_second0_ok = std::abs(rep.k_second_0 - var_delta) <= fd_tol;
  rep.bound_ok = rep.gap <= rep.bound + 1e-8;
  return rep;
}

}  // namespace laplace_audit
