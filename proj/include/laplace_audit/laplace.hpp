#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "laplace_audit/targets.hpp"

namespace laplace_audit {

// Gaussian fit at the mode: mu = argmin phi, precision = hess(mu), Sigma = factor factor^T
// with factor lower triangular.
struct LaplaceApprox {
  VectorXd mu;
  MatrixXd precision;
  MatrixXd factor;  // lower-triangular L, L L^T = Sigma = precision^{-1}
  double log_det_sigma = 0.0;
  double log_z_g = 0.0;  // (p/2) log(2 pi) + 1/2 log_det_sigma
  double grad_norm = 0.0;
  double tol = 0.0;
  bool jittered = false;

  int dim() const { return static_cast<int>(mu.size()); }
};

struct NewtonReport {
  std::vector<double> phi_trace;
  std::vector<double> grad_norms;
  int iterations = 0;
};

// Damped Newton with dense Cholesky and Armijo backtracking (factor 1/2, c = 1e-4).
// Stops when |grad| <= tol * (1 + |grad(init)|).
inline VectorXd find_map(const TargetDensity& target, const VectorXd& init, double tol = 1e-9,
                         int max_iter = 100, NewtonReport* report = nullptr) {
  require(tol > 0.0, "find_map: tol must be > 0");
  require(init.size() == target.dim(), "find_map: init has wrong dimension");

  constexpr double armijo_c = 1e-4;
  VectorXd theta = init;
  double f = target.phi(theta);
  VectorXd g = target.grad(theta);
  double stop = tol * (1.0 + g.norm());
  if (report) {
    report->phi_trace = {f};
    report->grad_norms = {g.norm()};
    report->iterations = 0;
  }

  for (int it = 0; it < max_iter; ++it) {
    if (g.norm() <= stop) return theta;
    MatrixXd h = target.hess(theta);
    Eigen::LLT<MatrixXd> llt(h);
    if (llt.info() != Eigen::Success)
      throw std::runtime_error("find_map: Hessian not positive definite at iteration " +
                               std::to_string(it));
    VectorXd step = llt.solve(-g);
    double slope = g.dot(step);  // < 0 for a descent direction
    // Once the Newton decrement drops below the resolution of phi, the Armijo
    // test cannot certify a decrease; take the plain Newton step instead.
    bool below_resolution =
        -slope <= 64.0 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(f));
    double t = 1.0;
    double f_new;
    VectorXd theta_new;
    for (;;) {
      theta_new = theta + t * step;
      f_new = target.phi(theta_new);
      if (below_resolution || f_new <= f + armijo_c * t * slope) break;
      t *= 0.5;
      if (t < 1e-16)
        throw std::runtime_error("find_map: line search failed at iteration " +
                                 std::to_string(it));
    }
    theta = theta_new;
    f = f_new;
    g = target.grad(theta);
    if (report) {
      report->phi_trace.push_back(f);
      report->grad_norms.push_back(g.norm());
      report->iterations = it + 1;
    }
  }
  if (g.norm() <= stop) return theta;
  throw std::runtime_error("find_map: max_iter exceeded, gradient norm " +
                           std::to_string(g.norm()));
}

// H = hess(mu); Sigma = H^{-1} via Cholesky of H; factor = chol(Sigma). A single
// jitter retry H + eps I with eps = 1e-10 trace(H)/p is allowed and recorded.
inline LaplaceApprox build_laplace(const TargetDensity& target, const VectorXd& mu) {
  int p = target.dim();
  require(mu.size() == p, "build_laplace: mu has wrong dimension");

  LaplaceApprox lap;
  lap.mu = mu;
  lap.precision = target.hess(mu);
  lap.grad_norm = target.grad(mu).norm();

  Eigen::LLT<MatrixXd> llt(lap.precision);
  if (llt.info() != Eigen::Success) {
    double eps = 1e-10 * lap.precision.trace() / static_cast<double>(p);
    MatrixXd jittered = lap.precision;
    jittered.diagonal().array() += eps;
    llt.compute(jittered);
    if (llt.info() != Eigen::Success)
      throw std::runtime_error("build_laplace: Hessian at mode is not positive definite "
                               "(target not strictly log-concave at the mode)");
    lap.precision = jittered;
    lap.jittered = true;
  }

  MatrixXd r = llt.matrixL();
  lap.log_det_sigma = -2.0 * r.diagonal().array().log().sum();

  // Sigma = R^{-T} R^{-1}; refactor to get the lower-triangular square root.
  MatrixXd sigma = llt.solve(MatrixXd::Identity(p, p));
  Eigen::LLT<MatrixXd> llt_sigma(sigma);
  if (llt_sigma.info() != Eigen::Success)
    throw std::runtime_error("build_laplace: covariance factorization failed");
  lap.factor = llt_sigma.matrixL();

  lap.log_z_g = 0.5 * static_cast<double>(p) * std::log(2.0 * std::numbers::pi) +
                0.5 * lap.log_det_sigma;
  return lap;
}

// phi_f in the whitened coordinates theta = mu + L theta_tilde, where the
// Laplace approximation is the standard normal. delta is the deviation from
// the quadratic: delta(t) = phi_tilde(t) - phi_tilde(0) - |t|^2/2.
class StandardizedTarget {
 public:
  StandardizedTarget(const TargetDensity& base, LaplaceApprox lap)
      : base_(&base), lap_(std::move(lap)) {
    require(base.dim() == lap_.dim(), "StandardizedTarget: dimension mismatch");
    phi0_ = base_->phi(lap_.mu);
  }

  int dim() const { return lap_.dim(); }
  const TargetDensity& base() const { return *base_; }
  const LaplaceApprox& laplace() const { return lap_; }
  double phi_at_mode() const { return phi0_; }

  VectorXd to_original(const VectorXd& theta_tilde) const {
    return lap_.mu + lap_.factor * theta_tilde;
  }
  VectorXd to_standardized(const VectorXd& theta) const {
    return lap_.factor.triangularView<Eigen::Lower>().solve(theta - lap_.mu);
  }

  double phi_tilde(const VectorXd& theta_tilde) const { return base_->phi(to_original(theta_tilde)); }

  VectorXd grad_tilde(const VectorXd& theta_tilde) const {
    return lap_.factor.transpose() * base_->grad(to_original(theta_tilde));
  }

  MatrixXd hess_tilde(const VectorXd& theta_tilde) const {
    return lap_.factor.transpose() * base_->hess(to_original(theta_tilde)) * lap_.factor;
  }

  double delta(const VectorXd& theta_tilde) const {
    return phi_tilde(theta_tilde) - phi0_ - 0.5 * theta_tilde.squaredNorm();
  }

  // fused value+gradient in standardized coordinates
  double phi_grad_tilde(const VectorXd& theta_tilde, VectorXd& grad_out) const {
    VectorXd g;
    double v = base_->phi_grad(to_original(theta_tilde), g);
    grad_out = lap_.factor.transpose() * g;
    return v;
  }

  double third_dir_tilde(const VectorXd& theta_tilde, const VectorXd& v1, const VectorXd& v2,
                         const VectorXd& v3) const {
    const MatrixXd& l = lap_.factor;
    return base_->third_dir(to_original(theta_tilde), l * v1, l * v2, l * v3);
  }

  double fourth_dir_tilde(const VectorXd& theta_tilde, const VectorXd& v1, const VectorXd& v2,
                          const VectorXd& v3, const VectorXd& v4) const {
    const MatrixXd& l = lap_.factor;
    return base_->fourth_dir(to_original(theta_tilde), l * v1, l * v2, l * v3, l * v4);
  }

 private:
  const TargetDensity* base_;
  LaplaceApprox lap_;
  double phi0_;
};

inline StandardizedTarget standardize(const TargetDensity& target, LaplaceApprox lap) {
  return StandardizedTarget(target, std::move(lap));
}

// Convenience: MAP + Laplace + standardization in one call.
inline StandardizedTarget fit_standardized(const TargetDensity& target, const VectorXd& init,
                                           double tol = 1e-9, int max_iter = 100) {
  VectorXd mu = find_map(target, init, tol, max_iter);
  LaplaceApprox lap = build_laplace(target, mu);
  lap.tol = tol;
  return standardize(target, std::move(lap));
}

}  // namespace laplace_audit
