#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>

#include "laplace_audit/common.hpp"
#include "laplace_audit/geometry.hpp"
#include "laplace_audit/rng.hpp"

namespace laplace_audit {

// Unnormalized negative log-density phi with derivatives. Additive constants in
// phi are irrelevant everywhere downstream. Implementations must be pure in
// their inputs: safe for concurrent read-only use.
class TargetDensity {
 public:
  virtual ~TargetDensity() = default;

  virtual int dim() const = 0;
  virtual double phi(const VectorXd& theta) const = 0;
  virtual VectorXd grad(const VectorXd& theta) const = 0;
  virtual MatrixXd hess(const VectorXd& theta) const = 0;

  virtual bool analytic_higher_derivs() const { return false; }

  // Directional third derivative phi^(3)(theta)[v1,v2,v3]. Default: central
  // difference of the Hessian, step h = eps^{1/3} (1 + max|theta_i|),
  // accuracy target ~1e-3 relative.
  virtual double third_dir(const VectorXd& theta, const VectorXd& v1, const VectorXd& v2,
                           const VectorXd& v3) const {
    double h = fd_step(theta);
    MatrixXd hp = hess(theta + h * v3);
    MatrixXd hm = hess(theta - h * v3);
    return v1.dot((hp - hm) * v2) / (2.0 * h);
  }

  // Directional fourth derivative via a second difference of the Hessian.
  virtual double fourth_dir(const VectorXd& theta, const VectorXd& v1, const VectorXd& v2,
                            const VectorXd& v3, const VectorXd& v4) const {
    double h = fd_step(theta);
    MatrixXd hpp = hess(theta + h * v3 + h * v4);
    MatrixXd hpm = hess(theta + h * v3 - h * v4);
    MatrixXd hmp = hess(theta - h * v3 + h * v4);
    MatrixXd hmm = hess(theta - h * v3 - h * v4);
    return v1.dot((hpp - hpm - hmp + hmm) * v2) / (4.0 * h * h);
  }

  // Fused value+gradient; hot path for samplers. Overrides can share work.
  virtual double phi_grad(const VectorXd& theta, VectorXd& grad_out) const {
    grad_out = grad(theta);
    return phi(theta);
  }

 protected:
  static double fd_step(const VectorXd& theta) {
    double scale = theta.size() > 0 ? theta.cwiseAbs().maxCoeff() : 0.0;
    return std::cbrt(std::numeric_limits<double>::epsilon()) * (1.0 + scale);
  }

  void check_dim(const VectorXd& theta) const {
    if (theta.size() != dim())
      throw std::invalid_argument("TargetDensity: theta has dimension " +
                                  std::to_string(theta.size()) + ", expected " +
                                  std::to_string(dim()));
  }
};

struct LogisticDataset {
  MatrixXd X;       // n x p predictors
  VectorXd y;       // labels in {-1,+1}
  double prior_sd;  // Gaussian prior standard deviation

  long n() const { return X.rows(); }
  int p() const { return static_cast<int>(X.cols()); }

  void validate() const {
    require(prior_sd > 0.0, "LogisticDataset: prior_sd must be > 0");
    require(X.rows() == y.size(), "LogisticDataset: X and y row counts differ");
    for (long i = 0; i < y.size(); ++i)
      require(y[i] == 1.0 || y[i] == -1.0, "LogisticDataset: labels must be +-1");
  }
};

// phi(theta) = |theta|^2 / (2 sd^2) + sum_i log(1 + exp(-y_i theta^T x_i))
class LogisticTarget : public TargetDensity {
 public:
  explicit LogisticTarget(LogisticDataset data) : data_(std::move(data)) {
    data_.validate();
    inv_var_ = 1.0 / (data_.prior_sd * data_.prior_sd);
  }

  int dim() const override { return data_.p(); }
  const LogisticDataset& data() const { return data_; }

  double phi(const VectorXd& theta) const override {
    check_dim(theta);
    Eigen::ArrayXd t = activations(theta);
    // log(1+exp(-t)) = max(-t,0) + log(1+exp(-|t|)), vectorized
    Eigen::ArrayXd e = (-t.abs()).exp();
    double v = ((-t).max(0.0) + (1.0 + e).log()).sum();
    return v + 0.5 * inv_var_ * theta.squaredNorm();
  }

  VectorXd grad(const VectorXd& theta) const override {
    check_dim(theta);
    Eigen::ArrayXd t = activations(theta);
    return inv_var_ * theta + data_.X.transpose() * ((sigmoid(t) - 1.0) * data_.y.array()).matrix();
  }

  double phi_grad(const VectorXd& theta, VectorXd& grad_out) const override {
    check_dim(theta);
    Eigen::ArrayXd t = activations(theta);
    Eigen::ArrayXd e = (-t.abs()).exp();
    double v = ((-t).max(0.0) + (1.0 + e).log()).sum() + 0.5 * inv_var_ * theta.squaredNorm();
    Eigen::ArrayXd sig = (t >= 0.0).select(1.0 / (1.0 + e), e / (1.0 + e));
    grad_out = inv_var_ * theta + data_.X.transpose() * ((sig - 1.0) * data_.y.array()).matrix();
    return v;
  }

  MatrixXd hess(const VectorXd& theta) const override {
    check_dim(theta);
    Eigen::ArrayXd sig = sigmoid(activations(theta));
    VectorXd w = (sig * (1.0 - sig)).matrix();
    MatrixXd h = data_.X.transpose() * w.asDiagonal() * data_.X;
    h.diagonal().array() += inv_var_;
    return h;
  }

  bool analytic_higher_derivs() const override { return true; }

  double third_dir(const VectorXd& theta, const VectorXd& v1, const VectorXd& v2,
                   const VectorXd& v3) const override {
    check_dim(theta);
    Eigen::ArrayXd s = sigmoid(activations(theta));
    Eigen::ArrayXd a1 = (data_.X * v1).array(), a2 = (data_.X * v2).array(),
                   a3 = (data_.X * v3).array();
    return (s * (1.0 - s) * (1.0 - 2.0 * s) * data_.y.array() * a1 * a2 * a3).sum();
  }

  double fourth_dir(const VectorXd& theta, const VectorXd& v1, const VectorXd& v2,
                    const VectorXd& v3, const VectorXd& v4) const override {
    check_dim(theta);
    Eigen::ArrayXd s = sigmoid(activations(theta));
    Eigen::ArrayXd a1 = (data_.X * v1).array(), a2 = (data_.X * v2).array(),
                   a3 = (data_.X * v3).array(), a4 = (data_.X * v4).array();
    return (s * (1.0 - s) * (1.0 - 6.0 * s + 6.0 * s * s) * a1 * a2 * a3 * a4).sum();
  }

 private:
  // t_i = y_i theta^T x_i
  Eigen::ArrayXd activations(const VectorXd& theta) const {
    return (data_.X * theta).array() * data_.y.array();
  }

  static Eigen::ArrayXd sigmoid(const Eigen::ArrayXd& t) {
    Eigen::ArrayXd e = (-t.abs()).exp();
    return (t >= 0.0).select(1.0 / (1.0 + e), e / (1.0 + e));
  }

  LogisticDataset data_;
  double inv_var_;
};

inline LogisticTarget logistic_target(LogisticDataset data) {
  return LogisticTarget(std::move(data));
}

// phi(theta) = 1/2 (theta-mu)^T H (theta-mu); exact Laplace case.
class GaussianTarget : public TargetDensity {
 public:
  GaussianTarget(VectorXd mu, MatrixXd precision) : mu_(std::move(mu)), h_(std::move(precision)) {
    require(h_.rows() == h_.cols() && h_.rows() == mu_.size(),
            "GaussianTarget: precision must be square and match mu");
    require(h_.isApprox(h_.transpose(), 1e-12), "GaussianTarget: precision must be symmetric");
    Eigen::LLT<MatrixXd> llt(h_);
    if (llt.info() != Eigen::Success)
      throw std::invalid_argument("GaussianTarget: precision is not positive definite");
  }

  int dim() const override { return static_cast<int>(mu_.size()); }
  double phi(const VectorXd& theta) const override {
    check_dim(theta);
    VectorXd d = theta - mu_;
    return 0.5 * d.dot(h_ * d);
  }
  VectorXd grad(const VectorXd& theta) const override {
    check_dim(theta);
    return h_ * (theta - mu_);
  }
  MatrixXd hess(const VectorXd& theta) const override {
    check_dim(theta);
    return h_;
  }
  bool analytic_higher_derivs() const override { return true; }
  double third_dir(const VectorXd&, const VectorXd&, const VectorXd&,
                   const VectorXd&) const override {
    return 0.0;
  }
  double fourth_dir(const VectorXd&, const VectorXd&, const VectorXd&, const VectorXd&,
                    const VectorXd&) const override {
    return 0.0;
  }

 private:
  VectorXd mu_;
  MatrixXd h_;
};

inline GaussianTarget gaussian_target(VectorXd mu, MatrixXd precision) {
  return GaussianTarget(std::move(mu), std::move(precision));
}

// phi(theta) = theta^2/2 + eps theta^4; MAP at 0, hess(0) = 1, so the Laplace
// approximation is exactly standard normal and delta(t) = eps t^4.
class Quartic1DTarget : public TargetDensity {
 public:
  explicit Quartic1DTarget(double eps) : eps_(eps) {
    require(eps > 0.0, "Quartic1DTarget: eps must be > 0");
  }

  double eps() const { return eps_; }
  int dim() const override { return 1; }
  double phi(const VectorXd& theta) const override {
    check_dim(theta);
    double t = theta[0];
    return 0.5 * t * t + eps_ * t * t * t * t;
  }
  VectorXd grad(const VectorXd& theta) const override {
    check_dim(theta);
    double t = theta[0];
    VectorXd g(1);
    g[0] = t + 4.0 * eps_ * t * t * t;
    return g;
  }
  MatrixXd hess(const VectorXd& theta) const override {
    check_dim(theta);
    double t = theta[0];
    MatrixXd h(1, 1);
    h(0, 0) = 1.0 + 12.0 * eps_ * t * t;
    return h;
  }
  bool analytic_higher_derivs() const override { return true; }
  double third_dir(const VectorXd& theta, const VectorXd& v1, const VectorXd& v2,
                   const VectorXd& v3) const override {
    return 24.0 * eps_ * theta[0] * v1[0] * v2[0] * v3[0];
  }
  double fourth_dir(const VectorXd&, const VectorXd& v1, const VectorXd& v2, const VectorXd& v3,
                    const VectorXd& v4) const override {
    return 24.0 * eps_ * v1[0] * v2[0] * v3[0] * v4[0];
  }

 private:
  double eps_;
};

inline Quartic1DTarget quartic_target_1d(double eps) { return Quartic1DTarget(eps); }

// phi(theta) = -log( 1/2 N(theta;0,1) + 1/2 N(theta;0,sigma^2) ), computed in
// the log domain. Not log-concave; counterexample demo only.
class Mixture1DTarget : public TargetDensity {
 public:
  explicit Mixture1DTarget(double sigma_wide) : sigma_(sigma_wide) {
    require(sigma_wide >= 1.0, "Mixture1DTarget: sigma_wide must be >= 1");
  }

  double sigma_wide() const { return sigma_; }
  int dim() const override { return 1; }

  double phi(const VectorXd& theta) const override {
    check_dim(theta);
    double t = theta[0];
    double l1 = comp_log(t, 1.0);
    double l2 = comp_log(t, sigma_);
    double m = std::max(l1, l2);
    return -(m + std::log(0.5 * std::exp(l1 - m) + 0.5 * std::exp(l2 - m)));
  }

  VectorXd grad(const VectorXd& theta) const override {
    check_dim(theta);
    double t = theta[0];
    double w1 = weight1(t);
    VectorXd g(1);
    g[0] = w1 * t + (1.0 - w1) * t / (sigma_ * sigma_);
    return g;
  }

  MatrixXd hess(const VectorXd& theta) const override {
    check_dim(theta);
    double t = theta[0];
    double w1 = weight1(t);
    double s1 = -t, s2 = -t / (sigma_ * sigma_);
    double ssq = w1 * (s1 * s1 - 1.0) + (1.0 - w1) * (s2 * s2 - 1.0 / (sigma_ * sigma_));
    double sbar = w1 * s1 + (1.0 - w1) * s2;
    MatrixXd h(1, 1);
    h(0, 0) = -(ssq - sbar * sbar);
    return h;
  }

 private:
  // normalized component log-density log N(t; 0, s^2)
  static double comp_log(double t, double s) {
    return -0.5 * t * t / (s * s) - std::log(s) - 0.5 * std::log(2.0 * std::numbers::pi);
  }
  // posterior weight of the narrow component
  double weight1(double t) const {
    double l1 = comp_log(t, 1.0);
    double l2 = comp_log(t, sigma_);
    return logistic_sigmoid(l1 - l2);
  }

  double sigma_;
};

inline Mixture1DTarget mixture_target_1d(double sigma_wide) { return Mixture1DTarget(sigma_wide); }

// Synthetic data per the experiment protocol: X_ij ~ N(0, 1.5^2),
// P(Y=1|x) = sigmoid(theta0^T x) with theta0 = (1/sqrt p, ..., 1/sqrt p),
// prior_sd = 1/sqrt(p). Deterministic given seed.
inline LogisticDataset generate_logistic_data(long n, int p, std::uint64_t seed) {
  require(n >= 1, "generate_logistic_data: n must be >= 1");
  require(p >= 1, "generate_logistic_data: p must be >= 1");
  RngStream rng(seed, 0xda7a);
  LogisticDataset d;
  d.X.resize(n, p);
  d.y.resize(n);
  double t0 = 1.0 / std::sqrt(static_cast<double>(p));
  for (long i = 0; i < n; ++i) {
    double dot = 0.0;
    for (int j = 0; j < p; ++j) {
      double x = 1.5 * rng.normal();
      d.X(i, j) = x;
      dot += t0 * x;
    }
    d.y[i] = rng.uniform01() < logistic_sigmoid(dot) ? 1.0 : -1.0;
  }
  d.prior_sd = t0;
  return d;
}

inline VectorXd logistic_theta0(int p) {
  return VectorXd::Constant(p, 1.0 / std::sqrt(static_cast<double>(p)));
}

// CSV with header y,x1,...,xp
inline void save_dataset_csv(const LogisticDataset& d, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_dataset_csv: cannot open " + path);
  out << "y";
  for (int j = 1; j <= d.p(); ++j) out << ",x" << j;
  out << "\n";
  out.precision(17);
  for (long i = 0; i < d.n(); ++i) {
    out << (d.y[i] > 0 ? 1 : -1);
    for (int j = 0; j < d.p(); ++j) out << "," << d.X(i, j);
    out << "\n";
  }
}

inline LogisticDataset load_dataset_csv(const std::string& path, double prior_sd) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_dataset_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("load_dataset_csv: empty file");
  int p = 0;
  {
    std::stringstream hs(line);
    std::string col;
    bool first = true;
    while (std::getline(hs, col, ',')) {
      if (first) {
        require(col == "y", "load_dataset_csv: first column must be y");
        first = false;
      } else {
        ++p;
      }
    }
  }
  std::vector<double> ys;
  std::vector<double> xs;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ls(line);
    std::string cell;
    std::getline(ls, cell, ',');
    ys.push_back(std::stod(cell));
    for (int j = 0; j < p; ++j) {
      if (!std::getline(ls, cell, ','))
        throw std::runtime_error("load_dataset_csv: short row in " + path);
      xs.push_back(std::stod(cell));
    }
  }
  LogisticDataset d;
  long n = static_cast<long>(ys.size());
  d.X.resize(n, p);
  d.y.resize(n);
  for (long i = 0; i < n; ++i) {
    d.y[i] = ys[static_cast<std::size_t>(i)];
    for (int j = 0; j < p; ++j) d.X(i, j) = xs[static_cast<std::size_t>(i) * p + j];
  }
  d.prior_sd = prior_sd;
  d.validate();
  return d;
}

}  // namespace laplace_audit
