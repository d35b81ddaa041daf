#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "laplace_audit/laplace.hpp"

namespace laplace_audit {

// Dense, symmetric-redundant order-3 coefficient array of the standardized
// log-density at the mode.
class SymTensor3 {
 public:
  explicit SymTensor3(int p) : p_(p), a_(static_cast<std::size_t>(p) * p * p, 0.0) {}

  int dim() const { return p_; }
  double& operator()(int i, int j, int k) { return a_[idx(i, j, k)]; }
  double operator()(int i, int j, int k) const { return a_[idx(i, j, k)]; }

  void set_symmetric(int i, int j, int k, double v) {
    static constexpr int perms[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2},
                                        {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
    int ix[3] = {i, j, k};
    for (auto& pm : perms) a_[idx(ix[pm[0]], ix[pm[1]], ix[pm[2]])] = v;
  }

  double max_asymmetry() const {
    double m = 0.0;
    for (int i = 0; i < p_; ++i)
      for (int j = 0; j < p_; ++j)
        for (int k = 0; k < p_; ++k) {
          double v = (*this)(i, j, k);
          m = std::max(m, std::abs(v - (*this)(j, i, k)));
          m = std::max(m, std::abs(v - (*this)(i, k, j)));
        }
    return m;
  }

 private:
  std::size_t idx(int i, int j, int k) const {
    return (static_cast<std::size_t>(i) * p_ + j) * p_ + k;
  }
  int p_;
  std::vector<double> a_;
};

class SymTensor4 {
 public:
  explicit SymTensor4(int p) : p_(p), a_(static_cast<std::size_t>(p) * p * p * p, 0.0) {}

  int dim() const { return p_; }
  double& operator()(int i, int j, int k, int l) { return a_[idx(i, j, k, l)]; }
  double operator()(int i, int j, int k, int l) const { return a_[idx(i, j, k, l)]; }

  void set_symmetric(int i, int j, int k, int l, double v) {
    std::array<int, 4> ix = {i, j, k, l};
    std::sort(ix.begin(), ix.end());
    do {
      a_[idx(ix[0], ix[1], ix[2], ix[3])] = v;
    } while (std::next_permutation(ix.begin(), ix.end()));
  }

  double max_asymmetry() const {
    double m = 0.0;
    for (int i = 0; i < p_; ++i)
      for (int j = 0; j < p_; ++j)
        for (int k = 0; k < p_; ++k)
          for (int l = 0; l < p_; ++l) {
            double v = (*this)(i, j, k, l);
            m = std::max(m, std::abs(v - (*this)(j, i, k, l)));
            m = std::max(m, std::abs(v - (*this)(i, j, l, k)));
            m = std::max(m, std::abs(v - (*this)(k, l, i, j)));
          }
    return m;
  }

 private:
  std::size_t idx(int i, int j, int k, int l) const {
    return ((static_cast<std::size_t>(i) * p_ + j) * p_ + k) * p_ + l;
  }
  int p_;
  std::vector<double> a_;
};

enum class TensorMethod { analytic, finite_diff };

// T3[i,j,k] = phi_tilde^(3)(0)[e_i,e_j,e_k], T4 likewise at fourth order.
// analytic contracts the base model's directional derivatives with the columns
// of L; finite_diff differentiates hess_tilde at 0 and symmetrizes.
inline std::pair<SymTensor3, SymTensor4> compute_tensors(const StandardizedTarget& st,
                                                         TensorMethod method,
                                                         int guard = 150) {
  int p = st.dim();
  if (p > guard)
    throw std::invalid_argument(
        "compute_tensors: p = " + std::to_string(p) + " exceeds the dense-tensor guard (" +
        std::to_string(guard) + "); use the sampling estimators instead");
  if (method == TensorMethod::analytic)
    require(st.base().analytic_higher_derivs(),
            "compute_tensors: analytic method needs analytic higher derivatives");

  SymTensor3 t3(p);
  SymTensor4 t4(p);
  VectorXd zero = VectorXd::Zero(p);

  if (method == TensorMethod::analytic) {
    MatrixXd basis = MatrixXd::Identity(p, p);
    for (int i = 0; i < p; ++i)
      for (int j = i; j < p; ++j)
        for (int k = j; k < p; ++k)
          t3.set_symmetric(i, j, k, st.third_dir_tilde(zero, basis.col(i), basis.col(j),
                                                       basis.col(k)));
    for (int i = 0; i < p; ++i)
      for (int j = i; j < p; ++j)
        for (int k = j; k < p; ++k)
          for (int l = k; l < p; ++l)
            t4.set_symmetric(i, j, k, l, st.fourth_dir_tilde(zero, basis.col(i), basis.col(j),
                                                             basis.col(k), basis.col(l)));
    return {std::move(t3), std::move(t4)};
  }

  double h = std::cbrt(std::numeric_limits<double>::epsilon());
  std::vector<MatrixXd> hp(p), hm(p);
  for (int k = 0; k < p; ++k) {
    VectorXd dir = VectorXd::Unit(p, k);
    hp[k] = st.hess_tilde(h * dir);
    hm[k] = st.hess_tilde(-h * dir);
  }
  // raw third derivative, then average over all index permutations
  for (int i = 0; i < p; ++i)
    for (int j = i; j < p; ++j)
      for (int k = j; k < p; ++k) {
        double raw_k = (hp[k](i, j) - hm[k](i, j)) / (2.0 * h);
        double raw_j = (hp[j](i, k) - hm[j](i, k)) / (2.0 * h);
        double raw_i = (hp[i](j, k) - hm[i](j, k)) / (2.0 * h);
        t3.set_symmetric(i, j, k, (raw_k + raw_j + raw_i) / 3.0);
      }

  double h2 = std::sqrt(h);  // larger step for the second difference
  for (int k = 0; k < p; ++k)
    for (int l = k; l < p; ++l) {
      VectorXd dk = VectorXd::Unit(p, k), dl = VectorXd::Unit(p, l);
      MatrixXd second = (st.hess_tilde(h2 * dk + h2 * dl) - st.hess_tilde(h2 * dk - h2 * dl) -
                         st.hess_tilde(-h2 * dk + h2 * dl) + st.hess_tilde(-h2 * dk - h2 * dl)) /
                        (4.0 * h2 * h2);
      for (int i = 0; i < p; ++i)
        for (int j = i; j < p; ++j) {
          // average the three distinct pairings of (i,j | k,l) done elsewhere;
          // here store the raw value, symmetrization pass below
          t4(i, j, k, l) = second(i, j);
          t4(j, i, k, l) = second(i, j);
          t4(i, j, l, k) = second(i, j);
          t4(j, i, l, k) = second(i, j);
        }
    }
  // symmetrize over the pairings (ij|kl), (ik|jl), (il|jk)
  SymTensor4 sym(p);
  for (int i = 0; i < p; ++i)
    for (int j = i; j < p; ++j)
      for (int k = j; k < p; ++k)
        for (int l = k; l < p; ++l) {
          double v = (t4(i, j, k, l) + t4(i, k, j, l) + t4(i, l, j, k)) / 3.0;
          sym.set_symmetric(i, j, k, l, v);
        }
  return {std::move(t3), std::move(sym)};
}

// Contracted inner sums shared by both closed forms; computed once.
struct TaylorSums {
  double t3_sq = 0.0;       // sum T3_{ijk}^2
  double t3_trace_sq = 0.0; // sum_i (sum_j T3_{ijj})^2
  double t4_sq = 0.0;       // sum T4_{ijkl}^2
  double t4_trace_sq = 0.0; // sum_{ij} (sum_k T4_{ijkk})^2
  double t4_full_trace = 0.0; // sum_{ij} T4_{iijj}
};

inline TaylorSums compute_taylor_sums(const SymTensor3& t3, const SymTensor4& t4) {
  require(t3.dim() == t4.dim(), "taylor: tensor dimensions differ");
  int p = t3.dim();
  TaylorSums s;
  for (int i = 0; i < p; ++i) {
    double tr = 0.0;
    for (int j = 0; j < p; ++j) {
      tr += t3(i, j, j);
      for (int k = 0; k < p; ++k) s.t3_sq += t3(i, j, k) * t3(i, j, k);
    }
    s.t3_trace_sq += tr * tr;
  }
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j) {
      double tr = 0.0;
      for (int k = 0; k < p; ++k) {
        tr += t4(i, j, k, k);
        for (int l = 0; l < p; ++l) s.t4_sq += t4(i, j, k, l) * t4(i, j, k, l);
      }
      s.t4_trace_sq += tr * tr;
      if (i == j) s.t4_full_trace += tr;  // sum_k T4_{iikk}
    }
  return s;
}

// Closed-form KL variance of the cubic+quartic Taylor model of delta:
// Var_g[(1/6) T3[t,t,t] + (1/24) T4[t,t,t,t]].
inline double taylor_klvar(const TaylorSums& s) {
  return s.t3_sq / 6.0 + s.t3_trace_sq / 4.0 + s.t4_sq / 24.0 + s.t4_trace_sq / 8.0;
}
inline double taylor_klvar(const SymTensor3& t3, const SymTensor4& t4) {
  return taylor_klvar(compute_taylor_sums(t3, t4));
}

// Closed-form LSI term under the same Taylor model and r ~ sqrt(p).
inline double taylor_lsi(const TaylorSums& s, int p) {
  return (0.75 * s.t3_sq + 1.125 * s.t3_trace_sq + s.t4_sq / 3.0 + s.t4_trace_sq +
          0.125 * s.t4_full_trace * s.t4_full_trace) /
         static_cast<double>(p);
}
inline double taylor_lsi(const SymTensor3& t3, const SymTensor4& t4) {
  return taylor_lsi(compute_taylor_sums(t3, t4), t3.dim());
}

// Third-order truncation (T3 terms only) of taylor_klvar.
inline double taylor_klvar_third_order(const TaylorSums& s) {
  return s.t3_sq / 6.0 + s.t3_trace_sq / 4.0;
}

}  // namespace laplace_audit
