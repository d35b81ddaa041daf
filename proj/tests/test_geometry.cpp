#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "laplace_audit/geometry.hpp"

using namespace laplace_audit;

TEST(Spherical, KnownTriangle) {
  VectorXd v(2);
  v << 3.0, 4.0;
  SphericalPoint pt = decompose(v);
  EXPECT_DOUBLE_EQ(pt.r, 5.0);
  EXPECT_DOUBLE_EQ(pt.e[0], 0.6);
  EXPECT_DOUBLE_EQ(pt.e[1], 0.8);
}

TEST(Spherical, UnitVectorFixedPoint) {
  VectorXd v(3);
  v << 0.0, 1.0, 0.0;
  SphericalPoint pt = decompose(v);
  EXPECT_DOUBLE_EQ(pt.r, 1.0);
  EXPECT_TRUE(pt.e.isApprox(v));
}

TEST(Spherical, RoundTrip) {
  RngStream rng(7, 1);
  for (int rep = 0; rep < 50; ++rep) {
    VectorXd v = rng.normal_vector(7);
    SphericalPoint pt = decompose(v);
    EXPECT_NEAR(pt.e.norm(), 1.0, 1e-12);
    EXPECT_LT((compose(pt) - v).norm(), 1e-12 * v.norm());
  }
}

TEST(Spherical, ZeroVectorRejected) {
  EXPECT_THROW(decompose(VectorXd::Zero(3)), std::invalid_argument);
}

TEST(ChiMoment, KnownValues) {
  EXPECT_NEAR(chi_moment(3, 2.0), 3.0, 1e-12);                 // mean of chi^2_3
  EXPECT_NEAR(chi_moment(1, 1.0), std::sqrt(2.0 / std::numbers::pi), 1e-12);
  EXPECT_NEAR(chi_moment(1, 1.0), 0.7978845608028654, 1e-12);
  double ratio = chi_moment(100, 2.0) / 100.0;
  EXPECT_GT(ratio, 0.99);
  EXPECT_LT(ratio, 1.01);
}

TEST(ChiMoment, RejectsBadArgs) {
  EXPECT_THROW(chi_moment(0, 1.0), std::invalid_argument);
  EXPECT_THROW(chi_moment(3, -1.0), std::invalid_argument);
}

// E[r^k] Monte Carlo against the log-gamma closed form, both sampling routes.
TEST(ChiSampling, MomentsMatchClosedForm) {
  const long s = 100000;
  for (int p : {1, 2, 5, 20}) {
    for (double k : {1.0, 2.0, 3.0, 4.0 / 3.0, 16.0 / 3.0}) {
      RngStream rng(42, static_cast<std::uint64_t>(100 * p + 10 * k));
      double sum = 0.0, sumsq = 0.0;
      for (long i = 0; i < s; ++i) {
        double rk = std::pow(sample_chi(p, rng), k);
        sum += rk;
        sumsq += rk * rk;
      }
      double mean = sum / s;
      double var = sumsq / s - mean * mean;
      double se = std::sqrt(var / s);
      double expect = chi_moment(p, k);
      EXPECT_NEAR(mean, expect, 3.0 * se) << "p=" << p << " k=" << k;
    }
  }
}

TEST(ChiSampling, GammaRouteMatchesMoments) {
  const long s = 100000;
  for (int p : {60, 151}) {  // forced through the Gamma path
    RngStream rng(9, p);
    double sum = 0.0, sumsq = 0.0;
    for (long i = 0; i < s; ++i) {
      double r = sample_chi(p, rng);
      sum += r;
      sumsq += r * r;
    }
    double mean = sum / s;
    double se = std::sqrt((sumsq / s - mean * mean) / s);
    EXPECT_NEAR(mean, chi_moment(p, 1.0), 3.0 * se) << "p=" << p;
  }
}

TEST(SphereSampling, ComponentwiseSymmetry) {
  const long s = 50000;
  RngStream rng(3, 3);
  VectorXd acc = VectorXd::Zero(3);
  for (long i = 0; i < s; ++i) acc += sample_sphere(3, rng);
  // each component has variance 1/3 on the sphere
  double se = std::sqrt(1.0 / 3.0 / s);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(acc[i] / s, 0.0, 3.0 * se);
}

// Under decompose of Gaussian draws, r and e are independent.
TEST(SphereSampling, RadiusDirectionUncorrelated) {
  const long s = 50000;
  const int p = 4;
  RngStream rng(11, 5);
  std::vector<double> rs(s);
  std::vector<VectorXd> es(s);
  double rbar = 0.0;
  for (long i = 0; i < s; ++i) {
    SphericalPoint pt = decompose(sample_std_normal(p, rng));
    rs[i] = pt.r;
    es[i] = pt.e;
    rbar += pt.r;
  }
  rbar /= s;
  for (int j = 0; j < p; ++j) {
    double cov = 0.0, var_r = 0.0, var_e = 0.0;
    for (long i = 0; i < s; ++i) {
      cov += (rs[i] - rbar) * es[i][j];
      var_r += (rs[i] - rbar) * (rs[i] - rbar);
      var_e += es[i][j] * es[i][j];
    }
    double corr = cov / std::sqrt(var_r * var_e);
    EXPECT_NEAR(corr, 0.0, 3.0 / std::sqrt(static_cast<double>(s)));
  }
}

TEST(Rng, DeterministicAcrossRuns) {
  RngStream a(123, 456), b(123, 456);
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(a.next_u64(), b.next_u64());
  RngStream c(123, 456), d(123, 456);
  for (int i = 0; i < 100; ++i) {
    ASSERT_EQ(c.normal(), d.normal());
    ASSERT_EQ(c.uniform01(), d.uniform01());
  }
}

TEST(Rng, SubstreamsDiffer) {
  RngStream base(1, 0);
  RngStream s1 = base.substream(1), s2 = base.substream(2);
  int same = 0;
  for (int i = 0; i < 64; ++i) same += s1.next_u64() == s2.next_u64();
  EXPECT_EQ(same, 0);
}

TEST(Rng, UniformInUnitInterval) {
  RngStream rng(5, 5);
  for (int i = 0; i < 10000; ++i) {
    double u = rng.uniform01();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
}
