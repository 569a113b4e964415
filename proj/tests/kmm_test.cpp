#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>

#include "kmcl/kmm.hpp"
#include "kmcl/rng.hpp"
#include "kmcl/similarity.hpp"

using namespace kmcl;

namespace {

Eigen::VectorXd random_vec(Rng& rng, int n, double lo = -1.0, double hi = 1.0) {
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v(i) = rng.uniform(lo, hi);
  return v;
}

KmmWeights random_weights(const KmmConfig& cfg, Rng& rng) {
  KmmWeights w = KmmWeights::zeros(cfg);
  auto fill = [&](Eigen::MatrixXd& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = rng.normal();
  };
  auto fillv = [&](Eigen::VectorXd& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = rng.normal();
  };
  fill(w.w_pi);
  fill(w.w_mu);
  fill(w.w_var);
  fillv(w.b_pi);
  fillv(w.b_mu);
  fillv(w.b_var);
  return w;
}

}  // namespace

TEST(KmmForward, ZeroWeightsGiveZeroActivations) {
  KmmConfig cfg{.num_classes = 3, .feature_dim = 5};
  const KmmWeights w = KmmWeights::zeros(cfg);
  Rng rng(1);
  const auto a = kmm_forward(random_vec(rng, 5), w, cfg);
  EXPECT_TRUE(a.a_pi.isZero());
  EXPECT_TRUE(a.a_mu.isZero());
  EXPECT_TRUE(a.a_var.isZero());
}

TEST(KmmForward, RowSelectorPicksWeightEntry) {
  KmmConfig cfg{.num_classes = 4, .feature_dim = 4};
  Rng rng(2);
  KmmWeights w = KmmWeights::zeros(cfg);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) w.w_pi(i, j) = rng.normal();
  for (int j = 0; j < 4; ++j) {
    const Eigen::VectorXd e = Eigen::VectorXd::Unit(4, j);
    const auto a = kmm_forward(e, w, cfg);
    for (int k = 0; k < 4; ++k) EXPECT_DOUBLE_EQ(a.a_pi(k), w.w_pi(k, j));
  }
}

TEST(KmmForward, MatchesNaiveTripleLoop) {
  Rng rng(3);
  for (const bool aniso : {false, true}) {
    KmmConfig cfg{.num_classes = 3, .feature_dim = 6, .anisotropic = aniso};
    const KmmWeights w = random_weights(cfg, rng);
    const Eigen::VectorXd f = random_vec(rng, 6);
    const auto a = kmm_forward(f, w, cfg);

    auto naive = [&](const Eigen::MatrixXd& mat, const Eigen::VectorXd& bias, int row) {
      double s = bias(row);
      for (int j = 0; j < mat.cols(); ++j) s += mat(row, j) * f(j);
      return s;
    };
    for (int r = 0; r < cfg.num_classes; ++r)
      EXPECT_NEAR(a.a_pi(r), naive(w.w_pi, w.b_pi, r), 1e-12);
    for (int r = 0; r < cfg.head_rows(); ++r) {
      EXPECT_NEAR(a.a_mu(r), naive(w.w_mu, w.b_mu, r), 1e-12);
      EXPECT_NEAR(a.a_var(r), naive(w.w_var, w.b_var, r), 1e-12);
    }
  }
}

TEST(KmmForward, ShapeMismatchThrows) {
  KmmConfig cfg{.num_classes = 2, .feature_dim = 3};
  const KmmWeights w = KmmWeights::zeros(cfg);
  EXPECT_THROW(kmm_forward(Eigen::VectorXd::Zero(4), w, cfg), std::invalid_argument);
}

TEST(KmmActivate, SpecPointValues) {
  KmmConfig cfg{.num_classes = 1, .feature_dim = 2};
  KmmActivations a;
  a.a_pi = Eigen::VectorXd::Zero(1);
  a.a_mu = Eigen::VectorXd::Zero(1);
  a.a_var = Eigen::VectorXd::Zero(1);
  const auto p = kmm_activate(a, cfg);
  EXPECT_DOUBLE_EQ(p.pi(0), 0.5);                    // sigmoid(0)
  EXPECT_DOUBLE_EQ(p.var(0, 0), 2.0 + cfg.elu_eps);  // ELU(0) + 2 + eps

  a.a_var(0) = -20.0;
  const auto p2 = kmm_activate(a, cfg);
  EXPECT_NEAR(p2.var(0, 0), 1.0 + cfg.elu_eps + std::exp(-20.0), 1e-15);
}

TEST(KmmActivate, RangeAndMonotonicityInvariants) {
  KmmConfig cfg{.num_classes = 1, .feature_dim = 3};
  double prev_pi = -1.0, prev_var = -1.0;
  for (double x = -30.0; x <= 30.0; x += 0.37) {
    KmmActivations a;
    a.a_pi = Eigen::VectorXd::Constant(1, x);
    a.a_mu = Eigen::VectorXd::Constant(1, x);
    a.a_var = Eigen::VectorXd::Constant(1, x);
    const auto p = kmm_activate(a, cfg);
    EXPECT_GT(p.pi(0), 0.0);
    EXPECT_LT(p.pi(0), 1.0);
    EXPECT_GE(p.var(0, 0), 1.0 + cfg.elu_eps);
    EXPECT_GT(p.pi(0), prev_pi);
    EXPECT_GT(p.var(0, 0), prev_var);
    EXPECT_DOUBLE_EQ(p.mu(0, 0), x);
    prev_pi = p.pi(0);
    prev_var = p.var(0, 0);
  }
}

TEST(MixtureDensity, SpecExamples) {
  KernelParams p;
  p.anisotropic = false;
  p.feature_dim = 4;
  p.pi = Eigen::VectorXd::Constant(2, 0.5);
  p.mu = Eigen::MatrixXd::Constant(2, 1, 0.3);
  p.var = Eigen::MatrixXd::Constant(2, 1, 1.7);
  const Eigen::VectorXd f = Eigen::VectorXd::Constant(4, 0.3);  // centered on both kernels

  // Single centered component with pi=1.
  KernelParams one = p;
  one.pi(0) = 1.0;
  EXPECT_DOUBLE_EQ(mixture_density(f, one, {0}), 1.0);
  // Empty set.
  EXPECT_DOUBLE_EQ(mixture_density(f, p, {}), 0.0);
  // Two centered halves.
  EXPECT_DOUBLE_EQ(mixture_density(f, p, {0, 1}), 1.0);
}

TEST(MixtureDensity, SubsetAndCoefficientBounds) {
  Rng rng(17);
  KmmConfig cfg{.num_classes = 5, .feature_dim = 4};
  for (int t = 0; t < 200; ++t) {
    const KmmWeights w = random_weights(cfg, rng);
    const Eigen::VectorXd f = random_vec(rng, 4, -2.0, 2.0);
    const auto params = kmm_activate(kmm_forward(f, w, cfg), cfg);
    std::vector<int> sub, all;
    for (int k = 0; k < 5; ++k) {
      all.push_back(k);
      if (rng.uniform() < 0.4) sub.push_back(k);
    }
    const double gs = mixture_density(f, params, sub);
    const double gy = mixture_density(f, params, all);
    EXPECT_LE(gs, gy);  // exact: ascending-k nonnegative summation
    EXPECT_LE(gs, params.pi.sum());
    EXPECT_LE(gy, static_cast<double>(all.size()));
  }
}

TEST(ParamsToKernelSpec, BridgesBothConfigurations) {
  KernelParams iso;
  iso.anisotropic = false;
  iso.feature_dim = 16;
  iso.pi = Eigen::VectorXd::Constant(1, 0.9);
  iso.mu = Eigen::MatrixXd::Constant(1, 1, 0.3);
  iso.var = Eigen::MatrixXd::Constant(1, 1, 2.0);
  const KernelSpec s = params_to_kernelspec(iso, 0);
  EXPECT_EQ(s.kind, CovKind::Isotropic);
  EXPECT_EQ(s.dim, 16);
  EXPECT_TRUE(s.uniform_mean);
  EXPECT_DOUBLE_EQ(s.mean(7), 0.3);
  EXPECT_DOUBLE_EQ(s.var_iso, 2.0);
  EXPECT_DOUBLE_EQ(bhattacharyya_isotropic(s, s), 1.0);  // roundtrip self-similarity

  Rng rng(19);
  KernelParams aniso;
  aniso.anisotropic = true;
  aniso.feature_dim = 6;
  aniso.pi = Eigen::VectorXd::Constant(2, 0.5);
  aniso.mu = Eigen::MatrixXd::Random(2, 6);
  aniso.var = Eigen::MatrixXd::Constant(2, 6, 1.0) + Eigen::MatrixXd::Random(2, 6).cwiseAbs();
  const KernelSpec d = params_to_kernelspec(aniso, 1);
  EXPECT_EQ(d.kind, CovKind::Diagonal);
  EXPECT_EQ(d.dim, 6);
  EXPECT_DOUBLE_EQ(bhattacharyya_diagonal(d, d), 1.0);

  EXPECT_THROW(params_to_kernelspec(aniso, 2), std::invalid_argument);
}
