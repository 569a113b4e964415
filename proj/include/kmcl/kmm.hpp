#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "kmcl/kernels.hpp"
#include "kmcl/rng.hpp"

namespace kmcl {

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double elu(double x) { return x > 0.0 ? x : std::expm1(x); }

struct KmmConfig {
  int num_classes = 0;   // K
  int feature_dim = 0;   // M
  bool anisotropic = false;
  double elu_eps = 1e-7;

  void validate() const {
    if (num_classes < 1) throw std::invalid_argument("kmm: num_classes must be >= 1");
    if (feature_dim < 1) throw std::invalid_argument("kmm: feature_dim must be >= 1");
    if (elu_eps <= 0.0) throw std::invalid_argument("kmm: elu_eps must be positive");
  }

  // Rows of the mu/var heads: K in the isotropic case, K*M in the anisotropic
  // case (K stacked M x M blocks).
  int head_rows() const { return anisotropic ? num_classes * feature_dim : num_classes; }
};

/// Fully connected head weights. w_pi is K x M. In the isotropic
/// configuration w_mu / w_var are K x M with K-vector biases; anisotropic
/// stacks K blocks of M x M rows with K*M biases.
struct KmmWeights {
  Eigen::MatrixXd w_pi, w_mu, w_var;
  Eigen::VectorXd b_pi, b_mu, b_var;

  static KmmWeights zeros(const KmmConfig& cfg) {
    cfg.validate();
    KmmWeights w;
    w.w_pi = Eigen::MatrixXd::Zero(cfg.num_classes, cfg.feature_dim);
    w.w_mu = Eigen::MatrixXd::Zero(cfg.head_rows(), cfg.feature_dim);
    w.w_var = Eigen::MatrixXd::Zero(cfg.head_rows(), cfg.feature_dim);
    w.b_pi = Eigen::VectorXd::Zero(cfg.num_classes);
    w.b_mu = Eigen::VectorXd::Zero(cfg.head_rows());
    w.b_var = Eigen::VectorXd::Zero(cfg.head_rows());
    return w;
  }

  /// Mixture-coefficient and mean weights ~ U(0, 0.1), variance weights
  /// constant 1, biases 0.
  static KmmWeights init(const KmmConfig& cfg, Rng& rng) {
    KmmWeights w = zeros(cfg);
    for (Eigen::Index i = 0; i < w.w_pi.rows(); ++i)
      for (Eigen::Index j = 0; j < w.w_pi.cols(); ++j) w.w_pi(i, j) = rng.uniform(0.0, 0.1);
    for (Eigen::Index i = 0; i < w.w_mu.rows(); ++i)
      for (Eigen::Index j = 0; j < w.w_mu.cols(); ++j) w.w_mu(i, j) = rng.uniform(0.0, 0.1);
    w.w_var.setOnes();
    return w;
  }

  void check_shapes(const KmmConfig& cfg) const {
    const int k = cfg.num_classes, m = cfg.feature_dim, hr = cfg.head_rows();
    if (w_pi.rows() != k || w_pi.cols() != m || b_pi.size() != k ||
        w_mu.rows() != hr || w_mu.cols() != m || b_mu.size() != hr ||
        w_var.rows() != hr || w_var.cols() != m || b_var.size() != hr)
      throw std::invalid_argument("kmm: weight shapes inconsistent with config");
  }
};

/// Raw head activations for one sample.
struct KmmActivations {
  Eigen::VectorXd a_pi;   // K
  Eigen::VectorXd a_mu;   // K (isotropic) or K*M (anisotropic)
  Eigen::VectorXd a_var;  // same length as a_mu
};

/// Per-class mixture parameters for one sample. mu/var are K x 1 in the
/// isotropic configuration and K x M in the anisotropic one.
struct KernelParams {
  Eigen::VectorXd pi;
  Eigen::MatrixXd mu;
  Eigen::MatrixXd var;
  bool anisotropic = false;
  int feature_dim = 0;

  int num_classes() const { return static_cast<int>(pi.size()); }
};

inline KmmActivations kmm_forward(const Eigen::VectorXd& f, const KmmWeights& w,
                                  const KmmConfig& cfg) {
  w.check_shapes(cfg);
  if (f.size() != cfg.feature_dim || !f.allFinite())
    throw std::invalid_argument("kmm_forward: feature vector has wrong length or is not finite");
  KmmActivations a;
  a.a_pi = w.w_pi * f + w.b_pi;
  a.a_mu = w.w_mu * f + w.b_mu;
  a.a_var = w.w_var * f + w.b_var;
  return a;
}

/// pi = sigmoid(a_pi), mu = a_mu, var = ELU(a_var) + 2 + eps. The "+2" with
/// the ELU infimum of -1 bounds every variance below by 1 + eps.
inline KernelParams kmm_activate(const KmmActivations& a, const KmmConfig& cfg) {
  const int k = cfg.num_classes;
  const int cols = cfg.anisotropic ? cfg.feature_dim : 1;
  if (a.a_pi.size() != k || a.a_mu.size() != k * cols || a.a_var.size() != k * cols)
    throw std::invalid_argument("kmm_activate: activation shapes inconsistent with config");
  KernelParams p;
  p.anisotropic = cfg.anisotropic;
  p.feature_dim = cfg.feature_dim;
  p.pi.resize(k);
  for (int i = 0; i < k; ++i) p.pi(i) = sigmoid(a.a_pi(i));
  p.mu.resize(k, cols);
  p.var.resize(k, cols);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < cols; ++j) {
      p.mu(i, j) = a.a_mu(i * cols + j);
      p.var(i, j) = elu(a.a_var(i * cols + j)) + 2.0 + cfg.elu_eps;
    }
  return p;
}

/// Unimodal kernel component g_k(f), amplitude 1 at its center.
inline double kernel_component(const Eigen::VectorXd& f, const KernelParams& p, int k) {
  double q = 0.0;
  if (p.anisotropic) {
    for (int i = 0; i < p.feature_dim; ++i) {
      const double d = f(i) - p.mu(k, i);
      q += d * d / (2.0 * p.var(k, i));
    }
  } else {
    const double mu = p.mu(k, 0);
    for (int i = 0; i < p.feature_dim; ++i) {
      const double d = f(i) - mu;
      q += d * d;
    }
    q /= 2.0 * p.var(k, 0);
  }
  return std::exp(-q);
}

/// G_S(f) = sum_{k in S} pi_k g_k(f). The empty set yields 0 by convention.
/// Summation runs in ascending k so that G over a superset can never round
/// below G over a subset.
inline double mixture_density(const Eigen::VectorXd& f, const KernelParams& p,
                              const std::vector<int>& index_set) {
  double g = 0.0;
  for (const int k : index_set) {
    if (k < 0 || k >= p.num_classes())
      throw std::invalid_argument("mixture_density: class index out of range");
    g += p.pi(k) * kernel_component(f, p, k);
  }
  return g;
}

/// Bridges one mixture component to the similarity module's kernel type:
/// isotropic components map to broadcast-mean isotropic specs, anisotropic
/// components to diagonal specs.
inline KernelSpec params_to_kernelspec(const KernelParams& p, int k) {
  if (k < 0 || k >= p.num_classes())
    throw std::invalid_argument("params_to_kernelspec: class index out of range");
  if (p.anisotropic)
    return KernelSpec::diagonal(p.mu.row(k).transpose(), p.var.row(k).transpose());
  return KernelSpec::isotropic(p.mu(k, 0), p.var(k, 0), p.feature_dim);
}

}  // namespace kmcl
