#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

#include "kmcl/kernels.hpp"

namespace kmcl {

namespace detail {

inline void require_same_dim(const KernelSpec& p, const KernelSpec& q) {
  if (p.dim != q.dim)
    throw std::invalid_argument("similarity: kernel dimensions differ (" +
                                std::to_string(p.dim) + " vs " + std::to_string(q.dim) + ")");
}

/// Cholesky factor of a symmetric matrix; throws naming `who` when the matrix
/// is not positive-definite.
inline Eigen::LLT<Eigen::MatrixXd> spd_factor(const Eigen::MatrixXd& m, const char* who) {
  Eigen::LLT<Eigen::MatrixXd> llt(0.5 * (m + m.transpose()));
  if (llt.info() != Eigen::Success)
    throw std::invalid_argument(std::string("similarity: covariance of ") + who +
                                " is not positive-definite");
  return llt;
}

inline double log_det(const Eigen::LLT<Eigen::MatrixXd>& llt) {
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

}  // namespace detail

/// Overlap coefficient between two normalized full-covariance kernels:
///   |Sp|^{1/4} |Sq|^{1/4} / |S|^{1/2} * exp(-1/8 ||mu_p - mu_q||^2_{S^-1}),
/// with S = (Sp + Sq) / 2. The quarter-power determinant exponents are the
/// ones the quadrature oracle confirms. Result lies in (0, 1].
inline double bhattacharyya_full(const KernelSpec& p, const KernelSpec& q) {
  detail::require_same_dim(p, q);
  if (p.kind != CovKind::Full || q.kind != CovKind::Full)
    throw std::invalid_argument("bhattacharyya_full: both kernels must carry full covariance");
  const auto llt_p = detail::spd_factor(p.cov, "p");
  const auto llt_q = detail::spd_factor(q.cov, "q");
  const Eigen::MatrixXd mix = 0.5 * (p.cov + q.cov);
  const auto llt_m = detail::spd_factor(mix, "the mixture (p+q)/2");
  const Eigen::VectorXd d = p.mean - q.mean;
  const double quad = d.dot(llt_m.solve(d));
  const double log_scale = 0.25 * detail::log_det(llt_p) + 0.25 * detail::log_det(llt_q) -
                           0.5 * detail::log_det(llt_m);
  return std::exp(log_scale - 0.125 * quad);
}

/// Diagonal-covariance reduction, evaluated in log space so large dimension
/// counts do not underflow the product of per-dimension factors.
inline double bhattacharyya_diagonal(const KernelSpec& p, const KernelSpec& q) {
  detail::require_same_dim(p, q);
  if (p.kind != CovKind::Diagonal || q.kind != CovKind::Diagonal)
    throw std::invalid_argument(
        "bhattacharyya_diagonal: both kernels must carry diagonal covariance");
  double log_rho = 0.0;
  for (int i = 0; i < p.dim; ++i) {
    const double vp = p.var_diag(i);
    const double vq = q.var_diag(i);
    const double t = vp + vq;
    const double dmu = p.mean(i) - q.mean(i);
    log_rho += -0.5 * (std::log(t) - std::log(2.0) - 0.5 * std::log(vp) - 0.5 * std::log(vq));
    log_rho += -0.25 * dmu * dmu / t;
  }
  return std::exp(log_rho);
}

/// Isotropic reduction on scalar means/variances broadcast over M dimensions.
inline double bhattacharyya_isotropic_scalar(double mu_p, double var_p, double mu_q,
                                             double var_q, int dim) {
  if (dim < 1) throw std::invalid_argument("bhattacharyya_isotropic: dim must be >= 1");
  if (var_p <= 0.0 || var_q <= 0.0)
    throw std::invalid_argument("bhattacharyya_isotropic: variances must be positive");
  const double t = var_p + var_q;
  const double dmu = mu_p - mu_q;
  const double m = static_cast<double>(dim);
  const double log_rho = -0.5 * m * (std::log(t) - std::log(2.0) -
                                     0.5 * std::log(var_p) - 0.5 * std::log(var_q)) -
                         0.25 * m * dmu * dmu / t;
  return std::exp(log_rho);
}

inline double bhattacharyya_isotropic(const KernelSpec& p, const KernelSpec& q) {
  detail::require_same_dim(p, q);
  if (p.kind != CovKind::Isotropic || q.kind != CovKind::Isotropic)
    throw std::invalid_argument(
        "bhattacharyya_isotropic: both kernels must carry isotropic covariance");
  if (!p.uniform_mean || !q.uniform_mean)
    throw std::invalid_argument(
        "bhattacharyya_isotropic: means must be scalar broadcasts (uniform_mean)");
  return bhattacharyya_isotropic_scalar(p.mean(0), p.var_iso, q.mean(0), q.var_iso, p.dim);
}

namespace detail {

inline bool same_covariance(const KernelSpec& p, const KernelSpec& q) {
  if (p.kind != q.kind) return false;
  switch (p.kind) {
    case CovKind::Full: return p.cov == q.cov;
    case CovKind::Diagonal: return p.var_diag == q.var_diag;
    case CovKind::Isotropic: return p.var_iso == q.var_iso;
  }
  return false;
}

}  // namespace detail

/// Homoscedastic reduction: exp(-1/8 ||mu_p - mu_q||^2_{S^-1}) with the one
/// covariance both kernels share. Equals bhattacharyya_full when Sp == Sq.
inline double mahalanobis_similarity(const KernelSpec& p, const KernelSpec& q) {
  detail::require_same_dim(p, q);
  if (!detail::same_covariance(p, q))
    throw std::invalid_argument("mahalanobis_similarity: kernels do not share one covariance");
  const Eigen::VectorXd d = p.mean - q.mean;
  double quad = 0.0;
  switch (p.kind) {
    case CovKind::Full: {
      const auto llt = detail::spd_factor(p.cov, "the shared input");
      quad = d.dot(llt.solve(d));
      break;
    }
    case CovKind::Diagonal:
      quad = (d.array().square() / p.var_diag.array()).sum();
      break;
    case CovKind::Isotropic:
      quad = d.squaredNorm() / p.var_iso;
      break;
  }
  return std::exp(-0.125 * quad);
}

/// Shared-isotropic reduction: exp(-||mu_p - mu_q||^2 / (8 sigma^2)).
inline double gaussian_similarity(const KernelSpec& p, const KernelSpec& q) {
  detail::require_same_dim(p, q);
  if (p.kind != CovKind::Isotropic || q.kind != CovKind::Isotropic)
    throw std::invalid_argument("gaussian_similarity: kernels must be isotropic");
  if (p.var_iso != q.var_iso)
    throw std::invalid_argument("gaussian_similarity: kernels do not share one variance");
  if (p.var_iso <= 0.0)
    throw std::invalid_argument("gaussian_similarity: variance must be positive");
  return std::exp(-(p.mean - q.mean).squaredNorm() / (8.0 * p.var_iso));
}

inline double gaussian_similarity_scalar(double mu_p, double mu_q, double shared_var, int dim) {
  if (shared_var <= 0.0)
    throw std::invalid_argument("gaussian_similarity: variance must be positive");
  const double dmu = mu_p - mu_q;
  return std::exp(-static_cast<double>(dim) * dmu * dmu / (8.0 * shared_var));
}

/// Widens a diagonal or isotropic spec to an equivalent full-covariance spec.
inline KernelSpec to_full(const KernelSpec& s) {
  switch (s.kind) {
    case CovKind::Full: return s;
    case CovKind::Diagonal:
      return KernelSpec::full(s.mean, Eigen::MatrixXd(s.var_diag.asDiagonal()));
    case CovKind::Isotropic:
      return KernelSpec::full(
          s.mean, Eigen::MatrixXd(s.var_iso * Eigen::MatrixXd::Identity(s.dim, s.dim)));
  }
  throw std::logic_error("to_full: bad kind");
}

inline KernelSpec to_diagonal(const KernelSpec& s) {
  switch (s.kind) {
    case CovKind::Diagonal: return s;
    case CovKind::Isotropic:
      return KernelSpec::diagonal(s.mean, Eigen::VectorXd::Constant(s.dim, s.var_iso));
    case CovKind::Full:
      throw std::invalid_argument("to_diagonal: cannot narrow a full covariance");
  }
  throw std::logic_error("to_diagonal: bad kind");
}

/// Dispatch on the configured similarity kind. The Mahalanobis and Gaussian
/// branches require the strict shared-covariance preconditions; the training
/// path uses the pooled variants in losses.hpp instead.
inline double kernel_similarity(SimilarityKind kind, const KernelSpec& p, const KernelSpec& q) {
  switch (kind) {
    case SimilarityKind::BhattacharyyaFull: return bhattacharyya_full(p, q);
    case SimilarityKind::BhattacharyyaDiagonal: return bhattacharyya_diagonal(p, q);
    case SimilarityKind::BhattacharyyaIsotropic: return bhattacharyya_isotropic(p, q);
    case SimilarityKind::Mahalanobis: return mahalanobis_similarity(p, q);
    case SimilarityKind::GaussianRBF: return gaussian_similarity(p, q);
  }
  throw std::logic_error("kernel_similarity: bad kind");
}

}  // namespace kmcl
