#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace kmcl {

enum class CovKind { Full, Diagonal, Isotropic };

/// Which similarity measure compares two kernel representations.
enum class SimilarityKind {
  BhattacharyyaFull,
  BhattacharyyaDiagonal,
  BhattacharyyaIsotropic,
  Mahalanobis,
  GaussianRBF,
};

inline const char* to_string(SimilarityKind k) {
  switch (k) {
    case SimilarityKind::BhattacharyyaFull: return "bhattacharyya_full";
    case SimilarityKind::BhattacharyyaDiagonal: return "bhattacharyya_anisotropic";
    case SimilarityKind::BhattacharyyaIsotropic: return "bhattacharyya_isotropic";
    case SimilarityKind::Mahalanobis: return "mahalanobis";
    case SimilarityKind::GaussianRBF: return "gaussian";
  }
  return "?";
}

inline SimilarityKind similarity_kind_from_string(const std::string& s) {
  if (s == "bhattacharyya_full") return SimilarityKind::BhattacharyyaFull;
  if (s == "bhattacharyya_anisotropic" || s == "bhattacharyya_diagonal")
    return SimilarityKind::BhattacharyyaDiagonal;
  if (s == "bhattacharyya_isotropic") return SimilarityKind::BhattacharyyaIsotropic;
  if (s == "mahalanobis") return SimilarityKind::Mahalanobis;
  if (s == "gaussian") return SimilarityKind::GaussianRBF;
  throw std::invalid_argument("unknown similarity kind: " + s);
}

/// An unnormalized squared-exponential kernel exp(-0.5 ||x - mean||^2_{Cov^-1})
/// with a full, diagonal, or isotropic covariance.
struct KernelSpec {
  Eigen::VectorXd mean;       // length dim
  bool uniform_mean = false;  // mean == mean(0) * ones(dim)
  CovKind kind = CovKind::Isotropic;
  Eigen::MatrixXd cov;        // dim x dim, Full only
  Eigen::VectorXd var_diag;   // dim, Diagonal only
  double var_iso = 1.0;       // Isotropic only
  int dim = 0;

  static KernelSpec full(Eigen::VectorXd mean, Eigen::MatrixXd cov) {
    KernelSpec s;
    s.dim = static_cast<int>(mean.size());
    s.mean = std::move(mean);
    s.kind = CovKind::Full;
    s.cov = std::move(cov);
    s.validate("kernel");
    return s;
  }

  static KernelSpec diagonal(Eigen::VectorXd mean, Eigen::VectorXd variances) {
    KernelSpec s;
    s.dim = static_cast<int>(mean.size());
    s.mean = std::move(mean);
    s.kind = CovKind::Diagonal;
    s.var_diag = std::move(variances);
    s.validate("kernel");
    return s;
  }

  /// Isotropic kernel with a scalar mean broadcast along all dimensions.
  static KernelSpec isotropic(double mean_scalar, double variance, int dim) {
    KernelSpec s;
    s.dim = dim;
    s.mean = Eigen::VectorXd::Constant(dim, mean_scalar);
    s.uniform_mean = true;
    s.kind = CovKind::Isotropic;
    s.var_iso = variance;
    s.validate("kernel");
    return s;
  }

  /// Isotropic covariance with an unconstrained mean vector.
  static KernelSpec isotropic_vec(Eigen::VectorXd mean, double variance) {
    KernelSpec s;
    s.dim = static_cast<int>(mean.size());
    s.mean = std::move(mean);
    s.kind = CovKind::Isotropic;
    s.var_iso = variance;
    s.validate("kernel");
    return s;
  }

  void validate(const std::string& who) const {
    if (dim < 1) throw std::invalid_argument(who + ": dim must be >= 1");
    if (mean.size() != dim)
      throw std::invalid_argument(who + ": mean length does not match dim");
    if (!mean.allFinite()) throw std::invalid_argument(who + ": mean not finite");
    switch (kind) {
      case CovKind::Full: {
        if (cov.rows() != dim || cov.cols() != dim)
          throw std::invalid_argument(who + ": covariance shape does not match dim");
        const double scale = cov.cwiseAbs().maxCoeff();
        if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(scale, 1.0))
          throw std::invalid_argument(who + ": covariance not symmetric");
        break;
      }
      case CovKind::Diagonal:
        if (var_diag.size() != dim)
          throw std::invalid_argument(who + ": variance length does not match dim");
        if ((var_diag.array() <= 0.0).any())
          throw std::invalid_argument(who + ": variances must be positive");
        break;
      case CovKind::Isotropic:
        if (var_iso <= 0.0)
          throw std::invalid_argument(who + ": variance must be positive");
        break;
    }
  }

  /// Kernel value at a point (amplitude 1 at the mean).
  double value(const Eigen::VectorXd& x) const {
    const Eigen::VectorXd d = x - mean;
    double q = 0.0;
    switch (kind) {
      case CovKind::Full: {
        Eigen::LLT<Eigen::MatrixXd> llt(0.5 * (cov + cov.transpose()));
        q = d.dot(llt.solve(d));
        break;
      }
      case CovKind::Diagonal:
        q = (d.array().square() / var_diag.array()).sum();
        break;
      case CovKind::Isotropic:
        q = d.squaredNorm() / var_iso;
        break;
    }
    return std::exp(-0.5 * q);
  }
};

}  // namespace kmcl
