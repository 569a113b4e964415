#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "kmcl/kernels.hpp"
#include "kmcl/similarity.hpp"

namespace kmcl {

/// Integration grid: [lo, hi] sampled every `step` on each axis.
struct GridSpec {
  double lo = 0.0;
  double hi = 0.0;
  double step = 0.0;

  int points() const {
    return static_cast<int>(std::llround((hi - lo) / step)) + 1;
  }
};

namespace detail {

inline double max_stddev(const KernelSpec& s) {
  switch (s.kind) {
    case CovKind::Full: {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (s.cov + s.cov.transpose()));
      return std::sqrt(es.eigenvalues().maxCoeff());
    }
    case CovKind::Diagonal: return std::sqrt(s.var_diag.maxCoeff());
    case CovKind::Isotropic: return std::sqrt(s.var_iso);
  }
  return 0.0;
}

/// Flattened kernel evaluator for 1D/2D quadrature loops.
struct KernelEval {
  int dim;
  double m0 = 0.0, m1 = 0.0;
  double p00 = 0.0, p01 = 0.0, p11 = 0.0;  // precision matrix entries

  explicit KernelEval(const KernelSpec& s) : dim(s.dim) {
    Eigen::MatrixXd cov;
    switch (s.kind) {
      case CovKind::Full: cov = 0.5 * (s.cov + s.cov.transpose()); break;
      case CovKind::Diagonal: cov = s.var_diag.asDiagonal(); break;
      case CovKind::Isotropic:
        cov = s.var_iso * Eigen::MatrixXd::Identity(s.dim, s.dim);
        break;
    }
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success)
      throw std::invalid_argument("quadrature_oracle: covariance not positive-definite");
    const Eigen::MatrixXd prec = llt.solve(Eigen::MatrixXd::Identity(s.dim, s.dim));
    m0 = s.mean(0);
    p00 = prec(0, 0);
    if (s.dim == 2) {
      m1 = s.mean(1);
      p01 = prec(0, 1);
      p11 = prec(1, 1);
    }
  }

  double at(double x) const {
    const double d = x - m0;
    return std::exp(-0.5 * p00 * d * d);
  }

  double at(double x, double y) const {
    const double dx = x - m0;
    const double dy = y - m1;
    return std::exp(-0.5 * (p00 * dx * dx + 2.0 * p01 * dx * dy + p11 * dy * dy));
  }
};

}  // namespace detail

/// Grid covering both kernels out to 8 standard deviations, 4001 points/axis.
inline GridSpec default_grid(const KernelSpec& p, const KernelSpec& q, int points = 4001) {
  const double s = std::max(detail::max_stddev(p), detail::max_stddev(q));
  const double lo = std::min(p.mean.minCoeff(), q.mean.minCoeff()) - 8.0 * s;
  const double hi = std::max(p.mean.maxCoeff(), q.mean.maxCoeff()) + 8.0 * s;
  return GridSpec{lo, hi, (hi - lo) / static_cast<double>(points - 1)};
}

/// Trapezoidal evaluation of the defining overlap integral
///   rho = integral sqrt(p/|p|_1 * q/|q|_1)
/// with both kernels normalized numerically on the same grid. This is the
/// ground-truth reference every closed form above is checked against.
/// `amp_p`/`amp_q` scale the unnormalized kernels; the result must not
/// depend on them.
inline double quadrature_oracle(const KernelSpec& p, const KernelSpec& q, const GridSpec& grid,
                                double amp_p = 1.0, double amp_q = 1.0) {
  detail::require_same_dim(p, q);
  if (p.dim != 1 && p.dim != 2)
    throw std::invalid_argument("quadrature_oracle: only dim 1 and 2 supported");
  if (amp_p <= 0.0 || amp_q <= 0.0)
    throw std::invalid_argument("quadrature_oracle: amplitudes must be positive");
  const int n = grid.points();
  if (n < 200)
    throw std::invalid_argument("quadrature_oracle: grid too coarse (< 200 points per axis)");

  const detail::KernelEval ep(p);
  const detail::KernelEval eq(q);
  const double h = grid.step;

  double sum_p = 0.0, sum_q = 0.0, sum_pq = 0.0;
  if (p.dim == 1) {
    for (int i = 0; i < n; ++i) {
      const double x = grid.lo + h * i;
      const double w = (i == 0 || i == n - 1) ? 0.5 : 1.0;
      const double vp = amp_p * ep.at(x);
      const double vq = amp_q * eq.at(x);
      sum_p += w * vp;
      sum_q += w * vq;
      sum_pq += w * std::sqrt(vp * vq);
    }
    sum_p *= h;
    sum_q *= h;
    sum_pq *= h;
  } else {
    for (int i = 0; i < n; ++i) {
      const double x = grid.lo + h * i;
      const double wi = (i == 0 || i == n - 1) ? 0.5 : 1.0;
      double row_p = 0.0, row_q = 0.0, row_pq = 0.0;
      for (int j = 0; j < n; ++j) {
        const double y = grid.lo + h * j;
        const double wj = (j == 0 || j == n - 1) ? 0.5 : 1.0;
        const double vp = amp_p * ep.at(x, y);
        const double vq = amp_q * eq.at(x, y);
        row_p += wj * vp;
        row_q += wj * vq;
        row_pq += wj * std::sqrt(vp * vq);
      }
      sum_p += wi * row_p;
      sum_q += wi * row_q;
      sum_pq += wi * row_pq;
    }
    const double h2 = h * h;
    sum_p *= h2;
    sum_q *= h2;
    sum_pq *= h2;
  }
  return sum_pq / std::sqrt(sum_p * sum_q);
}

inline double quadrature_oracle(const KernelSpec& p, const KernelSpec& q) {
  return quadrature_oracle(p, q, default_grid(p, q));
}

}  // namespace kmcl
