#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "kmcl/kernels.hpp"
#include "kmcl/kmm.hpp"
#include "kmcl/similarity.hpp"

namespace kmcl {

/// Multi-hot ground truth y in {0,1}^K.
struct LabelVector {
  std::vector<std::uint8_t> bits;

  int size() const { return static_cast<int>(bits.size()); }
  bool positive(int k) const { return bits[static_cast<std::size_t>(k)] != 0; }
  int count() const {
    int c = 0;
    for (const auto b : bits) c += b;
    return c;
  }
  std::vector<int> support() const {
    std::vector<int> s;
    for (int k = 0; k < size(); ++k)
      if (positive(k)) s.push_back(k);
    return s;
  }
};

inline int label_dot(const LabelVector& a, const LabelVector& b) {
  if (a.size() != b.size())
    throw std::invalid_argument("label vectors have different lengths");
  int d = 0;
  for (int k = 0; k < a.size(); ++k) d += a.bits[k] & b.bits[k];
  return d;
}

/// Hyperparameters of the three-part objective. Weights are named by role:
/// the classification term enters with lambda_asl (default 0.1) and the
/// contrastive term with lambda_kmcl (default 0.3).
struct LossConfig {
  double lambda_asl = 0.1;
  double lambda_kmcl = 0.3;
  double gamma_plus = 0.0;
  double gamma_minus = 4.0;
  double margin = 0.05;
  double tau = 0.2;
  double pi_clamp = 1e-7;
  SimilarityKind similarity = SimilarityKind::BhattacharyyaIsotropic;
  // Fixed bandwidth used by the GaussianRBF ablation, which ties one variance
  // across classes and feature dimensions.
  double gaussian_var = 1.0;

  bool operator==(const LossConfig&) const = default;

  void validate() const {
    if (lambda_asl < 0.0) throw std::invalid_argument("loss: lambda_asl must be >= 0");
    if (lambda_kmcl < 0.0) throw std::invalid_argument("loss: lambda_kmcl must be >= 0");
    if (gamma_plus < 0.0) throw std::invalid_argument("loss: gamma_plus must be >= 0");
    if (gamma_minus < 0.0) throw std::invalid_argument("loss: gamma_minus must be >= 0");
    if (margin < 0.0 || margin >= 1.0) throw std::invalid_argument("loss: margin must be in [0,1)");
    if (tau <= 0.0) throw std::invalid_argument("loss: tau must be positive");
    if (pi_clamp <= 0.0 || pi_clamp >= 0.5)
      throw std::invalid_argument("loss: pi_clamp must be in (0, 0.5)");
    if (gaussian_var <= 0.0) throw std::invalid_argument("loss: gaussian_var must be positive");
  }
};

/// One minibatch as the losses see it: per-sample mixture parameters, the
/// feature vector they were produced from, and the ground-truth labels.
struct BatchView {
  std::span<const KernelParams> params;
  std::span<const Eigen::VectorXd> features;
  std::span<const LabelVector> labels;

  int size() const { return static_cast<int>(params.size()); }

  void validate() const {
    if (params.size() != features.size() || params.size() != labels.size())
      throw std::invalid_argument("batch: per-sample arrays differ in length");
    if (params.empty()) throw std::invalid_argument("batch: empty");
    const int k = params[0].num_classes();
    const int m = params[0].feature_dim;
    for (std::size_t n = 0; n < params.size(); ++n) {
      if (params[n].num_classes() != k || params[n].feature_dim != m ||
          labels[n].size() != k || features[n].size() != m)
        throw std::invalid_argument("batch: inconsistent N/K/M shapes");
    }
  }
};

// ---------------------------------------------------------------------------
// Reconstruction loss
// ---------------------------------------------------------------------------

struct RecLossResult {
  double value = 0.0;
  int samples_used = 0;
  // Set when at least one sample carried no positive label (those samples are
  // excluded from the mean); all_empty means every sample was excluded.
  bool skipped_empty = false;
  bool all_empty = false;
};

/// Mean over samples of -log(G_S(f)/G_Y(f)) with S the positive-label set and
/// Y all classes. Nonnegative because G_S <= G_Y term by term.
inline RecLossResult reconstruction_loss(const BatchView& batch) {
  batch.validate();
  const int n_samples = batch.size();
  const int k_classes = batch.params[0].num_classes();
  std::vector<int> all(k_classes);
  for (int k = 0; k < k_classes; ++k) all[k] = k;

  RecLossResult r;
  double sum = 0.0;
  for (int n = 0; n < n_samples; ++n) {
    const std::vector<int> s = batch.labels[n].support();
    if (s.empty()) {
      r.skipped_empty = true;
      continue;
    }
    const double gs = mixture_density(batch.features[n], batch.params[n], s);
    const double gy = mixture_density(batch.features[n], batch.params[n], all);
    sum += -std::log(gs / gy);
    ++r.samples_used;
  }
  r.all_empty = (r.samples_used == 0);
  r.value = r.all_empty ? 0.0 : sum / r.samples_used;
  return r;
}

// ---------------------------------------------------------------------------
// Asymmetric classification loss
// ---------------------------------------------------------------------------

/// Per-sample class sum of the asymmetric loss, averaged over the batch:
/// positives contribute -(1-pi)^{g+} log pi, negatives
/// -(max(pi-m,0))^{g-} log(1-max(pi-m,0)); the margin shifts easy negatives
/// to exactly zero. Probabilities are clamped before any log.
inline double asl_loss(const BatchView& batch, const LossConfig& cfg) {
  batch.validate();
  cfg.validate();
  const int n_samples = batch.size();
  const int k_classes = batch.params[0].num_classes();
  double total = 0.0;
  for (int n = 0; n < n_samples; ++n) {
    for (int k = 0; k < k_classes; ++k) {
      const double pi =
          std::clamp(batch.params[n].pi(k), cfg.pi_clamp, 1.0 - cfg.pi_clamp);
      if (batch.labels[n].positive(k)) {
        const double focus =
            cfg.gamma_plus == 0.0 ? 1.0 : std::pow(1.0 - pi, cfg.gamma_plus);
        total += -focus * std::log(pi);
      } else {
        const double shifted = std::max(pi - cfg.margin, 0.0);
        const double focus =
            cfg.gamma_minus == 0.0 ? 1.0 : std::pow(shifted, cfg.gamma_minus);
        total += -focus * std::log1p(-shifted);
      }
    }
  }
  return total / n_samples;
}

// ---------------------------------------------------------------------------
// Contrastive loss
// ---------------------------------------------------------------------------

/// Intersection-over-union of two label supports; 0 when both are empty.
inline double jaccard(const LabelVector& a, const LabelVector& b) {
  const int inter = label_dot(a, b);
  const int uni = a.count() + b.count() - inter;
  return uni == 0 ? 0.0 : static_cast<double>(inter) / uni;
}

/// Positive set of an anchor: batch members sharing at least one label,
/// together with the shared-label indices for each member.
struct PositiveSet {
  std::vector<int> members;                // A(n)
  std::vector<std::vector<int>> shared;    // K(n, members[j])
};

inline PositiveSet positive_set(std::span<const LabelVector> labels, int anchor) {
  if (anchor < 0 || anchor >= static_cast<int>(labels.size()))
    throw std::invalid_argument("positive_set: anchor out of range");
  PositiveSet out;
  for (int m = 0; m < static_cast<int>(labels.size()); ++m) {
    if (m == anchor) continue;
    std::vector<int> shared;
    for (int k = 0; k < labels[anchor].size(); ++k)
      if (labels[anchor].positive(k) && labels[m].positive(k)) shared.push_back(k);
    if (!shared.empty()) {
      out.members.push_back(m);
      out.shared.push_back(std::move(shared));
    }
  }
  return out;
}

/// Similarity between the class-k components of two samples under the
/// configured kind. The Mahalanobis branch shares the pairwise-average
/// covariance (exactly the exponential factor of the Bhattacharyya form);
/// the Gaussian branch uses the fixed cfg.gaussian_var bandwidth.
inline double component_similarity(const KernelParams& a, const KernelParams& b, int k,
                                   const LossConfig& cfg) {
  const int m = a.feature_dim;
  if (a.anisotropic != b.anisotropic || b.feature_dim != m)
    throw std::invalid_argument("component_similarity: incompatible kernel parameters");
  switch (cfg.similarity) {
    case SimilarityKind::BhattacharyyaFull:
    case SimilarityKind::BhattacharyyaDiagonal:
    case SimilarityKind::BhattacharyyaIsotropic: {
      if (!a.anisotropic)
        return bhattacharyya_isotropic_scalar(a.mu(k, 0), a.var(k, 0), b.mu(k, 0), b.var(k, 0), m);
      double log_rho = 0.0;
      for (int i = 0; i < m; ++i) {
        const double vp = a.var(k, i), vq = b.var(k, i);
        const double t = vp + vq;
        const double dmu = a.mu(k, i) - b.mu(k, i);
        log_rho +=
            -0.5 * (std::log(t) - std::log(2.0) - 0.5 * std::log(vp) - 0.5 * std::log(vq)) -
            0.25 * dmu * dmu / t;
      }
      return std::exp(log_rho);
    }
    case SimilarityKind::Mahalanobis: {
      double quad = 0.0;
      if (!a.anisotropic) {
        const double dmu = a.mu(k, 0) - b.mu(k, 0);
        quad = m * dmu * dmu / (a.var(k, 0) + b.var(k, 0));
      } else {
        for (int i = 0; i < m; ++i) {
          const double dmu = a.mu(k, i) - b.mu(k, i);
          quad += dmu * dmu / (a.var(k, i) + b.var(k, i));
        }
      }
      return std::exp(-0.25 * quad);
    }
    case SimilarityKind::GaussianRBF: {
      double d2 = 0.0;
      if (!a.anisotropic) {
        const double dmu = a.mu(k, 0) - b.mu(k, 0);
        d2 = m * dmu * dmu;
      } else {
        for (int i = 0; i < m; ++i) {
          const double dmu = a.mu(k, i) - b.mu(k, i);
          d2 += dmu * dmu;
        }
      }
      return std::exp(-d2 / (8.0 * cfg.gaussian_var));
    }
  }
  throw std::logic_error("component_similarity: bad kind");
}

/// Dense pairwise similarity tensor rho[(n*N + i)*K + k] for i != n.
inline std::vector<double> similarity_tensor(const BatchView& batch, const LossConfig& cfg) {
  const int n_samples = batch.size();
  const int k_classes = batch.params[0].num_classes();
  std::vector<double> rho(static_cast<std::size_t>(n_samples) * n_samples * k_classes, 0.0);
  auto at = [&](int n, int i, int k) -> double& {
    return rho[(static_cast<std::size_t>(n) * n_samples + i) * k_classes + k];
  };
  for (int n = 0; n < n_samples; ++n)
    for (int i = n + 1; i < n_samples; ++i)
      for (int k = 0; k < k_classes; ++k) {
        const double v = component_similarity(batch.params[n], batch.params[i], k, cfg);
        at(n, i, k) = v;
        at(i, n, k) = v;  // symmetric in the two kernels
      }
  return rho;
}

/// Kernel contrastive loss: anchors pull batch members that share labels
/// (weighted by their Jaccard overlap) against every other batch member,
/// one softmax per shared class, temperature tau. Anchors with an empty
/// positive set contribute 0.
inline double kmcl_loss(const BatchView& batch, const LossConfig& cfg) {
  batch.validate();
  cfg.validate();
  const int n_samples = batch.size();
  if (n_samples < 2) throw std::invalid_argument("kmcl_loss: batch must hold at least 2 samples");
  const int k_classes = batch.params[0].num_classes();
  const std::vector<double> rho = similarity_tensor(batch, cfg);
  auto at = [&](int n, int i, int k) {
    return rho[(static_cast<std::size_t>(n) * n_samples + i) * k_classes + k];
  };

  double total = 0.0;
  for (int n = 0; n < n_samples; ++n) {
    const PositiveSet pos = positive_set(batch.labels, n);
    if (pos.members.empty()) continue;
    double anchor_sum = 0.0;
    for (std::size_t j = 0; j < pos.members.size(); ++j) {
      const int m = pos.members[j];
      const double w = jaccard(batch.labels[n], batch.labels[m]);
      double class_sum = 0.0;
      for (const int k : pos.shared[j]) {
        double denom = 0.0;
        for (int i = 0; i < n_samples; ++i) {
          if (i == n) continue;
          denom += std::exp(at(n, i, k) / cfg.tau);
        }
        class_sum += std::log(std::exp(at(n, m, k) / cfg.tau) / denom);
      }
      anchor_sum += w * class_sum;
    }
    total += -anchor_sum / static_cast<double>(pos.members.size());
  }
  return total / n_samples;
}

// ---------------------------------------------------------------------------
// Composition
// ---------------------------------------------------------------------------

struct LossBreakdown {
  double total = 0.0;
  double rec = 0.0;
  double asl = 0.0;
  double kmcl = 0.0;
  bool rec_all_empty = false;
};

/// L = L_REC + lambda_asl * L_ASL + lambda_kmcl * L_KMCL.
inline LossBreakdown total_loss(const BatchView& batch, const LossConfig& cfg) {
  cfg.validate();
  LossBreakdown out;
  const RecLossResult rec = reconstruction_loss(batch);
  out.rec = rec.value;
  out.rec_all_empty = rec.all_empty;
  out.asl = asl_loss(batch, cfg);
  out.kmcl = kmcl_loss(batch, cfg);
  out.total = out.rec + cfg.lambda_asl * out.asl + cfg.lambda_kmcl * out.kmcl;
  return out;
}

}  // namespace kmcl
