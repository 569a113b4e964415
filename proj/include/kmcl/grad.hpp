#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "kmcl/losses.hpp"
#include "kmcl/model.hpp"

namespace kmcl {

namespace detail {

/// Per-sample gradient accumulators in activation space.
struct SampleGrads {
  Eigen::VectorXd dpi;    // K
  Eigen::MatrixXd dmu;    // K x 1 (isotropic) or K x M
  Eigen::MatrixXd dvar;   // same shape as dmu
  Eigen::VectorXd dfeat;  // M

  SampleGrads(int k, int cols, int m)
      : dpi(Eigen::VectorXd::Zero(k)),
        dmu(Eigen::MatrixXd::Zero(k, cols)),
        dvar(Eigen::MatrixXd::Zero(k, cols)),
        dfeat(Eigen::VectorXd::Zero(m)) {}
};

/// Adds coef * d(similarity)/d(params) for the class-k pair (a, b) under the
/// configured kind. `rho` is the precomputed similarity value.
inline void add_similarity_grad(const KernelParams& a, const KernelParams& b, int k,
                                const LossConfig& cfg, double rho, double coef,
                                SampleGrads& ga, SampleGrads& gb) {
  const int m = a.feature_dim;
  const double w = coef * rho;  // every branch below scales d(log rho)/d(param) by rho
  switch (cfg.similarity) {
    case SimilarityKind::BhattacharyyaFull:
    case SimilarityKind::BhattacharyyaDiagonal:
    case SimilarityKind::BhattacharyyaIsotropic:
      if (!a.anisotropic) {
        const double vp = a.var(k, 0), vq = b.var(k, 0);
        const double t = vp + vq;
        const double dmu = a.mu(k, 0) - b.mu(k, 0);
        const double md = static_cast<double>(m);
        const double g_mu = -0.5 * md * dmu / t;
        ga.dmu(k, 0) += w * g_mu;
        gb.dmu(k, 0) -= w * g_mu;
        const double common = 0.25 * md * dmu * dmu / (t * t) - 0.5 * md / t;
        ga.dvar(k, 0) += w * (common + 0.25 * md / vp);
        gb.dvar(k, 0) += w * (common + 0.25 * md / vq);
      } else {
        for (int j = 0; j < m; ++j) {
          const double vp = a.var(k, j), vq = b.var(k, j);
          const double t = vp + vq;
          const double dmu = a.mu(k, j) - b.mu(k, j);
          const double g_mu = -0.5 * dmu / t;
          ga.dmu(k, j) += w * g_mu;
          gb.dmu(k, j) -= w * g_mu;
          const double common = 0.25 * dmu * dmu / (t * t) - 0.5 / t;
          ga.dvar(k, j) += w * (common + 0.25 / vp);
          gb.dvar(k, j) += w * (common + 0.25 / vq);
        }
      }
      return;
    case SimilarityKind::Mahalanobis:
      if (!a.anisotropic) {
        const double t = a.var(k, 0) + b.var(k, 0);
        const double dmu = a.mu(k, 0) - b.mu(k, 0);
        const double md = static_cast<double>(m);
        const double g_mu = -0.5 * md * dmu / t;
        ga.dmu(k, 0) += w * g_mu;
        gb.dmu(k, 0) -= w * g_mu;
        const double g_var = 0.25 * md * dmu * dmu / (t * t);
        ga.dvar(k, 0) += w * g_var;
        gb.dvar(k, 0) += w * g_var;
      } else {
        for (int j = 0; j < m; ++j) {
          const double t = a.var(k, j) + b.var(k, j);
          const double dmu = a.mu(k, j) - b.mu(k, j);
          const double g_mu = -0.5 * dmu / t;
          ga.dmu(k, j) += w * g_mu;
          gb.dmu(k, j) -= w * g_mu;
          const double g_var = 0.25 * dmu * dmu / (t * t);
          ga.dvar(k, j) += w * g_var;
          gb.dvar(k, j) += w * g_var;
        }
      }
      return;
    case SimilarityKind::GaussianRBF: {
      const double scale = a.anisotropic ? 1.0 : static_cast<double>(m);
      const int cols = a.anisotropic ? m : 1;
      for (int j = 0; j < cols; ++j) {
        const double dmu = a.mu(k, j) - b.mu(k, j);
        const double g_mu = -scale * dmu / (4.0 * cfg.gaussian_var);
        ga.dmu(k, j) += w * g_mu;
        gb.dmu(k, j) -= w * g_mu;
      }
      return;
    }
  }
  throw std::logic_error("add_similarity_grad: bad kind");
}

/// Adds coef * d(pi_k g_k(f))/d(mu, var, f) for one mixture component.
inline void add_component_grad(const Eigen::VectorXd& f, const KernelParams& p, int k,
                               double coef_times_pi_g, SampleGrads& g) {
  if (!p.anisotropic) {
    const double mu = p.mu(k, 0);
    const double v = p.var(k, 0);
    double sum_d = 0.0, sum_d2 = 0.0;
    for (int i = 0; i < p.feature_dim; ++i) {
      const double d = f(i) - mu;
      sum_d += d;
      sum_d2 += d * d;
      g.dfeat(i) += coef_times_pi_g * (-d / v);
    }
    g.dmu(k, 0) += coef_times_pi_g * sum_d / v;
    g.dvar(k, 0) += coef_times_pi_g * sum_d2 / (2.0 * v * v);
  } else {
    for (int i = 0; i < p.feature_dim; ++i) {
      const double d = f(i) - p.mu(k, i);
      const double v = p.var(k, i);
      g.dmu(k, i) += coef_times_pi_g * d / v;
      g.dvar(k, i) += coef_times_pi_g * d * d / (2.0 * v * v);
      g.dfeat(i) += coef_times_pi_g * (-d / v);
    }
  }
}

}  // namespace detail

/// Gradient of the composed objective with respect to every trainable
/// parameter, written into the store's gradient buffer (which is zeroed
/// first). Gradients flow through the similarity values in both the
/// numerator and the denominator of the contrastive term; there is no
/// stop-gradient anywhere. Returns the loss breakdown of the same batch.
inline LossBreakdown backward(Model& model, const SampleBatch& batch, const LossConfig& cfg) {
  cfg.validate();
  const ForwardCache cache = model.forward(batch);
  const BatchView view = cache.view(batch.labels);
  view.validate();

  const int n_samples = batch.size();
  const int k_classes = model.config().kmm.num_classes;
  const int m_dim = model.config().kmm.feature_dim;
  const int cols = model.config().kmm.anisotropic ? m_dim : 1;

  LossBreakdown loss;
  const RecLossResult rec = reconstruction_loss(view);
  loss.rec = rec.value;
  loss.rec_all_empty = rec.all_empty;
  loss.asl = asl_loss(view, cfg);
  loss.kmcl = kmcl_loss(view, cfg);
  loss.total = loss.rec + cfg.lambda_asl * loss.asl + cfg.lambda_kmcl * loss.kmcl;
  if (!std::isfinite(loss.total))
    throw std::runtime_error("backward: non-finite loss value");

  std::vector<detail::SampleGrads> sg(static_cast<std::size_t>(n_samples),
                                      detail::SampleGrads(k_classes, cols, m_dim));

  // Reconstruction term (unit weight). Samples without positives are skipped
  // and the mean runs over the remainder.
  if (!rec.all_empty) {
    const double wn = 1.0 / rec.samples_used;
    std::vector<int> all(k_classes);
    for (int k = 0; k < k_classes; ++k) all[k] = k;
    for (int n = 0; n < n_samples; ++n) {
      const std::vector<int> support = batch.labels[n].support();
      if (support.empty()) continue;
      const Eigen::VectorXd& f = cache.features[n];
      const KernelParams& p = cache.params[n];
      const double gs = mixture_density(f, p, support);
      const double gy = mixture_density(f, p, all);
      for (int k = 0; k < k_classes; ++k) {
        const double gk = kernel_component(f, p, k);
        const double in_s = batch.labels[n].positive(k) ? 1.0 : 0.0;
        const double ck = -in_s / gs + 1.0 / gy;
        sg[n].dpi(k) += wn * ck * gk;
        detail::add_component_grad(f, p, k, wn * ck * p.pi(k) * gk, sg[n]);
      }
    }
  }

  // Classification term, weight lambda_asl. Derivatives run through the same
  // clamp and margin shift the loss value uses.
  {
    const double wn = cfg.lambda_asl / n_samples;
    for (int n = 0; n < n_samples; ++n) {
      for (int k = 0; k < k_classes; ++k) {
        const double pi_raw = cache.params[n].pi(k);
        if (pi_raw <= cfg.pi_clamp || pi_raw >= 1.0 - cfg.pi_clamp) continue;  // clamped flat
        double d = 0.0;
        if (batch.labels[n].positive(k)) {
          if (cfg.gamma_plus == 0.0) {
            d = -1.0 / pi_raw;
          } else {
            const double one_m = 1.0 - pi_raw;
            d = cfg.gamma_plus * std::pow(one_m, cfg.gamma_plus - 1.0) * std::log(pi_raw) -
                std::pow(one_m, cfg.gamma_plus) / pi_raw;
          }
        } else {
          const double shifted = pi_raw - cfg.margin;
          if (shifted > 0.0) {
            if (cfg.gamma_minus == 0.0) {
              d = 1.0 / (1.0 - shifted);
            } else {
              d = -cfg.gamma_minus * std::pow(shifted, cfg.gamma_minus - 1.0) *
                      std::log1p(-shifted) +
                  std::pow(shifted, cfg.gamma_minus) / (1.0 - shifted);
            }
          }
        }
        sg[n].dpi(k) += wn * d;
      }
    }
  }

  // Contrastive term, weight lambda_kmcl.
  if (cfg.lambda_kmcl != 0.0) {
    const std::vector<double> rho = similarity_tensor(view, cfg);
    auto rho_at = [&](int n, int i, int k) {
      return rho[(static_cast<std::size_t>(n) * n_samples + i) * k_classes + k];
    };
    for (int n = 0; n < n_samples; ++n) {
      const PositiveSet pos = positive_set(batch.labels, n);
      if (pos.members.empty()) continue;
      const double inv_an = 1.0 / static_cast<double>(pos.members.size());

      std::vector<double> jac(n_samples, 0.0);
      std::vector<std::uint8_t> shared_mask(static_cast<std::size_t>(n_samples) * k_classes, 0);
      std::vector<double> b_weight(k_classes, 0.0);  // sum of Jaccard over sharers of k
      for (std::size_t j = 0; j < pos.members.size(); ++j) {
        const int m = pos.members[j];
        jac[m] = jaccard(batch.labels[n], batch.labels[m]);
        for (const int k : pos.shared[j]) {
          shared_mask[static_cast<std::size_t>(m) * k_classes + k] = 1;
          b_weight[k] += jac[m];
        }
      }

      for (int k = 0; k < k_classes; ++k) {
        if (b_weight[k] == 0.0) continue;
        double z = 0.0;
        for (int i = 0; i < n_samples; ++i)
          if (i != n) z += std::exp(rho_at(n, i, k) / cfg.tau);
        for (int i = 0; i < n_samples; ++i) {
          if (i == n) continue;
          const bool is_pos = shared_mask[static_cast<std::size_t>(i) * k_classes + k] != 0;
          double coef = b_weight[k] * std::exp(rho_at(n, i, k) / cfg.tau) / (cfg.tau * z);
          if (is_pos) coef -= jac[i] / cfg.tau;
          coef *= cfg.lambda_kmcl * inv_an / n_samples;
          if (coef == 0.0) continue;
          detail::add_similarity_grad(cache.params[n], cache.params[i], k, cfg,
                                      rho_at(n, i, k), coef, sg[n], sg[i]);
        }
      }
    }
  }

  // Activation-space gradients back through the heads and the encoder.
  ParamStore& store = model.store();
  store.zero_grad();
  auto g_w_pi = store.grad_mat("kmm.w_pi");
  auto g_w_mu = store.grad_mat("kmm.w_mu");
  auto g_w_var = store.grad_mat("kmm.w_var");
  auto g_b_pi = store.grad_mat("kmm.b_pi");
  auto g_b_mu = store.grad_mat("kmm.b_mu");
  auto g_b_var = store.grad_mat("kmm.b_var");
  const KmmWeights kmm = model.kmm_weights();
  const EncoderWeights enc = model.encoder_weights();
  const double eps = model.config().kmm.elu_eps;

  for (int n = 0; n < n_samples; ++n) {
    const KernelParams& p = cache.params[n];
    const Eigen::VectorXd& f = cache.features[n];

    Eigen::VectorXd da_pi(k_classes);
    for (int k = 0; k < k_classes; ++k)
      da_pi(k) = sg[n].dpi(k) * p.pi(k) * (1.0 - p.pi(k));

    const int head_rows = k_classes * cols;
    Eigen::VectorXd da_mu(head_rows), da_var(head_rows);
    for (int k = 0; k < k_classes; ++k)
      for (int j = 0; j < cols; ++j) {
        da_mu(k * cols + j) = sg[n].dmu(k, j);
        // d var / d a: 1 on the linear branch, exp(a) = var - 1 - eps below 0,
        // recovered from the cached forward value.
        const double a = cache.activations[n].a_var(k * cols + j);
        const double elu_slope = a > 0.0 ? 1.0 : (p.var(k, j) - 1.0 - eps);
        da_var(k * cols + j) = sg[n].dvar(k, j) * elu_slope;
      }

    g_w_pi += da_pi * f.transpose();
    g_b_pi.col(0) += da_pi;
    g_w_mu += da_mu * f.transpose();
    g_b_mu.col(0) += da_mu;
    g_w_var += da_var * f.transpose();
    g_b_var.col(0) += da_var;

    Eigen::VectorXd delta = sg[n].dfeat + kmm.w_pi.transpose() * da_pi +
                            kmm.w_mu.transpose() * da_mu + kmm.w_var.transpose() * da_var;

    for (int l = model.config().encoder.num_layers() - 1; l >= 0; --l) {
      const Eigen::VectorXd& z = cache.traces[n].pre[static_cast<std::size_t>(l)];
      const Eigen::VectorXd& h = cache.traces[n].post[static_cast<std::size_t>(l)];
      Eigen::VectorXd dz = delta;
      for (Eigen::Index r = 0; r < dz.size(); ++r)
        if (z(r) <= 0.0) dz(r) = 0.0;
      store.grad_mat("enc.w" + std::to_string(l)) += dz * h.transpose();
      store.grad_mat("enc.b" + std::to_string(l)).col(0) += dz;
      delta = enc.w[static_cast<std::size_t>(l)].transpose() * dz;
    }
  }

  for (std::size_t i = 0; i < store.size(); ++i)
    if (!std::isfinite(store.grads()[i]))
      throw std::runtime_error("backward: non-finite gradient in " + store.coordinate_name(i));
  return loss;
}

/// Objective value at the store's current parameters.
inline double loss_value(const Model& model, const SampleBatch& batch, const LossConfig& cfg) {
  const ForwardCache cache = model.forward(batch);
  return total_loss(cache.view(batch.labels), cfg).total;
}

struct FdRow {
  std::string name;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_err = 0.0;
};

struct FdResult {
  double max_rel_err = 0.0;
  std::string worst_coordinate;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::vector<FdRow> rows;  // filled when keep_rows
};

/// Central-difference verification of backward(): perturbs every coordinate
/// by +-h and compares (L+ - L-)/(2h) against the analytic gradient, with an
/// absolute floor of 1e-8 in the relative-error denominator.
inline FdResult finite_diff_check(Model& model, const SampleBatch& batch, const LossConfig& cfg,
                                  double h, bool keep_rows = false) {
  if (h < 1e-7 || h > 1e-3)
    throw std::invalid_argument("finite_diff_check: h must lie in [1e-7, 1e-3]");
  backward(model, batch, cfg);
  const std::vector<double> analytic = model.store().grads();

  FdResult out;
  std::vector<double>& theta = model.store().values();
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double saved = theta[i];
    theta[i] = saved + h;
    const double up = loss_value(model, batch, cfg);
    theta[i] = saved - h;
    const double down = loss_value(model, batch, cfg);
    theta[i] = saved;
    const double numeric = (up - down) / (2.0 * h);
    // Differences under the 1e-8 absolute floor are indistinguishable from
    // central-difference roundoff and count as exact agreement.
    const double diff = std::abs(numeric - analytic[i]);
    const double rel =
        diff <= 1e-8 ? 0.0 : diff / std::max(std::abs(numeric), std::abs(analytic[i]));
    if (keep_rows)
      out.rows.push_back({model.store().coordinate_name(i), analytic[i], numeric, rel});
    if (rel > out.max_rel_err) {
      out.max_rel_err = rel;
      out.worst_coordinate = model.store().coordinate_name(i);
      out.worst_analytic = analytic[i];
      out.worst_numeric = numeric;
    }
  }
  return out;
}

}  // namespace kmcl
