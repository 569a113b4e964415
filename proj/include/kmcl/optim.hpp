#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "kmcl/param_store.hpp"

namespace kmcl {

/// Adam internals; the weight-decay path is the classic L2-in-gradient form.
/// The step size itself comes from the schedule on every call.
struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

struct OptimizerState {
  std::vector<double> m;  // first moment
  std::vector<double> v;  // second moment
  long long step = 0;

  explicit OptimizerState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
};

/// One Adam update with bias correction. Weight decay enters as an additive
/// wd * theta term on the gradient before the moment updates.
inline void adam_step(ParamStore& params, const std::vector<double>& grads, OptimizerState& opt,
                      const AdamConfig& cfg, double lr) {
  std::vector<double>& theta = params.values();
  if (grads.size() != theta.size() || opt.m.size() != theta.size())
    throw std::invalid_argument("adam_step: buffer sizes disagree");
  opt.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(opt.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(opt.step));
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double g = grads[i] + cfg.weight_decay * theta[i];
    opt.m[i] = cfg.beta1 * opt.m[i] + (1.0 - cfg.beta1) * g;
    opt.v[i] = cfg.beta2 * opt.v[i] + (1.0 - cfg.beta2) * g * g;
    const double m_hat = opt.m[i] / bc1;
    const double v_hat = opt.v[i] / bc2;
    const double update = lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    if (!std::isfinite(update))
      throw std::runtime_error("adam_step: non-finite update at " + params.coordinate_name(i));
    theta[i] -= update;
  }
}

/// One-cycle schedule: cosine rise from base/div_start to base over the
/// first pct_start fraction of steps, then cosine anneal down to
/// base/div_final by the last step.
inline double onecycle_lr(long long step, long long total_steps, double base_lr,
                          double pct_start, double div_start = 25.0, double div_final = 1e4) {
  if (step < 0 || step >= total_steps) throw std::invalid_argument("onecycle_lr: step out of range");
  if (pct_start <= 0.0 || pct_start >= 1.0)
    throw std::invalid_argument("onecycle_lr: pct_start must be in (0,1)");
  const double lo = base_lr / div_start;
  const double end = base_lr / div_final;
  if (total_steps == 1) return base_lr;
  const long long up = std::llround(pct_start * static_cast<double>(total_steps));
  constexpr double kPi = 3.14159265358979323846;
  if (step <= up && up > 0) {
    const double u = static_cast<double>(step) / static_cast<double>(up);
    return lo + (base_lr - lo) * 0.5 * (1.0 - std::cos(kPi * u));
  }
  const long long down_span = (total_steps - 1) - up;
  if (down_span <= 0) return base_lr;
  const double v = static_cast<double>(step - up) / static_cast<double>(down_span);
  return end + (base_lr - end) * 0.5 * (1.0 + std::cos(kPi * v));
}

/// ema <- decay * ema + (1 - decay) * live, elementwise.
inline void ema_update(std::vector<double>& ema, const std::vector<double>& live, double decay) {
  if (ema.size() != live.size()) throw std::invalid_argument("ema_update: buffer sizes disagree");
  if (decay < 0.0 || decay >= 1.0) throw std::invalid_argument("ema_update: decay must be in [0,1)");
  for (std::size_t i = 0; i < ema.size(); ++i)
    ema[i] = decay * ema[i] + (1.0 - decay) * live[i];
}

/// Debiased moving average of the parameter trajectory for evaluation. The
/// per-step decay follows the classic num-updates warmup
/// min(decay, (1+t)/(10+t)), so short runs average their recent trajectory
/// instead of being dominated by the initialization, while long runs settle
/// into the configured decay. The accumulator starts at zero and snapshot()
/// divides out the exact accumulated bias.
class EmaAverager {
public:
  EmaAverager(std::size_t n, double decay, bool warmup = true)
      : decay_(decay), warmup_(warmup), acc_(n, 0.0) {
    if (decay < 0.0 || decay >= 1.0)
      throw std::invalid_argument("ema: decay must be in [0,1)");
  }

  double next_decay() const {
    if (!warmup_) return decay_;
    const double t = static_cast<double>(steps_);
    return std::min(decay_, (1.0 + t) / (10.0 + t));
  }

  void update(const std::vector<double>& live) {
    const double d = next_decay();
    ema_update(acc_, live, d);
    bias_ *= d;
    ++steps_;
  }

  long long steps() const { return steps_; }

  std::vector<double> snapshot() const {
    if (steps_ == 0) return acc_;
    std::vector<double> out = acc_;
    const double correction = 1.0 - bias_;
    for (double& x : out) x /= correction;
    return out;
  }

private:
  double decay_;
  bool warmup_;
  long long steps_ = 0;
  double bias_ = 1.0;  // product of applied decays
  std::vector<double> acc_;
};

}  // namespace kmcl
