#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "kmcl/data.hpp"
#include "kmcl/grad.hpp"
#include "kmcl/losses.hpp"
#include "kmcl/metrics.hpp"
#include "kmcl/model.hpp"
#include "kmcl/optim.hpp"

namespace kmcl {

struct TrainConfig {
  int epochs = 30;
  int batch_size = 64;
  double base_lr = 2e-4;
  double weight_decay = 1e-4;
  double pct_start = 0.2;
  bool ema_enabled = true;
  double ema_decay = 0.9997;
  int eval_every = 1;  // epochs between metric evaluations
  std::uint64_t seed = 1;
  LossConfig loss;

  void validate() const {
    if (epochs < 0) throw std::invalid_argument("train: epochs must be >= 0");
    if (batch_size < 2) throw std::invalid_argument("train: batch size must be >= 2");
    if (base_lr <= 0.0) throw std::invalid_argument("train: base_lr must be positive");
    if (weight_decay < 0.0) throw std::invalid_argument("train: weight_decay must be >= 0");
    if (pct_start <= 0.0 || pct_start >= 1.0)
      throw std::invalid_argument("train: pct_start must be in (0,1)");
    if (ema_decay < 0.0 || ema_decay >= 1.0)
      throw std::invalid_argument("train: ema_decay must be in [0,1)");
    if (eval_every < 1) throw std::invalid_argument("train: eval_every must be >= 1");
    loss.validate();
  }
};

/// One row of the loss/accuracy curve file.
struct EpochRecord {
  int epoch = 0;  // 1-based
  double loss_total = 0.0;
  double loss_rec = 0.0;
  double loss_asl = 0.0;
  double loss_kmcl = 0.0;
  double lr = 0.0;
  double train_map = std::numeric_limits<double>::quiet_NaN();
  double test_map = std::numeric_limits<double>::quiet_NaN();
};

struct TrainResult {
  Model model;                       // live parameters after the last step
  std::vector<double> eval_params;   // weights used for evaluation (EMA snapshot when enabled)
  std::vector<EpochRecord> curves;   // one record per epoch
};

/// Mean average precision of a model snapshot on one block of rows.
inline double map_on(const Model& model, const Eigen::MatrixXd& inputs,
                     const Eigen::MatrixXi& truths) {
  const Eigen::MatrixXd scores = model.scores(inputs);
  std::vector<double> col_s(static_cast<std::size_t>(scores.rows()));
  std::vector<int> col_t(static_cast<std::size_t>(scores.rows()));
  double sum = 0.0;
  int used = 0;
  for (Eigen::Index k = 0; k < scores.cols(); ++k) {
    for (Eigen::Index n = 0; n < scores.rows(); ++n) {
      col_s[static_cast<std::size_t>(n)] = scores(n, k);
      col_t[static_cast<std::size_t>(n)] = truths(n, k);
    }
    if (const auto ap = average_precision(col_s, col_t)) {
      sum += *ap;
      ++used;
    }
  }
  return used == 0 ? 0.0 : sum / used;
}

inline SampleBatch gather_batch(const Dataset& ds, const std::vector<int>& rows) {
  SampleBatch b;
  b.inputs.resize(static_cast<Eigen::Index>(rows.size()), ds.input_dim());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    b.inputs.row(static_cast<Eigen::Index>(i)) = ds.inputs.row(rows[i]);
    b.labels.push_back(ds.label_row(rows[i]));
  }
  return b;
}

/// Batch loop over the train split: encode, produce mixture parameters,
/// score the three-part objective, backpropagate, Adam step under the
/// one-cycle schedule, and fold the weights into the EMA. Metrics for the
/// curve records come from the evaluation weights (EMA snapshot when
/// enabled, live weights otherwise).
inline TrainResult train(const Dataset& ds, const ModelConfig& model_cfg, const TrainConfig& cfg) {
  cfg.validate();
  model_cfg.validate();
  if (ds.n_train < 1) throw std::invalid_argument("train: dataset has no train rows");
  if (ds.num_classes() != model_cfg.kmm.num_classes)
    throw std::invalid_argument("train: dataset classes do not match model");
  if (ds.input_dim() != model_cfg.encoder.input_dim())
    throw std::invalid_argument("train: dataset input dim does not match encoder");

  TrainResult result{Model(model_cfg, cfg.seed), {}, {}};
  Model& model = result.model;
  const std::size_t n_params = model.store().size();
  OptimizerState opt(n_params);
  AdamConfig adam;
  adam.weight_decay = cfg.weight_decay;
  EmaAverager ema(n_params, cfg.ema_decay);

  if (cfg.epochs == 0) {
    result.eval_params = model.store().values();
    return result;
  }

  const long long steps_per_epoch =
      static_cast<long long>(batches(ds, cfg.batch_size, cfg.seed, 0).size());
  const long long total_steps = steps_per_epoch * cfg.epochs;
  long long step = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch + 1;
    const auto chunks = batches(ds, cfg.batch_size, cfg.seed, epoch);
    for (std::size_t bi = 0; bi < chunks.size(); ++bi) {
      const double lr = onecycle_lr(step, total_steps, cfg.base_lr, cfg.pct_start);
      const SampleBatch batch = gather_batch(ds, chunks[bi]);
      LossBreakdown lb;
      try {
        lb = backward(model, batch, cfg.loss);
        adam_step(model.store(), model.store().grads(), opt, adam, lr);
      } catch (const std::runtime_error& e) {
        throw std::runtime_error("train: aborted at epoch " + std::to_string(epoch + 1) +
                                 " batch " + std::to_string(bi) + ": " + e.what());
      }
      if (cfg.ema_enabled) ema.update(model.store().values());
      rec.loss_total += lb.total;
      rec.loss_rec += lb.rec;
      rec.loss_asl += lb.asl;
      rec.loss_kmcl += lb.kmcl;
      rec.lr = lr;
      ++step;
    }
    const double inv = 1.0 / static_cast<double>(chunks.size());
    rec.loss_total *= inv;
    rec.loss_rec *= inv;
    rec.loss_asl *= inv;
    rec.loss_kmcl *= inv;

    if ((epoch + 1) % cfg.eval_every == 0 || epoch + 1 == cfg.epochs) {
      Model snapshot = model;
      if (cfg.ema_enabled && ema.steps() > 0) snapshot.store().values() = ema.snapshot();
      rec.train_map = map_on(snapshot, ds.train_inputs(), ds.train_labels());
      if (ds.n_test > 0) rec.test_map = map_on(snapshot, ds.test_inputs(), ds.test_labels());
    }
    result.curves.push_back(rec);
  }

  result.eval_params = (cfg.ema_enabled && ema.steps() > 0) ? ema.snapshot()
                                                            : model.store().values();
  return result;
}

}  // namespace kmcl
