#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace kmcl {

/// Scores are the pi head outputs in [0,1]; truths are binary.
struct PredictionSet {
  Eigen::MatrixXd scores;  // N x K
  Eigen::MatrixXi truths;  // N x K, entries 0/1

  void validate() const {
    if (scores.rows() != truths.rows() || scores.cols() != truths.cols())
      throw std::invalid_argument("predictions: score/truth shapes differ");
    if (scores.rows() < 1) throw std::invalid_argument("predictions: empty");
    if (!scores.allFinite()) throw std::invalid_argument("predictions: non-finite score");
    for (Eigen::Index i = 0; i < truths.size(); ++i)
      if (truths(i) != 0 && truths(i) != 1)
        throw std::invalid_argument("predictions: truths must be binary");
  }
};

/// Raw finite-sum average precision: sort by descending score (ties keep the
/// original order) and average precision-at-rank over the positives. Columns
/// without a positive are undefined and reported as nullopt.
inline std::optional<double> average_precision(std::span<const double> scores,
                                               std::span<const int> truths) {
  const std::size_t n = scores.size();
  if (truths.size() != n) throw std::invalid_argument("average_precision: length mismatch");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  int positives = 0;
  for (const int t : truths) positives += t;
  if (positives == 0) return std::nullopt;
  int hits = 0;
  double sum = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    if (truths[order[r]] == 1) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(r + 1);
    }
  }
  return sum / positives;
}

/// Rank-based AUC (Mann-Whitney with midranks for ties). Undefined without
/// at least one positive and one negative.
inline std::optional<double> auc(std::span<const double> scores, std::span<const int> truths) {
  const std::size_t n = scores.size();
  if (truths.size() != n) throw std::invalid_argument("auc: length mismatch");
  int positives = 0;
  for (const int t : truths) positives += t;
  const int negatives = static_cast<int>(n) - positives;
  if (positives == 0 || negatives == 0) return std::nullopt;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j + 1);
    for (std::size_t r = i; r <= j; ++r)
      if (truths[order[r]] == 1) rank_sum_pos += midrank;
    i = j + 1;
  }
  const double p = positives;
  return (rank_sum_pos - p * (p + 1.0) / 2.0) / (p * negatives);
}

struct SixMetrics {
  double op = 0.0, or_ = 0.0, of1 = 0.0;
  double cp = 0.0, cr = 0.0, cf1 = 0.0;
};

namespace detail {

inline double safe_div(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

inline double f1(double p, double r) { return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r); }

/// Pooled and per-class precision/recall from a binary prediction mask.
inline SixMetrics metrics_from_mask(const Eigen::MatrixXi& pred, const Eigen::MatrixXi& truth) {
  const Eigen::Index k_classes = truth.cols();
  double tp_all = 0.0, fp_all = 0.0, fn_all = 0.0;
  double cp_sum = 0.0, cr_sum = 0.0;
  for (Eigen::Index k = 0; k < k_classes; ++k) {
    double tp = 0.0, fp = 0.0, fn = 0.0;
    for (Eigen::Index n = 0; n < truth.rows(); ++n) {
      const bool t = truth(n, k) == 1;
      const bool p = pred(n, k) == 1;
      tp += (t && p);
      fp += (!t && p);
      fn += (t && !p);
    }
    tp_all += tp;
    fp_all += fp;
    fn_all += fn;
    cp_sum += safe_div(tp, tp + fp);
    cr_sum += safe_div(tp, tp + fn);
  }
  SixMetrics m;
  m.op = safe_div(tp_all, tp_all + fp_all);
  m.or_ = safe_div(tp_all, tp_all + fn_all);
  m.of1 = f1(m.op, m.or_);
  m.cp = cp_sum / static_cast<double>(k_classes);
  m.cr = cr_sum / static_cast<double>(k_classes);
  m.cf1 = f1(m.cp, m.cr);
  return m;
}

}  // namespace detail

/// Binarize at the threshold (score >= threshold predicts positive) and pool
/// decisions for OP/OR/OF1; CP/CR average per-class precision/recall, with
/// 0/0 counted as 0.
inline SixMetrics overall_and_perclass(const PredictionSet& pred, double threshold = 0.5) {
  pred.validate();
  if (threshold <= 0.0 || threshold >= 1.0)
    throw std::invalid_argument("metrics: threshold must be in (0,1)");
  Eigen::MatrixXi mask(pred.scores.rows(), pred.scores.cols());
  for (Eigen::Index n = 0; n < pred.scores.rows(); ++n)
    for (Eigen::Index k = 0; k < pred.scores.cols(); ++k)
      mask(n, k) = pred.scores(n, k) >= threshold ? 1 : 0;
  return detail::metrics_from_mask(mask, pred.truths);
}

/// Same six metrics with predictions truncated per sample to the k highest
/// scores (ties keep the lower class index) that also clear the threshold.
inline SixMetrics topk_metrics(const PredictionSet& pred, int k = 3, double threshold = 0.5) {
  pred.validate();
  if (k < 1 || k > pred.scores.cols())
    throw std::invalid_argument("metrics: top-k must be in [1, K]");
  Eigen::MatrixXi mask = Eigen::MatrixXi::Zero(pred.scores.rows(), pred.scores.cols());
  std::vector<int> order(static_cast<std::size_t>(pred.scores.cols()));
  for (Eigen::Index n = 0; n < pred.scores.rows(); ++n) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return pred.scores(n, a) > pred.scores(n, b); });
    for (int r = 0; r < k; ++r)
      if (pred.scores(n, order[static_cast<std::size_t>(r)]) >= threshold)
        mask(n, order[static_cast<std::size_t>(r)]) = 1;
  }
  return detail::metrics_from_mask(mask, pred.truths);
}

struct MetricsReport {
  double map = 0.0;
  int map_classes_used = 0;
  std::vector<std::optional<double>> ap;   // per class; nullopt = no positives
  std::vector<std::optional<double>> auc;  // per class; nullopt = degenerate
  double mean_auc = 0.0;
  int auc_classes_used = 0;
  SixMetrics all;
  SixMetrics top3;
};

/// Full evaluation table: mAP over defined columns, the six thresholded
/// metrics, their top-k variants, and per-class AUC.
inline MetricsReport evaluate_predictions(const PredictionSet& pred, double threshold = 0.5,
                                          int top_k = 3) {
  pred.validate();
  MetricsReport rep;
  const Eigen::Index k_classes = pred.scores.cols();
  std::vector<double> col_scores(static_cast<std::size_t>(pred.scores.rows()));
  std::vector<int> col_truths(static_cast<std::size_t>(pred.scores.rows()));
  double ap_sum = 0.0, auc_sum = 0.0;
  for (Eigen::Index k = 0; k < k_classes; ++k) {
    for (Eigen::Index n = 0; n < pred.scores.rows(); ++n) {
      col_scores[static_cast<std::size_t>(n)] = pred.scores(n, k);
      col_truths[static_cast<std::size_t>(n)] = pred.truths(n, k);
    }
    const auto ap_k = average_precision(col_scores, col_truths);
    rep.ap.push_back(ap_k);
    if (ap_k) {
      ap_sum += *ap_k;
      ++rep.map_classes_used;
    }
    const auto auc_k = auc(col_scores, col_truths);
    rep.auc.push_back(auc_k);
    if (auc_k) {
      auc_sum += *auc_k;
      ++rep.auc_classes_used;
    }
  }
  rep.map = rep.map_classes_used == 0 ? 0.0 : ap_sum / rep.map_classes_used;
  rep.mean_auc = rep.auc_classes_used == 0 ? 0.0 : auc_sum / rep.auc_classes_used;
  rep.all = overall_and_perclass(pred, threshold);
  rep.top3 = topk_metrics(pred, std::min<int>(top_k, static_cast<int>(k_classes)), threshold);
  return rep;
}

}  // namespace kmcl
