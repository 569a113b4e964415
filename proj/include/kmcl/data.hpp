#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "kmcl/losses.hpp"
#include "kmcl/rng.hpp"

namespace kmcl {

/// Standard normal CDF and its inverse (bisection; the quantile is evaluated
/// once per class, so robustness beats speed here).
inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

inline double normal_quantile(double p) {
  if (p <= 0.0 || p >= 1.0) throw std::invalid_argument("normal_quantile: p must be in (0,1)");
  double lo = -40.0, hi = 40.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (normal_cdf(mid) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

/// Synthetic correlated-multilabel task: labels from a thresholded Gaussian
/// copula matching the marginals and (approximately) the target correlation;
/// inputs are sums of per-class prototypes plus isotropic noise.
struct SynthConfig {
  int num_classes = 8;
  int input_dim = 32;
  std::vector<double> marginals;   // length K, each in (0,1)
  Eigen::MatrixXd correlation;     // K x K, symmetric, unit diagonal, PSD
  double noise_sigma = 0.25;
  int train_samples = 2000;
  int test_samples = 500;
  std::uint64_t seed = 1;

  void validate() const {
    if (num_classes < 1) throw std::invalid_argument("synth: num_classes must be >= 1");
    if (input_dim < 1) throw std::invalid_argument("synth: input_dim must be >= 1");
    if (static_cast<int>(marginals.size()) != num_classes)
      throw std::invalid_argument("synth: marginals must have one entry per class");
    for (const double p : marginals)
      if (p <= 0.0 || p >= 1.0)
        throw std::invalid_argument("synth: marginals must lie in (0,1)");
    if (correlation.rows() != num_classes || correlation.cols() != num_classes)
      throw std::invalid_argument("synth: correlation must be K x K");
    for (int i = 0; i < num_classes; ++i) {
      if (std::abs(correlation(i, i) - 1.0) > 1e-12)
        throw std::invalid_argument("synth: correlation diagonal must be 1");
      for (int j = 0; j < num_classes; ++j) {
        if (std::abs(correlation(i, j) - correlation(j, i)) > 1e-12)
          throw std::invalid_argument("synth: correlation must be symmetric");
        if (correlation(i, j) < -1.0 || correlation(i, j) > 1.0)
          throw std::invalid_argument("synth: correlation entries must lie in [-1,1]");
      }
    }
    if (noise_sigma < 0.0) throw std::invalid_argument("synth: noise_sigma must be >= 0");
    if (train_samples < 1 || test_samples < 0)
      throw std::invalid_argument("synth: sample counts invalid");
  }

  /// Uniform off-diagonal correlation, PSD for r in [-1/(K-1), 1].
  static Eigen::MatrixXd exchangeable_correlation(int k, double r) {
    Eigen::MatrixXd c = Eigen::MatrixXd::Constant(k, k, r);
    c.diagonal().setOnes();
    return c;
  }
};

struct Dataset {
  Eigen::MatrixXd inputs;  // N_total x M_in, train rows first
  Eigen::MatrixXi labels;  // N_total x K
  int n_train = 0;
  int n_test = 0;

  int total() const { return static_cast<int>(inputs.rows()); }
  int num_classes() const { return static_cast<int>(labels.cols()); }
  int input_dim() const { return static_cast<int>(inputs.cols()); }

  void set_split(int train, int test) {
    if (train < 0 || test < 0 || train + test != total())
      throw std::invalid_argument("dataset: split does not cover the rows");
    n_train = train;
    n_test = test;
  }

  LabelVector label_row(int n) const {
    LabelVector y;
    y.bits.resize(static_cast<std::size_t>(labels.cols()));
    for (Eigen::Index k = 0; k < labels.cols(); ++k)
      y.bits[static_cast<std::size_t>(k)] = static_cast<std::uint8_t>(labels(n, k));
    return y;
  }

  Eigen::MatrixXd train_inputs() const { return inputs.topRows(n_train); }
  Eigen::MatrixXi train_labels() const { return labels.topRows(n_train); }
  Eigen::MatrixXd test_inputs() const { return inputs.bottomRows(n_test); }
  Eigen::MatrixXi test_labels() const { return labels.bottomRows(n_test); }
};

namespace detail {

inline Eigen::MatrixXd psd_factor_or_throw(const Eigen::MatrixXd& corr) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(corr);
  if (es.eigenvalues().minCoeff() < -1e-9)
    throw std::invalid_argument("synth: correlation matrix is not positive semi-definite");
  Eigen::VectorXd clipped = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * clipped.asDiagonal();
}

}  // namespace detail

inline Dataset generate(const SynthConfig& cfg) {
  cfg.validate();
  const int k_classes = cfg.num_classes;
  const int n_total = cfg.train_samples + cfg.test_samples;
  const Eigen::MatrixXd factor = detail::psd_factor_or_throw(cfg.correlation);
  Rng rng(cfg.seed);

  Eigen::MatrixXd prototypes(k_classes, cfg.input_dim);
  for (int k = 0; k < k_classes; ++k)
    for (int j = 0; j < cfg.input_dim; ++j) prototypes(k, j) = rng.normal();

  std::vector<double> thresholds(static_cast<std::size_t>(k_classes));
  for (int k = 0; k < k_classes; ++k)
    thresholds[static_cast<std::size_t>(k)] = normal_quantile(cfg.marginals[static_cast<std::size_t>(k)]);

  Dataset ds;
  ds.labels.resize(n_total, k_classes);
  // Redraw until the train split holds at least one positive per class.
  constexpr int kMaxAttempts = 100;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    Eigen::VectorXd g(k_classes);
    for (int n = 0; n < n_total; ++n) {
      for (int k = 0; k < k_classes; ++k) g(k) = rng.normal();
      const Eigen::VectorXd z = factor * g;
      for (int k = 0; k < k_classes; ++k)
        ds.labels(n, k) = z(k) < thresholds[static_cast<std::size_t>(k)] ? 1 : 0;
    }
    bool ok = true;
    for (int k = 0; k < k_classes && ok; ++k)
      ok = ds.labels.col(k).head(cfg.train_samples).sum() > 0;
    if (ok) break;
    if (attempt == kMaxAttempts - 1)
      throw std::runtime_error("synth: could not draw a train split with every class present");
  }

  ds.inputs.resize(n_total, cfg.input_dim);
  for (int n = 0; n < n_total; ++n) {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(cfg.input_dim);
    for (int k = 0; k < k_classes; ++k)
      if (ds.labels(n, k)) x += prototypes.row(k).transpose();
    for (int j = 0; j < cfg.input_dim; ++j) x(j) += cfg.noise_sigma * rng.normal();
    ds.inputs.row(n) = x.transpose();
  }
  ds.set_split(cfg.train_samples, cfg.test_samples);
  return ds;
}

/// Count of samples per number-of-labels bucket (0..K).
inline std::vector<int> labels_per_sample_histogram(const Dataset& ds) {
  std::vector<int> hist(static_cast<std::size_t>(ds.num_classes()) + 1, 0);
  for (int n = 0; n < ds.total(); ++n)
    ++hist[static_cast<std::size_t>(ds.labels.row(n).sum())];
  return hist;
}

// ---------------------------------------------------------------------------
// Plain-file ingestion: comma-separated, one sample per row, features and
// labels in separate files sharing row order, first row a header.
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) {
    const auto a = field.find_first_not_of(" \t\r");
    const auto b = field.find_last_not_of(" \t\r");
    out.push_back(a == std::string::npos ? "" : field.substr(a, b - a + 1));
  }
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

struct ParsedTable {
  int cols = 0;
  std::vector<std::vector<std::string>> rows;  // data rows only
};

inline ParsedTable read_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open " + path);
  ParsedTable t;
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument(path + ": no data rows");
  t.cols = static_cast<int>(split_csv_line(line).size());
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (static_cast<int>(fields.size()) != t.cols)
      throw std::invalid_argument(path + ":" + std::to_string(line_no) + ": expected " +
                                  std::to_string(t.cols) + " columns, found " +
                                  std::to_string(fields.size()));
    t.rows.push_back(std::move(fields));
  }
  if (t.rows.empty()) throw std::invalid_argument(path + ": no data rows");
  return t;
}

}  // namespace detail

/// Parses a feature table and a label table; the header rows define M_in and
/// K. Malformed rows, non-binary labels, and row-count mismatches are
/// rejected with their location.
inline Dataset load_table(const std::string& features_path, const std::string& labels_path) {
  const detail::ParsedTable ft = detail::read_table(features_path);
  const detail::ParsedTable lt = detail::read_table(labels_path);
  if (ft.rows.size() != lt.rows.size())
    throw std::invalid_argument("row-count mismatch: " + features_path + " has " +
                                std::to_string(ft.rows.size()) + " rows, " + labels_path +
                                " has " + std::to_string(lt.rows.size()));
  Dataset ds;
  const int n = static_cast<int>(ft.rows.size());
  ds.inputs.resize(n, ft.cols);
  ds.labels.resize(n, lt.cols);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < ft.cols; ++c) {
      const std::string& s = ft.rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(s, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != s.size() || s.empty())
        throw std::invalid_argument(features_path + ":" + std::to_string(r + 2) +
                                    ": bad feature value '" + s + "'");
      ds.inputs(r, c) = v;
    }
    for (int c = 0; c < lt.cols; ++c) {
      const std::string& s = lt.rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
      if (s == "0")
        ds.labels(r, c) = 0;
      else if (s == "1")
        ds.labels(r, c) = 1;
      else
        throw std::invalid_argument(labels_path + ":" + std::to_string(r + 2) +
                                    ": label entry '" + s + "' is not binary");
    }
  }
  ds.set_split(n, 0);
  return ds;
}

inline void save_table(const Dataset& ds, const std::string& features_path,
                       const std::string& labels_path) {
  std::ofstream f(features_path);
  if (!f) throw std::invalid_argument("cannot open " + features_path + " for writing");
  for (int c = 0; c < ds.input_dim(); ++c) f << (c ? "," : "") << "f" << c;
  f << "\n";
  char buf[64];
  for (int r = 0; r < ds.total(); ++r) {
    for (int c = 0; c < ds.input_dim(); ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", ds.inputs(r, c));
      f << (c ? "," : "") << buf;
    }
    f << "\n";
  }
  std::ofstream l(labels_path);
  if (!l) throw std::invalid_argument("cannot open " + labels_path + " for writing");
  for (int c = 0; c < ds.num_classes(); ++c) l << (c ? "," : "") << "y" << c;
  l << "\n";
  for (int r = 0; r < ds.total(); ++r) {
    for (int c = 0; c < ds.num_classes(); ++c) l << (c ? "," : "") << ds.labels(r, c);
    l << "\n";
  }
}

/// Seeded epoch shuffle of the train rows, chunked into minibatches of N in
/// order; a final short batch is dropped only when it holds fewer than the
/// two samples the contrastive term needs.
inline std::vector<std::vector<int>> batches(const Dataset& ds, int batch_size,
                                             std::uint64_t seed, int epoch) {
  if (batch_size < 2) throw std::invalid_argument("batches: batch size must be >= 2");
  if (batch_size > ds.n_train)
    throw std::invalid_argument("batches: batch size exceeds train split");
  std::vector<int> order(static_cast<std::size_t>(ds.n_train));
  for (int i = 0; i < ds.n_train; ++i) order[static_cast<std::size_t>(i)] = i;
  Rng rng(mix_seed(seed, 0xb47c0000ULL + static_cast<std::uint64_t>(epoch)));
  shuffle(order, rng);
  std::vector<std::vector<int>> out;
  for (std::size_t at = 0; at < order.size(); at += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(order.size(), at + static_cast<std::size_t>(batch_size));
    if (end - at < 2) break;
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(at),
                     order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

}  // namespace kmcl
