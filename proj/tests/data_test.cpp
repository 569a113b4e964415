#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "kmcl/data.hpp"

using namespace kmcl;

namespace {

SynthConfig base_config() {
  SynthConfig cfg;
  cfg.num_classes = 4;
  cfg.input_dim = 8;
  cfg.marginals.assign(4, 0.5);
  cfg.correlation = SynthConfig::exchangeable_correlation(4, 0.0);
  cfg.noise_sigma = 0.1;
  cfg.train_samples = 400;
  cfg.test_samples = 100;
  cfg.seed = 7;
  return cfg;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("kmcl_data_test_" + name);
}

}  // namespace

TEST(NormalQuantile, InvertsTheCdf) {
  for (const double p : {0.01, 0.1, 0.25, 0.5, 0.8, 0.999}) {
    EXPECT_NEAR(normal_cdf(normal_quantile(p)), p, 1e-12);
  }
  EXPECT_NEAR(normal_quantile(0.5), 0.0, 1e-12);
  EXPECT_THROW(normal_quantile(0.0), std::invalid_argument);
}

TEST(Generate, MarginalsMatchMonteCarlo) {
  SynthConfig cfg = base_config();
  cfg.train_samples = 10000;
  cfg.test_samples = 0;
  const Dataset ds = generate(cfg);
  for (int k = 0; k < cfg.num_classes; ++k) {
    const double freq = ds.labels.col(k).cast<double>().mean();
    EXPECT_NEAR(freq, 0.5, 0.02);
  }
  // Labels-per-sample histogram mean matches the sum of marginals.
  const auto hist = labels_per_sample_histogram(ds);
  double mean = 0.0;
  for (std::size_t c = 0; c < hist.size(); ++c) mean += static_cast<double>(c) * hist[c];
  mean /= ds.total();
  EXPECT_NEAR(mean, 2.0, 0.05);
}

TEST(Generate, CorrelatedPairCoOccursAboveIndependence) {
  SynthConfig cfg = base_config();
  cfg.train_samples = 10000;
  cfg.test_samples = 0;
  cfg.correlation(1, 2) = cfg.correlation(2, 1) = 0.9;
  const Dataset ds = generate(cfg);
  double both = 0.0, p1 = 0.0, p2 = 0.0;
  for (int n = 0; n < ds.total(); ++n) {
    both += ds.labels(n, 1) && ds.labels(n, 2);
    p1 += ds.labels(n, 1);
    p2 += ds.labels(n, 2);
  }
  both /= ds.total();
  p1 /= ds.total();
  p2 /= ds.total();
  EXPECT_GT(both, p1 * p2 + 0.05);
}

TEST(Generate, NoiselessSingleLabelSamplesEqualPrototypes) {
  SynthConfig cfg = base_config();
  cfg.noise_sigma = 0.0;
  cfg.train_samples = 3000;
  cfg.test_samples = 0;
  const Dataset ds = generate(cfg);
  // Collect the per-class prototype from any single-label sample, then check
  // every other single-label sample of the same class matches bit-exactly.
  std::vector<int> seen(static_cast<std::size_t>(cfg.num_classes), -1);
  int checked = 0;
  for (int n = 0; n < ds.total(); ++n) {
    if (ds.labels.row(n).sum() != 1) continue;
    int k = 0;
    while (!ds.labels(n, k)) ++k;
    if (seen[static_cast<std::size_t>(k)] < 0) {
      seen[static_cast<std::size_t>(k)] = n;
    } else {
      EXPECT_EQ(ds.inputs.row(n), ds.inputs.row(seen[static_cast<std::size_t>(k)]));
      ++checked;
    }
  }
  EXPECT_GT(checked, 0);
}

TEST(Generate, BitReproducibleForFixedSeed) {
  const SynthConfig cfg = base_config();
  const Dataset a = generate(cfg);
  const Dataset b = generate(cfg);
  EXPECT_EQ(a.inputs, b.inputs);
  EXPECT_EQ(a.labels, b.labels);

  SynthConfig other = cfg;
  other.seed = 8;
  const Dataset c = generate(other);
  EXPECT_NE(a.labels, c.labels);
}

TEST(Generate, RejectsNonPsdCorrelation) {
  SynthConfig cfg = base_config();
  cfg.correlation = SynthConfig::exchangeable_correlation(4, -0.9);  // eigenvalue 1-4*0.9 < 0
  EXPECT_THROW(generate(cfg), std::invalid_argument);
}

TEST(Generate, TrainSplitHoldsEveryClass) {
  SynthConfig cfg = base_config();
  cfg.marginals = {0.02, 0.5, 0.5, 0.5};  // rare class forces redraw logic
  cfg.train_samples = 120;
  cfg.test_samples = 30;
  const Dataset ds = generate(cfg);
  for (int k = 0; k < cfg.num_classes; ++k)
    EXPECT_GT(ds.train_labels().col(k).sum(), 0);
}

TEST(LoadTable, RoundTripsSavedDataset) {
  const Dataset ds = generate(base_config());
  const auto fp = temp_path("feat.csv");
  const auto lp = temp_path("lab.csv");
  save_table(ds, fp.string(), lp.string());
  const Dataset back = load_table(fp.string(), lp.string());
  EXPECT_EQ(back.total(), ds.total());
  EXPECT_EQ(back.labels, ds.labels);
  EXPECT_EQ(back.inputs, ds.inputs);  // %.17g round-trips doubles exactly
  std::filesystem::remove(fp);
  std::filesystem::remove(lp);
}

TEST(LoadTable, ErrorPathsCarryLineNumbers) {
  const auto fp = temp_path("bad_feat.csv");
  const auto lp = temp_path("bad_lab.csv");

  std::ofstream(fp.string()) << "f0,f1\n1.0,2.0\n3.0,4.0\n";
  std::ofstream(lp.string()) << "y0\n1\n2\n";
  try {
    load_table(fp.string(), lp.string());
    FAIL() << "expected non-binary label error";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find(":3"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("'2'"), std::string::npos);
  }

  std::ofstream(lp.string()) << "y0\n1\n";
  EXPECT_THROW(load_table(fp.string(), lp.string()), std::invalid_argument);  // row mismatch

  std::ofstream(fp.string()) << "f0,f1\n1.0\n";
  std::ofstream(lp.string()) << "y0\n1\n";
  try {
    load_table(fp.string(), lp.string());
    FAIL() << "expected column-count error";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find(":2"), std::string::npos);
  }

  std::ofstream(fp.string()) << "f0,f1\n";
  try {
    load_table(fp.string(), lp.string());
    FAIL() << "expected empty-file error";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("no data rows"), std::string::npos);
  }
  std::filesystem::remove(fp);
  std::filesystem::remove(lp);
}

TEST(Batches, DeterministicPerSeedAndEpoch) {
  const Dataset ds = generate(base_config());
  const auto a = batches(ds, 32, 5, 2);
  const auto b = batches(ds, 32, 5, 2);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, batches(ds, 32, 5, 3));   // new epoch reshuffles
  EXPECT_NE(a, batches(ds, 32, 11, 2));  // new seed reshuffles
  // Every train row appears exactly once.
  std::vector<int> seen(static_cast<std::size_t>(ds.n_train), 0);
  for (const auto& batch : a)
    for (const int idx : batch) ++seen[static_cast<std::size_t>(idx)];
  for (const int c : seen) EXPECT_EQ(c, 1);
}

TEST(Batches, ShortBatchRule) {
  Dataset ds = generate(base_config());
  ds.set_split(10, ds.total() - 10);
  const auto chunks = batches(ds, 4, 1, 0);
  // 10 = 4 + 4 + 2; the remainder of two is kept.
  ASSERT_EQ(chunks.size(), 3u);
  EXPECT_EQ(chunks[2].size(), 2u);

  ds.set_split(9, ds.total() - 9);
  const auto dropped = batches(ds, 4, 1, 0);
  ASSERT_EQ(dropped.size(), 2u);  // 9 = 4 + 4 + dropped singleton

  EXPECT_THROW(batches(ds, 1, 1, 0), std::invalid_argument);
  EXPECT_THROW(batches(ds, ds.n_train + 1, 1, 0), std::invalid_argument);
}
