#include <gtest/gtest.h>

#include "kmcl/config.hpp"

using namespace kmcl;

TEST(Config, DefaultsRoundTripThroughSerialization) {
  const RunConfig base;
  const RunConfig back = RunConfig::from_text(ConfigText::parse(base.serialize()));
  EXPECT_EQ(base, back);
}

TEST(Config, ModifiedValuesRoundTrip) {
  RunConfig cfg;
  cfg.features_path = "/tmp/x.csv";
  cfg.labels_path = "/tmp/y.csv";
  cfg.classes = 5;
  cfg.marginals = {0.1, 0.2, 0.3, 0.4, 0.5};
  cfg.corr_pairs = {{0, 4, -0.25}};
  cfg.noise_sigma = 0.125;
  cfg.hidden = {16};
  cfg.anisotropic = true;
  cfg.loss.similarity = SimilarityKind::Mahalanobis;
  cfg.loss.tau = 0.07;
  cfg.epochs = 3;
  cfg.ema_enabled = false;
  cfg.grad_h = {1e-4, 1e-5, 1e-6};
  cfg.checkpoint_path = "run/checkpoint.txt";
  const RunConfig back = RunConfig::from_text(ConfigText::parse(cfg.serialize()));
  EXPECT_EQ(cfg, back);
}

TEST(Config, ParserBasics) {
  const ConfigText t = ConfigText::parse(
      "# comment\n[train]\nepochs = 7\n\n[loss]\ntau = 0.5\nsimilarity = gaussian\n");
  const RunConfig cfg = RunConfig::from_text(t);
  EXPECT_EQ(cfg.epochs, 7);
  EXPECT_DOUBLE_EQ(cfg.loss.tau, 0.5);
  EXPECT_EQ(cfg.loss.similarity, SimilarityKind::GaussianRBF);
  // Untouched fields keep their defaults.
  EXPECT_EQ(cfg.batch_size, 64);
  EXPECT_DOUBLE_EQ(cfg.loss.lambda_kmcl, 0.3);
}

TEST(Config, RejectsUnknownAndMalformedInput) {
  EXPECT_THROW(RunConfig::from_text(ConfigText::parse("[nope]\nx = 1\n")), std::invalid_argument);
  EXPECT_THROW(RunConfig::from_text(ConfigText::parse("[train]\nnope = 1\n")),
               std::invalid_argument);
  EXPECT_THROW(ConfigText::parse("[train]\nepochs 7\n"), std::invalid_argument);
  EXPECT_THROW(ConfigText::parse("epochs = 7\n"), std::invalid_argument);  // key before section
  EXPECT_THROW(RunConfig::from_text(ConfigText::parse("[train]\nepochs = seven\n")),
               std::invalid_argument);
  EXPECT_THROW(RunConfig::from_text(ConfigText::parse("[train]\nema = maybe\n")),
               std::invalid_argument);
  EXPECT_THROW(RunConfig::from_text(ConfigText::parse("[loss]\nsimilarity = cosine\n")),
               std::invalid_argument);
}

TEST(Config, SynthConfigAssembly) {
  RunConfig cfg;
  cfg.classes = 3;
  cfg.marginals = {0.5};  // broadcast
  cfg.correlation_base = 0.2;
  cfg.corr_pairs = {{0, 2, 0.6}};
  const SynthConfig sc = cfg.synth_config();
  EXPECT_EQ(sc.marginals.size(), 3u);
  EXPECT_DOUBLE_EQ(sc.correlation(0, 2), 0.6);
  EXPECT_DOUBLE_EQ(sc.correlation(2, 0), 0.6);
  EXPECT_DOUBLE_EQ(sc.correlation(0, 1), 0.2);
  EXPECT_DOUBLE_EQ(sc.correlation(1, 1), 1.0);

  cfg.corr_pairs = {{0, 7, 0.5}};
  EXPECT_THROW(cfg.synth_config(), std::invalid_argument);  // pair out of range
}

TEST(Config, ModelConfigAssembly) {
  RunConfig cfg;
  cfg.classes = 4;
  cfg.hidden = {10, 6};
  cfg.feature_dim = 5;
  const ModelConfig mc = cfg.model_config(12);
  EXPECT_EQ(mc.encoder.widths, (std::vector<int>{12, 10, 6, 5}));
  EXPECT_EQ(mc.kmm.feature_dim, 5);
  EXPECT_EQ(mc.kmm.num_classes, 4);

  cfg.encoder_identity = true;
  const ModelConfig ident = cfg.model_config(12);
  EXPECT_TRUE(ident.encoder.identity);
  EXPECT_EQ(ident.kmm.feature_dim, 12);
}
