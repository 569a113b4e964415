#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <filesystem>

#include "kmcl/checkpoint.hpp"
#include "kmcl/data.hpp"
#include "kmcl/trainer.hpp"

using namespace kmcl;

namespace {

SynthConfig small_task(std::uint64_t seed, double correlation = 0.0) {
  SynthConfig sc;
  sc.num_classes = 4;
  sc.input_dim = 16;
  sc.marginals.assign(4, 0.3);
  sc.correlation = SynthConfig::exchangeable_correlation(4, correlation);
  sc.noise_sigma = 0.4;
  sc.train_samples = 600;
  sc.test_samples = 200;
  sc.seed = seed;
  return sc;
}

ModelConfig small_model() {
  ModelConfig mc;
  mc.encoder = EncoderConfig::mlp({16, 32, 32, 16});
  mc.kmm = KmmConfig{.num_classes = 4, .feature_dim = 16};
  return mc;
}

}  // namespace

TEST(Train, ZeroEpochsLeavesParametersUntouched) {
  const Dataset ds = generate(small_task(3));
  TrainConfig tc;
  tc.epochs = 0;
  tc.batch_size = 32;
  const TrainResult r = train(ds, small_model(), tc);
  EXPECT_TRUE(r.curves.empty());
  const Model fresh(small_model(), tc.seed);
  EXPECT_EQ(r.model.store().values(), fresh.store().values());
  EXPECT_EQ(r.eval_params, fresh.store().values());
}

TEST(Train, DeterministicAcrossRuns) {
  const Dataset ds = generate(small_task(5));
  TrainConfig tc;
  tc.epochs = 3;
  tc.batch_size = 32;
  tc.seed = 9;
  const TrainResult a = train(ds, small_model(), tc);
  const TrainResult b = train(ds, small_model(), tc);
  EXPECT_EQ(a.model.store().values(), b.model.store().values());
  EXPECT_EQ(a.eval_params, b.eval_params);
  ASSERT_EQ(a.curves.size(), b.curves.size());
  for (std::size_t i = 0; i < a.curves.size(); ++i) {
    EXPECT_EQ(a.curves[i].loss_total, b.curves[i].loss_total);
    EXPECT_EQ(a.curves[i].test_map, b.curves[i].test_map);
  }
}

TEST(Train, LossDecaysOverEarlyEpochs) {
  const Dataset ds = generate(small_task(7, 0.15));
  TrainConfig tc;
  tc.epochs = 6;
  tc.batch_size = 32;
  const TrainResult r = train(ds, small_model(), tc);
  int violations = 0;
  for (int e = 1; e < 5; ++e)
    if (r.curves[static_cast<std::size_t>(e)].loss_total >
        r.curves[static_cast<std::size_t>(e - 1)].loss_total)
      ++violations;
  EXPECT_LE(violations, 1);
}

TEST(Train, EvalCadenceSkipsIntermediateEpochs) {
  const Dataset ds = generate(small_task(23));
  TrainConfig tc;
  tc.epochs = 5;
  tc.batch_size = 32;
  tc.eval_every = 2;
  const TrainResult r = train(ds, small_model(), tc);
  EXPECT_TRUE(std::isnan(r.curves[0].test_map));   // epoch 1 skipped
  EXPECT_FALSE(std::isnan(r.curves[1].test_map));  // epoch 2 evaluated
  EXPECT_TRUE(std::isnan(r.curves[2].test_map));
  EXPECT_FALSE(std::isnan(r.curves[4].test_map));  // final epoch always evaluated
}

TEST(Train, ScheduleAndEmaStayFinite) {
  const Dataset ds = generate(small_task(11));
  TrainConfig tc;
  tc.epochs = 4;
  tc.batch_size = 32;
  const TrainResult r = train(ds, small_model(), tc);
  for (const double v : r.eval_params) EXPECT_TRUE(std::isfinite(v));
  for (const double v : r.model.store().values()) EXPECT_TRUE(std::isfinite(v));
  // lr recorded per epoch: rises to the peak region then anneals.
  EXPECT_GT(r.curves[0].lr, 0.0);
  EXPECT_LT(r.curves.back().lr, r.curves[1].lr);
}

TEST(Train, ContrastiveTermDoesNotRegressTheClassifier) {
  // Correlation-free task trained to convergence: the classification path
  // alone must reach 0.9 mAP, and adding the contrastive term must not cost
  // more than 0.02. The extra objective slows early epochs, so the guard
  // compares converged runs.
  SynthConfig sc = small_task(13, 0.0);
  sc.noise_sigma = 0.3;
  const Dataset ds = generate(sc);
  TrainConfig plain;
  plain.epochs = 100;
  plain.batch_size = 32;
  plain.seed = 4;
  plain.loss.lambda_kmcl = 0.0;
  const TrainResult without = train(ds, small_model(), plain);

  TrainConfig full = plain;
  full.loss.lambda_kmcl = 0.3;
  const TrainResult with = train(ds, small_model(), full);

  EXPECT_GE(without.curves.back().test_map, 0.9);
  EXPECT_GE(with.curves.back().test_map, without.curves.back().test_map - 0.02);
}

TEST(Train, NonFiniteLossNamesTheBatch) {
  const Dataset ds = generate(small_task(17));
  TrainConfig tc;
  tc.epochs = 2;
  tc.batch_size = 32;
  tc.base_lr = 5e5;  // blows the parameters up within the first epoch
  try {
    train(ds, small_model(), tc);
    FAIL() << "expected a runtime abort";
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("batch"), std::string::npos);
    EXPECT_NE(msg.find("epoch"), std::string::npos);
  }
}

TEST(Checkpoint, RoundTripsBitExactly) {
  const Dataset ds = generate(small_task(19));
  TrainConfig tc;
  tc.epochs = 2;
  tc.batch_size = 32;
  const ModelConfig mc = small_model();
  const TrainResult r = train(ds, mc, tc);

  const auto path = std::filesystem::temp_directory_path() / "kmcl_trainer_test_ck.txt";
  save_checkpoint(path.string(), mc, r.eval_params);
  const Checkpoint ck = load_checkpoint(path.string());
  EXPECT_EQ(ck.values, r.eval_params);
  EXPECT_EQ(ck.config.kmm.num_classes, 4);
  EXPECT_EQ(ck.config.encoder.widths, mc.encoder.widths);

  // Saving the loaded values again reproduces the identical file.
  const auto path2 = std::filesystem::temp_directory_path() / "kmcl_trainer_test_ck2.txt";
  save_checkpoint(path2.string(), ck.config, ck.values);
  std::ifstream a(path), b(path2);
  std::stringstream sa, sb;
  sa << a.rdbuf();
  sb << b.rdbuf();
  EXPECT_EQ(sa.str(), sb.str());
  std::filesystem::remove(path);
  std::filesystem::remove(path2);
}

TEST(Checkpoint, RejectsWrongShapesAndMagic) {
  const auto path = std::filesystem::temp_directory_path() / "kmcl_trainer_test_bad.txt";
  std::ofstream(path.string()) << "not a checkpoint\n";
  EXPECT_THROW(load_checkpoint(path.string()), std::invalid_argument);

  const ModelConfig mc = small_model();
  const Model m(mc, 1);
  std::vector<double> wrong(m.store().size() + 1, 0.0);
  EXPECT_THROW(save_checkpoint(path.string(), mc, wrong), std::invalid_argument);
  std::filesystem::remove(path);
}
