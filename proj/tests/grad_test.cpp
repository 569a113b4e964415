#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>

#include "kmcl/grad.hpp"
#include "kmcl/model.hpp"
#include "kmcl/rng.hpp"

using namespace kmcl;

namespace {

SampleBatch random_sample_batch(Rng& rng, int n, int in_dim, int k_classes,
                                bool allow_empty = false) {
  SampleBatch b;
  b.inputs.resize(n, in_dim);
  for (int s = 0; s < n; ++s) {
    for (int j = 0; j < in_dim; ++j) b.inputs(s, j) = rng.normal();
    LabelVector y;
    y.bits.resize(k_classes);
    for (int k = 0; k < k_classes; ++k) y.bits[k] = rng.uniform() < 0.5 ? 1 : 0;
    if (!allow_empty && y.count() == 0)
      y.bits[static_cast<std::size_t>(rng.below(k_classes))] = 1;
    b.labels.push_back(y);
  }
  return b;
}

ModelConfig small_config(bool anisotropic = false) {
  ModelConfig cfg;
  cfg.encoder = EncoderConfig::mlp({5, 6, 4});
  cfg.kmm = KmmConfig{.num_classes = 3, .feature_dim = 4, .anisotropic = anisotropic};
  return cfg;
}

}  // namespace

TEST(FiniteDiff, QuadraticToyLossIsExact) {
  // Central differences are exact for quadratics up to rounding.
  auto f = [](double x) { return 3.0 * x * x - 2.0 * x + 7.0; };
  const double x0 = 1.37, h = 1e-5;
  const double numeric = (f(x0 + h) - f(x0 - h)) / (2.0 * h);
  const double analytic = 6.0 * x0 - 2.0;
  EXPECT_NEAR(numeric, analytic, 1e-10 * std::abs(analytic));
}

TEST(Backward, MatchesFiniteDifferencesIsotropic) {
  Rng rng(101);
  Model model(small_config(false), 42);
  const SampleBatch batch = random_sample_batch(rng, 3, 5, 3);
  const FdResult r = finite_diff_check(model, batch, LossConfig{}, 1e-5);
  EXPECT_LE(r.max_rel_err, 1e-4) << "worst at " << r.worst_coordinate << " analytic "
                                 << r.worst_analytic << " numeric " << r.worst_numeric;
}

TEST(Backward, MatchesFiniteDifferencesAnisotropic) {
  Rng rng(103);
  Model model(small_config(true), 43);
  const SampleBatch batch = random_sample_batch(rng, 3, 5, 3);
  LossConfig cfg;
  cfg.similarity = SimilarityKind::BhattacharyyaDiagonal;
  const FdResult r = finite_diff_check(model, batch, cfg, 1e-5);
  EXPECT_LE(r.max_rel_err, 1e-4) << r.worst_coordinate;
}

TEST(Backward, MatchesFiniteDifferencesEverySimilarityKind) {
  Rng rng(107);
  const SampleBatch batch = random_sample_batch(rng, 4, 5, 3);
  for (const SimilarityKind kind :
       {SimilarityKind::BhattacharyyaIsotropic, SimilarityKind::Mahalanobis,
        SimilarityKind::GaussianRBF}) {
    Model model(small_config(false), 44);
    LossConfig cfg;
    cfg.similarity = kind;
    const FdResult r = finite_diff_check(model, batch, cfg, 1e-5);
    EXPECT_LE(r.max_rel_err, 1e-4) << to_string(kind) << " worst " << r.worst_coordinate;
  }
}

TEST(Backward, MatchesFiniteDifferencesIdentityEncoder) {
  Rng rng(109);
  ModelConfig cfg;
  cfg.encoder = EncoderConfig::passthrough(4);
  cfg.kmm = KmmConfig{.num_classes = 3, .feature_dim = 4};
  Model model(cfg, 45);
  const SampleBatch batch = random_sample_batch(rng, 3, 4, 3);
  const FdResult r = finite_diff_check(model, batch, LossConfig{}, 1e-5);
  EXPECT_LE(r.max_rel_err, 1e-4) << r.worst_coordinate;
}

TEST(Backward, MatchesFiniteDifferencesWithEmptySupportSample) {
  Rng rng(113);
  Model model(small_config(false), 46);
  SampleBatch batch = random_sample_batch(rng, 4, 5, 3);
  batch.labels[2].bits.assign(3, 0);  // excluded from REC, no anchor in KMCL
  const FdResult r = finite_diff_check(model, batch, LossConfig{}, 1e-5);
  EXPECT_LE(r.max_rel_err, 1e-4) << r.worst_coordinate;
}

TEST(Backward, ZeroGradientAtFlatPoint) {
  // Full supports make the reconstruction ratio identically one; with both
  // lambdas at zero the whole objective is flat.
  Rng rng(127);
  Model model(small_config(false), 47);
  SampleBatch batch = random_sample_batch(rng, 3, 5, 3);
  for (auto& y : batch.labels) y.bits.assign(3, 1);
  LossConfig cfg;
  cfg.lambda_asl = 0.0;
  cfg.lambda_kmcl = 0.0;
  const LossBreakdown loss = backward(model, batch, cfg);
  EXPECT_DOUBLE_EQ(loss.total, 0.0);
  for (const double g : model.store().grads()) EXPECT_DOUBLE_EQ(g, 0.0);
}

TEST(Backward, AslSpotValueAtHalf) {
  // Zero weights make pi exactly 0.5; d(-log pi)/dpi = -2 there, and the
  // sigmoid slope 1/4 puts -0.5 on the pi-head bias gradient.
  ModelConfig cfg = small_config(false);
  cfg.kmm.num_classes = 1;
  Model model(cfg, 48);
  std::fill(model.store().values().begin(), model.store().values().end(), 0.0);
  SampleBatch batch;
  batch.inputs = Eigen::MatrixXd::Zero(2, 5);
  LabelVector y;
  y.bits = {1};
  batch.labels = {y, y};
  LossConfig loss_cfg;
  loss_cfg.lambda_asl = 1.0;
  loss_cfg.lambda_kmcl = 0.0;
  backward(model, batch, loss_cfg);
  EXPECT_DOUBLE_EQ(model.store().grad_mat("kmm.b_pi")(0, 0), -0.5);
}

TEST(Backward, GradientIsLinearInLambdas) {
  Rng rng(131);
  Model model(small_config(false), 49);
  const SampleBatch batch = random_sample_batch(rng, 4, 5, 3);

  auto grads_for = [&](double la, double lk) {
    LossConfig cfg;
    cfg.lambda_asl = la;
    cfg.lambda_kmcl = lk;
    backward(model, batch, cfg);
    return model.store().grads();
  };
  const std::vector<double> g_rec = grads_for(0.0, 0.0);
  const std::vector<double> g_rec_asl = grads_for(1.0, 0.0);
  const std::vector<double> g_rec_kmcl = grads_for(0.0, 1.0);
  const std::vector<double> g_mix = grads_for(0.1, 0.3);

  for (std::size_t i = 0; i < g_mix.size(); ++i) {
    const double asl_only = g_rec_asl[i] - g_rec[i];
    const double kmcl_only = g_rec_kmcl[i] - g_rec[i];
    const double expected = g_rec[i] + 0.1 * asl_only + 0.3 * kmcl_only;
    EXPECT_NEAR(g_mix[i], expected, 1e-12 * std::max(1.0, std::abs(expected)));
  }
}

TEST(Backward, Deterministic) {
  Rng rng(137);
  Model model(small_config(false), 50);
  const SampleBatch batch = random_sample_batch(rng, 4, 5, 3);
  backward(model, batch, LossConfig{});
  const std::vector<double> first = model.store().grads();
  backward(model, batch, LossConfig{});
  EXPECT_EQ(first, model.store().grads());
}

TEST(Backward, EluSlopeContinuousAtZero) {
  const double eps = 1e-7;
  auto act = [&](double a) { return elu(a) + 2.0 + eps; };
  const double h = 1e-6;
  const double right = (act(h) - act(0.0)) / h;
  const double left = (act(0.0) - act(-h)) / h;
  EXPECT_NEAR(right, left, 1e-6);
}

TEST(FiniteDiff, FlagsDeliberatelyCorruptedGradient) {
  Rng rng(139);
  Model model(small_config(false), 51);
  const SampleBatch batch = random_sample_batch(rng, 3, 5, 3);
  const FdResult clean = finite_diff_check(model, batch, LossConfig{}, 1e-5, true);
  ASSERT_FALSE(clean.rows.empty());
  // Corrupt the largest analytic entry and re-evaluate its relative error.
  std::size_t worst = 0;
  for (std::size_t i = 0; i < clean.rows.size(); ++i)
    if (std::abs(clean.rows[i].analytic) > std::abs(clean.rows[worst].analytic)) worst = i;
  const double corrupted = clean.rows[worst].analytic * 1.5 + 0.1;
  const double rel = std::abs(clean.rows[worst].numeric - corrupted) /
                     std::max({1e-8, std::abs(corrupted), std::abs(clean.rows[worst].numeric)});
  EXPECT_GT(rel, 1e-2);
}

TEST(FiniteDiff, RejectsStepOutsideRange) {
  Rng rng(149);
  Model model(small_config(false), 52);
  const SampleBatch batch = random_sample_batch(rng, 3, 5, 3);
  EXPECT_THROW(finite_diff_check(model, batch, LossConfig{}, 1e-8), std::invalid_argument);
  EXPECT_THROW(finite_diff_check(model, batch, LossConfig{}, 1e-2), std::invalid_argument);
}
