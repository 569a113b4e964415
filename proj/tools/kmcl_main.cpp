#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>

#include "kmcl/checkpoint.hpp"
#include "kmcl/config.hpp"
#include "kmcl/data.hpp"
#include "kmcl/grad.hpp"
#include "kmcl/metrics.hpp"
#include "kmcl/quadrature.hpp"
#include "kmcl/trainer.hpp"

namespace fs = std::filesystem;
using namespace kmcl;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitVerification = 2;
constexpr int kExitRuntime = 3;

struct CommonArgs {
  std::string config_path;
  std::string out_dir = ".";
  std::optional<long long> seed;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "key=value config file");
  cmd->add_option("--seed", args.seed, "override every section seed");
  cmd->add_option("--out", args.out_dir, "output directory");
}

RunConfig load_run_config(const CommonArgs& args) {
  RunConfig cfg;
  if (!args.config_path.empty())
    cfg = RunConfig::from_text(ConfigText::parse_file(args.config_path));
  if (args.seed) {
    const auto s = static_cast<std::uint64_t>(*args.seed);
    cfg.data_seed = cfg.train_seed = cfg.sim_seed = cfg.grad_seed = s;
  }
  return cfg;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot open " + p.string() + " for writing");
  return out;
}

Dataset load_configured_dataset(const RunConfig& cfg) {
  if (cfg.features_path.empty() || cfg.labels_path.empty())
    throw std::invalid_argument("data.features / data.labels: dataset paths are required");
  if (!fs::exists(cfg.features_path))
    throw std::invalid_argument("data.features: no such file " + cfg.features_path);
  if (!fs::exists(cfg.labels_path))
    throw std::invalid_argument("data.labels: no such file " + cfg.labels_path);
  Dataset ds = load_table(cfg.features_path, cfg.labels_path);
  if (cfg.train_rows >= 0) {
    if (cfg.train_rows + cfg.test_rows != ds.total())
      throw std::invalid_argument("data.train_rows/test_rows: split " +
                                  std::to_string(cfg.train_rows) + "+" +
                                  std::to_string(cfg.test_rows) + " does not cover " +
                                  std::to_string(ds.total()) + " rows");
    ds.set_split(cfg.train_rows, cfg.test_rows);
  }
  return ds;
}

void write_metrics_csv(const fs::path& path, const PredictionSet& pred, double threshold,
                       int top_k) {
  const MetricsReport rep = evaluate_predictions(pred, threshold, top_k);
  auto out = open_out(path);
  out << "metric,class,value\n";
  out << "mAP,overall," << fmt(rep.map) << "\n";
  out << "mean_AUC,overall," << fmt(rep.mean_auc) << "\n";
  const SixMetrics& a = rep.all;
  out << "OP,overall," << fmt(a.op) << "\nOR,overall," << fmt(a.or_) << "\nOF1,overall,"
      << fmt(a.of1) << "\nCP,overall," << fmt(a.cp) << "\nCR,overall," << fmt(a.cr)
      << "\nCF1,overall," << fmt(a.cf1) << "\n";
  const SixMetrics& t = rep.top3;
  out << "top3_OP,overall," << fmt(t.op) << "\ntop3_OR,overall," << fmt(t.or_)
      << "\ntop3_OF1,overall," << fmt(t.of1) << "\ntop3_CP,overall," << fmt(t.cp)
      << "\ntop3_CR,overall," << fmt(t.cr) << "\ntop3_CF1,overall," << fmt(t.cf1) << "\n";
  for (std::size_t k = 0; k < rep.ap.size(); ++k)
    out << "AP," << k << "," << (rep.ap[k] ? fmt(*rep.ap[k]) : "nan") << "\n";
  for (std::size_t k = 0; k < rep.auc.size(); ++k)
    out << "AUC," << k << "," << (rep.auc[k] ? fmt(*rep.auc[k]) : "nan") << "\n";
}

int cmd_synth_gen(const CommonArgs& args) {
  RunConfig cfg = load_run_config(args);
  const SynthConfig sc = cfg.synth_config();
  const Dataset ds = generate(sc);
  fs::create_directories(args.out_dir);
  const fs::path features = fs::path(args.out_dir) / "features.csv";
  const fs::path labels = fs::path(args.out_dir) / "labels.csv";
  save_table(ds, features.string(), labels.string());

  cfg.features_path = features.string();
  cfg.labels_path = labels.string();
  cfg.train_rows = sc.train_samples;
  cfg.test_rows = sc.test_samples;
  auto manifest = open_out(fs::path(args.out_dir) / "manifest.txt");
  manifest << "# dataset manifest; parses as a run config\n";
  manifest << "# labels-per-sample histogram:";
  for (const int h : labels_per_sample_histogram(ds)) manifest << " " << h;
  manifest << "\n" << cfg.serialize();
  std::printf("synth-gen: wrote %d train + %d test samples (K=%d, M_in=%d) under %s\n",
              sc.train_samples, sc.test_samples, sc.num_classes, sc.input_dim,
              args.out_dir.c_str());
  return kExitOk;
}

int cmd_train(const CommonArgs& args) {
  const RunConfig cfg = load_run_config(args);
  const Dataset ds = load_configured_dataset(cfg);
  if (ds.num_classes() != cfg.classes)
    throw std::invalid_argument("data.classes: config says K=" + std::to_string(cfg.classes) +
                                ", label file has K=" + std::to_string(ds.num_classes()));
  const ModelConfig mc = cfg.model_config(ds.input_dim());
  const TrainConfig tc = cfg.train_config();
  const TrainResult result = train(ds, mc, tc);

  fs::create_directories(args.out_dir);
  const fs::path ck_path = fs::path(args.out_dir) / "checkpoint.txt";
  save_checkpoint(ck_path.string(), mc, result.eval_params);

  auto curves = open_out(fs::path(args.out_dir) / "curves.csv");
  curves << "epoch,loss_total,loss_rec,loss_asl,loss_kmcl,lr,train_mAP,test_mAP\n";
  for (const EpochRecord& e : result.curves)
    curves << e.epoch << "," << fmt(e.loss_total) << "," << fmt(e.loss_rec) << ","
           << fmt(e.loss_asl) << "," << fmt(e.loss_kmcl) << "," << fmt(e.lr) << ","
           << fmt(e.train_map) << "," << fmt(e.test_map) << "\n";

  const Model eval_model = load_checkpoint(ck_path.string()).to_model();
  const bool has_test = ds.n_test > 0;
  PredictionSet pred;
  pred.scores = eval_model.scores(has_test ? ds.test_inputs() : ds.train_inputs());
  pred.truths = has_test ? ds.test_labels() : ds.train_labels();
  write_metrics_csv(fs::path(args.out_dir) / "metrics.csv", pred, cfg.threshold, cfg.top_k);

  const double final_map = result.curves.empty() ? 0.0 : result.curves.back().test_map;
  std::printf("train: %d epochs done, final test mAP %s; artifacts under %s\n", tc.epochs,
              fmt(final_map).c_str(), args.out_dir.c_str());
  return kExitOk;
}

int cmd_eval(const CommonArgs& args) {
  const RunConfig cfg = load_run_config(args);
  if (cfg.checkpoint_path.empty())
    throw std::invalid_argument("eval.checkpoint: path required");
  const Checkpoint ck = load_checkpoint(cfg.checkpoint_path);
  const Dataset ds = load_configured_dataset(cfg);
  if (ds.num_classes() != ck.config.kmm.num_classes)
    throw std::invalid_argument("eval: class count mismatch, checkpoint expects K=" +
                                std::to_string(ck.config.kmm.num_classes) + ", dataset has K=" +
                                std::to_string(ds.num_classes()));
  if (ds.input_dim() != ck.config.encoder.input_dim())
    throw std::invalid_argument("eval: input dim mismatch, checkpoint expects " +
                                std::to_string(ck.config.encoder.input_dim()) +
                                ", dataset has " + std::to_string(ds.input_dim()));
  const Model model = ck.to_model();
  const bool has_test = ds.n_test > 0;
  PredictionSet pred;
  pred.scores = model.scores(has_test ? ds.test_inputs() : ds.train_inputs());
  pred.truths = has_test ? ds.test_labels() : ds.train_labels();
  fs::create_directories(args.out_dir);
  write_metrics_csv(fs::path(args.out_dir) / "metrics.csv", pred, cfg.threshold, cfg.top_k);
  const MetricsReport rep = evaluate_predictions(pred, cfg.threshold, cfg.top_k);
  std::printf("eval: mAP %s over %d rows; metrics.csv under %s\n", fmt(rep.map).c_str(),
              static_cast<int>(pred.scores.rows()), args.out_dir.c_str());
  return kExitOk;
}

/// Rotates kernel-pair structures so every closed form gets exercised under
/// its validity constraints, comparing each against one shared quadrature
/// value per pair.
int cmd_sim_verify(const CommonArgs& args) {
  const RunConfig cfg = load_run_config(args);
  Rng rng(cfg.sim_seed);
  fs::create_directories(args.out_dir);
  auto out = open_out(fs::path(args.out_dir) / "sim_verify.csv");
  out << "kind,params,closed_form,oracle,rel_err\n";

  double max_rel = 0.0;
  auto emit = [&](const std::string& kind, const std::string& params, double closed,
                  double oracle) {
    double value = closed;
    if (cfg.sim_inject_error) value *= 1.0 + 1e-3;  // verification-failure hook
    const double rel = std::abs(value - oracle) / std::max(std::abs(oracle), 1e-300);
    max_rel = std::max(max_rel, rel);
    out << kind << "," << params << "," << fmt(value) << "," << fmt(oracle) << "," << fmt(rel)
        << "\n";
  };

  for (int t = 0; t < cfg.sim_draws_1d; ++t) {
    const double mp = rng.uniform(-3.0, 3.0), mq = rng.uniform(-3.0, 3.0);
    const double vp = rng.uniform(0.25, 4.0);
    const double vq_raw = rng.uniform(0.25, 4.0);
    const int structure = t % 2;  // 0: heteroscedastic, 1: shared variance
    const double vq = structure == 0 ? vq_raw : vp;
    const KernelSpec p = KernelSpec::isotropic(mp, vp, 1);
    const KernelSpec q = KernelSpec::isotropic(mq, vq, 1);
    const double oracle =
        quadrature_oracle(to_full(p), to_full(q), default_grid(p, q, cfg.sim_grid_points));
    char params[128];
    std::snprintf(params, sizeof params, "M=1;mu=%.3f/%.3f;var=%.3f/%.3f", mp, mq, vp, vq);
    emit("bhattacharyya_full", params, bhattacharyya_full(to_full(p), to_full(q)), oracle);
    emit("bhattacharyya_anisotropic", params,
         bhattacharyya_diagonal(to_diagonal(p), to_diagonal(q)), oracle);
    emit("bhattacharyya_isotropic", params, bhattacharyya_isotropic(p, q), oracle);
    if (structure == 1) {
      emit("mahalanobis", params, mahalanobis_similarity(p, q), oracle);
      emit("gaussian", params, gaussian_similarity(p, q), oracle);
    }
  }

  for (int t = 0; t < cfg.sim_draws_2d; ++t) {
    Eigen::VectorXd mp(2), mq(2);
    for (int i = 0; i < 2; ++i) {
      mp(i) = rng.uniform(-3.0, 3.0);
      mq(i) = rng.uniform(-3.0, 3.0);
    }
    const int structure = t % 3;  // 0: full SPD pair, 1: homoscedastic, 2: shared isotropic
    KernelSpec p, q;
    if (structure == 2) {
      const double v = rng.uniform(0.25, 4.0);
      p = KernelSpec::isotropic_vec(mp, v);
      q = KernelSpec::isotropic_vec(mq, v);
    } else {
      auto random_spd = [&] {
        Eigen::MatrixXd a(2, 2);
        for (int i = 0; i < 4; ++i) a(i / 2, i % 2) = rng.normal();
        return Eigen::MatrixXd(a * a.transpose() + 0.25 * Eigen::MatrixXd::Identity(2, 2));
      };
      const Eigen::MatrixXd cp = random_spd();
      p = KernelSpec::full(mp, cp);
      q = KernelSpec::full(mq, structure == 1 ? cp : random_spd());
    }
    const double oracle =
        quadrature_oracle(to_full(p), to_full(q), default_grid(p, q, cfg.sim_grid_points));
    char params[64];
    std::snprintf(params, sizeof params, "M=2;draw=%d;structure=%d", t, structure);
    emit("bhattacharyya_full", params, bhattacharyya_full(to_full(p), to_full(q)), oracle);
    if (structure != 0) emit("mahalanobis", params, mahalanobis_similarity(p, q), oracle);
    if (structure == 2) emit("gaussian", params, gaussian_similarity(p, q), oracle);
  }

  std::printf("sim-verify: max rel err %s over %d 1D + %d 2D draws (tolerance %s)\n",
              fmt(max_rel).c_str(), cfg.sim_draws_1d, cfg.sim_draws_2d,
              fmt(cfg.sim_tolerance).c_str());
  return max_rel <= cfg.sim_tolerance ? kExitOk : kExitVerification;
}

int cmd_grad_check(const CommonArgs& args) {
  const RunConfig cfg = load_run_config(args);
  ModelConfig mc;
  std::vector<int> widths;
  widths.push_back(cfg.grad_input_dim);
  widths.insert(widths.end(), cfg.grad_hidden.begin(), cfg.grad_hidden.end());
  widths.push_back(cfg.grad_feature_dim);
  mc.encoder = EncoderConfig::mlp(widths);
  mc.kmm.num_classes = cfg.grad_classes;
  mc.kmm.feature_dim = cfg.grad_feature_dim;
  Model model(mc, cfg.grad_seed);

  Rng rng(mix_seed(cfg.grad_seed, 0xba7c4));
  SampleBatch batch;
  batch.inputs.resize(cfg.grad_batch, cfg.grad_input_dim);
  for (int n = 0; n < cfg.grad_batch; ++n) {
    for (int j = 0; j < cfg.grad_input_dim; ++j) batch.inputs(n, j) = rng.normal();
    LabelVector y;
    y.bits.resize(static_cast<std::size_t>(cfg.grad_classes));
    for (int k = 0; k < cfg.grad_classes; ++k)
      y.bits[static_cast<std::size_t>(k)] = rng.uniform() < 0.5;
    if (y.count() == 0) y.bits[static_cast<std::size_t>(rng.below(cfg.grad_classes))] = 1;
    batch.labels.push_back(y);
  }

  fs::create_directories(args.out_dir);
  auto out = open_out(fs::path(args.out_dir) / "grad_check.csv");
  out << "h,coordinate,analytic,numeric,rel_err\n";
  double max_rel = 0.0;
  for (const double h : cfg.grad_h) {
    FdResult r = finite_diff_check(model, batch, cfg.loss, h, true);
    if (cfg.grad_corrupt && !r.rows.empty()) {
      // Verification-failure hook: damage one analytic entry and rescore it.
      FdRow& row = r.rows.front();
      row.analytic = row.analytic * 1.5 + 0.1;
      const double diff = std::abs(row.numeric - row.analytic);
      row.rel_err =
          diff <= 1e-8 ? 0.0 : diff / std::max(std::abs(row.numeric), std::abs(row.analytic));
    }
    for (const FdRow& row : r.rows) {
      max_rel = std::max(max_rel, row.rel_err);
      out << fmt(h) << "," << row.name << "," << fmt(row.analytic) << "," << fmt(row.numeric)
          << "," << fmt(row.rel_err) << "\n";
    }
  }
  std::printf("grad-check: max rel err %s over %zu step sizes (tolerance %s)\n",
              fmt(max_rel).c_str(), cfg.grad_h.size(), fmt(cfg.grad_tolerance).c_str());
  return max_rel <= cfg.grad_tolerance ? kExitOk : kExitVerification;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kernel-mixture multilabel learning toolkit"};
  app.require_subcommand(1);

  CommonArgs synth_args, train_args, eval_args, sim_args, grad_args;
  add_common(app.add_subcommand("synth-gen", "generate a synthetic correlated dataset"),
             synth_args);
  add_common(app.add_subcommand("train", "train on a dataset and write artifacts"), train_args);
  add_common(app.add_subcommand("eval", "evaluate a checkpoint on a dataset"), eval_args);
  add_common(app.add_subcommand("sim-verify", "check closed-form similarities against quadrature"),
             sim_args);
  add_common(app.add_subcommand("grad-check", "check analytic gradients by central differences"),
             grad_args);

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand("synth-gen")) return cmd_synth_gen(synth_args);
    if (app.got_subcommand("train")) return cmd_train(train_args);
    if (app.got_subcommand("eval")) return cmd_eval(eval_args);
    if (app.got_subcommand("sim-verify")) return cmd_sim_verify(sim_args);
    if (app.got_subcommand("grad-check")) return cmd_grad_check(grad_args);
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitValidation;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
  return kExitValidation;
}
