#pragma once

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "kmcl/data.hpp"
#include "kmcl/losses.hpp"
#include "kmcl/model.hpp"
#include "kmcl/trainer.hpp"

namespace kmcl {

namespace detail {

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

/// Section -> key -> raw value, as read from a key=value file with
/// [section] headers and #-comments.
class ConfigText {
public:
  static ConfigText parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open config " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path);
  }

  static ConfigText parse(const std::string& text, const std::string& where = "<string>") {
    ConfigText out;
    std::istringstream in(text);
    std::string line, section;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const std::string t = detail::trim(line);
      if (t.empty() || t[0] == '#') continue;
      if (t.front() == '[' && t.back() == ']') {
        section = detail::trim(t.substr(1, t.size() - 2));
        out.values_[section];
        continue;
      }
      const auto eq = t.find('=');
      if (eq == std::string::npos)
        throw std::invalid_argument(where + ":" + std::to_string(line_no) +
                                    ": expected key = value, got '" + t + "'");
      if (section.empty())
        throw std::invalid_argument(where + ":" + std::to_string(line_no) +
                                    ": key outside any [section]");
      out.values_[section][detail::trim(t.substr(0, eq))] = detail::trim(t.substr(eq + 1));
    }
    return out;
  }

  bool has(const std::string& section, const std::string& key) const {
    const auto s = values_.find(section);
    return s != values_.end() && s->second.count(key) > 0;
  }

  std::string get(const std::string& section, const std::string& key) const {
    if (!has(section, key))
      throw std::invalid_argument("config: missing [" + section + "] " + key);
    return values_.at(section).at(key);
  }

  const std::map<std::string, std::map<std::string, std::string>>& sections() const {
    return values_;
  }

private:
  std::map<std::string, std::map<std::string, std::string>> values_;
};

namespace detail {

inline double parse_double(const std::string& v, const std::string& what) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty())
    throw std::invalid_argument(what + ": '" + v + "' is not a number");
  return out;
}

inline long long parse_int(const std::string& v, const std::string& what) {
  std::size_t used = 0;
  long long out = 0;
  try {
    out = std::stoll(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty())
    throw std::invalid_argument(what + ": '" + v + "' is not an integer");
  return out;
}

inline bool parse_bool(const std::string& v, const std::string& what) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument(what + ": '" + v + "' is not a boolean");
}

inline std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const std::string t = trim(item);
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

}  // namespace detail

/// One correlation override: corr(i, j) = value.
struct CorrPair {
  int i = 0;
  int j = 0;
  double value = 0.0;
  auto operator<=>(const CorrPair&) const = default;
};

/// Everything a CLI run can configure, with the appendix-table defaults.
struct RunConfig {
  // [data]
  std::string features_path;
  std::string labels_path;
  int train_rows = -1;  // -1: every loaded row is train
  int test_rows = 0;
  int classes = 8;
  int input_dim = 32;
  std::vector<double> marginals = {0.25};  // broadcast when a single entry
  double correlation_base = 0.1;
  std::vector<CorrPair> corr_pairs = {{0, 1, 0.7}, {2, 3, 0.6}, {4, 5, 0.5}};
  double noise_sigma = 0.4;
  int train_samples = 2000;
  int test_samples = 500;
  std::uint64_t data_seed = 1;
  // [encoder]
  bool encoder_identity = false;
  std::vector<int> hidden = {64, 64};
  int feature_dim = 32;
  // [kmm]
  bool anisotropic = false;
  double elu_eps = 1e-7;
  // [loss]
  LossConfig loss;
  // [train]
  int epochs = 30;
  int batch_size = 64;
  double base_lr = 2e-4;
  double weight_decay = 1e-4;
  double pct_start = 0.2;
  bool ema_enabled = true;
  double ema_decay = 0.9997;
  int eval_every = 1;
  std::uint64_t train_seed = 1;
  // [eval]
  std::string checkpoint_path;
  double threshold = 0.5;
  int top_k = 3;
  // [sim]
  int sim_draws_1d = 50;
  int sim_draws_2d = 20;
  std::uint64_t sim_seed = 1;
  double sim_tolerance = 1e-6;
  int sim_grid_points = 4001;
  bool sim_inject_error = false;
  // [grad]
  std::uint64_t grad_seed = 1;
  std::vector<double> grad_h = {1e-5};
  double grad_tolerance = 1e-4;
  bool grad_corrupt = false;
  int grad_classes = 3;
  int grad_feature_dim = 4;
  int grad_input_dim = 5;
  std::vector<int> grad_hidden = {6};
  int grad_batch = 3;

  bool operator==(const RunConfig& other) const = default;

  SynthConfig synth_config() const {
    SynthConfig sc;
    sc.num_classes = classes;
    sc.input_dim = input_dim;
    if (marginals.size() == 1)
      sc.marginals.assign(static_cast<std::size_t>(classes), marginals[0]);
    else
      sc.marginals = marginals;
    sc.correlation = SynthConfig::exchangeable_correlation(classes, correlation_base);
    for (const CorrPair& p : corr_pairs) {
      if (p.i < 0 || p.j < 0 || p.i >= classes || p.j >= classes || p.i == p.j)
        throw std::invalid_argument("data.corr_pairs: index pair (" + std::to_string(p.i) + "," +
                                    std::to_string(p.j) + ") out of range");
      sc.correlation(p.i, p.j) = sc.correlation(p.j, p.i) = p.value;
    }
    sc.noise_sigma = noise_sigma;
    sc.train_samples = train_samples;
    sc.test_samples = test_samples;
    sc.seed = data_seed;
    sc.validate();
    return sc;
  }

  ModelConfig model_config(int data_input_dim) const {
    ModelConfig mc;
    if (encoder_identity) {
      mc.encoder = EncoderConfig::passthrough(data_input_dim);
      mc.kmm.feature_dim = data_input_dim;
    } else {
      std::vector<int> widths;
      widths.push_back(data_input_dim);
      widths.insert(widths.end(), hidden.begin(), hidden.end());
      widths.push_back(feature_dim);
      mc.encoder = EncoderConfig::mlp(widths);
      mc.kmm.feature_dim = feature_dim;
    }
    mc.kmm.num_classes = classes;
    mc.kmm.anisotropic = anisotropic;
    mc.kmm.elu_eps = elu_eps;
    mc.validate();
    return mc;
  }

  TrainConfig train_config() const {
    TrainConfig tc;
    tc.epochs = epochs;
    tc.batch_size = batch_size;
    tc.base_lr = base_lr;
    tc.weight_decay = weight_decay;
    tc.pct_start = pct_start;
    tc.ema_enabled = ema_enabled;
    tc.ema_decay = ema_decay;
    tc.eval_every = eval_every;
    tc.seed = train_seed;
    tc.loss = loss;
    tc.validate();
    return tc;
  }

  static RunConfig from_text(const ConfigText& t);
  std::string serialize() const;
};

inline RunConfig RunConfig::from_text(const ConfigText& t) {
  RunConfig c;
  using detail::parse_bool;
  using detail::parse_double;
  using detail::parse_int;

  static const std::map<std::string, std::vector<std::string>> known = {
      {"data",
       {"features", "labels", "train_rows", "test_rows", "classes", "input_dim", "marginals",
        "correlation", "corr_pairs", "noise_sigma", "train_samples", "test_samples", "seed"}},
      {"encoder", {"identity", "hidden", "feature_dim"}},
      {"kmm", {"anisotropic", "elu_eps"}},
      {"loss",
       {"lambda_asl", "lambda_kmcl", "gamma_plus", "gamma_minus", "margin", "tau", "pi_clamp",
        "similarity", "gaussian_var"}},
      {"train",
       {"epochs", "batch_size", "base_lr", "weight_decay", "pct_start", "ema", "ema_decay",
        "eval_every", "seed"}},
      {"eval", {"checkpoint", "threshold", "top_k"}},
      {"sim", {"draws_1d", "draws_2d", "seed", "tolerance", "grid_points", "inject_error"}},
      {"grad",
       {"seed", "h", "tolerance", "corrupt", "classes", "feature_dim", "input_dim", "hidden",
        "batch"}},
  };
  for (const auto& [section, keys] : t.sections()) {
    const auto it = known.find(section);
    if (it == known.end()) throw std::invalid_argument("config: unknown section [" + section + "]");
    for (const auto& [key, value] : keys) {
      (void)value;
      bool ok = false;
      for (const std::string& k : it->second) ok = ok || k == key;
      if (!ok)
        throw std::invalid_argument("config: unknown key '" + key + "' in [" + section + "]");
    }
  }

  auto str = [&](const char* s, const char* k, std::string& out) {
    if (t.has(s, k)) out = t.get(s, k);
  };
  auto num = [&](const char* s, const char* k, double& out) {
    if (t.has(s, k)) out = parse_double(t.get(s, k), std::string(s) + "." + k);
  };
  auto integer = [&](const char* s, const char* k, int& out) {
    if (t.has(s, k)) out = static_cast<int>(parse_int(t.get(s, k), std::string(s) + "." + k));
  };
  auto seed64 = [&](const char* s, const char* k, std::uint64_t& out) {
    if (t.has(s, k))
      out = static_cast<std::uint64_t>(parse_int(t.get(s, k), std::string(s) + "." + k));
  };
  auto boolean = [&](const char* s, const char* k, bool& out) {
    if (t.has(s, k)) out = parse_bool(t.get(s, k), std::string(s) + "." + k);
  };

  str("data", "features", c.features_path);
  str("data", "labels", c.labels_path);
  integer("data", "train_rows", c.train_rows);
  integer("data", "test_rows", c.test_rows);
  integer("data", "classes", c.classes);
  integer("data", "input_dim", c.input_dim);
  if (t.has("data", "marginals")) {
    c.marginals.clear();
    for (const std::string& m : detail::split_list(t.get("data", "marginals")))
      c.marginals.push_back(parse_double(m, "data.marginals"));
    if (c.marginals.empty()) throw std::invalid_argument("data.marginals: empty list");
  }
  num("data", "correlation", c.correlation_base);
  if (t.has("data", "corr_pairs")) {
    c.corr_pairs.clear();
    for (const std::string& item : detail::split_list(t.get("data", "corr_pairs"))) {
      std::stringstream ss(item);
      std::string a, b, v;
      if (!std::getline(ss, a, ':') || !std::getline(ss, b, ':') || !std::getline(ss, v))
        throw std::invalid_argument("data.corr_pairs: expected i:j:value, got '" + item + "'");
      c.corr_pairs.push_back({static_cast<int>(parse_int(detail::trim(a), "data.corr_pairs")),
                              static_cast<int>(parse_int(detail::trim(b), "data.corr_pairs")),
                              parse_double(detail::trim(v), "data.corr_pairs")});
    }
  }
  num("data", "noise_sigma", c.noise_sigma);
  integer("data", "train_samples", c.train_samples);
  integer("data", "test_samples", c.test_samples);
  seed64("data", "seed", c.data_seed);

  boolean("encoder", "identity", c.encoder_identity);
  if (t.has("encoder", "hidden")) {
    c.hidden.clear();
    for (const std::string& h : detail::split_list(t.get("encoder", "hidden")))
      c.hidden.push_back(static_cast<int>(parse_int(h, "encoder.hidden")));
  }
  integer("encoder", "feature_dim", c.feature_dim);

  boolean("kmm", "anisotropic", c.anisotropic);
  num("kmm", "elu_eps", c.elu_eps);

  num("loss", "lambda_asl", c.loss.lambda_asl);
  num("loss", "lambda_kmcl", c.loss.lambda_kmcl);
  num("loss", "gamma_plus", c.loss.gamma_plus);
  num("loss", "gamma_minus", c.loss.gamma_minus);
  num("loss", "margin", c.loss.margin);
  num("loss", "tau", c.loss.tau);
  num("loss", "pi_clamp", c.loss.pi_clamp);
  if (t.has("loss", "similarity"))
    c.loss.similarity = similarity_kind_from_string(t.get("loss", "similarity"));
  num("loss", "gaussian_var", c.loss.gaussian_var);

  integer("train", "epochs", c.epochs);
  integer("train", "batch_size", c.batch_size);
  num("train", "base_lr", c.base_lr);
  num("train", "weight_decay", c.weight_decay);
  num("train", "pct_start", c.pct_start);
  boolean("train", "ema", c.ema_enabled);
  num("train", "ema_decay", c.ema_decay);
  integer("train", "eval_every", c.eval_every);
  seed64("train", "seed", c.train_seed);

  str("eval", "checkpoint", c.checkpoint_path);
  num("eval", "threshold", c.threshold);
  integer("eval", "top_k", c.top_k);

  integer("sim", "draws_1d", c.sim_draws_1d);
  integer("sim", "draws_2d", c.sim_draws_2d);
  seed64("sim", "seed", c.sim_seed);
  num("sim", "tolerance", c.sim_tolerance);
  integer("sim", "grid_points", c.sim_grid_points);
  boolean("sim", "inject_error", c.sim_inject_error);

  seed64("grad", "seed", c.grad_seed);
  if (t.has("grad", "h")) {
    c.grad_h.clear();
    for (const std::string& h : detail::split_list(t.get("grad", "h")))
      c.grad_h.push_back(parse_double(h, "grad.h"));
    if (c.grad_h.empty()) throw std::invalid_argument("grad.h: empty list");
  }
  num("grad", "tolerance", c.grad_tolerance);
  boolean("grad", "corrupt", c.grad_corrupt);
  integer("grad", "classes", c.grad_classes);
  integer("grad", "feature_dim", c.grad_feature_dim);
  integer("grad", "input_dim", c.grad_input_dim);
  if (t.has("grad", "hidden")) {
    c.grad_hidden.clear();
    for (const std::string& h : detail::split_list(t.get("grad", "hidden")))
      c.grad_hidden.push_back(static_cast<int>(parse_int(h, "grad.hidden")));
  }
  integer("grad", "batch", c.grad_batch);
  return c;
}

inline std::string RunConfig::serialize() const {
  using detail::fmt_double;
  std::ostringstream o;
  auto list_d = [](const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + detail::fmt_double(v[i]);
    return s;
  };
  auto list_i = [](const std::vector<int>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
  };
  o << "[data]\n";
  o << "features = " << features_path << "\n";
  o << "labels = " << labels_path << "\n";
  o << "train_rows = " << train_rows << "\n";
  o << "test_rows = " << test_rows << "\n";
  o << "classes = " << classes << "\n";
  o << "input_dim = " << input_dim << "\n";
  o << "marginals = " << list_d(marginals) << "\n";
  o << "correlation = " << fmt_double(correlation_base) << "\n";
  o << "corr_pairs =";
  for (std::size_t i = 0; i < corr_pairs.size(); ++i)
    o << (i ? ", " : " ") << corr_pairs[i].i << ":" << corr_pairs[i].j << ":"
      << fmt_double(corr_pairs[i].value);
  o << "\n";
  o << "noise_sigma = " << fmt_double(noise_sigma) << "\n";
  o << "train_samples = " << train_samples << "\n";
  o << "test_samples = " << test_samples << "\n";
  o << "seed = " << data_seed << "\n";
  o << "\n[encoder]\n";
  o << "identity = " << (encoder_identity ? "true" : "false") << "\n";
  o << "hidden = " << list_i(hidden) << "\n";
  o << "feature_dim = " << feature_dim << "\n";
  o << "\n[kmm]\n";
  o << "anisotropic = " << (anisotropic ? "true" : "false") << "\n";
  o << "elu_eps = " << fmt_double(elu_eps) << "\n";
  o << "\n[loss]\n";
  o << "lambda_asl = " << fmt_double(loss.lambda_asl) << "\n";
  o << "lambda_kmcl = " << fmt_double(loss.lambda_kmcl) << "\n";
  o << "gamma_plus = " << fmt_double(loss.gamma_plus) << "\n";
  o << "gamma_minus = " << fmt_double(loss.gamma_minus) << "\n";
  o << "margin = " << fmt_double(loss.margin) << "\n";
  o << "tau = " << fmt_double(loss.tau) << "\n";
  o << "pi_clamp = " << fmt_double(loss.pi_clamp) << "\n";
  o << "similarity = " << to_string(loss.similarity) << "\n";
  o << "gaussian_var = " << fmt_double(loss.gaussian_var) << "\n";
  o << "\n[train]\n";
  o << "epochs = " << epochs << "\n";
  o << "batch_size = " << batch_size << "\n";
  o << "base_lr = " << fmt_double(base_lr) << "\n";
  o << "weight_decay = " << fmt_double(weight_decay) << "\n";
  o << "pct_start = " << fmt_double(pct_start) << "\n";
  o << "ema = " << (ema_enabled ? "true" : "false") << "\n";
  o << "ema_decay = " << fmt_double(ema_decay) << "\n";
  o << "eval_every = " << eval_every << "\n";
  o << "seed = " << train_seed << "\n";
  o << "\n[eval]\n";
  o << "checkpoint = " << checkpoint_path << "\n";
  o << "threshold = " << fmt_double(threshold) << "\n";
  o << "top_k = " << top_k << "\n";
  o << "\n[sim]\n";
  o << "draws_1d = " << sim_draws_1d << "\n";
  o << "draws_2d = " << sim_draws_2d << "\n";
  o << "seed = " << sim_seed << "\n";
  o << "tolerance = " << fmt_double(sim_tolerance) << "\n";
  o << "grid_points = " << sim_grid_points << "\n";
  o << "inject_error = " << (sim_inject_error ? "true" : "false") << "\n";
  o << "\n[grad]\n";
  o << "seed = " << grad_seed << "\n";
  o << "h = " << list_d(grad_h) << "\n";
  o << "tolerance = " << fmt_double(grad_tolerance) << "\n";
  o << "corrupt = " << (grad_corrupt ? "true" : "false") << "\n";
  o << "classes = " << grad_classes << "\n";
  o << "feature_dim = " << grad_feature_dim << "\n";
  o << "input_dim = " << grad_input_dim << "\n";
  o << "hidden = " << list_i(grad_hidden) << "\n";
  o << "batch = " << grad_batch << "\n";
  return o.str();
}

}  // namespace kmcl
