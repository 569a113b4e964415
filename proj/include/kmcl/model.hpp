#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>
#include <vector>

#include "kmcl/encoder.hpp"
#include "kmcl/kmm.hpp"
#include "kmcl/losses.hpp"
#include "kmcl/param_store.hpp"
#include "kmcl/rng.hpp"

namespace kmcl {

/// Raw inputs and labels for one minibatch; rows of `inputs` are samples.
struct SampleBatch {
  Eigen::MatrixXd inputs;
  std::vector<LabelVector> labels;

  int size() const { return static_cast<int>(inputs.rows()); }
};

struct ModelConfig {
  EncoderConfig encoder;
  KmmConfig kmm;

  void validate() const {
    encoder.validate();
    kmm.validate();
    if (encoder.output_dim() != kmm.feature_dim)
      throw std::invalid_argument("model: encoder output dim does not match kmm feature dim");
  }
};

/// Everything the backward pass needs from a forward pass.
struct ForwardCache {
  std::vector<EncoderTrace> traces;        // per sample
  std::vector<Eigen::VectorXd> features;   // per sample, = traces[n].features()
  std::vector<KmmActivations> activations; // per sample
  std::vector<KernelParams> params;        // per sample

  BatchView view(std::span<const LabelVector> labels) const {
    return BatchView{params, features, labels};
  }
};

/// Feature encoder plus kernel mixture head over one flat parameter store.
class Model {
public:
  Model(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
    cfg_.validate();
    for (int l = 0; l < cfg_.encoder.num_layers(); ++l) {
      store_.add("enc.w" + std::to_string(l), cfg_.encoder.widths[l + 1], cfg_.encoder.widths[l]);
      store_.add("enc.b" + std::to_string(l), cfg_.encoder.widths[l + 1], 1);
    }
    const int k = cfg_.kmm.num_classes;
    const int m = cfg_.kmm.feature_dim;
    const int hr = cfg_.kmm.head_rows();
    store_.add("kmm.w_pi", k, m);
    store_.add("kmm.w_mu", hr, m);
    store_.add("kmm.w_var", hr, m);
    store_.add("kmm.b_pi", k, 1);
    store_.add("kmm.b_mu", hr, 1);
    store_.add("kmm.b_var", hr, 1);
    init_params(seed);
  }

  const ModelConfig& config() const { return cfg_; }
  ParamStore& store() { return store_; }
  const ParamStore& store() const { return store_; }

  EncoderWeights encoder_weights() const {
    EncoderWeights w;
    for (int l = 0; l < cfg_.encoder.num_layers(); ++l) {
      w.w.push_back(store_.mat("enc.w" + std::to_string(l)));
      w.b.push_back(store_.mat("enc.b" + std::to_string(l)).col(0));
    }
    return w;
  }

  KmmWeights kmm_weights() const {
    KmmWeights w;
    w.w_pi = store_.mat("kmm.w_pi");
    w.w_mu = store_.mat("kmm.w_mu");
    w.w_var = store_.mat("kmm.w_var");
    w.b_pi = store_.mat("kmm.b_pi").col(0);
    w.b_mu = store_.mat("kmm.b_mu").col(0);
    w.b_var = store_.mat("kmm.b_var").col(0);
    return w;
  }

  ForwardCache forward(const SampleBatch& batch) const {
    if (batch.inputs.cols() != cfg_.encoder.input_dim())
      throw std::invalid_argument("model: batch input dim does not match encoder");
    if (static_cast<int>(batch.labels.size()) != batch.size())
      throw std::invalid_argument("model: label count does not match batch size");
    const EncoderWeights enc = encoder_weights();
    const KmmWeights kmm = kmm_weights();
    ForwardCache cache;
    for (int n = 0; n < batch.size(); ++n) {
      EncoderTrace t = encode_traced(batch.inputs.row(n).transpose(), enc, cfg_.encoder);
      cache.features.push_back(t.features());
      cache.activations.push_back(kmm_forward(t.features(), kmm, cfg_.kmm));
      cache.params.push_back(kmm_activate(cache.activations.back(), cfg_.kmm));
      cache.traces.push_back(std::move(t));
    }
    return cache;
  }

  /// Class-probability matrix (the pi head) for a block of inputs.
  Eigen::MatrixXd scores(const Eigen::MatrixXd& inputs) const {
    const EncoderWeights enc = encoder_weights();
    const KmmWeights kmm = kmm_weights();
    Eigen::MatrixXd out(inputs.rows(), cfg_.kmm.num_classes);
    for (Eigen::Index n = 0; n < inputs.rows(); ++n) {
      const Eigen::VectorXd f = encode(inputs.row(n).transpose(), enc, cfg_.encoder);
      const KernelParams p = kmm_activate(kmm_forward(f, kmm, cfg_.kmm), cfg_.kmm);
      out.row(n) = p.pi.transpose();
    }
    return out;
  }

private:
  void init_params(std::uint64_t seed) {
    Rng enc_rng(mix_seed(seed, 0x656e63));
    const EncoderWeights enc = EncoderWeights::init(cfg_.encoder, enc_rng);
    for (int l = 0; l < cfg_.encoder.num_layers(); ++l) {
      store_.mat("enc.w" + std::to_string(l)) = enc.w[l];
      store_.mat("enc.b" + std::to_string(l)).col(0) = enc.b[l];
    }
    Rng kmm_rng(mix_seed(seed, 0x6b6d6d));
    const KmmWeights kmm = KmmWeights::init(cfg_.kmm, kmm_rng);
    store_.mat("kmm.w_pi") = kmm.w_pi;
    store_.mat("kmm.w_mu") = kmm.w_mu;
    store_.mat("kmm.w_var") = kmm.w_var;
    store_.mat("kmm.b_pi").col(0) = kmm.b_pi;
    store_.mat("kmm.b_mu").col(0) = kmm.b_mu;
    store_.mat("kmm.b_var").col(0) = kmm.b_var;
  }

  ModelConfig cfg_;
  ParamStore store_;
};

}  // namespace kmcl
