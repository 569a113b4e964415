#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "kmcl/rng.hpp"

namespace kmcl {

/// Multilayer perceptron standing in for a heavyweight backbone, or an
/// identity pass-through for precomputed features.
struct EncoderConfig {
  // widths[0] is the input dimension, widths.back() the feature dimension M.
  std::vector<int> widths;
  bool identity = false;
  int identity_dim = 0;  // input == output dimension when identity

  void validate() const {
    if (identity) {
      if (identity_dim < 1) throw std::invalid_argument("encoder: identity_dim must be >= 1");
      return;
    }
    if (widths.size() < 2)
      throw std::invalid_argument("encoder: need at least input and output widths");
    for (const int w : widths)
      if (w < 1) throw std::invalid_argument("encoder: widths must be positive");
  }

  int input_dim() const { return identity ? identity_dim : widths.front(); }
  int output_dim() const { return identity ? identity_dim : widths.back(); }
  int num_layers() const { return identity ? 0 : static_cast<int>(widths.size()) - 1; }

  static EncoderConfig mlp(std::vector<int> widths) {
    EncoderConfig c;
    c.widths = std::move(widths);
    c.validate();
    return c;
  }

  static EncoderConfig passthrough(int dim) {
    EncoderConfig c;
    c.identity = true;
    c.identity_dim = dim;
    c.validate();
    return c;
  }
};

struct EncoderWeights {
  std::vector<Eigen::MatrixXd> w;  // layer l: widths[l+1] x widths[l]
  std::vector<Eigen::VectorXd> b;

  /// uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) on weights and biases.
  static EncoderWeights init(const EncoderConfig& cfg, Rng& rng) {
    cfg.validate();
    EncoderWeights out;
    for (int l = 0; l < cfg.num_layers(); ++l) {
      const int fan_in = cfg.widths[l];
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      Eigen::MatrixXd w(cfg.widths[l + 1], fan_in);
      Eigen::VectorXd b(cfg.widths[l + 1]);
      for (Eigen::Index i = 0; i < w.rows(); ++i) {
        for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = rng.uniform(-bound, bound);
        b(i) = rng.uniform(-bound, bound);
      }
      out.w.push_back(std::move(w));
      out.b.push_back(std::move(b));
    }
    return out;
  }

  void check_shapes(const EncoderConfig& cfg) const {
    if (static_cast<int>(w.size()) != cfg.num_layers() || b.size() != w.size())
      throw std::invalid_argument("encoder: layer count inconsistent with config");
    for (int l = 0; l < cfg.num_layers(); ++l)
      if (w[l].rows() != cfg.widths[l + 1] || w[l].cols() != cfg.widths[l] ||
          b[l].size() != cfg.widths[l + 1])
        throw std::invalid_argument("encoder: weight shapes inconsistent with config");
  }
};

/// Per-layer cache of the encoder forward pass for one sample.
struct EncoderTrace {
  std::vector<Eigen::VectorXd> pre;   // z_l = W_l h_l + b_l
  std::vector<Eigen::VectorXd> post;  // post[0] = x, post[l+1] = relu(z_l)

  const Eigen::VectorXd& features() const { return post.back(); }
};

/// Affine map followed by a rectified-linear unit at every layer. The
/// identity configuration returns the input unchanged.
inline EncoderTrace encode_traced(const Eigen::VectorXd& x, const EncoderWeights& w,
                                  const EncoderConfig& cfg) {
  cfg.validate();
  w.check_shapes(cfg);
  if (x.size() != cfg.input_dim())
    throw std::invalid_argument("encode: input length does not match encoder config");
  EncoderTrace t;
  t.post.push_back(x);
  for (int l = 0; l < cfg.num_layers(); ++l) {
    Eigen::VectorXd z = w.w[l] * t.post.back() + w.b[l];
    t.pre.push_back(z);
    t.post.push_back(z.cwiseMax(0.0));
  }
  return t;
}

inline Eigen::VectorXd encode(const Eigen::VectorXd& x, const EncoderWeights& w,
                              const EncoderConfig& cfg) {
  return encode_traced(x, w, cfg).features();
}

}  // namespace kmcl
