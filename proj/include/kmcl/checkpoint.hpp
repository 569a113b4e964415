#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "kmcl/model.hpp"

namespace kmcl {

/// Plain-text weight checkpoint. Header lines carry the encoder and head
/// shapes; tensors follow in layout order (encoder layers, then w_pi, w_mu,
/// w_var, b_pi, b_mu, b_var), row-major, one row per line. Values are
/// hexadecimal floats so a load reproduces the saved weights bit for bit.
inline constexpr const char* kCheckpointMagic = "kmcl-checkpoint v1";

inline void save_checkpoint(const std::string& path, const ModelConfig& cfg,
                            const std::vector<double>& values) {
  Model probe(cfg, 0);  // layout reference
  if (values.size() != probe.store().size())
    throw std::invalid_argument("checkpoint: value buffer does not match model layout");
  std::ofstream out(path);
  if (!out) throw std::invalid_argument("cannot open " + path + " for writing");
  out << kCheckpointMagic << "\n";
  out << "encoder identity " << (cfg.encoder.identity ? 1 : 0);
  if (cfg.encoder.identity) {
    out << " dim " << cfg.encoder.identity_dim << "\n";
  } else {
    out << " widths";
    for (const int w : cfg.encoder.widths) out << " " << w;
    out << "\n";
  }
  char buf[48];
  std::snprintf(buf, sizeof buf, "%a", cfg.kmm.elu_eps);
  out << "kmm classes " << cfg.kmm.num_classes << " feature_dim " << cfg.kmm.feature_dim
      << " anisotropic " << (cfg.kmm.anisotropic ? 1 : 0) << " elu_eps " << buf << "\n";
  for (const ParamStore::Entry& e : probe.store().entries()) {
    out << "tensor " << e.name << " " << e.rows << " " << e.cols << "\n";
    for (int r = 0; r < e.rows; ++r) {
      for (int c = 0; c < e.cols; ++c) {
        std::snprintf(buf, sizeof buf, "%a",
                      values[e.offset + static_cast<std::size_t>(r) * e.cols + c]);
        out << (c ? " " : "") << buf;
      }
      out << "\n";
    }
  }
  out << "end\n";
}

struct Checkpoint {
  ModelConfig config;
  std::vector<double> values;

  Model to_model() const {
    Model m(config, 0);
    if (values.size() != m.store().size())
      throw std::invalid_argument("checkpoint: value count does not match layout");
    m.store().values() = values;
    return m;
  }
};

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line != kCheckpointMagic)
    throw std::invalid_argument(path + ": not a checkpoint (bad magic, expected '" +
                                std::string(kCheckpointMagic) + "')");

  Checkpoint ck;
  if (!std::getline(in, line)) throw std::invalid_argument(path + ": truncated header");
  {
    std::istringstream ss(line);
    std::string word;
    int ident = 0;
    ss >> word >> word >> ident;  // "encoder identity <0|1>"
    ss >> word;
    if (ident) {
      int dim = 0;
      ss >> dim;
      ck.config.encoder = EncoderConfig::passthrough(dim);
    } else {
      std::vector<int> widths;
      int w = 0;
      while (ss >> w) widths.push_back(w);
      ck.config.encoder = EncoderConfig::mlp(widths);
    }
  }
  if (!std::getline(in, line)) throw std::invalid_argument(path + ": truncated header");
  {
    std::istringstream ss(line);
    std::string word, eps_text;
    int aniso = 0;
    ss >> word;  // kmm
    ss >> word >> ck.config.kmm.num_classes;
    ss >> word >> ck.config.kmm.feature_dim;
    ss >> word >> aniso;
    ss >> word >> eps_text;  // hexfloat; stream extraction cannot parse it
    ck.config.kmm.elu_eps = std::strtod(eps_text.c_str(), nullptr);
    ck.config.kmm.anisotropic = aniso != 0;
  }
  ck.config.validate();

  Model probe(ck.config, 0);
  ck.values.assign(probe.store().size(), 0.0);
  for (const ParamStore::Entry& e : probe.store().entries()) {
    if (!std::getline(in, line))
      throw std::invalid_argument(path + ": missing tensor " + e.name);
    std::istringstream head(line);
    std::string word, name;
    int rows = 0, cols = 0;
    head >> word >> name >> rows >> cols;
    if (word != "tensor" || name != e.name)
      throw std::invalid_argument(path + ": expected tensor " + e.name + ", found '" + line + "'");
    if (rows != e.rows || cols != e.cols)
      throw std::invalid_argument(path + ": tensor " + e.name + " has shape " +
                                  std::to_string(rows) + "x" + std::to_string(cols) +
                                  ", expected " + std::to_string(e.rows) + "x" +
                                  std::to_string(e.cols));
    for (int r = 0; r < rows; ++r) {
      if (!std::getline(in, line))
        throw std::invalid_argument(path + ": truncated tensor " + e.name);
      std::istringstream row(line);
      for (int c = 0; c < cols; ++c) {
        if (!(row >> word))
          throw std::invalid_argument(path + ": short row in tensor " + e.name);
        ck.values[e.offset + static_cast<std::size_t>(r) * cols + c] = std::strtod(word.c_str(), nullptr);
      }
    }
  }
  return ck;
}

}  // namespace kmcl
