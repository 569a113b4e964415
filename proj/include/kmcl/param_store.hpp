#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace kmcl {

using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Flat view of all trainable parameters with a name -> (offset, shape)
/// layout map and a gradient buffer of identical layout. Tensors are stored
/// row-major in registration order.
class ParamStore {
public:
  struct Entry {
    std::string name;
    std::size_t offset = 0;
    int rows = 0;
    int cols = 0;

    std::size_t count() const { return static_cast<std::size_t>(rows) * cols; }
  };

  int add(const std::string& name, int rows, int cols) {
    if (index_.count(name)) throw std::invalid_argument("param_store: duplicate tensor " + name);
    if (rows < 1 || cols < 1) throw std::invalid_argument("param_store: bad shape for " + name);
    Entry e{name, values_.size(), rows, cols};
    values_.resize(values_.size() + e.count(), 0.0);
    grads_.resize(values_.size(), 0.0);
    index_[name] = static_cast<int>(entries_.size());
    entries_.push_back(e);
    return index_[name];
  }

  std::size_t size() const { return values_.size(); }
  const std::vector<Entry>& entries() const { return entries_; }

  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }
  std::vector<double>& grads() { return grads_; }
  const std::vector<double>& grads() const { return grads_; }

  void zero_grad() { std::fill(grads_.begin(), grads_.end(), 0.0); }

  const Entry& entry(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::invalid_argument("param_store: unknown tensor " + name);
    return entries_[static_cast<std::size_t>(it->second)];
  }

  Eigen::Map<RowMajorMatrix> mat(const std::string& name) {
    const Entry& e = entry(name);
    return {values_.data() + e.offset, e.rows, e.cols};
  }
  Eigen::Map<const RowMajorMatrix> mat(const std::string& name) const {
    const Entry& e = entry(name);
    return {values_.data() + e.offset, e.rows, e.cols};
  }
  Eigen::Map<RowMajorMatrix> grad_mat(const std::string& name) {
    const Entry& e = entry(name);
    return {grads_.data() + e.offset, e.rows, e.cols};
  }
  Eigen::Map<const RowMajorMatrix> grad_mat(const std::string& name) const {
    const Entry& e = entry(name);
    return {grads_.data() + e.offset, e.rows, e.cols};
  }

  /// "tensor[r,c]" label of a flat coordinate, for diagnostics.
  std::string coordinate_name(std::size_t i) const {
    for (const Entry& e : entries_) {
      if (i >= e.offset && i < e.offset + e.count()) {
        const std::size_t local = i - e.offset;
        return e.name + "[" + std::to_string(local / e.cols) + "," +
               std::to_string(local % e.cols) + "]";
      }
    }
    throw std::invalid_argument("param_store: coordinate out of range");
  }

private:
  std::vector<double> values_;
  std::vector<double> grads_;
  std::vector<Entry> entries_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace kmcl
