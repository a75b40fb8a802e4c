#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "int3d/common.hpp"
#include "int3d/field.hpp"
#include "int3d/hashgrid.hpp"
#include "int3d/optim.hpp"

namespace int3d {

/// Gradient accumulation buffer shaped like a ParamStore. Each parallel
/// worker slot owns one; slot buffers are merged into the store's gradient
/// arrays in slot order, so the result is independent of thread count.
template <typename S>
class GradBuffer {
 public:
  void init(const ParamStore<S>& store) {
    bufs_.clear();
    index_.clear();
    for (const auto& b : store.blocks()) {
      index_[b.name] = bufs_.size();
      bufs_.emplace_back(b.size(), S(0));
    }
  }

  void zero() {
    for (auto& b : bufs_) std::fill(b.begin(), b.end(), S(0));
  }

  std::span<S> grad(const std::string& name) {
    auto it = index_.find(name);
    require(it != index_.end(), "GradBuffer: no block named " + name);
    return std::span<S>(bufs_[it->second]);
  }

  // Expressions are materialized into Eigen-owned (aligned) storage before
  // the elementwise accumulate: evaluating reductions straight into an
  // arbitrarily aligned user buffer lets the vectorizer split the scalar
  // and packet paths differently per allocation, changing the rounding.
  template <typename Derived>
  void add_matrix(const std::string& name, const Eigen::MatrixBase<Derived>& m) {
    auto g = grad(name);
    require(size_t(m.size()) == g.size(), "GradBuffer: shape mismatch for " + name);
    MatX<S> tmp = m;
    const S* src = tmp.data();
    S* dst = g.data();
    for (size_t i = 0; i < g.size(); ++i) dst[i] += src[i];
  }

  template <typename Derived>
  void add_vector(const std::string& name, const Eigen::MatrixBase<Derived>& v) {
    auto g = grad(name);
    require(size_t(v.size()) == g.size(), "GradBuffer: shape mismatch for " + name);
    VecX<S> tmp = v;
    const S* src = tmp.data();
    S* dst = g.data();
    for (size_t i = 0; i < g.size(); ++i) dst[i] += src[i];
  }

  std::vector<std::span<S>> hash_grad_views(const HashGridConfig& cfg) {
    std::vector<std::span<S>> out(static_cast<size_t>(cfg.levels));
    for (int l = 0; l < cfg.levels; ++l) out[static_cast<size_t>(l)] = grad(block_names::hash_level(l));
    return out;
  }

  std::span<S> disc_grad(int part, char axis) { return grad(block_names::disc(part, axis)); }

  /// grad += buffer, blocks in store order.
  void merge_into(ParamStore<S>& store) const {
    for (auto& blk : store.blocks()) {
      auto it = index_.find(blk.name);
      require(it != index_.end(), "GradBuffer: merge into mismatched store");
      const auto& src = bufs_[it->second];
      S* dst = blk.grad.data();
      for (size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
    }
  }

 private:
  std::vector<std::vector<S>> bufs_;
  std::map<std::string, size_t> index_;
};

/// Sink adapter that accumulates straight into ParamStore gradients; for
/// single-threaded paths such as the gradient checker.
template <typename S>
class StoreGradSink {
 public:
  explicit StoreGradSink(ParamStore<S>& store) : store_(&store) {}

  template <typename Derived>
  void add_matrix(const std::string& name, const Eigen::MatrixBase<Derived>& m) {
    auto& b = store_->block(name);
    require(size_t(m.size()) == b.size(), "StoreGradSink: shape mismatch for " + name);
    MatX<S> tmp = m;
    const S* src = tmp.data();
    S* dst = b.grad.data();
    for (size_t i = 0; i < b.size(); ++i) dst[i] += src[i];
  }

  template <typename Derived>
  void add_vector(const std::string& name, const Eigen::MatrixBase<Derived>& v) {
    auto& b = store_->block(name);
    require(size_t(v.size()) == b.size(), "StoreGradSink: shape mismatch for " + name);
    VecX<S> tmp = v;
    const S* src = tmp.data();
    S* dst = b.grad.data();
    for (size_t i = 0; i < b.size(); ++i) dst[i] += src[i];
  }

  std::vector<std::span<S>> hash_grad_views(const HashGridConfig& cfg) {
    std::vector<std::span<S>> out(static_cast<size_t>(cfg.levels));
    for (int l = 0; l < cfg.levels; ++l)
      out[static_cast<size_t>(l)] = std::span<S>(store_->block(block_names::hash_level(l)).grad);
    return out;
  }

  std::span<S> disc_grad(int part, char axis) {
    return std::span<S>(store_->block(block_names::disc(part, axis)).grad);
  }

 private:
  ParamStore<S>* store_;
};

}  // namespace int3d
