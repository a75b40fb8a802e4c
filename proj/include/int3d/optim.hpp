#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "int3d/common.hpp"

namespace int3d {

/// Adam hyperparameters.
struct AdamConfig {
  double lr = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eps = 1e-15;

  void validate() const {
    require(lr > 0, "AdamConfig: lr must be > 0");
    require(beta1 >= 0 && beta1 < 1, "AdamConfig: beta1 must be in [0,1)");
    require(beta2 >= 0 && beta2 < 1, "AdamConfig: beta2 must be in [0,1)");
    require(eps > 0, "AdamConfig: eps must be > 0");
  }
};

/// One named parameter block with its gradient and Adam moment buffers.
template <typename S>
struct ParamBlock {
  std::string name;
  std::vector<S> values;
  std::vector<S> grad;
  std::vector<S> m;
  std::vector<S> v;
  double lr_scale = 1.0;   // per-block learning-rate override
  bool trainable = true;

  size_t size() const { return values.size(); }
};

/// All learnable state, addressed by block name. Block order is the
/// insertion order and fixes the checkpoint layout.
template <typename S>
class ParamStore {
 public:
  ParamBlock<S>& add_block(const std::string& name, size_t count) {
    require(index_.find(name) == index_.end(), "ParamStore: duplicate block " + name);
    index_[name] = blocks_.size();
    blocks_.push_back(ParamBlock<S>{name, std::vector<S>(count, S(0)), std::vector<S>(count, S(0)),
                                    std::vector<S>(count, S(0)), std::vector<S>(count, S(0))});
    return blocks_.back();
  }

  ParamBlock<S>& block(const std::string& name) {
    auto it = index_.find(name);
    require(it != index_.end(), "ParamStore: no block named " + name);
    return blocks_[it->second];
  }
  const ParamBlock<S>& block(const std::string& name) const {
    auto it = index_.find(name);
    require(it != index_.end(), "ParamStore: no block named " + name);
    return blocks_[it->second];
  }
  bool has_block(const std::string& name) const { return index_.count(name) != 0; }

  std::vector<ParamBlock<S>>& blocks() { return blocks_; }
  const std::vector<ParamBlock<S>>& blocks() const { return blocks_; }

  std::uint64_t step() const { return step_; }
  void set_step(std::uint64_t s) { step_ = s; }
  void increment_step() { ++step_; }

  size_t total_params() const {
    size_t n = 0;
    for (const auto& b : blocks_) n += b.size();
    return n;
  }

  template <typename T>
  ParamStore<T> cast() const {
    ParamStore<T> out;
    for (const auto& b : blocks_) {
      auto& nb = out.add_block(b.name, b.size());
      for (size_t i = 0; i < b.size(); ++i) {
        nb.values[i] = static_cast<T>(b.values[i]);
        nb.m[i] = static_cast<T>(b.m[i]);
        nb.v[i] = static_cast<T>(b.v[i]);
      }
      nb.lr_scale = b.lr_scale;
      nb.trainable = b.trainable;
    }
    out.set_step(step_);
    return out;
  }

 private:
  std::vector<ParamBlock<S>> blocks_;
  std::map<std::string, size_t> index_;
  std::uint64_t step_ = 0;
};

template <typename S>
void zero_grad(ParamStore<S>& store) {
  for (auto& b : store.blocks()) std::fill(b.grad.begin(), b.grad.end(), S(0));
}

/// Bias-corrected Adam over every entry with a nonzero gradient. Entries with
/// an exactly zero gradient are left untouched (no moment decay), which is
/// the lazy update used for hash tables and discrepancy tensors. The step
/// counter advances once per call and drives the bias correction.
template <typename S>
void adam_step(ParamStore<S>& store, const AdamConfig& cfg) {
  store.increment_step();
  double t = static_cast<double>(store.step());
  double bc1 = 1.0 - std::pow(cfg.beta1, t);
  double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (auto& b : store.blocks()) {
    if (!b.trainable) continue;
    S lr = static_cast<S>(cfg.lr * b.lr_scale);
    S beta1 = static_cast<S>(cfg.beta1), beta2 = static_cast<S>(cfg.beta2);
    S ib1 = S(1) - beta1, ib2 = S(1) - beta2;
    S inv_bc1 = static_cast<S>(1.0 / bc1), inv_bc2 = static_cast<S>(1.0 / bc2);
    S eps = static_cast<S>(cfg.eps);
    S* val = b.values.data();
    S* grad = b.grad.data();
    S* m = b.m.data();
    S* v = b.v.data();
    size_t n = b.size();
    for (size_t i = 0; i < n; ++i) {
      S g = grad[i];
      if (g == S(0)) continue;
      if (!std::isfinite(double(g)))
        throw ContractError("adam_step: non-finite gradient in block " + b.name);
      m[i] = beta1 * m[i] + ib1 * g;
      v[i] = beta2 * v[i] + ib2 * g * g;
      S mhat = m[i] * inv_bc1;
      S vhat = v[i] * inv_bc2;
      val[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

/// Central-difference gradient check. `loss_fn(store, with_grad)` must return
/// the loss and, when with_grad, accumulate analytic gradients into the
/// store; it must be a deterministic function of the parameter values (any
/// stop-gradient quantities inside it must be frozen by the caller).
/// Probes are spread over all blocks and drawn from entries whose analytic
/// gradient is not vanishingly small next to the block's largest one, where
/// the fixed step h = 1e-4 max(1,|p|) would leave the comparison dominated
/// by curvature instead of the gradient. Returns the worst relative error.
inline double grad_check(const std::function<double(ParamStore<double>&, bool)>& loss_fn,
                         ParamStore<double>& store, int n_probes, std::uint64_t seed = 7) {
  zero_grad(store);
  loss_fn(store, true);
  std::vector<std::vector<double>> analytic;
  for (auto& b : store.blocks()) analytic.push_back(b.grad);

  struct Probe {
    size_t block, idx;
  };
  std::vector<Probe> probes;
  Pcg32 rng(seed);
  size_t n_blocks = store.blocks().size();
  for (size_t bi = 0; bi < n_blocks; ++bi) {
    const auto& g = analytic[bi];
    double max_g = 0;
    for (double v : g) max_g = std::max(max_g, std::abs(v));
    std::vector<size_t> candidates;
    for (size_t i = 0; i < g.size(); ++i)
      if (std::abs(g[i]) >= 0.01 * max_g && g[i] != 0.0) candidates.push_back(i);
    if (candidates.empty())
      for (size_t i = 0; i < g.size(); ++i) candidates.push_back(i);
    int quota = std::max(1, int(n_probes / n_blocks));
    for (int k = 0; k < quota && !candidates.empty(); ++k)
      probes.push_back({bi, candidates[rng.next_below(static_cast<std::uint32_t>(candidates.size()))]});
  }

  double worst = 0;
  for (const Probe& pr : probes) {
    auto& blk = store.blocks()[pr.block];
    double p0 = blk.values[pr.idx];
    double h = 1e-4 * std::max(1.0, std::abs(p0));
    blk.values[pr.idx] = p0 + h;
    double lp = loss_fn(store, false);
    blk.values[pr.idx] = p0 - h;
    double lm = loss_fn(store, false);
    blk.values[pr.idx] = p0;
    double fd = (lp - lm) / (2 * h);
    double a = analytic[pr.block][pr.idx];
    double rel = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-8});
    worst = std::max(worst, rel);
  }
  return worst;
}

// ---- checkpoint serialization ------------------------------------------

inline constexpr char kCheckpointMagic[8] = {'I', 'N', 'T', '3', 'D', '0', '0', '1'};

namespace detail {
template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
T read_pod(std::istream& is) {
  T v;
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw IoError("checkpoint: unexpected end of file");
  return v;
}
inline void write_floats(std::ostream& os, const std::vector<float>& v) {
  os.write(reinterpret_cast<const char*>(v.data()), std::streamsize(v.size() * sizeof(float)));
}
}  // namespace detail

/// Writes the store: magic, step counter, then per block name + element
/// count + values + Adam moments, all little-endian 32-bit floats.
template <typename S>
void save_checkpoint(const ParamStore<S>& store, std::ostream& os) {
  os.write(kCheckpointMagic, 8);
  detail::write_pod(os, std::uint64_t(store.step()));
  detail::write_pod(os, std::uint32_t(store.blocks().size()));
  for (const auto& b : store.blocks()) {
    detail::write_pod(os, std::uint32_t(b.name.size()));
    os.write(b.name.data(), std::streamsize(b.name.size()));
    detail::write_pod(os, std::uint64_t(b.size()));
    std::vector<float> tmp(b.size());
    auto dump = [&](const std::vector<S>& src) {
      for (size_t i = 0; i < src.size(); ++i) tmp[i] = static_cast<float>(src[i]);
      detail::write_floats(os, tmp);
    };
    dump(b.values);
    dump(b.m);
    dump(b.v);
  }
  if (!os) throw IoError("checkpoint: write failed");
}

template <typename S>
void save_checkpoint(const ParamStore<S>& store, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("checkpoint: cannot open for writing: " + path);
  save_checkpoint(store, f);
}

template <typename S>
ParamStore<S> load_checkpoint(std::istream& is) {
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw IoError("checkpoint: bad magic bytes");
  ParamStore<S> store;
  store.set_step(detail::read_pod<std::uint64_t>(is));
  std::uint32_t n_blocks = detail::read_pod<std::uint32_t>(is);
  for (std::uint32_t bi = 0; bi < n_blocks; ++bi) {
    std::uint32_t name_len = detail::read_pod<std::uint32_t>(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    std::uint64_t count = detail::read_pod<std::uint64_t>(is);
    auto& b = store.add_block(name, count);
    auto slurp = [&](std::vector<S>& dst) {
      std::vector<float> tmp(count);
      is.read(reinterpret_cast<char*>(tmp.data()), std::streamsize(count * sizeof(float)));
      if (!is) throw IoError("checkpoint: unexpected end of file in block " + name);
      for (size_t i = 0; i < count; ++i) dst[i] = static_cast<S>(tmp[i]);
    };
    slurp(b.values);
    slurp(b.m);
    slurp(b.v);
  }
  return store;
}

template <typename S>
ParamStore<S> load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("checkpoint: cannot open: " + path);
  return load_checkpoint<S>(f);
}

}  // namespace int3d
