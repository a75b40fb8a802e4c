#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "int3d/common.hpp"
#include "int3d/discrepancy.hpp"
#include "int3d/hashgrid.hpp"
#include "int3d/optim.hpp"

namespace int3d {

/// Discrete object state: bit i-1 set means movable part i is open.
/// Only states with popcount <= 1 are observed during training; everything
/// else is synthesized.
struct StateId {
  std::uint32_t bits = 0;
  int n = 0;

  int popcount() const { return std::popcount(bits); }
  bool trainable() const { return popcount() <= 1; }
  bool part_open(int part) const { return (bits >> (part - 1)) & 1u; }

  /// Index of the single open part for popcount-1 states, 0 for canonical.
  int single_part() const {
    require(popcount() <= 1, "StateId: not an individual state");
    return bits == 0 ? 0 : std::countr_zero(bits) + 1;
  }

  std::vector<int> open_parts() const {
    std::vector<int> out;
    for (int i = 1; i <= n; ++i)
      if (part_open(i)) out.push_back(i);
    return out;
  }

  static StateId canonical(int n) { return StateId{0, n}; }
  static StateId single(int n, int part) {
    require(part >= 1 && part <= n, "StateId: part index out of range");
    return StateId{1u << (part - 1), n};
  }

  /// Bitstring with part 1 leftmost, e.g. "10" = part 1 open, part 2 closed.
  std::string to_bitstring() const {
    std::string s(static_cast<size_t>(n), '0');
    for (int i = 1; i <= n; ++i)
      if (part_open(i)) s[static_cast<size_t>(i - 1)] = '1';
    return s;
  }

  static StateId from_bitstring(const std::string& s) {
    StateId st;
    st.n = static_cast<int>(s.size());
    require(st.n >= 1 && st.n <= 30, "StateId: bitstring length out of range");
    for (int i = 0; i < st.n; ++i) {
      require(s[static_cast<size_t>(i)] == '0' || s[static_cast<size_t>(i)] == '1',
              "StateId: bitstring must contain only 0/1");
      if (s[static_cast<size_t>(i)] == '1') st.bits |= 1u << i;
    }
    return st;
  }

  bool operator==(const StateId& o) const { return bits == o.bits && n == o.n; }
};

/// Density and color of the field at one point.
template <typename S>
struct FieldSample {
  S sigma = 0;
  Vec3<S> color = Vec3<S>::Zero();
};

/// MLP head sizes. The density net maps the encoded feature to 1 raw density
/// plus a latent vector; the color net maps the latent (optionally with an
/// encoded view direction) to rgb.
struct MlpConfig {
  int density_hidden = 64;
  int latent_dim = 15;
  int color_hidden = 64;
  bool use_view_direction = false;  // degree-4 real SH (16 values) when on
  double density_bias_init = -3.912023005428146;  // ln(0.02)

  static constexpr int kShDim = 16;
  int color_input_dim() const { return latent_dim + (use_view_direction ? kShDim : 0); }

  void validate() const {
    require(density_hidden >= 1 && color_hidden >= 1, "MlpConfig: hidden sizes must be >= 1");
    require(latent_dim >= 1, "MlpConfig: latent_dim must be >= 1");
  }
};

/// Degree-4 real spherical harmonics basis of a unit direction.
template <typename S>
void sh16(const Vec3<S>& d, S* out) {
  S x = d.x(), y = d.y(), z = d.z();
  S xx = x * x, yy = y * y, zz = z * z;
  out[0] = S(0.28209479177387814);
  out[1] = S(-0.48860251190291987) * y;
  out[2] = S(0.48860251190291987) * z;
  out[3] = S(-0.48860251190291987) * x;
  out[4] = S(1.0925484305920792) * x * y;
  out[5] = S(-1.0925484305920792) * y * z;
  out[6] = S(0.31539156525252005) * (S(3) * zz - S(1));
  out[7] = S(-1.0925484305920792) * x * z;
  out[8] = S(0.5462742152960396) * (xx - yy);
  out[9] = S(-0.5900435899266435) * y * (S(3) * xx - yy);
  out[10] = S(2.890611442640554) * x * y * z;
  out[11] = S(-0.4570457994644658) * y * (S(5) * zz - S(1));
  out[12] = S(0.3731763325901154) * z * (S(5) * zz - S(3));
  out[13] = S(-0.4570457994644658) * x * (S(5) * zz - S(1));
  out[14] = S(1.445305721320277) * z * (xx - yy);
  out[15] = S(-0.5900435899266435) * x * (xx - S(3) * yy);
}

/// Names of the learnable blocks.
namespace block_names {
inline std::string hash_level(int l) { return "hash.level" + std::to_string(l); }
inline std::string disc(int state, char axis) {
  return "disc.state" + std::to_string(state) + "." + axis;
}
}  // namespace block_names

/// State-conditioned radiance field: hash encoding, per-state discrepancy
/// modulation, and the two MLP heads, all reading one ParamStore.
template <typename S>
class FieldModel {
 public:
  HashGridConfig hash_cfg;
  DiscrepancyConfig disc_cfg;
  MlpConfig mlp_cfg;
  int n_parts = 0;
  ParamStore<S>* store = nullptr;

  /// Optional instrumentation: counts per-sample per-state field evaluations.
  mutable std::uint64_t* eval_counter = nullptr;

  void bind(ParamStore<S>& s) {
    store = &s;
    levels_ = hash_levels(hash_cfg);
    require(hash_cfg.feature_dim() == disc_cfg.feature_dim,
            "FieldModel: discrepancy feature_dim must equal hash L*F");
  }
  const std::vector<HashLevel>& levels() const { return levels_; }

  /// Creates and initializes every block in dependency order.
  static void init_params(ParamStore<S>& store, const HashGridConfig& hash_cfg,
                          const DiscrepancyConfig& disc_cfg, const MlpConfig& mlp_cfg,
                          int n_parts, std::uint64_t seed) {
    hash_cfg.validate();
    disc_cfg.validate();
    mlp_cfg.validate();
    require(hash_cfg.feature_dim() == disc_cfg.feature_dim,
            "init_params: discrepancy feature_dim must equal hash L*F");
    Pcg32 rng(mix_seed({seed, 0x6669656c64ull}));
    for (int l = 0; l < hash_cfg.levels; ++l) {
      auto& b = store.add_block(block_names::hash_level(l),
                                size_t(hash_cfg.level_table_entries(l)) * hash_cfg.features_per_level);
      for (auto& v : b.values) v = static_cast<S>(rng.uniform(-1e-4, 1e-4));
    }
    auto dense = [&](const std::string& name, int rows, int cols, bool he) {
      auto& b = store.add_block(name, size_t(rows) * size_t(cols));
      double bound = std::sqrt(6.0 / double(cols)) * (he ? 1.0 : 0.5);
      for (auto& v : b.values) v = static_cast<S>(rng.uniform(-bound, bound));
      return &b;
    };
    auto bias = [&](const std::string& name, int rows) { return &store.add_block(name, size_t(rows)); };
    int fd = hash_cfg.feature_dim();
    dense("mlp.density.w0", mlp_cfg.density_hidden, fd, true);
    bias("mlp.density.b0", mlp_cfg.density_hidden);
    dense("mlp.density.w1", 1 + mlp_cfg.latent_dim, mlp_cfg.density_hidden, false);
    auto* db1 = bias("mlp.density.b1", 1 + mlp_cfg.latent_dim);
    db1->values[0] = static_cast<S>(mlp_cfg.density_bias_init);
    dense("mlp.color.w0", mlp_cfg.color_hidden, mlp_cfg.color_input_dim(), true);
    bias("mlp.color.b0", mlp_cfg.color_hidden);
    dense("mlp.color.w1", mlp_cfg.color_hidden, mlp_cfg.color_hidden, true);
    bias("mlp.color.b1", mlp_cfg.color_hidden);
    dense("mlp.color.w2", 3, mlp_cfg.color_hidden, false);
    bias("mlp.color.b2", 3);
    for (int i = 1; i <= n_parts; ++i)
      for (char a : {'x', 'y', 'z'}) {
        auto& b = store.add_block(block_names::disc(i, a),
                                  size_t(disc_cfg.resolution) * disc_cfg.feature_dim);
        std::fill(b.values.begin(), b.values.end(), S(1));
      }
  }

  // ---- batched evaluation -------------------------------------------------

  /// Fills `features` (feat_dim x B) for unit-cube points under per-column
  /// conditioning (`parts[i]` = 0 for canonical, or the open part index).
  /// When `raw_h` is non-null it receives the un-modulated encoding; the
  /// corner caches, when given, collect per-sample interpolation corners for
  /// the backward scatter.
  void encode_features(std::span<const Vec3<S>> points, std::span<const int> parts,
                       MatX<S>& features, MatX<S>* raw_h = nullptr,
                       std::vector<std::uint32_t>* corner_slots = nullptr,
                       std::vector<S>* corner_weights = nullptr) const {
    int fd = hash_cfg.feature_dim();
    Eigen::Index b = static_cast<Eigen::Index>(points.size());
    features.resize(fd, b);
    if (raw_h) raw_h->resize(fd, b);
    size_t per_sample = size_t(hash_cfg.levels) * 8;
    if (corner_slots) {
      corner_slots->resize(per_sample * size_t(b));
      corner_weights->resize(per_sample * size_t(b));
    }
    auto tables = hash_table_views();
    std::vector<S> tbuf(static_cast<size_t>(fd));
    for (Eigen::Index i = 0; i < b; ++i) {
      S* col = features.col(i).data();
      encode(points[static_cast<size_t>(i)], levels_, hash_cfg.features_per_level,
             std::span<const std::span<const S>>(tables), col,
             corner_slots ? corner_slots->data() + per_sample * size_t(i) : nullptr,
             corner_weights ? corner_weights->data() + per_sample * size_t(i) : nullptr);
      if (raw_h) raw_h->col(i) = features.col(i);
      int part = parts[static_cast<size_t>(i)];
      if (part > 0) {
        state_feature(points[static_cast<size_t>(i)], disc_cfg, disc_view(part, 'x'),
                      disc_view(part, 'y'), disc_view(part, 'z'), tbuf.data());
        for (int k = 0; k < fd; ++k) col[k] *= tbuf[k];
      }
      if (eval_counter) ++*eval_counter;
    }
  }

  /// Density-only forward: sigma per column. Used by ray-march waves and
  /// occupancy sweeps where the color head is not needed.
  void density_batch(std::span<const Vec3<S>> points, std::span<const int> parts,
                     std::vector<S>& sigma_out) const {
    Eigen::Index b = static_cast<Eigen::Index>(points.size());
    sigma_out.resize(static_cast<size_t>(b));
    if (b == 0) return;
    MatX<S> feats;
    encode_features(points, parts, feats);
    MatX<S> hidden = (weight("mlp.density.w0") * feats).colwise() + bias_vec("mlp.density.b0");
    hidden = hidden.cwiseMax(S(0));
    VecX<S> raw = (weight("mlp.density.w1").row(0) * hidden).transpose() +
                  VecX<S>::Constant(b, bias_vec("mlp.density.b1")(0));
    for (Eigen::Index i = 0; i < b; ++i) sigma_out[static_cast<size_t>(i)] = sigma_activation(raw(i));
  }

  /// Cached activations of a full forward pass, consumed by backward_batch.
  struct ForwardCache {
    MatX<S> features;   // post-modulation MLP input
    MatX<S> raw_h;      // pre-modulation encoding
    MatX<S> d_hidden;   // density net hidden (post-relu)
    MatX<S> d_out;      // raw density + latent
    MatX<S> c_in;       // color net input (latent [+ sh])
    MatX<S> c_h0, c_h1; // color hiddens (post-relu)
    std::vector<std::uint32_t> corner_slots;  // per sample: levels x 8
    std::vector<S> corner_weights;
    std::vector<Vec3<S>> points;
    std::vector<int> parts;
    std::vector<S> sigma;
    std::vector<Vec3<S>> color;
  };

  /// Full forward pass with activation caching.
  void forward_batch(std::span<const Vec3<S>> points, std::span<const int> parts,
                     std::span<const Vec3<S>> dirs, ForwardCache& cache) const {
    Eigen::Index b = static_cast<Eigen::Index>(points.size());
    cache.points.assign(points.begin(), points.end());
    cache.parts.assign(parts.begin(), parts.end());
    cache.sigma.resize(static_cast<size_t>(b));
    cache.color.resize(static_cast<size_t>(b));
    if (b == 0) return;
    encode_features(points, parts, cache.features, &cache.raw_h, &cache.corner_slots,
                    &cache.corner_weights);
    cache.d_hidden = ((weight("mlp.density.w0") * cache.features).colwise() +
                      bias_vec("mlp.density.b0"))
                         .cwiseMax(S(0));
    cache.d_out = (weight("mlp.density.w1") * cache.d_hidden).colwise() + bias_vec("mlp.density.b1");
    int cin = mlp_cfg.color_input_dim();
    cache.c_in.resize(cin, b);
    cache.c_in.topRows(mlp_cfg.latent_dim) = cache.d_out.bottomRows(mlp_cfg.latent_dim);
    if (mlp_cfg.use_view_direction) {
      require(dirs.size() == points.size(), "forward_batch: view directions required");
      for (Eigen::Index i = 0; i < b; ++i)
        sh16(dirs[static_cast<size_t>(i)], cache.c_in.col(i).data() + mlp_cfg.latent_dim);
    }
    cache.c_h0 = ((weight("mlp.color.w0") * cache.c_in).colwise() + bias_vec("mlp.color.b0"))
                     .cwiseMax(S(0));
    cache.c_h1 = ((weight("mlp.color.w1") * cache.c_h0).colwise() + bias_vec("mlp.color.b1"))
                     .cwiseMax(S(0));
    MatX<S> rgb_raw = (weight("mlp.color.w2") * cache.c_h1).colwise() + bias_vec("mlp.color.b2");
    for (Eigen::Index i = 0; i < b; ++i) {
      cache.sigma[static_cast<size_t>(i)] = sigma_activation(cache.d_out(0, i));
      for (int ch = 0; ch < 3; ++ch)
        cache.color[static_cast<size_t>(i)][ch] = sigmoid(rgb_raw(ch, i));
    }
  }

  /// Reverse pass: given dL/dsigma and dL/dcolor per sample, accumulates
  /// parameter gradients into `sink` (block-parallel buffers).
  template <typename Sink>
  void backward_batch(const ForwardCache& cache, std::span<const S> dsigma,
                      std::span<const Vec3<S>> dcolor, Sink& sink) const {
    Eigen::Index b = static_cast<Eigen::Index>(cache.sigma.size());
    if (b == 0) return;
    // activation derivatives
    MatX<S> d_rgb_raw(3, b);
    for (Eigen::Index i = 0; i < b; ++i)
      for (int ch = 0; ch < 3; ++ch) {
        S c = cache.color[static_cast<size_t>(i)][ch];
        d_rgb_raw(ch, i) = dcolor[static_cast<size_t>(i)][ch] * c * (S(1) - c);
      }
    // color net
    MatX<S> d_ch1 = weight("mlp.color.w2").transpose() * d_rgb_raw;
    d_ch1 = d_ch1.cwiseProduct((cache.c_h1.array() > S(0)).template cast<S>().matrix());
    MatX<S> d_ch0 = weight("mlp.color.w1").transpose() * d_ch1;
    d_ch0 = d_ch0.cwiseProduct((cache.c_h0.array() > S(0)).template cast<S>().matrix());
    MatX<S> d_cin = weight("mlp.color.w0").transpose() * d_ch0;
    sink.add_matrix("mlp.color.w2", d_rgb_raw * cache.c_h1.transpose());
    sink.add_vector("mlp.color.b2", d_rgb_raw.rowwise().sum());
    sink.add_matrix("mlp.color.w1", d_ch1 * cache.c_h0.transpose());
    sink.add_vector("mlp.color.b1", d_ch1.rowwise().sum());
    sink.add_matrix("mlp.color.w0", d_ch0 * cache.c_in.transpose());
    sink.add_vector("mlp.color.b0", d_ch0.rowwise().sum());
    // density net; latent rows receive the color-input gradient
    MatX<S> d_dout = MatX<S>::Zero(1 + mlp_cfg.latent_dim, b);
    for (Eigen::Index i = 0; i < b; ++i)
      d_dout(0, i) = dsigma[static_cast<size_t>(i)] *
                     sigma_derivative(cache.d_out(0, i), cache.sigma[static_cast<size_t>(i)]);
    d_dout.bottomRows(mlp_cfg.latent_dim) = d_cin.topRows(mlp_cfg.latent_dim);
    MatX<S> d_dh = weight("mlp.density.w1").transpose() * d_dout;
    d_dh = d_dh.cwiseProduct((cache.d_hidden.array() > S(0)).template cast<S>().matrix());
    MatX<S> d_feat = weight("mlp.density.w0").transpose() * d_dh;
    sink.add_matrix("mlp.density.w1", d_dout * cache.d_hidden.transpose());
    sink.add_vector("mlp.density.b1", d_dout.rowwise().sum());
    sink.add_matrix("mlp.density.w0", d_dh * cache.features.transpose());
    sink.add_vector("mlp.density.b0", d_dh.rowwise().sum());
    // encoding + discrepancy tensors
    int fd = hash_cfg.feature_dim();
    size_t per_sample = size_t(hash_cfg.levels) * 8;
    std::vector<S> tbuf(static_cast<size_t>(fd)), dh_buf(static_cast<size_t>(fd));
    std::vector<S> dt(static_cast<size_t>(fd));
    auto grad_tables = sink.hash_grad_views(hash_cfg);
    for (Eigen::Index i = 0; i < b; ++i) {
      const S* g_feat = d_feat.col(i).data();
      const Vec3<S>& p = cache.points[static_cast<size_t>(i)];
      int part = cache.parts[static_cast<size_t>(i)];
      const std::uint32_t* slots = cache.corner_slots.data() + per_sample * size_t(i);
      const S* weights = cache.corner_weights.data() + per_sample * size_t(i);
      if (part > 0) {
        state_feature(p, disc_cfg, disc_view(part, 'x'), disc_view(part, 'y'),
                      disc_view(part, 'z'), tbuf.data());
        const S* h = cache.raw_h.col(i).data();
        for (int k = 0; k < fd; ++k) dh_buf[static_cast<size_t>(k)] = g_feat[k] * tbuf[static_cast<size_t>(k)];
        for (int k = 0; k < fd; ++k) dt[static_cast<size_t>(k)] = g_feat[k] * h[k];
        state_feature_backward(p, disc_cfg, disc_view(part, 'x'), disc_view(part, 'y'),
                               disc_view(part, 'z'), dt.data(), sink.disc_grad(part, 'x'),
                               sink.disc_grad(part, 'y'), sink.disc_grad(part, 'z'));
        encode_backward_cached(slots, weights, hash_cfg.levels, hash_cfg.features_per_level,
                               dh_buf.data(), std::span<const std::span<S>>(grad_tables));
      } else {
        encode_backward_cached(slots, weights, hash_cfg.levels, hash_cfg.features_per_level,
                               g_feat, std::span<const std::span<S>>(grad_tables));
      }
    }
  }

  // ---- scalar spec surface ------------------------------------------------

  /// Field sample for a trainable state (popcount <= 1).
  FieldSample<S> query(const Vec3<S>& p, const Vec3<S>& dir, const StateId& state) const {
    require(state.popcount() <= 1, "query: state must have popcount <= 1 (use query_combined)");
    int part = state.single_part();
    ForwardCache cache;
    Vec3<S> pts[1] = {p};
    int parts[1] = {part};
    Vec3<S> dirs[1] = {dir};
    forward_batch(std::span<const Vec3<S>>(pts, 1), std::span<const int>(parts, 1),
                  std::span<const Vec3<S>>(dirs, 1), cache);
    return {cache.sigma[0], cache.color[0]};
  }

  /// Tie threshold under which all states are considered to agree and the
  /// canonical sample is returned.
  static constexpr double kTieEpsilon = 1e-4;

  /// Index into `diffs` of the dominant state: argmax with ties broken by
  /// the lowest index. Purely the selection rule; the tie threshold against
  /// canonical is applied by the caller.
  static int select_dominant(std::span<const S> diffs) {
    int best = 0;
    for (size_t i = 1; i < diffs.size(); ++i)
      if (diffs[i] > diffs[static_cast<size_t>(best)]) best = static_cast<int>(i);
    return best;
  }

  /// Sample for an arbitrary state: evaluates the canonical field and each
  /// open part's field, then keeps the sample whose density differs most
  /// from canonical; near-ties fall back to the canonical sample.
  FieldSample<S> query_combined(const Vec3<S>& p, const Vec3<S>& dir, const StateId& state) const {
    std::vector<int> open = state.open_parts();
    FieldSample<S> canonical = query(p, dir, StateId::canonical(state.n));
    if (open.empty()) return canonical;
    std::vector<FieldSample<S>> samples;
    std::vector<S> diffs;
    for (int part : open) {
      samples.push_back(query(p, dir, StateId::single(state.n, part)));
      diffs.push_back(std::abs(samples.back().sigma - canonical.sigma));
    }
    int best = select_dominant(std::span<const S>(diffs));
    if (double(diffs[static_cast<size_t>(best)]) < kTieEpsilon) return canonical;
    return samples[static_cast<size_t>(best)];
  }

  // ---- raw views ------------------------------------------------------

  std::span<const S> disc_view(int part, char axis) const {
    return std::span<const S>(store->block(block_names::disc(part, axis)).values);
  }

  std::vector<std::span<const S>> hash_table_views() const {
    std::vector<std::span<const S>> out(static_cast<size_t>(hash_cfg.levels));
    for (int l = 0; l < hash_cfg.levels; ++l)
      out[static_cast<size_t>(l)] = std::span<const S>(store->block(block_names::hash_level(l)).values);
    return out;
  }

  Eigen::Map<const MatX<S>> weight(const std::string& name) const {
    const auto& b = store->block(name);
    auto [rows, cols] = weight_shape(name);
    return Eigen::Map<const MatX<S>>(b.values.data(), rows, cols);
  }

  VecX<S> bias_vec(const std::string& name) const {
    const auto& b = store->block(name);
    return Eigen::Map<const VecX<S>>(b.values.data(), static_cast<Eigen::Index>(b.size()));
  }

  std::pair<Eigen::Index, Eigen::Index> weight_shape(const std::string& name) const {
    int fd = hash_cfg.feature_dim();
    if (name == "mlp.density.w0") return {mlp_cfg.density_hidden, fd};
    if (name == "mlp.density.w1") return {1 + mlp_cfg.latent_dim, mlp_cfg.density_hidden};
    if (name == "mlp.color.w0") return {mlp_cfg.color_hidden, mlp_cfg.color_input_dim()};
    if (name == "mlp.color.w1") return {mlp_cfg.color_hidden, mlp_cfg.color_hidden};
    if (name == "mlp.color.w2") return {3, mlp_cfg.color_hidden};
    throw ContractError("FieldModel: unknown weight " + name);
  }

  static S sigma_activation(S raw) { return std::exp(std::min(raw, S(15))); }
  static S sigma_derivative(S raw, S sigma) { return raw < S(15) ? sigma : S(0); }
  static S sigmoid(S x) {
    if (x >= S(0)) return S(1) / (S(1) + std::exp(-x));
    S e = std::exp(x);
    return e / (S(1) + e);
  }

 private:
  std::vector<HashLevel> levels_;
};

}  // namespace int3d
