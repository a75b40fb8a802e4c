#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "int3d/common.hpp"

namespace int3d {

/// Multi-resolution hash encoding configuration. Levels grow geometrically
/// from base_resolution to max_resolution; each level stores
/// features_per_level values per table slot.
struct HashGridConfig {
  int levels = 16;
  int features_per_level = 2;
  std::uint32_t table_size = 1u << 15;  // power of two
  int base_resolution = 16;
  int max_resolution = 512;

  int feature_dim() const { return levels * features_per_level; }

  double growth() const {
    if (levels <= 1) return 1.0;
    return std::exp((std::log(double(max_resolution)) - std::log(double(base_resolution))) /
                    double(levels - 1));
  }

  /// Cell resolution of level `l` (vertices per side is resolution + 1).
  int resolution(int level) const {
    return static_cast<int>(std::lround(double(base_resolution) * std::pow(growth(), level)));
  }

  bool level_is_dense(int level) const {
    std::uint64_t verts = std::uint64_t(resolution(level)) + 1;
    return verts * verts * verts <= table_size;
  }

  /// Slots stored for level `l`: the dense vertex lattice when it fits in the
  /// table, table_size otherwise.
  std::uint32_t level_table_entries(int level) const {
    std::uint64_t verts = std::uint64_t(resolution(level)) + 1;
    std::uint64_t dense = verts * verts * verts;
    return dense <= table_size ? static_cast<std::uint32_t>(dense) : table_size;
  }

  void validate() const {
    require(levels >= 1, "HashGridConfig: levels must be >= 1");
    require(features_per_level >= 1, "HashGridConfig: features_per_level must be >= 1");
    require(table_size > 0 && (table_size & (table_size - 1)) == 0,
            "HashGridConfig: table_size must be a power of two");
    require(base_resolution >= 1 && base_resolution <= max_resolution,
            "HashGridConfig: need 1 <= base_resolution <= max_resolution");
  }
};

/// Precomputed per-level facts for the hot paths.
struct HashLevel {
  int resolution;
  bool dense;
  std::uint32_t mask;  // table_size - 1, for hashed levels
};

inline std::vector<HashLevel> hash_levels(const HashGridConfig& cfg) {
  std::vector<HashLevel> out(cfg.levels);
  for (int l = 0; l < cfg.levels; ++l)
    out[l] = {cfg.resolution(l), cfg.level_is_dense(l), cfg.table_size - 1};
  return out;
}

inline std::uint32_t hash_index(int ix, int iy, int iz, const HashLevel& lvl) {
  if (lvl.dense) {
    std::uint32_t verts = static_cast<std::uint32_t>(lvl.resolution) + 1;
    return (static_cast<std::uint32_t>(iz) * verts + static_cast<std::uint32_t>(iy)) * verts +
           static_cast<std::uint32_t>(ix);
  }
  std::uint32_t h = static_cast<std::uint32_t>(ix) ^
                    (static_cast<std::uint32_t>(iy) * 2654435761u) ^
                    (static_cast<std::uint32_t>(iz) * 805459861u);
  return h & lvl.mask;
}

/// Table slot of integer vertex (ix,iy,iz) at `level`: row-major when the
/// dense lattice fits, InstantNGP spatial hash otherwise.
inline std::uint32_t hash_index(int ix, int iy, int iz, int level, const HashGridConfig& cfg) {
  return hash_index(ix, iy, iz, HashLevel{cfg.resolution(level), cfg.level_is_dense(level),
                                          cfg.table_size - 1});
}

namespace detail {

/// Corner slots and trilinear weights of one level for a unit-cube point.
template <typename S>
struct CornerSet {
  std::uint32_t slot[8];
  S weight[8];
};

template <typename S>
inline CornerSet<S> level_corners(S px, S py, S pz, const HashLevel& lvl) {
  int res = lvl.resolution;
  S x = px * S(res), y = py * S(res), z = pz * S(res);
  int ix = std::min(static_cast<int>(x), res - 1);
  int iy = std::min(static_cast<int>(y), res - 1);
  int iz = std::min(static_cast<int>(z), res - 1);
  S fx = x - S(ix), fy = y - S(iy), fz = z - S(iz);
  S wx[2] = {S(1) - fx, fx}, wy[2] = {S(1) - fy, fy}, wz[2] = {S(1) - fz, fz};
  CornerSet<S> cs;
  for (int c = 0; c < 8; ++c) {
    int dx = c & 1, dy = (c >> 1) & 1, dz = (c >> 2) & 1;
    cs.slot[c] = hash_index(ix + dx, iy + dy, iz + dz, lvl);
    cs.weight[c] = wx[dx] * wy[dy] * wz[dz];
  }
  return cs;
}

}  // namespace detail

/// Encodes a unit-cube point: per level, trilinear interpolation of the 8
/// corner features, concatenated over levels into `out` (length L*F).
/// `tables[l]` holds level l's features, slot-major. When `corner_cache` is
/// non-null the per-level corner slots and weights are appended to it
/// (8 slots + 8 weights per level) so a later scatter can skip recomputing
/// them.
template <typename S>
void encode(const Vec3<S>& p, const std::vector<HashLevel>& levels, int features_per_level,
            std::span<const std::span<const S>> tables, S* out,
            std::uint32_t* slot_cache = nullptr, S* weight_cache = nullptr) {
  int f = features_per_level;
  for (size_t l = 0; l < levels.size(); ++l) {
    detail::CornerSet<S> cs = detail::level_corners(p.x(), p.y(), p.z(), levels[l]);
    const S* table = tables[l].data();
    if (f == 2) {
      S acc0 = 0, acc1 = 0;
      for (int c = 0; c < 8; ++c) {
        const S* src = table + cs.slot[c] * 2;
        acc0 += cs.weight[c] * src[0];
        acc1 += cs.weight[c] * src[1];
      }
      out[l * 2 + 0] = acc0;
      out[l * 2 + 1] = acc1;
    } else {
      for (int k = 0; k < f; ++k) {
        S acc = 0;
        for (int c = 0; c < 8; ++c) acc += cs.weight[c] * table[cs.slot[c] * f + k];
        out[l * f + k] = acc;
      }
    }
    if (slot_cache) {
      std::uint32_t* sc = slot_cache + l * 8;
      S* wc = weight_cache + l * 8;
      for (int c = 0; c < 8; ++c) {
        sc[c] = cs.slot[c];
        wc[c] = cs.weight[c];
      }
    }
  }
}

template <typename S>
void encode(const Vec3<S>& p, const HashGridConfig& cfg,
            std::span<const std::span<const S>> tables, S* out) {
  encode(p, hash_levels(cfg), cfg.features_per_level, tables, out);
}

/// Scatters `upstream` (length L*F) into the per-level gradient tables with
/// the same trilinear weights used by encode. Collisions accumulate.
template <typename S>
void encode_backward(const Vec3<S>& p, const std::vector<HashLevel>& levels, int features_per_level,
                     const S* upstream, std::span<const std::span<S>> grad_tables) {
  int f = features_per_level;
  for (size_t l = 0; l < levels.size(); ++l) {
    detail::CornerSet<S> cs = detail::level_corners(p.x(), p.y(), p.z(), levels[l]);
    S* table = grad_tables[l].data();
    for (int k = 0; k < f; ++k) {
      S g = upstream[l * f + k];
      if (g == S(0)) continue;
      for (int c = 0; c < 8; ++c) table[cs.slot[c] * f + k] += cs.weight[c] * g;
    }
  }
}

/// Scatter variant reusing the forward's cached corner slots and weights.
template <typename S>
void encode_backward_cached(const std::uint32_t* slot_cache, const S* weight_cache, int levels,
                            int features_per_level, const S* upstream,
                            std::span<const std::span<S>> grad_tables) {
  int f = features_per_level;
  for (int l = 0; l < levels; ++l) {
    const std::uint32_t* sc = slot_cache + l * 8;
    const S* wc = weight_cache + l * 8;
    S* table = grad_tables[size_t(l)].data();
    if (f == 2) {
      S g0 = upstream[l * 2 + 0], g1 = upstream[l * 2 + 1];
      if (g0 == S(0) && g1 == S(0)) continue;
      for (int c = 0; c < 8; ++c) {
        S* dst = table + sc[c] * 2;
        dst[0] += wc[c] * g0;
        dst[1] += wc[c] * g1;
      }
    } else {
      for (int k = 0; k < f; ++k) {
        S g = upstream[l * f + k];
        if (g == S(0)) continue;
        for (int c = 0; c < 8; ++c) table[sc[c] * f + k] += wc[c] * g;
      }
    }
  }
}

template <typename S>
void encode_backward(const Vec3<S>& p, const HashGridConfig& cfg, const S* upstream,
                     std::span<const std::span<S>> grad_tables) {
  encode_backward(p, hash_levels(cfg), cfg.features_per_level, upstream, grad_tables);
}

}  // namespace int3d
