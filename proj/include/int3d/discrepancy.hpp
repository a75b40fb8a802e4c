#pragma once

#include <cmath>
#include <span>

#include "int3d/common.hpp"

namespace int3d {

/// Per-state axis tensor shape. feature_dim must match the hash encoding's
/// L*F so the state feature can modulate the encoded feature elementwise.
struct DiscrepancyConfig {
  int resolution = 512;
  int feature_dim = 32;

  void validate() const {
    require(resolution >= 3, "DiscrepancyConfig: resolution must be >= 3");
    require(feature_dim >= 1, "DiscrepancyConfig: feature_dim must be >= 1");
  }
};

/// Row selected by nearest-neighbor sampling along one axis.
inline int nearest_row(double coord, int resolution) {
  long idx = std::lround(coord * (resolution - 1));
  if (idx < 0) idx = 0;
  if (idx >= resolution) idx = resolution - 1;
  return static_cast<int>(idx);
}

/// State feature t_i of a unit-cube point: the elementwise product of the
/// nearest rows of the three axis tensors. `axis_tensors[a]` is row-major
/// (resolution x feature_dim).
template <typename S>
void state_feature(const Vec3<S>& p, const DiscrepancyConfig& cfg,
                   std::span<const S> tx, std::span<const S> ty, std::span<const S> tz, S* out) {
  int fd = cfg.feature_dim;
  const S* rx = tx.data() + nearest_row(double(p.x()), cfg.resolution) * fd;
  const S* ry = ty.data() + nearest_row(double(p.y()), cfg.resolution) * fd;
  const S* rz = tz.data() + nearest_row(double(p.z()), cfg.resolution) * fd;
  for (int k = 0; k < fd; ++k) out[k] = rx[k] * ry[k] * rz[k];
}

/// Elementwise modulation h * t_i of an encoded feature.
template <typename S>
void modulate(std::span<const S> h, std::span<const S> t, S* out) {
  require(h.size() == t.size(), "modulate: feature length mismatch (L*F != discrepancy feature_dim)");
  for (size_t k = 0; k < h.size(); ++k) out[k] = h[k] * t[k];
}

/// Backward of one state-feature query: accumulates the three row gradients.
/// `upstream` is dL/dt_i at this point.
template <typename S>
void state_feature_backward(const Vec3<S>& p, const DiscrepancyConfig& cfg,
                            std::span<const S> tx, std::span<const S> ty, std::span<const S> tz,
                            const S* upstream,
                            std::span<S> gx, std::span<S> gy, std::span<S> gz) {
  int fd = cfg.feature_dim;
  int ix = nearest_row(double(p.x()), cfg.resolution);
  int iy = nearest_row(double(p.y()), cfg.resolution);
  int iz = nearest_row(double(p.z()), cfg.resolution);
  const S* rx = tx.data() + ix * fd;
  const S* ry = ty.data() + iy * fd;
  const S* rz = tz.data() + iz * fd;
  for (int k = 0; k < fd; ++k) {
    S g = upstream[k];
    if (g == S(0)) continue;
    gx[ix * fd + k] += g * ry[k] * rz[k];
    gy[iy * fd + k] += g * rx[k] * rz[k];
    gz[iz * fd + k] += g * rx[k] * ry[k];
  }
}

/// Mean |1 - entry| per axis, summed over the three axes. Zero at the
/// all-ones initialization.
template <typename S>
double consistency_loss(std::span<const S> tx, std::span<const S> ty, std::span<const S> tz) {
  double total = 0;
  for (std::span<const S> t : {tx, ty, tz}) {
    double acc = 0;
    for (S v : t) acc += std::abs(1.0 - double(v));
    total += acc / double(t.size());
  }
  return total;
}

/// Accumulates d(consistency_loss)/d(entries), scaled by `weight`.
template <typename S>
void consistency_backward(S weight, std::span<const S> tx, std::span<const S> ty,
                          std::span<const S> tz, std::span<S> gx, std::span<S> gy,
                          std::span<S> gz) {
  std::span<const S> ts[3] = {tx, ty, tz};
  std::span<S> gs[3] = {gx, gy, gz};
  for (int a = 0; a < 3; ++a) {
    S scale = weight / S(ts[a].size());
    for (size_t k = 0; k < ts[a].size(); ++k) {
      S d = S(1) - ts[a][k];
      if (d > S(0))
        gs[a][k] -= scale;
      else if (d < S(0))
        gs[a][k] += scale;
    }
  }
}

/// Mean squared second difference along each axis tensor's resolution
/// dimension (interior rows, all channels), summed over the three axes.
template <typename S>
double smoothness_loss(const DiscrepancyConfig& cfg, std::span<const S> tx,
                       std::span<const S> ty, std::span<const S> tz) {
  int r = cfg.resolution, fd = cfg.feature_dim;
  require(r >= 3, "smoothness_loss: resolution must be >= 3");
  double total = 0;
  for (std::span<const S> t : {tx, ty, tz}) {
    double acc = 0;
    for (int row = 1; row + 1 < r; ++row) {
      const S* pm = t.data() + (row - 1) * fd;
      const S* p0 = t.data() + row * fd;
      const S* pp = t.data() + (row + 1) * fd;
      for (int k = 0; k < fd; ++k) {
        double d = double(pm[k]) - 2.0 * double(p0[k]) + double(pp[k]);
        acc += d * d;
      }
    }
    total += acc / (double(r - 2) * double(fd));
  }
  return total;
}

/// Accumulates d(smoothness_loss)/d(entries), scaled by `weight`.
template <typename S>
void smoothness_backward(const DiscrepancyConfig& cfg, S weight,
                         std::span<const S> tx, std::span<const S> ty, std::span<const S> tz,
                         std::span<S> gx, std::span<S> gy, std::span<S> gz) {
  int r = cfg.resolution, fd = cfg.feature_dim;
  std::span<const S> ts[3] = {tx, ty, tz};
  std::span<S> gs[3] = {gx, gy, gz};
  S norm = weight * S(2) / (S(r - 2) * S(fd));
  for (int a = 0; a < 3; ++a) {
    const S* t = ts[a].data();
    S* g = gs[a].data();
    for (int row = 1; row + 1 < r; ++row) {
      for (int k = 0; k < fd; ++k) {
        S d = t[(row - 1) * fd + k] - S(2) * t[row * fd + k] + t[(row + 1) * fd + k];
        S gd = norm * d;
        g[(row - 1) * fd + k] += gd;
        g[row * fd + k] -= S(2) * gd;
        g[(row + 1) * fd + k] += gd;
      }
    }
  }
}

}  // namespace int3d
