#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "int3d/common.hpp"
#include "int3d/geometry.hpp"

namespace int3d {

/// Marching parameters. The step is (scene diagonal) / step_divisor.
struct RenderConfig {
  int step_divisor = 1024;
  int max_samples_per_ray = 1024;
  double term_transmittance = 1e-4;  // stop adding samples below this T; 0 disables

  template <typename S>
  S step(const Aabb<S>& box) const {
    return box.diagonal() / S(step_divisor);
  }
};

/// Binary occupancy with a density EMA per cell over the scene box.
/// Shared grids only ever grow; Independent grids decay where the field has
/// gone empty.
struct OccupancyGrid {
  enum class Mode { Shared, Independent };

  int resolution = 128;
  double decay = 0.95;
  double tau = 1e-2;
  Mode mode = Mode::Independent;
  Aabb<double> domain;
  std::vector<float> density_ema;     // resolution^3, x-fastest
  std::vector<std::uint8_t> occupied;

  void init(int res, const Aabb<double>& box, Mode m, double decay_ = 0.95, double tau_ = 1e-2) {
    resolution = res;
    domain = box;
    mode = m;
    decay = decay_;
    tau = tau_;
    size_t cells = size_t(res) * size_t(res) * size_t(res);
    density_ema.assign(cells, 0.0f);
    occupied.assign(cells, 0);
  }

  size_t cell_count() const { return density_ema.size(); }

  template <typename S>
  size_t cell_of(const Vec3<S>& p) const {
    int r = resolution;
    size_t idx = 0;
    size_t stride = 1;
    for (int a = 0; a < 3; ++a) {
      double u = (double(p[a]) - domain.min[a]) / (domain.max[a] - domain.min[a]);
      int c = static_cast<int>(u * r);
      c = std::max(0, std::min(c, r - 1));
      idx += stride * static_cast<size_t>(c);
      stride *= static_cast<size_t>(r);
    }
    return idx;
  }

  Vec3d cell_min(size_t idx) const {
    int r = resolution;
    int cx = static_cast<int>(idx % size_t(r));
    int cy = static_cast<int>((idx / size_t(r)) % size_t(r));
    int cz = static_cast<int>(idx / (size_t(r) * size_t(r)));
    Vec3d ext = domain.extent() / double(r);
    return domain.min + Vec3d(cx * ext.x(), cy * ext.y(), cz * ext.z());
  }

  template <typename S>
  bool is_occupied(const Vec3<S>& p) const {
    return occupied[cell_of(p)] != 0;
  }

  void recompute_bits() {
    for (size_t i = 0; i < density_ema.size(); ++i) occupied[i] = density_ema[i] > tau ? 1 : 0;
  }

  double occupied_fraction() const {
    size_t n = 0;
    for (std::uint8_t b : occupied) n += b;
    return density_ema.empty() ? 0.0 : double(n) / double(density_ema.size());
  }
};

/// Occupied-cell union of several grids (for rendering combination states
/// under the Independent strategy).
inline OccupancyGrid union_grids(std::span<const OccupancyGrid* const> grids) {
  require(!grids.empty(), "union_grids: need at least one grid");
  OccupancyGrid out = *grids[0];
  for (size_t g = 1; g < grids.size(); ++g) {
    require(grids[g]->resolution == out.resolution, "union_grids: resolution mismatch");
    for (size_t i = 0; i < out.density_ema.size(); ++i)
      out.density_ema[i] = std::max(out.density_ema[i], grids[g]->density_ema[i]);
  }
  out.recompute_bits();
  return out;
}

/// Marched sample positions of one ray: uniform steps clipped to the scene
/// box, keeping only step midpoints that land in occupied cells.
template <typename S>
struct MarchPositions {
  std::vector<S> t;           // midpoint distances, ascending
  std::vector<Vec3<S>> pos;
  S dt = 0;
  S t_enter = 0, t_exit = 0;
  bool hit = false;           // ray intersected the scene box
};

template <typename S>
MarchPositions<S> march_positions(const Ray<S>& ray, const OccupancyGrid& grid,
                                  const Aabb<S>& box, const RenderConfig& cfg) {
  MarchPositions<S> out;
  out.dt = cfg.step(box);
  auto hit = intersect_aabb(ray, box);
  if (!hit) return out;
  out.hit = true;
  out.t_enter = std::max(hit->first, ray.t_near);
  out.t_exit = std::min(hit->second, ray.t_far);
  if (out.t_exit <= out.t_enter) return out;
  long total = static_cast<long>((double(out.t_exit) - double(out.t_enter)) / double(out.dt));
  for (long k = 0; k < total; ++k) {
    if (static_cast<int>(out.t.size()) >= cfg.max_samples_per_ray) break;
    S t = out.t_enter + (S(k) + S(0.5)) * out.dt;
    Vec3<S> p = ray.at(t);
    if (!grid.is_occupied(p)) continue;
    out.t.push_back(t);
    out.pos.push_back(p);
  }
  return out;
}

/// Samples of one marched ray, with compositing results once composite() has
/// run: w_k = (1 - exp(-sigma_k delta_k)) T_k and T_{k+1} = T_k exp(-sigma_k delta_k).
template <typename S>
struct RaySamples {
  std::vector<S> t;
  std::vector<S> delta;
  std::vector<S> sigma;
  std::vector<Vec3<S>> color;
  std::vector<S> weight;
  std::vector<S> transmittance;  // T_k before absorbing sample k
  S t_enter = 0, t_exit = 0;

  size_t size() const { return t.size(); }

  /// Ray-normalized midpoint of sample k.
  S midpoint_s(size_t k) const { return (t[k] - t_enter) / (t_exit - t_enter); }
  /// Ray-normalized step of sample k.
  S delta_s(size_t k) const { return delta[k] / (t_exit - t_enter); }
};

/// Marches a ray and queries the field at each kept position.
/// `query(pos, dir)` returns (sigma, color). Compositing is a separate step.
template <typename S, typename QueryFn>
RaySamples<S> march(const Ray<S>& ray, const OccupancyGrid& grid, const Aabb<S>& box,
                    const RenderConfig& cfg, QueryFn&& query) {
  MarchPositions<S> mp = march_positions(ray, grid, box, cfg);
  RaySamples<S> out;
  out.t_enter = mp.t_enter;
  out.t_exit = mp.t_exit;
  out.t = std::move(mp.t);
  size_t n = out.t.size();
  out.delta.assign(n, mp.dt);
  out.sigma.resize(n);
  out.color.resize(n);
  for (size_t k = 0; k < n; ++k) {
    auto [sigma, color] = query(mp.pos[k], ray.direction);
    out.sigma[k] = sigma;
    out.color[k] = color;
  }
  return out;
}

template <typename S>
struct RenderResult {
  Vec3<S> color = Vec3<S>::Zero();
  S opacity = 0;
  S final_transmittance = 1;
  int samples_used = 0;
};

/// Discrete volume rendering of one ray's samples over black background.
/// Transmittance and the accumulators run in double precision so the weight
/// normalization identity holds to well under 1e-5 even for 1024-sample rays.
/// `weight` and `trans` receive w_k and T_k.
template <typename S>
RenderResult<S> composite_core(std::span<const S> sigma, std::span<const Vec3<S>> color,
                               std::span<const S> delta, std::span<S> weight, std::span<S> trans) {
  size_t n = sigma.size();
  double T = 1.0;
  double C[3] = {0, 0, 0};
  double O = 0.0;
  for (size_t k = 0; k < n; ++k) {
    trans[k] = static_cast<S>(T);
    double att = std::exp(-double(sigma[k]) * double(delta[k]));
    double w = (1.0 - att) * T;
    weight[k] = static_cast<S>(w);
    for (int ch = 0; ch < 3; ++ch) C[ch] += w * double(color[k][ch]);
    O += w;
    T *= att;
  }
  RenderResult<S> res;
  res.color = Vec3<S>(S(C[0]), S(C[1]), S(C[2]));
  res.opacity = static_cast<S>(O);
  res.final_transmittance = static_cast<S>(T);
  res.samples_used = static_cast<int>(n);
  return res;
}

template <typename S>
RenderResult<S> composite(RaySamples<S>& samples) {
  size_t n = samples.size();
  samples.weight.resize(n);
  samples.transmittance.resize(n);
  return composite_core<S>(samples.sigma, samples.color, samples.delta,
                           samples.weight, samples.transmittance);
}

/// Distortion loss of one ray over ray-normalized midpoints, computed with
/// the O(K) prefix-sum identity. `t` holds world midpoints; weights must be
/// composited already.
template <typename S>
double distortion_core(std::span<const S> weight, std::span<const S> t, std::span<const S> delta,
                       S t_enter, S t_exit) {
  double span = double(t_exit) - double(t_enter);
  if (span <= 0) return 0;
  double pair_term = 0, self_term = 0;
  double w_prefix = 0, wm_prefix = 0;
  for (size_t k = 0; k < weight.size(); ++k) {
    double w = weight[k];
    double m = (double(t[k]) - double(t_enter)) / span;
    pair_term += w * (m * w_prefix - wm_prefix);
    self_term += w * w * double(delta[k]) / span;
    w_prefix += w;
    wm_prefix += w * m;
  }
  return 2.0 * pair_term + self_term / 3.0;
}

template <typename S>
double distortion_loss(const RaySamples<S>& samples) {
  require(samples.weight.size() == samples.size(), "distortion_loss: composite() must run first");
  return distortion_core<S>(samples.weight, samples.t, samples.delta, samples.t_enter,
                            samples.t_exit);
}

/// d(distortion_loss)/d(weight_k), accumulated into dweight with `scale`;
/// positions are constants.
template <typename S>
void distortion_backward_core(std::span<const S> weight, std::span<const S> t,
                              std::span<const S> delta, S t_enter, S t_exit, double scale,
                              std::span<double> dweight) {
  size_t n = weight.size();
  double span = double(t_exit) - double(t_enter);
  if (span <= 0 || n == 0) return;
  double w_total = 0, wm_total = 0;
  for (size_t k = 0; k < n; ++k) {
    w_total += double(weight[k]);
    wm_total += double(weight[k]) * (double(t[k]) - double(t_enter)) / span;
  }
  double w_below = 0, wm_below = 0;
  for (size_t k = 0; k < n; ++k) {
    double w = weight[k];
    double m = (double(t[k]) - double(t_enter)) / span;
    double w_above = w_total - w_below - w;
    double wm_above = wm_total - wm_below - w * m;
    double below = m * w_below - wm_below;
    double above = wm_above - m * w_above;
    dweight[k] += scale * (2.0 * (below + above) + (2.0 / 3.0) * w * double(delta[k]) / span);
    w_below += w;
    wm_below += w * m;
  }
}

/// Per-ray opacity entropy -O log(O + 1e-10).
inline double opacity_loss(double opacity) { return -opacity * std::log(opacity + 1e-10); }

inline double opacity_loss_derivative(double opacity) {
  return -std::log(opacity + 1e-10) - opacity / (opacity + 1e-10);
}

/// Backward through the compositing weights: given additive per-sample
/// dL/dw_k (`dweight`, e.g. distortion and opacity routes) and the upstream
/// color gradient dL/dC, produces dL/dsigma_k and dL/dcolor_k.
/// Uses dw_i/dsigma_k = -delta_k w_i for k < i and delta_i T_{i+1} for k = i.
template <typename S>
void composite_backward_core(std::span<const S> sigma, std::span<const Vec3<S>> color,
                             std::span<const S> delta, std::span<const S> weight,
                             std::span<const S> trans, std::span<const double> dweight,
                             const Vec3<double>& dcolor_upstream, std::span<S> dsigma,
                             std::span<Vec3<S>> dcolor) {
  size_t n = sigma.size();
  double suffix = 0;
  std::vector<double> g(n);
  for (size_t k = 0; k < n; ++k) {
    g[k] = dweight[k];
    for (int ch = 0; ch < 3; ++ch) g[k] += dcolor_upstream[ch] * double(color[k][ch]);
    dcolor[k] = (dcolor_upstream * double(weight[k])).template cast<S>();
  }
  for (size_t k = n; k-- > 0;) {
    double T_next = double(trans[k]) - double(weight[k]);
    double d = double(delta[k]) * (g[k] * T_next - suffix);
    dsigma[k] = static_cast<S>(d);
    suffix += g[k] * double(weight[k]);
  }
}

template <typename S>
void composite_backward(const RaySamples<S>& samples, std::span<const double> dweight,
                        const Vec3<double>& dcolor_upstream, std::span<S> dsigma,
                        std::span<Vec3<S>> dcolor) {
  composite_backward_core<S>(samples.sigma, samples.color, samples.delta, samples.weight,
                             samples.transmittance, dweight, dcolor_upstream, dsigma, dcolor);
}

/// One occupancy update sweep under a single state's density field:
/// samples one jittered point per cell and applies the mode's EMA rule,
/// then recomputes the occupancy bits.
/// `density_fn(points, out_sigma)` evaluates the field density in batch.
inline void update_grid(
    OccupancyGrid& grid,
    const std::function<void(std::span<const Vec3<float>>, std::vector<float>&)>& density_fn,
    std::uint64_t update_index, std::uint64_t seed, int n_workers = 1) {
  size_t cells = grid.cell_count();
  int r = grid.resolution;
  Vec3d cell_ext = grid.domain.extent() / double(r);
  // slot decomposition is a fixed function of the cell count, never of the
  // worker count, so evaluation batch shapes and results are reproducible
  int slots = static_cast<int>((cells + 32767) / 32768);
  size_t per_slot = (cells + size_t(slots) - 1) / size_t(slots);
  parallel_slots(slots, n_workers, [&](int s) {
    size_t begin = size_t(s) * per_slot;
    size_t end = std::min(cells, begin + per_slot);
    if (begin >= end) return;
    std::vector<Vec3<float>> pts;
    pts.reserve(end - begin);
    for (size_t i = begin; i < end; ++i) {
      Pcg32 rng(mix_seed({seed, 0x6f636375ull, update_index, i}));
      Vec3d lo = grid.cell_min(i);
      pts.emplace_back(float(lo.x() + rng.next_double() * cell_ext.x()),
                       float(lo.y() + rng.next_double() * cell_ext.y()),
                       float(lo.z() + rng.next_double() * cell_ext.z()));
    }
    std::vector<float> sigma;
    density_fn(std::span<const Vec3<float>>(pts), sigma);
    for (size_t i = begin; i < end; ++i) {
      float s_val = sigma[i - begin];
      float& ema = grid.density_ema[i];
      if (grid.mode == OccupancyGrid::Mode::Shared)
        ema = std::max(ema, s_val);
      else
        ema = std::max(float(ema * grid.decay), s_val);
    }
  });
  grid.recompute_bits();
}

}  // namespace int3d
