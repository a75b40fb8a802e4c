#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "int3d/common.hpp"
#include "int3d/field.hpp"
#include "int3d/geometry.hpp"
#include "int3d/render.hpp"

namespace int3d {

/// Loss weighting of the overall objective; defaults follow the training
/// recipe (distortion/opacity 1e-3, consistency 1e-4, smoothness 1e-3,
/// cross-state regularization 1e-2).
struct LossWeights {
  double distortion = 1e-3;
  double opacity = 1e-3;
  double consistency = 1e-4;
  double smoothness = 1e-3;
  double msr = 1e-2;
};

/// Batched ray evaluator: marches rays against an occupancy grid, evaluates
/// the field in waves so opaque rays stop early, and runs compositing and
/// the rendering losses forward and backward. One instance per worker slot;
/// scratch buffers persist across calls.
template <typename S>
class RayPipeline {
 public:
  static constexpr int kWaveSize = 8;
  static constexpr size_t kGroupBudget = 16384;  // samples per forward/backward group

  RayPipeline(const FieldModel<S>& model, const RenderConfig& cfg, const Aabb<S>& box)
      : model_(&model), cfg_(cfg), box_(box) {}

  const RenderConfig& config() const { return cfg_; }

  struct Stats {
    double mse = 0, distortion = 0, opacity = 0, msr = 0;
    std::uint64_t marched_samples = 0;  // occupancy-passing positions
    std::uint64_t rays = 0;
    void accumulate(const Stats& o) {
      mse += o.mse;
      distortion += o.distortion;
      opacity += o.opacity;
      msr += o.msr;
      marched_samples += o.marched_samples;
      rays += o.rays;
    }
  };

  // ---- training -----------------------------------------------------------

  /// Photometric pass over supervised rays: MSE + distortion + opacity.
  /// Loss values are normalized by total_rays (the whole batch across all
  /// slots); gradients match d(mse + w.distortion*dist + w.opacity*opac).
  template <typename Sink>
  Stats train_main(std::span<const Ray<S>> rays, std::span<const Vec3<S>> gt,
                   std::span<const int> parts, std::span<const OccupancyGrid* const> grids,
                   size_t total_rays, const LossWeights& w, bool with_grad, Sink* sink) {
    Stats st;
    st.rays = rays.size();
    march_all(rays, grids);
    for (size_t r = 0; r < rays.size(); ++r) st.marched_samples += std::uint64_t(rcnt_[r]);
    wave_truncate_fixed(parts);
    size_t r0 = 0;
    size_t n = rays.size();
    while (r0 < n) {
      size_t r1 = r0, samples = 0;
      while (r1 < n && (samples + size_t(rkept_[r1]) <= kGroupBudget || r1 == r0)) {
        samples += size_t(rkept_[r1]);
        ++r1;
      }
      gather_group(r0, r1, parts, rays, nullptr);
      model_->forward_batch(std::span<const Vec3<S>>(gpos_), std::span<const int>(gpart_),
                            std::span<const Vec3<S>>(gdir_), cache_);
      prepare_group_buffers(samples, with_grad);
      size_t off = 0;
      for (size_t r = r0; r < r1; ++r) {
        size_t cnt = size_t(rkept_[r]);
        auto sig = std::span<const S>(cache_.sigma).subspan(off, cnt);
        auto col = std::span<const Vec3<S>>(cache_.color).subspan(off, cnt);
        auto del = std::span<const S>(gdelta_).subspan(off, cnt);
        auto tim = std::span<const S>(gtime_).subspan(off, cnt);
        RenderResult<S> res = composite_core<S>(
            sig, col, del, std::span<S>(gweight_).subspan(off, cnt),
            std::span<S>(gtrans_).subspan(off, cnt));
        Vec3<double> diff = res.color.template cast<double>() - gt[r].template cast<double>();
        st.mse += diff.squaredNorm() / double(total_rays);
        double dist = distortion_core<S>(std::span<const S>(gweight_).subspan(off, cnt), tim, del,
                                         rte_[r], rtx_[r]);
        st.distortion += dist / double(total_rays);
        st.opacity += opacity_loss(double(res.opacity)) / double(total_rays);
        if (with_grad && cnt > 0) {
          auto dw = std::span<double>(dweight_).subspan(off, cnt);
          std::fill(dw.begin(), dw.end(), 0.0);
          distortion_backward_core<S>(std::span<const S>(gweight_).subspan(off, cnt), tim, del,
                                      rte_[r], rtx_[r], w.distortion / double(total_rays), dw);
          double d_opac =
              w.opacity * opacity_loss_derivative(double(res.opacity)) / double(total_rays);
          for (double& v : dw) v += d_opac;
          Vec3<double> dC = 2.0 * diff / double(total_rays);
          composite_backward_core<S>(sig, col, del, std::span<const S>(gweight_).subspan(off, cnt),
                                     std::span<const S>(gtrans_).subspan(off, cnt), dw, dC,
                                     std::span<S>(dsigma_).subspan(off, cnt),
                                     std::span<Vec3<S>>(dcolor_).subspan(off, cnt));
        }
        off += cnt;
      }
      if (with_grad)
        model_->backward_batch(cache_, std::span<const S>(dsigma_).first(samples),
                               std::span<const Vec3<S>>(dcolor_).first(samples), *sink);
      r0 = r1;
    }
    return st;
  }

  /// Cross-state alignment pass: each ray is rendered at identical sample
  /// positions under parts_ref (gradient-detached) and parts_opt
  /// (gradient-carrying); mean L1 between the two renders.
  /// `ref_override`, when given, replaces the freshly rendered detached
  /// colors (the stop-gradient frozen by a gradient check); `ref_out`
  /// collects the detached colors for later freezing.
  template <typename Sink>
  Stats train_msr(std::span<const Ray<S>> rays, std::span<const int> parts_ref,
                  std::span<const int> parts_opt, std::span<const OccupancyGrid* const> grids,
                  size_t total_rays, const LossWeights& w, bool with_grad, Sink* sink,
                  const std::vector<Vec3<S>>* ref_override = nullptr,
                  std::vector<Vec3<S>>* ref_out = nullptr) {
    Stats st;
    st.rays = rays.size();
    march_all(rays, grids);
    wave_truncate_pair(parts_ref, parts_opt);
    size_t r0 = 0;
    size_t n = rays.size();
    while (r0 < n) {
      size_t r1 = r0, samples = 0;
      while (r1 < n && (samples + size_t(rkept_[r1]) <= kGroupBudget || r1 == r0)) {
        samples += size_t(rkept_[r1]);
        ++r1;
      }
      gather_group(r0, r1, parts_ref, rays, nullptr);
      model_->forward_batch(std::span<const Vec3<S>>(gpos_), std::span<const int>(gpart_),
                            std::span<const Vec3<S>>(gdir_), cache_ref_);
      gather_group(r0, r1, parts_opt, rays, nullptr);
      model_->forward_batch(std::span<const Vec3<S>>(gpos_), std::span<const int>(gpart_),
                            std::span<const Vec3<S>>(gdir_), cache_);
      prepare_group_buffers(samples, with_grad);
      gweight_ref_.resize(samples);
      gtrans_ref_.resize(samples);
      size_t off = 0;
      for (size_t r = r0; r < r1; ++r) {
        size_t cnt = size_t(rkept_[r]);
        auto del = std::span<const S>(gdelta_).subspan(off, cnt);
        RenderResult<S> ref = composite_core<S>(
            std::span<const S>(cache_ref_.sigma).subspan(off, cnt),
            std::span<const Vec3<S>>(cache_ref_.color).subspan(off, cnt), del,
            std::span<S>(gweight_ref_).subspan(off, cnt), std::span<S>(gtrans_ref_).subspan(off, cnt));
        Vec3<S> ref_color = ref_override ? (*ref_override)[r] : ref.color;
        if (ref_out) {
          if (ref_out->size() < rays.size()) ref_out->resize(rays.size());
          (*ref_out)[r] = ref.color;
        }
        auto sig = std::span<const S>(cache_.sigma).subspan(off, cnt);
        auto col = std::span<const Vec3<S>>(cache_.color).subspan(off, cnt);
        RenderResult<S> opt = composite_core<S>(sig, col, del,
                                                std::span<S>(gweight_).subspan(off, cnt),
                                                std::span<S>(gtrans_).subspan(off, cnt));
        Vec3<double> diff = opt.color.template cast<double>() - ref_color.template cast<double>();
        st.msr += (std::abs(diff.x()) + std::abs(diff.y()) + std::abs(diff.z())) /
                  (3.0 * double(total_rays));
        if (with_grad && cnt > 0) {
          auto dw = std::span<double>(dweight_).subspan(off, cnt);
          std::fill(dw.begin(), dw.end(), 0.0);
          Vec3<double> dC;
          for (int ch = 0; ch < 3; ++ch)
            dC[ch] = w.msr * (diff[ch] > 0 ? 1.0 : (diff[ch] < 0 ? -1.0 : 0.0)) /
                     (3.0 * double(total_rays));
          composite_backward_core<S>(sig, col, del, std::span<const S>(gweight_).subspan(off, cnt),
                                     std::span<const S>(gtrans_).subspan(off, cnt), dw, dC,
                                     std::span<S>(dsigma_).subspan(off, cnt),
                                     std::span<Vec3<S>>(dcolor_).subspan(off, cnt));
        }
        off += cnt;
      }
      if (with_grad)
        model_->backward_batch(cache_, std::span<const S>(dsigma_).first(samples),
                               std::span<const Vec3<S>>(dcolor_).first(samples), *sink);
      r0 = r1;
    }
    return st;
  }

  // ---- evaluation rendering -------------------------------------------------

  /// Renders rays under one trainable-state conditioning (the query path).
  void render_fixed(std::span<const Ray<S>> rays, int part, const OccupancyGrid& grid,
                    std::span<RenderResult<S>> results) {
    fixed_parts_.assign(rays.size(), part);
    single_grid_.assign(rays.size(), &grid);
    render_with_parts(rays, std::span<const int>(fixed_parts_),
                      std::span<const OccupancyGrid* const>(single_grid_), results);
  }

  /// Renders rays under an arbitrary state: per-sample densities of the
  /// canonical field and every open part's field are compared and the sample
  /// with the largest |sigma_i - sigma_0| wins; near-ties use canonical
  /// (the query_combined path).
  void render_combined(std::span<const Ray<S>> rays, const StateId& state,
                       const OccupancyGrid& grid, std::span<RenderResult<S>> results) {
    std::vector<int> open = state.open_parts();
    if (open.empty()) {
      render_fixed(rays, 0, grid, results);
      return;
    }
    single_grid_.assign(rays.size(), &grid);
    march_all(rays, std::span<const OccupancyGrid* const>(single_grid_));
    wave_select(open);
    size_t r0 = 0;
    size_t n = rays.size();
    while (r0 < n) {
      size_t r1 = r0, samples = 0;
      while (r1 < n && (samples + size_t(rkept_[r1]) <= kGroupBudget || r1 == r0)) {
        samples += size_t(rkept_[r1]);
        ++r1;
      }
      gather_group(r0, r1, {}, rays, &msel_);
      model_->forward_batch(std::span<const Vec3<S>>(gpos_), std::span<const int>(gpart_),
                            std::span<const Vec3<S>>(gdir_), cache_);
      prepare_group_buffers(samples, false);
      size_t off = 0;
      for (size_t r = r0; r < r1; ++r) {
        size_t cnt = size_t(rkept_[r]);
        results[r] = composite_core<S>(std::span<const S>(cache_.sigma).subspan(off, cnt),
                                       std::span<const Vec3<S>>(cache_.color).subspan(off, cnt),
                                       std::span<const S>(gdelta_).subspan(off, cnt),
                                       std::span<S>(gweight_).subspan(off, cnt),
                                       std::span<S>(gtrans_).subspan(off, cnt));
        off += cnt;
      }
      r0 = r1;
    }
  }

  /// Kept samples of ray r from the last call, for tests and diagnostics.
  RaySamples<S> last_ray_samples(size_t r) const {
    RaySamples<S> out;
    out.t_enter = rte_[r];
    out.t_exit = rtx_[r];
    int off = roff_[r];
    for (int k = 0; k < rkept_[r]; ++k) {
      out.t.push_back(mt_[size_t(off + k)]);
      out.delta.push_back(dt_);
    }
    return out;
  }

 private:
  void render_with_parts(std::span<const Ray<S>> rays, std::span<const int> parts,
                         std::span<const OccupancyGrid* const> grids,
                         std::span<RenderResult<S>> results) {
    march_all(rays, grids);
    wave_truncate_fixed(parts);
    size_t r0 = 0;
    size_t n = rays.size();
    while (r0 < n) {
      size_t r1 = r0, samples = 0;
      while (r1 < n && (samples + size_t(rkept_[r1]) <= kGroupBudget || r1 == r0)) {
        samples += size_t(rkept_[r1]);
        ++r1;
      }
      gather_group(r0, r1, parts, rays, nullptr);
      model_->forward_batch(std::span<const Vec3<S>>(gpos_), std::span<const int>(gpart_),
                            std::span<const Vec3<S>>(gdir_), cache_);
      prepare_group_buffers(samples, false);
      size_t off = 0;
      for (size_t r = r0; r < r1; ++r) {
        size_t cnt = size_t(rkept_[r]);
        results[r] = composite_core<S>(std::span<const S>(cache_.sigma).subspan(off, cnt),
                                       std::span<const Vec3<S>>(cache_.color).subspan(off, cnt),
                                       std::span<const S>(gdelta_).subspan(off, cnt),
                                       std::span<S>(gweight_).subspan(off, cnt),
                                       std::span<S>(gtrans_).subspan(off, cnt));
        off += cnt;
      }
      r0 = r1;
    }
  }

  /// Uniform-step marching of every ray against its grid; positions land in
  /// flat arrays indexed by per-ray offsets. Must stay in lockstep with
  /// march_positions().
  void march_all(std::span<const Ray<S>> rays, std::span<const OccupancyGrid* const> grids) {
    size_t n = rays.size();
    roff_.resize(n);
    rcnt_.assign(n, 0);
    rkept_.assign(n, 0);
    rte_.assign(n, S(0));
    rtx_.assign(n, S(0));
    mpos_.clear();
    mt_.clear();
    dt_ = cfg_.step(box_);
    for (size_t i = 0; i < n; ++i) {
      roff_[i] = static_cast<int>(mpos_.size());
      auto hit = intersect_aabb(rays[i], box_);
      if (!hit) continue;
      S t_enter = std::max(hit->first, rays[i].t_near);
      S t_exit = std::min(hit->second, rays[i].t_far);
      if (t_exit <= t_enter) continue;
      rte_[i] = t_enter;
      rtx_[i] = t_exit;
      long total = static_cast<long>((double(t_exit) - double(t_enter)) / double(dt_));
      int count = 0;
      for (long k = 0; k < total; ++k) {
        if (count >= cfg_.max_samples_per_ray) break;
        S t = t_enter + (S(k) + S(0.5)) * dt_;
        Vec3<S> p = rays[i].at(t);
        if (!grids[i]->is_occupied(p)) continue;
        mpos_.push_back(normalize_point(p, box_));  // the field lives on the unit cube
        mt_.push_back(t);
        ++count;
      }
      rcnt_[i] = count;
    }
  }

  /// Early-termination pass under fixed per-ray conditioning: density-only
  /// waves advance each ray's transmittance until it falls below the
  /// threshold; rkept_ is the per-ray kept prefix length.
  void wave_truncate_fixed(std::span<const int> parts) {
    size_t n = rcnt_.size();
    if (cfg_.term_transmittance <= 0) {
      rkept_ = rcnt_;
      return;
    }
    rT_.assign(n, 1.0);
    rdone_.assign(n, 0);
    rconsumed_.assign(n, 0);
    for (size_t i = 0; i < n; ++i)
      if (rcnt_[i] == 0) rdone_[i] = 1;
    for (;;) {
      wpos_.clear();
      wpart_.clear();
      wray_.clear();
      for (size_t i = 0; i < n; ++i) {
        if (rdone_[i]) continue;
        int take = std::min(kWaveSize, rcnt_[i] - rconsumed_[i]);
        for (int k = 0; k < take; ++k) {
          wpos_.push_back(mpos_[size_t(roff_[i] + rconsumed_[i] + k)]);
          wpart_.push_back(parts[i]);
          wray_.push_back(static_cast<int>(i));
        }
      }
      if (wpos_.empty()) break;
      model_->density_batch(std::span<const Vec3<S>>(wpos_), std::span<const int>(wpart_), wsigma_);
      size_t j = 0;
      while (j < wray_.size()) {
        size_t i = static_cast<size_t>(wray_[j]);
        while (j < wray_.size() && size_t(wray_[j]) == i) {
          rT_[i] *= std::exp(-double(wsigma_[j]) * double(dt_));
          ++rconsumed_[i];
          ++j;
          if (rT_[i] < cfg_.term_transmittance) {
            rkept_[i] = rconsumed_[i];
            rdone_[i] = 1;
            // skip the rest of this ray's wave entries
            while (j < wray_.size() && size_t(wray_[j]) == i) ++j;
            break;
          }
        }
        if (!rdone_[i] && rconsumed_[i] == rcnt_[i]) {
          rkept_[i] = rcnt_[i];
          rdone_[i] = 1;
        }
      }
    }
  }

  /// Termination pass for paired conditioning: a ray keeps samples until
  /// both conditionings are opaque.
  void wave_truncate_pair(std::span<const int> parts_a, std::span<const int> parts_b) {
    size_t n = rcnt_.size();
    if (cfg_.term_transmittance <= 0) {
      rkept_ = rcnt_;
      return;
    }
    rT_.assign(n, 1.0);
    rTb_.assign(n, 1.0);
    rdone_.assign(n, 0);
    rconsumed_.assign(n, 0);
    for (size_t i = 0; i < n; ++i)
      if (rcnt_[i] == 0) rdone_[i] = 1;
    for (;;) {
      wpos_.clear();
      wpart_.clear();
      wpart_b_.clear();
      wray_.clear();
      for (size_t i = 0; i < n; ++i) {
        if (rdone_[i]) continue;
        int take = std::min(kWaveSize, rcnt_[i] - rconsumed_[i]);
        for (int k = 0; k < take; ++k) {
          wpos_.push_back(mpos_[size_t(roff_[i] + rconsumed_[i] + k)]);
          wpart_.push_back(parts_a[i]);
          wpart_b_.push_back(parts_b[i]);
          wray_.push_back(static_cast<int>(i));
        }
      }
      if (wpos_.empty()) break;
      model_->density_batch(std::span<const Vec3<S>>(wpos_), std::span<const int>(wpart_), wsigma_);
      model_->density_batch(std::span<const Vec3<S>>(wpos_), std::span<const int>(wpart_b_), wsigma_b_);
      size_t j = 0;
      while (j < wray_.size()) {
        size_t i = static_cast<size_t>(wray_[j]);
        while (j < wray_.size() && size_t(wray_[j]) == i) {
          rT_[i] *= std::exp(-double(wsigma_[j]) * double(dt_));
          rTb_[i] *= std::exp(-double(wsigma_b_[j]) * double(dt_));
          ++rconsumed_[i];
          ++j;
          if (rT_[i] < cfg_.term_transmittance && rTb_[i] < cfg_.term_transmittance) {
            rkept_[i] = rconsumed_[i];
            rdone_[i] = 1;
            while (j < wray_.size() && size_t(wray_[j]) == i) ++j;
            break;
          }
        }
        if (!rdone_[i] && rconsumed_[i] == rcnt_[i]) {
          rkept_[i] = rcnt_[i];
          rdone_[i] = 1;
        }
      }
    }
  }

  /// Combined-state pass: evaluates the canonical density and every open
  /// part's density per position, records the dominant part in msel_, and
  /// advances transmittance with the selected density.
  void wave_select(const std::vector<int>& open_parts) {
    size_t n = rcnt_.size();
    msel_.assign(mpos_.size(), 0);
    rT_.assign(n, 1.0);
    rdone_.assign(n, 0);
    rconsumed_.assign(n, 0);
    bool terminate = cfg_.term_transmittance > 0;
    for (size_t i = 0; i < n; ++i)
      if (rcnt_[i] == 0) rdone_[i] = 1;
    for (;;) {
      wpos_.clear();
      wray_.clear();
      widx_.clear();
      for (size_t i = 0; i < n; ++i) {
        if (rdone_[i]) continue;
        int take = std::min(kWaveSize, rcnt_[i] - rconsumed_[i]);
        for (int k = 0; k < take; ++k) {
          wpos_.push_back(mpos_[size_t(roff_[i] + rconsumed_[i] + k)]);
          widx_.push_back(roff_[i] + rconsumed_[i] + k);
          wray_.push_back(static_cast<int>(i));
        }
      }
      if (wpos_.empty()) break;
      wpart_.assign(wpos_.size(), 0);
      model_->density_batch(std::span<const Vec3<S>>(wpos_), std::span<const int>(wpart_), wsigma_);
      wsigma_sel_ = wsigma_;
      wdiff_.assign(wpos_.size(), S(0));
      for (int part : open_parts) {
        wpart_.assign(wpos_.size(), part);
        model_->density_batch(std::span<const Vec3<S>>(wpos_), std::span<const int>(wpart_), wsigma_b_);
        for (size_t j = 0; j < wpos_.size(); ++j) {
          S diff = std::abs(wsigma_b_[j] - wsigma_[j]);
          if (diff > wdiff_[j]) {  // strict: ties keep the lower part index
            wdiff_[j] = diff;
            wsigma_sel_[j] = wsigma_b_[j];
            msel_[size_t(widx_[j])] = part;
          }
        }
      }
      for (size_t j = 0; j < wpos_.size(); ++j)
        if (double(wdiff_[j]) < FieldModel<S>::kTieEpsilon) {
          wsigma_sel_[j] = wsigma_[j];
          msel_[size_t(widx_[j])] = 0;
        }
      size_t j = 0;
      while (j < wray_.size()) {
        size_t i = static_cast<size_t>(wray_[j]);
        while (j < wray_.size() && size_t(wray_[j]) == i) {
          rT_[i] *= std::exp(-double(wsigma_sel_[j]) * double(dt_));
          ++rconsumed_[i];
          ++j;
          if (terminate && rT_[i] < cfg_.term_transmittance) {
            rkept_[i] = rconsumed_[i];
            rdone_[i] = 1;
            while (j < wray_.size() && size_t(wray_[j]) == i) ++j;
            break;
          }
        }
        if (!rdone_[i] && rconsumed_[i] == rcnt_[i]) {
          rkept_[i] = rcnt_[i];
          rdone_[i] = 1;
        }
      }
    }
  }

  /// Packs rays [r0, r1)'s kept samples into the group arrays. Conditioning
  /// comes from `parts` (per ray) or `sel` (per marched position).
  void gather_group(size_t r0, size_t r1, std::span<const int> parts,
                    std::span<const Ray<S>> rays, const std::vector<int>* sel) {
    gpos_.clear();
    gpart_.clear();
    gtime_.clear();
    gdir_.clear();
    bool dirs = model_->mlp_cfg.use_view_direction;
    for (size_t r = r0; r < r1; ++r) {
      for (int k = 0; k < rkept_[r]; ++k) {
        size_t idx = size_t(roff_[r] + k);
        gpos_.push_back(mpos_[idx]);
        gpart_.push_back(sel ? (*sel)[idx] : parts[r]);
        gtime_.push_back(mt_[idx]);
        if (dirs) gdir_.push_back(rays[r].direction);
      }
    }
    gdelta_.assign(gpos_.size(), dt_);
  }

  void prepare_group_buffers(size_t samples, bool with_grad) {
    gweight_.resize(samples);
    gtrans_.resize(samples);
    if (with_grad) {
      dweight_.resize(samples);
      dsigma_.assign(samples, S(0));
      dcolor_.assign(samples, Vec3<S>::Zero());
    }
  }

  const FieldModel<S>* model_;
  RenderConfig cfg_;
  Aabb<S> box_;
  S dt_ = 0;

  // march scratch
  std::vector<Vec3<S>> mpos_;
  std::vector<S> mt_;
  std::vector<int> roff_, rcnt_, rkept_;
  std::vector<S> rte_, rtx_;
  std::vector<int> msel_;

  // wave scratch
  std::vector<Vec3<S>> wpos_;
  std::vector<int> wpart_, wpart_b_, wray_, widx_;
  std::vector<S> wsigma_, wsigma_b_, wsigma_sel_, wdiff_;
  std::vector<double> rT_, rTb_;
  std::vector<std::uint8_t> rdone_;
  std::vector<int> rconsumed_;

  // group scratch
  std::vector<Vec3<S>> gpos_, gdir_;
  std::vector<int> gpart_;
  std::vector<S> gtime_, gdelta_, gweight_, gtrans_;
  std::vector<S> gweight_ref_, gtrans_ref_;
  typename FieldModel<S>::ForwardCache cache_, cache_ref_;
  std::vector<double> dweight_;
  std::vector<S> dsigma_;
  std::vector<Vec3<S>> dcolor_;

  // render_fixed helpers
  std::vector<int> fixed_parts_;
  std::vector<const OccupancyGrid*> single_grid_;
};

}  // namespace int3d
