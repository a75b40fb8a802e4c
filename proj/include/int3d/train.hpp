#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "int3d/common.hpp"
#include "int3d/field.hpp"
#include "int3d/gradsink.hpp"
#include "int3d/optim.hpp"
#include "int3d/renderer.hpp"
#include "int3d/scenes.hpp"

namespace int3d {

/// Training schedule; the defaults are the published recipe (8192 rays,
/// 1000-iteration epochs, 2 canonical + 13 decomposition epochs).
struct TrainSchedule {
  int rays_per_iter = 8192;
  int iters_per_epoch = 1000;
  int canonical_epochs = 2;
  int decomposition_epochs = 13;
  int grid_update_every = 16;
  std::uint64_t seed = 0;

  void validate() const {
    require(rays_per_iter > 0 && iters_per_epoch > 0 && grid_update_every > 0,
            "TrainSchedule: counts must be positive");
    require(canonical_epochs >= 0 && decomposition_epochs >= 0,
            "TrainSchedule: epochs must be non-negative");
  }
};

struct TrainOptions {
  OccupancyGrid::Mode grid_mode = OccupancyGrid::Mode::Independent;
  bool msr_enabled = true;
  int msr_rays_per_iter = 1024;
  bool freeze_canonical_in_stage2 = false;
  int grid_resolution = 128;
  // Desk-scale default: faster decay clears the initial dense occupancy in a
  // few updates once the field empties, instead of ~14 geometric steps. The
  // OccupancyGrid type itself defaults to the conventional 0.95.
  double grid_decay = 0.6;
  double grid_tau = 1e-2;
  int workers = 0;      // 0 = hardware concurrency
  int slots = 8;        // fixed work decomposition; results do not depend on workers
  RenderConfig render;
  LossWeights weights;
  AdamConfig adam;
  HashGridConfig hash;
  DiscrepancyConfig disc;
  MlpConfig mlp;

  int resolved_workers() const { return workers > 0 ? workers : default_workers(); }
};

/// Mean over the batch of the squared L2 color error.
template <typename S>
double mse_loss(std::span<const Vec3<S>> predicted, std::span<const Vec3<S>> truth) {
  require(predicted.size() == truth.size(), "mse_loss: batch shape mismatch");
  if (predicted.empty()) return 0;
  double acc = 0;
  for (size_t i = 0; i < predicted.size(); ++i)
    acc += (predicted[i].template cast<double>() - truth[i].template cast<double>()).squaredNorm();
  return acc / double(predicted.size());
}

/// All loss components of one objective evaluation, unweighted.
struct LossBreakdown {
  double mse = 0, distortion = 0, opacity = 0, consistency = 0, smoothness = 0, msr = 0;

  double total(const LossWeights& w) const {
    return mse + w.distortion * distortion + w.opacity * opacity + w.consistency * consistency +
           w.smoothness * smoothness + w.msr * msr;
  }
};

/// A fully materialized training batch: supervised rays, cross-state
/// regularization rays, and the state whose tensors are regularized.
template <typename S>
struct ObjectiveBatch {
  std::vector<Ray<S>> rays;
  std::vector<Vec3<S>> gt;
  std::vector<int> parts;
  std::vector<const OccupancyGrid*> grids;

  std::vector<Ray<S>> msr_rays;
  std::vector<int> msr_parts_ref, msr_parts_opt;
  std::vector<const OccupancyGrid*> msr_grids;
  /// When non-empty, the detached reference colors are these constants
  /// instead of fresh renders; a gradient check must freeze them so the
  /// checked loss is a plain function of the parameters.
  std::vector<Vec3<S>> msr_fixed_ref;

  int reg_state = 0;  // tensors of this state receive consistency + smoothness
};

/// Renders and stores the detached cross-state references at the current
/// parameters (the stop-gradient constants of the objective).
template <typename S>
void freeze_msr_reference(const FieldModel<S>& model, ObjectiveBatch<S>& batch,
                          const RenderConfig& cfg, const Aabb<S>& box) {
  batch.msr_fixed_ref.clear();
  if (batch.msr_rays.empty()) return;
  RayPipeline<S> pipeline(model, cfg, box);
  LossWeights w;
  int* no_sink = nullptr;
  (void)no_sink;
  StoreGradSink<S>* null_sink = nullptr;
  pipeline.train_msr(std::span<const Ray<S>>(batch.msr_rays),
                     std::span<const int>(batch.msr_parts_ref),
                     std::span<const int>(batch.msr_parts_opt),
                     std::span<const OccupancyGrid* const>(batch.msr_grids),
                     batch.msr_rays.size(), w, false, null_sink, nullptr, &batch.msr_fixed_ref);
}

/// Evaluates the complete objective (photometric + rendering losses +
/// tensor regularizers + cross-state alignment) and, when requested, its
/// gradient. Single-threaded; the same code the trainer runs per slot.
template <typename S, typename Sink>
LossBreakdown evaluate_objective(const FieldModel<S>& model, const ObjectiveBatch<S>& batch,
                                 const LossWeights& w, const RenderConfig& cfg,
                                 const Aabb<S>& box, bool with_grad, Sink& sink) {
  RayPipeline<S> pipeline(model, cfg, box);
  LossBreakdown out;
  if (!batch.rays.empty()) {
    auto st = pipeline.train_main(std::span<const Ray<S>>(batch.rays),
                                  std::span<const Vec3<S>>(batch.gt),
                                  std::span<const int>(batch.parts),
                                  std::span<const OccupancyGrid* const>(batch.grids),
                                  batch.rays.size(), w, with_grad, &sink);
    out.mse = st.mse;
    out.distortion = st.distortion;
    out.opacity = st.opacity;
  }
  if (!batch.msr_rays.empty()) {
    const std::vector<Vec3<S>>* ref =
        batch.msr_fixed_ref.empty() ? nullptr : &batch.msr_fixed_ref;
    auto st = pipeline.train_msr(std::span<const Ray<S>>(batch.msr_rays),
                                 std::span<const int>(batch.msr_parts_ref),
                                 std::span<const int>(batch.msr_parts_opt),
                                 std::span<const OccupancyGrid* const>(batch.msr_grids),
                                 batch.msr_rays.size(), w, with_grad, &sink, ref);
    out.msr = st.msr;
  }
  if (batch.reg_state > 0) {
    int i = batch.reg_state;
    auto tx = model.disc_view(i, 'x');
    auto ty = model.disc_view(i, 'y');
    auto tz = model.disc_view(i, 'z');
    out.consistency = consistency_loss(tx, ty, tz);
    out.smoothness = smoothness_loss(model.disc_cfg, tx, ty, tz);
    if (with_grad) {
      consistency_backward(S(w.consistency), tx, ty, tz, sink.disc_grad(i, 'x'),
                           sink.disc_grad(i, 'y'), sink.disc_grad(i, 'z'));
      smoothness_backward(model.disc_cfg, S(w.smoothness), tx, ty, tz,
                          sink.disc_grad(i, 'x'), sink.disc_grad(i, 'y'), sink.disc_grad(i, 'z'));
    }
  }
  return out;
}

/// Occupancy grids of one trained model. In Shared mode `canonical` is the
/// single grid every state marches; in Independent mode each trainable
/// state has its own and combination states march the union.
struct GridSet {
  OccupancyGrid::Mode mode = OccupancyGrid::Mode::Independent;
  OccupancyGrid canonical;
  std::vector<OccupancyGrid> states;  // per part, 1-based part -> states[part-1]

  const OccupancyGrid& for_part(int part) const {
    if (mode == OccupancyGrid::Mode::Shared || part == 0 || states.empty()) return canonical;
    return states[static_cast<size_t>(part - 1)];
  }

  OccupancyGrid for_state(const StateId& state) const {
    if (mode == OccupancyGrid::Mode::Shared || state.popcount() == 0 || states.empty())
      return canonical;
    std::vector<const OccupancyGrid*> gs{&canonical};
    for (int part : state.open_parts()) gs.push_back(&states[static_cast<size_t>(part - 1)]);
    return union_grids(std::span<const OccupancyGrid* const>(gs));
  }

  /// Bytes of density EMA and occupancy storage across all grids.
  size_t memory_bytes() const {
    auto one = [](const OccupancyGrid& g) {
      return g.density_ema.size() * sizeof(float) + g.occupied.size();
    };
    size_t total = one(canonical);
    for (const auto& g : states) total += one(g);
    return total;
  }
};

/// Rebuilds occupancy deterministically from a trained field (grids are not
/// part of the checkpoint format): a few max-rule sweeps per state.
GridSet rebuild_grids(const FieldModel<float>& model, OccupancyGrid::Mode mode, int resolution,
                      double decay, double tau, const Aabb<double>& domain, int workers,
                      int sweeps = 4);

/// Everything the CLI persists next to the spec checkpoint format so a
/// checkpoint is self-describing (scene, dataset path, model shape, grid
/// strategy).
struct RunMeta {
  std::string scene;
  std::string data_dir;
  int n = 0;
  int width = 0, height = 0;
  OccupancyGrid::Mode grid_mode = OccupancyGrid::Mode::Independent;
  bool msr_enabled = true;
  bool freeze_canonical = false;
  std::uint64_t seed = 0;
  int grid_resolution = 128;
  // Desk-scale default: faster decay clears the initial dense occupancy in a
  // few updates once the field empties, instead of ~14 geometric steps. The
  // OccupancyGrid type itself defaults to the conventional 0.95.
  double grid_decay = 0.6;
  double grid_tau = 1e-2;
  HashGridConfig hash;
  DiscrepancyConfig disc;
  MlpConfig mlp;
  RenderConfig render;
  LossWeights weights;
  TrainSchedule schedule;
};

void save_run_meta(const RunMeta& meta, const std::string& path);
RunMeta load_run_meta(const std::string& path);

/// A loaded checkpoint: parameters, bound field model, and rebuilt grids.
struct ModelBundle {
  RunMeta meta;
  std::unique_ptr<ParamStore<float>> store;
  FieldModel<float> model;
  GridSet grids;
};

ModelBundle load_model_bundle(const std::string& checkpoint_path, int workers);

/// Two-stage trainer over a generated dataset.
class Trainer {
 public:
  Trainer(const Dataset& dataset, const TrainSchedule& schedule, const TrainOptions& options);

  void run_stage1();
  void run_stage2();

  /// Single iterations, exposed for tests and instrumentation.
  void stage1_iteration(int iter);
  void stage2_iteration(int iter);

  /// Replaces parameters and grids with a snapshot (e.g. a finished stage 1)
  /// so several stage-2 variants can continue from identical state.
  void restore(const ParamStore<float>& store, const GridSet& grids, std::uint64_t update_counter);

  void save(const std::string& checkpoint_path) const;

  ParamStore<float>& store() { return *store_; }
  const ParamStore<float>& store() const { return *store_; }
  FieldModel<float>& model() { return model_; }
  const FieldModel<float>& model() const { return model_; }
  GridSet& grids() { return grids_; }
  const Dataset& dataset() const { return *dataset_; }
  const TrainOptions& options() const { return options_; }
  const Aabb<float>& world() const { return world_; }

  /// Per-iteration batch MSE (for convergence regressions) and the CSV rows.
  const std::vector<double>& iteration_mse() const { return iteration_mse_; }

  struct LogRow {
    int iter = 0;
    int stage = 1;
    int state = 0;
    LossBreakdown losses;
    double total = 0;
    double rays_per_s = 0;
    double occupied_fraction = 0;
  };
  const std::vector<LogRow>& log() const { return log_; }
  void set_log_path(const std::string& path) { log_path_ = path; }

  /// Drawn decomposition state of iteration `iter` (stage 2 stream).
  int draw_state(int iter) const;

  RunMeta run_meta() const;

  std::uint64_t total_marched_samples() const { return marched_samples_; }
  std::uint64_t total_rays() const { return rays_traced_; }
  std::uint64_t update_counter() const { return update_counter_; }

 private:
  struct MainBatch {
    std::vector<Ray<float>> rays;
    std::vector<Vec3<float>> gt;
    std::vector<int> parts;
    std::vector<const OccupancyGrid*> grids;
  };
  struct MsrBatchRays {
    std::vector<Ray<float>> rays;
    std::vector<int> parts_ref, parts_opt;
    std::vector<const OccupancyGrid*> grids;
  };

  void assemble_main(int iter, int stage, int state, MainBatch& out) const;
  void assemble_msr(int iter, int state, MsrBatchRays& out) const;
  void run_iteration(int iter, int stage, int state);
  void update_grids(int stage, int state);
  void append_log(int iter, int stage, int state, const LossBreakdown& bd, double seconds);
  void flush_log();

  const Dataset* dataset_;
  TrainSchedule schedule_;
  TrainOptions options_;
  Aabb<float> world_;
  Aabb<double> world_d_;

  std::unique_ptr<ParamStore<float>> store_;
  FieldModel<float> model_;
  GridSet grids_;
  std::vector<std::unique_ptr<RayPipeline<float>>> pipelines_;  // one per slot
  std::vector<GradBuffer<float>> slot_grads_;

  std::vector<std::vector<std::vector<int>>> mask_pixels_;  // [frame][part-1] -> flat pixels
  std::vector<double> iteration_mse_;
  std::vector<LogRow> log_;
  std::string log_path_;
  std::uint64_t update_counter_ = 0;
  std::uint64_t marched_samples_ = 0;
  std::uint64_t rays_traced_ = 0;
  bool msr_inert_logged_ = false;
};

}  // namespace int3d
