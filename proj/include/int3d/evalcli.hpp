#pragma once

#include <string>
#include <vector>

#include "int3d/image.hpp"
#include "int3d/train.hpp"

namespace int3d {

/// Peak signal-to-noise ratio over linear [0,1] values, all pixels and
/// channels; identical images report the 99 dB cap.
double psnr(const Image& a, const Image& b);

/// Structural similarity: channel-mean grayscale, 11x11 Gaussian window
/// (sigma 1.5), stabilizers (0.01)^2 and (0.03)^2, mean over valid pixels.
double ssim(const Image& a, const Image& b);

/// Renders one view of a state. States with at most one open part use the
/// single-conditioning query path; combination states use per-sample
/// selection. Deterministic regardless of worker count.
Image render_view(const FieldModel<float>& model, const GridSet& grids,
                  const Camera<double>& camera, const StateId& state, const RenderConfig& cfg,
                  int workers);

struct StateMetrics {
  std::string state;
  bool eval = false;
  int frames = 0;
  double psnr = 0;
  double ssim = 0;
};

struct MetricsReport {
  std::string scene;
  std::string split;
  std::vector<StateMetrics> per_state;
  int train_frames = 0, eval_frames = 0;
  double train_mean_psnr = 0, train_mean_ssim = 0;
  double eval_mean_psnr = 0, eval_mean_ssim = 0;
};

/// Renders every frame of the chosen split ("train", "eval" or "all"),
/// compares against the dataset images, and aggregates per-state and
/// per-split means. Read-only with respect to the checkpoint.
MetricsReport cmd_eval(const Dataset& dataset, const FieldModel<float>& model,
                       const GridSet& grids, const RenderConfig& cfg, const std::string& split,
                       int workers);

void save_metrics_report(const MetricsReport& report, const std::string& path);
std::string format_metrics_table(const MetricsReport& report);

struct BenchModeReport {
  size_t memory_bytes = 0;
  double wall_seconds_per_epoch = 0;
  double mean_samples_per_ray = 0;
};

struct BenchReport {
  std::string scene;
  int epochs = 0;
  BenchModeReport shared;
  BenchModeReport independent;
};

/// Grid-strategy benchmark: one canonical stage (shared by both runs), then
/// the decomposition stage under the Shared and the Independent occupancy
/// strategy with the same seed, recording exact buffer memory, wall time per
/// epoch and mean marched samples per ray.
BenchReport cmd_bench(const Dataset& dataset, int epochs, const TrainSchedule& base_schedule,
                      const TrainOptions& base_options);

void save_bench_report(const BenchReport& report, const std::string& path);
std::string format_bench_table(const BenchReport& report);

/// Mean cross-state L1 between paired renders over inactive-part masks,
/// measured on a fixed deterministic subset of views and pixels. The
/// post-training counterpart of the cross-state regularizer.
double msr_alignment_metric(const Dataset& dataset, const FieldModel<float>& model,
                            const GridSet& grids, const RenderConfig& cfg, int views_per_state = 5,
                            int max_pixels_per_view = 512);

}  // namespace int3d
