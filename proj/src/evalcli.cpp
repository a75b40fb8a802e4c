#include "int3d/evalcli.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace int3d {

using nlohmann::json;

double psnr(const Image& a, const Image& b) {
  require(a.width == b.width && a.height == b.height && a.channels == b.channels,
          "psnr: image dimensions differ");
  require(!a.data.empty(), "psnr: empty image");
  double acc = 0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    double d = double(a.data[i]) - double(b.data[i]);
    acc += d * d;
  }
  double mse = acc / double(a.data.size());
  if (mse <= 0) return 99.0;
  return std::min(99.0, -10.0 * std::log10(mse));
}

namespace {

std::vector<double> to_gray(const Image& img) {
  std::vector<double> g(img.pixel_count());
  if (img.channels == 1) {
    for (size_t i = 0; i < g.size(); ++i) g[i] = img.data[i];
  } else {
    for (size_t i = 0; i < g.size(); ++i) {
      const float* px = img.data.data() + i * size_t(img.channels);
      double acc = 0;
      for (int c = 0; c < img.channels; ++c) acc += px[c];
      g[i] = acc / img.channels;
    }
  }
  return g;
}

}  // namespace

double ssim(const Image& a, const Image& b) {
  require(a.width == b.width && a.height == b.height, "ssim: image dimensions differ");
  constexpr int kWin = 11;
  constexpr double kSigma = 1.5;
  require(a.width >= kWin && a.height >= kWin, "ssim: image smaller than the 11x11 window");
  constexpr double c1 = 0.01 * 0.01;  // (0.01 * range)^2, range = 1
  constexpr double c2 = 0.03 * 0.03;

  double kernel[kWin][kWin];
  double ksum = 0;
  for (int v = 0; v < kWin; ++v)
    for (int u = 0; u < kWin; ++u) {
      double du = u - kWin / 2, dv = v - kWin / 2;
      kernel[v][u] = std::exp(-(du * du + dv * dv) / (2 * kSigma * kSigma));
      ksum += kernel[v][u];
    }
  for (auto& row : kernel)
    for (double& k : row) k /= ksum;

  std::vector<double> ga = to_gray(a), gb = to_gray(b);
  int w = a.width, h = a.height;
  double total = 0;
  long count = 0;
  for (int y = 0; y + kWin <= h; ++y)
    for (int x = 0; x + kWin <= w; ++x) {
      double mu1 = 0, mu2 = 0, m11 = 0, m22 = 0, m12 = 0;
      for (int v = 0; v < kWin; ++v)
        for (int u = 0; u < kWin; ++u) {
          double k = kernel[v][u];
          double p1 = ga[size_t(y + v) * w + size_t(x + u)];
          double p2 = gb[size_t(y + v) * w + size_t(x + u)];
          mu1 += k * p1;
          mu2 += k * p2;
          m11 += k * p1 * p1;
          m22 += k * p2 * p2;
          m12 += k * p1 * p2;
        }
      double var1 = m11 - mu1 * mu1;
      double var2 = m22 - mu2 * mu2;
      double cov = m12 - mu1 * mu2;
      double s = ((2 * mu1 * mu2 + c1) * (2 * cov + c2)) /
                 ((mu1 * mu1 + mu2 * mu2 + c1) * (var1 + var2 + c2));
      total += s;
      ++count;
    }
  return total / double(count);
}

Image render_view(const FieldModel<float>& model, const GridSet& grids,
                  const Camera<double>& camera, const StateId& state, const RenderConfig& cfg,
                  int workers) {
  require(state.n == model.n_parts, "render_view: state width does not match the model");
  Aabb<float> world{Vec3f(-1, -1, -1), Vec3f(1, 1, 1)};
  OccupancyGrid combined_grid;
  const OccupancyGrid* grid = nullptr;
  bool combined = state.popcount() >= 2;
  if (combined) {
    combined_grid = grids.for_state(state);
    grid = &combined_grid;
  } else {
    grid = &grids.for_part(state.single_part());
  }
  Image img(camera.width, camera.height, 3);
  int bands = std::min(camera.height, 16);
  parallel_slots(bands, workers, [&](int band) {
    int y0 = band * camera.height / bands;
    int y1 = (band + 1) * camera.height / bands;
    if (y1 <= y0) return;
    RayPipeline<float> pipeline(model, cfg, world);
    size_t n = size_t(y1 - y0) * size_t(camera.width);
    std::vector<Ray<float>> rays(n);
    size_t j = 0;
    for (int y = y0; y < y1; ++y)
      for (int x = 0; x < camera.width; ++x, ++j) {
        Ray<double> rd = pixel_to_ray(camera, double(x) + 0.5, double(y) + 0.5);
        rays[j].origin = rd.origin.cast<float>();
        rays[j].direction = rd.direction.cast<float>();
      }
    std::vector<RenderResult<float>> results(n);
    if (combined)
      pipeline.render_combined(std::span<const Ray<float>>(rays), state, *grid,
                               std::span<RenderResult<float>>(results));
    else
      pipeline.render_fixed(std::span<const Ray<float>>(rays), state.single_part(), *grid,
                            std::span<RenderResult<float>>(results));
    j = 0;
    for (int y = y0; y < y1; ++y)
      for (int x = 0; x < camera.width; ++x, ++j)
        for (int c = 0; c < 3; ++c) img.at(x, y, c) = std::min(1.0f, std::max(0.0f, results[j].color[c]));
  });
  return img;
}

MetricsReport cmd_eval(const Dataset& dataset, const FieldModel<float>& model,
                       const GridSet& grids, const RenderConfig& cfg, const std::string& split,
                       int workers) {
  require(dataset.n() == model.n_parts, "cmd_eval: dataset and checkpoint disagree on part count");
  require(split == "train" || split == "eval" || split == "all",
          "cmd_eval: split must be train, eval or all");
  std::vector<int> selected;
  for (size_t f = 0; f < dataset.manifest.frames.size(); ++f) {
    bool ev = dataset.manifest.frames[f].eval;
    if (split == "all" || (split == "eval") == ev) selected.push_back(static_cast<int>(f));
  }
  require(!selected.empty(), "cmd_eval: split selection is empty");

  struct Acc {
    bool eval = false;
    int frames = 0;
    double psnr_sum = 0, ssim_sum = 0;
  };
  std::map<std::uint32_t, Acc> per_state;
  for (int f : selected) {
    const FrameRecord& rec = dataset.manifest.frames[static_cast<size_t>(f)];
    Image rendered = render_view(model, grids, rec.camera, rec.state, cfg, workers);
    double p = psnr(rendered, dataset.images[static_cast<size_t>(f)]);
    double s = ssim(rendered, dataset.images[static_cast<size_t>(f)]);
    Acc& acc = per_state[rec.state.bits];
    acc.eval = rec.eval;
    ++acc.frames;
    acc.psnr_sum += p;
    acc.ssim_sum += s;
  }

  MetricsReport report;
  report.scene = dataset.manifest.scene;
  report.split = split;
  double tp = 0, ts = 0, ep = 0, es = 0;
  for (const auto& [bits, acc] : per_state) {
    StateMetrics sm;
    sm.state = StateId{bits, dataset.n()}.to_bitstring();
    sm.eval = acc.eval;
    sm.frames = acc.frames;
    sm.psnr = acc.psnr_sum / acc.frames;
    sm.ssim = acc.ssim_sum / acc.frames;
    report.per_state.push_back(sm);
    if (acc.eval) {
      report.eval_frames += acc.frames;
      ep += acc.psnr_sum;
      es += acc.ssim_sum;
    } else {
      report.train_frames += acc.frames;
      tp += acc.psnr_sum;
      ts += acc.ssim_sum;
    }
  }
  if (report.train_frames > 0) {
    report.train_mean_psnr = tp / report.train_frames;
    report.train_mean_ssim = ts / report.train_frames;
  }
  if (report.eval_frames > 0) {
    report.eval_mean_psnr = ep / report.eval_frames;
    report.eval_mean_ssim = es / report.eval_frames;
  }
  return report;
}

void save_metrics_report(const MetricsReport& report, const std::string& path) {
  json j;
  j["version"] = 1;
  j["scene"] = report.scene;
  j["split"] = report.split;
  json states = json::array();
  for (const auto& sm : report.per_state)
    states.push_back({{"state", sm.state},
                      {"split", sm.eval ? "eval" : "train"},
                      {"frames", sm.frames},
                      {"psnr", sm.psnr},
                      {"ssim", sm.ssim}});
  j["per_state"] = states;
  j["train_frames"] = report.train_frames;
  j["eval_frames"] = report.eval_frames;
  j["train_mean_psnr"] = report.train_mean_psnr;
  j["train_mean_ssim"] = report.train_mean_ssim;
  j["eval_mean_psnr"] = report.eval_mean_psnr;
  j["eval_mean_ssim"] = report.eval_mean_ssim;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("save_metrics_report: cannot open " + path);
  out << j.dump(1) << "\n";
  if (!out) throw IoError("save_metrics_report: write failed " + path);
}

std::string format_metrics_table(const MetricsReport& report) {
  std::ostringstream os;
  char buf[160];
  os << "scene " << report.scene << ", split " << report.split << "\n";
  os << "state      split  frames    PSNR dB      SSIM\n";
  for (const auto& sm : report.per_state) {
    std::snprintf(buf, sizeof(buf), "%-10s %-6s %6d %10.3f %9.4f\n", sm.state.c_str(),
                  sm.eval ? "eval" : "train", sm.frames, sm.psnr, sm.ssim);
    os << buf;
  }
  if (report.train_frames > 0) {
    std::snprintf(buf, sizeof(buf), "train mean (%d frames): PSNR %.3f dB, SSIM %.4f\n",
                  report.train_frames, report.train_mean_psnr, report.train_mean_ssim);
    os << buf;
  }
  if (report.eval_frames > 0) {
    std::snprintf(buf, sizeof(buf), "eval mean  (%d frames): PSNR %.3f dB, SSIM %.4f\n",
                  report.eval_frames, report.eval_mean_psnr, report.eval_mean_ssim);
    os << buf;
  }
  return os.str();
}

BenchReport cmd_bench(const Dataset& dataset, int epochs, const TrainSchedule& base_schedule,
                      const TrainOptions& base_options) {
  require(epochs > 0, "cmd_bench: epochs must be positive");
  BenchReport report;
  report.scene = dataset.manifest.scene;
  report.epochs = epochs;

  TrainSchedule sched = base_schedule;
  sched.canonical_epochs = 1;  // one canonical epoch feeds both timed runs
  sched.decomposition_epochs = epochs;

  TrainOptions opt_shared = base_options;
  opt_shared.grid_mode = OccupancyGrid::Mode::Shared;
  Trainer shared_trainer(dataset, sched, opt_shared);
  shared_trainer.run_stage1();
  ParamStore<float> snapshot = shared_trainer.store();
  GridSet grid_snapshot = shared_trainer.grids();
  std::uint64_t counter = shared_trainer.update_counter();

  auto run_mode = [&](Trainer& trainer) {
    std::uint64_t rays0 = trainer.total_rays();
    std::uint64_t samples0 = trainer.total_marched_samples();
    auto t0 = std::chrono::steady_clock::now();
    trainer.run_stage2();
    auto t1 = std::chrono::steady_clock::now();
    BenchModeReport m;
    m.wall_seconds_per_epoch = std::chrono::duration<double>(t1 - t0).count() / epochs;
    std::uint64_t rays = trainer.total_rays() - rays0;
    std::uint64_t samples = trainer.total_marched_samples() - samples0;
    m.mean_samples_per_ray = rays > 0 ? double(samples) / double(rays) : 0.0;
    size_t params = trainer.store().total_params();
    m.memory_bytes = params * 3 * sizeof(float) + trainer.grids().memory_bytes();
    return m;
  };

  report.shared = run_mode(shared_trainer);

  TrainOptions opt_indep = base_options;
  opt_indep.grid_mode = OccupancyGrid::Mode::Independent;
  Trainer indep_trainer(dataset, sched, opt_indep);
  indep_trainer.restore(snapshot, grid_snapshot, counter);
  report.independent = run_mode(indep_trainer);
  return report;
}

void save_bench_report(const BenchReport& report, const std::string& path) {
  json j;
  j["version"] = 1;
  j["scene"] = report.scene;
  j["epochs"] = report.epochs;
  auto mode_json = [](const BenchModeReport& m) {
    return json{{"memory_bytes", m.memory_bytes},
                {"wall_seconds_per_epoch", m.wall_seconds_per_epoch},
                {"mean_samples_per_ray", m.mean_samples_per_ray}};
  };
  j["shared"] = mode_json(report.shared);
  j["independent"] = mode_json(report.independent);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("save_bench_report: cannot open " + path);
  out << j.dump(1) << "\n";
  if (!out) throw IoError("save_bench_report: write failed " + path);
}

std::string format_bench_table(const BenchReport& report) {
  std::ostringstream os;
  char buf[200];
  os << "scene " << report.scene << ", " << report.epochs << " decomposition epoch(s)\n";
  os << "strategy      memory MB   s/epoch   samples/ray\n";
  auto row = [&](const char* name, const BenchModeReport& m) {
    std::snprintf(buf, sizeof(buf), "%-12s %10.2f %9.1f %12.2f\n", name,
                  double(m.memory_bytes) / (1024.0 * 1024.0), m.wall_seconds_per_epoch,
                  m.mean_samples_per_ray);
    os << buf;
  };
  row("shared", report.shared);
  row("independent", report.independent);
  return os.str();
}

double msr_alignment_metric(const Dataset& dataset, const FieldModel<float>& model,
                            const GridSet& grids, const RenderConfig& cfg, int views_per_state,
                            int max_pixels_per_view) {
  int n = dataset.n();
  require(n >= 2, "msr_alignment_metric: needs at least two movable parts");
  Aabb<float> world{Vec3f(-1, -1, -1), Vec3f(1, 1, 1)};
  RayPipeline<float> pipeline(model, cfg, world);
  StoreGradSink<float>* no_sink = nullptr;
  double total = 0;
  std::uint64_t count = 0;
  int w = dataset.width();
  for (int i = 1; i <= n; ++i) {
    for (int dir = 0; dir < 2; ++dir) {
      int a = dir == 0 ? 0 : i;
      int b = dir == 0 ? i : 0;
      std::uint32_t a_bits = a == 0 ? 0u : (1u << (a - 1));
      const auto& frames = dataset.train_frames(a_bits);
      int step = std::max<size_t>(1, frames.size() / size_t(views_per_state));
      for (size_t fi = 0; fi < frames.size(); fi += size_t(step)) {
        int frame = frames[fi];
        for (int j = 1; j <= n; ++j) {
          if (j == i) continue;
          auto it = dataset.masks[static_cast<size_t>(frame)].find(j);
          if (it == dataset.masks[static_cast<size_t>(frame)].end()) continue;
          const auto& bits = it->second;
          std::vector<Ray<float>> rays;
          std::vector<int> pa, pb;
          std::vector<const OccupancyGrid*> gs;
          size_t mask_count = 0;
          for (size_t k = 0; k < bits.size(); ++k) mask_count += bits[k];
          size_t stride = std::max<size_t>(1, mask_count / size_t(max_pixels_per_view));
          size_t seen = 0;
          for (size_t k = 0; k < bits.size(); ++k) {
            if (!bits[k]) continue;
            if (seen++ % stride != 0) continue;
            int px = static_cast<int>(k) % w, py = static_cast<int>(k) / w;
            Ray<double> rd =
                pixel_to_ray(dataset.manifest.frames[static_cast<size_t>(frame)].camera,
                             double(px) + 0.5, double(py) + 0.5);
            Ray<float> rf;
            rf.origin = rd.origin.cast<float>();
            rf.direction = rd.direction.cast<float>();
            rays.push_back(rf);
            pa.push_back(a);
            pb.push_back(b);
            gs.push_back(&grids.for_part(a));
          }
          if (rays.empty()) continue;
          LossWeights w1;
          auto st = pipeline.train_msr(std::span<const Ray<float>>(rays), std::span<const int>(pa),
                                       std::span<const int>(pb),
                                       std::span<const OccupancyGrid* const>(gs), rays.size(), w1,
                                       false, no_sink);
          total += st.msr * double(rays.size());
          count += rays.size();
        }
      }
    }
  }
  return count > 0 ? total / double(count) : 0.0;
}

}  // namespace int3d
