#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "int3d/evalcli.hpp"
#include "int3d/scenes.hpp"
#include "int3d/train.hpp"

namespace fs = std::filesystem;
using namespace int3d;

namespace {

int run(int argc, char** argv) {
  CLI::App app{"int3d: state-conditioned neural fields for interactive objects"};
  app.require_subcommand(1);
  app.fallthrough();
  int threads = 0;
  app.add_option("--threads", threads, "worker threads (0 = hardware)")->capture_default_str();

  // gen-scene
  auto* gen = app.add_subcommand("gen-scene", "generate a synthetic dataset with ground truth");
  std::string gen_scene, gen_out;
  double jitter_deg = 0, jitter_pos = 0;
  std::uint64_t gen_seed = 0;
  int gen_train_views = 0, gen_eval_views = 0, gen_size = 0;
  gen->add_option("--scene", gen_scene, "cabinet2, drawer3 or vitrine2")->required();
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--jitter-deg", jitter_deg, "per-state trajectory rotation error, degrees");
  gen->add_option("--jitter-pos", jitter_pos, "per-state trajectory translation error, world units");
  gen->add_option("--seed", gen_seed, "generation seed");
  gen->add_option("--train-views", gen_train_views, "override train views per state");
  gen->add_option("--eval-views", gen_eval_views, "override eval views per state");
  gen->add_option("--size", gen_size, "override square image size");

  // train
  auto* train = app.add_subcommand("train", "two-stage training on a generated dataset");
  std::string train_data, train_out, grid_mode = "independent", msr = "on", train_log;
  std::uint64_t train_seed = 0;
  bool freeze_canonical = false;
  TrainSchedule sched;
  TrainOptions opts;
  train->add_option("--data", train_data, "dataset directory")->required();
  train->add_option("--out", train_out, "checkpoint output path")->required();
  train->add_option("--grid", grid_mode, "occupancy strategy: shared|independent")
      ->check(CLI::IsMember({"shared", "independent"}))
      ->capture_default_str();
  train->add_option("--msr", msr, "mutual state regularization: on|off")
      ->check(CLI::IsMember({"on", "off"}))
      ->capture_default_str();
  train->add_option("--seed", train_seed, "training seed")->capture_default_str();
  train->add_flag("--freeze-canonical", freeze_canonical,
                  "freeze hash grid and MLP during the decomposition stage");
  train->add_option("--rays-per-iter", sched.rays_per_iter)->capture_default_str();
  train->add_option("--iters-per-epoch", sched.iters_per_epoch)->capture_default_str();
  train->add_option("--canonical-epochs", sched.canonical_epochs)->capture_default_str();
  train->add_option("--decomp-epochs", sched.decomposition_epochs)->capture_default_str();
  train->add_option("--grid-update-every", sched.grid_update_every)->capture_default_str();
  train->add_option("--msr-rays", opts.msr_rays_per_iter)->capture_default_str();
  train->add_option("--grid-res", opts.grid_resolution)->capture_default_str();
  train->add_option("--grid-decay", opts.grid_decay)->capture_default_str();
  train->add_option("--grid-tau", opts.grid_tau)->capture_default_str();
  train->add_option("--log", train_log, "training CSV log path (default <ckpt>.train.csv)");

  // render
  auto* render = app.add_subcommand("render", "render one view of any state from a checkpoint");
  std::string render_ckpt, render_state, render_out;
  int render_view_idx = 0;
  render->add_option("--ckpt", render_ckpt, "checkpoint path")->required();
  render->add_option("--state", render_state, "state bitstring, part 1 leftmost (e.g. 11)")
      ->required();
  render->add_option("--view", render_view_idx, "view index")->capture_default_str();
  render->add_option("--out", render_out, "output PNG")->required();

  // eval
  auto* eval = app.add_subcommand("eval", "PSNR/SSIM evaluation against dataset ground truth");
  std::string eval_data, eval_ckpt, eval_split = "all", eval_out;
  eval->add_option("--data", eval_data, "dataset directory")->required();
  eval->add_option("--ckpt", eval_ckpt, "checkpoint path")->required();
  eval->add_option("--split", eval_split, "train|eval|all")
      ->check(CLI::IsMember({"train", "eval", "all"}))
      ->capture_default_str();
  eval->add_option("--out", eval_out, "JSON report path")->required();

  // bench
  auto* bench = app.add_subcommand("bench", "occupancy-grid strategy benchmark");
  std::string bench_data, bench_out;
  int bench_epochs = 1;
  std::uint64_t bench_seed = 0;
  bench->add_option("--data", bench_data, "dataset directory")->required();
  bench->add_option("--epochs", bench_epochs, "decomposition epochs per strategy")->required();
  bench->add_option("--out", bench_out, "JSON report path")->required();
  bench->add_option("--seed", bench_seed, "seed")->capture_default_str();

  CLI11_PARSE(app, argc, argv);
  int workers = threads > 0 ? threads : default_workers();

  if (gen->parsed()) {
    SceneSpec spec = bundled_scene(gen_scene);
    spec.jitter_deg = jitter_deg;
    spec.jitter_pos = jitter_pos;
    if (gen_train_views > 0) spec.train_views_per_state = gen_train_views;
    if (gen_eval_views > 0) spec.eval_views_per_state = gen_eval_views;
    if (gen_size > 0) spec.image_width = spec.image_height = gen_size;
    DatasetManifest manifest = generate_dataset(spec, gen_out, gen_seed, workers);
    std::printf("wrote %zu frames to %s\n", manifest.frames.size(), gen_out.c_str());
    return 0;
  }

  if (train->parsed()) {
    Dataset dataset = load_dataset((fs::path(train_data) / "manifest.json").string());
    sched.seed = train_seed;
    opts.grid_mode =
        grid_mode == "shared" ? OccupancyGrid::Mode::Shared : OccupancyGrid::Mode::Independent;
    opts.msr_enabled = msr == "on";
    opts.freeze_canonical_in_stage2 = freeze_canonical;
    opts.workers = workers;
    Trainer trainer(dataset, sched, opts);
    trainer.set_log_path(train_log.empty() ? train_out + ".train.csv" : train_log);
    trainer.run_stage1();
    trainer.run_stage2();
    trainer.save(train_out);
    std::printf("checkpoint written to %s\n", train_out.c_str());
    return 0;
  }

  if (render->parsed()) {
    ModelBundle bundle = load_model_bundle(render_ckpt, workers);
    StateId state = StateId::from_bitstring(render_state);
    require(state.n == bundle.meta.n, "render: state bitstring length must equal the part count");
    DatasetManifest manifest =
        load_manifest((fs::path(bundle.meta.data_dir) / "manifest.json").string());
    // camera: the requested state's own trajectory when the dataset has one,
    // otherwise the canonical trajectory
    const Camera<double>* cam = nullptr;
    int seen = 0;
    for (const auto& f : manifest.frames)
      if (f.state.bits == state.bits && seen++ == render_view_idx) cam = &f.camera;
    if (!cam) {
      seen = 0;
      for (const auto& f : manifest.frames)
        if (f.state.bits == 0 && seen++ == render_view_idx) cam = &f.camera;
    }
    require(cam != nullptr, "render: view index out of range");
    Image img = render_view(bundle.model, bundle.grids, *cam, state, bundle.meta.render, workers);
    write_png(img, render_out);
    std::printf("wrote %s\n", render_out.c_str());
    return 0;
  }

  if (eval->parsed()) {
    Dataset dataset = load_dataset((fs::path(eval_data) / "manifest.json").string());
    ModelBundle bundle = load_model_bundle(eval_ckpt, workers);
    MetricsReport report =
        cmd_eval(dataset, bundle.model, bundle.grids, bundle.meta.render, eval_split, workers);
    save_metrics_report(report, eval_out);
    std::fputs(format_metrics_table(report).c_str(), stdout);
    return 0;
  }

  if (bench->parsed()) {
    Dataset dataset = load_dataset((fs::path(bench_data) / "manifest.json").string());
    TrainSchedule bench_sched;
    bench_sched.seed = bench_seed;
    TrainOptions bench_opts;
    bench_opts.workers = workers;
    BenchReport report = cmd_bench(dataset, bench_epochs, bench_sched, bench_opts);
    save_bench_report(report, bench_out);
    std::fputs(format_bench_table(report).c_str(), stdout);
    return 0;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ContractError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const IoError& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
}
