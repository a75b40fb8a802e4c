#include "int3d/train.hpp"

#include <chrono>
#include <cmath>
#include <fstream>

#include <json.hpp>

namespace int3d {

using nlohmann::json;

// ---- run metadata -----------------------------------------------------------

namespace {

const char* mode_name(OccupancyGrid::Mode m) {
  return m == OccupancyGrid::Mode::Shared ? "shared" : "independent";
}

OccupancyGrid::Mode mode_from_name(const std::string& s) {
  if (s == "shared") return OccupancyGrid::Mode::Shared;
  if (s == "independent") return OccupancyGrid::Mode::Independent;
  throw ContractError("unknown grid mode: " + s);
}

}  // namespace

void save_run_meta(const RunMeta& meta, const std::string& path) {
  json j;
  j["scene"] = meta.scene;
  j["data_dir"] = meta.data_dir;
  j["n"] = meta.n;
  j["width"] = meta.width;
  j["height"] = meta.height;
  j["grid_mode"] = mode_name(meta.grid_mode);
  j["msr"] = meta.msr_enabled;
  j["freeze_canonical"] = meta.freeze_canonical;
  j["seed"] = meta.seed;
  j["grid"] = {{"resolution", meta.grid_resolution}, {"decay", meta.grid_decay}, {"tau", meta.grid_tau}};
  j["hash"] = {{"levels", meta.hash.levels},
               {"features_per_level", meta.hash.features_per_level},
               {"table_size", meta.hash.table_size},
               {"base_resolution", meta.hash.base_resolution},
               {"max_resolution", meta.hash.max_resolution}};
  j["disc"] = {{"resolution", meta.disc.resolution}, {"feature_dim", meta.disc.feature_dim}};
  j["mlp"] = {{"density_hidden", meta.mlp.density_hidden},
              {"latent_dim", meta.mlp.latent_dim},
              {"color_hidden", meta.mlp.color_hidden},
              {"use_view_direction", meta.mlp.use_view_direction},
              {"density_bias_init", meta.mlp.density_bias_init}};
  j["render"] = {{"step_divisor", meta.render.step_divisor},
                 {"max_samples_per_ray", meta.render.max_samples_per_ray},
                 {"term_transmittance", meta.render.term_transmittance}};
  j["weights"] = {{"distortion", meta.weights.distortion},
                  {"opacity", meta.weights.opacity},
                  {"consistency", meta.weights.consistency},
                  {"smoothness", meta.weights.smoothness},
                  {"msr", meta.weights.msr}};
  j["schedule"] = {{"rays_per_iter", meta.schedule.rays_per_iter},
                   {"iters_per_epoch", meta.schedule.iters_per_epoch},
                   {"canonical_epochs", meta.schedule.canonical_epochs},
                   {"decomposition_epochs", meta.schedule.decomposition_epochs},
                   {"grid_update_every", meta.schedule.grid_update_every},
                   {"seed", meta.schedule.seed}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("save_run_meta: cannot open " + path);
  out << j.dump(1) << "\n";
  if (!out) throw IoError("save_run_meta: write failed " + path);
}

RunMeta load_run_meta(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_run_meta: cannot open " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw IoError("load_run_meta: parse error: " + std::string(e.what()));
  }
  RunMeta m;
  m.scene = j.at("scene");
  m.data_dir = j.at("data_dir");
  m.n = j.at("n");
  m.width = j.at("width");
  m.height = j.at("height");
  m.grid_mode = mode_from_name(j.at("grid_mode"));
  m.msr_enabled = j.at("msr");
  m.freeze_canonical = j.at("freeze_canonical");
  m.seed = j.at("seed");
  m.grid_resolution = j.at("grid").at("resolution");
  m.grid_decay = j.at("grid").at("decay");
  m.grid_tau = j.at("grid").at("tau");
  m.hash.levels = j.at("hash").at("levels");
  m.hash.features_per_level = j.at("hash").at("features_per_level");
  m.hash.table_size = j.at("hash").at("table_size");
  m.hash.base_resolution = j.at("hash").at("base_resolution");
  m.hash.max_resolution = j.at("hash").at("max_resolution");
  m.disc.resolution = j.at("disc").at("resolution");
  m.disc.feature_dim = j.at("disc").at("feature_dim");
  m.mlp.density_hidden = j.at("mlp").at("density_hidden");
  m.mlp.latent_dim = j.at("mlp").at("latent_dim");
  m.mlp.color_hidden = j.at("mlp").at("color_hidden");
  m.mlp.use_view_direction = j.at("mlp").at("use_view_direction");
  m.mlp.density_bias_init = j.at("mlp").at("density_bias_init");
  m.render.step_divisor = j.at("render").at("step_divisor");
  m.render.max_samples_per_ray = j.at("render").at("max_samples_per_ray");
  m.render.term_transmittance = j.at("render").at("term_transmittance");
  m.weights.distortion = j.at("weights").at("distortion");
  m.weights.opacity = j.at("weights").at("opacity");
  m.weights.consistency = j.at("weights").at("consistency");
  m.weights.smoothness = j.at("weights").at("smoothness");
  m.weights.msr = j.at("weights").at("msr");
  m.schedule.rays_per_iter = j.at("schedule").at("rays_per_iter");
  m.schedule.iters_per_epoch = j.at("schedule").at("iters_per_epoch");
  m.schedule.canonical_epochs = j.at("schedule").at("canonical_epochs");
  m.schedule.decomposition_epochs = j.at("schedule").at("decomposition_epochs");
  m.schedule.grid_update_every = j.at("schedule").at("grid_update_every");
  m.schedule.seed = j.at("schedule").at("seed");
  return m;
}

// ---- grid rebuild -----------------------------------------------------------

GridSet rebuild_grids(const FieldModel<float>& model, OccupancyGrid::Mode mode, int resolution,
                      double decay, double tau, const Aabb<double>& domain, int workers,
                      int sweeps) {
  GridSet out;
  out.mode = mode;
  Aabb<float> world{domain.min.cast<float>(), domain.max.cast<float>()};
  auto density_of = [&model, world](int part) {
    return [&model, world, part](std::span<const Vec3<float>> pts, std::vector<float>& sigma) {
      std::vector<int> parts(pts.size(), part);
      std::vector<Vec3<float>> unit(pts.size());
      for (size_t i = 0; i < pts.size(); ++i) unit[i] = normalize_point(pts[i], world);
      model.density_batch(std::span<const Vec3<float>>(unit), std::span<const int>(parts), sigma);
    };
  };
  auto build = [&](OccupancyGrid& g, std::vector<int> parts_to_sweep) {
    g.init(resolution, domain, OccupancyGrid::Mode::Shared, decay, tau);
    for (int s = 0; s < sweeps; ++s)
      for (int part : parts_to_sweep)
        update_grid(g, density_of(part), std::uint64_t(s), 0xdecafull, workers);
    g.mode = mode;
  };
  if (mode == OccupancyGrid::Mode::Shared) {
    std::vector<int> all{0};
    for (int i = 1; i <= model.n_parts; ++i) all.push_back(i);
    build(out.canonical, all);
  } else {
    build(out.canonical, {0});
    out.states.resize(static_cast<size_t>(model.n_parts));
    for (int i = 1; i <= model.n_parts; ++i)
      build(out.states[static_cast<size_t>(i - 1)], {i});
  }
  return out;
}

ModelBundle load_model_bundle(const std::string& checkpoint_path, int workers) {
  ModelBundle b;
  b.meta = load_run_meta(checkpoint_path + ".json");
  b.store = std::make_unique<ParamStore<float>>(load_checkpoint<float>(checkpoint_path));
  b.model.hash_cfg = b.meta.hash;
  b.model.disc_cfg = b.meta.disc;
  b.model.mlp_cfg = b.meta.mlp;
  b.model.n_parts = b.meta.n;
  b.model.bind(*b.store);
  Aabb<double> domain{Vec3d(-1, -1, -1), Vec3d(1, 1, 1)};
  b.grids = rebuild_grids(b.model, b.meta.grid_mode, b.meta.grid_resolution, b.meta.grid_decay,
                          b.meta.grid_tau, domain, workers);
  return b;
}

// ---- trainer ----------------------------------------------------------------

Trainer::Trainer(const Dataset& dataset, const TrainSchedule& schedule, const TrainOptions& options)
    : dataset_(&dataset), schedule_(schedule), options_(options) {
  schedule_.validate();
  options_.adam.validate();
  world_d_ = Aabb<double>{Vec3d(-1, -1, -1), Vec3d(1, 1, 1)};
  world_ = Aabb<float>{Vec3f(-1, -1, -1), Vec3f(1, 1, 1)};

  store_ = std::make_unique<ParamStore<float>>();
  FieldModel<float>::init_params(*store_, options_.hash, options_.disc, options_.mlp,
                                 dataset.n(), schedule_.seed);
  model_.hash_cfg = options_.hash;
  model_.disc_cfg = options_.disc;
  model_.mlp_cfg = options_.mlp;
  model_.n_parts = dataset.n();
  model_.bind(*store_);

  grids_.mode = options_.grid_mode;
  grids_.canonical.init(options_.grid_resolution, world_d_, OccupancyGrid::Mode::Independent,
                        options_.grid_decay, options_.grid_tau);

  int slots = std::max(1, options_.slots);
  for (int s = 0; s < slots; ++s)
    pipelines_.emplace_back(std::make_unique<RayPipeline<float>>(model_, options_.render, world_));
  slot_grads_.resize(static_cast<size_t>(slots));
  for (auto& g : slot_grads_) g.init(*store_);

  // flat pixel lists per (frame, part) mask for cross-state ray draws
  mask_pixels_.resize(dataset.masks.size());
  for (size_t f = 0; f < dataset.masks.size(); ++f) {
    mask_pixels_[f].resize(static_cast<size_t>(dataset.n()));
    for (const auto& [part, bits] : dataset.masks[f]) {
      auto& list = mask_pixels_[f][static_cast<size_t>(part - 1)];
      for (size_t k = 0; k < bits.size(); ++k)
        if (bits[k]) list.push_back(static_cast<int>(k));
    }
  }

  // initial occupancy from the untrained field
  update_grids(1, 0);
}

int Trainer::draw_state(int iter) const {
  int n = dataset_->n();
  require(n >= 1, "draw_state: dataset has no movable parts");
  Pcg32 rng(mix_seed({schedule_.seed, 0x737461746532ull, std::uint64_t(iter)}));
  return 1 + static_cast<int>(rng.next_below(static_cast<std::uint32_t>(n)));
}

void Trainer::assemble_main(int iter, int stage, int state, MainBatch& out) const {
  int b = schedule_.rays_per_iter;
  out.rays.resize(static_cast<size_t>(b));
  out.gt.resize(static_cast<size_t>(b));
  out.parts.resize(static_cast<size_t>(b));
  out.grids.resize(static_cast<size_t>(b));
  Pcg32 rng(mix_seed({schedule_.seed, 0x706978ull, std::uint64_t(stage), std::uint64_t(iter)}));
  int w = dataset_->width(), h = dataset_->height();
  for (int j = 0; j < b; ++j) {
    int part = 0;
    if (stage == 2 && j >= b / 2) part = state;  // half canonical, half drawn state
    std::uint32_t bits = part == 0 ? 0u : (1u << (part - 1));
    const auto& frames = dataset_->train_frames(bits);
    int frame = frames[rng.next_below(static_cast<std::uint32_t>(frames.size()))];
    int px = static_cast<int>(rng.next_below(static_cast<std::uint32_t>(w)));
    int py = static_cast<int>(rng.next_below(static_cast<std::uint32_t>(h)));
    Ray<double> rd = pixel_to_ray(dataset_->manifest.frames[static_cast<size_t>(frame)].camera,
                                  double(px) + 0.5, double(py) + 0.5);
    Ray<float> rf;
    rf.origin = rd.origin.cast<float>();
    rf.direction = rd.direction.cast<float>();
    out.rays[static_cast<size_t>(j)] = rf;
    out.gt[static_cast<size_t>(j)] = dataset_->pixel(frame, px, py);
    out.parts[static_cast<size_t>(j)] = part;
    out.grids[static_cast<size_t>(j)] = &grids_.for_part(part);
  }
}

void Trainer::assemble_msr(int iter, int state, MsrBatchRays& out) const {
  out.rays.clear();
  out.parts_ref.clear();
  out.parts_opt.clear();
  out.grids.clear();
  int n = dataset_->n();
  if (!options_.msr_enabled || n < 2) return;
  Pcg32 rng(mix_seed({schedule_.seed, 0x6d7372ull, std::uint64_t(iter)}));
  int w = dataset_->width();
  for (int j = 0; j < options_.msr_rays_per_iter; ++j) {
    for (int attempt = 0; attempt < 16; ++attempt) {
      bool from_canonical = rng.next_below(2) == 0;
      int a = from_canonical ? 0 : state;
      int b = from_canonical ? state : 0;
      std::uint32_t a_bits = a == 0 ? 0u : (1u << (a - 1));
      const auto& frames = dataset_->train_frames(a_bits);
      int frame = frames[rng.next_below(static_cast<std::uint32_t>(frames.size()))];
      // masked part: closed in both states of the pair, i.e. any part != state
      int pick = static_cast<int>(rng.next_below(static_cast<std::uint32_t>(n - 1)));
      int mask_part = pick + 1 >= state ? pick + 2 : pick + 1;
      const auto& pixels = mask_pixels_[static_cast<size_t>(frame)][static_cast<size_t>(mask_part - 1)];
      if (pixels.empty()) continue;
      int flat = pixels[rng.next_below(static_cast<std::uint32_t>(pixels.size()))];
      int px = flat % w, py = flat / w;
      Ray<double> rd = pixel_to_ray(dataset_->manifest.frames[static_cast<size_t>(frame)].camera,
                                    double(px) + 0.5, double(py) + 0.5);
      Ray<float> rf;
      rf.origin = rd.origin.cast<float>();
      rf.direction = rd.direction.cast<float>();
      out.rays.push_back(rf);
      out.parts_ref.push_back(a);  // native render of the source view is the detached side
      out.parts_opt.push_back(b);
      out.grids.push_back(&grids_.for_part(a));
      break;
    }
  }
}

void Trainer::run_iteration(int iter, int stage, int state) {
  auto t0 = std::chrono::steady_clock::now();
  MainBatch main;
  assemble_main(iter, stage, state, main);
  MsrBatchRays msr;
  if (stage == 2) assemble_msr(iter, state, msr);

  zero_grad(*store_);
  size_t nslots = pipelines_.size();
  std::vector<RayPipeline<float>::Stats> main_stats(nslots), msr_stats(nslots);
  size_t n_main = main.rays.size(), n_msr = msr.rays.size();
  parallel_slots(static_cast<int>(nslots), options_.resolved_workers(), [&](int s) {
    slot_grads_[static_cast<size_t>(s)].zero();
    size_t b0 = size_t(s) * n_main / nslots, b1 = size_t(s + 1) * n_main / nslots;
    if (b1 > b0) {
      main_stats[static_cast<size_t>(s)] = pipelines_[static_cast<size_t>(s)]->train_main(
          std::span<const Ray<float>>(main.rays).subspan(b0, b1 - b0),
          std::span<const Vec3<float>>(main.gt).subspan(b0, b1 - b0),
          std::span<const int>(main.parts).subspan(b0, b1 - b0),
          std::span<const OccupancyGrid* const>(main.grids).subspan(b0, b1 - b0), n_main,
          options_.weights, true, &slot_grads_[static_cast<size_t>(s)]);
    }
    size_t m0 = size_t(s) * n_msr / nslots, m1 = size_t(s + 1) * n_msr / nslots;
    if (m1 > m0) {
      msr_stats[static_cast<size_t>(s)] = pipelines_[static_cast<size_t>(s)]->train_msr(
          std::span<const Ray<float>>(msr.rays).subspan(m0, m1 - m0),
          std::span<const int>(msr.parts_ref).subspan(m0, m1 - m0),
          std::span<const int>(msr.parts_opt).subspan(m0, m1 - m0),
          std::span<const OccupancyGrid* const>(msr.grids).subspan(m0, m1 - m0), n_msr,
          options_.weights, true, &slot_grads_[static_cast<size_t>(s)]);
    }
  });
  for (size_t s = 0; s < nslots; ++s) slot_grads_[s].merge_into(*store_);

  LossBreakdown bd;
  for (size_t s = 0; s < nslots; ++s) {
    bd.mse += main_stats[s].mse;
    bd.distortion += main_stats[s].distortion;
    bd.opacity += main_stats[s].opacity;
    bd.msr += msr_stats[s].msr;
    marched_samples_ += main_stats[s].marched_samples;
  }
  rays_traced_ += n_main;

  if (stage == 2 && state > 0) {
    auto tx = model_.disc_view(state, 'x');
    auto ty = model_.disc_view(state, 'y');
    auto tz = model_.disc_view(state, 'z');
    bd.consistency = consistency_loss(tx, ty, tz);
    bd.smoothness = smoothness_loss(model_.disc_cfg, tx, ty, tz);
    auto gx = std::span<float>(store_->block(block_names::disc(state, 'x')).grad);
    auto gy = std::span<float>(store_->block(block_names::disc(state, 'y')).grad);
    auto gz = std::span<float>(store_->block(block_names::disc(state, 'z')).grad);
    consistency_backward(float(options_.weights.consistency), tx, ty, tz, gx, gy, gz);
    smoothness_backward(model_.disc_cfg, float(options_.weights.smoothness), tx, ty, tz, gx, gy, gz);
  }

  double total = bd.total(options_.weights);
  if (!std::isfinite(total)) {
    throw ContractError(
        "training aborted: non-finite loss at stage " + std::to_string(stage) + " iteration " +
        std::to_string(iter) + " (mse=" + std::to_string(bd.mse) +
        " dist=" + std::to_string(bd.distortion) + " opac=" + std::to_string(bd.opacity) +
        " consis=" + std::to_string(bd.consistency) + " smooth=" + std::to_string(bd.smoothness) +
        " msr=" + std::to_string(bd.msr) + ")");
  }
  adam_step(*store_, options_.adam);
  iteration_mse_.push_back(bd.mse);

  if ((iter + 1) % schedule_.grid_update_every == 0) update_grids(stage, state);
  auto t1 = std::chrono::steady_clock::now();
  double seconds = std::chrono::duration<double>(t1 - t0).count();
  if (iter % 10 == 0) append_log(iter, stage, state, bd, seconds);
}

void Trainer::restore(const ParamStore<float>& store, const GridSet& grids,
                      std::uint64_t update_counter) {
  require(store.blocks().size() == store_->blocks().size(), "restore: block layout mismatch");
  for (size_t b = 0; b < store.blocks().size(); ++b) {
    const auto& src = store.blocks()[b];
    auto& dst = store_->blocks()[b];
    require(src.name == dst.name && src.size() == dst.size(), "restore: block layout mismatch");
    dst.values = src.values;
    dst.m = src.m;
    dst.v = src.v;
  }
  store_->set_step(store.step());
  grids_ = grids;
  grids_.mode = options_.grid_mode;
  update_counter_ = update_counter;
}

void Trainer::stage1_iteration(int iter) { run_iteration(iter, 1, 0); }

void Trainer::stage2_iteration(int iter) { run_iteration(iter, 2, draw_state(iter)); }

void Trainer::run_stage1() {
  int iters = schedule_.canonical_epochs * schedule_.iters_per_epoch;
  for (int it = 0; it < iters; ++it) stage1_iteration(it);
  flush_log();
}

void Trainer::run_stage2() {
  int n = dataset_->n();
  if (n == 0) return;  // nothing to decompose
  if (grids_.mode == OccupancyGrid::Mode::Independent) {
    if (grids_.states.empty()) {
      grids_.states.assign(static_cast<size_t>(n), grids_.canonical);
      for (auto& g : grids_.states) g.mode = OccupancyGrid::Mode::Independent;
    }
  } else {
    grids_.canonical.mode = OccupancyGrid::Mode::Shared;
  }
  if (options_.freeze_canonical_in_stage2) {
    for (auto& blk : store_->blocks())
      if (blk.name.rfind("hash.", 0) == 0 || blk.name.rfind("mlp.", 0) == 0) blk.trainable = false;
  }
  int iters = schedule_.decomposition_epochs * schedule_.iters_per_epoch;
  for (int it = 0; it < iters; ++it) stage2_iteration(it);
  flush_log();
}

void Trainer::update_grids(int stage, int state) {
  auto density_of = [this](int part) {
    return [this, part](std::span<const Vec3<float>> pts, std::vector<float>& sigma) {
      std::vector<int> parts(pts.size(), part);
      std::vector<Vec3<float>> unit(pts.size());
      for (size_t i = 0; i < pts.size(); ++i) unit[i] = normalize_point(pts[i], world_);
      model_.density_batch(std::span<const Vec3<float>>(unit), std::span<const int>(parts), sigma);
    };
  };
  int workers = options_.resolved_workers();
  if (stage == 1) {
    update_grid(grids_.canonical, density_of(0), update_counter_, schedule_.seed, workers);
  } else if (grids_.mode == OccupancyGrid::Mode::Independent) {
    update_grid(grids_.canonical, density_of(0), update_counter_, schedule_.seed, workers);
    if (state > 0 && !grids_.states.empty())
      update_grid(grids_.states[static_cast<size_t>(state - 1)], density_of(state),
                  update_counter_, schedule_.seed, workers);
  } else {
    update_grid(grids_.canonical, density_of(0), update_counter_, schedule_.seed, workers);
    if (state > 0)
      update_grid(grids_.canonical, density_of(state), update_counter_, schedule_.seed, workers);
  }
  ++update_counter_;
}

void Trainer::append_log(int iter, int stage, int state, const LossBreakdown& bd, double seconds) {
  LogRow row;
  row.iter = iter;
  row.stage = stage;
  row.state = state;
  row.losses = bd;
  row.total = bd.total(options_.weights);
  row.rays_per_s = seconds > 0 ? double(schedule_.rays_per_iter) / seconds : 0;
  row.occupied_fraction = grids_.for_part(state).occupied_fraction();
  log_.push_back(row);
}

void Trainer::flush_log() {
  if (log_path_.empty()) return;
  std::ofstream out(log_path_, std::ios::binary);
  if (!out) throw IoError("Trainer: cannot open log " + log_path_);
  out << "iter,stage,state,mse,distortion,opacity,consistency,smoothness,msr,total,rays_per_s,"
         "occupied_fraction\n";
  char buf[400];
  for (const auto& r : log_) {
    std::snprintf(buf, sizeof(buf), "%d,%d,%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.6g,%.6g\n",
                  r.iter, r.stage, r.state, r.losses.mse, r.losses.distortion, r.losses.opacity,
                  r.losses.consistency, r.losses.smoothness, r.losses.msr, r.total, r.rays_per_s,
                  r.occupied_fraction);
    out << buf;
  }
}

RunMeta Trainer::run_meta() const {
  RunMeta m;
  m.scene = dataset_->manifest.scene;
  m.data_dir = dataset_->manifest.root;
  m.n = dataset_->n();
  m.width = dataset_->width();
  m.height = dataset_->height();
  m.grid_mode = options_.grid_mode;
  m.msr_enabled = options_.msr_enabled;
  m.freeze_canonical = options_.freeze_canonical_in_stage2;
  m.seed = schedule_.seed;
  m.grid_resolution = options_.grid_resolution;
  m.grid_decay = options_.grid_decay;
  m.grid_tau = options_.grid_tau;
  m.hash = options_.hash;
  m.disc = options_.disc;
  m.mlp = options_.mlp;
  m.render = options_.render;
  m.weights = options_.weights;
  m.schedule = schedule_;
  return m;
}

void Trainer::save(const std::string& checkpoint_path) const {
  save_checkpoint(*store_, checkpoint_path);
  save_run_meta(run_meta(), checkpoint_path + ".json");
}

}  // namespace int3d
