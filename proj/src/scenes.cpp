#include "int3d/scenes.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace int3d {

namespace fs = std::filesystem;
using nlohmann::json;

// ---- spec validation ------------------------------------------------------

void SceneSpec::validate() const {
  require(!name.empty(), "SceneSpec: name must not be empty");
  require(n_parts() >= 1, "SceneSpec: need at least one movable part");
  require(image_width > 0 && image_height > 0, "SceneSpec: image size must be positive");
  require(train_views_per_state > 0 && eval_views_per_state > 0,
          "SceneSpec: view counts must be positive");
  auto check_inside = [&](const BoxPrimitive& prim, const char* what) {
    prim.box.validate();
    require((prim.box.min.array() >= world.min.array()).all() &&
                (prim.box.max.array() <= world.max.array()).all(),
            std::string("SceneSpec: ") + what + " primitive outside the world box");
  };
  for (const auto& p : statics) check_inside(p, "static");
  for (const auto& part : parts) {
    require(!part.closed.empty() && !part.open.empty(),
            "SceneSpec: every part needs closed and open primitives");
    for (const auto& p : part.closed) check_inside(p, "closed-pose");
    for (const auto& p : part.open) check_inside(p, "open-pose");
    for (const auto& p : part.reveal) check_inside(p, "reveal");
  }
  // open-pose volumes pairwise disjoint across parts
  auto overlaps = [](const Aabb<double>& a, const Aabb<double>& b) {
    return (a.min.array() < b.max.array()).all() && (b.min.array() < a.max.array()).all();
  };
  for (size_t i = 0; i < parts.size(); ++i)
    for (size_t j = i + 1; j < parts.size(); ++j)
      for (const auto& a : parts[i].open)
        for (const auto& b : parts[j].open)
          require(!overlaps(a.box, b.box),
                  "SceneSpec: open-pose volumes of different parts overlap");
}

// ---- oracle ---------------------------------------------------------------

std::vector<BoxPrimitive> active_primitives(const SceneSpec& spec, const StateId& state) {
  require(state.n == spec.n_parts(), "active_primitives: state part count mismatch");
  std::vector<BoxPrimitive> out = spec.statics;
  for (int i = 1; i <= spec.n_parts(); ++i) {
    const MovablePart& part = spec.parts[static_cast<size_t>(i - 1)];
    if (state.part_open(i)) {
      out.insert(out.end(), part.open.begin(), part.open.end());
      out.insert(out.end(), part.reveal.begin(), part.reveal.end());
    } else {
      out.insert(out.end(), part.closed.begin(), part.closed.end());
    }
  }
  return out;
}

namespace {

FieldSample<float> sample_from_active(const Vec3d& p, const std::vector<BoxPrimitive>& active) {
  FieldSample<float> s;
  for (const auto& prim : active) {
    if (prim.box.contains(p) && prim.amplitude > s.sigma) {
      s.sigma = prim.amplitude;
      s.color = prim.albedo;
    }
  }
  return s;
}

}  // namespace

FieldSample<float> oracle_sample(const Vec3d& p, const StateId& state, const SceneSpec& spec) {
  return sample_from_active(p, active_primitives(spec, state));
}

namespace {

struct PrimInterval {
  double a, b;
  const BoxPrimitive* prim;
};

/// Clipped intersection intervals of a ray with a primitive set, plus their
/// disjoint merged cover, so the fine march can skip empty stretches exactly
/// (zero-density steps contribute nothing to the quadrature).
struct RayIntervals {
  std::vector<PrimInterval> prims;
  std::vector<std::pair<double, double>> merged;
};

RayIntervals ray_intervals(const Ray<double>& ray, double t_lo, double t_hi,
                           const std::vector<BoxPrimitive>& active) {
  RayIntervals out;
  for (const auto& prim : active) {
    Aabb<double> box = prim.box;
    auto hit = intersect_aabb(ray, box);
    if (!hit) continue;
    double a = std::max(hit->first, t_lo);
    double b = std::min(hit->second, t_hi);
    if (a < b) out.prims.push_back({a, b, &prim});
  }
  std::vector<std::pair<double, double>> spans;
  for (const auto& pi : out.prims) spans.emplace_back(pi.a, pi.b);
  std::sort(spans.begin(), spans.end());
  for (const auto& s : spans) {
    if (!out.merged.empty() && s.first <= out.merged.back().second)
      out.merged.back().second = std::max(out.merged.back().second, s.second);
    else
      out.merged.push_back(s);
  }
  return out;
}

FieldSample<float> sample_intervals(const RayIntervals& iv, double t, const Vec3d& p) {
  FieldSample<float> s;
  for (const auto& pi : iv.prims) {
    if (t < pi.a || t > pi.b) continue;
    if (pi.prim->box.contains(p) && pi.prim->amplitude > s.sigma) {
      s.sigma = pi.prim->amplitude;
      s.color = pi.prim->albedo;
    }
  }
  return s;
}

/// Shared fine-march compositing core for the analytic renderers.
/// `sample(t, p)` returns the field sample at ray parameter t.
template <typename SampleFn>
Vec3f march_analytic_ray(const Ray<double>& ray, const Aabb<double>& world, double dt,
                         const std::vector<std::pair<double, double>>& merged, SampleFn&& sample) {
  auto hit = intersect_aabb(ray, world);
  if (!hit) return Vec3f::Zero();
  double t_lo = hit->first, t_hi = hit->second;
  double T = 1.0;
  double C[3] = {0, 0, 0};
  long k_next = 0;
  for (const auto& span : merged) {
    long k = std::max(k_next, std::lround(std::ceil((span.first - t_lo) / dt - 0.5)));
    if (k < 0) k = 0;
    for (;; ++k) {
      double t = t_lo + (double(k) + 0.5) * dt;
      if (t > span.second || t >= t_hi) break;
      FieldSample<float> s = sample(t, ray.at(t));
      if (s.sigma > 0) {
        double att = std::exp(-double(s.sigma) * dt);
        double w = (1.0 - att) * T;
        for (int ch = 0; ch < 3; ++ch) C[ch] += w * double(s.color[ch]);
        T *= att;
        if (T < 1e-9) break;
      }
    }
    k_next = k;
    if (T < 1e-9) break;
  }
  return Vec3f(float(C[0]), float(C[1]), float(C[2]));
}

}  // namespace

Image oracle_render(const Camera<double>& camera, const StateId& state, const SceneSpec& spec,
                    int step_divisor) {
  std::vector<BoxPrimitive> active = active_primitives(spec, state);
  double dt = spec.world.diagonal() / double(step_divisor);
  Image img(camera.width, camera.height, 3);
  for (int y = 0; y < camera.height; ++y)
    for (int x = 0; x < camera.width; ++x) {
      Ray<double> ray = pixel_to_ray(camera, double(x) + 0.5, double(y) + 0.5);
      auto hit = intersect_aabb(ray, spec.world);
      if (!hit) continue;
      RayIntervals iv = ray_intervals(ray, hit->first, hit->second, active);
      Vec3f c = march_analytic_ray(ray, spec.world, dt, iv.merged,
                                   [&](double t, const Vec3d& p) { return sample_intervals(iv, t, p); });
      for (int ch = 0; ch < 3; ++ch) img.at(x, y, ch) = c[ch];
    }
  return img;
}

Image oracle_render_selected(const Camera<double>& camera, const StateId& state,
                             const SceneSpec& spec, int step_divisor) {
  std::vector<int> open = state.open_parts();
  std::vector<BoxPrimitive> canonical = active_primitives(spec, StateId::canonical(state.n));
  std::vector<std::vector<BoxPrimitive>> candidates;
  for (int part : open)
    candidates.push_back(active_primitives(spec, StateId::single(state.n, part)));
  double dt = spec.world.diagonal() / double(step_divisor);
  Image img(camera.width, camera.height, 3);
  for (int y = 0; y < camera.height; ++y)
    for (int x = 0; x < camera.width; ++x) {
      Ray<double> ray = pixel_to_ray(camera, double(x) + 0.5, double(y) + 0.5);
      auto hit = intersect_aabb(ray, spec.world);
      if (!hit) continue;
      RayIntervals iv0 = ray_intervals(ray, hit->first, hit->second, canonical);
      std::vector<RayIntervals> ivs;
      for (const auto& ca : candidates) ivs.push_back(ray_intervals(ray, hit->first, hit->second, ca));
      // march over the union cover of all candidate states
      std::vector<std::pair<double, double>> spans = iv0.merged;
      for (const auto& iv : ivs) spans.insert(spans.end(), iv.merged.begin(), iv.merged.end());
      std::sort(spans.begin(), spans.end());
      std::vector<std::pair<double, double>> merged;
      for (const auto& s : spans) {
        if (!merged.empty() && s.first <= merged.back().second)
          merged.back().second = std::max(merged.back().second, s.second);
        else
          merged.push_back(s);
      }
      Vec3f c = march_analytic_ray(
          ray, spec.world, dt, merged, [&](double t, const Vec3d& p) {
            FieldSample<float> s0 = sample_intervals(iv0, t, p);
            if (ivs.empty()) return s0;
            FieldSample<float> best;
            float best_diff = -1;
            for (const auto& iv : ivs) {
              FieldSample<float> si = sample_intervals(iv, t, p);
              float diff = std::abs(si.sigma - s0.sigma);
              if (diff > best_diff) {
                best_diff = diff;
                best = si;
              }
            }
            if (double(best_diff) < FieldModel<float>::kTieEpsilon) return s0;
            return best;
          });
      for (int ch = 0; ch < 3; ++ch) img.at(x, y, ch) = c[ch];
    }
  return img;
}

Image oracle_part_mask(const Camera<double>& camera, const StateId& state, const SceneSpec& spec,
                       int part) {
  require(part >= 1 && part <= spec.n_parts(), "oracle_part_mask: part index out of range");
  require(!state.part_open(part), "oracle_part_mask: masks exist only for inactive parts");
  std::vector<BoxPrimitive> active = active_primitives(spec, state);
  // active layout is statics then parts in order; locate this part's closed range
  size_t begin = spec.statics.size();
  for (int i = 1; i < part; ++i) {
    const MovablePart& mp = spec.parts[static_cast<size_t>(i - 1)];
    begin += state.part_open(i) ? mp.open.size() + mp.reveal.size() : mp.closed.size();
  }
  size_t end = begin + spec.parts[static_cast<size_t>(part - 1)].closed.size();

  Image mask(camera.width, camera.height, 1);
  for (int y = 0; y < camera.height; ++y)
    for (int x = 0; x < camera.width; ++x) {
      Ray<double> ray = pixel_to_ray(camera, double(x) + 0.5, double(y) + 0.5);
      // first scene hit: nearest primitive entry; ties by amplitude then order
      size_t hit_idx = active.size();
      float hit_amp = -1;
      double best_t = std::numeric_limits<double>::infinity();
      for (size_t i = 0; i < active.size(); ++i) {
        auto hit = intersect_aabb(ray, active[i].box);
        if (!hit || hit->second <= 0) continue;
        double entry = std::max(hit->first, 0.0);
        if (entry < best_t || (entry == best_t && active[i].amplitude > hit_amp)) {
          best_t = entry;
          hit_idx = i;
          hit_amp = active[i].amplitude;
        }
      }
      if (hit_idx >= begin && hit_idx < end) mask.at(x, y, 0) = 1.0f;
    }
  return mask;
}

Camera<double> arc_camera(const SceneSpec& spec, int idx, int count, bool eval_offset) {
  Camera<double> cam;
  cam.width = spec.image_width;
  cam.height = spec.image_height;
  double f = 0.5 * spec.image_height / std::tan(0.5 * spec.arc.fov_deg * M_PI / 180.0);
  cam.fx = cam.fy = f;
  cam.cx = 0.5 * spec.image_width;
  cam.cy = 0.5 * spec.image_height;
  double theta = 2.0 * M_PI * (double(idx) + (eval_offset ? 0.5 : 0.0)) / double(count);
  Vec3d eye(spec.arc.radius * std::cos(theta), spec.arc.height, spec.arc.radius * std::sin(theta));
  look_at(cam, eye, spec.arc.target, Vec3d(0, 1, 0));
  return cam;
}

// ---- dataset generation -----------------------------------------------------

namespace {

Mat3<double> axis_angle_rotation(const Vec3d& axis, double angle_rad) {
  Vec3d a = axis.normalized();
  double c = std::cos(angle_rad), s = std::sin(angle_rad);
  Mat3<double> k;
  k << 0, -a.z(), a.y(), a.z(), 0, -a.x(), -a.y(), a.x(), 0;
  return Mat3<double>::Identity() * c + k * s + a * a.transpose() * (1 - c);
}

struct Misregistration {
  Mat3<double> rotation = Mat3<double>::Identity();
  Vec3d translation = Vec3d::Zero();

  Camera<double> apply(const Camera<double>& cam) const {
    Camera<double> out = cam;
    out.rotation = rotation * cam.rotation;
    out.translation = rotation * cam.translation + translation;
    return out;
  }
};

Vec3d random_unit_vector(Pcg32& rng) {
  for (;;) {
    Vec3d v(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    double n = v.norm();
    if (n > 1e-3 && n <= 1.0) return v / n;
  }
}

std::string frame_name(int idx) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d.png", idx);
  return buf;
}

}  // namespace

DatasetManifest generate_dataset(const SceneSpec& spec, const std::string& out_dir,
                                 std::uint64_t seed, int n_workers) {
  spec.validate();
  int n = spec.n_parts();
  require(n <= 16, "generate_dataset: too many parts");

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir)) throw IoError("generate_dataset: cannot create " + out_dir);

  std::vector<StateId> train_states, eval_states;
  for (std::uint32_t bits = 0; bits < (1u << n); ++bits) {
    StateId st{bits, n};
    (st.popcount() <= 1 ? train_states : eval_states).push_back(st);
  }

  // per-state trajectory misregistration; canonical is the anchor
  std::map<std::uint32_t, Misregistration> misreg;
  for (const StateId& st : train_states) {
    Misregistration m;
    if (st.bits != 0 && (spec.jitter_deg > 0 || spec.jitter_pos > 0)) {
      Pcg32 rng(mix_seed({seed, 0x6a697474ull, st.bits}));
      m.rotation = axis_angle_rotation(random_unit_vector(rng), spec.jitter_deg * M_PI / 180.0);
      m.translation = random_unit_vector(rng) * spec.jitter_pos;
    }
    misreg[st.bits] = m;
  }

  DatasetManifest manifest;
  manifest.scene = spec.name;
  manifest.n = n;
  manifest.width = spec.image_width;
  manifest.height = spec.image_height;
  manifest.root = out_dir;

  struct Job {
    StateId state;
    bool eval;
    int view_idx;
    Camera<double> nominal;
    Camera<double> actual;
  };
  std::vector<Job> jobs;
  for (const StateId& st : train_states) {
    for (int k = 0; k < spec.train_views_per_state; ++k) {
      Camera<double> nominal = arc_camera(spec, k, spec.train_views_per_state, false);
      jobs.push_back({st, false, k, nominal, misreg[st.bits].apply(nominal)});
    }
  }
  for (const StateId& st : eval_states) {
    for (int k = 0; k < spec.eval_views_per_state; ++k) {
      Camera<double> nominal = arc_camera(spec, k, spec.eval_views_per_state, true);
      jobs.push_back({st, true, k, nominal, nominal});
    }
  }

  for (const Job& job : jobs) {
    std::string bits = job.state.to_bitstring();
    fs::create_directories(fs::path(out_dir) / "images" / bits, ec);
    for (int i = 1; i <= n; ++i)
      if (!job.state.part_open(i))
        fs::create_directories(fs::path(out_dir) / "masks" / bits / ("part" + std::to_string(i)), ec);
  }

  std::vector<FrameRecord> records(jobs.size());
  parallel_slots(static_cast<int>(jobs.size()), n_workers, [&](int j) {
    const Job& job = jobs[static_cast<size_t>(j)];
    std::string bits = job.state.to_bitstring();
    FrameRecord rec;
    rec.state = job.state;
    rec.eval = job.eval;
    rec.camera = job.nominal;
    rec.image_path = "images/" + bits + "/" + frame_name(job.view_idx);
    Image img = oracle_render(job.actual, job.state, spec);
    write_png(img, (fs::path(out_dir) / rec.image_path).string());
    for (int i = 1; i <= n; ++i) {
      if (job.state.part_open(i)) continue;
      std::string mpath = "masks/" + bits + "/part" + std::to_string(i) + "/" + frame_name(job.view_idx);
      Image mask = oracle_part_mask(job.actual, job.state, spec, i);
      write_png(mask, (fs::path(out_dir) / mpath).string());
      rec.mask_paths[i] = mpath;
    }
    records[static_cast<size_t>(j)] = std::move(rec);
  });
  manifest.frames = std::move(records);

  save_manifest(manifest, (fs::path(out_dir) / "manifest.json").string());
  return manifest;
}

// ---- manifest i/o -----------------------------------------------------------

void DatasetManifest::validate(bool check_files) const {
  require(version == 1, "manifest: unsupported version");
  require(n >= 0 && n <= 16, "manifest: part count out of range");
  require(width > 0 && height > 0, "manifest: bad image size");
  for (const auto& f : frames) {
    require(f.state.n == n, "manifest: frame state width mismatch");
    if (!f.eval)
      require(f.state.popcount() <= 1, "manifest: train frame with popcount > 1");
    else
      require(f.state.popcount() >= 2, "manifest: eval frame with popcount < 2");
    f.camera.validate();
    if (check_files) {
      if (!fs::exists(fs::path(root) / f.image_path))
        throw IoError("manifest: missing image " + f.image_path);
      for (const auto& [part, mpath] : f.mask_paths)
        if (!fs::exists(fs::path(root) / mpath)) throw IoError("manifest: missing mask " + mpath);
    }
  }
}

namespace {

json camera_to_json(const Camera<double>& cam) {
  json j;
  j["width"] = cam.width;
  j["height"] = cam.height;
  j["fx"] = cam.fx;
  j["fy"] = cam.fy;
  j["cx"] = cam.cx;
  j["cy"] = cam.cy;
  std::vector<double> rot(9);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) rot[static_cast<size_t>(r * 3 + c)] = cam.rotation(r, c);
  j["rotation"] = rot;
  j["translation"] = {cam.translation.x(), cam.translation.y(), cam.translation.z()};
  return j;
}

Camera<double> camera_from_json(const json& j) {
  Camera<double> cam;
  cam.width = j.at("width");
  cam.height = j.at("height");
  cam.fx = j.at("fx");
  cam.fy = j.at("fy");
  cam.cx = j.at("cx");
  cam.cy = j.at("cy");
  auto rot = j.at("rotation");
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) cam.rotation(r, c) = rot.at(static_cast<size_t>(r * 3 + c));
  auto tr = j.at("translation");
  cam.translation = Vec3d(tr.at(0), tr.at(1), tr.at(2));
  return cam;
}

}  // namespace

void save_manifest(const DatasetManifest& manifest, const std::string& path) {
  json j;
  j["version"] = manifest.version;
  j["scene"] = manifest.scene;
  j["n"] = manifest.n;
  j["width"] = manifest.width;
  j["height"] = manifest.height;
  json frames = json::array();
  for (const auto& f : manifest.frames) {
    json jf;
    jf["state"] = f.state.to_bitstring();
    jf["split"] = f.eval ? "eval" : "train";
    jf["image"] = f.image_path;
    json masks = json::object();
    for (const auto& [part, mpath] : f.mask_paths) masks[std::to_string(part)] = mpath;
    jf["masks"] = masks;
    jf["camera"] = camera_to_json(f.camera);
    frames.push_back(std::move(jf));
  }
  j["frames"] = std::move(frames);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("save_manifest: cannot open " + path);
  out << j.dump(1) << "\n";
  if (!out) throw IoError("save_manifest: write failed " + path);
}

DatasetManifest load_manifest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_manifest: cannot open " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw IoError("load_manifest: parse error in " + path + ": " + e.what());
  }
  DatasetManifest m;
  m.version = j.at("version");
  m.scene = j.at("scene");
  m.n = j.at("n");
  m.width = j.at("width");
  m.height = j.at("height");
  m.root = fs::path(path).parent_path().string();
  if (m.root.empty()) m.root = ".";
  for (const auto& jf : j.at("frames")) {
    FrameRecord rec;
    rec.state = StateId::from_bitstring(jf.at("state"));
    rec.eval = jf.at("split") == "eval";
    rec.image_path = jf.at("image");
    for (auto it = jf.at("masks").begin(); it != jf.at("masks").end(); ++it)
      rec.mask_paths[std::stoi(it.key())] = it.value();
    rec.camera = camera_from_json(jf.at("camera"));
    m.frames.push_back(std::move(rec));
  }
  m.validate(true);
  return m;
}

// ---- dataset loading --------------------------------------------------------

const std::vector<int>& Dataset::train_frames(std::uint32_t state_bits) const {
  auto it = train_index.find(state_bits);
  require(it != train_index.end(), "Dataset: no training frames for requested state");
  return it->second;
}

std::vector<int> Dataset::eval_frames() const {
  std::vector<int> out;
  for (size_t i = 0; i < manifest.frames.size(); ++i)
    if (manifest.frames[i].eval) out.push_back(static_cast<int>(i));
  return out;
}

Dataset load_dataset(const std::string& manifest_path) {
  Dataset ds;
  ds.manifest = load_manifest(manifest_path);
  ds.images.resize(ds.manifest.frames.size());
  ds.masks.resize(ds.manifest.frames.size());
  for (size_t i = 0; i < ds.manifest.frames.size(); ++i) {
    const FrameRecord& f = ds.manifest.frames[i];
    Image img = read_png((fs::path(ds.manifest.root) / f.image_path).string());
    require(img.width == ds.manifest.width && img.height == ds.manifest.height &&
                img.channels == 3,
            "load_dataset: image shape mismatch: " + f.image_path);
    ds.images[i] = std::move(img);
    for (const auto& [part, mpath] : f.mask_paths) {
      Image m = read_png((fs::path(ds.manifest.root) / mpath).string());
      require(m.width == ds.manifest.width && m.height == ds.manifest.height && m.channels == 1,
              "load_dataset: mask shape mismatch: " + mpath);
      std::vector<std::uint8_t> bits(m.pixel_count());
      for (size_t k = 0; k < bits.size(); ++k) bits[k] = m.data[k] > 0.5f ? 1 : 0;
      ds.masks[i][part] = std::move(bits);
    }
    if (!f.eval) ds.train_index[f.state.bits].push_back(static_cast<int>(i));
  }
  return ds;
}

// ---- bundled scenes ---------------------------------------------------------

namespace {

BoxPrimitive box(double x0, double y0, double z0, double x1, double y1, double z1, float r,
                 float g, float b, float amplitude = 500.0f) {
  BoxPrimitive p;
  p.box.min = Vec3d(x0, y0, z0);
  p.box.max = Vec3d(x1, y1, z1);
  p.albedo = Vec3f(r, g, b);
  p.amplitude = amplitude;
  return p;
}

SceneSpec make_cabinet2() {
  SceneSpec s;
  s.name = "cabinet2";
  s.arc = {2.3, 0.9, 45.0, Vec3d(0, 0, 0)};
  // base plate and hollow body with a front divider between two door openings
  s.statics = {
      box(-0.80, -0.50, -0.55, 0.80, -0.44, 0.55, 0.45f, 0.45f, 0.47f),  // base plate
      box(-0.62, -0.42, -0.38, 0.62, -0.36, 0.38, 0.55f, 0.36f, 0.22f),  // bottom
      box(-0.62, 0.36, -0.38, 0.62, 0.42, 0.38, 0.55f, 0.36f, 0.22f),    // top
      box(-0.62, -0.36, -0.38, -0.56, 0.36, 0.38, 0.50f, 0.33f, 0.20f),  // left wall
      box(0.56, -0.36, -0.38, 0.62, 0.36, 0.38, 0.50f, 0.33f, 0.20f),    // right wall
      box(-0.62, -0.36, -0.38, 0.62, 0.36, -0.32, 0.58f, 0.40f, 0.26f),  // back wall
      box(-0.03, -0.36, 0.26, 0.03, 0.36, 0.38, 0.50f, 0.33f, 0.20f),    // divider
  };
  MovablePart door1;
  door1.closed = {box(-0.56, -0.36, 0.32, -0.03, 0.36, 0.38, 0.75f, 0.15f, 0.12f)};
  door1.open = {box(-0.56, -0.36, 0.38, -0.50, 0.36, 0.91, 0.75f, 0.15f, 0.12f)};
  door1.reveal = {box(-0.45, -0.36, -0.20, -0.14, -0.04, 0.12, 0.20f, 0.70f, 0.30f)};
  MovablePart door2;
  door2.closed = {box(0.03, -0.36, 0.32, 0.56, 0.36, 0.38, 0.15f, 0.30f, 0.80f)};
  door2.open = {box(0.50, -0.36, 0.38, 0.56, 0.36, 0.91, 0.15f, 0.30f, 0.80f)};
  door2.reveal = {box(0.14, -0.36, -0.20, 0.45, -0.04, 0.12, 0.85f, 0.75f, 0.20f)};
  s.parts = {door1, door2};
  return s;
}

SceneSpec make_drawer3() {
  SceneSpec s;
  s.name = "drawer3";
  s.arc = {2.3, 0.85, 45.0, Vec3d(0, 0, 0)};
  s.statics = {
      box(-0.70, -0.62, -0.50, 0.70, -0.56, 0.50, 0.45f, 0.45f, 0.47f),  // base plate
      box(-0.45, -0.54, -0.30, 0.45, -0.48, 0.30, 0.52f, 0.38f, 0.24f),  // bottom
      box(-0.45, 0.48, -0.30, 0.45, 0.54, 0.30, 0.52f, 0.38f, 0.24f),    // top
      box(-0.45, -0.48, -0.30, -0.39, 0.48, 0.30, 0.48f, 0.34f, 0.21f),  // left
      box(0.39, -0.48, -0.30, 0.45, 0.48, 0.30, 0.48f, 0.34f, 0.21f),    // right
      box(-0.45, -0.48, -0.30, 0.45, 0.48, -0.24, 0.55f, 0.41f, 0.27f),  // back
      box(-0.39, -0.18, -0.24, 0.39, -0.14, 0.30, 0.48f, 0.34f, 0.21f),  // shelf 1/2
      box(-0.39, 0.14, -0.24, 0.39, 0.18, 0.30, 0.48f, 0.34f, 0.21f),    // shelf 2/3
  };
  // slide far enough that the open tray clears the closed front face; the
  // two have different albedos, and the density-difference composition rule
  // cannot separate same-density overlaps
  auto drawer = [&](double y0, double y1, float r, float g, float b, float cr, float cg,
                    float cb) {
    MovablePart part;
    part.closed = {
        box(-0.39, y0, 0.24, 0.39, y1, 0.30, r, g, b),                   // front face
        box(-0.36, y0, -0.20, 0.36, y0 + 0.06, 0.24, 0.42f, 0.30f, 0.19f),  // tray floor
    };
    const double dz = 0.52;
    part.open = {
        box(-0.39, y0, 0.24 + dz, 0.39, y1, 0.30 + dz, r, g, b),
        box(-0.36, y0, -0.20 + dz, 0.36, y0 + 0.06, 0.24 + dz, 0.42f, 0.30f, 0.19f),
    };
    part.reveal = {
        box(-0.15, y0 + 0.06, -0.05 + dz, 0.15, y0 + 0.20, 0.15 + dz, cr, cg, cb),
    };
    return part;
  };
  s.parts = {
      drawer(-0.48, -0.18, 0.16f, 0.55f, 0.55f, 0.85f, 0.30f, 0.25f),
      drawer(-0.14, 0.14, 0.80f, 0.45f, 0.15f, 0.25f, 0.60f, 0.85f),
      drawer(0.18, 0.48, 0.55f, 0.25f, 0.60f, 0.90f, 0.80f, 0.25f),
  };
  return s;
}

SceneSpec make_vitrine2() {
  SceneSpec s;
  s.name = "vitrine2";
  s.arc = {2.3, 0.8, 45.0, Vec3d(0, 0, 0)};
  s.statics = {
      box(-0.75, -0.60, -0.55, 0.75, -0.54, 0.55, 0.45f, 0.45f, 0.47f),  // base plate
      box(-0.60, -0.54, -0.35, 0.60, -0.48, 0.35, 0.50f, 0.35f, 0.22f),  // bottom
      box(-0.60, 0.42, -0.35, 0.60, 0.48, 0.35, 0.50f, 0.35f, 0.22f),    // top
      box(-0.60, -0.48, -0.29, -0.54, 0.42, 0.35, 0.46f, 0.32f, 0.20f),  // left
      box(0.54, -0.48, -0.29, 0.60, 0.42, 0.35, 0.46f, 0.32f, 0.20f),    // right
      box(-0.60, -0.48, -0.35, 0.60, 0.42, -0.29, 0.52f, 0.38f, 0.25f),  // back
      // gadgets on display, visible through the glass in every state
      box(-0.42, -0.48, -0.10, -0.22, -0.20, 0.10, 0.85f, 0.20f, 0.18f),
      box(-0.10, -0.48, -0.15, 0.10, -0.28, 0.05, 0.20f, 0.75f, 0.30f),
      box(0.22, -0.48, -0.08, 0.40, -0.12, 0.12, 0.22f, 0.35f, 0.85f),
  };
  const float glass_amp = 5.0f;
  MovablePart panel1;
  panel1.closed = {box(-0.54, -0.48, 0.29, 0.00, 0.42, 0.35, 0.70f, 0.85f, 0.90f, glass_amp)};
  panel1.open = {box(-0.54, -0.48, 0.35, -0.48, 0.42, 0.89, 0.70f, 0.85f, 0.90f, glass_amp)};
  MovablePart panel2;
  panel2.closed = {box(0.00, -0.48, 0.29, 0.54, 0.42, 0.35, 0.70f, 0.85f, 0.90f, glass_amp)};
  panel2.open = {box(0.48, -0.48, 0.35, 0.54, 0.42, 0.89, 0.70f, 0.85f, 0.90f, glass_amp)};
  s.parts = {panel1, panel2};
  return s;
}

}  // namespace

std::vector<SceneSpec> bundled_scenes() { return {make_cabinet2(), make_drawer3(), make_vitrine2()}; }

SceneSpec bundled_scene(const std::string& name) {
  for (SceneSpec& s : bundled_scenes())
    if (s.name == name) return s;
  throw ContractError("unknown scene: " + name + " (available: cabinet2, drawer3, vitrine2)");
}

}  // namespace int3d
