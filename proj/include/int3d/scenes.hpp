#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "int3d/common.hpp"
#include "int3d/field.hpp"
#include "int3d/geometry.hpp"
#include "int3d/image.hpp"
#include "int3d/render.hpp"

namespace int3d {

/// Constant-density axis-aligned box with a flat albedo.
struct BoxPrimitive {
  Aabb<double> box;
  Vec3f albedo = Vec3f::Zero();
  float amplitude = 500.0f;
};

/// One movable part: closed-pose and open-pose primitives (a rigid transform
/// of each other) plus interior contents that are active only when open.
struct MovablePart {
  std::vector<BoxPrimitive> closed;
  std::vector<BoxPrimitive> open;
  std::vector<BoxPrimitive> reveal;
};

/// Camera trajectory: a circle of look-at poses around the scene.
struct CameraArc {
  double radius = 2.3;
  double height = 0.9;
  double fov_deg = 45.0;
  Vec3d target = Vec3d::Zero();
};

/// Analytic interactive scene; ground truth for all 2^n states.
struct SceneSpec {
  std::string name;
  std::vector<BoxPrimitive> statics;
  std::vector<MovablePart> parts;
  CameraArc arc;
  int image_width = 128;
  int image_height = 128;
  int train_views_per_state = 60;
  int eval_views_per_state = 20;
  double jitter_deg = 0.0;   // per-state trajectory misregistration, degrees
  double jitter_pos = 0.0;   // and world units
  Aabb<double> world{Vec3d(-1, -1, -1), Vec3d(1, 1, 1)};

  int n_parts() const { return static_cast<int>(parts.size()); }
  void validate() const;
};

/// Primitives active in a given state, in the global deterministic order
/// (statics, then parts by index: closed for unset bits, open + reveal for
/// set bits).
std::vector<BoxPrimitive> active_primitives(const SceneSpec& spec, const StateId& state);

/// Exact field sample: density is the max amplitude over active primitives
/// containing p, color the albedo of that primitive (ties: earliest in the
/// global order); zero density and black outside everything.
FieldSample<float> oracle_sample(const Vec3d& p, const StateId& state, const SceneSpec& spec);

/// Ground-truth render: fine uniform marching (step = world diagonal /
/// `step_divisor`) of the oracle field through the standard compositing
/// quadrature, black background.
Image oracle_render(const Camera<double>& camera, const StateId& state, const SceneSpec& spec,
                    int step_divisor = 4096);

/// Renders a state by applying the max-density-difference selection rule to
/// the oracle's per-state samples over the same march lattice; restricted to
/// popcount 0 it is the identical computation as oracle_render.
Image oracle_render_selected(const Camera<double>& camera, const StateId& state,
                             const SceneSpec& spec, int step_divisor = 4096);

/// Binary mask of the pixels whose ray first hits part `part`'s closed-pose
/// volume (the analytic stand-in for segmenting an inactive movable part).
Image oracle_part_mask(const Camera<double>& camera, const StateId& state, const SceneSpec& spec,
                       int part);

/// Nominal (unjittered) trajectory pose `idx` of `count` around the arc.
/// Eval trajectories are offset half a step so they differ from train poses.
Camera<double> arc_camera(const SceneSpec& spec, int idx, int count, bool eval_offset);

/// Per-frame dataset record. Camera is the recorded (nominal) pose; under
/// trajectory jitter the pixels were rendered from a perturbed pose.
struct FrameRecord {
  StateId state;
  bool eval = false;
  std::string image_path;               // relative to the manifest
  std::map<int, std::string> mask_paths;  // inactive parts only
  Camera<double> camera;
};

struct DatasetManifest {
  int version = 1;
  std::string scene;
  int n = 0;
  int width = 0, height = 0;
  std::vector<FrameRecord> frames;
  std::string root;  // directory containing manifest.json; set on load

  void validate(bool check_files) const;
};

/// Renders and writes the full dataset: 60 train views for every state with
/// popcount <= 1, 20 eval views for every state with popcount >= 2, per-part
/// masks of inactive parts, and manifest.json. Per-state trajectory jitter,
/// when configured, perturbs the true camera of non-canonical train states
/// while the manifest records the nominal pose.
DatasetManifest generate_dataset(const SceneSpec& spec, const std::string& out_dir,
                                 std::uint64_t seed, int n_workers = 1);

void save_manifest(const DatasetManifest& manifest, const std::string& path);
DatasetManifest load_manifest(const std::string& path);

/// Manifest plus decoded images and masks, ready for training/evaluation.
struct Dataset {
  DatasetManifest manifest;
  std::vector<Image> images;                         // per frame
  std::vector<std::map<int, std::vector<std::uint8_t>>> masks;  // per frame, part -> bitmask

  int n() const { return manifest.n; }
  int width() const { return manifest.width; }
  int height() const { return manifest.height; }

  /// Frame indices of one training state, in manifest order.
  const std::vector<int>& train_frames(std::uint32_t state_bits) const;
  std::vector<int> eval_frames() const;

  Vec3f pixel(int frame, int x, int y) const {
    const Image& im = images[static_cast<size_t>(frame)];
    return Vec3f(im.at(x, y, 0), im.at(x, y, 1), im.at(x, y, 2));
  }

  std::map<std::uint32_t, std::vector<int>> train_index;
};

Dataset load_dataset(const std::string& manifest_path);

/// The three bundled scenes, in increasing order of difficulty:
/// "cabinet2" (two hinged doors), "drawer3" (three sliding drawers),
/// "vitrine2" (two semi-transparent panels).
std::vector<SceneSpec> bundled_scenes();
SceneSpec bundled_scene(const std::string& name);

}  // namespace int3d
