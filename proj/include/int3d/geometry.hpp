#pragma once

#include <Eigen/Geometry>
#include <Eigen/LU>

#include <cmath>
#include <limits>
#include <optional>
#include <utility>

#include "int3d/common.hpp"

namespace int3d {

/// Axis-aligned box, min < max componentwise.
template <typename S>
struct Aabb {
  Vec3<S> min = Vec3<S>::Constant(-1);
  Vec3<S> max = Vec3<S>::Constant(1);

  Vec3<S> extent() const { return max - min; }
  S diagonal() const { return extent().norm(); }
  Vec3<S> center() const { return (min + max) * S(0.5); }
  bool contains(const Vec3<S>& p) const {
    return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
  }
  void validate() const {
    require((min.array() < max.array()).all(), "Aabb: min must be < max componentwise");
  }
};

template <typename S>
struct Ray {
  Vec3<S> origin;
  Vec3<S> direction;  // unit length
  S t_near = 0;
  S t_far = std::numeric_limits<S>::infinity();

  Vec3<S> at(S t) const { return origin + t * direction; }
};

/// Pinhole camera, no distortion. Camera space is right-handed with x right,
/// y up and the view direction along -z; image coordinates are x right,
/// y down. `rotation`/`translation` map camera space to world space.
template <typename S>
struct Camera {
  int width = 0;
  int height = 0;
  S fx = 0, fy = 0;
  S cx = 0, cy = 0;
  Mat3<S> rotation = Mat3<S>::Identity();
  Vec3<S> translation = Vec3<S>::Zero();

  void validate() const {
    require(width > 0 && height > 0, "Camera: width/height must be positive");
    require(fx > 0 && fy > 0, "Camera: focal lengths must be positive");
    Mat3<S> rtr = rotation.transpose() * rotation;
    require((rtr - Mat3<S>::Identity()).cwiseAbs().maxCoeff() <= S(1e-6),
            "Camera: rotation is not orthonormal");
    require(std::abs(rotation.determinant() - S(1)) <= S(1e-6),
            "Camera: rotation determinant is not +1");
  }

  template <typename T>
  Camera<T> cast() const {
    Camera<T> c;
    c.width = width;
    c.height = height;
    c.fx = static_cast<T>(fx);
    c.fy = static_cast<T>(fy);
    c.cx = static_cast<T>(cx);
    c.cy = static_cast<T>(cy);
    c.rotation = rotation.template cast<T>();
    c.translation = translation.template cast<T>();
    return c;
  }
};

/// Ray through image point (px, py). The caller supplies pixel-center
/// coordinates (px + 0.5 convention) when tracing whole pixels.
template <typename S>
Ray<S> pixel_to_ray(const Camera<S>& cam, S px, S py) {
  Ray<S> ray;
  Vec3<S> dir_cam((px - cam.cx) / cam.fx, (cam.cy - py) / cam.fy, S(-1));
  ray.direction = (cam.rotation * dir_cam).normalized();
  ray.origin = cam.translation;
  return ray;
}

/// Projects a world point back to image coordinates; empty when the point is
/// not in front of the camera.
template <typename S>
std::optional<std::pair<S, S>> project_to_pixel(const Camera<S>& cam, const Vec3<S>& p) {
  Vec3<S> pc = cam.rotation.transpose() * (p - cam.translation);
  if (pc.z() >= 0) return std::nullopt;
  S inv = S(1) / -pc.z();
  return std::make_pair(cam.cx + cam.fx * pc.x() * inv, cam.cy - cam.fy * pc.y() * inv);
}

/// Slab intersection. Returns (t_enter, t_exit) with t_enter clamped to 0
/// for origins inside the box; absent on a miss.
template <typename S>
std::optional<std::pair<S, S>> intersect_aabb(const Ray<S>& ray, const Aabb<S>& box) {
  S t0 = 0;
  S t1 = std::numeric_limits<S>::infinity();
  for (int a = 0; a < 3; ++a) {
    S o = ray.origin[a];
    S d = ray.direction[a];
    if (d == S(0)) {
      if (o < box.min[a] || o > box.max[a]) return std::nullopt;
      continue;
    }
    S inv = S(1) / d;
    S ta = (box.min[a] - o) * inv;
    S tb = (box.max[a] - o) * inv;
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 >= t1) return std::nullopt;
  }
  return std::make_pair(t0, t1);
}

/// Affine map of `box` onto the unit cube; out-of-box points clamp to [0,1].
template <typename S>
Vec3<S> normalize_point(const Vec3<S>& p, const Aabb<S>& box) {
  Vec3<S> u = (p - box.min).cwiseQuotient(box.extent());
  return u.cwiseMax(S(0)).cwiseMin(S(1));
}

/// Camera-to-world pose looking from `eye` toward `target`.
template <typename S>
void look_at(Camera<S>& cam, const Vec3<S>& eye, const Vec3<S>& target, const Vec3<S>& up) {
  Vec3<S> z = (eye - target).normalized();  // camera looks along -z
  Vec3<S> x = up.cross(z).normalized();
  Vec3<S> y = z.cross(x);
  cam.rotation.col(0) = x;
  cam.rotation.col(1) = y;
  cam.rotation.col(2) = z;
  cam.translation = eye;
}

}  // namespace int3d
