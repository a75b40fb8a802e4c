#include <doctest.h>

#include "int3d/geometry.hpp"
#include "int3d/scenes.hpp"

using namespace int3d;

TEST_SUITE_BEGIN("geometry");

TEST_CASE("pixel_to_ray principal point looks down -z under identity pose") {
  Camera<double> cam;
  cam.width = cam.height = 2;
  cam.fx = cam.fy = 1;
  cam.cx = cam.cy = 0;
  Ray<double> ray = pixel_to_ray(cam, 0.0, 0.0);
  CHECK(ray.direction.x() == doctest::Approx(0));
  CHECK(ray.direction.y() == doctest::Approx(0));
  CHECK(ray.direction.z() == doctest::Approx(-1));
  CHECK(ray.origin.norm() == 0);
}

TEST_CASE("translating the pose translates the origin, direction unchanged") {
  Camera<double> cam;
  cam.width = cam.height = 100;
  cam.fx = cam.fy = 120;
  cam.cx = cam.cy = 50;
  Ray<double> base = pixel_to_ray(cam, 13.0, 72.0);
  Vec3d v(0.3, -1.2, 2.5);
  cam.translation += v;
  Ray<double> moved = pixel_to_ray(cam, 13.0, 72.0);
  CHECK((moved.origin - base.origin - v).norm() == doctest::Approx(0).epsilon(1e-12));
  CHECK((moved.direction - base.direction).norm() == doctest::Approx(0).epsilon(1e-12));
}

TEST_CASE("cabinet2 camera 0 center pixel ray hits the scene box") {
  SceneSpec spec = bundled_scene("cabinet2");
  Camera<double> cam = arc_camera(spec, 0, spec.train_views_per_state, false);
  CHECK(cam.width == 128);
  Ray<double> ray = pixel_to_ray(cam, 64.5, 64.5);
  auto hit = intersect_aabb(ray, spec.world);
  REQUIRE(hit.has_value());
  CHECK(hit->first < hit->second);
}

TEST_CASE("reprojection recovers the pixel to 1e-4 px at any depth") {
  SceneSpec spec = bundled_scene("cabinet2");
  Pcg32 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    int idx = static_cast<int>(rng.next_below(60));
    Camera<double> cam = arc_camera(spec, idx, 60, false);
    double px = rng.uniform(0, cam.width);
    double py = rng.uniform(0, cam.height);
    Ray<double> ray = pixel_to_ray(cam, px, py);
    double t = rng.uniform(0.05, 50.0);
    auto back = project_to_pixel(cam, ray.at(t));
    REQUIRE(back.has_value());
    CHECK(std::abs(back->first - px) < 1e-4);
    CHECK(std::abs(back->second - py) < 1e-4);
  }
}

TEST_CASE("camera validation rejects bad rotations") {
  Camera<double> cam;
  cam.width = cam.height = 4;
  cam.fx = cam.fy = 1;
  cam.rotation(0, 0) = 2.0;
  CHECK_THROWS_AS(cam.validate(), ContractError);
  cam.rotation = Mat3<double>::Identity();
  cam.rotation.col(0) *= -1;  // determinant -1
  CHECK_THROWS_AS(cam.validate(), ContractError);
}

TEST_CASE("intersect_aabb axis-aligned hit") {
  Ray<double> ray{Vec3d(0, 0, -2), Vec3d(0, 0, 1)};
  Aabb<double> box{Vec3d(-1, -1, -1), Vec3d(1, 1, 1)};
  auto hit = intersect_aabb(ray, box);
  REQUIRE(hit.has_value());
  CHECK(hit->first == doctest::Approx(1.0));
  CHECK(hit->second == doctest::Approx(3.0));
}

TEST_CASE("intersect_aabb parallel miss outside a slab") {
  Ray<double> ray{Vec3d(0, 2, -5), Vec3d(0, 0, 1)};
  Aabb<double> box{Vec3d(-1, -1, -1), Vec3d(1, 1, 1)};
  CHECK(!intersect_aabb(ray, box).has_value());
}

TEST_CASE("intersect_aabb clamps interior origins to zero") {
  Ray<double> ray{Vec3d(0.2, -0.1, 0.3), Vec3d(0, 0, 1)};
  Aabb<double> box{Vec3d(-1, -1, -1), Vec3d(1, 1, 1)};
  auto hit = intersect_aabb(ray, box);
  REQUIRE(hit.has_value());
  CHECK(hit->first == 0.0);
  CHECK(hit->second == doctest::Approx(0.7));
}

TEST_CASE("intersect_aabb agrees with a marching oracle on random rays") {
  // oracle: 10000 uniform steps over [0, 12] (covers any origin in +-3 of a
  // unit-scale box); first/last step inside the box
  Aabb<double> box{Vec3d(-0.7, -0.4, -0.9), Vec3d(0.5, 0.8, 0.6)};
  Pcg32 rng(99);
  const int kSteps = 10000;
  const double kMaxT = 12.0;
  const double dt = kMaxT / kSteps;
  int hits = 0;
  for (int trial = 0; trial < 800; ++trial) {
    Ray<double> ray;
    ray.origin = Vec3d(rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3));
    ray.direction = Vec3d(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    if (ray.direction.norm() < 1e-3) continue;
    ray.direction.normalize();
    double first = -1, last = -1;
    for (int k = 0; k < kSteps; ++k) {
      double t = (k + 0.5) * dt;
      if (box.contains(ray.at(t))) {
        if (first < 0) first = t;
        last = t;
      }
    }
    auto hit = intersect_aabb(ray, box);
    if (first < 0) {
      // oracle missed: any analytic overlap must be shorter than one step
      if (hit) CHECK(hit->second - hit->first < dt);
      continue;
    }
    ++hits;
    REQUIRE(hit.has_value());
    CHECK(std::abs(hit->first - first) < dt);
    CHECK(std::abs(hit->second - last) < dt);
  }
  CHECK(hits > 20);
}

TEST_CASE("normalize_point maps corners, center and clamps") {
  Aabb<double> box{Vec3d(-2, 0, 1), Vec3d(2, 4, 3)};
  CHECK((normalize_point(box.min, box) - Vec3d(0, 0, 0)).norm() == 0);
  CHECK((normalize_point(box.center(), box) - Vec3d(0.5, 0.5, 0.5)).norm() == 0);
  Vec3d outside(5, -1, 4);
  Vec3d u = normalize_point(outside, box);
  CHECK(u.x() == 1.0);
  CHECK(u.y() == 0.0);
  CHECK(u.z() == 1.0);
}

TEST_CASE("aabb validation") {
  Aabb<double> bad{Vec3d(1, 0, 0), Vec3d(1, 1, 1)};
  CHECK_THROWS_AS(bad.validate(), ContractError);
}

TEST_SUITE_END();
