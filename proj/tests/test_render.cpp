#include <doctest.h>

#include <cmath>

#include "int3d/render.hpp"

using namespace int3d;

TEST_SUITE_BEGIN("render");

namespace {

RaySamples<double> make_samples(std::vector<double> t, std::vector<double> delta,
                                std::vector<double> sigma, std::vector<Vec3d> color,
                                double t_enter, double t_exit) {
  RaySamples<double> s;
  s.t = std::move(t);
  s.delta = std::move(delta);
  s.sigma = std::move(sigma);
  s.color = std::move(color);
  s.t_enter = t_enter;
  s.t_exit = t_exit;
  return s;
}

/// O(K^2) distortion reference, straight from the double-sum definition.
double distortion_reference(const RaySamples<double>& s) {
  double pair = 0, self = 0;
  for (size_t i = 0; i < s.size(); ++i) {
    for (size_t j = 0; j < s.size(); ++j)
      pair += double(s.weight[i]) * double(s.weight[j]) *
              std::abs(s.midpoint_s(i) - s.midpoint_s(j));
    self += double(s.weight[i]) * double(s.weight[i]) * s.delta_s(i);
  }
  return pair + self / 3.0;
}

OccupancyGrid full_grid(int res = 8) {
  OccupancyGrid g;
  g.init(res, Aabb<double>{Vec3d(-1, -1, -1), Vec3d(1, 1, 1)}, OccupancyGrid::Mode::Independent);
  std::fill(g.density_ema.begin(), g.density_ema.end(), 1.0f);
  g.recompute_bits();
  return g;
}

}  // namespace

TEST_CASE("composite single sample closed form") {
  auto s = make_samples({0.5}, {1.0}, {std::log(2.0)}, {Vec3d(1, 0, 0)}, 0, 1);
  RenderResult<double> r = composite(s);
  CHECK(r.color.x() == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(r.color.y() == 0.0);
  CHECK(r.opacity == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(s.weight[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(s.transmittance[0] == 1.0);
}

TEST_CASE("composite of a transparent ray") {
  auto s = make_samples({0.2, 0.4, 0.6}, {0.2, 0.2, 0.2}, {0, 0, 0},
                        {Vec3d(1, 1, 1), Vec3d(1, 1, 1), Vec3d(1, 1, 1)}, 0, 1);
  RenderResult<double> r = composite(s);
  CHECK(r.color.norm() == 0.0);
  CHECK(r.opacity == 0.0);
  CHECK(r.final_transmittance == 1.0);
}

TEST_CASE("weights and transmittance obey the compositing identities") {
  Pcg32 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    size_t n = 1 + rng.next_below(40);
    std::vector<double> t, delta, sigma;
    std::vector<Vec3d> color;
    double cursor = 0.01;
    for (size_t k = 0; k < n; ++k) {
      double d = rng.uniform(0.005, 0.05);
      t.push_back(cursor + d / 2);
      delta.push_back(d);
      sigma.push_back(rng.uniform(0, 30));
      color.emplace_back(rng.next_double(), rng.next_double(), rng.next_double());
      cursor += d;
    }
    auto s = make_samples(t, delta, sigma, color, 0, cursor + 0.01);
    RenderResult<double> r = composite(s);
    double wsum = 0;
    for (size_t k = 0; k < n; ++k) {
      CHECK(s.weight[k] ==
            doctest::Approx((1 - std::exp(-s.sigma[k] * s.delta[k])) * s.transmittance[k])
                .epsilon(1e-9));
      if (k + 1 < n)
        CHECK(s.transmittance[k + 1] ==
              doctest::Approx(s.transmittance[k] * std::exp(-s.sigma[k] * s.delta[k]))
                  .epsilon(1e-9));
      wsum += s.weight[k];
    }
    CHECK(s.transmittance[0] == 1.0);
    CHECK(wsum + r.final_transmittance == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(r.color.x() <= r.opacity + 1e-5);  // white-capped over black background
  }
}

TEST_CASE("compositing is order-sensitive") {
  auto fwd = make_samples({0.25, 0.75}, {0.5, 0.5}, {3.0, 0.2},
                          {Vec3d(1, 0, 0), Vec3d(0, 1, 0)}, 0, 1);
  auto rev = make_samples({0.25, 0.75}, {0.5, 0.5}, {0.2, 3.0},
                          {Vec3d(0, 1, 0), Vec3d(1, 0, 0)}, 0, 1);
  RenderResult<double> a = composite(fwd);
  RenderResult<double> b = composite(rev);
  CHECK(a.color != b.color);  // an occluder in front is not an occluder behind
}

TEST_CASE("distortion closed forms") {
  // single sample: pairwise term vanishes, (1/3) w^2 delta_s survives
  auto one = make_samples({0.35}, {0.1}, {50.0}, {Vec3d(1, 1, 1)}, 0, 1);
  composite(one);
  one.weight[0] = 1.0;  // the spec example fixes w = 1 directly
  CHECK(distortion_loss(one) == doctest::Approx(0.1 / 3.0).epsilon(1e-12));

  // two samples w=(0.5,0.5) at s=(0.2,0.8), delta_s=0.01
  auto two = make_samples({0.2, 0.8}, {0.01, 0.01}, {0, 0},
                          {Vec3d(0, 0, 0), Vec3d(0, 0, 0)}, 0, 1);
  composite(two);
  two.weight = {0.5, 0.5};
  CHECK(distortion_loss(two) == doctest::Approx(0.3 + 0.01 / 6.0).epsilon(1e-9));

  // all weights zero
  auto zero = make_samples({0.2, 0.8}, {0.01, 0.01}, {0, 0},
                           {Vec3d(0, 0, 0), Vec3d(0, 0, 0)}, 0, 1);
  composite(zero);
  CHECK(distortion_loss(zero) == 0.0);
}

TEST_CASE("distortion prefix-sum form equals the quadratic reference") {
  Pcg32 rng(8);
  for (int trial = 0; trial < 30; ++trial) {
    size_t n = 1 + rng.next_below(60);
    std::vector<double> t, delta, sigma;
    std::vector<Vec3d> color(n, Vec3d(0.5, 0.5, 0.5));
    double cursor = 0;
    for (size_t k = 0; k < n; ++k) {
      double d = rng.uniform(0.001, 0.04);
      t.push_back(cursor + d / 2);
      delta.push_back(d);
      sigma.push_back(rng.uniform(0, 40));
      cursor += d;
    }
    auto s = make_samples(t, delta, sigma, color, 0, cursor);
    composite(s);
    double fast = distortion_loss(s);
    double ref = distortion_reference(s);
    CHECK(fast == doctest::Approx(ref).epsilon(1e-6));
  }
}

TEST_CASE("opacity entropy closed forms") {
  CHECK(opacity_loss(1.0) == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(std::abs(opacity_loss(0.0)) < 1e-9);
  CHECK(opacity_loss(1.0 / M_E) == doctest::Approx(1.0 / M_E).epsilon(1e-8));
}

TEST_CASE("composite backward matches finite differences") {
  Pcg32 rng(17);
  size_t n = 12;
  std::vector<double> t, delta, sigma;
  std::vector<Vec3d> color;
  double cursor = 0;
  for (size_t k = 0; k < n; ++k) {
    double d = rng.uniform(0.01, 0.05);
    t.push_back(cursor + d / 2);
    delta.push_back(d);
    sigma.push_back(rng.uniform(0.1, 20));
    color.emplace_back(rng.next_double(), rng.next_double(), rng.next_double());
    cursor += d;
  }
  double t_exit = cursor;
  Vec3d gt(0.3, 0.6, 0.1);
  auto loss_of = [&](const std::vector<double>& sig, std::vector<double>* dsigma,
                     std::vector<Vec3d>* dcolor) {
    auto s = make_samples(t, delta, sig, color, 0, t_exit);
    RenderResult<double> r = composite(s);
    // mse + 0.7 * distortion + 0.3 * opacity entropy
    Vec3d diff = r.color - gt;
    double loss = diff.squaredNorm() + 0.7 * distortion_loss(s) + 0.3 * opacity_loss(r.opacity);
    if (dsigma) {
      std::vector<double> dw(n, 0.0);
      distortion_backward_core<double>(s.weight, s.t, s.delta, s.t_enter, s.t_exit, 0.7,
                                       std::span<double>(dw));
      double dO = 0.3 * opacity_loss_derivative(r.opacity);
      for (double& v : dw) v += dO;
      dsigma->assign(n, 0);
      dcolor->assign(n, Vec3d::Zero());
      composite_backward(s, std::span<const double>(dw), (2.0 * diff).eval(),
                         std::span<double>(*dsigma), std::span<Vec3d>(*dcolor));
    }
    return loss;
  };
  std::vector<double> dsigma;
  std::vector<Vec3d> dcolor;
  loss_of(sigma, &dsigma, &dcolor);
  for (size_t k = 0; k < n; ++k) {
    double h = 1e-6 * std::max(1.0, std::abs(sigma[k]));
    std::vector<double> sp = sigma, sm = sigma;
    sp[k] += h;
    sm[k] -= h;
    double fd = (loss_of(sp, nullptr, nullptr) - loss_of(sm, nullptr, nullptr)) / (2 * h);
    CHECK(dsigma[k] == doctest::Approx(fd).epsilon(1e-5));
  }
  // color gradient: w_k * dL/dC
  auto s = make_samples(t, delta, sigma, color, 0, t_exit);
  RenderResult<double> r = composite(s);
  for (size_t k = 0; k < n; ++k)
    CHECK(dcolor[k].x() == doctest::Approx(2 * (r.color - gt).x() * s.weight[k]).epsilon(1e-9));
}

TEST_CASE("march counts floor(span/dt) samples in a fully occupied grid") {
  OccupancyGrid grid = full_grid();
  Aabb<double> box{Vec3d(-1, -1, -1), Vec3d(1, 1, 1)};
  RenderConfig cfg;
  Ray<double> ray{Vec3d(0, 0, -2), Vec3d(0, 0, 1)};
  auto mp = march_positions(ray, grid, box, cfg);
  double span = mp.t_exit - mp.t_enter;
  CHECK(mp.t.size() == size_t(span / mp.dt));
  CHECK(mp.hit);
  for (size_t k = 0; k < mp.t.size(); ++k) {
    if (k > 0) CHECK(mp.t[k] > mp.t[k - 1]);
    CHECK(box.contains(mp.pos[k]));
  }
}

TEST_CASE("march returns empty samples for rays that miss the scene") {
  OccupancyGrid grid = full_grid();
  Aabb<double> box{Vec3d(-1, -1, -1), Vec3d(1, 1, 1)};
  Ray<double> ray{Vec3d(0, 5, -3), Vec3d(0, 0, 1)};
  auto s = march(ray, grid, box, RenderConfig{}, [](const Vec3d&, const Vec3d&) {
    return std::pair<double, Vec3d>(1.0, Vec3d::Ones());
  });
  CHECK(s.size() == 0);
  RenderResult<double> r = composite(s);
  CHECK(r.color.norm() == 0.0);  // background pixel
}

TEST_CASE("march with an unoccupied grid yields zero samples") {
  OccupancyGrid grid = full_grid();
  std::fill(grid.density_ema.begin(), grid.density_ema.end(), 0.0f);
  grid.recompute_bits();
  Aabb<double> box{Vec3d(-1, -1, -1), Vec3d(1, 1, 1)};
  Ray<double> ray{Vec3d(0, 0, -2), Vec3d(0, 0, 1)};
  auto mp = march_positions(ray, grid, box, RenderConfig{});
  CHECK(mp.hit);
  CHECK(mp.t.empty());
}

TEST_CASE("march skips to an occupied slab within one step") {
  OccupancyGrid grid = full_grid(16);
  std::fill(grid.density_ema.begin(), grid.density_ema.end(), 0.0f);
  for (size_t c = 0; c < grid.cell_count(); ++c) {
    Vec3d lo = grid.cell_min(c);
    if (lo.z() >= 0.25 - 1e-9 && lo.z() < 0.5 - 1e-9) grid.density_ema[c] = 1.0f;
  }
  grid.recompute_bits();
  Aabb<double> box{Vec3d(-1, -1, -1), Vec3d(1, 1, 1)};
  RenderConfig cfg;
  Ray<double> ray{Vec3d(0.1, 0.1, -2), Vec3d(0, 0, 1)};
  auto mp = march_positions(ray, grid, box, cfg);
  REQUIRE(!mp.t.empty());
  for (const auto& p : mp.pos) {
    CHECK(p.z() >= 0.25 - mp.dt);
    CHECK(p.z() <= 0.5 + mp.dt);
  }
}

TEST_CASE("march respects the per-ray sample cap") {
  OccupancyGrid grid = full_grid();
  Aabb<double> box{Vec3d(-1, -1, -1), Vec3d(1, 1, 1)};
  RenderConfig cfg;
  cfg.max_samples_per_ray = 7;
  Ray<double> ray{Vec3d(0, 0, -2), Vec3d(0, 0, 1)};
  auto mp = march_positions(ray, grid, box, cfg);
  CHECK(mp.t.size() == 7);
}

TEST_CASE("quadrature converges on a smooth analytic field") {
  // gaussian density bump with a smoothly varying color
  auto sigma_of = [](double t) {
    return 25.0 * std::exp(-(t - 1.6) * (t - 1.6) / (2 * 0.15 * 0.15));
  };
  auto color_of = [](double t) {
    return Vec3d(0.5 + 0.4 * std::sin(3 * t), 0.5 + 0.3 * std::cos(2 * t), 0.4);
  };
  Aabb<double> box{Vec3d(-1, -1, -1), Vec3d(1, 1, 1)};
  auto render_at = [&](int divisor) {
    double dt = box.diagonal() / divisor;
    double t_enter = 1.0, t_exit = 3.0;
    long total = long((t_exit - t_enter) / dt);
    RaySamples<double> s;
    s.t_enter = t_enter;
    s.t_exit = t_exit;
    for (long k = 0; k < total; ++k) {
      double t = t_enter + (k + 0.5) * dt;
      s.t.push_back(t);
      s.delta.push_back(dt);
      s.sigma.push_back(sigma_of(t));
      s.color.push_back(color_of(t));
    }
    return composite(s);
  };
  RenderResult<double> coarse = render_at(1024);
  RenderResult<double> fine = render_at(8192);
  for (int ch = 0; ch < 3; ++ch) CHECK(std::abs(coarse.color[ch] - fine.color[ch]) < 1e-3);
  CHECK(std::abs(coarse.opacity - fine.opacity) < 1e-3);
}

TEST_CASE("update_grid: independent mode decays toward an empty field") {
  OccupancyGrid grid = full_grid(8);
  // ceil(log_decay(tau / ema0)) updates clear every cell
  double ema0 = 1.0;
  int needed = int(std::ceil(std::log(grid.tau / ema0) / std::log(grid.decay)));
  auto zero_field = [](std::span<const Vec3<float>> pts, std::vector<float>& out) {
    out.assign(pts.size(), 0.0f);
  };
  for (int u = 0; u < needed; ++u) {
    CHECK(grid.occupied_fraction() > 0.0);
    update_grid(grid, zero_field, std::uint64_t(u), 7);
  }
  CHECK(grid.occupied_fraction() == 0.0);
}

TEST_CASE("update_grid: shared mode never unmarks occupied cells") {
  OccupancyGrid grid = full_grid(8);
  grid.mode = OccupancyGrid::Mode::Shared;
  auto zero_field = [](std::span<const Vec3<float>> pts, std::vector<float>& out) {
    out.assign(pts.size(), 0.0f);
  };
  for (int u = 0; u < 30; ++u) update_grid(grid, zero_field, std::uint64_t(u), 7);
  CHECK(grid.occupied_fraction() == 1.0);
}

TEST_CASE("update_grid is independent of the worker count") {
  auto field = [](std::span<const Vec3<float>> pts, std::vector<float>& out) {
    out.resize(pts.size());
    for (size_t i = 0; i < pts.size(); ++i) out[i] = pts[i].x() > 0 ? 0.8f : 0.001f;
  };
  OccupancyGrid g1 = full_grid(16), g2 = full_grid(16);
  update_grid(g1, field, 3, 11, 1);
  update_grid(g2, field, 3, 11, 4);
  CHECK(g1.density_ema == g2.density_ema);
  CHECK(g1.occupied == g2.occupied);
}

TEST_CASE("grid union covers every member grid") {
  OccupancyGrid a = full_grid(8), b = full_grid(8);
  std::fill(a.density_ema.begin(), a.density_ema.end(), 0.0f);
  std::fill(b.density_ema.begin(), b.density_ema.end(), 0.0f);
  a.density_ema[3] = 1.0f;
  b.density_ema[200] = 1.0f;
  a.recompute_bits();
  b.recompute_bits();
  const OccupancyGrid* grids[2] = {&a, &b};
  OccupancyGrid u = union_grids(std::span<const OccupancyGrid* const>(grids, 2));
  CHECK(u.occupied[3] == 1);
  CHECK(u.occupied[200] == 1);
  CHECK(u.occupied_fraction() == doctest::Approx(2.0 / 512.0));
}

TEST_SUITE_END();
