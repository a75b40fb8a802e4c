#include <doctest.h>

#include "int3d/discrepancy.hpp"

using namespace int3d;

TEST_SUITE_BEGIN("discrepancy");

namespace {

struct Tensors {
  DiscrepancyConfig cfg;
  std::vector<double> x, y, z;
  explicit Tensors(int r = 16, int fd = 4, double fill = 1.0)
      : cfg{r, fd},
        x(size_t(r) * fd, fill),
        y(size_t(r) * fd, fill),
        z(size_t(r) * fd, fill) {}
};

}  // namespace

TEST_CASE("nearest_row uses round-to-nearest with clamping") {
  CHECK(nearest_row(0.0, 512) == 0);
  CHECK(nearest_row(1.0, 512) == 511);
  CHECK(nearest_row(0.5, 512) == 256);  // round(255.5) rounds half away from zero
  CHECK(nearest_row(-0.2, 512) == 0);
  CHECK(nearest_row(1.7, 512) == 511);
}

TEST_CASE("state_feature is all ones at initialization") {
  Tensors t;
  std::vector<double> out(4);
  state_feature(Vec3d(0.3, 0.8, 0.1), t.cfg, std::span<const double>(t.x),
                std::span<const double>(t.y), std::span<const double>(t.z), out.data());
  for (double v : out) CHECK(v == 1.0);
}

TEST_CASE("state_feature multiplies the three selected rows") {
  Tensors t;
  // p = (0,0,0) selects row 0 on every axis
  for (int k = 0; k < 4; ++k) {
    t.x[size_t(k)] = 2.0;
    t.y[size_t(k)] = 3.0;
    t.z[size_t(k)] = 0.5;
  }
  std::vector<double> out(4);
  state_feature(Vec3d(0, 0, 0), t.cfg, std::span<const double>(t.x), std::span<const double>(t.y),
                std::span<const double>(t.z), out.data());
  for (double v : out) CHECK(v == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("modulate is the identity for all-ones state features") {
  std::vector<double> h{0.1, -2.0, 5.5, 0.0};
  std::vector<double> t(4, 1.0), out(4);
  modulate(std::span<const double>(h), std::span<const double>(t), out.data());
  for (size_t k = 0; k < 4; ++k) CHECK(out[k] == h[k]);
  std::vector<double> zero(4, 0.0);
  modulate(std::span<const double>(zero), std::span<const double>(t), out.data());
  for (double v : out) CHECK(v == 0.0);
}

TEST_CASE("modulate rejects mismatched lengths") {
  std::vector<double> h(4, 1.0), t(6, 1.0), out(6);
  CHECK_THROWS_AS(modulate(std::span<const double>(h), std::span<const double>(t), out.data()),
                  ContractError);
}

TEST_CASE("consistency loss closed forms") {
  Tensors t;
  CHECK(consistency_loss(std::span<const double>(t.x), std::span<const double>(t.y),
                         std::span<const double>(t.z)) == 0.0);
  for (auto& v : t.y) v = 1.5;
  CHECK(consistency_loss(std::span<const double>(t.x), std::span<const double>(t.y),
                         std::span<const double>(t.z)) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("consistency decreases monotonically under gradient descent") {
  Tensors t(16, 4, 1.0);
  Pcg32 rng(4);
  for (auto& v : t.x) v = rng.uniform(0.5, 1.5);
  for (auto& v : t.y) v = rng.uniform(0.5, 1.5);
  for (auto& v : t.z) v = rng.uniform(0.5, 1.5);
  double prev = consistency_loss(std::span<const double>(t.x), std::span<const double>(t.y),
                                 std::span<const double>(t.z));
  double lr = 0.05;
  for (int step = 0; step < 10; ++step) {
    std::vector<double> gx(t.x.size(), 0), gy(t.y.size(), 0), gz(t.z.size(), 0);
    consistency_backward(1.0, std::span<const double>(t.x), std::span<const double>(t.y),
                         std::span<const double>(t.z), std::span<double>(gx),
                         std::span<double>(gy), std::span<double>(gz));
    for (size_t k = 0; k < t.x.size(); ++k) t.x[k] -= lr * gx[k];
    for (size_t k = 0; k < t.y.size(); ++k) t.y[k] -= lr * gy[k];
    for (size_t k = 0; k < t.z.size(); ++k) t.z[k] -= lr * gz[k];
    double now = consistency_loss(std::span<const double>(t.x), std::span<const double>(t.y),
                                  std::span<const double>(t.z));
    CHECK(now < prev);
    prev = now;
  }
}

TEST_CASE("smoothness loss closed forms") {
  Tensors t(16, 4);
  auto loss = [&] {
    return smoothness_loss(t.cfg, std::span<const double>(t.x), std::span<const double>(t.y),
                           std::span<const double>(t.z));
  };
  CHECK(loss() == 0.0);  // constant
  // linear ramp along the x tensor's rows: second difference still zero
  for (int r = 0; r < 16; ++r)
    for (int k = 0; k < 4; ++k) t.x[size_t(r * 4 + k)] = 1.0 + 0.25 * r;
  CHECK(loss() == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("smoothness of a single spike matches the three-stencil value") {
  int r = 16, fd = 4;
  Tensors t(r, fd, 0.0);
  double s = 0.7;
  t.x[size_t(8 * fd + 2)] = s;  // one row, one channel
  // rows 7,8,9 see second differences s, -2s, s: sum of squares 6 s^2,
  // averaged over (r-2) interior rows and fd channels
  double expected = 6.0 * s * s / (double(r - 2) * fd);
  CHECK(smoothness_loss(t.cfg, std::span<const double>(t.x), std::span<const double>(t.y),
                        std::span<const double>(t.z)) ==
        doctest::Approx(expected).epsilon(1e-12));
  // per-channel semantics: with a single channel the mean over rows is 6s^2/(r-2)
  Tensors one(r, 1, 0.0);
  one.x[8] = s;
  CHECK(smoothness_loss(one.cfg, std::span<const double>(one.x), std::span<const double>(one.y),
                        std::span<const double>(one.z)) ==
        doctest::Approx(6.0 * s * s / double(r - 2)).epsilon(1e-12));
}

TEST_CASE("smoothness backward matches central differences") {
  Tensors t(12, 3);
  Pcg32 rng(9);
  for (auto& v : t.x) v = rng.uniform(0, 2);
  for (auto& v : t.y) v = rng.uniform(0, 2);
  for (auto& v : t.z) v = rng.uniform(0, 2);
  std::vector<double> gx(t.x.size(), 0), gy(t.y.size(), 0), gz(t.z.size(), 0);
  smoothness_backward(t.cfg, 1.0, std::span<const double>(t.x), std::span<const double>(t.y),
                      std::span<const double>(t.z), std::span<double>(gx), std::span<double>(gy),
                      std::span<double>(gz));
  auto loss = [&] {
    return smoothness_loss(t.cfg, std::span<const double>(t.x), std::span<const double>(t.y),
                           std::span<const double>(t.z));
  };
  Pcg32 pick(12);
  for (int probe = 0; probe < 20; ++probe) {
    size_t idx = pick.next_below(std::uint32_t(t.x.size()));
    double h = 1e-6;
    double saved = t.x[idx];
    t.x[idx] = saved + h;
    double lp = loss();
    t.x[idx] = saved - h;
    double lm = loss();
    t.x[idx] = saved;
    CHECK(gx[idx] == doctest::Approx((lp - lm) / (2 * h)).epsilon(1e-5));
  }
}

TEST_CASE("nearest-neighbor backward touches exactly three rows") {
  Tensors t(16, 4);
  std::vector<double> gx(t.x.size(), 0), gy(t.y.size(), 0), gz(t.z.size(), 0);
  std::vector<double> upstream(4, 1.0);
  state_feature_backward(Vec3d(0.31, 0.64, 0.97), t.cfg, std::span<const double>(t.x),
                         std::span<const double>(t.y), std::span<const double>(t.z),
                         upstream.data(), std::span<double>(gx), std::span<double>(gy),
                         std::span<double>(gz));
  auto touched_rows = [&](const std::vector<double>& g) {
    int rows = 0;
    for (int r = 0; r < 16; ++r) {
      bool any = false;
      for (int k = 0; k < 4; ++k) any |= g[size_t(r * 4 + k)] != 0.0;
      rows += any;
    }
    return rows;
  };
  CHECK(touched_rows(gx) == 1);
  CHECK(touched_rows(gy) == 1);
  CHECK(touched_rows(gz) == 1);
}

TEST_SUITE_END();
