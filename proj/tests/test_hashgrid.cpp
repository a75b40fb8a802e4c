#include <doctest.h>

#include <numeric>

#include "int3d/hashgrid.hpp"

using namespace int3d;

TEST_SUITE_BEGIN("hashgrid");

namespace {

struct TestTables {
  HashGridConfig cfg;
  std::vector<std::vector<double>> storage;
  std::vector<std::span<const double>> views;

  explicit TestTables(const HashGridConfig& c, double fill = 0.0) : cfg(c) {
    for (int l = 0; l < cfg.levels; ++l)
      storage.emplace_back(size_t(cfg.level_table_entries(l)) * cfg.features_per_level, fill);
    for (auto& s : storage) views.emplace_back(s);
  }
  std::span<const std::span<const double>> view() const {
    return std::span<const std::span<const double>>(views);
  }
};

HashGridConfig small_cfg() {
  HashGridConfig cfg;
  cfg.levels = 4;
  cfg.features_per_level = 2;
  cfg.table_size = 1u << 9;
  cfg.base_resolution = 4;
  cfg.max_resolution = 32;
  return cfg;
}

}  // namespace

TEST_CASE("growth hits base and max resolutions exactly") {
  HashGridConfig cfg;  // defaults: 16 levels, 16 -> 512
  CHECK(cfg.resolution(0) == 16);
  CHECK(cfg.resolution(cfg.levels - 1) == 512);
  for (int l = 1; l < cfg.levels; ++l) CHECK(cfg.resolution(l) >= cfg.resolution(l - 1));
}

TEST_CASE("hash_index: origin maps to slot 0 under both schemes") {
  HashGridConfig cfg = small_cfg();
  CHECK(cfg.level_is_dense(0));
  CHECK(hash_index(0, 0, 0, 0, cfg) == 0);
  CHECK(!cfg.level_is_dense(3));
  CHECK(hash_index(0, 0, 0, 3, cfg) == 0);
}

TEST_CASE("hash_index: dense levels are injective over the vertex lattice") {
  HashGridConfig cfg = small_cfg();
  int verts = cfg.resolution(0) + 1;
  std::vector<char> seen(cfg.level_table_entries(0), 0);
  for (int z = 0; z < verts; ++z)
    for (int y = 0; y < verts; ++y)
      for (int x = 0; x < verts; ++x) {
        std::uint32_t s = hash_index(x, y, z, 0, cfg);
        REQUIRE(s < seen.size());
        CHECK(!seen[s]);
        seen[s] = 1;
      }
}

TEST_CASE("hash_index: hashed levels stay within the table") {
  HashGridConfig cfg = small_cfg();
  Pcg32 rng(3);
  for (int t = 0; t < 1000; ++t) {
    int x = int(rng.next_below(1000)), y = int(rng.next_below(1000)), z = int(rng.next_below(1000));
    CHECK(hash_index(x, y, z, 3, cfg) < cfg.table_size);
  }
}

TEST_CASE("encode: all-zero tables give the zero vector") {
  HashGridConfig cfg = small_cfg();
  TestTables t(cfg);
  std::vector<double> out(size_t(cfg.feature_dim()), 1.0);
  encode(Vec3d(0.3, 0.7, 0.2), cfg, t.view(), out.data());
  for (double v : out) CHECK(v == 0.0);
}

TEST_CASE("encode: vertex-aligned point returns the stored vertex feature") {
  HashGridConfig cfg = small_cfg();
  TestTables t(cfg);
  // level 0 has resolution 4: p = (0.25, 0.5, 0.75) sits on vertex (1,2,3)
  std::uint32_t slot = hash_index(1, 2, 3, 0, cfg);
  t.storage[0][slot * 2 + 0] = 4.5;
  t.storage[0][slot * 2 + 1] = -2.25;
  std::vector<double> out(size_t(cfg.feature_dim()));
  encode(Vec3d(0.25, 0.5, 0.75), cfg, t.view(), out.data());
  CHECK(out[0] == doctest::Approx(4.5).epsilon(1e-12));
  CHECK(out[1] == doctest::Approx(-2.25).epsilon(1e-12));
}

TEST_CASE("encode: voxel center averages the 8 corners") {
  HashGridConfig cfg = small_cfg();
  TestTables t(cfg);
  double sum0 = 0;
  for (int c = 0; c < 8; ++c) {
    std::uint32_t slot = hash_index(c & 1, (c >> 1) & 1, (c >> 2) & 1, 0, cfg);
    t.storage[0][slot * 2 + 0] = double(c + 1);
    sum0 += double(c + 1);
  }
  // center of voxel (0,0,0) at level 0 (resolution 4) is p = (1/8, 1/8, 1/8)
  std::vector<double> out(size_t(cfg.feature_dim()));
  encode(Vec3d(0.125, 0.125, 0.125), cfg, t.view(), out.data());
  CHECK(out[0] == doctest::Approx(sum0 / 8.0).epsilon(1e-12));
}

TEST_CASE("encode is continuous within a voxel") {
  HashGridConfig cfg = small_cfg();
  TestTables t(cfg, 0.0);
  Pcg32 rng(8);
  for (auto& s : t.storage)
    for (auto& v : s) v = rng.uniform(-1, 1);
  Vec3d p(0.31, 0.44, 0.62);
  std::vector<double> a(size_t(cfg.feature_dim())), b(size_t(cfg.feature_dim()));
  encode(p, cfg, t.view(), a.data());
  double delta = 1e-7;
  encode(Vec3d(p.x() + delta, p.y() + delta, p.z() + delta), cfg, t.view(), b.data());
  for (int k = 0; k < cfg.feature_dim(); ++k) CHECK(std::abs(a[size_t(k)] - b[size_t(k)]) < 1e-4);
}

TEST_CASE("partition of unity: trilinear weights sum to one") {
  HashGridConfig cfg = small_cfg();
  Pcg32 rng(21);
  auto levels = hash_levels(cfg);
  for (int t = 0; t < 200; ++t) {
    Vec3d p(rng.next_double(), rng.next_double(), rng.next_double());
    for (int l = 0; l < cfg.levels; ++l) {
      auto cs = detail::level_corners(p.x(), p.y(), p.z(), levels[size_t(l)]);
      double sum = std::accumulate(cs.weight, cs.weight + 8, 0.0);
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
    }
  }
}

TEST_CASE("encode_backward: vertex-aligned gradient lands on one corner") {
  HashGridConfig cfg = small_cfg();
  TestTables grads(cfg);
  std::vector<std::span<double>> gviews;
  for (auto& s : grads.storage) gviews.emplace_back(s);
  std::vector<double> upstream(size_t(cfg.feature_dim()), 1.0);
  encode_backward(Vec3d(0.25, 0.5, 0.75), cfg, upstream.data(),
                  std::span<const std::span<double>>(gviews));
  std::uint32_t slot = hash_index(1, 2, 3, 0, cfg);
  CHECK(grads.storage[0][slot * 2 + 0] == doctest::Approx(1.0).epsilon(1e-12));
  double total = 0;
  for (double v : grads.storage[0]) total += v;
  CHECK(total == doctest::Approx(2.0).epsilon(1e-9));  // 2 feature channels
}

TEST_CASE("encode_backward: scattered magnitude per channel equals upstream") {
  HashGridConfig cfg = small_cfg();
  TestTables grads(cfg);
  std::vector<std::span<double>> gviews;
  for (auto& s : grads.storage) gviews.emplace_back(s);
  std::vector<double> upstream(size_t(cfg.feature_dim()));
  for (size_t k = 0; k < upstream.size(); ++k) upstream[k] = 0.25 * double(k + 1);
  encode_backward(Vec3d(0.37, 0.81, 0.12), cfg, upstream.data(),
                  std::span<const std::span<double>>(gviews));
  // weights are positive and sum to 1, so per level/channel the scatter sums
  // to the upstream value even through hash collisions
  for (int l = 0; l < cfg.levels; ++l)
    for (int k = 0; k < cfg.features_per_level; ++k) {
      double total = 0;
      for (size_t s = k; s < grads.storage[size_t(l)].size();
           s += size_t(cfg.features_per_level))
        total += grads.storage[size_t(l)][s];
      CHECK(total ==
            doctest::Approx(upstream[size_t(l * cfg.features_per_level + k)]).epsilon(1e-9));
    }
}

TEST_CASE("config validation") {
  HashGridConfig cfg = small_cfg();
  cfg.table_size = 1000;  // not a power of two
  CHECK_THROWS_AS(cfg.validate(), ContractError);
}

TEST_SUITE_END();
