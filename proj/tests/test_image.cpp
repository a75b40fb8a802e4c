#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "int3d/image.hpp"

using namespace int3d;

TEST_SUITE_BEGIN("image");

namespace {
std::string temp_path(const char* name) { return std::string("/tmp/int3d_test_") + name; }

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}
}  // namespace

TEST_CASE("quantize8 rounds half up and clamps") {
  CHECK(quantize8(0.0f) == 0);
  CHECK(quantize8(1.0f) == 255);
  CHECK(quantize8(-0.5f) == 0);
  CHECK(quantize8(2.0f) == 255);
  // 0.5/255 sits exactly between 0 and 1 in quantized units
  CHECK(quantize8(0.5f / 255.0f) == 1);
  CHECK(quantize8(127.5f / 255.0f) == 128);
}

TEST_CASE("png round trip preserves quantized rgb values") {
  Image img(13, 7, 3);
  Pcg32 rng(5);
  for (auto& v : img.data) v = rng.next_float();
  std::string path = temp_path("rt.png");
  write_png(img, path);
  Image back = read_png(path);
  REQUIRE(back.width == img.width);
  REQUIRE(back.height == img.height);
  REQUIRE(back.channels == 3);
  for (size_t i = 0; i < img.data.size(); ++i)
    CHECK(quantize8(back.data[i]) == quantize8(img.data[i]));
  std::remove(path.c_str());
}

TEST_CASE("png encoding is byte-deterministic") {
  Image img(33, 21, 1);
  Pcg32 rng(17);
  for (auto& v : img.data) v = rng.next_float();
  std::string p1 = temp_path("det1.png"), p2 = temp_path("det2.png");
  write_png(img, p1);
  write_png(img, p2);
  CHECK(slurp(p1) == slurp(p2));
  std::remove(p1.c_str());
  std::remove(p2.c_str());
}

TEST_CASE("png rejects unsupported shapes and missing files") {
  Image img(4, 4, 2);
  CHECK_THROWS_AS(write_png(img, temp_path("bad.png")), ContractError);
  CHECK_THROWS_AS(read_png("/nonexistent/int3d.png"), IoError);
}

TEST_CASE("large image exercises multiple stored deflate blocks") {
  Image img(256, 120, 3);  // raw bytes > 65535 forces block splitting
  Pcg32 rng(23);
  for (auto& v : img.data) v = rng.next_float();
  std::string path = temp_path("big.png");
  write_png(img, path);
  Image back = read_png(path);
  for (size_t i = 0; i < img.data.size(); i += 997)
    CHECK(quantize8(back.data[i]) == quantize8(img.data[i]));
  std::remove(path.c_str());
}

TEST_SUITE_END();
