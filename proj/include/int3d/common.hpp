#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace int3d {

template <typename S>
using Vec3 = Eigen::Matrix<S, 3, 1>;
template <typename S>
using Mat3 = Eigen::Matrix<S, 3, 3>;
template <typename S>
using VecX = Eigen::Matrix<S, Eigen::Dynamic, 1>;
template <typename S>
using MatX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

using Vec3f = Vec3<float>;
using Vec3d = Vec3<double>;

/// Violation of an operation contract or type invariant (CLI exit code 2).
struct ContractError : std::runtime_error {
  explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Filesystem / serialization failure (CLI exit code 3).
struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ContractError(msg);
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

/// Mixes an arbitrary list of integers into one seed, for derived rng streams.
inline std::uint64_t mix_seed(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x243f6a8885a308d3ull;
  for (std::uint64_t p : parts) h = splitmix64(h ^ p);
  return h;
}

/// PCG32: small deterministic generator, identical streams on every platform.
class Pcg32 {
 public:
  explicit Pcg32(std::uint64_t seed = 0x853c49e6748fea9bull, std::uint64_t seq = 0xda3e39cb94b95bdbull) {
    state_ = 0;
    inc_ = (seq << 1u) | 1u;
    next_u32();
    state_ += seed;
    next_u32();
  }

  std::uint32_t next_u32() {
    std::uint64_t old = state_;
    state_ = old * 6364136223846793005ull + inc_;
    std::uint32_t xorshifted = static_cast<std::uint32_t>(((old >> 18u) ^ old) >> 27u);
    std::uint32_t rot = static_cast<std::uint32_t>(old >> 59u);
    return (xorshifted >> rot) | (xorshifted << ((32u - rot) & 31u));
  }

  /// Unbiased integer in [0, bound).
  std::uint32_t next_below(std::uint32_t bound) {
    std::uint32_t threshold = (-bound) % bound;
    for (;;) {
      std::uint32_t r = next_u32();
      if (r >= threshold) return r % bound;
    }
  }

  /// Uniform in [0, 1).
  double next_double() { return next_u32() * 0x1p-32; }
  float next_float() { return static_cast<float>(next_u32() >> 8) * 0x1p-24f; }

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

 private:
  std::uint64_t state_;
  std::uint64_t inc_;
};

/// Runs fn(slot) for slot in [0, n_slots) on up to n_workers threads.
///
/// Work is partitioned by slot index, never by thread, so any result that is
/// a deterministic function of the slot decomposition is independent of the
/// worker count.
inline void parallel_slots(int n_slots, int n_workers, const std::function<void(int)>& fn) {
  if (n_slots <= 0) return;
  n_workers = std::max(1, std::min(n_workers, n_slots));
  if (n_workers == 1) {
    for (int s = 0; s < n_slots; ++s) fn(s);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> threads;
  threads.reserve(n_workers);
  for (int w = 0; w < n_workers; ++w) {
    threads.emplace_back([&] {
      for (;;) {
        int s = next.fetch_add(1);
        if (s >= n_slots) return;
        fn(s);
      }
    });
  }
  for (auto& t : threads) t.join();
}

inline int default_workers() {
  unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

}  // namespace int3d
