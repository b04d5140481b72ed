#pragma once

#include "percam/types.hpp"

#include <cmath>
#include <cstdint>

namespace percam {

// splitmix64 finalizer; full-period mixing of a 64-bit word.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Keyed counter generator: output i of stream (seed, stream, substream) is
// mix64(key ^ mix64(i)), so draws depend only on the stream key and the draw
// index. Streams are allocated per (record, purpose); skipping or reordering
// records cannot shift the draws of any other record.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream, std::uint64_t substream = 0)
      : key_(mix64(seed ^ mix64(stream ^ mix64(substream)))) {}

  std::uint64_t next_u64() { return mix64(key_ ^ mix64(counter_++)); }

  // Uniform on [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  std::uint64_t index(std::uint64_t n) { return next_u64() % n; }

  // Standard normal via Box-Muller; consumes exactly two draws.
  double normal() {
    double u1 = 1.0 - uniform();  // (0, 1], keeps log finite
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  // Standard normal truncated to [-bound, bound] by rejection.
  double truncated_normal(double bound) {
    for (;;) {
      double x = normal();
      if (std::abs(x) <= bound) return x;
    }
  }

  // Uniform direction on the unit sphere.
  Vec3 unit_vector() {
    for (;;) {
      Vec3 v(normal(), normal(), normal());
      double n = v.norm();
      if (n > 1e-12) return v / n;
    }
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

// Stream purposes used by the scene generator; one stream per (record, purpose).
enum class RngPurpose : std::uint64_t {
  Shape = 1,
  Pose = 2,
  Depth = 3,
  Camera = 4,
  Focal = 5,
};

inline CounterRng make_stream(std::uint64_t global_seed, std::uint64_t record_index,
                              RngPurpose purpose) {
  return CounterRng(global_seed, record_index, static_cast<std::uint64_t>(purpose));
}

}  // namespace percam
