#pragma once

#include <cmath>
#include <cstdint>

namespace torusmix {

/*
 * Deterministic per-stream generator.  Every Monte Carlo draw is addressed by
 * (seed, stream): the stream index is mixed into the initial state, so sample
 * i always sees the same randomness no matter how work is divided between
 * threads.
 */
namespace detail {
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}
}  // namespace detail

class StreamRng {
 public:
  StreamRng(std::uint64_t seed, std::uint64_t stream) {
    state_ = detail::mix64(seed ^ 0x5851f42d4c957f2dULL);
    state_ = detail::mix64(state_ ^ detail::mix64(stream));
    if (state_ == 0) state_ = 0x9e3779b97f4a7c15ULL;
  }

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /* Uniform in [0, 1). */
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  /* Standard normal via Marsaglia polar. */
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    double m = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * m;
    have_spare_ = true;
    return u * m;
  }

 private:
  std::uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace torusmix
