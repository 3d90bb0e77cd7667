#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace psgd {

// Counter-based random stream. The generator state is a pure function of
// (seed, replica, step, purpose, counter), so any draw in an experiment can
// be reproduced or skipped to without generating its predecessors. Replicas,
// steps and purposes (smoothing draws vs. gradient noise vs. init) therefore
// get statistically independent streams from one experiment seed.

inline constexpr std::uint64_t kStreamGamma = 0x9e3779b97f4a7c15ull;

inline constexpr std::uint64_t mix64(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xbf58476d1ce4e5b9ull;
  z ^= z >> 27;
  z *= 0x94d049bb133111ebull;
  z ^= z >> 31;
  return z;
}

enum class Purpose : std::uint64_t {
  init = 1,        // starting points
  smoothing = 2,   // u_t draws
  grad_noise = 3,  // xi_t draws (additive noise or index sampling)
  data = 4,        // dataset generation
  estimate = 5,    // Monte Carlo estimators (fits, variance checks)
  reference = 6,   // reference oracles (MC smoothed gradients)
  search = 7,      // step-size grid search lanes
};

class RandomStream {
 public:
  RandomStream(std::uint64_t seed, std::uint64_t replica, std::uint64_t step,
               Purpose purpose)
      : base_(derive(seed, replica, step, static_cast<std::uint64_t>(purpose))) {}

  explicit RandomStream(std::uint64_t seed)
      : RandomStream(seed, 0, 0, Purpose::estimate) {}

  std::uint64_t next_u64() { return mix64(base_ + (++counter_) * kStreamGamma); }

  // uniform on (0,1); never returns an exact endpoint
  double next_uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_uniform(); }

  // uniform integer in [0, n), n >= 1
  std::uint64_t next_index(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  // standard normal via Box-Muller; pairs are cached so draws stay cheap
  double next_gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = next_uniform();
    const double u2 = next_uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  void fill_gaussian(std::vector<double>& out, double stddev) {
    for (auto& v : out) v = stddev * next_gaussian();
  }

 private:
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t replica,
                              std::uint64_t step, std::uint64_t purpose) {
    std::uint64_t s = mix64(seed + kStreamGamma);
    s = mix64(s ^ (replica + 0xd1b54a32d192ed03ull));
    s = mix64(s ^ (step + 0x8cb92ba72f3d8dd7ull));
    s = mix64(s ^ (purpose + 0xaef17502108ef2d9ull));
    return s;
  }

  std::uint64_t base_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Distinct sub-seed for an independent lane (grid search, reference runs, ...)
inline std::uint64_t lane_seed(std::uint64_t seed, std::uint64_t lane) {
  return mix64(seed ^ (lane + 0xc2b2ae3d27d4eb4full));
}

}  // namespace psgd
