#include <doctest.h>

#include <cmath>
#include <set>

#include "psgd/rng.hpp"

using namespace psgd;

TEST_CASE("identical keys reproduce identical draw sequences") {
  RandomStream a(42, 3, 17, Purpose::smoothing);
  RandomStream b(42, 3, 17, Purpose::smoothing);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("distinct key fields give distinct streams") {
  RandomStream base(42, 3, 17, Purpose::smoothing);
  RandomStream other_replica(42, 4, 17, Purpose::smoothing);
  RandomStream other_step(42, 3, 18, Purpose::smoothing);
  RandomStream other_purpose(42, 3, 17, Purpose::grad_noise);
  const auto v = base.next_u64();
  CHECK(v != other_replica.next_u64());
  CHECK(v != other_step.next_u64());
  CHECK(v != other_purpose.next_u64());
}

TEST_CASE("uniform draws stay inside (0,1) and fill the range") {
  RandomStream rng(7);
  double lo = 1.0, hi = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.next_uniform();
    CHECK(u > 0.0);
    CHECK(u < 1.0);
    lo = std::min(lo, u);
    hi = std::max(hi, u);
  }
  CHECK(lo < 0.01);
  CHECK(hi > 0.99);
}

TEST_CASE("gaussian moments") {
  RandomStream rng(11);
  const int n = 200000;
  double sum = 0.0, sum2 = 0.0, sum4 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = rng.next_gaussian();
    sum += z;
    sum2 += z * z;
    sum4 += z * z * z * z;
  }
  CHECK(std::abs(sum / n) < 0.01);
  CHECK(sum2 / n == doctest::Approx(1.0).epsilon(0.02));
  CHECK(sum4 / n == doctest::Approx(3.0).epsilon(0.05));
}

TEST_CASE("next_index covers [0, n) uniformly enough") {
  RandomStream rng(5);
  const std::uint64_t n = 7;
  std::vector<int> counts(n, 0);
  for (int i = 0; i < 70000; ++i) ++counts[rng.next_index(n)];
  for (auto c : counts) CHECK(std::abs(c - 10000) < 500);
}

TEST_CASE("lane seeds do not collide for small lanes") {
  std::set<std::uint64_t> seen;
  for (std::uint64_t lane = 0; lane < 512; ++lane) seen.insert(lane_seed(123, lane));
  CHECK(seen.size() == 512);
}
