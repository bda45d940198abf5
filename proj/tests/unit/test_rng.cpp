#include <doctest.h>

#include "pathfx/rng.hpp"

#include <cmath>

using namespace pathfx;

TEST_CASE("philox known-answer vector") {
  const PhiloxCounter out = philox4x64_10({0, 0, 0, 0}, {0, 0});
  CHECK(out[0] == 0x16554d9eca36314cULL);
  CHECK(out[1] == 0xdb20fe9d672d0fdcULL);
  CHECK(out[2] == 0xd7e772cee186176bULL);
  CHECK(out[3] == 0x7e68b68aec7ba23bULL);

  // Random123 kat_vectors: all-ones counter and key.
  const std::uint64_t f = ~0ULL;
  const PhiloxCounter ones = philox4x64_10({f, f, f, f}, {f, f});
  CHECK(ones[0] == 0x87b092c3013fe90bULL);
  CHECK(ones[1] == 0x438c3c67be8d0224ULL);
  CHECK(ones[2] == 0x9cc7d7c69cd777b6ULL);
  CHECK(ones[3] == 0xa09caebf594f0ba0ULL);
}

TEST_CASE("streams are reproducible and distinct") {
  StreamRng a(7, stream_id(3, 1)), b(7, stream_id(3, 1)), c(7, stream_id(3, 2));
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const double x = a.uniform();
    CHECK(x == b.uniform());
    differs |= x != c.uniform();
    CHECK(x > 0.0);
    CHECK(x < 1.0);
  }
  CHECK(differs);
  CHECK(stream_id(1, 0x40) == 0x140);
}

TEST_CASE("draw moments") {
  StreamRng rng(11, 0);
  const int n = 200000;
  double su = 0, sn = 0, sn2 = 0, se = 0;
  for (int i = 0; i < n; ++i) {
    su += rng.uniform();
    const double z = rng.normal();
    sn += z;
    sn2 += z * z;
    se += rng.exponential();
  }
  CHECK(su / n == doctest::Approx(0.5).epsilon(0.01));
  CHECK(std::abs(sn / n) < 0.01);
  CHECK(sn2 / n == doctest::Approx(1.0).epsilon(0.02));
  CHECK(se / n == doctest::Approx(1.0).epsilon(0.02));
}
