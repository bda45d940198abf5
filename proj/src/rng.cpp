#include "pathfx/rng.hpp"

#include "pathfx/special.hpp"

#include <cmath>

namespace pathfx {

namespace {

constexpr std::uint64_t kM0 = 0xD2E7470EE14C6C93ULL;
constexpr std::uint64_t kM1 = 0xCA5A826395121157ULL;
constexpr std::uint64_t kW0 = 0x9E3779B97F4A7C15ULL;
constexpr std::uint64_t kW1 = 0xBB67AE8584CAA73BULL;

inline void mulhilo(std::uint64_t a, std::uint64_t b, std::uint64_t& hi, std::uint64_t& lo) {
  const unsigned __int128 p = static_cast<unsigned __int128>(a) * b;
  hi = static_cast<std::uint64_t>(p >> 64);
  lo = static_cast<std::uint64_t>(p);
}

}  // namespace

PhiloxCounter philox4x64_10(PhiloxCounter x, PhiloxKey k) {
  for (int round = 0; round < 10; ++round) {
    if (round > 0) {
      k[0] += kW0;
      k[1] += kW1;
    }
    std::uint64_t hi0, lo0, hi1, lo1;
    mulhilo(kM0, x[0], hi0, lo0);
    mulhilo(kM1, x[2], hi1, lo1);
    x = {hi1 ^ x[1] ^ k[0], lo1, hi0 ^ x[3] ^ k[1], lo0};
  }
  return x;
}

std::uint64_t StreamRng::next_u64() {
  if (used_ == 4) {
    buffer_ = philox4x64_10({block_++, 0, 0, 0}, key_);
    used_ = 0;
  }
  return buffer_[static_cast<std::size_t>(used_++)];
}

double StreamRng::uniform() {
  return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double StreamRng::normal() { return normal_quantile(uniform()); }

double StreamRng::exponential() { return -std::log(uniform()); }

}  // namespace pathfx
