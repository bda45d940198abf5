#ifndef PATHFX_RNG_HPP
#define PATHFX_RNG_HPP

#include <array>
#include <cstdint>

namespace pathfx {

/// Philox4x64-10 block function (Salmon et al., SC'11): a keyed bijection of a
/// 256-bit counter. Output for counter (0,0,0,0) and key (0,0) is
/// {0x16554d9eca36314c, 0xdb20fe9d672d0fdc, 0xd7e772cee186176b, 0x7e68b68aec7ba23b}.
using PhiloxCounter = std::array<std::uint64_t, 4>;
using PhiloxKey = std::array<std::uint64_t, 2>;
PhiloxCounter philox4x64_10(PhiloxCounter ctr, PhiloxKey key);

/// Stream of the counter-based generator. The key is (seed, stream id); draws walk
/// the low counter word, so draw k of a stream is a pure function of (seed, stream, k).
///
/// Uniforms carry 53 random bits and lie strictly inside (0, 1). Normals use the
/// inverse CDF, z = -sqrt(2) * erfc_inv(2u), so every normal consumes exactly one uniform.
class StreamRng {
 public:
  StreamRng(std::uint64_t seed, std::uint64_t stream) : key_{seed, stream} {}

  std::uint64_t next_u64();
  double uniform();  // (0, 1)
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  double exponential();  // Exp(1)
  bool bernoulli(double p) { return uniform() < p; }

 private:
  PhiloxKey key_;
  std::uint64_t block_ = 0;
  PhiloxCounter buffer_{};
  int used_ = 4;
};

/// Stream id for (replicate, block): blocks separate variables or purposes within one replicate.
constexpr std::uint64_t stream_id(std::uint64_t replicate, std::uint64_t block) {
  return (replicate << 8) | (block & 0xff);
}

}  // namespace pathfx

#endif  // PATHFX_RNG_HPP
