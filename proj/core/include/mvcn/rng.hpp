#pragma once

// Counter-based normal variates. Every draw is a pure function of
// (seed, stream, counter), so blocks can be processed in any order or in
// parallel and coupled ensembles can share noise exactly.

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

namespace mvcn {

using Philox4x64Counter = std::array<std::uint64_t, 4>;
using Philox4x64Key = std::array<std::uint64_t, 2>;

/// Philox4x64 with 10 rounds.
inline Philox4x64Counter philox4x64(Philox4x64Counter ctr, Philox4x64Key key) {
  constexpr std::uint64_t kMul0 = 0xD2E7470EE14C6C93ULL;
  constexpr std::uint64_t kMul1 = 0xCA5A826395121157ULL;
  constexpr std::uint64_t kWeyl0 = 0x9E3779B97F4A7C15ULL;
  constexpr std::uint64_t kWeyl1 = 0xBB67AE8584CAA73BULL;
  for (int round = 0; round < 10; ++round) {
    const unsigned __int128 p0 = static_cast<unsigned __int128>(kMul0) * ctr[0];
    const unsigned __int128 p1 = static_cast<unsigned __int128>(kMul1) * ctr[2];
    const auto hi0 = static_cast<std::uint64_t>(p0 >> 64), lo0 = static_cast<std::uint64_t>(p0);
    const auto hi1 = static_cast<std::uint64_t>(p1 >> 64), lo1 = static_cast<std::uint64_t>(p1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kWeyl0;
    key[1] += kWeyl1;
  }
  return ctr;
}

/// splitmix64 finalizer; used to derive independent seeds from one seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (tag + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

enum class StreamKind : std::uint32_t {
  Idiosyncratic = 1,  // B^i, one per particle
  Common = 2,         // B^0, one per block
  Initial = 3,        // initial-law sampling, one per particle
};

struct StreamId {
  std::uint32_t block = 0;
  StreamKind kind = StreamKind::Idiosyncratic;
  std::uint32_t particle = 0;  // ignored for Common streams

  friend bool operator==(const StreamId&, const StreamId&) = default;
};

struct NoiseStream {
  std::uint64_t seed = 0;
  StreamId stream;
  std::uint64_t counter = 0;
};

namespace detail {

inline constexpr std::uint64_t kDomainTag = 0x6d76636e'6e6f6973ULL;

inline Philox4x64Counter stream_block(const NoiseStream& s, std::uint32_t chunk) {
  const std::uint32_t particle = s.stream.kind == StreamKind::Common ? 0u : s.stream.particle;
  const Philox4x64Counter ctr = {s.counter,
                                 (static_cast<std::uint64_t>(chunk) << 32) | static_cast<std::uint32_t>(s.stream.kind),
                                 particle, s.stream.block};
  return philox4x64(ctr, {s.seed, kDomainTag});
}

/// Uniform in (0, 1]: never zero, so log() is finite.
inline double to_open_unit(std::uint64_t bits) {
  return static_cast<double>((bits >> 11) + 1) * 0x1.0p-53;
}

}  // namespace detail

/// Fills `out` with independent standard normal variates. Marsaglia's
/// polar method on Philox output: each block holds two candidate pairs and
/// rejected pairs move on to the next chunk, so the result is still a pure
/// function of the stream and counter.
inline void draw_normal(const NoiseStream& s, std::span<double> out) {
  const std::size_t n = out.size();
  std::size_t filled = 0;
  for (std::uint32_t chunk = 0; filled < n; ++chunk) {
    const auto bits = detail::stream_block(s, chunk);
    for (std::size_t pair = 0; pair < 2 && filled < n; ++pair) {
      const double v1 = 2.0 * detail::to_open_unit(bits[2 * pair]) - 1.0;
      const double v2 = 2.0 * detail::to_open_unit(bits[2 * pair + 1]) - 1.0;
      const double r2 = v1 * v1 + v2 * v2;
      if (r2 >= 1.0 || r2 == 0.0) continue;
      const double f = std::sqrt(-2.0 * std::log(r2) / r2);
      out[filled++] = v1 * f;
      if (filled < n) out[filled++] = v2 * f;
    }
  }
}

/// Per-step noise is drawn kStepGroup counters at a time: the variates for
/// counter c are slice c % kStepGroup of one draw at counter c / kStepGroup.
inline constexpr std::uint64_t kStepGroup = 4;

inline void draw_step_normal(const NoiseStream& s, std::span<double> out) {
  const std::size_t d = out.size();
  std::vector<double> group(kStepGroup * d);
  draw_normal(NoiseStream{s.seed, s.stream, s.counter / kStepGroup}, group);
  const std::size_t slot = static_cast<std::size_t>(s.counter % kStepGroup);
  for (std::size_t k = 0; k < d; ++k) out[k] = group[slot * d + k];
}

inline std::vector<double> draw_normal(const NoiseStream& s, std::size_t dim) {
  std::vector<double> out(dim);
  draw_normal(s, out);
  return out;
}

/// Uniform in (0, 1], from the last Philox word of chunk 0xFFFFFFFF so it
/// never overlaps normals drawn from the same stream and counter.
inline double draw_uniform(const NoiseStream& s) {
  return detail::to_open_unit(detail::stream_block(s, 0xFFFFFFFFu)[3]);
}

}  // namespace mvcn
