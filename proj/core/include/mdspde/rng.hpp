#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>

namespace mdspde {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
///
/// Output is a pure function of (key, counter), so any stream position can be
/// produced directly without advancing shared state. Parallel workers that
/// derive counters from (path, step, mode) draw identical numbers regardless
/// of scheduling order.
class Philox4x32 {
 public:
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  explicit constexpr Philox4x32(std::uint64_t seed)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)} {}

  [[nodiscard]] constexpr Counter operator()(Counter ctr) const {
    Key k = key_;
    for (int round = 0; round < 10; ++round) {
      ctr = single_round(ctr, k);
      k[0] += kWeyl0;
      k[1] += kWeyl1;
    }
    return ctr;
  }

 private:
  static constexpr std::uint32_t kMul0 = 0xD2511F53u;
  static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

  static constexpr Counter single_round(const Counter& c, const Key& k) {
    const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * c[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * c[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const auto lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const auto lo1 = static_cast<std::uint32_t>(p1);
    return {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
  }

  Key key_;
};

/// SplitMix64 finalizer; used to derive child seeds from (seed, salt).
[[nodiscard]] constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

[[nodiscard]] constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt) {
  return mix64(seed ^ mix64(salt));
}

/// Logical stream identifiers. Distinct purposes never share counters.
enum class Stream : std::uint32_t {
  SlowNoise = 1,
  FastNoise = 2,
  FrozenNoise = 3,
  MixtureSign = 4,
};

/// Gaussian variates addressed by (path, stream, step, index).
///
/// Each Philox call yields two standard normals via Box-Muller, so index pairs
/// (2j, 2j+1) share one counter.
class NormalStream {
 public:
  NormalStream(std::uint64_t seed, std::uint64_t path, Stream stream)
      : gen_(seed),
        path_(static_cast<std::uint32_t>(path)),
        tag_((static_cast<std::uint32_t>(stream) << 24) ^
             (static_cast<std::uint32_t>(path >> 32) & 0x00FFFFFFu)) {}

  /// Fills `out` with independent N(0, scale^2) draws for time step `step`.
  void fill(std::uint64_t step, std::span<double> out, double scale = 1.0) const {
    const auto lo = static_cast<std::uint32_t>(step);
    const auto hi = static_cast<std::uint32_t>(step >> 32);
    const std::size_t n = out.size();
    for (std::size_t j = 0; 2 * j < n; ++j) {
      const auto r = gen_({lo, path_, tag_, static_cast<std::uint32_t>(j) ^ (hi << 16)});
      double z0 = 0.0;
      double z1 = 0.0;
      box_muller(r, z0, z1);
      out[2 * j] = scale * z0;
      if (2 * j + 1 < n) out[2 * j + 1] = scale * z1;
    }
  }

  /// Single uniform on (0, 1] for step `step`.
  [[nodiscard]] double uniform(std::uint64_t step) const {
    const auto r = gen_({static_cast<std::uint32_t>(step), path_, tag_,
                         0xFFFFFFFFu ^ static_cast<std::uint32_t>(step >> 32)});
    return to_unit(r[0], r[1]);
  }

 private:
  static double to_unit(std::uint32_t a, std::uint32_t b) {
    const std::uint64_t bits = (static_cast<std::uint64_t>(a) << 32 | b) >> 11;
    return (static_cast<double>(bits) + 1.0) * 0x1.0p-53;
  }

  static void box_muller(const Philox4x32::Counter& r, double& z0, double& z1) {
    const double u1 = to_unit(r[0], r[1]);
    const double u2 = to_unit(r[2], r[3]);
    const double rad = std::sqrt(-2.0 * std::log(u1));
    const double ang = 2.0 * std::numbers::pi * u2;
    z0 = rad * std::cos(ang);
    z1 = rad * std::sin(ang);
  }

  Philox4x32 gen_;
  std::uint32_t path_;
  std::uint32_t tag_;
};

}  // namespace mdspde
