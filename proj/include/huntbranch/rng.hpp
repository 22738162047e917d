#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace huntbranch {

std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// Seed of stream `index` below `parent`. Used for replicate streams
/// (parent = master seed) and spine subtree streams (parent = replicate seed).
std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t index) noexcept;

/// Random source used by every sampler.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the C++
/// standard. Uniform, exponential and integer variates are produced by the
/// conversions below rather than by <random> distributions, whose algorithms
/// are implementation-defined; together this makes every sample path
/// bit-reproducible across standard libraries.
class Rng {
 public:
  static constexpr std::string_view kGeneratorName =
      "mt19937_64; stream seed = splitmix64-mix(master_seed, replicate); "
      "uniform = (u64 >> 11) * 2^-53; exponential = -log1p(-u) / rate";

  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  static Rng for_replicate(std::uint64_t master_seed, std::uint64_t replicate) {
    return Rng(derive_seed(master_seed, replicate));
  }

  /// Uniform on [0, 1).
  double uniform() noexcept { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Exponential with the given rate (> 0).
  double exponential(double rate) noexcept;

  /// Uniform integer on [0, n), n > 0. Unbiased (rejection).
  std::uint64_t below(std::uint64_t n) noexcept;

 private:
  std::mt19937_64 engine_;
};

}  // namespace huntbranch
