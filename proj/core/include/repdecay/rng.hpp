#pragma once

#include <cstdint>
#include <vector>

namespace repdecay {

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Seed of replica `index` under `master`. Adding replicas never changes the
/// seeds of existing ones.
constexpr std::uint64_t derive_seed(std::uint64_t master,
                                    std::uint64_t index) noexcept {
  return mix64(mix64(master) ^ mix64(index + 0x9e3779b97f4a7c15ULL));
}

/// Counter-based random stream: draw n returns mix64(key + n * gamma).
///
/// A stream is identified by (seed, stream). Two streams with distinct
/// identifiers never share state, so replicas and particles can be simulated
/// in any order (or concurrently) with identical results. All samplers below
/// are implemented here rather than through <random> distributions so that
/// output is identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) noexcept
      : key_(derive_seed(seed, stream)) {}

  std::uint64_t next_u64() noexcept {
    counter_ += kGamma;
    return mix64(key_ + counter_);
  }

  /// Uniform on [0, 1) with 53 bits of resolution.
  double uniform() noexcept {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Uniform on (0, 1].
  double uniform_pos() noexcept {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  /// Exponential with the given rate (> 0).
  double exponential(double rate) noexcept;

  /// Uniform integer on [0, n), n > 0. Lemire's nearly divisionless method.
  std::uint64_t uniform_index(std::uint64_t n) noexcept;

  /// Poisson(mean) by sequential inversion; mean must be below 700.
  std::uint64_t poisson(double mean);

  std::uint64_t draws() const noexcept { return counter_ / kGamma; }

 private:
  static constexpr std::uint64_t kGamma = 0x9e3779b97f4a7c15ULL;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

/// Uniform k-subset of {0, ..., n-1} written to `out` (Floyd's algorithm;
/// exactly k index draws). Requires k <= n.
void sample_subset(std::uint32_t n, std::uint32_t k, Rng& rng, std::vector<std::uint32_t>& out);

}  // namespace repdecay
