#pragma once

#include <cstdint>
#include <random>

namespace bhp {

/// SplitMix64 finalizer (Steele, Lea, Flood 2014).
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed of replica `index` under base seed `base`: base XOR splitmix64(index).
/// Depends only on (base, index), so results never depend on scheduling.
constexpr std::uint64_t replica_seed(std::uint64_t base, std::uint64_t index) noexcept {
  return base ^ splitmix64(index);
}

/// Deterministic random stream owned by exactly one worker.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : engine_(seed), seed_(seed) {}

  double gaussian() { return normal_(engine_); }
  double exponential() { return exponential_(engine_); }
  /// Uniform on [0, 1).
  double uniform() { return std::generate_canonical<double, 53>(engine_); }
  /// Uniform integer on [0, n).
  std::uint64_t below(std::uint64_t n) {
    return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(engine_);
  }

  std::uint64_t seed() const noexcept { return seed_; }
  std::mt19937_64& engine() noexcept { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::exponential_distribution<double> exponential_{1.0};
  std::uint64_t seed_;
};

}  // namespace bhp
