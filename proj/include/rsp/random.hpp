#pragma once

#include <cstdint>
#include <random>

namespace rsp {

/// Deterministic random stream. Monte Carlo loops derive one child stream
/// per trial index and reduce in index order, so results do not depend on
/// the parallel schedule.
class SeedStream {
 public:
  explicit SeedStream(std::uint64_t seed) : eng_(mix(seed)) {}

  /// Stream for trial `index` under `master`. Derivation is a fixed
  /// splitmix64 mix, stable across platforms and thread counts.
  static SeedStream child(std::uint64_t master, std::uint64_t index) {
    return SeedStream(mix(master) ^ mix(index * 0x9e3779b97f4a7c15ull + 0x632be59bd9b4e019ull));
  }

  double gaussian() { return normal_(eng_); }
  double uniform() { return unif_(eng_); }  // [0, 1)
  std::uint64_t bits() { return eng_(); }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    std::uniform_int_distribution<std::uint64_t> dist(0, n - 1);
    return dist(eng_);
  }

  std::mt19937_64& engine() { return eng_; }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  std::mt19937_64 eng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> unif_{0.0, 1.0};
};

}  // namespace rsp
