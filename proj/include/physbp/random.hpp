#pragma once

#include <cstdint>
#include <random>

namespace physbp {

/// Seeded random stream. Independent child streams are derived with split(),
/// so concurrent simulations never share engine state.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed);

  /// Child stream keyed by `index`; the parent is left untouched.
  RandomStream split(std::uint64_t index) const;

  double normal();
  double uniform();  // [0, 1)
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  std::mt19937_64& engine() { return engine_; }
  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

/// splitmix64 finalizer, used to decorrelate derived seeds.
std::uint64_t mix_seed(std::uint64_t x);

}  // namespace physbp
