#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace asdbank {

// Seeded streams use std::mt19937_64, whose output sequence is fixed by the
// C++ standard. The std:: distributions are implementation-defined, so the
// draws below are built directly on the raw 64-bit output instead.

/// SplitMix64 finalizer; folds tags into a base seed to get independent
/// sub-stream seeds.
std::uint64_t mix_seed(std::uint64_t base, std::initializer_list<std::uint64_t> tags);

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform();

  /// Uniform integer in [0, n), unbiased (rejection sampling). n >= 1.
  std::uint64_t below(std::uint64_t n);

  /// Standard normal via the Box-Muller transform.
  double normal();

  /// k distinct indices from [0, n), in draw order (partial Fisher-Yates).
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace asdbank
