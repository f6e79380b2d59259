#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace debias {

/// Mixes a root seed with a textual label (and optional indices) into an
/// independent child seed. All randomness in the toolkit flows from one root
/// seed through this function.
std::uint64_t derive_seed(std::uint64_t root, std::string_view label,
                          std::uint64_t a = 0, std::uint64_t b = 0);

/// Seeded generator with platform-independent sampling helpers.
///
/// std::uniform_*_distribution results differ between standard libraries, so
/// the draws below are computed from the raw engine output directly.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform integer in [0, bound). bound must be > 0.
  std::uint64_t below(std::uint64_t bound);

  /// Uniform double in [0, 1).
  double uniform();

  /// Uniform double in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal draw (Box-Muller).
  double normal();

  /// Random permutation of 0..n-1.
  std::vector<std::size_t> permutation(std::size_t n);

  /// k distinct indices from 0..n-1, returned in increasing order.
  std::vector<std::size_t> sample_sorted(std::size_t n, std::size_t k);

 private:
  std::mt19937_64 engine_;
};

}  // namespace debias
