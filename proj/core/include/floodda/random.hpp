#pragma once

#include <cstdint>

namespace floodda::random {

/// Independent random streams. Every draw in the library is addressed by
/// (seed, purpose, a, b, index) so that results do not depend on evaluation
/// order or thread scheduling.
enum class Purpose : std::uint64_t {
  PriorDraw = 1,
  ObsPerturbation = 2,
  TruthNoise = 3,
  MemberReplacement = 4,
  Test = 99,
};

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

struct StreamKey {
  std::uint64_t seed = 0;
  Purpose purpose = Purpose::Test;
  std::uint64_t a = 0;  // e.g. cycle
  std::uint64_t b = 0;  // e.g. member
};

/// Counter-based generator: the n-th draw of a stream is a pure function of
/// the key and n.
class Stream {
 public:
  explicit Stream(const StreamKey& key) noexcept;

  /// Uniform on the open interval (0, 1) for draw index `n`.
  double uniform(std::uint64_t n) const noexcept;
  /// Standard normal for draw index `n` (inverse-CDF transform).
  double normal(std::uint64_t n) const noexcept;

 private:
  std::uint64_t base_;
};

/// Standard normal quantile and CDF.
double normal_quantile(double p);
double normal_cdf(double x);

/// Inverse-CDF draw from N(mean, std^2) truncated to [lo, hi] using the
/// uniform `u` in (0,1).
double truncated_normal(double mean, double std, double lo, double hi, double u);

}  // namespace floodda::random
