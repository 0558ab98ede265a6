#include "floodda/random.hpp"

#include <algorithm>
#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <stdexcept>

namespace floodda::random {

Stream::Stream(const StreamKey& key) noexcept {
  std::uint64_t h = mix64(key.seed);
  h = mix64(h ^ static_cast<std::uint64_t>(key.purpose));
  h = mix64(h ^ key.a);
  h = mix64(h ^ (key.b + 0x632BE59BD9B4E019ULL));
  base_ = h;
}

double Stream::uniform(std::uint64_t n) const noexcept {
  const std::uint64_t bits = mix64(base_ ^ mix64(n + 0x2545F4914F6CDD1DULL));
  // 53 random bits mapped to the open interval (0,1).
  return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

double Stream::normal(std::uint64_t n) const noexcept {
  return normal_quantile(uniform(n));
}

double normal_quantile(double p) {
  static const boost::math::normal_distribution<double> standard;
  return boost::math::quantile(standard, p);
}

double normal_cdf(double x) {
  static const boost::math::normal_distribution<double> standard;
  return boost::math::cdf(standard, x);
}

double truncated_normal(double mean, double std, double lo, double hi, double u) {
  if (!(lo <= hi)) throw std::invalid_argument("truncated_normal: lo > hi");
  if (!(std > 0.0)) return std::clamp(mean, lo, hi);
  const double a = normal_cdf((lo - mean) / std);
  const double b = normal_cdf((hi - mean) / std);
  if (!(b > a)) {
    // Bounds lie deep in one tail; the nearest bound is the limit.
    return mean < lo ? lo : hi;
  }
  const double p = std::clamp(a + u * (b - a), 1e-300, 1.0 - 1e-16);
  return std::clamp(mean + std * normal_quantile(p), lo, hi);
}

}  // namespace floodda::random
