#pragma once

#include <array>
#include <cstddef>
#include <string>

namespace floodda {

inline constexpr std::size_t kFrictionCount = 7;   // floodplain + six riverbed segments
inline constexpr std::size_t kSubdomainCount = 5;
inline constexpr std::size_t kControlSize = kFrictionCount + 1 + kSubdomainCount;

inline constexpr double kMinStrickler = 5.0;
inline constexpr double kMaxStrickler = 80.0;
inline constexpr double kMinInflowFactor = 0.1;
inline constexpr double kMaxInflowFactor = 5.0;
inline constexpr double kMaxStageCorrection = 3.0;

/// Strickler coefficients (m^(1/3)/s): index 0 floodplain, 1..6 riverbed segments.
struct FrictionField {
  std::array<double, kFrictionCount> ks{};

  static FrictionField uniform(double value);
  void validate() const;

  friend bool operator==(const FrictionField&, const FrictionField&) = default;
};

/// The assimilated quantities, flattened in the fixed order
/// ks0..ks6, mu, dh1..dh5.
struct ControlVector {
  FrictionField friction = FrictionField::uniform(30.0);
  double mu = 1.0;
  std::array<double, kSubdomainCount> delta_h{};

  static constexpr std::size_t size() { return kControlSize; }

  double operator[](std::size_t i) const;
  double& operator[](std::size_t i);

  /// Element-wise clip to the admissible box.
  ControlVector clipped() const;
  bool within_bounds() const;

  static double lower_bound(std::size_t i);
  static double upper_bound(std::size_t i);
  static std::string element_name(std::size_t i);

  friend bool operator==(const ControlVector&, const ControlVector&) = default;
};

}  // namespace floodda
