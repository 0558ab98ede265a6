#include "floodda/control.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace floodda {

FrictionField FrictionField::uniform(double value) {
  FrictionField f;
  f.ks.fill(value);
  return f;
}

void FrictionField::validate() const {
  for (double k : ks)
    if (!(k >= kMinStrickler && k <= kMaxStrickler))
      throw std::invalid_argument("friction coefficient outside [5, 80]");
}

double ControlVector::operator[](std::size_t i) const {
  if (i < kFrictionCount) return friction.ks[i];
  if (i == kFrictionCount) return mu;
  if (i < kControlSize) return delta_h[i - kFrictionCount - 1];
  throw std::out_of_range("control index");
}

double& ControlVector::operator[](std::size_t i) {
  if (i < kFrictionCount) return friction.ks[i];
  if (i == kFrictionCount) return mu;
  if (i < kControlSize) return delta_h[i - kFrictionCount - 1];
  throw std::out_of_range("control index");
}

double ControlVector::lower_bound(std::size_t i) {
  if (i < kFrictionCount) return kMinStrickler;
  if (i == kFrictionCount) return kMinInflowFactor;
  return -kMaxStageCorrection;
}

double ControlVector::upper_bound(std::size_t i) {
  if (i < kFrictionCount) return kMaxStrickler;
  if (i == kFrictionCount) return kMaxInflowFactor;
  return kMaxStageCorrection;
}

std::string ControlVector::element_name(std::size_t i) {
  if (i < kFrictionCount) return "ks" + std::to_string(i);
  if (i == kFrictionCount) return "mu";
  return "dh" + std::to_string(i - kFrictionCount);
}

ControlVector ControlVector::clipped() const {
  ControlVector out = *this;
  for (std::size_t i = 0; i < kControlSize; ++i)
    out[i] = std::clamp(out[i], lower_bound(i), upper_bound(i));
  return out;
}

bool ControlVector::within_bounds() const {
  for (std::size_t i = 0; i < kControlSize; ++i) {
    const double v = (*this)[i];
    if (!(v >= lower_bound(i) && v <= upper_bound(i))) return false;
  }
  return true;
}

}  // namespace floodda
