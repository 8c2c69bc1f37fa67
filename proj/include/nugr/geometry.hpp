#pragma once

#include <array>
#include <cmath>
#include <numbers>

namespace nugr {

using Vec2 = std::array<double, 2>;
using Vec3 = std::array<double, 3>;

// Maps an angle into (-pi, pi].
inline double normalize_angle(double rad) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  double a = std::fmod(rad, kTwoPi);
  if (a <= -std::numbers::pi) a += kTwoPi;
  if (a > std::numbers::pi) a -= kTwoPi;
  return a;
}

inline double bev_distance(const Vec3& a, const Vec3& b) {
  return std::hypot(a[0] - b[0], a[1] - b[1]);
}

inline double norm(const Vec2& v) { return std::hypot(v[0], v[1]); }

// Smallest absolute difference between two headings, in [0, pi].
inline double yaw_difference(double a, double b) {
  return std::abs(normalize_angle(a - b));
}

inline bool all_finite(const Vec3& v) {
  return std::isfinite(v[0]) && std::isfinite(v[1]) && std::isfinite(v[2]);
}

}  // namespace nugr
