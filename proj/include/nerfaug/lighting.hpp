// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>

#include "nerfaug/geometry.hpp"

namespace nerfaug {

// Directional sun plus ambient term, scene frame.
struct LightingCondition {
  geometry::Vec3 sun_direction = geometry::Vec3::UnitZ();  // unit, points toward the sun
  double sun_intensity = 1.0;
  double ambient = 0.0;

  bool operator==(const LightingCondition& o) const {
    return sun_direction == o.sun_direction && sun_intensity == o.sun_intensity && ambient == o.ambient;
  }
};

// Euclidean distance over (direction, intensity, ambient); used to pick the
// closest-lit training image for a held-out view.
inline double lighting_distance(const LightingCondition& a, const LightingCondition& b) {
  const double di = a.sun_intensity - b.sun_intensity;
  const double da = a.ambient - b.ambient;
  return std::sqrt((a.sun_direction - b.sun_direction).squaredNorm() + di * di + da * da);
}

}  // namespace nerfaug
