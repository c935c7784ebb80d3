// SPDX-License-Identifier: Apache-2.0
#include "nerfaug/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/core.h>

#include "nerfaug/error.hpp"
#include "nerfaug/rng.hpp"

namespace nerfaug::geometry {

UnitQuaternion::UnitQuaternion(double w, double x, double y, double z) {
  const double n = std::sqrt(w * w + x * x + y * y + z * z);
  if (!std::isfinite(n) || n == 0.0) {
    throw DataError(fmt::format("cannot normalize quaternion ({}, {}, {}, {})", w, x, y, z));
  }
  // Already-normalized input is kept bit-exact so stored poses round-trip.
  const double s = std::abs(n - 1.0) <= 1e-15 ? 1.0 : n;
  w_ = w / s;
  x_ = x / s;
  y_ = y / s;
  z_ = z / s;
}

UnitQuaternion UnitQuaternion::from_axis_angle(const Vec3& axis, double angle) {
  const Vec3 a = axis.normalized();
  const double s = std::sin(0.5 * angle);
  return {std::cos(0.5 * angle), a.x() * s, a.y() * s, a.z() * s};
}

UnitQuaternion UnitQuaternion::from_matrix(const Mat3& r) {
  const Eigen::Quaterniond q(r);
  return {q.w(), q.x(), q.y(), q.z()};
}

UnitQuaternion UnitQuaternion::unchecked(double w, double x, double y, double z) {
  UnitQuaternion q;
  q.w_ = w;
  q.x_ = x;
  q.y_ = y;
  q.z_ = z;
  return q;
}

Mat3 UnitQuaternion::matrix() const {
  const double ww = w_ * w_, xx = x_ * x_, yy = y_ * y_, zz = z_ * z_;
  const double xy = x_ * y_, xz = x_ * z_, yz = y_ * z_;
  const double wx = w_ * x_, wy = w_ * y_, wz = w_ * z_;
  Mat3 m;
  m << ww + xx - yy - zz, 2 * (xy - wz), 2 * (xz + wy),
       2 * (xy + wz), ww - xx + yy - zz, 2 * (yz - wx),
       2 * (xz - wy), 2 * (yz + wx), ww - xx - yy + zz;
  return m;
}

UnitQuaternion UnitQuaternion::conjugate() const { return {w_, -x_, -y_, -z_}; }

UnitQuaternion UnitQuaternion::operator-() const { return {-w_, -x_, -y_, -z_}; }

UnitQuaternion operator*(const UnitQuaternion& a, const UnitQuaternion& b) {
  return {a.w_ * b.w_ - a.x_ * b.x_ - a.y_ * b.y_ - a.z_ * b.z_,
          a.w_ * b.x_ + a.x_ * b.w_ + a.y_ * b.z_ - a.z_ * b.y_,
          a.w_ * b.y_ - a.x_ * b.z_ + a.y_ * b.w_ + a.z_ * b.x_,
          a.w_ * b.z_ + a.x_ * b.y_ - a.y_ * b.x_ + a.z_ * b.w_};
}

Pose compose(const Pose& a, const Pose& b) {
  return {a.rotation * b.rotation, a.rotation.rotate(b.translation) + a.translation};
}

Pose inverse(const Pose& p) {
  const UnitQuaternion r = p.rotation.conjugate();
  return {r, -r.rotate(p.translation)};
}

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0 && fy > 0.0)) throw ConfigError(fmt::format("focal lengths must be positive (fx={}, fy={})", fx, fy));
  if (width <= 0 || height <= 0) throw ConfigError(fmt::format("image size must be positive ({}x{})", width, height));
  if (!(cx > 0.0 && cx < width && cy > 0.0 && cy < height)) {
    throw ConfigError(fmt::format("principal point ({}, {}) outside the {}x{} image", cx, cy, width, height));
  }
}

Vec3 pixel_direction(const CameraIntrinsics& intr, int u, int v) {
  return Vec3((u + 0.5 - intr.cx) / intr.fx, (v + 0.5 - intr.cy) / intr.fy, 1.0).normalized();
}

std::vector<Ray> generate_rays(const Pose& pose, const CameraIntrinsics& intr, double t_near, double t_far) {
  const Mat3 rt = pose.rotation.matrix().transpose();
  const Vec3 origin = pose.camera_center();
  std::vector<Ray> rays;
  rays.reserve(static_cast<std::size_t>(intr.width) * intr.height);
  for (int v = 0; v < intr.height; ++v) {
    for (int u = 0; u < intr.width; ++u) {
      Vec3 d = (rt * pixel_direction(intr, u, v)).normalized();
      rays.push_back({origin, d, t_near, t_far});
    }
  }
  return rays;
}

bool project(const CameraIntrinsics& intr, const Vec3& p_cam, double& u, double& v) {
  if (p_cam.z() <= 0.0) return false;
  u = intr.fx * p_cam.x() / p_cam.z() + intr.cx;
  v = intr.fy * p_cam.y() / p_cam.z() + intr.cy;
  return true;
}

UnitQuaternion uniform_rotation(double u1, double u2, double u3) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  const double a = std::sqrt(1.0 - u1), b = std::sqrt(u1);
  // (x, y, z, w) = (a sin 2πu2, a cos 2πu2, b sin 2πu3, b cos 2πu3)
  return {b * std::cos(kTwoPi * u3), a * std::sin(kTwoPi * u2), a * std::cos(kTwoPi * u2),
          b * std::sin(kTwoPi * u3)};
}

Pose sample_uniform_pose(std::uint64_t seed, const PoseSamplerConfig& cfg, const CameraIntrinsics& intr) {
  if (!(cfg.dist_min > 0.0 && cfg.dist_min < cfg.dist_max)) {
    throw ConfigError(fmt::format("pose distance range must satisfy 0 < min < max (got [{}, {}])", cfg.dist_min,
                                  cfg.dist_max));
  }
  Rng rng(seed);
  const double u1 = uniform01(rng), u2 = uniform01(rng), u3 = uniform01(rng);
  Pose pose;
  pose.rotation = uniform_rotation(u1, u2, u3);
  const double dist = uniform(rng, cfg.dist_min, cfg.dist_max);

  const double u_lo = cfg.border_margin * intr.width, u_hi = (1.0 - cfg.border_margin) * intr.width;
  const double v_lo = cfg.border_margin * intr.height, v_hi = (1.0 - cfg.border_margin) * intr.height;
  // Lateral offsets are drawn over the full field of view and rejected when the
  // projected center falls in the border band.
  const double sx = std::max(intr.cx, intr.width - intr.cx) / intr.fx;
  const double sy = std::max(intr.cy, intr.height - intr.cy) / intr.fy;
  for (int round = 0; round < cfg.max_rounds; ++round) {
    const double x = dist * uniform(rng, -sx, sx) / std::sqrt(1.0 + sx * sx);
    const double y = dist * uniform(rng, -sy, sy) / std::sqrt(1.0 + sy * sy);
    const double zz = dist * dist - x * x - y * y;
    if (zz <= 0.0) continue;
    const Vec3 t(x, y, std::sqrt(zz));
    double u = 0.0, v = 0.0;
    if (project(intr, t, u, v) && u > u_lo && u < u_hi && v > v_lo && v < v_hi) {
      pose.translation = t;
      return pose;
    }
  }
  throw ConfigError(fmt::format("pose sampling failed after {} rounds: target center cannot project inside the "
                                "image with border margin {}",
                                cfg.max_rounds, cfg.border_margin));
}

double rotation_geodesic(const UnitQuaternion& q1, const UnitQuaternion& q2) {
  const double d = std::min(1.0, std::abs(q1.dot(q2)));
  return 2.0 * std::acos(d);
}

}  // namespace nerfaug::geometry
