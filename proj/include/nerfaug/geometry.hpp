// SPDX-License-Identifier: Apache-2.0
//
// Rigid transforms, the pinhole camera and ray generation.
//
// Conventions used everywhere in nerfaug:
//  * quaternions are scalar-first (w, x, y, z) and always unit-norm;
//  * a Pose maps target-frame points into the camera frame,
//    p_cam = R(q) * p_tgt + t, and the target frame is the scene frame;
//  * the camera frame is x right, y down, z forward (optical axis);
//  * pixel (u, v) covers [u, u+1) x [v, v+1) and its center is (u+0.5, v+0.5).
#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace nerfaug::geometry {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

class UnitQuaternion {
 public:
  UnitQuaternion() = default;
  // Normalizes the input; throws DataError on a zero or non-finite quaternion.
  UnitQuaternion(double w, double x, double y, double z);

  static UnitQuaternion identity() { return {}; }
  static UnitQuaternion from_axis_angle(const Vec3& axis, double angle);
  static UnitQuaternion from_matrix(const Mat3& r);
  // Stores the components verbatim without normalizing. Only for constructing
  // invalid inputs that validators must reject.
  static UnitQuaternion unchecked(double w, double x, double y, double z);

  double w() const { return w_; }
  double x() const { return x_; }
  double y() const { return y_; }
  double z() const { return z_; }

  Mat3 matrix() const;
  Vec3 rotate(const Vec3& v) const { return matrix() * v; }
  UnitQuaternion conjugate() const;
  UnitQuaternion operator-() const;
  double dot(const UnitQuaternion& o) const { return w_ * o.w_ + x_ * o.x_ + y_ * o.y_ + z_ * o.z_; }

  friend UnitQuaternion operator*(const UnitQuaternion& a, const UnitQuaternion& b);
  bool operator==(const UnitQuaternion&) const = default;

 private:
  double w_ = 1.0, x_ = 0.0, y_ = 0.0, z_ = 0.0;
};

struct Pose {
  UnitQuaternion rotation;
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& p_target) const { return rotation.rotate(p_target) + translation; }
  // Camera center expressed in the scene frame, -R^T t.
  Vec3 camera_center() const { return -(rotation.matrix().transpose() * translation); }

  bool operator==(const Pose& o) const {
    return rotation == o.rotation && translation == o.translation;
  }
};

// a ∘ b: first apply b, then a.
Pose compose(const Pose& a, const Pose& b);
Pose inverse(const Pose& p);

struct CameraIntrinsics {
  double fx = 110.0, fy = 110.0;
  double cx = 32.0, cy = 32.0;
  int width = 64, height = 64;

  // Throws ConfigError when the invariants fx, fy > 0, 0 < cx < W, 0 < cy < H fail.
  void validate() const;
  bool operator==(const CameraIntrinsics&) const = default;
};

struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 direction = Vec3::UnitZ();
  double t_near = 0.0;
  double t_far = 1.0;
};

// Camera-frame unit direction through the center of pixel (u, v).
Vec3 pixel_direction(const CameraIntrinsics& intr, int u, int v);

// H*W rays in row-major pixel order (index = v*W + u), origins at the camera
// center and directions in the scene frame.
std::vector<Ray> generate_rays(const Pose& pose, const CameraIntrinsics& intr, double t_near = 0.0,
                               double t_far = 1.0e3);

// Projects a camera-frame point to pixel coordinates; false if behind the camera.
bool project(const CameraIntrinsics& intr, const Vec3& p_cam, double& u, double& v);

struct PoseSamplerConfig {
  double dist_min = 2.2;
  double dist_max = 10.0;
  // Fraction of the image width/height kept clear at each border for the
  // projected target center.
  double border_margin = 0.15;
  int max_rounds = 1000;
};

// Rotation uniform on SO(3), camera-to-target distance uniform in
// [dist_min, dist_max], target center projecting inside the image. Lateral
// offsets are re-drawn until the projection constraint holds; throws
// ConfigError after max_rounds failed draws.
Pose sample_uniform_pose(std::uint64_t seed, const PoseSamplerConfig& cfg, const CameraIntrinsics& intr);

// Uniform rotation via the subgroup algorithm from three uniform variates.
UnitQuaternion uniform_rotation(double u1, double u2, double u3);

// 2 acos(|<q1, q2>|), in [0, pi]; invariant under the sign of either input.
double rotation_geodesic(const UnitQuaternion& q1, const UnitQuaternion& q2);

}  // namespace nerfaug::geometry
