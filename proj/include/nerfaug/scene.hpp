// SPDX-License-Identifier: Apache-2.0
//
// Procedural stand-in for the target spacecraft and its ground-truth renderer.
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "nerfaug/dataset.hpp"
#include "nerfaug/geometry.hpp"
#include "nerfaug/image.hpp"
#include "nerfaug/lighting.hpp"

namespace nerfaug::scene {

using geometry::Vec3;

struct Triangle {
  std::array<Vec3, 3> v;
  Vec3 albedo = Vec3::Constant(0.5);  // rgb in [0, 1]

  // Unit normal from the counter-clockwise winding; points outward on closed parts.
  Vec3 normal() const { return (v[1] - v[0]).cross(v[2] - v[0]).normalized(); }
  double area() const { return 0.5 * (v[1] - v[0]).cross(v[2] - v[0]).norm(); }
};

struct ProceduralScene {
  std::vector<Triangle> triangles;
  double bounding_radius = 0.0;
};

// Body box, two unequal solar panels and an antenna rod; 48 triangles inside a
// 0.5 m sphere. The seed only varies per-face albedo, never the geometry.
ProceduralScene build_reference_target(std::uint64_t seed);

// Copy with each triangle's albedo jittered uniformly by +-amplitude (clamped to [0, 1]).
ProceduralScene jitter_albedo(const ProceduralScene& scene, double amplitude, std::uint64_t seed);

struct Hit {
  double t = 0.0;
  std::size_t triangle = 0;
};

// Möller–Trumbore intersection; returns the hit distance along the ray when it exceeds t_min.
std::optional<double> intersect(const Triangle& tri, const Vec3& origin, const Vec3& dir, double t_min = 1e-9);
std::optional<Hit> nearest_hit(const ProceduralScene& scene, const Vec3& origin, const Vec3& dir);

// Lambertian shading albedo * (ambient + intensity * max(0, n.l)) clamped to [0, 1],
// 3 channels, alpha 1 on hits and 0 with value 0 elsewhere.
ImageBuffer render_ground_truth(const ProceduralScene& scene, const geometry::Pose& pose,
                                const geometry::CameraIntrinsics& intr, const LightingCondition& light);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double v) const { return v >= lo && v <= hi; }
  bool overlaps(const Interval& o) const { return lo <= o.hi && o.lo <= hi; }
};

struct DomainProfile {
  std::string name;
  Vec3 sun_axis = Vec3::UnitZ();
  Interval sun_cone_deg;  // angle between the sun direction and sun_axis
  Interval sun_intensity;
  Interval ambient;
  double albedo_jitter = 0.0;

  LightingCondition sample_lighting(std::uint64_t seed) const;
  bool admits(const LightingCondition& light) const;
};

// "source", "diffuse-target" and "direct-target". Throws ConfigError on other names.
DomainProfile domain_profile(const std::string& name);
std::vector<std::string> domain_profile_names();

// Renders n grayscale images with poses from geometry::sample_uniform_pose and
// per-image lighting (and albedo jitter) drawn from the profile. Images go to
// out_dir/images/NNNNNN.png; the returned manifest references them.
io::DatasetManifest generate_domain_set(const ProceduralScene& scene, const DomainProfile& profile, int n,
                                        const geometry::CameraIntrinsics& intr, std::uint64_t seed,
                                        const std::filesystem::path& out_dir,
                                        const geometry::PoseSamplerConfig& poses = {});

}  // namespace nerfaug::scene
