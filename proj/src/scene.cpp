// SPDX-License-Identifier: Apache-2.0
#include "nerfaug/scene.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/core.h>

#include "nerfaug/error.hpp"
#include "nerfaug/parallel.hpp"
#include "nerfaug/rng.hpp"

namespace nerfaug::scene {

namespace fs = std::filesystem;

namespace {

void add_box(ProceduralScene& scene, const Vec3& center, const Vec3& half, double albedo, Rng& rng) {
  for (int a = 0; a < 3; ++a) {
    const int b = (a + 1) % 3, c = (a + 2) % 3;
    for (int s : {-1, 1}) {
      auto corner = [&](double u, double v) {
        Vec3 p = center;
        p[a] += s * half[a];
        p[b] += u * half[b];
        p[c] += v * half[c];
        return p;
      };
      const double face_albedo = std::clamp(albedo + uniform(rng, -0.03, 0.03), 0.0, 1.0);
      const Vec3 rgb = Vec3::Constant(face_albedo);
      const Vec3 p00 = corner(-1, -1), p10 = corner(1, -1), p11 = corner(1, 1), p01 = corner(-1, 1);
      if (s > 0) {
        scene.triangles.push_back({{p00, p10, p11}, rgb});
        scene.triangles.push_back({{p00, p11, p01}, rgb});
      } else {
        scene.triangles.push_back({{p00, p11, p10}, rgb});
        scene.triangles.push_back({{p00, p01, p11}, rgb});
      }
    }
  }
}

Vec3 any_orthogonal(const Vec3& n) {
  const Vec3 helper = std::abs(n.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
  return n.cross(helper).normalized();
}

}  // namespace

ProceduralScene build_reference_target(std::uint64_t seed) {
  ProceduralScene scene;
  Rng rng(derive_seed(seed, {0xA1BED0}));
  add_box(scene, {0.0, 0.0, 0.0}, {0.18, 0.14, 0.12}, 0.75, rng);       // body
  add_box(scene, {0.33, 0.0, 0.02}, {0.15, 0.10, 0.008}, 0.30, rng);    // long panel
  add_box(scene, {-0.27, 0.02, -0.02}, {0.09, 0.07, 0.008}, 0.30, rng); // short panel
  add_box(scene, {0.06, 0.05, 0.28}, {0.015, 0.015, 0.16}, 0.95, rng);  // antenna
  for (const auto& t : scene.triangles) {
    for (const auto& v : t.v) scene.bounding_radius = std::max(scene.bounding_radius, v.norm());
  }
  return scene;
}

ProceduralScene jitter_albedo(const ProceduralScene& scene, double amplitude, std::uint64_t seed) {
  ProceduralScene out = scene;
  if (amplitude <= 0.0) return out;
  Rng rng(seed);
  for (auto& t : out.triangles) {
    const double d = uniform(rng, -amplitude, amplitude);
    t.albedo = (t.albedo.array() + d).min(1.0).max(0.0).matrix();
  }
  return out;
}

std::optional<double> intersect(const Triangle& tri, const Vec3& origin, const Vec3& dir, double t_min) {
  constexpr double kEps = 1e-12;
  const Vec3 e1 = tri.v[1] - tri.v[0];
  const Vec3 e2 = tri.v[2] - tri.v[0];
  const Vec3 p = dir.cross(e2);
  const double det = e1.dot(p);
  if (std::abs(det) < kEps) return std::nullopt;
  const double inv = 1.0 / det;
  const Vec3 s = origin - tri.v[0];
  const double u = s.dot(p) * inv;
  if (u < 0.0 || u > 1.0) return std::nullopt;
  const Vec3 q = s.cross(e1);
  const double v = dir.dot(q) * inv;
  if (v < 0.0 || u + v > 1.0) return std::nullopt;
  const double t = e2.dot(q) * inv;
  if (t <= t_min) return std::nullopt;
  return t;
}

std::optional<Hit> nearest_hit(const ProceduralScene& scene, const Vec3& origin, const Vec3& dir) {
  // Bounding-sphere rejection.
  const double b = origin.dot(dir);
  const double c = origin.squaredNorm() - scene.bounding_radius * scene.bounding_radius;
  if (c > 0.0 && (b > 0.0 || b * b - c < 0.0)) return std::nullopt;
  std::optional<Hit> best;
  for (std::size_t i = 0; i < scene.triangles.size(); ++i) {
    if (auto t = intersect(scene.triangles[i], origin, dir); t && (!best || *t < best->t)) best = Hit{*t, i};
  }
  return best;
}

ImageBuffer render_ground_truth(const ProceduralScene& scene, const geometry::Pose& pose,
                                const geometry::CameraIntrinsics& intr, const LightingCondition& light) {
  ImageBuffer img(intr.width, intr.height, 3, 0.0, 0.0);
  const auto rays = geometry::generate_rays(pose, intr);
  const Vec3 l = light.sun_direction.normalized();
  for (std::size_t i = 0; i < rays.size(); ++i) {
    const auto hit = nearest_hit(scene, rays[i].origin, rays[i].direction);
    if (!hit) continue;
    const Triangle& tri = scene.triangles[hit->triangle];
    const double shade = light.ambient + light.sun_intensity * std::max(0.0, tri.normal().dot(l));
    for (int ch = 0; ch < 3; ++ch) img.values[i * 3 + ch] = std::clamp(tri.albedo[ch] * shade, 0.0, 1.0);
    img.alpha[i] = 1.0;
  }
  return img;
}

LightingCondition DomainProfile::sample_lighting(std::uint64_t seed) const {
  Rng rng(seed);
  constexpr double kDeg = std::numbers::pi / 180.0;
  const double cos_hi = std::cos(sun_cone_deg.lo * kDeg), cos_lo = std::cos(sun_cone_deg.hi * kDeg);
  const double cos_theta = uniform(rng, cos_lo, cos_hi);
  const double phi = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  const double sin_theta = std::sqrt(std::max(0.0, 1.0 - cos_theta * cos_theta));
  const Vec3 axis = sun_axis.normalized();
  const Vec3 e1 = any_orthogonal(axis);
  const Vec3 e2 = axis.cross(e1);
  LightingCondition light;
  light.sun_direction =
      (cos_theta * axis + sin_theta * (std::cos(phi) * e1 + std::sin(phi) * e2)).normalized();
  light.sun_intensity = uniform(rng, sun_intensity.lo, sun_intensity.hi);
  light.ambient = uniform(rng, ambient.lo, ambient.hi);
  return light;
}

bool DomainProfile::admits(const LightingCondition& light) const {
  constexpr double kTol = 1e-9;
  const double angle =
      std::acos(std::clamp(light.sun_direction.dot(sun_axis.normalized()), -1.0, 1.0)) * 180.0 / std::numbers::pi;
  return angle >= sun_cone_deg.lo - kTol && angle <= sun_cone_deg.hi + kTol &&
         sun_intensity.contains(light.sun_intensity) && ambient.contains(light.ambient);
}

DomainProfile domain_profile(const std::string& name) {
  const Vec3 axis = Vec3(0.2, -0.3, 1.0).normalized();
  if (name == "source") return {name, axis, {0.0, 25.0}, {0.7, 1.0}, {0.15, 0.25}, 0.0};
  if (name == "diffuse-target") return {name, axis, {60.0, 120.0}, {0.10, 0.35}, {0.45, 0.70}, 0.15};
  if (name == "direct-target") return {name, axis, {60.0, 120.0}, {1.4, 2.2}, {0.0, 0.06}, 0.20};
  throw ConfigError(fmt::format("unknown domain profile '{}'", name));
}

std::vector<std::string> domain_profile_names() { return {"source", "diffuse-target", "direct-target"}; }

io::DatasetManifest generate_domain_set(const ProceduralScene& scene, const DomainProfile& profile, int n,
                                        const geometry::CameraIntrinsics& intr, std::uint64_t seed,
                                        const fs::path& out_dir, const geometry::PoseSamplerConfig& poses) {
  if (n < 1) throw ConfigError(fmt::format("domain set size must be >= 1, got {}", n));
  intr.validate();
  const fs::path image_dir = out_dir / "images";
  std::error_code ec;
  fs::create_directories(image_dir, ec);
  if (ec) throw DataError(fmt::format("cannot create '{}': {}", image_dir.string(), ec.message()));

  io::DatasetManifest manifest;
  manifest.intrinsics = intr;
  manifest.records.resize(static_cast<std::size_t>(n));
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
    const std::uint64_t image_seed = derive_seed(seed, {i});
    io::Record& rec = manifest.records[i];
    rec.pose = geometry::sample_uniform_pose(derive_seed(image_seed, {1}), poses, intr);
    const LightingCondition light = profile.sample_lighting(derive_seed(image_seed, {2}));
    const ProceduralScene jittered = jitter_albedo(scene, profile.albedo_jitter, derive_seed(image_seed, {3}));
    const ImageBuffer gray = to_grayscale(render_ground_truth(jittered, rec.pose, intr, light));
    rec.image = fs::absolute(image_dir / fmt::format("{:06d}.png", i)).lexically_normal();
    write_png(gray, rec.image);
    rec.domain = profile.name;
    rec.meta.lighting = light;
    rec.meta.render_seed = image_seed;
  });
  return manifest;
}

}  // namespace nerfaug::scene
