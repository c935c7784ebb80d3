// SPDX-License-Identifier: Apache-2.0
//
// Ray sampling and emission-absorption compositing.
#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "nerfaug/field.hpp"
#include "nerfaug/geometry.hpp"
#include "nerfaug/image.hpp"

namespace nerfaug::render {

using nn::Matrix;
using nn::Vector;

struct SamplingConfig {
  int n_samples = 48;
  double t_near = 0.0;
  double t_far = 100.0;
  bool stratified = true;
  double background = 0.0;

  // Throws ConfigError unless n_samples >= 2 and 0 <= t_near < t_far.
  void validate() const;
};

struct CompositeResult {
  std::array<double, 3> color{0.0, 0.0, 0.0};
  double alpha = 0.0;
  double depth = 0.0;
};

// alpha_k = 1 - exp(-sigma_k delta_k), T_k = prod_{j<k} (1 - alpha_j),
// color = sum T_k alpha_k c_k + T_final background, alpha = 1 - T_final,
// depth = sum T_k alpha_k t_k / max(alpha, 1e-10).
// colors holds K x channels values (channels <= 3), row per sample.
CompositeResult composite(std::span<const double> sigma, std::span<const double> colors,
                          std::span<const double> delta, std::span<const double> t, int channels,
                          double background);

// Gradients of the composited color w.r.t. sigma and the sample colors,
// given dL/dcolor. Outputs are overwritten (sizes K and K x channels).
void composite_backward(std::span<const double> sigma, std::span<const double> colors,
                        std::span<const double> delta, int channels, double background,
                        std::span<const double> d_color, std::span<double> d_sigma, std::span<double> d_colors);

// Clips a ray to [t_near, t_far] and the box [-bound, bound]^3. Returns false
// when the remaining segment is empty.
bool clip_to_box(const geometry::Ray& ray, double bound, double& t0, double& t1);

// Anything that maps positions (+ directions, appearance) to density and color.
class VolumeField {
 public:
  virtual ~VolumeField() = default;
  virtual double bound() const = 0;
  virtual int appearance_dim() const = 0;
  // positions, directions: N x 3 (scene frame); e_app: N x appearance_dim.
  virtual field::FieldOutput evaluate(const Matrix& positions, const Matrix& directions,
                                      const Matrix& e_app) const = 0;
};

class RadianceFieldView : public VolumeField {
 public:
  explicit RadianceFieldView(const field::RadianceField& f) : field_(f) {}
  double bound() const override { return field_.config().bound; }
  int appearance_dim() const override { return field_.config().appearance_dim; }
  field::FieldOutput evaluate(const Matrix& positions, const Matrix& directions, const Matrix& e_app) const override;

 private:
  const field::RadianceField& field_;
};

// Sample points of a set of rays, flattened. Rays that miss the box own no samples.
struct SampleBatch {
  Matrix positions;   // M x 3
  Matrix directions;  // M x 3
  Matrix e_app;       // M x D
  std::vector<double> t, delta;
  std::vector<std::size_t> begin;  // R + 1 offsets into the sample arrays
};

// N_samples points per ray between the clipped ends: stratified (one uniform
// jitter per bin, drawn from Rng(ray_seeds[r])) or bin centers. delta_k is
// t_{k+1} - t_k and the last delta reaches the clipped far end.
SampleBatch build_samples(std::span<const geometry::Ray> rays, const Matrix& ray_e_app, double bound,
                          const SamplingConfig& sampling, std::span<const std::uint64_t> ray_seeds);

// Renders H x W pixels (3 channels + alpha). Pixel i uses the jitter seed
// derive_seed(seed, {i}); work is split into fixed pixel chunks so the
// image is identical for any worker count.
ImageBuffer render_image(const VolumeField& field, const geometry::Pose& pose, const geometry::CameraIntrinsics& intr,
                         const Vector& e_app, const SamplingConfig& sampling, std::uint64_t seed);
ImageBuffer render_image(const field::RadianceField& field, const geometry::Pose& pose,
                         const geometry::CameraIntrinsics& intr, const Vector& e_app, const SamplingConfig& sampling,
                         std::uint64_t seed);

}  // namespace nerfaug::render
