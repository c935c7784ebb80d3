// SPDX-License-Identifier: Apache-2.0
#include "nerfaug/render.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/core.h>

#include "nerfaug/error.hpp"
#include "nerfaug/parallel.hpp"
#include "nerfaug/rng.hpp"

namespace nerfaug::render {

namespace {
constexpr double kDepthEps = 1e-10;
constexpr std::size_t kPixelChunk = 64;
}  // namespace

void SamplingConfig::validate() const {
  if (n_samples < 2) throw ConfigError(fmt::format("n_samples must be >= 2, got {}", n_samples));
  if (!(t_near >= 0.0 && t_near < t_far)) {
    throw ConfigError(fmt::format("sampling range must satisfy 0 <= t_near < t_far (got [{}, {}])", t_near, t_far));
  }
}

CompositeResult composite(std::span<const double> sigma, std::span<const double> colors,
                          std::span<const double> delta, std::span<const double> t, int channels,
                          double background) {
  CompositeResult out;
  double transmittance = 1.0;
  double depth_sum = 0.0;
  for (std::size_t k = 0; k < sigma.size(); ++k) {
    const double a = -std::expm1(-sigma[k] * delta[k]);
    const double w = transmittance * a;
    for (int c = 0; c < channels; ++c) out.color[c] += w * colors[k * channels + c];
    if (!t.empty()) depth_sum += w * t[k];
    transmittance *= 1.0 - a;
  }
  for (int c = 0; c < channels; ++c) out.color[c] += transmittance * background;
  out.alpha = 1.0 - transmittance;
  out.depth = depth_sum / std::max(out.alpha, kDepthEps);
  return out;
}

void composite_backward(std::span<const double> sigma, std::span<const double> colors,
                        std::span<const double> delta, int channels, double background,
                        std::span<const double> d_color, std::span<double> d_sigma, std::span<double> d_colors) {
  const std::size_t k_count = sigma.size();
  // Forward sweep for transmittance before each sample.
  std::vector<double> trans(k_count + 1);
  std::vector<double> alpha(k_count);
  trans[0] = 1.0;
  for (std::size_t k = 0; k < k_count; ++k) {
    alpha[k] = -std::expm1(-sigma[k] * delta[k]);
    trans[k + 1] = trans[k] * (1.0 - alpha[k]);
  }
  // dC/dsigma_k = delta_k (T_{k+1} c_k - S_k), S_k = sum_{j>k} w_j c_j + T_final bg,
  // projected onto d_color.
  double suffix = 0.0;
  for (int c = 0; c < channels; ++c) suffix += d_color[c] * background;
  suffix *= trans[k_count];
  for (std::size_t k = k_count; k-- > 0;) {
    const double w = trans[k] * alpha[k];
    double gc = 0.0;
    for (int c = 0; c < channels; ++c) {
      d_colors[k * channels + c] = w * d_color[c];
      gc += d_color[c] * colors[k * channels + c];
    }
    d_sigma[k] = delta[k] * (trans[k + 1] * gc - suffix);
    suffix += w * gc;
  }
}

bool clip_to_box(const geometry::Ray& ray, double bound, double& t0, double& t1) {
  t0 = ray.t_near;
  t1 = ray.t_far;
  for (int a = 0; a < 3; ++a) {
    const double o = ray.origin[a], d = ray.direction[a];
    if (d == 0.0) {
      if (o < -bound || o > bound) return false;
      continue;
    }
    double ta = (-bound - o) / d, tb = (bound - o) / d;
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  return t1 > t0;
}

field::FieldOutput RadianceFieldView::evaluate(const Matrix& positions, const Matrix& directions,
                                               const Matrix& e_app) const {
  return field_.forward(positions, field::encode_directions(directions, field_.config().sh_degree), e_app);
}

SampleBatch build_samples(std::span<const geometry::Ray> rays, const Matrix& ray_e_app, double bound,
                          const SamplingConfig& sampling, std::span<const std::uint64_t> ray_seeds) {
  const int ns = sampling.n_samples;
  std::vector<std::array<double, 2>> ranges(rays.size());
  std::vector<bool> hit(rays.size(), false);
  std::size_t total = 0;
  for (std::size_t r = 0; r < rays.size(); ++r) {
    hit[r] = clip_to_box(rays[r], bound, ranges[r][0], ranges[r][1]);
    if (hit[r]) total += static_cast<std::size_t>(ns);
  }
  SampleBatch b;
  const auto m = static_cast<Eigen::Index>(total);
  b.positions.resize(m, 3);
  b.directions.resize(m, 3);
  b.e_app.resize(m, ray_e_app.cols());
  b.t.resize(total);
  b.delta.resize(total);
  b.begin.assign(rays.size() + 1, 0);
  std::size_t at = 0;
  for (std::size_t r = 0; r < rays.size(); ++r) {
    b.begin[r] = at;
    if (!hit[r]) continue;
    const double t0 = ranges[r][0], t1 = ranges[r][1];
    const double step = (t1 - t0) / ns;
    Rng rng(ray_seeds.empty() ? 0 : ray_seeds[r]);
    for (int k = 0; k < ns; ++k) {
      const double u = sampling.stratified ? uniform01(rng) : 0.5;
      b.t[at + k] = t0 + (k + u) * step;
    }
    for (int k = 0; k < ns; ++k) {
      const std::size_t i = at + k;
      b.delta[i] = (k + 1 < ns ? b.t[i + 1] : t1) - b.t[i];
      const geometry::Vec3 p = rays[r].origin + b.t[i] * rays[r].direction;
      const auto row = static_cast<Eigen::Index>(i);
      b.positions.row(row) = p.transpose();
      b.directions.row(row) = rays[r].direction.transpose();
      b.e_app.row(row) = ray_e_app.row(static_cast<Eigen::Index>(r));
    }
    at += static_cast<std::size_t>(ns);
  }
  b.begin[rays.size()] = at;
  return b;
}

ImageBuffer render_image(const VolumeField& field, const geometry::Pose& pose, const geometry::CameraIntrinsics& intr,
                         const Vector& e_app, const SamplingConfig& sampling, std::uint64_t seed) {
  sampling.validate();
  if (e_app.size() != field.appearance_dim()) {
    throw ConfigError(fmt::format("appearance vector has {} entries, field expects {}", e_app.size(),
                                  field.appearance_dim()));
  }
  const auto rays = geometry::generate_rays(pose, intr, sampling.t_near, sampling.t_far);
  ImageBuffer img(intr.width, intr.height, 3, sampling.background, 0.0);
  const std::size_t n_chunks = (rays.size() + kPixelChunk - 1) / kPixelChunk;
  parallel_for(n_chunks, [&](std::size_t chunk) {
    const std::size_t first = chunk * kPixelChunk;
    const std::size_t count = std::min(kPixelChunk, rays.size() - first);
    std::vector<std::uint64_t> seeds(count);
    for (std::size_t i = 0; i < count; ++i) seeds[i] = derive_seed(seed, {first + i});
    const Matrix ray_app = e_app.transpose().replicate(static_cast<Eigen::Index>(count), 1);
    const SampleBatch batch =
        build_samples(std::span(rays).subspan(first, count), ray_app, field.bound(), sampling, seeds);
    if (batch.t.empty()) return;
    const field::FieldOutput out = field.evaluate(batch.positions, batch.directions, batch.e_app);
    // Row-major copy of the colors so each ray's samples are contiguous.
    std::vector<double> rgb(batch.t.size() * 3);
    for (std::size_t i = 0; i < batch.t.size(); ++i) {
      for (int c = 0; c < 3; ++c) rgb[i * 3 + c] = out.rgb(static_cast<Eigen::Index>(i), c);
    }
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t b0 = batch.begin[i], b1 = batch.begin[i + 1];
      if (b0 == b1) continue;
      const std::size_t len = b1 - b0;
      const CompositeResult res =
          composite(std::span<const double>(out.sigma.data() + b0, len), std::span<const double>(&rgb[b0 * 3], len * 3),
                    std::span<const double>(&batch.delta[b0], len), std::span<const double>(&batch.t[b0], len), 3,
                    sampling.background);
      const std::size_t px = first + i;
      for (int c = 0; c < 3; ++c) img.values[px * 3 + c] = res.color[c];
      img.alpha[px] = res.alpha;
    }
  });
  img.clamp01();
  return img;
}

ImageBuffer render_image(const field::RadianceField& field, const geometry::Pose& pose,
                         const geometry::CameraIntrinsics& intr, const Vector& e_app, const SamplingConfig& sampling,
                         std::uint64_t seed) {
  return render_image(RadianceFieldView(field), pose, intr, e_app, sampling, seed);
}

}  // namespace nerfaug::render
