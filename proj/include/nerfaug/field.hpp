// SPDX-License-Identifier: Apache-2.0
//
// Radiance field with per-image appearance embeddings.
//
// Position features come from axis-aligned feature planes (xy, xz, yz) at
// several resolutions: each plane is bilinearly sampled, the three samples
// are multiplied elementwise, and the products are concatenated across
// resolutions. A density network maps them to (sigma, density features); a
// color network maps [density features, SH(direction), appearance] to rgb.
// Density never sees the direction or the appearance embedding.
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "nerfaug/geometry.hpp"
#include "nerfaug/nn.hpp"

namespace nerfaug::field {

using geometry::Vec3;
using nn::Matrix;
using nn::Vector;

struct FieldConfig {
  std::vector<int> resolutions{32, 64, 128};
  int features = 8;  // per plane
  std::vector<int> density_hidden{64, 64};
  int density_features = 15;  // width of F_sigma
  std::vector<int> color_hidden{64, 64};
  int appearance_dim = 8;
  int sh_degree = 2;
  double bound = 0.6;  // scene is [-bound, bound]^3
  int num_embeddings = 1;
  nn::Activation hidden_activation = nn::Activation::kSoftplus;
  double plane_init = 0.1;         // planes start at plane_init +- plane_init_noise
  double plane_init_noise = 0.01;
  double embedding_init = 0.05;    // embeddings start uniform in +-embedding_init

  // Throws ConfigError when a count is < 1, resolutions are not strictly
  // increasing (or < 2), or sh_degree is outside [0, 3].
  void validate() const;
  int position_feature_size() const { return static_cast<int>(resolutions.size()) * features; }
  int direction_feature_size() const { return (sh_degree + 1) * (sh_degree + 1); }
  int color_input_size() const { return density_features + direction_feature_size() + appearance_dim; }

  bool operator==(const FieldConfig&) const = default;
};

nlohmann::json to_json(const FieldConfig& cfg);
FieldConfig field_config_from_json(const nlohmann::json& j);

class RadianceField;

// Gradient buffers with the same layout as RadianceField::tensors().
struct FieldGradients {
  std::vector<double> planes;
  nn::MlpGrad density;
  nn::MlpGrad color;
  Matrix appearance;  // num_embeddings x appearance_dim

  explicit FieldGradients(const RadianceField& field);
  void set_zero();
  FieldGradients& operator+=(const FieldGradients& o);
  std::vector<nn::TensorRef> tensors();
};

// Intermediates of a batched forward pass.
struct FieldTape {
  Matrix positions;              // N x 3 (clamped)
  std::vector<double> plane_samples;  // N x levels x 3 x F interpolated plane features
  Matrix position_features;      // N x (levels F)
  nn::MlpTape density;
  Matrix density_raw;            // N x (1 + density_features)
  nn::MlpTape color;
};

struct FieldOutput {
  Vector sigma;  // N
  Matrix rgb;    // N x 3
};

class RadianceField {
 public:
  RadianceField() = default;
  RadianceField(const FieldConfig& config, std::uint64_t seed);

  const FieldConfig& config() const { return config_; }

  // Plane storage: for level r and plane k (0 = xy, 1 = xz, 2 = yz) the
  // R x R x F block starting at plane_offset(r, k), entry ((j R + i) F + f)
  // for first-axis index i and second-axis index j.
  std::vector<double>& planes() { return planes_; }
  const std::vector<double>& planes() const { return planes_; }
  std::size_t plane_offset(int level, int plane) const { return offsets_[static_cast<std::size_t>(level * 3 + plane)]; }

  nn::Mlp& density_mlp() { return density_; }
  const nn::Mlp& density_mlp() const { return density_; }
  nn::Mlp& color_mlp() { return color_; }
  const nn::Mlp& color_mlp() const { return color_; }
  Matrix& appearance() { return appearance_; }
  const Matrix& appearance() const { return appearance_; }
  Vector embedding(int index) const;

  // Block names: "planes", "density_mlp", "color_mlp", "appearance".
  std::vector<nn::TensorRef> tensors();
  std::size_t parameter_count() const;

  // Single-point operations.
  Vector encode_position(const Vec3& p) const;
  // (sigma, F_sigma) from position features.
  std::pair<double, Vector> density(const Vector& position_features) const;
  Vec3 color(const Vector& density_features, const Vector& direction_features, const Vector& e_app) const;
  double sigma_at(const Vec3& p) const { return density(encode_position(p)).first; }

  // Batched: positions N x 3, direction features N x (L+1)^2, e_app N x D.
  FieldOutput forward(const Matrix& positions, const Matrix& direction_features, const Matrix& e_app,
                      FieldTape* tape = nullptr) const;
  // sigma only, for masks and occupancy queries.
  Vector density_batch(const Matrix& positions) const;
  // Accumulates parameter gradients (planes and both MLPs) and returns dL/de_app (N x D).
  Matrix backward(const FieldTape& tape, const Vector& d_sigma, const Matrix& d_rgb, FieldGradients& grads) const;

  Matrix encode_positions(const Matrix& positions, FieldTape* tape) const;

  bool operator==(const RadianceField& o) const;

 private:
  void layout();

  FieldConfig config_;
  std::vector<std::size_t> offsets_;
  std::vector<double> planes_;
  nn::Mlp density_;
  nn::Mlp color_;
  Matrix appearance_;
};

// Real spherical harmonics up to degree L (0..3), (L+1)^2 values ordered by
// degree then m = -l..l, with the Condon-Shortley phase.
Vector encode_direction(const Vec3& d, int degree);
Matrix encode_directions(const Matrix& dirs, int degree);

// Copy with i.i.d. N(0, noise_std^2) added to every color-network weight
// matrix. Biases, density network, planes and embeddings are untouched.
RadianceField perturb_color_weights(const RadianceField& field, double noise_std, std::uint64_t seed);

// Total variation over all planes: sum over planes of the mean squared
// neighbour difference along both plane axes. Adds weight * dTV to grads when given.
double total_variation(const RadianceField& field, double weight, FieldGradients* grads);

// Versioned binary checkpoint; round trip is bit-exact.
void save_checkpoint(const RadianceField& field, const std::filesystem::path& path);
RadianceField load_checkpoint(const std::filesystem::path& path);
void write_field(std::ostream& os, const RadianceField& field);
RadianceField read_field(std::istream& is, const std::string& origin);

}  // namespace nerfaug::field
