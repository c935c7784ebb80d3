// SPDX-License-Identifier: Apache-2.0
//
// Augmented set synthesis from a trained radiance field: random viewpoints,
// interpolated or extrapolated appearance, texture randomization and
// procedural backgrounds.
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "nerfaug/dataset.hpp"
#include "nerfaug/field.hpp"
#include "nerfaug/geometry.hpp"
#include "nerfaug/image.hpp"
#include "nerfaug/render.hpp"
#include "nerfaug/rng.hpp"

namespace nerfaug::augment {

using nn::Matrix;
using nn::Vector;

enum class StrategyKind { kRandomPick, kInterpolation, kExtrapolation };

struct AppearanceStrategy {
  StrategyKind kind = StrategyKind::kExtrapolation;
  double alpha_min = -4.0;
  double alpha_max = 4.0;

  static AppearanceStrategy random_pick() { return {StrategyKind::kRandomPick, 0.0, 0.0}; }
  static AppearanceStrategy interpolation() { return {StrategyKind::kInterpolation, 0.0, 1.0}; }
  static AppearanceStrategy extrapolation(double alpha_max = 4.0) {
    return {StrategyKind::kExtrapolation, -alpha_max, alpha_max};
  }

  // Extrapolation ranges must contain [0, 1]; interpolation is fixed to [0, 1].
  void validate() const;
  std::string name() const;
};

AppearanceStrategy strategy_from_string(const std::string& name, double alpha_max = 4.0);

struct AppearanceSample {
  Vector e_app;
  int i = 0;
  int j = 0;
  double alpha = 0.0;
};

// e = lerp(e_i, e_j, alpha) with distinct i, j; exact at alpha 0 and 1.
Vector mix_embeddings(const Vector& e_i, const Vector& e_j, double alpha);

// Picks distinct i, j uniformly and an alpha from the strategy range
// (alpha = 0 for random-pick). Throws ConfigError for tables with < 2 rows.
AppearanceSample sample_appearance(const Matrix& table, const AppearanceStrategy& strategy, Rng& rng);

enum class BackgroundPolicy { kConstant, kProcedural, kHalfProcedural };
BackgroundPolicy background_from_string(const std::string& name);
std::string to_string(BackgroundPolicy policy);

// Smooth gradient plus a bright planetary limb, values in [0, 0.6].
ImageBuffer procedural_background(int width, int height, std::uint64_t seed);

struct AugmentSpec {
  int n_poses = 2000;
  AppearanceStrategy strategy;
  double texture_noise = 4.0;
  bool two_images_per_pose = true;
  geometry::PoseSamplerConfig poses;
  BackgroundPolicy background = BackgroundPolicy::kHalfProcedural;
  double background_level = 0.0;  // constant background intensity
  render::SamplingConfig sampling{.n_samples = 48, .stratified = false};
  std::uint64_t seed = 0;

  void validate() const;
};

// Everything needed to reproduce one augmented image.
struct ImageRecipe {
  geometry::Pose pose;
  Vector e_app;
  std::optional<std::uint64_t> texture_seed;     // image B only
  std::uint64_t render_seed = 0;
  std::optional<std::uint64_t> background_seed;  // procedural background only
};

// Grayscale render with alpha composited over the background.
ImageBuffer render_recipe(const field::RadianceField& field, const ImageRecipe& recipe,
                          const geometry::CameraIntrinsics& intr, const AugmentSpec& spec);

// Rebuilds the recipe of a manifest row written by generate_augmented_set.
ImageRecipe recipe_from_record(const field::RadianceField& field, const io::Record& record);

// Renders n_poses poses (two images each unless disabled) into
// out_dir/images and returns the manifest (domain "nerf"), ordered by pose
// index then variant (0 = appearance only, 1 = appearance + texture).
io::DatasetManifest generate_augmented_set(const field::RadianceField& field, const AugmentSpec& spec,
                                           const geometry::CameraIntrinsics& intr,
                                           const std::filesystem::path& out_dir);

// Concatenation; throws DataError when the intrinsics differ.
io::DatasetManifest merge_sets(const io::DatasetManifest& synth, const io::DatasetManifest& nerf);

struct DiversityRow {
  std::string label;
  int groups = 0;
  int images = 0;
  double mean_variance = 0.0;
};

// Mean over pixels and groups of the per-pixel population variance across
// the images of each group. Groups with fewer than two images are skipped.
double mean_pixel_variance(const std::vector<std::vector<ImageBuffer>>& groups);

// Groups records by pose (meta pose_index, else exact pose) and applies mean_pixel_variance.
DiversityRow diversity_report(const io::DatasetManifest& set, const std::string& label);

// n renders of one pose with appearance drawn from the strategy, no texture
// noise, constant background.
std::vector<ImageBuffer> appearance_draws(const field::RadianceField& field, const AppearanceStrategy& strategy,
                                          const geometry::Pose& pose, int n, const geometry::CameraIntrinsics& intr,
                                          const render::SamplingConfig& sampling, std::uint64_t seed);

std::string diversity_csv(const std::vector<DiversityRow>& rows);
std::string diversity_table(const std::vector<DiversityRow>& rows);

// Renders of one pose at e = lerp(e_i, e_j, alpha) for each alpha.
std::vector<ImageBuffer> alpha_sweep(const field::RadianceField& field, const geometry::Pose& pose, int i, int j,
                                     const std::vector<double>& alphas, const geometry::CameraIntrinsics& intr,
                                     const render::SamplingConfig& sampling);

// Tiles same-size images row-major with a 2-pixel gap into one grayscale image.
ImageBuffer contact_sheet(const std::vector<ImageBuffer>& images, int columns);

}  // namespace nerfaug::augment
