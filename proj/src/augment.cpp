// SPDX-License-Identifier: Apache-2.0
#include "nerfaug/augment.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

#include <fmt/core.h>

#include "nerfaug/error.hpp"
#include "nerfaug/parallel.hpp"

namespace nerfaug::augment {

namespace fs = std::filesystem;

void AppearanceStrategy::validate() const {
  switch (kind) {
    case StrategyKind::kRandomPick:
      return;
    case StrategyKind::kInterpolation:
      if (alpha_min != 0.0 || alpha_max != 1.0) throw ConfigError("interpolation uses alpha in [0, 1]");
      return;
    case StrategyKind::kExtrapolation:
      if (!(alpha_min <= 0.0 && alpha_max >= 1.0)) {
        throw ConfigError(fmt::format("extrapolation range [{}, {}] must contain [0, 1]", alpha_min, alpha_max));
      }
      return;
  }
}

std::string AppearanceStrategy::name() const {
  switch (kind) {
    case StrategyKind::kRandomPick:
      return "random-pick";
    case StrategyKind::kInterpolation:
      return "interpolation";
    case StrategyKind::kExtrapolation:
      return "extrapolation";
  }
  return "unknown";
}

AppearanceStrategy strategy_from_string(const std::string& name, double alpha_max) {
  if (name == "random-pick") return AppearanceStrategy::random_pick();
  if (name == "interpolation") return AppearanceStrategy::interpolation();
  if (name == "extrapolation") {
    AppearanceStrategy s = AppearanceStrategy::extrapolation(alpha_max);
    s.validate();
    return s;
  }
  throw ConfigError(fmt::format("unknown appearance strategy '{}' (random-pick, interpolation, extrapolation)", name));
}

Vector mix_embeddings(const Vector& e_i, const Vector& e_j, double alpha) {
  if (e_i.size() != e_j.size()) throw ConfigError("embeddings differ in length");
  Vector out(e_i.size());
  for (Eigen::Index k = 0; k < e_i.size(); ++k) out[k] = std::lerp(e_i[k], e_j[k], alpha);
  return out;
}

AppearanceSample sample_appearance(const Matrix& table, const AppearanceStrategy& strategy, Rng& rng) {
  strategy.validate();
  const auto n = static_cast<int>(table.rows());
  if (n < 2) {
    throw ConfigError(fmt::format("appearance table has {} embedding(s); sampling needs at least 2", n));
  }
  AppearanceSample s;
  s.i = std::min(n - 1, static_cast<int>(uniform01(rng) * n));
  s.j = std::min(n - 2, static_cast<int>(uniform01(rng) * (n - 1)));
  if (s.j >= s.i) ++s.j;
  s.alpha = strategy.kind == StrategyKind::kRandomPick ? 0.0 : uniform(rng, strategy.alpha_min, strategy.alpha_max);
  s.e_app = mix_embeddings(table.row(s.i).transpose(), table.row(s.j).transpose(), s.alpha);
  return s;
}

BackgroundPolicy background_from_string(const std::string& name) {
  if (name == "constant") return BackgroundPolicy::kConstant;
  if (name == "procedural") return BackgroundPolicy::kProcedural;
  if (name == "half-procedural") return BackgroundPolicy::kHalfProcedural;
  throw ConfigError(fmt::format("unknown background policy '{}' (constant, procedural, half-procedural)", name));
}

std::string to_string(BackgroundPolicy policy) {
  switch (policy) {
    case BackgroundPolicy::kConstant:
      return "constant";
    case BackgroundPolicy::kProcedural:
      return "procedural";
    case BackgroundPolicy::kHalfProcedural:
      return "half-procedural";
  }
  return "unknown";
}

ImageBuffer procedural_background(int width, int height, std::uint64_t seed) {
  Rng rng(seed);
  const double angle = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  const double base = uniform(rng, 0.0, 0.15);
  const double slope = uniform(rng, 0.0, 0.2);
  // Limb: a disc much larger than the image whose edge crosses the frame.
  const double limb_angle = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  const double radius = uniform(rng, 1.5, 3.0) * width;
  const double edge = uniform(rng, 0.2, 0.8) * width;
  const double cx = 0.5 * width + std::cos(limb_angle) * (radius + edge - 0.5 * width);
  const double cy = 0.5 * height + std::sin(limb_angle) * (radius + edge - 0.5 * height);
  const double brightness = uniform(rng, 0.2, 0.4);
  const double haze = uniform(rng, 1.0, 4.0);

  ImageBuffer bg(width, height, 1, 0.0, 1.0);
  const double ca = std::cos(angle), sa = std::sin(angle);
  for (int v = 0; v < height; ++v) {
    for (int u = 0; u < width; ++u) {
      const double x = (u + 0.5) / width - 0.5, y = (v + 0.5) / height - 0.5;
      double value = base + slope * (0.5 + ca * x + sa * y);
      const double d = std::hypot(u + 0.5 - cx, v + 0.5 - cy) - radius;
      if (d < 0.0) {
        value += brightness * (0.6 + 0.4 * std::min(1.0, -d / (0.3 * radius)));
      } else {
        value += brightness * 0.5 * std::exp(-d / haze);
      }
      bg.values[static_cast<std::size_t>(v) * width + u] = std::clamp(value, 0.0, 0.6);
    }
  }
  return bg;
}

void AugmentSpec::validate() const {
  if (n_poses < 1) throw ConfigError(fmt::format("N_nerf must be >= 1, got {}", n_poses));
  if (!(texture_noise >= 0.0)) throw ConfigError(fmt::format("texture noise std must be >= 0, got {}", texture_noise));
  if (!(background_level >= 0.0 && background_level <= 1.0)) throw ConfigError("background level must lie in [0, 1]");
  strategy.validate();
  sampling.validate();
}

ImageBuffer render_recipe(const field::RadianceField& field, const ImageRecipe& recipe,
                          const geometry::CameraIntrinsics& intr, const AugmentSpec& spec) {
  render::SamplingConfig sampling = spec.sampling;
  sampling.background = 0.0;
  const ImageBuffer rgb =
      recipe.texture_seed
          ? render::render_image(field::perturb_color_weights(field, spec.texture_noise, *recipe.texture_seed),
                                 recipe.pose, intr, recipe.e_app, sampling, recipe.render_seed)
          : render::render_image(field, recipe.pose, intr, recipe.e_app, sampling, recipe.render_seed);
  ImageBuffer gray = to_grayscale(rgb);
  ImageBuffer bg = recipe.background_seed ? procedural_background(intr.width, intr.height, *recipe.background_seed)
                                          : ImageBuffer(intr.width, intr.height, 1, spec.background_level, 1.0);
  for (std::size_t i = 0; i < gray.values.size(); ++i) {
    gray.values[i] = std::clamp(gray.values[i] + (1.0 - gray.alpha[i]) * bg.values[i], 0.0, 1.0);
  }
  return gray;
}

ImageRecipe recipe_from_record(const field::RadianceField& field, const io::Record& record) {
  const auto& m = record.meta;
  if (!m.embedding_ids || !m.render_seed) {
    throw DataError(fmt::format("record '{}' carries no augmentation provenance", record.image.string()));
  }
  const auto [i, j] = *m.embedding_ids;
  const int n = static_cast<int>(field.appearance().rows());
  if (i < 0 || j < 0 || i >= n || j >= n) {
    throw DataError(fmt::format("record '{}' references embeddings ({}, {}) outside a table of {}",
                                record.image.string(), i, j, n));
  }
  ImageRecipe r;
  r.pose = record.pose;
  r.e_app = mix_embeddings(field.embedding(i), field.embedding(j), m.alpha.value_or(0.0));
  r.texture_seed = m.texture_seed;
  r.render_seed = *m.render_seed;
  r.background_seed = m.background_seed;
  return r;
}

io::DatasetManifest generate_augmented_set(const field::RadianceField& field, const AugmentSpec& spec,
                                           const geometry::CameraIntrinsics& intr, const fs::path& out_dir) {
  spec.validate();
  intr.validate();
  std::error_code ec;
  fs::create_directories(out_dir / "images", ec);
  if (ec) throw DataError(fmt::format("cannot create '{}': {}", (out_dir / "images").string(), ec.message()));

  const int variants = spec.two_images_per_pose ? 2 : 1;
  io::DatasetManifest manifest;
  manifest.intrinsics = intr;
  manifest.records.resize(static_cast<std::size_t>(spec.n_poses) * variants);
  const fs::path base = fs::absolute(out_dir).lexically_normal();

  for (int p = 0; p < spec.n_poses; ++p) {
    const auto pu = static_cast<std::uint64_t>(p);
    const geometry::Pose pose = geometry::sample_uniform_pose(derive_seed(spec.seed, {pu, 0}), spec.poses, intr);
    Rng app_rng(derive_seed(spec.seed, {pu, 1}));
    const AppearanceSample app = sample_appearance(field.appearance(), spec.strategy, app_rng);
    std::optional<std::uint64_t> bg_seed;
    const bool procedural =
        spec.background == BackgroundPolicy::kProcedural ||
        (spec.background == BackgroundPolicy::kHalfProcedural && (derive_seed(spec.seed, {pu, 4}) & 1u) == 1u);
    if (procedural) bg_seed = derive_seed(spec.seed, {pu, 5});

    for (int variant = 0; variant < variants; ++variant) {
      ImageRecipe recipe;
      recipe.pose = pose;
      recipe.e_app = app.e_app;
      recipe.render_seed = derive_seed(spec.seed, {pu, 2});
      recipe.background_seed = bg_seed;
      if (variant == 1) recipe.texture_seed = derive_seed(spec.seed, {pu, 3, static_cast<std::uint64_t>(variant)});
      const ImageBuffer img = render_recipe(field, recipe, intr, spec);
      const fs::path path = base / "images" / fmt::format("{:06d}_{}.png", p, variant);
      write_png(img, path);

      io::Record& rec = manifest.records[static_cast<std::size_t>(p) * variants + variant];
      rec.image = path;
      rec.pose = pose;
      rec.domain = "nerf";
      rec.meta.embedding_ids = std::array<int, 2>{app.i, app.j};
      rec.meta.alpha = app.alpha;
      rec.meta.appearance_strategy = spec.strategy.name();
      rec.meta.texture_seed = recipe.texture_seed;
      rec.meta.render_seed = recipe.render_seed;
      rec.meta.background_seed = bg_seed;
      rec.meta.background = procedural ? "procedural" : "constant";
      rec.meta.pose_index = p;
      rec.meta.variant = variant;
    }
  }
  return manifest;
}

io::DatasetManifest merge_sets(const io::DatasetManifest& synth, const io::DatasetManifest& nerf) {
  if (!(synth.intrinsics == nerf.intrinsics)) throw DataError("cannot merge sets with different camera intrinsics");
  io::DatasetManifest merged = synth;
  merged.records.insert(merged.records.end(), nerf.records.begin(), nerf.records.end());
  io::validate(merged);
  return merged;
}

double mean_pixel_variance(const std::vector<std::vector<ImageBuffer>>& groups) {
  double total = 0.0;
  int counted = 0;
  for (const auto& g : groups) {
    if (g.size() < 2) continue;
    const std::size_t n_px = g.front().values.size();
    double group_sum = 0.0;
    for (std::size_t px = 0; px < n_px; ++px) {
      double mean = 0.0;
      for (const auto& img : g) mean += img.values.at(px);
      mean /= static_cast<double>(g.size());
      double var = 0.0;
      for (const auto& img : g) {
        const double d = img.values[px] - mean;
        var += d * d;
      }
      group_sum += var / static_cast<double>(g.size());
    }
    total += group_sum / static_cast<double>(n_px);
    ++counted;
  }
  return counted ? total / counted : 0.0;
}

DiversityRow diversity_report(const io::DatasetManifest& set, const std::string& label) {
  // Group keys: pose_index when present, otherwise the first record with an identical pose.
  std::map<std::pair<int, std::size_t>, std::vector<std::size_t>> groups;
  for (std::size_t r = 0; r < set.records.size(); ++r) {
    const auto& rec = set.records[r];
    std::pair<int, std::size_t> key{0, 0};
    if (rec.meta.pose_index) {
      key = {0, static_cast<std::size_t>(*rec.meta.pose_index)};
    } else {
      std::size_t first = r;
      for (std::size_t q = 0; q < r; ++q) {
        if (!set.records[q].meta.pose_index && set.records[q].pose == rec.pose) {
          first = q;
          break;
        }
      }
      key = {1, first};
    }
    groups[key].push_back(r);
  }
  std::vector<std::vector<ImageBuffer>> images;
  DiversityRow row;
  row.label = label;
  for (const auto& [key, members] : groups) {
    std::vector<ImageBuffer> g;
    for (std::size_t r : members) g.push_back(to_grayscale(read_png(set.records[r].image)));
    if (g.size() >= 2) {
      ++row.groups;
      row.images += static_cast<int>(g.size());
    }
    images.push_back(std::move(g));
  }
  row.mean_variance = mean_pixel_variance(images);
  return row;
}

std::vector<ImageBuffer> appearance_draws(const field::RadianceField& field, const AppearanceStrategy& strategy,
                                          const geometry::Pose& pose, int n, const geometry::CameraIntrinsics& intr,
                                          const render::SamplingConfig& sampling, std::uint64_t seed) {
  std::vector<ImageBuffer> out;
  Rng rng(seed);
  for (int k = 0; k < n; ++k) {
    const AppearanceSample s = sample_appearance(field.appearance(), strategy, rng);
    out.push_back(to_grayscale(render::render_image(field, pose, intr, s.e_app, sampling, derive_seed(seed, {0xD0}))));
  }
  return out;
}

std::string diversity_csv(const std::vector<DiversityRow>& rows) {
  std::string out = "label,groups,images,mean_variance\n";
  for (const auto& r : rows) out += fmt::format("{},{},{},{:.17g}\n", r.label, r.groups, r.images, r.mean_variance);
  return out;
}

std::string diversity_table(const std::vector<DiversityRow>& rows) {
  std::size_t width = 8;
  for (const auto& r : rows) width = std::max(width, r.label.size());
  std::string out = fmt::format("{:<{}}  {:>7}  {:>7}  {:>14}\n", "strategy", width, "groups", "images", "mean variance");
  for (const auto& r : rows) {
    out += fmt::format("{:<{}}  {:>7}  {:>7}  {:>14.6e}\n", r.label, width, r.groups, r.images, r.mean_variance);
  }
  return out;
}

std::vector<ImageBuffer> alpha_sweep(const field::RadianceField& field, const geometry::Pose& pose, int i, int j,
                                     const std::vector<double>& alphas, const geometry::CameraIntrinsics& intr,
                                     const render::SamplingConfig& sampling) {
  std::vector<ImageBuffer> out;
  for (double a : alphas) {
    const Vector e = mix_embeddings(field.embedding(i), field.embedding(j), a);
    out.push_back(to_grayscale(render::render_image(field, pose, intr, e, sampling, 0)));
  }
  return out;
}

ImageBuffer contact_sheet(const std::vector<ImageBuffer>& images, int columns) {
  if (images.empty()) return ImageBuffer(1, 1, 1, 0.0, 1.0);
  constexpr int kGap = 2;
  columns = std::max(1, std::min(columns, static_cast<int>(images.size())));
  const int rows = (static_cast<int>(images.size()) + columns - 1) / columns;
  const int w = images.front().width, h = images.front().height;
  ImageBuffer sheet(columns * w + (columns + 1) * kGap, rows * h + (rows + 1) * kGap, 1, 1.0, 1.0);
  for (std::size_t k = 0; k < images.size(); ++k) {
    const ImageBuffer g = images[k].channels == 1 ? images[k] : to_grayscale(images[k]);
    if (g.width != w || g.height != h) throw DataError("contact sheet images must share one size");
    const int ox = kGap + static_cast<int>(k % columns) * (w + kGap);
    const int oy = kGap + static_cast<int>(k / columns) * (h + kGap);
    for (int v = 0; v < h; ++v) {
      for (int u = 0; u < w; ++u) {
        sheet.values[static_cast<std::size_t>(oy + v) * sheet.width + ox + u] =
            g.values[static_cast<std::size_t>(v) * w + u];
      }
    }
  }
  return sheet;
}

}  // namespace nerfaug::augment
