// SPDX-License-Identifier: Apache-2.0
//
// nerfaug: synthetic set generation, radiance field training, augmented set
// synthesis and the A/B probe experiment, one workspace directory per run.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/core.h>
#include <json.hpp>

#include "nerfaug/augment.hpp"
#include "nerfaug/dataset.hpp"
#include "nerfaug/error.hpp"
#include "nerfaug/field.hpp"
#include "nerfaug/geometry.hpp"
#include "nerfaug/metrics.hpp"
#include "nerfaug/parallel.hpp"
#include "nerfaug/probe.hpp"
#include "nerfaug/render.hpp"
#include "nerfaug/rng.hpp"
#include "nerfaug/scene.hpp"
#include "nerfaug/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace nerfaug;

namespace {

const std::array<std::string, 2> kTargets{"diffuse-target", "direct-target"};

struct RunConfig {
  fs::path workspace;
  std::uint64_t seed = 0;
  geometry::CameraIntrinsics intrinsics;
  geometry::PoseSamplerConfig poses;
  int n_source = 500;
  int n_target = 200;
  field::FieldConfig field;
  train::TrainConfig train;
  augment::AugmentSpec augment;
  std::string strategy = "extrapolation";
  double alpha_max = 4.0;
  probe::ProbeTrainConfig probe;
  int probe_seeds = 3;
  int diversity_draws = 50;
  int diversity_poses = 3;
};

template <typename T>
void take(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(fmt::format("config key '{}': {}", key, e.what()));
  }
}

void check_keys(const json& j, const std::string& section, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(fmt::format("config section '{}' must be an object", section));
  for (const auto& [key, value] : j.items()) {
    if (std::find_if(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }) == allowed.end()) {
      throw ConfigError(fmt::format("unknown config key '{}{}'", section.empty() ? "" : section + ".", key));
    }
  }
}

void apply_config_file(const fs::path& path, RunConfig& c) {
  std::ifstream f(path);
  if (!f) throw ConfigError(fmt::format("cannot open config file '{}'", path.string()));
  json j;
  try {
    j = json::parse(f);
  } catch (const json::parse_error& e) {
    throw ConfigError(fmt::format("config file '{}' is not valid JSON: {}", path.string(), e.what()));
  }
  check_keys(j, "", {"workspace", "seed", "intrinsics", "poses", "synth", "field", "nerf", "augment", "probe", "report"});
  if (j.contains("workspace")) c.workspace = j["workspace"].get<std::string>();
  take(j, "seed", c.seed);
  if (j.contains("intrinsics")) {
    const json& s = j["intrinsics"];
    check_keys(s, "intrinsics", {"fx", "fy", "cx", "cy", "width", "height"});
    take(s, "fx", c.intrinsics.fx);
    take(s, "fy", c.intrinsics.fy);
    take(s, "cx", c.intrinsics.cx);
    take(s, "cy", c.intrinsics.cy);
    take(s, "width", c.intrinsics.width);
    take(s, "height", c.intrinsics.height);
  }
  if (j.contains("poses")) {
    const json& s = j["poses"];
    check_keys(s, "poses", {"dist_min", "dist_max", "border_margin", "max_rounds"});
    take(s, "dist_min", c.poses.dist_min);
    take(s, "dist_max", c.poses.dist_max);
    take(s, "border_margin", c.poses.border_margin);
    take(s, "max_rounds", c.poses.max_rounds);
  }
  if (j.contains("synth")) {
    const json& s = j["synth"];
    check_keys(s, "synth", {"n_source", "n_target"});
    take(s, "n_source", c.n_source);
    take(s, "n_target", c.n_target);
  }
  if (j.contains("field")) c.field = field::field_config_from_json(j["field"]);
  if (j.contains("nerf")) {
    const json& s = j["nerf"];
    check_keys(s, "nerf", {"iterations", "rays_per_batch", "lr_grid", "lr_mlp", "lr_final_scale", "val_fraction",
                           "tv_weight", "eval_every", "n_samples"});
    take(s, "iterations", c.train.iterations);
    take(s, "rays_per_batch", c.train.rays_per_batch);
    take(s, "lr_grid", c.train.lr_grid);
    take(s, "lr_mlp", c.train.lr_mlp);
    take(s, "lr_final_scale", c.train.lr_final_scale);
    take(s, "val_fraction", c.train.val_fraction);
    take(s, "tv_weight", c.train.tv_weight);
    take(s, "eval_every", c.train.eval_every);
    take(s, "n_samples", c.train.sampling.n_samples);
  }
  if (j.contains("augment")) {
    const json& s = j["augment"];
    check_keys(s, "augment", {"n_nerf", "strategy", "alpha_max", "texture_noise", "texture", "background",
                              "background_level", "n_samples"});
    take(s, "n_nerf", c.augment.n_poses);
    take(s, "strategy", c.strategy);
    take(s, "alpha_max", c.alpha_max);
    take(s, "texture_noise", c.augment.texture_noise);
    take(s, "texture", c.augment.two_images_per_pose);
    if (s.contains("background")) c.augment.background = augment::background_from_string(s["background"].get<std::string>());
    take(s, "background_level", c.augment.background_level);
    take(s, "n_samples", c.augment.sampling.n_samples);
  }
  if (j.contains("probe")) {
    const json& s = j["probe"];
    check_keys(s, "probe", {"seeds", "steps", "batch_size", "learning_rate", "hidden", "input_side",
                            "rotation_weight", "translation_weight"});
    take(s, "seeds", c.probe_seeds);
    take(s, "steps", c.probe.steps);
    take(s, "batch_size", c.probe.batch_size);
    take(s, "learning_rate", c.probe.learning_rate);
    take(s, "hidden", c.probe.hidden);
    take(s, "input_side", c.probe.input_side);
    take(s, "rotation_weight", c.probe.rotation_weight);
    take(s, "translation_weight", c.probe.translation_weight);
  }
  if (j.contains("report")) {
    const json& s = j["report"];
    check_keys(s, "report", {"diversity_draws", "diversity_poses"});
    take(s, "diversity_draws", c.diversity_draws);
    take(s, "diversity_poses", c.diversity_poses);
  }
}

template <typename T>
void override_with(const std::optional<T>& flag, T& target) {
  if (flag) target = *flag;
}

// Workspace layout.
fs::path synth_manifest(const RunConfig& c, const std::string& profile) {
  return c.workspace / "synth" / profile / "manifest.json";
}
fs::path nerf_dir(const RunConfig& c) { return c.workspace / "nerf"; }
fs::path checkpoint_path(const RunConfig& c) { return nerf_dir(c) / "field.ckpt"; }
fs::path state_path(const RunConfig& c) { return nerf_dir(c) / "state.bin"; }
fs::path augment_manifest(const RunConfig& c) { return c.workspace / "augment" / "manifest.json"; }
fs::path train_manifest(const RunConfig& c) { return c.workspace / "train" / "manifest.json"; }

void ensure_workspace(const RunConfig& c) {
  if (c.workspace.empty()) throw ConfigError("no workspace given (--workspace or config 'workspace')");
  const fs::path abs = fs::absolute(c.workspace);
  if (!fs::exists(abs.parent_path())) {
    throw ConfigError(fmt::format("workspace parent '{}' does not exist", abs.parent_path().string()));
  }
  fs::create_directories(abs);
}

void require(const fs::path& path, const std::string& produced_by) {
  if (!fs::exists(path)) {
    throw DataError(fmt::format("missing stage artifact '{}' (run '{}' first)", path.string(), produced_by));
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError(fmt::format("cannot open '{}' for writing", path.string()));
  f << text;
  if (!f) throw DataError(fmt::format("failed writing '{}'", path.string()));
}

void cmd_synth_gen(const RunConfig& c) {
  ensure_workspace(c);
  c.intrinsics.validate();
  if (c.n_source < 2 || c.n_target < 1) throw ConfigError("need n_source >= 2 and n_target >= 1");
  const scene::ProceduralScene target = scene::build_reference_target(derive_seed(c.seed, {0x5CE}));
  const std::array<std::pair<std::string, int>, 3> sets{
      {{"source", c.n_source}, {kTargets[0], c.n_target}, {kTargets[1], c.n_target}}};
  for (std::size_t k = 0; k < sets.size(); ++k) {
    const auto& [name, n] = sets[k];
    const fs::path dir = c.workspace / "synth" / name;
    const auto manifest = scene::generate_domain_set(target, scene::domain_profile(name), n, c.intrinsics,
                                                     derive_seed(c.seed, {0x5E7, k}), dir, c.poses);
    io::write_manifest(manifest, dir / "manifest.json");
    fmt::print("{}: {} images -> {}\n", name, manifest.size(), (dir / "manifest.json").string());
  }
}

void cmd_nerf_train(const RunConfig& c, bool resume) {
  ensure_workspace(c);
  require(synth_manifest(c, "source"), "synth-gen");
  const auto source = io::read_manifest(synth_manifest(c, "source"));
  fs::create_directories(nerf_dir(c));
  train::TrainConfig tc = c.train;
  tc.seed = derive_seed(c.seed, {0x7A1});
  tc.on_log = [](const train::TrainLogRow& r) {
    fmt::print("iteration {:>6}  loss {:.6f}  val PSNR {:.2f} dB\n", r.iteration, r.loss, r.val_psnr);
    std::fflush(stdout);
  };
  std::optional<train::TrainState> state;
  if (resume) {
    require(state_path(c), "nerf-train");
    state = train::load_state(state_path(c));
  }
  const auto result = train::train(source, c.field, tc, state ? &*state : nullptr);
  field::save_checkpoint(result.field, checkpoint_path(c));
  train::save_state(result.state, state_path(c));
  result.log.write_csv(nerf_dir(c) / "train_log.csv");
  io::write_manifest(result.train_split, nerf_dir(c) / "train_split.json");
  io::write_manifest(result.val_split, nerf_dir(c) / "val_split.json");
  const auto& last = result.log.rows.back();
  fmt::print("iteration {}: loss {:.6f}, val PSNR {:.2f} dB (best {:.2f} dB) -> {}\n", last.iteration, last.loss,
             last.val_psnr, result.state.best_psnr, checkpoint_path(c).string());
}

struct RenderFlags {
  std::optional<std::string> pose;
  std::optional<int> record;
  int embedding_i = 0;
  int embedding_j = 1;
  double alpha = 0.0;
  std::optional<std::uint64_t> texture_seed;
  std::optional<std::uint64_t> background_seed;
  std::string out = "render.png";
};

geometry::Pose parse_pose(const std::string& text) {
  std::vector<double> v;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      v.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw ConfigError(fmt::format("bad pose component '{}'", item));
    }
  }
  if (v.size() != 7) throw ConfigError("--pose expects 7 comma-separated values qw,qx,qy,qz,tx,ty,tz");
  return {geometry::UnitQuaternion(v[0], v[1], v[2], v[3]), geometry::Vec3(v[4], v[5], v[6])};
}

void cmd_nerf_render(const RunConfig& c, const RenderFlags& f) {
  require(checkpoint_path(c), "nerf-train");
  const auto fieldm = field::load_checkpoint(checkpoint_path(c));
  geometry::Pose pose;
  if (f.pose) {
    pose = parse_pose(*f.pose);
  } else {
    require(synth_manifest(c, "source"), "synth-gen");
    const auto source = io::read_manifest(synth_manifest(c, "source"), false);
    const int r = f.record.value_or(0);
    if (r < 0 || r >= static_cast<int>(source.size())) throw ConfigError(fmt::format("--record {} out of range", r));
    pose = source.records[static_cast<std::size_t>(r)].pose;
  }
  const int n = static_cast<int>(fieldm.appearance().rows());
  if (f.embedding_i < 0 || f.embedding_i >= n || f.embedding_j < 0 || f.embedding_j >= n) {
    throw ConfigError(fmt::format("embedding indices must lie in [0, {})", n));
  }
  augment::ImageRecipe recipe;
  recipe.pose = pose;
  recipe.e_app = augment::mix_embeddings(fieldm.embedding(f.embedding_i), fieldm.embedding(f.embedding_j), f.alpha);
  recipe.texture_seed = f.texture_seed;
  recipe.background_seed = f.background_seed;
  augment::AugmentSpec spec = c.augment;
  const ImageBuffer img = augment::render_recipe(fieldm, recipe, c.intrinsics, spec);
  write_png(img, f.out);
  fmt::print("wrote {}\n", f.out);
}

void cmd_augment(const RunConfig& c) {
  ensure_workspace(c);
  require(checkpoint_path(c), "nerf-train");
  require(synth_manifest(c, "source"), "synth-gen");
  const auto fieldm = field::load_checkpoint(checkpoint_path(c));
  const auto source = io::read_manifest(synth_manifest(c, "source"));
  augment::AugmentSpec spec = c.augment;
  spec.strategy = augment::strategy_from_string(c.strategy, c.alpha_max);
  spec.poses = c.poses;
  spec.seed = derive_seed(c.seed, {0xA06});
  const fs::path dir = augment_manifest(c).parent_path();
  const auto nerf = augment::generate_augmented_set(fieldm, spec, source.intrinsics, dir);
  io::write_manifest(nerf, augment_manifest(c));

  std::vector<ImageBuffer> sheet;
  for (std::size_t i = 0; i < std::min<std::size_t>(32, nerf.size()); ++i) sheet.push_back(read_png(nerf.records[i].image));
  write_png(augment::contact_sheet(sheet, spec.two_images_per_pose ? 8 : 8), dir / "contact_sheet.png");

  const auto merged = augment::merge_sets(source, nerf);
  fs::create_directories(train_manifest(c).parent_path());
  io::write_manifest(merged, train_manifest(c));
  fmt::print("augmented: {} images -> {}\nmerged training set: {} images -> {}\n", nerf.size(),
             augment_manifest(c).string(), merged.size(), train_manifest(c).string());
}

void cmd_probe_ab(const RunConfig& c) {
  ensure_workspace(c);
  require(synth_manifest(c, "source"), "synth-gen");
  require(augment_manifest(c), "augment");
  std::vector<std::pair<std::string, io::DatasetManifest>> targets;
  for (const auto& t : kTargets) {
    require(synth_manifest(c, t), "synth-gen");
    targets.emplace_back(t, io::read_manifest(synth_manifest(c, t)));
  }
  probe::ProbeTrainConfig pc = c.probe;
  pc.seed = derive_seed(c.seed, {0x960BE});
  const auto report = probe::ab_experiment(io::read_manifest(synth_manifest(c, "source")),
                                           io::read_manifest(augment_manifest(c)), targets, pc, c.probe_seeds);
  const fs::path dir = c.workspace / "probe";
  fs::create_directories(dir);
  write_text(dir / "ab_report.csv", report.to_csv());
  write_text(dir / "ab_report.txt", report.to_table());
  std::cout << report.to_table();
}

void cmd_report(const RunConfig& c) {
  ensure_workspace(c);
  require(checkpoint_path(c), "nerf-train");
  require(synth_manifest(c, "source"), "synth-gen");
  const auto fieldm = field::load_checkpoint(checkpoint_path(c));
  const auto source = io::read_manifest(synth_manifest(c, "source"), false);
  const fs::path dir = c.workspace / "report";
  fs::create_directories(dir);

  render::SamplingConfig sampling = c.augment.sampling;
  sampling.stratified = false;
  std::vector<geometry::Pose> poses;
  for (int p = 0; p < c.diversity_poses; ++p) {
    poses.push_back(geometry::sample_uniform_pose(derive_seed(c.seed, {0xD1, static_cast<std::uint64_t>(p)}), c.poses,
                                                  source.intrinsics));
  }
  std::vector<augment::DiversityRow> rows;
  for (const auto& strategy : {augment::AppearanceStrategy::random_pick(), augment::AppearanceStrategy::interpolation(),
                               augment::AppearanceStrategy::extrapolation(c.alpha_max)}) {
    std::vector<std::vector<ImageBuffer>> groups;
    for (std::size_t p = 0; p < poses.size(); ++p) {
      groups.push_back(augment::appearance_draws(fieldm, strategy, poses[p], c.diversity_draws, source.intrinsics,
                                                 sampling, derive_seed(c.seed, {0xD2, p})));
    }
    augment::DiversityRow row;
    row.label = strategy.name();
    row.groups = static_cast<int>(groups.size());
    row.images = static_cast<int>(groups.size()) * c.diversity_draws;
    row.mean_variance = augment::mean_pixel_variance(groups);
    rows.push_back(row);
  }
  if (fs::exists(augment_manifest(c))) {
    rows.push_back(augment::diversity_report(io::read_manifest(augment_manifest(c)), "augmented-set"));
  }
  write_text(dir / "diversity.csv", augment::diversity_csv(rows));

  std::vector<double> alphas;
  for (int a = -4; a <= 4; ++a) alphas.push_back(a);
  const auto strip = augment::alpha_sweep(fieldm, poses.front(), 0, 1, alphas, source.intrinsics, sampling);
  write_png(augment::contact_sheet(strip, static_cast<int>(strip.size())), dir / "alpha_sweep.png");

  std::string text = "Appearance diversity (mean per-pixel variance over draws at fixed poses)\n";
  text += augment::diversity_table(rows);
  if (fs::exists(nerf_dir(c) / "train_log.csv")) {
    std::ifstream f(nerf_dir(c) / "train_log.csv");
    text += "\nRadiance field training log\n" + std::string(std::istreambuf_iterator<char>(f), {});
  }
  if (fs::exists(c.workspace / "probe" / "ab_report.txt")) {
    std::ifstream f(c.workspace / "probe" / "ab_report.txt");
    text += "\nProbe A/B experiment\n" + std::string(std::istreambuf_iterator<char>(f), {});
  }
  write_text(dir / "report.txt", text);
  std::cout << text;
}

}  // namespace

int main(int argc, char** argv) {
  keep_heap_resident();
  CLI::App app{"Radiance-field augmentation pipeline"};
  app.require_subcommand(1);
  app.fallthrough();
  std::optional<std::string> config_path, workspace;
  std::optional<std::uint64_t> seed;
  app.add_option("--config", config_path, "JSON run configuration; flags override it");
  app.add_option("--workspace,-w", workspace, "experiment directory");
  app.add_option("--seed", seed, "global seed");

  std::optional<int> n_source, n_target;
  auto* synth = app.add_subcommand("synth-gen", "render source and target procedural sets");
  synth->add_option("--n-source", n_source, "source images (default 500)");
  synth->add_option("--n-target", n_target, "images per target profile (default 200)");

  std::optional<int> iterations, rays, eval_every, pause_at, n_samples;
  std::optional<double> val_fraction, lr_grid, lr_mlp;
  bool resume = false;
  auto* nerf_train = app.add_subcommand("nerf-train", "fit the radiance field to the source set");
  nerf_train->add_option("--iterations", iterations, "optimizer steps (default 3000)");
  nerf_train->add_option("--rays", rays, "rays per batch (default 1024)");
  nerf_train->add_option("--val-fraction", val_fraction, "held-out fraction (default 0.1)");
  nerf_train->add_option("--lr-grid", lr_grid, "plane learning rate");
  nerf_train->add_option("--lr-mlp", lr_mlp, "network and embedding learning rate");
  nerf_train->add_option("--eval-every", eval_every, "validation interval");
  nerf_train->add_option("--samples", n_samples, "samples per ray");
  nerf_train->add_option("--pause-at", pause_at, "stop after this many iterations (resume later)");
  nerf_train->add_flag("--resume", resume, "continue from the saved training state");

  RenderFlags render_flags;
  auto* nerf_render = app.add_subcommand("nerf-render", "render one debug image from the trained field");
  nerf_render->add_option("--pose", render_flags.pose, "qw,qx,qy,qz,tx,ty,tz (default: pose of --record)");
  nerf_render->add_option("--record", render_flags.record, "source record whose pose to use");
  nerf_render->add_option("--embedding", render_flags.embedding_i, "embedding i");
  nerf_render->add_option("--embedding-j", render_flags.embedding_j, "embedding j");
  nerf_render->add_option("--alpha", render_flags.alpha, "e = e_i + alpha (e_j - e_i)");
  nerf_render->add_option("--texture-seed", render_flags.texture_seed, "apply texture randomization with this seed");
  nerf_render->add_option("--background-seed", render_flags.background_seed, "procedural background seed");
  nerf_render->add_option("--out,-o", render_flags.out, "output PNG");

  std::optional<int> n_nerf;
  std::optional<std::string> strategy, background;
  std::optional<double> alpha_max, noise;
  bool no_texture = false;
  auto* aug = app.add_subcommand("augment", "render the augmented set and the merged training set");
  aug->add_option("--n-nerf", n_nerf, "sampled poses (default 2000)");
  aug->add_option("--strategy", strategy, "random-pick | interpolation | extrapolation (default)");
  aug->add_option("--alpha-max", alpha_max, "extrapolation range [-a, a] (default 4)");
  aug->add_option("--noise", noise, "texture noise std (default 4.0)");
  aug->add_option("--background", background, "constant | procedural | half-procedural (default)");
  aug->add_flag("--no-texture", no_texture, "skip the texture-randomized second image");

  std::optional<int> probe_seeds, probe_steps;
  auto* ab = app.add_subcommand("probe-ab", "train the probe with and without the augmented set and compare");
  ab->add_option("--seeds", probe_seeds, "number of seeds (default 3)");
  ab->add_option("--steps", probe_steps, "gradient steps per arm (default 3000)");

  auto* report = app.add_subcommand("report", "diversity table, alpha sweep and consolidated summary");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(ExitCode::kConfig);
  }

  try {
    RunConfig c;
    if (config_path) apply_config_file(*config_path, c);
    if (workspace) c.workspace = *workspace;
    override_with(seed, c.seed);
    override_with(n_source, c.n_source);
    override_with(n_target, c.n_target);
    override_with(iterations, c.train.iterations);
    override_with(rays, c.train.rays_per_batch);
    override_with(val_fraction, c.train.val_fraction);
    override_with(lr_grid, c.train.lr_grid);
    override_with(lr_mlp, c.train.lr_mlp);
    override_with(eval_every, c.train.eval_every);
    override_with(pause_at, c.train.pause_at);
    override_with(n_samples, c.train.sampling.n_samples);
    override_with(n_nerf, c.augment.n_poses);
    override_with(strategy, c.strategy);
    override_with(alpha_max, c.alpha_max);
    override_with(noise, c.augment.texture_noise);
    if (background) c.augment.background = augment::background_from_string(*background);
    if (no_texture) c.augment.two_images_per_pose = false;
    override_with(probe_seeds, c.probe_seeds);
    override_with(probe_steps, c.probe.steps);

    if (*synth) cmd_synth_gen(c);
    if (*nerf_train) cmd_nerf_train(c, resume);
    if (*nerf_render) cmd_nerf_render(c, render_flags);
    if (*aug) cmd_augment(c);
    if (*ab) cmd_probe_ab(c);
    if (*report) cmd_report(c);
  } catch (const Error& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return static_cast<int>(e.code());
  } catch (const fs::filesystem_error& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return static_cast<int>(ExitCode::kData);
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return static_cast<int>(ExitCode::kData);
  }
  return 0;
}
