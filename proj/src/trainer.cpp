// SPDX-License-Identifier: Apache-2.0
#include "nerfaug/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include <fmt/core.h>

#include "nerfaug/error.hpp"
#include "nerfaug/parallel.hpp"
#include "nerfaug/rng.hpp"

namespace nerfaug::train {

namespace fs = std::filesystem;
using nn::Matrix;
using nn::Vector;

void TrainConfig::validate() const {
  if (!(lr_grid > 0.0 && lr_mlp > 0.0)) throw ConfigError("learning rates must be positive");
  if (!(lr_final_scale > 0.0 && lr_final_scale <= 1.0)) throw ConfigError("lr_final_scale must lie in (0, 1]");
  if (iterations < 0) throw ConfigError(fmt::format("iterations must be >= 0, got {}", iterations));
  if (rays_per_batch < 1) throw ConfigError(fmt::format("rays per batch must be >= 1, got {}", rays_per_batch));
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw ConfigError(fmt::format("val fraction must lie in (0, 1), got {}", val_fraction));
  }
  if (!(tv_weight >= 0.0)) throw ConfigError("TV weight must be >= 0");
  if (eval_every < 1) throw ConfigError("eval_every must be >= 1");
  if (pause_at < 0) throw ConfigError("pause_at must be >= 0");
  sampling.validate();
}

std::string TrainLog::to_csv() const {
  std::string out = "iteration,loss,val_psnr\n";
  for (const auto& r : rows) out += fmt::format("{},{:.17g},{:.17g}\n", r.iteration, r.loss, r.val_psnr);
  return out;
}

void TrainLog::write_csv(const fs::path& path) const {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError(fmt::format("cannot open '{}' for writing", path.string()));
  f << to_csv();
}

double photometric_loss(std::span<const double> pred, std::span<const double> gt) {
  if (pred.size() != gt.size()) {
    throw DataError(fmt::format("loss inputs differ in length ({} vs {})", pred.size(), gt.size()));
  }
  if (pred.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - gt[i];
    s += d * d;
  }
  return s / static_cast<double>(pred.size());
}

double psnr(const ImageBuffer& a, const ImageBuffer& b) {
  const double mse = mean_squared_error(a, b);
  if (mse == 0.0) return kPsnrIdentical;
  return 10.0 * std::log10(1.0 / mse);
}

namespace {

constexpr std::size_t kRayChunk = 128;

// Forward (and, with grads, backward) pass over one chunk of rays. The
// photometric gradient is scale * (pred - target). Returns the summed squared error.
double run_chunk(const field::RadianceField& field, std::span<const TrainRay> rays,
                 const render::SamplingConfig& sampling, double scale, field::FieldGradients* grads) {
  const auto& cfg = field.config();
  Matrix ray_app(static_cast<Eigen::Index>(rays.size()), cfg.appearance_dim);
  std::vector<geometry::Ray> geo(rays.size());
  std::vector<std::uint64_t> seeds(rays.size());
  for (std::size_t r = 0; r < rays.size(); ++r) {
    geo[r] = rays[r].ray;
    seeds[r] = rays[r].seed;
    ray_app.row(static_cast<Eigen::Index>(r)) = field.appearance().row(rays[r].embedding);
  }
  const render::SampleBatch samples = render::build_samples(geo, ray_app, cfg.bound, sampling, seeds);
  const std::size_t m = samples.t.size();
  field::FieldTape tape;
  field::FieldOutput out;
  if (m > 0) {
    out = field.forward(samples.positions, field::encode_directions(samples.directions, cfg.sh_degree), samples.e_app,
                        grads ? &tape : nullptr);
  }
  std::vector<double> rgb(m * 3);
  for (std::size_t i = 0; i < m; ++i) {
    for (int c = 0; c < 3; ++c) rgb[i * 3 + c] = out.rgb(static_cast<Eigen::Index>(i), c);
  }
  Vector d_sigma = Vector::Zero(static_cast<Eigen::Index>(m));
  std::vector<double> d_rgb(m * 3, 0.0);
  double sq = 0.0;
  for (std::size_t r = 0; r < rays.size(); ++r) {
    const std::size_t b0 = samples.begin[r], len = samples.begin[r + 1] - b0;
    const std::span<const double> sigma(m ? out.sigma.data() + b0 : nullptr, len);
    const std::span<const double> colors(m ? rgb.data() + b0 * 3 : nullptr, len * 3);
    const std::span<const double> delta(m ? samples.delta.data() + b0 : nullptr, len);
    const render::CompositeResult res = render::composite(sigma, colors, delta, {}, 3, sampling.background);
    double d_color[3];
    for (int c = 0; c < 3; ++c) {
      const double diff = res.color[c] - rays[r].target[c];
      sq += diff * diff;
      d_color[c] = scale * diff;
    }
    if (grads && len > 0) {
      render::composite_backward(sigma, colors, delta, 3, sampling.background, d_color,
                                 std::span<double>(d_sigma.data() + b0, len),
                                 std::span<double>(d_rgb.data() + b0 * 3, len * 3));
    }
  }
  if (grads && m > 0) {
    Matrix d_rgb_m(static_cast<Eigen::Index>(m), 3);
    for (std::size_t i = 0; i < m; ++i) {
      for (int c = 0; c < 3; ++c) d_rgb_m(static_cast<Eigen::Index>(i), c) = d_rgb[i * 3 + c];
    }
    const Matrix d_app = field.backward(tape, d_sigma, d_rgb_m, *grads);
    for (std::size_t r = 0; r < rays.size(); ++r) {
      const std::size_t b0 = samples.begin[r], len = samples.begin[r + 1] - b0;
      if (len == 0) continue;
      grads->appearance.row(rays[r].embedding) +=
          d_app.middleRows(static_cast<Eigen::Index>(b0), static_cast<Eigen::Index>(len)).colwise().sum();
    }
  }
  return sq;
}

double photometric_term(const field::RadianceField& field, std::span<const TrainRay> rays,
                        const render::SamplingConfig& sampling, field::FieldGradients* grads) {
  if (rays.empty()) return 0.0;
  const double n = 3.0 * static_cast<double>(rays.size());
  double sq = 0.0;
  for (std::size_t first = 0; first < rays.size(); first += kRayChunk) {
    sq += run_chunk(field, rays.subspan(first, std::min(kRayChunk, rays.size() - first)), sampling, 2.0 / n, grads);
  }
  return sq / n;
}

void check_finite(field::FieldGradients& grads) {
  for (const auto& t : grads.tensors()) {
    for (double v : t.values) {
      if (!std::isfinite(v)) throw NumericalError(fmt::format("non-finite gradient in parameter block '{}'", t.block));
    }
  }
}

}  // namespace

double batch_loss(const field::RadianceField& field, std::span<const TrainRay> rays,
                  const render::SamplingConfig& sampling, double tv_weight) {
  double loss = photometric_term(field, rays, sampling, nullptr);
  if (tv_weight > 0.0) loss += field::total_variation(field, tv_weight, nullptr);
  return loss;
}

double backward(const field::RadianceField& field, std::span<const TrainRay> rays,
                const render::SamplingConfig& sampling, double tv_weight, field::FieldGradients& grads) {
  grads.set_zero();
  double loss = photometric_term(field, rays, sampling, &grads);
  if (tv_weight > 0.0) loss += field::total_variation(field, tv_weight, &grads);
  check_finite(grads);
  return loss;
}

LoadedSet load_set(const io::DatasetManifest& manifest) {
  LoadedSet set;
  set.intrinsics = manifest.intrinsics;
  set.records = manifest.records;
  set.images.resize(manifest.records.size());
  parallel_for(manifest.records.size(), [&](std::size_t i) {
    ImageBuffer img = to_grayscale(read_png(manifest.records[i].image));
    if (img.width != manifest.intrinsics.width || img.height != manifest.intrinsics.height) {
      throw DataError(fmt::format("image '{}' is {}x{}, manifest intrinsics say {}x{}",
                                  manifest.records[i].image.string(), img.width, img.height,
                                  manifest.intrinsics.width, manifest.intrinsics.height));
    }
    set.images[i] = std::move(img);
  });
  return set;
}

Vector validation_embedding(const field::RadianceField& field, const LoadedSet& train_set, const io::Record& view) {
  int best = -1;
  double best_d = std::numeric_limits<double>::infinity();
  if (view.meta.lighting) {
    for (std::size_t i = 0; i < train_set.records.size(); ++i) {
      const auto& l = train_set.records[i].meta.lighting;
      if (!l) continue;
      const double d = lighting_distance(*l, *view.meta.lighting);
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(i);
      }
    }
  }
  if (best >= 0 && best < field.appearance().rows()) return field.embedding(best);
  return field.appearance().colwise().mean().transpose();
}

double validation_psnr(const field::RadianceField& field, const LoadedSet& train_set, const LoadedSet& val_set,
                       const render::SamplingConfig& sampling) {
  if (val_set.records.empty()) return 0.0;
  render::SamplingConfig eval = sampling;
  eval.stratified = false;
  double sum = 0.0;
  for (std::size_t i = 0; i < val_set.records.size(); ++i) {
    const Vector e = validation_embedding(field, train_set, val_set.records[i]);
    const ImageBuffer img =
        to_grayscale(render::render_image(field, val_set.records[i].pose, val_set.intrinsics, e, eval, 0));
    sum += psnr(img, val_set.images[i]);
  }
  return sum / static_cast<double>(val_set.records.size());
}

// ---------------------------------------------------------------------------

namespace {

constexpr char kStateMagic[8] = {'N', 'A', 'T', 'R', 'A', 'I', 'N', '\0'};
constexpr std::uint32_t kStateVersion = 1;

template <typename T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is, const std::string& origin) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) {
    throw DataError(fmt::format("train state '{}' is truncated", origin));
  }
  return v;
}

void put_doubles(std::ostream& os, const std::vector<double>& v) {
  put<std::uint64_t>(os, v.size());
  os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
}

std::vector<double> get_doubles(std::istream& is, const std::string& origin) {
  const auto n = get<std::uint64_t>(is, origin);
  if (n > (std::uint64_t{1} << 32)) throw DataError(fmt::format("train state '{}' is corrupt", origin));
  std::vector<double> v(n);
  if (!is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)))) {
    throw DataError(fmt::format("train state '{}' is truncated", origin));
  }
  return v;
}

}  // namespace

void save_state(const TrainState& s, const fs::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError(fmt::format("cannot open '{}' for writing", path.string()));
  os.write(kStateMagic, sizeof(kStateMagic));
  put(os, kStateVersion);
  put<std::int32_t>(os, s.iteration);
  put(os, s.best_psnr);
  put(os, s.window_loss);
  put<std::int32_t>(os, s.window_count);
  field::write_field(os, s.field);
  field::write_field(os, s.best_field);
  put<std::int64_t>(os, s.adam.steps());
  put<std::uint64_t>(os, s.adam.first_moment().size());
  for (std::size_t i = 0; i < s.adam.first_moment().size(); ++i) {
    put_doubles(os, s.adam.first_moment()[i]);
    put_doubles(os, s.adam.second_moment()[i]);
  }
  put<std::uint64_t>(os, s.log.rows.size());
  for (const auto& r : s.log.rows) {
    put<std::int32_t>(os, r.iteration);
    put(os, r.loss);
    put(os, r.val_psnr);
  }
  put_doubles(os, s.losses);
  if (!os) throw DataError(fmt::format("failed writing '{}'", path.string()));
}

TrainState load_state(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  const std::string origin = path.string();
  if (!is) throw DataError(fmt::format("cannot open train state '{}'", origin));
  char magic[8];
  if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kStateMagic, sizeof(magic)) != 0) {
    throw DataError(fmt::format("'{}' is not a train state file", origin));
  }
  if (get<std::uint32_t>(is, origin) != kStateVersion) {
    throw DataError(fmt::format("train state '{}' has an unsupported version", origin));
  }
  TrainState s;
  s.iteration = get<std::int32_t>(is, origin);
  s.best_psnr = get<double>(is, origin);
  s.window_loss = get<double>(is, origin);
  s.window_count = get<std::int32_t>(is, origin);
  s.field = field::read_field(is, origin);
  s.best_field = field::read_field(is, origin);
  const auto steps = get<std::int64_t>(is, origin);
  const auto n = get<std::uint64_t>(is, origin);
  std::vector<std::size_t> sizes;
  std::vector<std::vector<double>> m, v;
  for (std::uint64_t i = 0; i < n; ++i) {
    m.push_back(get_doubles(is, origin));
    v.push_back(get_doubles(is, origin));
    sizes.push_back(m.back().size());
  }
  s.adam = nn::Adam(sizes);
  s.adam.first_moment() = std::move(m);
  s.adam.second_moment() = std::move(v);
  s.adam.set_steps(steps);
  const auto rows = get<std::uint64_t>(is, origin);
  for (std::uint64_t i = 0; i < rows; ++i) {
    TrainLogRow r;
    r.iteration = get<std::int32_t>(is, origin);
    r.loss = get<double>(is, origin);
    r.val_psnr = get<double>(is, origin);
    s.log.rows.push_back(r);
  }
  s.losses = get_doubles(is, origin);
  return s;
}

// ---------------------------------------------------------------------------

namespace {

struct ViewGeometry {
  geometry::Mat3 cam_to_scene;
  geometry::Vec3 center;
};

std::vector<double> learning_rates(std::vector<nn::TensorRef>& tensors, const TrainConfig& cfg, int it) {
  const double decay = std::pow(cfg.lr_final_scale, static_cast<double>(it) / std::max(1, cfg.iterations - 1));
  std::vector<double> lrs;
  for (const auto& t : tensors) lrs.push_back(decay * (t.block == "planes" ? cfg.lr_grid : cfg.lr_mlp));
  return lrs;
}

}  // namespace

TrainResult train(const io::DatasetManifest& dataset, field::FieldConfig field_cfg, const TrainConfig& cfg,
                  const TrainState* resume) {
  cfg.validate();
  dataset.intrinsics.validate();
  auto [train_m, val_m] = io::split(dataset, cfg.val_fraction, cfg.seed);
  const LoadedSet train_set = load_set(train_m);
  const LoadedSet val_set = load_set(val_m);
  field_cfg.num_embeddings = static_cast<int>(train_set.records.size());
  field_cfg.validate();

  TrainState state;
  if (resume) {
    state = *resume;
    if (!(state.field.config() == field_cfg)) {
      throw ConfigError("resume state was produced with a different field configuration");
    }
  } else {
    state.field = field::RadianceField(field_cfg, derive_seed(cfg.seed, {0xF1E1D}));
    std::vector<std::size_t> sizes;
    for (const auto& t : state.field.tensors()) sizes.push_back(t.values.size());
    state.adam = nn::Adam(sizes);
    state.best_field = state.field;
  }

  std::vector<ViewGeometry> views;
  for (const auto& r : train_set.records) {
    views.push_back({r.pose.rotation.matrix().transpose(), r.pose.camera_center()});
  }
  const auto& intr = train_set.intrinsics;
  const std::size_t pixels = static_cast<std::size_t>(intr.width) * intr.height;

  field::FieldGradients grads(state.field);
  std::vector<TrainRay> batch(static_cast<std::size_t>(cfg.rays_per_batch));

  auto record_eval = [&](int iteration, double loss) {
    const double v = validation_psnr(state.field, train_set, val_set, cfg.sampling);
    state.log.rows.push_back({iteration, loss, v});
    if (cfg.on_log) cfg.on_log(state.log.rows.back());
    if (v > state.best_psnr) {
      state.best_psnr = v;
      state.best_field = state.field;
    }
  };

  const int stop = cfg.pause_at > 0 ? std::min(cfg.pause_at, cfg.iterations) : cfg.iterations;
  for (int it = state.iteration; it < stop; ++it) {
    Rng rng(derive_seed(cfg.seed, {0xBA7C4, static_cast<std::uint64_t>(it)}));
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const auto img = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(train_set.images.size()));
      const auto px = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(pixels));
      const int u = static_cast<int>(px % static_cast<std::size_t>(intr.width));
      const int v = static_cast<int>(px / static_cast<std::size_t>(intr.width));
      TrainRay& tr = batch[b];
      tr.ray.origin = views[img].center;
      tr.ray.direction = (views[img].cam_to_scene * geometry::pixel_direction(intr, u, v)).normalized();
      tr.ray.t_near = cfg.sampling.t_near;
      tr.ray.t_far = cfg.sampling.t_far;
      tr.embedding = static_cast<int>(img);
      const double g = train_set.images[img].values[px];
      tr.target = {g, g, g};
      tr.seed = derive_seed(cfg.seed, {static_cast<std::uint64_t>(it), b});
    }
    double loss = 0.0;
    try {
      loss = backward(state.field, batch, cfg.sampling, cfg.tv_weight, grads);
    } catch (const NumericalError& e) {
      throw DivergenceError(fmt::format("iteration {}: {}", it, e.what()),
                            std::make_shared<const field::RadianceField>(state.best_field));
    }
    if (!std::isfinite(loss)) {
      throw DivergenceError(fmt::format("iteration {}: training loss is not finite", it),
                            std::make_shared<const field::RadianceField>(state.best_field));
    }
    if (it == 0) record_eval(0, loss);

    auto params = state.field.tensors();
    state.adam.step(params, grads.tensors(), learning_rates(params, cfg, it));
    state.losses.push_back(loss);
    state.window_loss += loss;
    ++state.window_count;
    state.iteration = it + 1;
    if (state.iteration % cfg.eval_every == 0 || state.iteration == cfg.iterations) {
      record_eval(state.iteration, state.window_loss / state.window_count);
      state.window_loss = 0.0;
      state.window_count = 0;
    }
  }
  if (state.log.rows.empty()) record_eval(0, 0.0);

  TrainResult result{state.best_field, state.log, state, std::move(train_m), std::move(val_m)};
  return result;
}

}  // namespace nerfaug::train
