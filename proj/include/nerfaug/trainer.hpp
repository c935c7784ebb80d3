// SPDX-License-Identifier: Apache-2.0
//
// Fitting a RadianceField (planes, both networks, appearance table) to posed images.
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nerfaug/dataset.hpp"
#include "nerfaug/field.hpp"
#include "nerfaug/image.hpp"
#include "nerfaug/nn.hpp"
#include "nerfaug/render.hpp"

namespace nerfaug::train {

struct TrainLogRow {
  int iteration = 0;
  double loss = 0.0;
  double val_psnr = 0.0;
  bool operator==(const TrainLogRow&) const = default;
};

struct TrainConfig {
  double lr_grid = 1e-2;
  double lr_mlp = 1e-3;  // networks and appearance embeddings
  double lr_final_scale = 0.1;  // both rates decay exponentially to this fraction at the last iteration
  int iterations = 3000;
  int rays_per_batch = 1024;
  std::uint64_t seed = 0;
  double val_fraction = 0.10;
  double tv_weight = 1e-4;
  int eval_every = 250;
  int pause_at = 0;  // when > 0, stop after this many iterations without the final log row
  render::SamplingConfig sampling;
  std::function<void(const TrainLogRow&)> on_log;  // called for every log row

  void validate() const;
};

struct TrainLog {
  std::vector<TrainLogRow> rows;

  std::string to_csv() const;
  void write_csv(const std::filesystem::path& path) const;
  bool operator==(const TrainLog&) const = default;
};

// Mean squared error over equal-length vectors.
double photometric_loss(std::span<const double> pred, std::span<const double> gt);

// 10 log10(1 / MSE); 99 dB when the images are identical.
double psnr(const ImageBuffer& a, const ImageBuffer& b);
inline constexpr double kPsnrIdentical = 99.0;

// One training ray: geometry, the embedding of its image, target rgb and the
// stratification seed.
struct TrainRay {
  geometry::Ray ray;
  int embedding = 0;
  std::array<double, 3> target{0.0, 0.0, 0.0};
  std::uint64_t seed = 0;
};

// Photometric MSE of the batch plus the plane TV term, forward only.
double batch_loss(const field::RadianceField& field, std::span<const TrainRay> rays,
                  const render::SamplingConfig& sampling, double tv_weight);

// Exact reverse-mode gradients of batch_loss w.r.t. every parameter block.
// grads is overwritten. Throws NumericalError naming the block on a
// non-finite gradient. Returns the loss.
double backward(const field::RadianceField& field, std::span<const TrainRay> rays,
                const render::SamplingConfig& sampling, double tv_weight, field::FieldGradients& grads);

// Images of a manifest held in memory as grayscale pixel arrays.
struct LoadedSet {
  geometry::CameraIntrinsics intrinsics;
  std::vector<io::Record> records;
  std::vector<ImageBuffer> images;  // 1 channel
};
LoadedSet load_set(const io::DatasetManifest& manifest);

// Embedding used to render a view with no trained embedding: the one of the
// training image with the nearest stored lighting, or the table mean when
// lighting metadata is missing.
nn::Vector validation_embedding(const field::RadianceField& field, const LoadedSet& train_set,
                                const io::Record& view);

double validation_psnr(const field::RadianceField& field, const LoadedSet& train_set, const LoadedSet& val_set,
                       const render::SamplingConfig& sampling);

// Everything needed to continue a run bit-exactly.
struct TrainState {
  int iteration = 0;  // iterations completed
  field::RadianceField field;
  field::RadianceField best_field;
  double best_psnr = -1.0;
  nn::Adam adam;
  TrainLog log;
  double window_loss = 0.0;
  int window_count = 0;
  std::vector<double> losses;  // per-iteration training loss
};

void save_state(const TrainState& state, const std::filesystem::path& path);
TrainState load_state(const std::filesystem::path& path);

struct TrainResult {
  field::RadianceField field;  // best validation checkpoint
  TrainLog log;
  TrainState state;            // final state, for resuming
  io::DatasetManifest train_split, val_split;
};

class DivergenceError : public NumericalError {
 public:
  DivergenceError(const std::string& what, std::shared_ptr<const field::RadianceField> last_good)
      : NumericalError(what), last_good_(std::move(last_good)) {}
  const field::RadianceField& last_good() const { return *last_good_; }

 private:
  std::shared_ptr<const field::RadianceField> last_good_;
};

// Splits the dataset (val_fraction), sizes the appearance table to the
// training images and runs Adam for cfg.iterations steps over uniformly
// sampled training rays. Logs at iteration 0, every eval_every and at the
// end; returns the best-validation field. With `resume`, continues from that
// state (same dataset and configs required).
TrainResult train(const io::DatasetManifest& dataset, field::FieldConfig field_cfg, const TrainConfig& cfg,
                  const TrainState* resume = nullptr);

}  // namespace nerfaug::train
