// SPDX-License-Identifier: Apache-2.0
//
// Small pose-regression network used to compare training sets: a
// fully-connected net from a downsampled grayscale image to a quaternion
// (4 logits, normalized) and a translation in meters.
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "nerfaug/dataset.hpp"
#include "nerfaug/geometry.hpp"
#include "nerfaug/metrics.hpp"
#include "nerfaug/nn.hpp"

namespace nerfaug::probe {

using nn::Matrix;
using nn::Vector;

struct ProbeTrainConfig {
  int input_side = 32;
  std::vector<int> hidden{256, 256};
  int steps = 3000;  // gradient steps; both A/B arms use the same count
  int batch_size = 64;
  double learning_rate = 1e-3;
  double rotation_weight = 1.0;
  double translation_weight = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct ProbeModel {
  int input_side = 32;
  nn::Mlp net;  // input_side^2 -> hidden -> 7
  geometry::Vec3 translation_mean = geometry::Vec3::Zero();
  geometry::Vec3 translation_scale = geometry::Vec3::Ones();

  // Raw network outputs (rows) to poses.
  std::vector<geometry::Pose> decode(const Matrix& outputs) const;
  std::vector<geometry::Pose> predict(const Matrix& inputs) const;
  std::size_t parameter_count() const { return net.parameter_count(); }
  bool operator==(const ProbeModel& o) const;
};

// Images downsampled to input_side^2 grayscale rows, with their labels.
struct ProbeData {
  Matrix inputs;
  std::vector<geometry::Pose> labels;
};
ProbeData load_probe_data(const io::DatasetManifest& set, int input_side);

// Mean over the batch of w_R * geodesic(q_hat, q) + w_T * |t_hat - t|^2.
// With grads, accumulates d(loss)/d(parameters).
double probe_loss(const ProbeModel& model, const Matrix& inputs, const std::vector<geometry::Pose>& labels,
                  double rotation_weight, double translation_weight, nn::MlpGrad* grads);

// Deterministic given cfg.seed. Throws NumericalError on a non-finite loss.
ProbeModel train_probe(const ProbeData& data, const ProbeTrainConfig& cfg);
ProbeModel train_probe(const io::DatasetManifest& set, const ProbeTrainConfig& cfg);

// Aggregated pose errors; throws DataError for an empty set.
metrics::PoseErrors evaluate_probe(const ProbeModel& model, const ProbeData& data);
metrics::PoseErrors evaluate_probe(const ProbeModel& model, const io::DatasetManifest& set);

struct ABRow {
  std::string target;
  std::string arm;  // "baseline" or "ours"
  int seed_index = 0;
  metrics::PoseErrors errors;
};

struct ABSummary {
  std::string target;
  std::string arm;
  metrics::PoseErrors mean, stddev;
};

struct ABReport {
  std::vector<ABRow> rows;
  std::vector<ABSummary> summary;
  std::vector<std::pair<std::string, double>> relative_reduction;  // per target, 1 - S*(ours)/S*(baseline)
  std::vector<std::pair<std::string, int>> wins;                    // seeds where ours has lower S*

  std::string to_csv() const;
  std::string to_table() const;
};

// Trains the probe on `source` (baseline) and on source + augmented (ours)
// for n_seeds seeds with the same number of steps, and evaluates both on
// every target set.
ABReport ab_experiment(const io::DatasetManifest& source, const io::DatasetManifest& augmented,
                       const std::vector<std::pair<std::string, io::DatasetManifest>>& targets,
                       const ProbeTrainConfig& cfg, int n_seeds);

}  // namespace nerfaug::probe
