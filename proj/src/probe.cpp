// SPDX-License-Identifier: Apache-2.0
#include "nerfaug/probe.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/core.h>

#include "nerfaug/augment.hpp"
#include "nerfaug/error.hpp"
#include "nerfaug/image.hpp"
#include "nerfaug/parallel.hpp"
#include "nerfaug/rng.hpp"

namespace nerfaug::probe {

namespace {
constexpr double kDotClamp = 1.0 - 1e-7;
constexpr int kOutputs = 7;
}  // namespace

void ProbeTrainConfig::validate() const {
  if (input_side < 1) throw ConfigError("probe input side must be >= 1");
  if (hidden.empty() || std::any_of(hidden.begin(), hidden.end(), [](int h) { return h < 1; })) {
    throw ConfigError("probe hidden widths must be >= 1");
  }
  if (steps < 1 || batch_size < 1) throw ConfigError("probe steps and batch size must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("probe learning rate must be positive");
  if (!(rotation_weight >= 0.0 && translation_weight >= 0.0)) throw ConfigError("probe loss weights must be >= 0");
}

std::vector<geometry::Pose> ProbeModel::decode(const Matrix& outputs) const {
  std::vector<geometry::Pose> poses(static_cast<std::size_t>(outputs.rows()));
  for (Eigen::Index r = 0; r < outputs.rows(); ++r) {
    const Eigen::Vector4d z = outputs.row(r).head<4>().transpose();
    auto& p = poses[static_cast<std::size_t>(r)];
    p.rotation = z.norm() > 0.0 ? geometry::UnitQuaternion(z[0], z[1], z[2], z[3]) : geometry::UnitQuaternion::identity();
    p.translation = translation_mean + translation_scale.cwiseProduct(outputs.row(r).segment<3>(4).transpose());
  }
  return poses;
}

std::vector<geometry::Pose> ProbeModel::predict(const Matrix& inputs) const { return decode(net.forward(inputs)); }

bool ProbeModel::operator==(const ProbeModel& o) const {
  return input_side == o.input_side && net == o.net && translation_mean == o.translation_mean &&
         translation_scale == o.translation_scale;
}

ProbeData load_probe_data(const io::DatasetManifest& set, int input_side) {
  ProbeData d;
  const std::size_t n = set.records.size();
  d.inputs.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(input_side) * input_side);
  d.labels.resize(n);
  parallel_for(n, [&](std::size_t i) {
    ImageBuffer img = to_grayscale(read_png(set.records[i].image));
    if (img.width != img.height || img.width % input_side != 0) {
      throw DataError(fmt::format("image '{}' ({}x{}) cannot be reduced to {}x{}", set.records[i].image.string(),
                                  img.width, img.height, input_side, input_side));
    }
    img = downsample(img, img.width / input_side);
    for (std::size_t k = 0; k < img.values.size(); ++k) {
      d.inputs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = img.values[k];
    }
    d.labels[i] = set.records[i].pose;
  });
  return d;
}

double probe_loss(const ProbeModel& model, const Matrix& inputs, const std::vector<geometry::Pose>& labels,
                  double rotation_weight, double translation_weight, nn::MlpGrad* grads) {
  const auto n = inputs.rows();
  if (n == 0) return 0.0;
  nn::MlpTape tape;
  const Matrix out = model.net.forward(inputs, grads ? &tape : nullptr);
  Matrix d_out = Matrix::Zero(n, kOutputs);
  double loss = 0.0;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto& gt = labels[static_cast<std::size_t>(r)];
    const Eigen::Vector4d z = out.row(r).head<4>().transpose();
    const double zn = z.norm();
    const Eigen::Vector4d q = z / zn;
    const Eigen::Vector4d g(gt.rotation.w(), gt.rotation.x(), gt.rotation.y(), gt.rotation.z());
    const double d = q.dot(g);
    const double ad = std::min(std::abs(d), kDotClamp);
    loss += inv_n * rotation_weight * 2.0 * std::acos(ad);

    const geometry::Vec3 o = out.row(r).segment<3>(4).transpose();
    const geometry::Vec3 t_hat = model.translation_mean + model.translation_scale.cwiseProduct(o);
    const geometry::Vec3 dt = t_hat - gt.translation;
    loss += inv_n * translation_weight * dt.squaredNorm();

    if (grads) {
      if (std::abs(d) < kDotClamp && rotation_weight != 0.0) {
        const double sign = d >= 0.0 ? 1.0 : -1.0;
        const double d_dot = inv_n * rotation_weight * -2.0 / std::sqrt(1.0 - ad * ad) * sign;
        // q = z / |z|: dq/dz = (I - q q^T) / |z|.
        const Eigen::Vector4d d_z = d_dot * (g - q * d) / zn;
        d_out.row(r).head<4>() = d_z.transpose();
      }
      d_out.row(r).segment<3>(4) =
          (inv_n * translation_weight * 2.0 * dt.cwiseProduct(model.translation_scale)).transpose();
    }
  }
  if (grads) model.net.backward(tape, d_out, *grads);
  return loss;
}

ProbeModel train_probe(const ProbeData& data, const ProbeTrainConfig& cfg) {
  cfg.validate();
  const auto n = static_cast<std::size_t>(data.inputs.rows());
  if (n == 0) throw DataError("probe training set is empty");
  if (data.inputs.cols() != static_cast<Eigen::Index>(cfg.input_side) * cfg.input_side) {
    throw ConfigError(fmt::format("probe inputs have {} columns, expected {}", data.inputs.cols(),
                                  cfg.input_side * cfg.input_side));
  }

  ProbeModel model;
  model.input_side = cfg.input_side;
  geometry::Vec3 mean = geometry::Vec3::Zero(), sq = geometry::Vec3::Zero();
  for (const auto& p : data.labels) mean += p.translation;
  mean /= static_cast<double>(n);
  for (const auto& p : data.labels) sq += (p.translation - mean).cwiseAbs2();
  model.translation_mean = mean;
  model.translation_scale = (sq / static_cast<double>(n)).cwiseSqrt().cwiseMax(1e-3);

  Rng init(derive_seed(cfg.seed, {0x9209E}));
  model.net = nn::Mlp(static_cast<int>(data.inputs.cols()), cfg.hidden, kOutputs, nn::Activation::kSoftplus,
                      nn::Activation::kIdentity, init);

  std::vector<nn::TensorRef> params;
  nn::append_views(model.net, "probe", params);
  nn::MlpGrad grads = model.net.make_grad();
  std::vector<nn::TensorRef> grad_views;
  nn::append_views(grads, "probe", grad_views);
  std::vector<std::size_t> sizes;
  for (const auto& t : params) sizes.push_back(t.values.size());
  nn::Adam adam(sizes);
  const std::vector<double> lrs(sizes.size(), cfg.learning_rate);

  const auto b = static_cast<Eigen::Index>(cfg.batch_size);
  Matrix x(b, data.inputs.cols());
  std::vector<geometry::Pose> y(static_cast<std::size_t>(b));
  for (int step = 0; step < cfg.steps; ++step) {
    Rng rng(derive_seed(cfg.seed, {0xBA7C4, static_cast<std::uint64_t>(step)}));
    for (Eigen::Index r = 0; r < b; ++r) {
      const auto idx = std::min(n - 1, static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n)));
      x.row(r) = data.inputs.row(static_cast<Eigen::Index>(idx));
      y[static_cast<std::size_t>(r)] = data.labels[idx];
    }
    grads.set_zero();
    const double loss = probe_loss(model, x, y, cfg.rotation_weight, cfg.translation_weight, &grads);
    if (!std::isfinite(loss)) throw NumericalError(fmt::format("probe loss is not finite at step {}", step));
    adam.step(params, grad_views, lrs);
  }
  return model;
}

ProbeModel train_probe(const io::DatasetManifest& set, const ProbeTrainConfig& cfg) {
  return train_probe(load_probe_data(set, cfg.input_side), cfg);
}

metrics::PoseErrors evaluate_probe(const ProbeModel& model, const ProbeData& data) {
  if (data.labels.empty()) throw DataError("cannot evaluate the probe on an empty set");
  const auto pred = model.predict(data.inputs);
  std::vector<metrics::PoseErrors> errors;
  errors.reserve(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) errors.push_back(metrics::pose_errors(pred[i], data.labels[i]));
  return metrics::aggregate(errors);
}

metrics::PoseErrors evaluate_probe(const ProbeModel& model, const io::DatasetManifest& set) {
  return evaluate_probe(model, load_probe_data(set, model.input_side));
}

namespace {

ProbeData concat(const ProbeData& a, const ProbeData& b) {
  ProbeData out;
  out.inputs.resize(a.inputs.rows() + b.inputs.rows(), a.inputs.cols());
  out.inputs << a.inputs, b.inputs;
  out.labels = a.labels;
  out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
  return out;
}

}  // namespace

ABReport ab_experiment(const io::DatasetManifest& source, const io::DatasetManifest& augmented,
                       const std::vector<std::pair<std::string, io::DatasetManifest>>& targets,
                       const ProbeTrainConfig& cfg, int n_seeds) {
  cfg.validate();
  if (n_seeds < 1) throw ConfigError("n_seeds must be >= 1");
  if (targets.empty()) throw ConfigError("A/B experiment needs at least one target set");
  augment::merge_sets(source, augmented);  // intrinsics and path checks

  const ProbeData src = load_probe_data(source, cfg.input_side);
  const ProbeData ours = concat(src, load_probe_data(augmented, cfg.input_side));
  std::vector<ProbeData> target_data;
  for (const auto& [name, set] : targets) target_data.push_back(load_probe_data(set, cfg.input_side));

  const std::array<std::string, 2> arms{"baseline", "ours"};
  const std::size_t jobs = static_cast<std::size_t>(n_seeds) * 2;
  std::vector<std::vector<metrics::PoseErrors>> results(jobs);
  parallel_for(jobs, [&](std::size_t job) {
    ProbeTrainConfig c = cfg;
    c.seed = derive_seed(cfg.seed, {job / 2});
    const ProbeModel model = train_probe(job % 2 == 0 ? src : ours, c);
    for (const auto& td : target_data) results[job].push_back(evaluate_probe(model, td));
  });

  ABReport report;
  for (std::size_t t = 0; t < targets.size(); ++t) {
    int wins = 0;
    for (int s = 0; s < n_seeds; ++s) {
      const auto& base = results[static_cast<std::size_t>(s) * 2][t];
      const auto& mine = results[static_cast<std::size_t>(s) * 2 + 1][t];
      report.rows.push_back({targets[t].first, arms[0], s, base});
      report.rows.push_back({targets[t].first, arms[1], s, mine});
      if (mine.score < base.score) ++wins;
    }
    double base_score = 0.0, our_score = 0.0;
    for (std::size_t a = 0; a < 2; ++a) {
      std::vector<metrics::PoseErrors> per_seed;
      for (int s = 0; s < n_seeds; ++s) per_seed.push_back(results[static_cast<std::size_t>(s) * 2 + a][t]);
      const metrics::PoseErrors mean = metrics::aggregate(per_seed);
      metrics::PoseErrors sd;
      if (n_seeds > 1) {
        for (const auto& e : per_seed) {
          sd.rotation += (e.rotation - mean.rotation) * (e.rotation - mean.rotation);
          sd.translation += (e.translation - mean.translation) * (e.translation - mean.translation);
          sd.normalized_translation += (e.normalized_translation - mean.normalized_translation) *
                                       (e.normalized_translation - mean.normalized_translation);
          sd.score += (e.score - mean.score) * (e.score - mean.score);
        }
        const double k = 1.0 / (n_seeds - 1);
        sd.rotation = std::sqrt(sd.rotation * k);
        sd.translation = std::sqrt(sd.translation * k);
        sd.normalized_translation = std::sqrt(sd.normalized_translation * k);
        sd.score = std::sqrt(sd.score * k);
      }
      report.summary.push_back({targets[t].first, arms[a], mean, sd});
      (a == 0 ? base_score : our_score) = mean.score;
    }
    report.relative_reduction.emplace_back(targets[t].first, base_score > 0.0 ? 1.0 - our_score / base_score : 0.0);
    report.wins.emplace_back(targets[t].first, wins);
  }
  return report;
}

std::string ABReport::to_csv() const {
  std::string out = "target,arm,seed,score,rotation_deg,translation_cm,rotation_rad,translation_m,normalized_translation\n";
  for (const auto& r : rows) {
    const auto& e = r.errors;
    out += fmt::format("{},{},{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g}\n", r.target, r.arm, r.seed_index,
                       e.score, e.rotation_deg(), e.translation_cm(), e.rotation, e.translation,
                       e.normalized_translation);
  }
  return out;
}

std::string ABReport::to_table() const {
  std::string out = fmt::format("{:<16} {:<9} {:>17} {:>17} {:>17}\n", "target", "arm", "S*", "E_R [deg]", "E_T [cm]");
  for (const auto& s : summary) {
    out += fmt::format("{:<16} {:<9} {:>8.4f} ± {:<6.4f} {:>8.3f} ± {:<6.3f} {:>8.2f} ± {:<6.2f}\n", s.target, s.arm,
                       s.mean.score, s.stddev.score, s.mean.rotation_deg(), s.stddev.rotation_deg(),
                       s.mean.translation_cm(), s.stddev.translation_cm());
  }
  for (std::size_t t = 0; t < relative_reduction.size(); ++t) {
    out += fmt::format("{}: S* reduction {:.1f}%, ours better on {} seed(s)\n", relative_reduction[t].first,
                       100.0 * relative_reduction[t].second, wins[t].second);
  }
  return out;
}

}  // namespace nerfaug::probe
