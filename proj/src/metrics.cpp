// SPDX-License-Identifier: Apache-2.0
#include "nerfaug/metrics.hpp"

#include <algorithm>
#include <numbers>

#include <fmt/core.h>

#include "nerfaug/error.hpp"

namespace nerfaug::metrics {

double PoseErrors::rotation_deg() const { return rotation * 180.0 / std::numbers::pi; }

PoseErrors pose_errors(const geometry::Pose& est, const geometry::Pose& gt) {
  const double gt_norm = gt.translation.norm();
  if (gt_norm == 0.0) throw DataError("ground-truth translation is zero; normalized error is undefined");
  PoseErrors e;
  e.rotation = geometry::rotation_geodesic(est.rotation, gt.rotation);
  e.translation = (est.translation - gt.translation).norm();
  e.normalized_translation = e.translation / gt_norm;
  e.score = e.rotation + e.normalized_translation;
  return e;
}

PoseErrors aggregate(const std::vector<PoseErrors>& errors) {
  if (errors.empty()) throw DataError("cannot aggregate an empty list of pose errors");
  PoseErrors m;
  for (const auto& e : errors) {
    m.rotation += e.rotation;
    m.translation += e.translation;
    m.normalized_translation += e.normalized_translation;
    m.score += e.score;
  }
  const double n = static_cast<double>(errors.size());
  m.rotation /= n;
  m.translation /= n;
  m.normalized_translation /= n;
  m.score /= n;
  return m;
}

std::string metrics_csv(const std::vector<MetricsRow>& rows) {
  std::string out = "label,score,rotation_deg,translation_cm,rotation_rad,translation_m,normalized_translation\n";
  for (const auto& r : rows) {
    const auto& e = r.errors;
    out += fmt::format("{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g}\n", r.label, e.score, e.rotation_deg(),
                       e.translation_cm(), e.rotation, e.translation, e.normalized_translation);
  }
  return out;
}

std::string metrics_table(const std::vector<MetricsRow>& rows) {
  std::size_t width = 5;
  for (const auto& r : rows) width = std::max(width, r.label.size());
  std::string out = fmt::format("{:<{}}  {:>8}  {:>10}  {:>10}\n", "", width, "S*", "E_R [deg]", "E_T [cm]");
  for (const auto& r : rows) {
    out += fmt::format("{:<{}}  {:>8.4f}  {:>10.3f}  {:>10.2f}\n", r.label, width, r.errors.score,
                       r.errors.rotation_deg(), r.errors.translation_cm());
  }
  return out;
}

}  // namespace nerfaug::metrics
