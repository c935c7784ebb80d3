// SPDX-License-Identifier: Apache-2.0
//
// Pose-error metrics and the pose score S = E_R + E_T / |t_gt|.
#pragma once

#include <string>
#include <vector>

#include "nerfaug/geometry.hpp"

namespace nerfaug::metrics {

struct PoseErrors {
  double rotation = 0.0;               // E_R, radians
  double translation = 0.0;            // E_T, meters
  double normalized_translation = 0.0; // E_TN
  double score = 0.0;                  // E_R + E_TN

  double rotation_deg() const;
  double translation_cm() const { return translation * 100.0; }
};

// Throws DataError when the ground-truth translation is zero.
PoseErrors pose_errors(const geometry::Pose& est, const geometry::Pose& gt);

// Componentwise mean; throws DataError on an empty list.
PoseErrors aggregate(const std::vector<PoseErrors>& errors);

// One labelled row of a metrics table.
struct MetricsRow {
  std::string label;
  PoseErrors errors;
};

// "label,score,rotation_deg,translation_cm,rotation_rad,translation_m,normalized_translation"
std::string metrics_csv(const std::vector<MetricsRow>& rows);
// Fixed-width table with columns S*, E_R [deg], E_T [cm].
std::string metrics_table(const std::vector<MetricsRow>& rows);

}  // namespace nerfaug::metrics
