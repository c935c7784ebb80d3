// SPDX-License-Identifier: Apache-2.0
//
// Shared helpers for the unit tests.
#pragma once

#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

#include "nerfaug/field.hpp"
#include "nerfaug/geometry.hpp"

namespace test {

// Fresh, empty scratch directory under the system temp dir.
inline std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("nerfaug_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Small field for gradient and property tests: cheap to evaluate, every block present.
inline nerfaug::field::FieldConfig tiny_field_config(int embeddings = 3) {
  nerfaug::field::FieldConfig c;
  c.resolutions = {4, 8};
  c.features = 3;
  c.density_hidden = {8};
  c.density_features = 4;
  c.color_hidden = {8};
  c.appearance_dim = 3;
  c.sh_degree = 1;
  c.num_embeddings = embeddings;
  return c;
}

// Camera at distance d on the -z side of the scene, looking at the origin.
inline nerfaug::geometry::Pose looking_at_origin(double d) {
  nerfaug::geometry::Pose p;
  p.translation = nerfaug::geometry::Vec3(0.0, 0.0, d);
  return p;
}

}  // namespace test
