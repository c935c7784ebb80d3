// SPDX-License-Identifier: Apache-2.0
//
// Posed image collections on disk.
//
// A manifest is a canonical JSON document (sorted keys, 17 significant digits
// for reals, two-space indentation) next to a directory of PNG images:
//
//   {
//     "intrinsics": {"cx": .., "cy": .., "fx": .., "fy": .., "height": .., "width": ..},
//     "records": [
//       {
//         "domain": "source",
//         "image": "images/000000.png",        // relative to the manifest file
//         "meta": { ...optional provenance... },
//         "rotation": [w, x, y, z],            // scalar-first unit quaternion
//         "split": "train",
//         "translation": [x, y, z]             // meters, p_cam = R p_tgt + t
//       }
//     ],
//     "version": 1
//   }
//
// See docs/manifest.md for the optional "meta" keys.
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "nerfaug/error.hpp"
#include "nerfaug/geometry.hpp"
#include "nerfaug/lighting.hpp"

namespace nerfaug::io {

inline constexpr int kManifestVersion = 1;
inline constexpr double kQuaternionTolerance = 1e-6;

struct RecordMeta {
  std::optional<LightingCondition> lighting;
  std::optional<std::array<int, 2>> embedding_ids;
  std::optional<double> alpha;
  std::optional<std::string> appearance_strategy;
  std::optional<std::uint64_t> texture_seed;
  std::optional<std::uint64_t> render_seed;
  std::optional<std::uint64_t> background_seed;
  std::optional<std::string> background;
  std::optional<int> pose_index;
  std::optional<int> variant;

  bool operator==(const RecordMeta&) const = default;
};

struct Record {
  std::filesystem::path image;  // absolute, lexically normal in memory
  geometry::Pose pose;
  std::string domain;
  std::string split = "none";
  RecordMeta meta;

  bool operator==(const Record&) const = default;
};

struct DatasetManifest {
  int version = kManifestVersion;
  geometry::CameraIntrinsics intrinsics;
  std::vector<Record> records;

  std::size_t size() const { return records.size(); }
  bool operator==(const DatasetManifest&) const = default;
};

// Read failures. All are DataErrors; record-level ones carry the index.
class ParseError : public DataError {
 public:
  ParseError(const std::string& what, std::size_t byte) : DataError(what), byte_(byte) {}
  std::size_t byte_offset() const { return byte_; }

 private:
  std::size_t byte_;
};

class RecordError : public DataError {
 public:
  RecordError(const std::string& what, std::size_t index) : DataError(what), index_(index) {}
  std::size_t record_index() const { return index_; }

 private:
  std::size_t index_;
};

class SchemaError : public RecordError {
  using RecordError::RecordError;
};
class VersionError : public DataError {
  using DataError::DataError;
};
class QuaternionError : public RecordError {
  using RecordError::RecordError;
};
class MissingImageError : public RecordError {
  using RecordError::RecordError;
};
class DuplicatePathError : public RecordError {
  using RecordError::RecordError;
};

// Serializes to the canonical form. Image paths are written relative to the
// directory of `path` (equivalently, of `base_dir` for to_canonical_json).
std::string to_canonical_json(const DatasetManifest& manifest, const std::filesystem::path& base_dir);
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

DatasetManifest from_json_text(const std::string& text, const std::filesystem::path& base_dir);
// Parses and validates; with check_images, also verifies every image exists.
DatasetManifest read_manifest(const std::filesystem::path& path, bool check_images = true);
void check_images_exist(const DatasetManifest& manifest);

// Throws on duplicate paths or non-unit quaternions.
void validate(const DatasetManifest& manifest);

// Deterministic shuffled partition: round(N (1 - val_fraction)) training records
// (clamped to [1, N-1]) and the remainder for validation. Split tags are set
// to "train" / "val"; relative order within each part follows the input.
std::pair<DatasetManifest, DatasetManifest> split(const DatasetManifest& manifest, double val_fraction,
                                                  std::uint64_t seed);

}  // namespace nerfaug::io
