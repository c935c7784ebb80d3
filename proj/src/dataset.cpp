// SPDX-License-Identifier: Apache-2.0
#include "nerfaug/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <fmt/core.h>
#include <json.hpp>

#include "nerfaug/rng.hpp"

namespace nerfaug::io {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

fs::path normalize(const fs::path& p) { return fs::absolute(p).lexically_normal(); }

void dump_canonical(const json& j, std::string& out, int indent) {
  const std::string pad(static_cast<std::size_t>(indent + 2), ' ');
  switch (j.type()) {
    case json::value_t::object: {
      if (j.empty()) {
        out += "{}";
        return;
      }
      out += "{\n";
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) out += ",\n";
        first = false;
        out += pad;
        out += json(it.key()).dump();
        out += ": ";
        dump_canonical(it.value(), out, indent + 2);
      }
      out += "\n" + std::string(static_cast<std::size_t>(indent), ' ') + "}";
      return;
    }
    case json::value_t::array: {
      // Numeric arrays stay on one line.
      const bool flat = std::all_of(j.begin(), j.end(), [](const json& e) { return e.is_number(); });
      if (j.empty()) {
        out += "[]";
        return;
      }
      if (flat) {
        out += "[";
        for (std::size_t i = 0; i < j.size(); ++i) {
          if (i) out += ", ";
          dump_canonical(j[i], out, indent);
        }
        out += "]";
        return;
      }
      out += "[\n";
      for (std::size_t i = 0; i < j.size(); ++i) {
        if (i) out += ",\n";
        out += pad;
        dump_canonical(j[i], out, indent + 2);
      }
      out += "\n" + std::string(static_cast<std::size_t>(indent), ' ') + "]";
      return;
    }
    case json::value_t::number_float:
      out += fmt::format("{:.17g}", j.get<double>());
      return;
    default:
      out += j.dump();
      return;
  }
}

json vec_json(const geometry::Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

json meta_json(const RecordMeta& m) {
  json j = json::object();
  if (m.lighting) {
    j["lighting"] = {{"ambient", m.lighting->ambient},
                     {"sun_direction", vec_json(m.lighting->sun_direction)},
                     {"sun_intensity", m.lighting->sun_intensity}};
  }
  if (m.embedding_ids) j["embedding_ids"] = json::array({(*m.embedding_ids)[0], (*m.embedding_ids)[1]});
  if (m.alpha) j["alpha"] = *m.alpha;
  if (m.appearance_strategy) j["appearance_strategy"] = *m.appearance_strategy;
  if (m.texture_seed) j["texture_seed"] = *m.texture_seed;
  if (m.render_seed) j["render_seed"] = *m.render_seed;
  if (m.background_seed) j["background_seed"] = *m.background_seed;
  if (m.background) j["background"] = *m.background;
  if (m.pose_index) j["pose_index"] = *m.pose_index;
  if (m.variant) j["variant"] = *m.variant;
  return j;
}

[[noreturn]] void schema_fail(std::size_t index, const std::string& what) {
  throw SchemaError(fmt::format("record {}: {}", index, what), index);
}

double get_real(const json& j, std::size_t index, const char* field) {
  if (!j.is_number()) schema_fail(index, fmt::format("'{}' must be a number", field));
  const double v = j.get<double>();
  if (!std::isfinite(v)) schema_fail(index, fmt::format("'{}' must be finite", field));
  return v;
}

geometry::Vec3 get_vec3(const json& j, std::size_t index, const char* field) {
  if (!j.is_array() || j.size() != 3) schema_fail(index, fmt::format("'{}' must be an array of 3 numbers", field));
  return {get_real(j[0], index, field), get_real(j[1], index, field), get_real(j[2], index, field)};
}

template <typename T>
T get_as(const json& j, std::size_t index, const char* field) {
  try {
    return j.get<T>();
  } catch (const json::exception&) {
    schema_fail(index, fmt::format("'{}' has the wrong type", field));
  }
}

RecordMeta parse_meta(const json& j, std::size_t index) {
  RecordMeta m;
  if (!j.is_object()) schema_fail(index, "'meta' must be an object");
  static const std::set<std::string> known = {"lighting",      "embedding_ids", "alpha",      "appearance_strategy",
                                              "texture_seed",  "render_seed",   "background", "background_seed",
                                              "pose_index",    "variant"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.count(it.key())) schema_fail(index, fmt::format("unknown meta key '{}'", it.key()));
  }
  if (j.contains("lighting")) {
    const json& l = j["lighting"];
    if (!l.is_object() || !l.contains("sun_direction") || !l.contains("sun_intensity") || !l.contains("ambient")) {
      schema_fail(index, "'lighting' needs sun_direction, sun_intensity and ambient");
    }
    LightingCondition lc;
    lc.sun_direction = get_vec3(l["sun_direction"], index, "sun_direction");
    lc.sun_intensity = get_real(l["sun_intensity"], index, "sun_intensity");
    lc.ambient = get_real(l["ambient"], index, "ambient");
    m.lighting = lc;
  }
  if (j.contains("embedding_ids")) {
    const json& e = j["embedding_ids"];
    if (!e.is_array() || e.size() != 2) schema_fail(index, "'embedding_ids' must hold two integers");
    m.embedding_ids = std::array<int, 2>{get_as<int>(e[0], index, "embedding_ids"),
                                         get_as<int>(e[1], index, "embedding_ids")};
  }
  if (j.contains("alpha")) m.alpha = get_real(j["alpha"], index, "alpha");
  if (j.contains("appearance_strategy")) {
    m.appearance_strategy = get_as<std::string>(j["appearance_strategy"], index, "appearance_strategy");
  }
  if (j.contains("texture_seed")) m.texture_seed = get_as<std::uint64_t>(j["texture_seed"], index, "texture_seed");
  if (j.contains("render_seed")) m.render_seed = get_as<std::uint64_t>(j["render_seed"], index, "render_seed");
  if (j.contains("background_seed")) {
    m.background_seed = get_as<std::uint64_t>(j["background_seed"], index, "background_seed");
  }
  if (j.contains("background")) m.background = get_as<std::string>(j["background"], index, "background");
  if (j.contains("pose_index")) m.pose_index = get_as<int>(j["pose_index"], index, "pose_index");
  if (j.contains("variant")) m.variant = get_as<int>(j["variant"], index, "variant");
  return m;
}

void check_quaternion(const json& q, std::size_t index) {
  double n2 = 0.0;
  for (const auto& c : q) {
    const double v = get_real(c, index, "rotation");
    n2 += v * v;
  }
  const double dev = std::abs(std::sqrt(n2) - 1.0);
  if (!(dev <= kQuaternionTolerance)) {
    throw QuaternionError(fmt::format("record {}: rotation quaternion norm deviates from 1 by {:.3g}", index, dev),
                          index);
  }
}

}  // namespace

void validate(const DatasetManifest& manifest) {
  std::set<fs::path> seen;
  for (std::size_t i = 0; i < manifest.records.size(); ++i) {
    const auto& r = manifest.records[i];
    if (!seen.insert(normalize(r.image)).second) {
      throw DuplicatePathError(fmt::format("record {}: duplicate image path '{}'", i, r.image.string()), i);
    }
    const auto& q = r.pose.rotation;
    const double dev = std::abs(std::sqrt(q.dot(q)) - 1.0);
    if (!(dev <= kQuaternionTolerance)) {
      throw QuaternionError(fmt::format("record {}: rotation quaternion norm deviates from 1 by {:.3g}", i, dev), i);
    }
  }
}

std::string to_canonical_json(const DatasetManifest& manifest, const fs::path& base_dir) {
  validate(manifest);
  const fs::path base = normalize(base_dir);
  json root;
  root["version"] = manifest.version;
  const auto& in = manifest.intrinsics;
  root["intrinsics"] = {{"fx", in.fx}, {"fy", in.fy}, {"cx", in.cx}, {"cy", in.cy}, {"width", in.width},
                        {"height", in.height}};
  json records = json::array();
  for (const auto& r : manifest.records) {
    json jr;
    jr["image"] = normalize(r.image).lexically_relative(base).generic_string();
    const auto& q = r.pose.rotation;
    jr["rotation"] = json::array({q.w(), q.x(), q.y(), q.z()});
    jr["translation"] = vec_json(r.pose.translation);
    jr["domain"] = r.domain;
    jr["split"] = r.split;
    jr["meta"] = meta_json(r.meta);
    records.push_back(std::move(jr));
  }
  root["records"] = std::move(records);
  std::string out;
  dump_canonical(root, out, 0);
  out += "\n";
  return out;
}

void write_manifest(const DatasetManifest& manifest, const fs::path& path) {
  const std::string text = to_canonical_json(manifest, normalize(path).parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError(fmt::format("cannot open manifest '{}' for writing", path.string()));
  f << text;
  if (!f) throw DataError(fmt::format("failed writing manifest '{}'", path.string()));
}

DatasetManifest from_json_text(const std::string& text, const fs::path& base_dir) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(fmt::format("manifest parse error at byte {}: {}", e.byte, e.what()), e.byte);
  }
  if (!root.is_object()) throw SchemaError("manifest root must be an object", 0);
  if (!root.contains("version") || !root["version"].is_number_integer()) {
    throw VersionError("manifest has no integer 'version'");
  }
  DatasetManifest m;
  m.version = root["version"].get<int>();
  if (m.version != kManifestVersion) {
    throw VersionError(fmt::format("unknown manifest version {} (expected {})", m.version, kManifestVersion));
  }
  if (!root.contains("intrinsics") || !root["intrinsics"].is_object()) {
    throw SchemaError("manifest has no 'intrinsics' object", 0);
  }
  const json& ji = root["intrinsics"];
  try {
    m.intrinsics.fx = ji.at("fx").get<double>();
    m.intrinsics.fy = ji.at("fy").get<double>();
    m.intrinsics.cx = ji.at("cx").get<double>();
    m.intrinsics.cy = ji.at("cy").get<double>();
    m.intrinsics.width = ji.at("width").get<int>();
    m.intrinsics.height = ji.at("height").get<int>();
  } catch (const json::exception& e) {
    throw SchemaError(fmt::format("bad intrinsics: {}", e.what()), 0);
  }
  try {
    m.intrinsics.validate();
  } catch (const ConfigError& e) {
    throw SchemaError(fmt::format("bad intrinsics: {}", e.what()), 0);
  }
  if (!root.contains("records") || !root["records"].is_array()) {
    throw SchemaError("manifest has no 'records' array", 0);
  }
  const fs::path base = normalize(base_dir);
  std::set<fs::path> seen;
  const json& recs = root["records"];
  m.records.reserve(recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    const json& jr = recs[i];
    if (!jr.is_object()) schema_fail(i, "record must be an object");
    for (const char* key : {"image", "rotation", "translation", "domain", "split"}) {
      if (!jr.contains(key)) schema_fail(i, fmt::format("missing '{}'", key));
    }
    Record r;
    if (!jr["image"].is_string()) schema_fail(i, "'image' must be a string");
    r.image = (base / fs::path(jr["image"].get<std::string>())).lexically_normal();
    if (!seen.insert(r.image).second) {
      throw DuplicatePathError(fmt::format("record {}: duplicate image path '{}'", i, r.image.string()), i);
    }
    const json& q = jr["rotation"];
    if (!q.is_array() || q.size() != 4) schema_fail(i, "'rotation' must be [w, x, y, z]");
    check_quaternion(q, i);
    r.pose.rotation = geometry::UnitQuaternion(q[0].get<double>(), q[1].get<double>(), q[2].get<double>(),
                                               q[3].get<double>());
    r.pose.translation = get_vec3(jr["translation"], i, "translation");
    r.domain = get_as<std::string>(jr["domain"], i, "domain");
    r.split = get_as<std::string>(jr["split"], i, "split");
    if (jr.contains("meta")) r.meta = parse_meta(jr["meta"], i);
    m.records.push_back(std::move(r));
  }
  return m;
}

DatasetManifest read_manifest(const fs::path& path, bool check_images) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError(fmt::format("cannot open manifest '{}'", path.string()));
  std::stringstream ss;
  ss << f.rdbuf();
  DatasetManifest m;
  try {
    m = from_json_text(ss.str(), normalize(path).parent_path());
  } catch (const ParseError& e) {
    throw ParseError(fmt::format("{}: {}", path.string(), e.what()), e.byte_offset());
  }
  if (check_images) check_images_exist(m);
  return m;
}

void check_images_exist(const DatasetManifest& manifest) {
  for (std::size_t i = 0; i < manifest.records.size(); ++i) {
    if (!fs::exists(manifest.records[i].image)) {
      throw MissingImageError(
          fmt::format("record {}: image '{}' does not exist", i, manifest.records[i].image.string()), i);
    }
  }
}

std::pair<DatasetManifest, DatasetManifest> split(const DatasetManifest& manifest, double val_fraction,
                                                  std::uint64_t seed) {
  const std::size_t n = manifest.records.size();
  if (n < 2) throw DataError(fmt::format("cannot split a manifest with {} record(s)", n));
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw ConfigError(fmt::format("val fraction must lie in (0, 1), got {}", val_fraction));
  }
  auto n_train = static_cast<std::size_t>(std::llround(static_cast<double>(n) * (1.0 - val_fraction)));
  n_train = std::clamp<std::size_t>(n_train, 1, n - 1);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, {0x5111}));
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<bool> is_train(n, false);
  for (std::size_t k = 0; k < n_train; ++k) is_train[order[k]] = true;

  DatasetManifest train, val;
  train.version = val.version = manifest.version;
  train.intrinsics = val.intrinsics = manifest.intrinsics;
  for (std::size_t i = 0; i < n; ++i) {
    Record r = manifest.records[i];
    r.split = is_train[i] ? "train" : "val";
    (is_train[i] ? train : val).records.push_back(std::move(r));
  }
  return {std::move(train), std::move(val)};
}

}  // namespace nerfaug::io
