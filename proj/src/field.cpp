// SPDX-License-Identifier: Apache-2.0
#include "nerfaug/field.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include <fmt/core.h>

#include "nerfaug/error.hpp"
#include "nerfaug/rng.hpp"

namespace nerfaug::field {

namespace {

constexpr std::array<std::array<int, 2>, 3> kPlaneAxes{{{0, 1}, {0, 2}, {1, 2}}};
constexpr char kMagic[8] = {'N', 'A', 'F', 'I', 'E', 'L', 'D', '\0'};
constexpr std::uint32_t kCheckpointVersion = 1;

// Bilinear lookup location of one coordinate pair on an R x R plane.
struct PlaneSample {
  std::size_t i0 = 0, j0 = 0;
  double fx = 0.0, fy = 0.0;
};

inline double grid_coord(double p, double bound, int res) {
  const double c = std::clamp(p, -bound, bound);
  return (c + bound) / (2.0 * bound) * (res - 1);
}

inline PlaneSample locate(double a, double b, double bound, int res) {
  const double ga = grid_coord(a, bound, res), gb = grid_coord(b, bound, res);
  PlaneSample s;
  s.i0 = static_cast<std::size_t>(std::min(static_cast<int>(std::floor(ga)), res - 2));
  s.j0 = static_cast<std::size_t>(std::min(static_cast<int>(std::floor(gb)), res - 2));
  s.fx = ga - static_cast<double>(s.i0);
  s.fy = gb - static_cast<double>(s.j0);
  return s;
}

}  // namespace

void FieldConfig::validate() const {
  if (resolutions.empty()) throw ConfigError("field needs at least one plane resolution");
  for (std::size_t i = 0; i < resolutions.size(); ++i) {
    if (resolutions[i] < 2) throw ConfigError(fmt::format("plane resolution must be >= 2, got {}", resolutions[i]));
    if (i > 0 && resolutions[i] <= resolutions[i - 1]) {
      throw ConfigError("plane resolutions must be strictly increasing");
    }
  }
  auto positive = [](int v, const char* what) {
    if (v < 1) throw ConfigError(fmt::format("{} must be >= 1, got {}", what, v));
  };
  positive(features, "features per plane");
  positive(density_features, "density feature width");
  positive(appearance_dim, "appearance dimension");
  positive(num_embeddings, "number of appearance embeddings");
  for (int w : density_hidden) positive(w, "density hidden width");
  for (int w : color_hidden) positive(w, "color hidden width");
  if (sh_degree < 0 || sh_degree > 3) throw ConfigError(fmt::format("SH degree must be in [0, 3], got {}", sh_degree));
  if (!(bound > 0.0)) throw ConfigError("scene bound must be positive");
}

nlohmann::json to_json(const FieldConfig& c) {
  return {{"resolutions", c.resolutions},
          {"features", c.features},
          {"density_hidden", c.density_hidden},
          {"density_features", c.density_features},
          {"color_hidden", c.color_hidden},
          {"appearance_dim", c.appearance_dim},
          {"sh_degree", c.sh_degree},
          {"bound", c.bound},
          {"num_embeddings", c.num_embeddings},
          {"hidden_activation", nn::to_string(c.hidden_activation)},
          {"plane_init", c.plane_init},
          {"plane_init_noise", c.plane_init_noise},
          {"embedding_init", c.embedding_init}};
}

FieldConfig field_config_from_json(const nlohmann::json& j) {
  FieldConfig c;
  try {
    if (j.contains("resolutions")) c.resolutions = j["resolutions"].get<std::vector<int>>();
    if (j.contains("features")) c.features = j["features"].get<int>();
    if (j.contains("density_hidden")) c.density_hidden = j["density_hidden"].get<std::vector<int>>();
    if (j.contains("density_features")) c.density_features = j["density_features"].get<int>();
    if (j.contains("color_hidden")) c.color_hidden = j["color_hidden"].get<std::vector<int>>();
    if (j.contains("appearance_dim")) c.appearance_dim = j["appearance_dim"].get<int>();
    if (j.contains("sh_degree")) c.sh_degree = j["sh_degree"].get<int>();
    if (j.contains("bound")) c.bound = j["bound"].get<double>();
    if (j.contains("num_embeddings")) c.num_embeddings = j["num_embeddings"].get<int>();
    if (j.contains("hidden_activation")) {
      c.hidden_activation = nn::activation_from_string(j["hidden_activation"].get<std::string>());
    }
    if (j.contains("plane_init")) c.plane_init = j["plane_init"].get<double>();
    if (j.contains("plane_init_noise")) c.plane_init_noise = j["plane_init_noise"].get<double>();
    if (j.contains("embedding_init")) c.embedding_init = j["embedding_init"].get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("bad field config: {}", e.what()));
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------

FieldGradients::FieldGradients(const RadianceField& field)
    : planes(field.planes().size(), 0.0),
      density(field.density_mlp().make_grad()),
      color(field.color_mlp().make_grad()),
      appearance(Matrix::Zero(field.appearance().rows(), field.appearance().cols())) {}

void FieldGradients::set_zero() {
  std::fill(planes.begin(), planes.end(), 0.0);
  density.set_zero();
  color.set_zero();
  appearance.setZero();
}

FieldGradients& FieldGradients::operator+=(const FieldGradients& o) {
  for (std::size_t i = 0; i < planes.size(); ++i) planes[i] += o.planes[i];
  density += o.density;
  color += o.color;
  appearance += o.appearance;
  return *this;
}

std::vector<nn::TensorRef> FieldGradients::tensors() {
  std::vector<nn::TensorRef> out;
  out.push_back({"planes", {planes.data(), planes.size()}});
  nn::append_views(density, "density_mlp", out);
  nn::append_views(color, "color_mlp", out);
  out.push_back({"appearance", {appearance.data(), static_cast<std::size_t>(appearance.size())}});
  return out;
}

// ---------------------------------------------------------------------------

RadianceField::RadianceField(const FieldConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  layout();
  Rng rng(derive_seed(seed, {0xF1E1D}));
  for (double& v : planes_) v = config_.plane_init + uniform(rng, -config_.plane_init_noise, config_.plane_init_noise);
  density_ = nn::Mlp(config_.position_feature_size(), config_.density_hidden, 1 + config_.density_features,
                     config_.hidden_activation, nn::Activation::kIdentity, rng);
  // Zero sigma row: the untrained field has sigma = softplus(0) = ln 2 everywhere.
  density_.layers().back().weight.col(0).setZero();
  density_.layers().back().bias[0] = 0.0;
  color_ = nn::Mlp(config_.color_input_size(), config_.color_hidden, 3, config_.hidden_activation,
                   nn::Activation::kSigmoid, rng);
  appearance_.resize(config_.num_embeddings, config_.appearance_dim);
  for (Eigen::Index c = 0; c < appearance_.cols(); ++c) {
    for (Eigen::Index r = 0; r < appearance_.rows(); ++r) {
      appearance_(r, c) = uniform(rng, -config_.embedding_init, config_.embedding_init);
    }
  }
}

void RadianceField::layout() {
  offsets_.clear();
  std::size_t total = 0;
  for (int res : config_.resolutions) {
    for (int k = 0; k < 3; ++k) {
      offsets_.push_back(total);
      total += static_cast<std::size_t>(res) * res * config_.features;
    }
  }
  planes_.assign(total, 0.0);
}

Vector RadianceField::embedding(int index) const {
  if (index < 0 || index >= appearance_.rows()) {
    throw DataError(fmt::format("appearance embedding {} out of range [0, {})", index, appearance_.rows()));
  }
  return appearance_.row(index).transpose();
}

std::vector<nn::TensorRef> RadianceField::tensors() {
  std::vector<nn::TensorRef> out;
  out.push_back({"planes", {planes_.data(), planes_.size()}});
  nn::append_views(density_, "density_mlp", out);
  nn::append_views(color_, "color_mlp", out);
  out.push_back({"appearance", {appearance_.data(), static_cast<std::size_t>(appearance_.size())}});
  return out;
}

std::size_t RadianceField::parameter_count() const {
  return planes_.size() + density_.parameter_count() + color_.parameter_count() +
         static_cast<std::size_t>(appearance_.size());
}

Matrix RadianceField::encode_positions(const Matrix& positions, FieldTape* tape) const {
  const auto n = positions.rows();
  const int levels = static_cast<int>(config_.resolutions.size());
  const int nf = config_.features;
  Matrix out(n, config_.position_feature_size());
  if (tape) tape->plane_samples.assign(static_cast<std::size_t>(n) * levels * 3 * nf, 0.0);
  std::vector<double> sample(static_cast<std::size_t>(3 * nf));
  for (Eigen::Index row = 0; row < n; ++row) {
    const double p[3] = {positions(row, 0), positions(row, 1), positions(row, 2)};
    for (int r = 0; r < levels; ++r) {
      const int res = config_.resolutions[static_cast<std::size_t>(r)];
      const std::size_t stride_j = static_cast<std::size_t>(res) * nf;
      for (int k = 0; k < 3; ++k) {
        const PlaneSample s = locate(p[kPlaneAxes[k][0]], p[kPlaneAxes[k][1]], config_.bound, res);
        const double* base = planes_.data() + plane_offset(r, k) + s.j0 * stride_j + s.i0 * nf;
        const double w00 = (1 - s.fx) * (1 - s.fy), w10 = s.fx * (1 - s.fy);
        const double w01 = (1 - s.fx) * s.fy, w11 = s.fx * s.fy;
        for (int f = 0; f < nf; ++f) {
          sample[static_cast<std::size_t>(k * nf + f)] =
              w00 * base[f] + w10 * base[nf + f] + w01 * base[stride_j + f] + w11 * base[stride_j + nf + f];
        }
      }
      for (int f = 0; f < nf; ++f) {
        out(row, r * nf + f) = sample[f] * sample[nf + f] * sample[2 * nf + f];
      }
      if (tape) {
        std::copy(sample.begin(), sample.end(),
                  tape->plane_samples.begin() + static_cast<std::ptrdiff_t>((row * levels + r) * 3 * nf));
      }
    }
  }
  return out;
}

Vector RadianceField::encode_position(const Vec3& p) const {
  Matrix m(1, 3);
  m << p.x(), p.y(), p.z();
  return encode_positions(m, nullptr).row(0).transpose();
}

std::pair<double, Vector> RadianceField::density(const Vector& position_features) const {
  const Matrix raw = density_.forward(position_features.transpose());
  return {nn::softplus(raw(0, 0)), raw.block(0, 1, 1, config_.density_features).transpose()};
}

Vec3 RadianceField::color(const Vector& density_features, const Vector& direction_features,
                          const Vector& e_app) const {
  Matrix in(1, config_.color_input_size());
  in << density_features.transpose(), direction_features.transpose(), e_app.transpose();
  const Matrix rgb = color_.forward(in);
  return {rgb(0, 0), rgb(0, 1), rgb(0, 2)};
}

FieldOutput RadianceField::forward(const Matrix& positions, const Matrix& direction_features, const Matrix& e_app,
                                   FieldTape* tape) const {
  const auto n = positions.rows();
  Matrix pos_features = encode_positions(positions, tape);
  nn::MlpTape* density_tape = tape ? &tape->density : nullptr;
  Matrix raw = density_.forward(pos_features, density_tape);
  FieldOutput out;
  out.sigma = nn::softplus(Vector(raw.col(0)));
  Matrix color_in(n, config_.color_input_size());
  color_in.leftCols(config_.density_features) = raw.rightCols(config_.density_features);
  color_in.middleCols(config_.density_features, config_.direction_feature_size()) = direction_features;
  color_in.rightCols(config_.appearance_dim) = e_app;
  out.rgb = color_.forward(color_in, tape ? &tape->color : nullptr);
  if (tape) {
    tape->positions = positions;
    tape->position_features = std::move(pos_features);
    tape->density_raw = std::move(raw);
  }
  return out;
}

Vector RadianceField::density_batch(const Matrix& positions) const {
  const Matrix raw = density_.forward(encode_positions(positions, nullptr));
  return nn::softplus(Vector(raw.col(0)));
}

Matrix RadianceField::backward(const FieldTape& tape, const Vector& d_sigma, const Matrix& d_rgb,
                               FieldGradients& grads) const {
  const auto n = tape.positions.rows();
  const Matrix d_color_in = color_.backward(tape.color, d_rgb, grads.color);

  Matrix d_raw(n, 1 + config_.density_features);
  d_raw.col(0) = d_sigma.cwiseProduct(nn::sigmoid(Vector(tape.density_raw.col(0))));
  d_raw.rightCols(config_.density_features) = d_color_in.leftCols(config_.density_features);
  const Matrix d_pos = density_.backward(tape.density, d_raw, grads.density);

  const int levels = static_cast<int>(config_.resolutions.size());
  const int nf = config_.features;
  for (Eigen::Index row = 0; row < n; ++row) {
    const double p[3] = {tape.positions(row, 0), tape.positions(row, 1), tape.positions(row, 2)};
    for (int r = 0; r < levels; ++r) {
      const int res = config_.resolutions[static_cast<std::size_t>(r)];
      const std::size_t stride_j = static_cast<std::size_t>(res) * nf;
      const double* s = tape.plane_samples.data() + (row * levels + r) * 3 * nf;
      for (int k = 0; k < 3; ++k) {
        const PlaneSample ps = locate(p[kPlaneAxes[k][0]], p[kPlaneAxes[k][1]], config_.bound, res);
        double* g = grads.planes.data() + plane_offset(r, k) + ps.j0 * stride_j + ps.i0 * nf;
        const double w00 = (1 - ps.fx) * (1 - ps.fy), w10 = ps.fx * (1 - ps.fy);
        const double w01 = (1 - ps.fx) * ps.fy, w11 = ps.fx * ps.fy;
        const int k1 = (k + 1) % 3, k2 = (k + 2) % 3;
        for (int f = 0; f < nf; ++f) {
          const double up = d_pos(row, r * nf + f) * s[k1 * nf + f] * s[k2 * nf + f];
          if (up == 0.0) continue;
          g[f] += w00 * up;
          g[nf + f] += w10 * up;
          g[stride_j + f] += w01 * up;
          g[stride_j + nf + f] += w11 * up;
        }
      }
    }
  }
  return d_color_in.rightCols(config_.appearance_dim);
}

bool RadianceField::operator==(const RadianceField& o) const {
  return config_ == o.config_ && planes_ == o.planes_ && density_ == o.density_ && color_ == o.color_ &&
         appearance_.rows() == o.appearance_.rows() && appearance_.cols() == o.appearance_.cols() &&
         appearance_ == o.appearance_;
}

// ---------------------------------------------------------------------------

Vector encode_direction(const Vec3& d, int degree) {
  Matrix m(1, 3);
  m << d.x(), d.y(), d.z();
  return encode_directions(m, degree).row(0).transpose();
}

Matrix encode_directions(const Matrix& dirs, int degree) {
  if (degree < 0 || degree > 3) throw ConfigError(fmt::format("SH degree must be in [0, 3], got {}", degree));
  const int width = (degree + 1) * (degree + 1);
  Matrix out(dirs.rows(), width);
  for (Eigen::Index r = 0; r < dirs.rows(); ++r) {
    const double x = dirs(r, 0), y = dirs(r, 1), z = dirs(r, 2);
    out(r, 0) = 0.28209479177387814;
    if (degree >= 1) {
      out(r, 1) = -0.48860251190291987 * y;
      out(r, 2) = 0.48860251190291987 * z;
      out(r, 3) = -0.48860251190291987 * x;
    }
    if (degree >= 2) {
      const double xx = x * x, yy = y * y, zz = z * z;
      out(r, 4) = 1.0925484305920792 * x * y;
      out(r, 5) = -1.0925484305920792 * y * z;
      out(r, 6) = 0.94617469575755997 * zz - 0.31539156525251999;
      out(r, 7) = -1.0925484305920792 * x * z;
      out(r, 8) = 0.54627421529603959 * (xx - yy);
    }
    if (degree >= 3) {
      const double xx = x * x, yy = y * y, zz = z * z;
      out(r, 9) = 0.59004358992664352 * y * (-3.0 * xx + yy);
      out(r, 10) = 2.8906114426405538 * x * y * z;
      out(r, 11) = 0.45704579946446572 * y * (1.0 - 5.0 * zz);
      out(r, 12) = 0.3731763325901154 * z * (5.0 * zz - 3.0);
      out(r, 13) = 0.45704579946446572 * x * (1.0 - 5.0 * zz);
      out(r, 14) = 1.4453057213202769 * z * (xx - yy);
      out(r, 15) = 0.59004358992664352 * x * (-xx + 3.0 * yy);
    }
  }
  return out;
}

RadianceField perturb_color_weights(const RadianceField& field, double noise_std, std::uint64_t seed) {
  if (!(noise_std >= 0.0)) throw ConfigError(fmt::format("texture noise std must be >= 0, got {}", noise_std));
  RadianceField out = field;
  if (noise_std == 0.0) return out;
  Rng rng(seed);
  std::normal_distribution<double> noise(0.0, noise_std);
  for (auto& layer : out.color_mlp().layers()) {
    double* w = layer.weight.data();
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i) w[i] += noise(rng);
  }
  return out;
}

double total_variation(const RadianceField& field, double weight, FieldGradients* grads) {
  const auto& cfg = field.config();
  const auto& planes = field.planes();
  const int nf = cfg.features;
  double tv = 0.0;
  for (std::size_t r = 0; r < cfg.resolutions.size(); ++r) {
    const int res = cfg.resolutions[r];
    const std::size_t stride_j = static_cast<std::size_t>(res) * nf;
    const double count = static_cast<double>(res - 1) * res * nf;
    for (int k = 0; k < 3; ++k) {
      const std::size_t off = field.plane_offset(static_cast<int>(r), k);
      const double* p = planes.data() + off;
      double* g = grads ? grads->planes.data() + off : nullptr;
      double sum = 0.0;
      for (int j = 0; j < res; ++j) {
        for (int i = 0; i < res; ++i) {
          const std::size_t idx = j * stride_j + static_cast<std::size_t>(i) * nf;
          for (int f = 0; f < nf; ++f) {
            if (i + 1 < res) {
              const double d = p[idx + nf + f] - p[idx + f];
              sum += d * d;
              if (g) {
                const double gd = weight * 2.0 * d / count;
                g[idx + nf + f] += gd;
                g[idx + f] -= gd;
              }
            }
            if (j + 1 < res) {
              const double d = p[idx + stride_j + f] - p[idx + f];
              sum += d * d;
              if (g) {
                const double gd = weight * 2.0 * d / count;
                g[idx + stride_j + f] += gd;
                g[idx + f] -= gd;
              }
            }
          }
        }
      }
      tv += sum / count;
    }
  }
  return weight * tv;
}

// ---------------------------------------------------------------------------

void write_field(std::ostream& os, const RadianceField& field) {
  auto& f = const_cast<RadianceField&>(field);
  const std::string cfg = to_json(field.config()).dump();
  os.write(kMagic, sizeof(kMagic));
  const std::uint32_t version = kCheckpointVersion;
  os.write(reinterpret_cast<const char*>(&version), sizeof(version));
  const std::uint64_t cfg_len = cfg.size();
  os.write(reinterpret_cast<const char*>(&cfg_len), sizeof(cfg_len));
  os.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
  for (const auto& t : f.tensors()) {
    const std::uint64_t count = t.values.size();
    os.write(reinterpret_cast<const char*>(&count), sizeof(count));
    os.write(reinterpret_cast<const char*>(t.values.data()), static_cast<std::streamsize>(count * sizeof(double)));
  }
}

RadianceField read_field(std::istream& is, const std::string& origin) {
  auto fail = [&](const std::string& what) { return DataError(fmt::format("checkpoint '{}': {}", origin, what)); };
  char magic[8];
  if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw fail("not a field checkpoint");
  }
  std::uint32_t version = 0;
  if (!is.read(reinterpret_cast<char*>(&version), sizeof(version))) throw fail("truncated header");
  if (version != kCheckpointVersion) throw fail(fmt::format("unsupported version {}", version));
  std::uint64_t cfg_len = 0;
  if (!is.read(reinterpret_cast<char*>(&cfg_len), sizeof(cfg_len)) || cfg_len > (1u << 20)) {
    throw fail("bad config length");
  }
  std::string cfg(cfg_len, '\0');
  if (!is.read(cfg.data(), static_cast<std::streamsize>(cfg_len))) throw fail("truncated config");
  FieldConfig config;
  try {
    config = field_config_from_json(nlohmann::json::parse(cfg));
  } catch (const nlohmann::json::exception& e) {
    throw fail(fmt::format("bad config: {}", e.what()));
  }
  RadianceField field(config, 0);
  for (auto& t : field.tensors()) {
    std::uint64_t count = 0;
    if (!is.read(reinterpret_cast<char*>(&count), sizeof(count))) throw fail("truncated tensor header");
    if (count != t.values.size()) {
      throw fail(fmt::format("tensor in block '{}' has {} values, expected {}", t.block, count, t.values.size()));
    }
    if (!is.read(reinterpret_cast<char*>(t.values.data()), static_cast<std::streamsize>(count * sizeof(double)))) {
      throw fail("truncated tensor data");
    }
  }
  return field;
}

void save_checkpoint(const RadianceField& field, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError(fmt::format("cannot open checkpoint '{}' for writing", path.string()));
  write_field(os, field);
  if (!os) throw DataError(fmt::format("failed writing checkpoint '{}'", path.string()));
}

RadianceField load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError(fmt::format("cannot open checkpoint '{}'", path.string()));
  return read_field(is, path.string());
}

}  // namespace nerfaug::field
