// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "nerfaug/error.hpp"
#include "nerfaug/field.hpp"
#include "nerfaug/render.hpp"
#include "nerfaug/rng.hpp"
#include "support.hpp"

using namespace nerfaug;
using namespace nerfaug::field;

namespace {

// Naive oracle: bilinear interpolation written as a sum of tent weights over every node.
Vector naive_encode(const RadianceField& f, const Vec3& p_in) {
  const auto& c = f.config();
  const int axes[3][2] = {{0, 1}, {0, 2}, {1, 2}};
  Vec3 p = p_in;
  for (int a = 0; a < 3; ++a) p[a] = std::clamp(p[a], -c.bound, c.bound);
  Vector out(c.position_feature_size());
  for (std::size_t r = 0; r < c.resolutions.size(); ++r) {
    const int res = c.resolutions[r];
    for (int feat = 0; feat < c.features; ++feat) {
      double prod = 1.0;
      for (int k = 0; k < 3; ++k) {
        const double ga = (p[axes[k][0]] + c.bound) / (2 * c.bound) * (res - 1);
        const double gb = (p[axes[k][1]] + c.bound) / (2 * c.bound) * (res - 1);
        double v = 0.0;
        for (int j = 0; j < res; ++j) {
          for (int i = 0; i < res; ++i) {
            const double w = std::max(0.0, 1 - std::abs(ga - i)) * std::max(0.0, 1 - std::abs(gb - j));
            if (w == 0.0) continue;
            v += w * f.planes()[f.plane_offset(static_cast<int>(r), k) +
                                (static_cast<std::size_t>(j) * res + i) * c.features + feat];
          }
        }
        prod *= v;
      }
      out[static_cast<Eigen::Index>(r) * c.features + feat] = prod;
    }
  }
  return out;
}

double oracle_act(nn::Activation a, double z) {
  switch (a) {
    case nn::Activation::kIdentity: return z;
    case nn::Activation::kRelu: return z > 0 ? z : 0.0;
    case nn::Activation::kSoftplus: return z > 30 ? z : std::log(1.0 + std::exp(z));
    case nn::Activation::kSigmoid: return 1.0 / (1.0 + std::exp(-z));
  }
  return 0.0;
}

// Naive dense-layer oracle: explicit loops, no Eigen products.
std::vector<double> naive_mlp(const nn::Mlp& mlp, std::vector<double> x) {
  for (const auto& layer : mlp.layers()) {
    std::vector<double> y(static_cast<std::size_t>(layer.weight.cols()));
    for (Eigen::Index o = 0; o < layer.weight.cols(); ++o) {
      double s = layer.bias[o];
      for (Eigen::Index i = 0; i < layer.weight.rows(); ++i) s += x[static_cast<std::size_t>(i)] * layer.weight(i, o);
      y[static_cast<std::size_t>(o)] = oracle_act(layer.activation, s);
    }
    x = std::move(y);
  }
  return x;
}

void randomize(RadianceField& f, std::uint64_t seed, double scale = 0.5) {
  Rng rng(seed);
  for (auto& t : f.tensors()) {
    for (double& v : t.values) v = uniform(rng, -scale, scale);
  }
}

Vec3 random_point(Rng& rng, double bound) {
  return {uniform(rng, -bound, bound), uniform(rng, -bound, bound), uniform(rng, -bound, bound)};
}

// Real SH through associated Legendre functions (std::assoc_legendre omits the
// Condon-Shortley phase, so it is applied here).
double sh_oracle(int l, int m, const Vec3& d) {
  const double theta = std::acos(std::clamp(d.z(), -1.0, 1.0));
  const double phi = std::atan2(d.y(), d.x());
  const int am = std::abs(m);
  const double k = std::sqrt((2 * l + 1) / (4 * std::numbers::pi) * std::tgamma(l - am + 1) / std::tgamma(l + am + 1));
  const double p = (am % 2 ? -1.0 : 1.0) * std::assoc_legendre(static_cast<unsigned>(l), static_cast<unsigned>(am),
                                                                std::cos(theta));
  if (m == 0) return k * p;
  if (m > 0) return std::sqrt(2.0) * k * std::cos(am * phi) * p;
  return std::sqrt(2.0) * k * std::sin(am * phi) * p;
}

}  // namespace

TEST_SUITE("field") {

TEST_CASE("config validation and parameter counts") {
  FieldConfig c;
  CHECK_NOTHROW(c.validate());
  FieldConfig bad = c;
  bad.resolutions = {64, 32};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.appearance_dim = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.sh_degree = 4;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  c.num_embeddings = 5;
  const RadianceField f(c, 1);
  std::size_t planes = 0;
  for (int r : c.resolutions) planes += 3u * static_cast<std::size_t>(r * r * c.features);
  CHECK(f.planes().size() == planes);
  CHECK(f.density_mlp().input_size() == c.position_feature_size());
  CHECK(f.density_mlp().output_size() == 1 + c.density_features);
  CHECK(f.color_mlp().input_size() == c.density_features + 9 + c.appearance_dim);
  CHECK(f.color_mlp().output_size() == 3);
  CHECK(f.appearance().rows() == 5);
  CHECK(f.appearance().cols() == c.appearance_dim);
  CHECK(f.parameter_count() ==
        planes + f.density_mlp().parameter_count() + f.color_mlp().parameter_count() + 5u * c.appearance_dim);
}

TEST_CASE("planes start near 0.1") {
  const RadianceField f(FieldConfig{}, 2);
  for (double v : f.planes()) {
    CHECK(v >= 0.09);
    CHECK(v <= 0.11);
  }
}

TEST_CASE("encode_position matches the naive bilinear oracle") {
  RadianceField f(test::tiny_field_config(), 3);
  randomize(f, 4);
  Rng rng(5);
  for (int k = 0; k < 100; ++k) {
    const Vec3 p = random_point(rng, 0.6);
    CHECK((f.encode_position(p) - naive_encode(f, p)).cwiseAbs().maxCoeff() < 1e-12);
  }
  // Points outside the box are clamped.
  const Vec3 out(2.0, -3.0, 0.1);
  CHECK((f.encode_position(out) - naive_encode(f, out)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((f.encode_position(out) - f.encode_position(Vec3(0.6, -0.6, 0.1))).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("lattice nodes and edge midpoints") {
  FieldConfig c = test::tiny_field_config();
  c.resolutions = {5};
  RadianceField f(c, 3);
  randomize(f, 6);
  const double step = 2 * c.bound / 4;
  auto node = [&](int k, int i, int j, int feat) {
    return f.planes()[f.plane_offset(0, k) + (static_cast<std::size_t>(j) * 5 + i) * c.features + feat];
  };
  const int ix = 1, iy = 3, iz = 2;
  const Vec3 p(-c.bound + ix * step, -c.bound + iy * step, -c.bound + iz * step);
  const Vector enc = f.encode_position(p);
  for (int feat = 0; feat < c.features; ++feat) {
    CHECK(enc[feat] == doctest::Approx(node(0, ix, iy, feat) * node(1, ix, iz, feat) * node(2, iy, iz, feat)).epsilon(1e-14));
  }
  // Halfway along x: the xy and xz samples average their two nodes, yz is unchanged.
  const Vector mid = f.encode_position(p + Vec3(step / 2, 0, 0));
  for (int feat = 0; feat < c.features; ++feat) {
    const double xy = 0.5 * (node(0, ix, iy, feat) + node(0, ix + 1, iy, feat));
    const double xz = 0.5 * (node(1, ix, iz, feat) + node(1, ix + 1, iz, feat));
    CHECK(mid[feat] == doctest::Approx(xy * xz * node(2, iy, iz, feat)).epsilon(1e-12));
  }
}

TEST_CASE("encode_position is Lipschitz continuous") {
  RadianceField f(test::tiny_field_config(), 3);
  randomize(f, 7);
  const auto& c = f.config();
  double max_abs = 0.0;
  for (double v : f.planes()) max_abs = std::max(max_abs, std::abs(v));
  // Loose bound from the grid values: neighbouring nodes differ by at most
  // 2 max|v|, so each plane sample moves at most that times (res-1)/(2 bound)
  // per unit length along either axis.
  double lip = 0.0;
  for (int r : c.resolutions) lip += 3.0 * max_abs * max_abs * 2.0 * (2 * max_abs) * (r - 1) / (2 * c.bound);
  Rng rng(8);
  const double eps = 1e-6;
  for (int k = 0; k < 200; ++k) {
    const Vec3 p = random_point(rng, 0.59);
    const Vec3 dir = random_point(rng, 1.0).normalized();
    const double change = (f.encode_position(p + eps * dir) - f.encode_position(p)).norm();
    CHECK(change <= lip * eps * std::sqrt(static_cast<double>(c.position_feature_size())));
  }
}

TEST_CASE("spherical harmonics") {
  const Vector y0 = encode_direction(Vec3(0.3, 0.4, 0.5).normalized(), 0);
  REQUIRE(y0.size() == 1);
  CHECK(y0[0] == doctest::Approx(1.0 / (2.0 * std::sqrt(std::numbers::pi))).epsilon(1e-15));
  const Vector y1 = encode_direction(Vec3::UnitZ(), 1);
  REQUIRE(y1.size() == 4);
  CHECK(y1[2] == doctest::Approx(std::sqrt(3.0 / (4.0 * std::numbers::pi))).epsilon(1e-15));
  CHECK(y1[1] == 0.0);
  CHECK(y1[3] == 0.0);
  Rng rng(9);
  for (int k = 0; k < 100; ++k) {
    const Vec3 d = random_point(rng, 1.0).normalized();
    const Vector y = encode_direction(d, 3);
    REQUIRE(y.size() == 16);
    double norm2 = 0.0;
    for (int l = 0; l <= 3; ++l) {
      for (int m = -l; m <= l; ++m) {
        const double ref = sh_oracle(l, m, d);
        CHECK(y[l * l + l + m] == doctest::Approx(ref).epsilon(1e-12).scale(1.0));
        norm2 += ref * ref;
      }
    }
    CHECK(y.norm() == doctest::Approx(std::sqrt(norm2)).epsilon(1e-12));
  }
  CHECK_THROWS_AS(encode_direction(Vec3::UnitZ(), 4), ConfigError);
}

TEST_CASE("untrained density is ln 2 everywhere") {
  const RadianceField f(FieldConfig{}, 10);
  Rng rng(11);
  nn::Matrix pts(1000, 3);
  for (Eigen::Index i = 0; i < pts.rows(); ++i) pts.row(i) = random_point(rng, 0.6).transpose();
  const Vector s = f.density_batch(pts);
  for (Eigen::Index i = 0; i < s.size(); ++i) CHECK(s[i] == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(f.sigma_at(Vec3(0.1, 0.2, 0.3)) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
}

TEST_CASE("density is non-negative and color lies in (0, 1)") {
  Rng rng(14);
  const int n = 10000;
  nn::Matrix pts(n, 3), dirs(n, 3), app(n, 3);
  for (int i = 0; i < n; ++i) {
    pts.row(i) = random_point(rng, 0.6).transpose();
    dirs.row(i) = random_point(rng, 1.0).normalized().transpose();
    app.row(i) = random_point(rng, 5.0).transpose();
  }
  RadianceField f(test::tiny_field_config(), 12);
  randomize(f, 13, 1.0);
  FieldOutput out = f.forward(pts, encode_directions(dirs, 1), app);
  CHECK(out.sigma.minCoeff() >= 0.0);
  CHECK(out.rgb.minCoeff() > 0.0);
  CHECK(out.rgb.maxCoeff() < 1.0);

  // Huge weights saturate the sigmoid to exactly 0 or 1 in double precision; still in range.
  randomize(f, 13, 3.0);
  out = f.forward(pts, encode_directions(dirs, 1), app);
  CHECK(out.sigma.allFinite());
  CHECK(out.sigma.minCoeff() >= 0.0);
  CHECK(out.rgb.minCoeff() >= 0.0);
  CHECK(out.rgb.maxCoeff() <= 1.0);
}

TEST_CASE("density and color networks match the naive dense-layer oracle") {
  RadianceField f(test::tiny_field_config(), 15);
  randomize(f, 16);
  Rng rng(17);
  for (int k = 0; k < 50; ++k) {
    const Vec3 p = random_point(rng, 0.6);
    const Vec3 d = random_point(rng, 1.0).normalized();
    const Vector e = random_point(rng, 1.0);
    const Vector fpos = f.encode_position(p);
    const auto raw = naive_mlp(f.density_mlp(), std::vector<double>(fpos.data(), fpos.data() + fpos.size()));
    const auto [sigma, fsig] = f.density(fpos);
    CHECK(std::abs(sigma - oracle_act(nn::Activation::kSoftplus, raw[0])) < 1e-12);
    for (Eigen::Index i = 0; i < fsig.size(); ++i) CHECK(std::abs(fsig[i] - raw[static_cast<std::size_t>(i) + 1]) < 1e-12);

    const Vector fdir = encode_direction(d, 1);
    std::vector<double> cin(fsig.data(), fsig.data() + fsig.size());
    cin.insert(cin.end(), fdir.data(), fdir.data() + fdir.size());
    cin.insert(cin.end(), e.data(), e.data() + e.size());
    const auto rgb = naive_mlp(f.color_mlp(), cin);
    const Vec3 got = f.color(fsig, fdir, e);
    for (int c = 0; c < 3; ++c) CHECK(std::abs(got[c] - rgb[static_cast<std::size_t>(c)]) < 1e-12);

    // The batched path agrees with the single-point path.
    nn::Matrix P(1, 3), D(1, 3), E(1, 3);
    P.row(0) = p.transpose();
    D.row(0) = d.transpose();
    E.row(0) = e.transpose();
    const FieldOutput out = f.forward(P, encode_directions(D, 1), E);
    CHECK(std::abs(out.sigma[0] - sigma) < 1e-12);
    for (int c = 0; c < 3; ++c) CHECK(std::abs(out.rgb(0, c) - got[c]) < 1e-12);
  }
}

TEST_CASE("density ignores direction and appearance") {
  RadianceField f(test::tiny_field_config(), 18);
  randomize(f, 19);
  Rng rng(20);
  const int n = 200;
  nn::Matrix pts(n, 3), d1(n, 3), d2(n, 3), e1(n, 3), e2(n, 3);
  for (int i = 0; i < n; ++i) {
    pts.row(i) = random_point(rng, 0.6).transpose();
    d1.row(i) = random_point(rng, 1.0).normalized().transpose();
    d2.row(i) = random_point(rng, 1.0).normalized().transpose();
    e1.row(i) = random_point(rng, 3.0).transpose();
    e2.row(i) = random_point(rng, 3.0).transpose();
  }
  const FieldOutput a = f.forward(pts, encode_directions(d1, 1), e1);
  const FieldOutput b = f.forward(pts, encode_directions(d2, 1), e2);
  CHECK(a.sigma == b.sigma);
  CHECK(a.sigma == f.density_batch(pts));
  CHECK((a.rgb - b.rgb).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("texture perturbation touches only color weights") {
  RadianceField f(test::tiny_field_config(), 21);
  randomize(f, 22);
  CHECK(perturb_color_weights(f, 0.0, 5) == f);
  CHECK_THROWS_AS(perturb_color_weights(f, -1.0, 5), ConfigError);

  const RadianceField g = perturb_color_weights(f, 4.0, 5);
  const RadianceField h = perturb_color_weights(f, 4.0, 6);
  CHECK(g.planes() == f.planes());
  CHECK(g.density_mlp() == f.density_mlp());
  CHECK(g.appearance() == f.appearance());
  for (std::size_t l = 0; l < f.color_mlp().layers().size(); ++l) {
    CHECK(g.color_mlp().layers()[l].bias == f.color_mlp().layers()[l].bias);
    CHECK_FALSE(g.color_mlp().layers()[l].weight == f.color_mlp().layers()[l].weight);
  }
  // Noise std is the configured value.
  double sum = 0, sq = 0;
  std::size_t n = 0;
  for (std::size_t l = 0; l < f.color_mlp().layers().size(); ++l) {
    const nn::Matrix d = g.color_mlp().layers()[l].weight - f.color_mlp().layers()[l].weight;
    sum += d.sum();
    sq += d.squaredNorm();
    n += static_cast<std::size_t>(d.size());
  }
  const double mean = sum / n;
  CHECK(std::abs(mean) < 1.0);
  CHECK(std::sqrt(sq / n - mean * mean) == doctest::Approx(4.0).epsilon(0.15));

  Rng rng(23);
  const int m = 10000;
  nn::Matrix pts(m, 3);
  for (int i = 0; i < m; ++i) pts.row(i) = random_point(rng, 0.6).transpose();
  CHECK(g.density_batch(pts) == f.density_batch(pts));
  nn::Matrix dirs = nn::Matrix::Zero(m, 3);
  dirs.col(2).setOnes();
  const nn::Matrix app = nn::Matrix::Zero(m, 3);
  const auto fdirs = encode_directions(dirs, 1);
  CHECK((g.forward(pts, fdirs, app).rgb - h.forward(pts, fdirs, app).rgb).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("perturbation with std 0 renders bit-identical images") {
  RadianceField f(test::tiny_field_config(), 24);
  randomize(f, 25);
  geometry::CameraIntrinsics intr;
  intr.width = intr.height = 16;
  intr.cx = intr.cy = 8;
  intr.fx = intr.fy = 30;
  render::SamplingConfig s;
  s.n_samples = 16;
  const Vector e = f.embedding(0);
  const auto pose = test::looking_at_origin(2.5);
  CHECK(render::render_image(perturb_color_weights(f, 0.0, 3), pose, intr, e, s, 1) ==
        render::render_image(f, pose, intr, e, s, 1));
}

TEST_CASE("checkpoint round trip is bit-exact and byte-stable") {
  const auto dir = test::scratch("field_ckpt");
  RadianceField f(test::tiny_field_config(4), 26);
  randomize(f, 27);
  f.planes()[3] = 1.0 / 3.0;
  save_checkpoint(f, dir / "a.ckpt");
  const RadianceField g = load_checkpoint(dir / "a.ckpt");
  CHECK(g == f);
  CHECK(g.config() == f.config());
  save_checkpoint(g, dir / "b.ckpt");
  CHECK(test::slurp(dir / "a.ckpt") == test::slurp(dir / "b.ckpt"));

  // Truncation and foreign files are data errors.
  const std::string bytes = test::slurp(dir / "a.ckpt");
  std::ofstream(dir / "cut.ckpt", std::ios::binary) << bytes.substr(0, bytes.size() / 2);
  CHECK_THROWS_AS(load_checkpoint(dir / "cut.ckpt"), DataError);
  std::ofstream(dir / "junk.ckpt", std::ios::binary) << "not a checkpoint";
  CHECK_THROWS_AS(load_checkpoint(dir / "junk.ckpt"), DataError);
  CHECK_THROWS_AS(load_checkpoint(dir / "none.ckpt"), DataError);
}

TEST_CASE("total variation gradient matches finite differences") {
  RadianceField f(test::tiny_field_config(), 28);
  randomize(f, 29);
  FieldGradients g(f);
  g.set_zero();
  const double w = 0.7;
  total_variation(f, w, &g);
  Rng rng(30);
  for (int k = 0; k < 50; ++k) {
    const auto i = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(f.planes().size()));
    const double keep = f.planes()[i];
    const double h = 1e-5;
    f.planes()[i] = keep + h;
    const double up = total_variation(f, w, nullptr);
    f.planes()[i] = keep - h;
    const double down = total_variation(f, w, nullptr);
    f.planes()[i] = keep;
    CHECK(g.planes[i] == doctest::Approx((up - down) / (2 * h)).epsilon(1e-6));
  }
}

}  // TEST_SUITE
