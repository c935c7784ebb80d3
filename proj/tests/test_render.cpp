// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <vector>

#include "nerfaug/error.hpp"
#include "nerfaug/image.hpp"
#include "nerfaug/parallel.hpp"
#include "nerfaug/render.hpp"
#include "nerfaug/rng.hpp"
#include "support.hpp"

using namespace nerfaug;
using namespace nerfaug::render;
using geometry::Vec3;

namespace {

// sigma = value inside the axis-aligned cube |p|_inf <= half, constant color; zero elsewhere.
class BoxField : public VolumeField {
 public:
  BoxField(double half, double sigma, Vec3 color, double bound) : half_(half), sigma_(sigma), color_(color), bound_(bound) {}
  double bound() const override { return bound_; }
  int appearance_dim() const override { return 1; }
  field::FieldOutput evaluate(const Matrix& p, const Matrix&, const Matrix&) const override {
    field::FieldOutput out;
    out.sigma.resize(p.rows());
    out.rgb.resize(p.rows(), 3);
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      const bool inside = p.row(i).cwiseAbs().maxCoeff() <= half_;
      out.sigma[i] = inside ? sigma_ : 0.0;
      out.rgb.row(i) = color_.transpose();
    }
    return out;
  }

 private:
  double half_, sigma_;
  Vec3 color_;
  double bound_;
};

struct Samples {
  std::vector<double> sigma, colors, delta, t;
};

Samples random_samples(Rng& rng, int k, int channels) {
  Samples s;
  double t = uniform(rng, 0.0, 1.0);
  for (int i = 0; i < k; ++i) {
    s.sigma.push_back(uniform01(rng) < 0.2 ? 0.0 : uniform(rng, 0.0, 5.0));
    s.delta.push_back(uniform(rng, 0.01, 0.3));
    s.t.push_back(t);
    t += s.delta.back();
    for (int c = 0; c < channels; ++c) s.colors.push_back(uniform01(rng));
  }
  return s;
}

CompositeResult run(const Samples& s, int channels, double bg) {
  return composite(s.sigma, s.colors, s.delta, s.t, channels, bg);
}

geometry::CameraIntrinsics small_camera() {
  geometry::CameraIntrinsics intr;
  intr.width = intr.height = 24;
  intr.cx = intr.cy = 12;
  intr.fx = intr.fy = 40;
  return intr;
}

// Length of the ray segment inside |p|_inf <= half.
double chord(const geometry::Ray& r, double half) {
  double t0 = 0.0, t1 = 1e9;
  for (int a = 0; a < 3; ++a) {
    if (r.direction[a] == 0.0) {
      if (std::abs(r.origin[a]) > half) return 0.0;
      continue;
    }
    double ta = (-half - r.origin[a]) / r.direction[a], tb = (half - r.origin[a]) / r.direction[a];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  return std::max(0.0, t1 - t0);
}

}  // namespace

TEST_SUITE("render") {

TEST_CASE("composite: empty field shows the background") {
  const std::vector<double> sigma(5, 0.0), colors(15, 0.7), delta(5, 0.1), t{0, 0.1, 0.2, 0.3, 0.4};
  const CompositeResult r = composite(sigma, colors, delta, t, 3, 0.25);
  for (int c = 0; c < 3; ++c) CHECK(r.color[c] == 0.25);
  CHECK(r.alpha == 0.0);
}

TEST_CASE("composite: one sample with sigma delta = ln 2 is half opaque") {
  const std::vector<double> sigma{1.0}, colors{1.0}, delta{std::log(2.0)}, t{1.0};
  const CompositeResult r = composite(sigma, colors, delta, t, 1, 0.0);
  CHECK(r.alpha == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(r.color[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(r.depth == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("composite: piecewise-constant density matches 100x fine quadrature") {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const Samples coarse = random_samples(rng, 2 + trial % 30, 3);
    Samples fine;
    for (std::size_t k = 0; k < coarse.sigma.size(); ++k) {
      for (int j = 0; j < 100; ++j) {
        fine.sigma.push_back(coarse.sigma[k]);
        fine.delta.push_back(coarse.delta[k] / 100.0);
        fine.t.push_back(coarse.t[k] + j * coarse.delta[k] / 100.0);
        for (int c = 0; c < 3; ++c) fine.colors.push_back(coarse.colors[k * 3 + c]);
      }
    }
    const double bg = uniform01(rng);
    const CompositeResult a = run(coarse, 3, bg), b = run(fine, 3, bg);
    for (int c = 0; c < 3; ++c) CHECK(std::abs(a.color[c] - b.color[c]) < 1e-6);
    CHECK(std::abs(a.alpha - b.alpha) < 1e-6);
  }
}

TEST_CASE("composite: convex combination, monotone alpha, zero-density insertion") {
  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    Samples s = random_samples(rng, 1 + trial % 20, 3);
    const double bg = uniform01(rng);
    const CompositeResult r = run(s, 3, bg);
    for (int c = 0; c < 3; ++c) {
      double lo = bg, hi = bg;
      for (std::size_t k = 0; k < s.sigma.size(); ++k) {
        lo = std::min(lo, s.colors[k * 3 + c]);
        hi = std::max(hi, s.colors[k * 3 + c]);
      }
      CHECK(r.color[c] >= lo - 1e-12);
      CHECK(r.color[c] <= hi + 1e-12);
    }
    CHECK(r.alpha >= 0.0);
    CHECK(r.alpha <= 1.0);

    // Raising one sigma never lowers alpha.
    Samples up = s;
    const auto k = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(s.sigma.size()));
    up.sigma[k] += uniform(rng, 0.0, 2.0);
    CHECK(run(up, 3, bg).alpha >= r.alpha);

    // A zero-density sample anywhere changes nothing.
    Samples ins = s;
    const auto at = static_cast<std::ptrdiff_t>(uniform01(rng) * static_cast<double>(s.sigma.size() + 1));
    ins.sigma.insert(ins.sigma.begin() + at, 0.0);
    ins.delta.insert(ins.delta.begin() + at, 0.5);
    ins.t.insert(ins.t.begin() + at, 0.0);
    ins.colors.insert(ins.colors.begin() + at * 3, {0.9, 0.1, 0.5});
    const CompositeResult r2 = run(ins, 3, bg);
    for (int c = 0; c < 3; ++c) CHECK(std::abs(r2.color[c] - r.color[c]) < 1e-12);
    CHECK(std::abs(r2.alpha - r.alpha) < 1e-12);
  }
}

TEST_CASE("composite_backward matches finite differences") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    Samples s = random_samples(rng, 8, 3);
    const double bg = uniform01(rng);
    const std::vector<double> dc{uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1)};
    std::vector<double> dsig(s.sigma.size()), dcol(s.colors.size());
    composite_backward(s.sigma, s.colors, s.delta, 3, bg, dc, dsig, dcol);
    auto objective = [&](const Samples& x) {
      const CompositeResult r = run(x, 3, bg);
      return dc[0] * r.color[0] + dc[1] * r.color[1] + dc[2] * r.color[2];
    };
    const double h = 1e-6;
    for (std::size_t k = 0; k < s.sigma.size(); ++k) {
      Samples p = s, m = s;
      p.sigma[k] += h;
      m.sigma[k] = std::max(0.0, m.sigma[k] - h);
      CHECK(dsig[k] == doctest::Approx((objective(p) - objective(m)) / (p.sigma[k] - m.sigma[k])).epsilon(1e-5).scale(1.0));
    }
    for (std::size_t i = 0; i < s.colors.size(); ++i) {
      Samples p = s, m = s;
      p.colors[i] += h;
      m.colors[i] -= h;
      CHECK(dcol[i] == doctest::Approx((objective(p) - objective(m)) / (2 * h)).epsilon(1e-6).scale(1.0));
    }
  }
}

TEST_CASE("clip_to_box") {
  geometry::Ray r{Vec3(0, 0, -5), Vec3::UnitZ(), 0.0, 100.0};
  double t0 = 0, t1 = 0;
  REQUIRE(clip_to_box(r, 0.5, t0, t1));
  CHECK(t0 == doctest::Approx(4.5));
  CHECK(t1 == doctest::Approx(5.5));
  r.t_far = 4.8;
  REQUIRE(clip_to_box(r, 0.5, t0, t1));
  CHECK(t1 == doctest::Approx(4.8));
  geometry::Ray miss{Vec3(2, 0, -5), Vec3::UnitZ(), 0.0, 100.0};
  CHECK_FALSE(clip_to_box(miss, 0.5, t0, t1));
}

TEST_CASE("build_samples: bins, jitter and deltas") {
  const std::vector<geometry::Ray> rays{{Vec3(0, 0, -5), Vec3::UnitZ(), 0.0, 100.0},
                                        {Vec3(3, 0, -5), Vec3::UnitZ(), 0.0, 100.0}};
  const Matrix app = Matrix::Constant(2, 2, 0.5);
  const std::vector<std::uint64_t> seeds{11, 12};
  SamplingConfig s;
  s.n_samples = 8;
  s.stratified = false;
  const SampleBatch centers = build_samples(rays, app, 0.5, s, seeds);
  REQUIRE(centers.begin == std::vector<std::size_t>{0, 8, 8});
  for (int k = 0; k < 8; ++k) {
    CHECK(centers.t[static_cast<std::size_t>(k)] == doctest::Approx(4.5 + (k + 0.5) / 8.0));
    CHECK(centers.delta[static_cast<std::size_t>(k)] == doctest::Approx(k < 7 ? 1.0 / 8.0 : 0.5 / 8.0));
  }
  s.stratified = true;
  const SampleBatch jit = build_samples(rays, app, 0.5, s, seeds);
  double last_end = 0.0;
  for (int k = 0; k < 8; ++k) {
    const double t = jit.t[static_cast<std::size_t>(k)];
    CHECK(t >= 4.5 + k / 8.0);
    CHECK(t < 4.5 + (k + 1) / 8.0);
    CHECK(jit.delta[static_cast<std::size_t>(k)] > 0.0);
    last_end = t + jit.delta[static_cast<std::size_t>(k)];
  }
  CHECK(last_end == doctest::Approx(5.5));
  CHECK(build_samples(rays, app, 0.5, s, seeds).t == jit.t);
}

TEST_CASE("sampling config validation") {
  SamplingConfig s;
  CHECK_NOTHROW(s.validate());
  s.n_samples = 1;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = SamplingConfig{};
  s.t_near = 5.0;
  s.t_far = 5.0;
  CHECK_THROWS_AS(s.validate(), ConfigError);
}

TEST_CASE("render_image: zero density gives a uniform background") {
  const BoxField empty(0.5, 0.0, Vec3(1, 0, 0), 0.6);
  SamplingConfig s;
  s.background = 0.3;
  const ImageBuffer img = render_image(empty, test::looking_at_origin(3.0), small_camera(), Vector::Zero(1), s, 4);
  for (double v : img.values) CHECK(v == 0.3);
  for (double a : img.alpha) CHECK(a == 0.0);
}

TEST_CASE("render_image: opaque box shows its color") {
  const Vec3 c(0.2, 0.6, 0.9);
  const BoxField box(0.5, 1e3, c, 0.6);
  const auto intr = small_camera();
  geometry::Pose pose = test::looking_at_origin(3.0);
  pose.rotation = geometry::UnitQuaternion::from_axis_angle(Vec3(1, 1, 0).normalized(), 0.4);
  SamplingConfig s;
  s.n_samples = 64;
  const ImageBuffer img = render_image(box, pose, intr, Vector::Zero(1), s, 5);
  const auto rays = geometry::generate_rays(pose, intr, s.t_near, s.t_far);
  int covered = 0;
  for (std::size_t i = 0; i < rays.size(); ++i) {
    const double len = chord(rays[i], 0.5);
    if (len == 0.0) {
      CHECK(img.alpha[i] == 0.0);
    } else if (len > 0.1) {
      ++covered;
      CHECK(img.alpha[i] > 0.999);
      for (int ch = 0; ch < 3; ++ch) CHECK(std::abs(img.values[i * 3 + ch] - c[ch]) < 1e-3);
    }
  }
  CHECK(covered > 50);
}

TEST_CASE("render_image: bit-identical for any worker count") {
  field::RadianceField f(test::tiny_field_config(), 6);
  Rng rng(7);
  for (auto& t : f.tensors()) {
    for (double& v : t.values) v = uniform(rng, -0.5, 0.5);
  }
  SamplingConfig s;
  s.n_samples = 24;
  const auto pose = test::looking_at_origin(2.0);
  const auto intr = small_camera();
  setenv("NERFAUG_THREADS", "1", 1);
  const ImageBuffer one = render_image(f, pose, intr, f.embedding(1), s, 99);
  setenv("NERFAUG_THREADS", "5", 1);
  const ImageBuffer five = render_image(f, pose, intr, f.embedding(1), s, 99);
  unsetenv("NERFAUG_THREADS");
  CHECK(one == five);
  CHECK_FALSE(render_image(f, pose, intr, f.embedding(1), s, 100) == one);
  CHECK_THROWS_AS(render_image(f, pose, intr, Vector::Zero(2), s, 1), ConfigError);
}

TEST_CASE("grayscale conversion") {
  ImageBuffer rgb(2, 1, 3);
  rgb.values = {1.0, 0.0, 0.0, 0.4, 0.4, 0.4};
  const ImageBuffer g = to_grayscale(rgb);
  REQUIRE(g.channels == 1);
  CHECK(g.values[0] == doctest::Approx(0.299).epsilon(1e-15));
  CHECK(g.values[1] == doctest::Approx(0.4).epsilon(1e-15));
  const ImageBuffer again = to_grayscale(gray_to_rgb(g));
  for (std::size_t i = 0; i < g.values.size(); ++i) CHECK(std::abs(again.values[i] - g.values[i]) < 1e-12);
}

TEST_CASE("image clamp rejects non-finite values") {
  ImageBuffer img(2, 1, 1);
  img.values = {-0.5, 1.5};
  img.clamp01();
  CHECK(img.values == std::vector<double>{0.0, 1.0});
  img.values[0] = NAN;
  CHECK_THROWS_AS(img.clamp01(), NumericalError);
}

}  // TEST_SUITE
