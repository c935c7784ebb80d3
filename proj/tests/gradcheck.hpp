// SPDX-License-Identifier: Apache-2.0
//
// Central finite-difference check of train::backward, shared by the unit
// tests and the acceptance run.
#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "nerfaug/rng.hpp"
#include "nerfaug/trainer.hpp"

namespace test {

// Rays from a sphere of radius 2 aimed at random points inside the box, with
// embeddings assigned round-robin over `embeddings`.
inline std::vector<nerfaug::train::TrainRay> random_rays(int n, int embeddings, double bound, std::uint64_t seed) {
  using nerfaug::geometry::Vec3;
  nerfaug::Rng rng(seed);
  std::vector<nerfaug::train::TrainRay> rays(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    auto& r = rays[static_cast<std::size_t>(i)];
    Vec3 o(nerfaug::uniform(rng, -1, 1), nerfaug::uniform(rng, -1, 1), nerfaug::uniform(rng, -1, 1));
    o = 2.0 * o.normalized();
    const Vec3 aim(nerfaug::uniform(rng, -bound, bound), nerfaug::uniform(rng, -bound, bound),
                   nerfaug::uniform(rng, -bound, bound));
    r.ray.origin = o;
    r.ray.direction = (0.8 * aim - o).normalized();
    r.ray.t_near = 0.0;
    r.ray.t_far = 10.0;
    r.embedding = i % embeddings;
    const double g = nerfaug::uniform01(rng);
    r.target = {g, g, g};
    r.seed = rng();
  }
  return rays;
}

struct BlockCheck {
  std::string block;
  int checked = 0;
  double worst_relative = 0.0;
};

// Relative error |g - fd| / max(|g|, |fd|, floor); the floor keeps roundoff
// in the loss difference from dominating entries whose gradient is ~0.
inline std::vector<BlockCheck> check_gradients(nerfaug::field::RadianceField& field,
                                               const std::vector<nerfaug::train::TrainRay>& rays,
                                               const nerfaug::render::SamplingConfig& sampling, double tv_weight,
                                               int per_block, std::uint64_t seed, double h = 1e-4,
                                               double floor = 1e-7) {
  nerfaug::field::FieldGradients grads(field);
  nerfaug::train::backward(field, rays, sampling, tv_weight, grads);
  auto params = field.tensors();
  auto gtens = grads.tensors();
  // Candidate (tensor, index) pairs per block, preferring entries the batch actually touches.
  std::map<std::string, std::vector<std::pair<std::size_t, std::size_t>>> touched, all;
  for (std::size_t t = 0; t < params.size(); ++t) {
    for (std::size_t i = 0; i < params[t].values.size(); ++i) {
      all[params[t].block].push_back({t, i});
      if (gtens[t].values[i] != 0.0) touched[params[t].block].push_back({t, i});
    }
  }
  nerfaug::Rng rng(seed);
  std::vector<BlockCheck> out;
  for (auto& [block, cand] : all) {
    auto& pool = touched[block].size() >= static_cast<std::size_t>(per_block) ? touched[block] : cand;
    std::shuffle(pool.begin(), pool.end(), rng);
    BlockCheck bc{block, 0, 0.0};
    for (int k = 0; k < per_block && k < static_cast<int>(pool.size()); ++k) {
      const auto [t, i] = pool[static_cast<std::size_t>(k)];
      double& p = params[t].values[i];
      const double keep = p;
      p = keep + h;
      const double up = nerfaug::train::batch_loss(field, rays, sampling, tv_weight);
      p = keep - h;
      const double down = nerfaug::train::batch_loss(field, rays, sampling, tv_weight);
      p = keep;
      const double fd = (up - down) / (2 * h);
      const double g = gtens[t].values[i];
      const double rel = std::abs(g - fd) / std::max({std::abs(g), std::abs(fd), floor});
      bc.worst_relative = std::max(bc.worst_relative, rel);
      ++bc.checked;
    }
    out.push_back(bc);
  }
  return out;
}

}  // namespace test
