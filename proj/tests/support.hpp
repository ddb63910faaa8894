// SPDX-License-Identifier: Apache-2.0
//
// Fixtures shared by the test binaries.
#pragma once

#include <random>
#include <vector>

#include "hera/hierarchy.hpp"
#include "hera/optim.hpp"

namespace hera::testing {

/// 2 coarse activities with 2 fine children each; labels A=0, B=1 coarse
/// and a..d = 0..3 fine.
inline ActivityHierarchy toy_hierarchy(std::size_t total_frames = 100) {
  ActivityHierarchy h;
  h.total_frames = total_frames;
  h.levels.resize(2);
  h.levels[kCoarse].segments = {{0, 0.4}, {1, 0.6}};
  h.levels[kFine].segments = {{0, 0.25}, {1, 0.75}, {2, 0.5}, {3, 0.5}};
  h.levels[kFine].parent_index = {0, 0, 1, 1};
  return h;
}

/// Positive weights normalized to sum to one.
inline std::vector<double> random_simplex(std::mt19937_64& rng, std::size_t n) {
  std::vector<double> w(n);
  double total = 0.0;
  for (double& x : w) {
    x = 0.05 + unit_uniform(rng);
    total += x;
  }
  for (double& x : w) x /= total;
  return w;
}

/// Valid two-level hierarchy with 1..max_coarse activities of 1..max_fine
/// children. Consecutive labels may repeat.
inline ActivityHierarchy random_hierarchy(std::mt19937_64& rng, std::size_t n_coarse_classes = 5,
                                          std::size_t n_fine_classes = 8, std::size_t max_coarse = 5,
                                          std::size_t max_fine = 4) {
  auto below = [&](std::size_t m) { return static_cast<std::size_t>(unit_uniform(rng) * static_cast<double>(m)); };
  ActivityHierarchy h;
  h.total_frames = 50 + below(2000);
  h.task_id = below(3);
  h.levels.resize(2);
  const std::size_t nc = 1 + below(max_coarse);
  const auto dc = random_simplex(rng, nc);
  for (std::size_t i = 0; i < nc; ++i) {
    h.levels[kCoarse].segments.push_back({below(n_coarse_classes), dc[i]});
    const std::size_t nf = 1 + below(max_fine);
    const auto df = random_simplex(rng, nf);
    for (std::size_t j = 0; j < nf; ++j) {
      h.levels[kFine].segments.push_back({below(n_fine_classes), df[j]});
      h.levels[kFine].parent_index.push_back(i);
    }
  }
  return h;
}

}  // namespace hera::testing
