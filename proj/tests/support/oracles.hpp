#pragma once

// Independent reference computations used by the unit and acceptance suites.
// Nothing here calls into the code path it checks.

#include <cmath>
#include <cstddef>
#include <numbers>
#include <random>
#include <vector>

#include "propeval/geometry.hpp"

namespace propeval::oracle {

// IoU of integer-coordinate boxes by counting unit pixel cells.
inline double pixel_count_iou(const BoundingBox& a, const BoundingBox& b, int extent = 100) {
  long inter = 0;
  long uni = 0;
  for (int y = 0; y < extent; ++y) {
    for (int x = 0; x < extent; ++x) {
      const double cx = x + 0.5;
      const double cy = y + 0.5;
      const bool in_a = cx > a.x0() && cx < a.x1() && cy > a.y0() && cy < a.y1();
      const bool in_b = cx > b.x0() && cx < b.x1() && cy > b.y0() && cy < b.y1();
      inter += in_a && in_b;
      uni += in_a || in_b;
    }
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

// Repeatedly extract the global-maximum-IoU pair (ties: smaller a, then
// smaller b) and remove both members.
inline std::vector<Match> extract_max_matching(const std::vector<std::vector<double>>& iou_table) {
  std::vector<Match> out;
  const std::size_t na = iou_table.size();
  const std::size_t nb = na ? iou_table[0].size() : 0;
  std::vector<bool> used_a(na, false), used_b(nb, false);
  for (;;) {
    double best = 0.0;
    std::size_t bi = 0, bj = 0;
    bool found = false;
    for (std::size_t i = 0; i < na; ++i) {
      if (used_a[i]) continue;
      for (std::size_t j = 0; j < nb; ++j) {
        if (used_b[j]) continue;
        if (iou_table[i][j] > best) {
          best = iou_table[i][j];
          bi = i;
          bj = j;
          found = true;
        }
      }
    }
    if (!found) break;
    used_a[bi] = used_b[bj] = true;
    out.push_back({bi, bj, best});
  }
  return out;
}

// Monte-Carlo IoU of two regions given by point-membership predicates over a
// sampling window.
template <typename InA, typename InB>
double monte_carlo_iou(InA&& in_a, InB&& in_b, double x0, double y0, double x1, double y1, std::size_t samples,
                       std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(x0, x1), uy(y0, y1);
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < samples; ++i) {
    const double x = ux(rng), y = uy(rng);
    const bool a = in_a(x, y), b = in_b(x, y);
    inter += a && b;
    uni += a || b;
  }
  return uni ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

inline BoundingBox random_int_box(std::mt19937_64& rng, int extent) {
  std::uniform_int_distribution<int> d(0, extent);
  int x0 = d(rng), x1 = d(rng), y0 = d(rng), y1 = d(rng);
  if (x1 < x0) std::swap(x0, x1);
  if (y1 < y0) std::swap(y0, y1);
  return {double(x0), double(y0), double(x1), double(y1)};
}

// Positive-area random box with real coordinates inside [0, extent]^2.
inline BoundingBox random_box(std::mt19937_64& rng, double extent) {
  std::uniform_real_distribution<double> d(0.0, extent);
  double x0 = d(rng), x1 = d(rng), y0 = d(rng), y1 = d(rng);
  if (x1 < x0) std::swap(x0, x1);
  if (y1 < y0) std::swap(y0, y1);
  return {x0, y0, x1 + 1e-3, y1 + 1e-3};
}

}  // namespace propeval::oracle
