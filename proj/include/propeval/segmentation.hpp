#pragma once

// Graph-based image segmentation (Felzenszwalb & Huttenlocher, IJCV 2004).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <utility>
#include <vector>

#include "propeval/errors.hpp"
#include "propeval/image.hpp"

namespace propeval {

struct SegParams {
  double sigma = 0.8;         // pre-smoothing, px
  double k = 300.0;           // merge constant
  int min_size = 20;          // px

  void validate() const {
    if (!(sigma >= 0.0) || !(k > 0.0) || min_size < 1) throw InvalidArgument("invalid segmentation parameters");
  }
};

inline std::vector<SegParams> default_superpixel_params() {
  return {{0.8, 100.0, 20}, {0.8, 200.0, 20}, {0.8, 300.0, 20}, {0.8, 400.0, 20}};
}

struct LabelMap {
  int width = 0;
  int height = 0;
  int count = 0;             // number of components
  std::vector<int> labels;   // row-major, values in [0, count)

  int at(int x, int y) const { return labels[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)]; }
};

// Union-find with per-component size and internal difference.
class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n), rank_(n, 0), size_(n, 1) {
    std::iota(parent_.begin(), parent_.end(), std::size_t{0});
  }

  std::size_t find(std::size_t x) {
    std::size_t root = x;
    while (parent_[root] != root) root = parent_[root];
    while (parent_[x] != root) x = std::exchange(parent_[x], root);
    return root;
  }

  // Returns the new root.
  std::size_t join(std::size_t a, std::size_t b) {
    if (rank_[a] < rank_[b]) std::swap(a, b);
    parent_[b] = a;
    size_[a] += size_[b];
    if (rank_[a] == rank_[b]) ++rank_[a];
    return a;
  }

  std::size_t size(std::size_t root) const { return size_[root]; }

 private:
  std::vector<std::size_t> parent_;
  std::vector<int> rank_;
  std::vector<std::size_t> size_;
};

namespace detail {

// Separable Gaussian smoothing of one float plane, replicate borders,
// kernel half-width ceil(4 sigma) as in the reference segmenter.
inline std::vector<float> smooth_plane(const std::vector<float>& src, int w, int h, double sigma) {
  if (sigma <= 0.0) return src;
  const int radius = static_cast<int>(std::ceil(4.0 * sigma));
  std::vector<double> kernel(static_cast<std::size_t>(radius) + 1);
  for (int i = 0; i <= radius; ++i) kernel[i] = std::exp(-0.5 * (i / sigma) * (i / sigma));
  double sum = kernel[0];
  for (int i = 1; i <= radius; ++i) sum += 2.0 * kernel[i];
  for (double& v : kernel) v /= sum;

  std::vector<float> tmp(src.size());
  std::vector<float> out(src.size());
  for (int y = 0; y < h; ++y) {
    const float* row = src.data() + static_cast<std::size_t>(y) * w;
    for (int x = 0; x < w; ++x) {
      double acc = kernel[0] * row[x];
      for (int i = 1; i <= radius; ++i) {
        acc += kernel[i] * (row[std::max(x - i, 0)] + row[std::min(x + i, w - 1)]);
      }
      tmp[static_cast<std::size_t>(y) * w + x] = static_cast<float>(acc);
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = kernel[0] * tmp[static_cast<std::size_t>(y) * w + x];
      for (int i = 1; i <= radius; ++i) {
        acc += kernel[i] * (tmp[static_cast<std::size_t>(std::max(y - i, 0)) * w + x] +
                            tmp[static_cast<std::size_t>(std::min(y + i, h - 1)) * w + x]);
      }
      out[static_cast<std::size_t>(y) * w + x] = static_cast<float>(acc);
    }
  }
  return out;
}

struct GraphEdge {
  float weight;
  std::uint32_t a;
  std::uint32_t b;
};

}  // namespace detail

inline LabelMap segment_graph(const Image& image, const SegParams& params) {
  params.validate();
  if (image.empty()) throw InvalidArgument("segmentation of an empty image");
  const int w = image.width();
  const int h = image.height();
  const std::size_t n = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);

  std::array<std::vector<float>, 3> planes;
  for (int c = 0; c < 3; ++c) {
    std::vector<float> plane(n);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) plane[static_cast<std::size_t>(y) * w + x] = image.at(x, y, c);
    }
    planes[c] = detail::smooth_plane(plane, w, h, params.sigma);
  }
  auto diff = [&](std::size_t p, std::size_t q) {
    const float dr = planes[0][p] - planes[0][q];
    const float dg = planes[1][p] - planes[1][q];
    const float db = planes[2][p] - planes[2][q];
    return std::sqrt(dr * dr + dg * dg + db * db);
  };

  // 8-connectivity: right, down, down-right, up-right.
  std::vector<detail::GraphEdge> edges;
  edges.reserve(n * 4);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * w + x;
      auto add = [&](int qx, int qy) {
        const std::size_t q = static_cast<std::size_t>(qy) * w + qx;
        edges.push_back({diff(p, q), static_cast<std::uint32_t>(p), static_cast<std::uint32_t>(q)});
      };
      if (x < w - 1) add(x + 1, y);
      if (y < h - 1) add(x, y + 1);
      if (x < w - 1 && y < h - 1) add(x + 1, y + 1);
      if (x < w - 1 && y > 0) add(x + 1, y - 1);
    }
  }
  // Stable order keeps equal-weight edges in generation order.
  std::stable_sort(edges.begin(), edges.end(),
                   [](const detail::GraphEdge& l, const detail::GraphEdge& r) { return l.weight < r.weight; });

  DisjointSets sets(n);
  std::vector<double> threshold(n, params.k);
  for (const auto& e : edges) {
    std::size_t a = sets.find(e.a);
    std::size_t b = sets.find(e.b);
    if (a == b) continue;
    if (e.weight <= threshold[a] && e.weight <= threshold[b]) {
      const std::size_t root = sets.join(a, b);
      threshold[root] = e.weight + params.k / static_cast<double>(sets.size(root));
    }
  }
  // Undersized components merge across their lightest boundary edge.
  const auto min_size = static_cast<std::size_t>(params.min_size);
  for (const auto& e : edges) {
    const std::size_t a = sets.find(e.a);
    const std::size_t b = sets.find(e.b);
    if (a != b && (sets.size(a) < min_size || sets.size(b) < min_size)) sets.join(a, b);
  }

  LabelMap map{w, h, 0, std::vector<int>(n, -1)};
  std::vector<int> root_label(n, -1);
  for (std::size_t p = 0; p < n; ++p) {
    const std::size_t r = sets.find(p);
    if (root_label[r] < 0) root_label[r] = map.count++;
    map.labels[p] = root_label[r];
  }
  return map;
}

}  // namespace propeval
