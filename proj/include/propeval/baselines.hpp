#pragma once

// Content-agnostic and low-level baseline proposal generators.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "propeval/data_io.hpp"
#include "propeval/errors.hpp"
#include "propeval/geometry.hpp"
#include "propeval/image.hpp"
#include "propeval/segmentation.hpp"

namespace propeval {

// (center x, center y, sqrt area, log aspect) with aspect = width / height.
using BoxParams = std::array<double, 4>;

struct ParamRange {
  double lo = 0.0;
  double hi = 0.0;
};

struct BoxParamStats {
  std::array<ParamRange, 4> range;
  Eigen::Vector4d mean = Eigen::Vector4d::Zero();
  Eigen::Matrix4d covariance = Eigen::Matrix4d::Zero();
  // When set, cx/cy/sqrt-area are fractions of width/height/sqrt(W*H).
  bool normalized = false;
};

inline BoxParams box_params(const BoundingBox& b) {
  const Point c = b.center();
  return {c.x, c.y, b.sqrt_area(), b.log_aspect()};
}

// Box from parameters, centre clamped into the image, sqrt-area floored at
// 1 px, then clipped to the image. Never degenerate for a non-empty image.
inline BoundingBox box_from_params(const BoxParams& p, double image_width, double image_height) {
  const double cx = std::clamp(p[0], 0.0, image_width);
  const double cy = std::clamp(p[1], 0.0, image_height);
  const double root_area = std::max(p[2], 1.0);
  const double half_log = 0.5 * p[3];
  const double w = root_area * std::exp(half_log);
  const double h = root_area * std::exp(-half_log);
  return BoundingBox(cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h).clipped(image_width, image_height);
}

// Ranges after dropping floor(trim*N) values from each end of every
// parameter; mean and covariance (N-1 normalization) on the untrimmed data.
inline BoxParamStats estimate_box_stats(const GroundTruthSet& gt, double trim = 0.005, bool normalize = false) {
  if (!(trim >= 0.0 && trim < 0.5)) throw InvalidArgument("trim fraction must lie in [0, 0.5)");
  std::vector<BoxParams> samples;
  for (const auto& img : gt.images()) {
    const double rw = normalize ? img.width : 1.0;
    const double rh = normalize ? img.height : 1.0;
    const double ra = normalize ? std::sqrt(static_cast<double>(img.width) * img.height) : 1.0;
    for (const auto& a : img.objects) {
      if (!(a.box.width() > 0.0 && a.box.height() > 0.0)) continue;
      BoxParams p = box_params(a.box);
      samples.push_back({p[0] / rw, p[1] / rh, p[2] / ra, p[3]});
    }
  }
  if (samples.size() < 10) {
    throw InvalidArgument("box statistics need at least 10 annotations with positive area, got " +
                          std::to_string(samples.size()));
  }
  BoxParamStats stats;
  stats.normalized = normalize;
  const std::size_t n = samples.size();
  const auto drop = static_cast<std::size_t>(std::floor(trim * static_cast<double>(n)));
  std::vector<double> column(n);
  for (std::size_t d = 0; d < 4; ++d) {
    for (std::size_t i = 0; i < n; ++i) column[i] = samples[i][d];
    std::sort(column.begin(), column.end());
    stats.range[d] = {column[drop], column[n - 1 - drop]};
  }
  Eigen::Vector4d mean = Eigen::Vector4d::Zero();
  for (const auto& s : samples) mean += Eigen::Vector4d(s[0], s[1], s[2], s[3]);
  mean /= static_cast<double>(n);
  Eigen::Matrix4d cov = Eigen::Matrix4d::Zero();
  for (const auto& s : samples) {
    const Eigen::Vector4d d = Eigen::Vector4d(s[0], s[1], s[2], s[3]) - mean;
    cov += d * d.transpose();
  }
  cov /= static_cast<double>(n - 1);
  stats.mean = mean;
  stats.covariance = 0.5 * (cov + cov.transpose());
  return stats;
}

// Deterministic per-image generator seed derived from a run seed and an id.
inline std::uint64_t image_seed(std::uint64_t seed, std::string_view image_id) {
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
  for (unsigned char c : image_id) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
  std::array<std::uint32_t, 2> words{};
  seq.generate(words.begin(), words.end());
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

namespace detail {

inline BoxParams denormalize(const BoxParams& p, const BoxParamStats& stats, int width, int height) {
  if (!stats.normalized) return p;
  return {p[0] * width, p[1] * height, p[2] * std::sqrt(static_cast<double>(width) * height), p[3]};
}

}  // namespace detail

// Raw parameter draws, independently uniform over each trimmed range, before
// denormalization and box conversion.
inline std::vector<BoxParams> draw_uniform_params(const BoxParamStats& stats, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<BoxParams> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    BoxParams p{};
    for (std::size_t d = 0; d < 4; ++d) {
      const auto& r = stats.range[d];
      p[d] = r.lo == r.hi ? r.lo : std::uniform_real_distribution<double>(r.lo, r.hi)(rng);
    }
    out.push_back(p);
  }
  return out;
}

// Symmetric square root of a PSD matrix; negative eigenvalues clamp to 0.
inline Eigen::Matrix4d psd_sqrt(const Eigen::Matrix4d& cov) {
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> eig(0.5 * (cov + cov.transpose()));
  const Eigen::Vector4d roots = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * roots.asDiagonal() * eig.eigenvectors().transpose();
}

inline std::vector<BoxParams> draw_gaussian_params(const BoxParamStats& stats, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const Eigen::Matrix4d root = psd_sqrt(stats.covariance);
  std::vector<BoxParams> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Eigen::Vector4d z;
    for (int d = 0; d < 4; ++d) z[d] = normal(rng);
    const Eigen::Vector4d x = stats.mean + root * z;
    out.push_back({x[0], x[1], x[2], x[3]});
  }
  return out;
}

inline ImageProposals params_to_proposals(const std::vector<BoxParams>& params, const BoxParamStats& stats,
                                          std::string image_id, int width, int height) {
  ImageProposals img{std::move(image_id), width, height, {}};
  img.boxes.reserve(params.size());
  for (const auto& p : params) img.boxes.push_back(box_from_params(detail::denormalize(p, stats, width, height), width, height));
  return img;
}

inline ImageProposals sample_uniform(const BoxParamStats& stats, std::string image_id, int width, int height,
                                     std::size_t n, std::uint64_t seed) {
  return params_to_proposals(draw_uniform_params(stats, n, seed), stats, std::move(image_id), width, height);
}

inline ImageProposals sample_gaussian(const BoxParamStats& stats, std::string image_id, int width, int height,
                                      std::size_t n, std::uint64_t seed) {
  return params_to_proposals(draw_gaussian_params(stats, n, seed), stats, std::move(image_id), width, height);
}

// Window sizes {16, 32, ..., 512}^2 that fit the image, largest area first.
inline std::vector<std::pair<int, int>> sliding_window_sizes(int width, int height) {
  std::vector<std::pair<int, int>> sizes;
  for (int w = 16; w <= 512; w *= 2) {
    for (int h = 16; h <= 512; h *= 2) {
      if (w <= width && h <= height) sizes.emplace_back(w, h);
    }
  }
  std::stable_sort(sizes.begin(), sizes.end(), [](const auto& a, const auto& b) {
    return std::tuple(a.first * a.second, a.first) > std::tuple(b.first * b.second, b.first);
  });
  return sizes;
}

// Regular grid of windows over a coarse power-of-two size set. The budget is
// split evenly over sizes (the first n mod |sizes| sizes take one extra); each
// size places ceil(sqrt(m W/H)) x ceil(sqrt(m H/W)) windows spanning all valid
// offsets, row-major, truncated to its share m.
inline ImageProposals sliding_window(std::string image_id, int width, int height, std::size_t n) {
  ImageProposals img{std::move(image_id), width, height, {}};
  const auto sizes = sliding_window_sizes(width, height);
  if (sizes.empty() || n == 0) return img;
  const std::size_t per = n / sizes.size();
  const std::size_t extra = n % sizes.size();
  const double W = width;
  const double H = height;
  for (std::size_t s = 0; s < sizes.size(); ++s) {
    const std::size_t budget = per + (s < extra ? 1 : 0);
    if (budget == 0) continue;
    const auto [ww, wh] = sizes[s];
    const auto cols = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(budget) * W / H)));
    const auto rows = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(budget) * H / W)));
    const double span_x = W - ww;
    const double span_y = H - wh;
    auto offset = [](double span, std::size_t i, std::size_t count) {
      return count <= 1 ? 0.5 * span : span * static_cast<double>(i) / static_cast<double>(count - 1);
    };
    std::size_t emitted = 0;
    for (std::size_t r = 0; r < rows && emitted < budget; ++r) {
      const double y0 = offset(span_y, r, rows);
      for (std::size_t c = 0; c < cols && emitted < budget; ++c) {
        const double x0 = offset(span_x, c, cols);
        img.boxes.emplace_back(x0, y0, x0 + ww, y0 + wh);
        ++emitted;
      }
    }
  }
  return img;
}

// Tight bounding boxes (pixel cells) of every segment, per setting in order,
// segments in raster order of their first pixel, identical boxes dropped.
inline ImageProposals superpixel_proposals(const Image& image, std::string image_id,
                                           const std::vector<SegParams>& settings) {
  if (settings.empty()) throw InvalidArgument("superpixel proposals need at least one segmentation setting");
  ImageProposals img{std::move(image_id), image.width(), image.height(), {}};
  std::set<std::array<int, 4>> seen;
  for (const auto& params : settings) {
    const LabelMap map = segment_graph(image, params);
    std::vector<std::array<int, 4>> extent(static_cast<std::size_t>(map.count),
                                           {map.width, map.height, -1, -1});
    for (int y = 0; y < map.height; ++y) {
      for (int x = 0; x < map.width; ++x) {
        auto& e = extent[static_cast<std::size_t>(map.at(x, y))];
        e[0] = std::min(e[0], x);
        e[1] = std::min(e[1], y);
        e[2] = std::max(e[2], x + 1);
        e[3] = std::max(e[3], y + 1);
      }
    }
    for (const auto& e : extent) {
      if (seen.insert(e).second) img.boxes.emplace_back(e[0], e[1], e[2], e[3]);
    }
  }
  return img;
}

}  // namespace propeval
