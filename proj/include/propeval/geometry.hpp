#pragma once

// Box and convex-polygon geometry: IoU, greedy one-to-one matching,
// recall-vs-IoU curves and size binning.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <type_traits>
#include <sstream>
#include <variant>
#include <vector>

#include "propeval/errors.hpp"

namespace propeval {

struct Point {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point&, const Point&) = default;
};

// Axis-aligned rectangle in continuous pixel coordinates. Width is x1 - x0;
// there is no +1 pixel-index convention.
class BoundingBox {
 public:
  BoundingBox() = default;

  BoundingBox(double x0, double y0, double x1, double y1, std::optional<double> score = std::nullopt)
      : x0_(x0), y0_(y0), x1_(x1), y1_(y1), score_(score) {
    if (!(std::isfinite(x0) && std::isfinite(y0) && std::isfinite(x1) && std::isfinite(y1))) {
      throw InvalidArgument("bounding box has non-finite coordinates");
    }
    if (x1 < x0 || y1 < y0) {
      std::ostringstream os;
      os << "bounding box has negative extent: (" << x0 << ", " << y0 << ", " << x1 << ", " << y1 << ")";
      throw InvalidArgument(os.str());
    }
    if (score && !std::isfinite(*score)) throw InvalidArgument("bounding box score is not finite");
  }

  double x0() const { return x0_; }
  double y0() const { return y0_; }
  double x1() const { return x1_; }
  double y1() const { return y1_; }
  const std::optional<double>& score() const { return score_; }

  double width() const { return x1_ - x0_; }
  double height() const { return y1_ - y0_; }
  double area() const { return width() * height(); }
  Point center() const { return {0.5 * (x0_ + x1_), 0.5 * (y0_ + y1_)}; }
  double sqrt_area() const { return std::sqrt(area()); }
  // Natural log of width / height; -inf/+inf/nan for degenerate boxes.
  double log_aspect() const { return std::log(width() / height()); }

  BoundingBox with_score(std::optional<double> score) const { return {x0_, y0_, x1_, y1_, score}; }
  BoundingBox without_score() const { return with_score(std::nullopt); }

  // Clip to [0,width]x[0,height]; the score is kept.
  BoundingBox clipped(double width, double height) const {
    const double cx0 = std::clamp(x0_, 0.0, width);
    const double cy0 = std::clamp(y0_, 0.0, height);
    const double cx1 = std::clamp(x1_, 0.0, width);
    const double cy1 = std::clamp(y1_, 0.0, height);
    return {cx0, cy0, cx1, cy1, score_};
  }

  bool inside(double width, double height) const {
    return x0_ >= 0.0 && y0_ >= 0.0 && x1_ <= width && y1_ <= height;
  }

  // Geometry-only comparison (scores ignored).
  bool same_geometry(const BoundingBox& o) const {
    return x0_ == o.x0_ && y0_ == o.y0_ && x1_ == o.x1_ && y1_ == o.y1_;
  }

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;

 private:
  double x0_ = 0.0;
  double y0_ = 0.0;
  double x1_ = 0.0;
  double y1_ = 0.0;
  std::optional<double> score_;
};

inline double signed_area(std::span<const Point> poly) {
  const std::size_t n = poly.size();
  if (n < 3) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Point& p = poly[i];
    const Point& q = poly[(i + 1) % n];
    acc += p.x * q.y - q.x * p.y;
  }
  return 0.5 * acc;
}

inline double polygon_area(std::span<const Point> poly) { return std::abs(signed_area(poly)); }

// Convex quadrilateral, vertices stored counter-clockwise (positive shoelace
// area in a y-up frame; the orientation test is purely algebraic).
class Quad {
 public:
  explicit Quad(std::array<Point, 4> v) : v_(v) {
    for (const Point& p : v_) {
      if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw InvalidArgument("quad has non-finite vertex");
    }
    if (signed_area(v_) < 0.0) std::reverse(v_.begin(), v_.end());
    if (!(signed_area(v_) > 0.0)) throw InvalidArgument("quad is degenerate");
    for (std::size_t i = 0; i < 4; ++i) {
      const Point& a = v_[i];
      const Point& b = v_[(i + 1) % 4];
      const Point& c = v_[(i + 2) % 4];
      const double cross = (b.x - a.x) * (c.y - b.y) - (b.y - a.y) * (c.x - b.x);
      if (cross < -1e-9 * (1.0 + std::abs(signed_area(v_)))) throw InvalidArgument("quad is not convex");
    }
  }

  static Quad from_box(const BoundingBox& b) {
    return Quad({Point{b.x0(), b.y0()}, Point{b.x1(), b.y0()}, Point{b.x1(), b.y1()}, Point{b.x0(), b.y1()}});
  }

  const std::array<Point, 4>& vertices() const { return v_; }
  double area() const { return signed_area(v_); }
  // Vertex mean.
  Point centroid() const {
    Point c;
    for (const Point& p : v_) {
      c.x += 0.25 * p.x;
      c.y += 0.25 * p.y;
    }
    return c;
  }
  // Axis-aligned hull.
  BoundingBox hull() const {
    double x0 = v_[0].x, x1 = v_[0].x, y0 = v_[0].y, y1 = v_[0].y;
    for (const Point& p : v_) {
      x0 = std::min(x0, p.x);
      x1 = std::max(x1, p.x);
      y0 = std::min(y0, p.y);
      y1 = std::max(y1, p.y);
    }
    return {x0, y0, x1, y1};
  }

 private:
  std::array<Point, 4> v_;
};

// A perturbed-frame proposal mapped back to the reference frame.
using ProjectedBox = std::variant<BoundingBox, Quad>;

inline Point center_of(const ProjectedBox& p) {
  return std::visit([](const auto& r) -> Point {
    if constexpr (std::is_same_v<std::decay_t<decltype(r)>, BoundingBox>) {
      return r.center();
    } else {
      return r.centroid();
    }
  }, p);
}

inline double intersection_area(const BoundingBox& a, const BoundingBox& b) {
  const double w = std::min(a.x1(), b.x1()) - std::max(a.x0(), b.x0());
  const double h = std::min(a.y1(), b.y1()) - std::max(a.y0(), b.y0());
  if (w <= 0.0 || h <= 0.0) return 0.0;
  return w * h;
}

inline double iou(const BoundingBox& a, const BoundingBox& b) {
  const double inter = intersection_area(a, b);
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

namespace detail {

// Polygon with inline storage; a convex quad clipped by four half-planes has
// at most eight vertices.
struct SmallPolygon {
  std::array<Point, 12> v{};
  std::size_t n = 0;
};

inline SmallPolygon clip_small(const SmallPolygon& poly, const BoundingBox& box) {
  SmallPolygon current = poly;
  SmallPolygon next;
  // Each edge: keep points with sign * (coord - bound) >= 0.
  struct Edge {
    bool vertical;
    double bound;
    double sign;
  };
  const std::array<Edge, 4> edges = {Edge{true, box.x0(), 1.0}, Edge{true, box.x1(), -1.0},
                                     Edge{false, box.y0(), 1.0}, Edge{false, box.y1(), -1.0}};
  for (const Edge& e : edges) {
    if (current.n == 0) break;
    next.n = 0;
    auto dist = [&](const Point& p) { return e.sign * ((e.vertical ? p.x : p.y) - e.bound); };
    for (std::size_t i = 0; i < current.n; ++i) {
      const Point& p = current.v[i];
      const Point& q = current.v[(i + 1) % current.n];
      const double dp = dist(p);
      const double dq = dist(q);
      if (dp >= 0.0) next.v[next.n++] = p;
      if ((dp >= 0.0) != (dq >= 0.0)) {
        const double t = dp / (dp - dq);
        Point r{p.x + t * (q.x - p.x), p.y + t * (q.y - p.y)};
        // Snap onto the clip line to avoid drift.
        (e.vertical ? r.x : r.y) = e.bound;
        next.v[next.n++] = r;
      }
    }
    std::swap(current, next);
  }
  return current;
}

}  // namespace detail

// Sutherland-Hodgman clip of a convex polygon (at most 8 vertices) against
// the four half-planes of an axis-aligned box.
inline std::vector<Point> clip_to_box(std::span<const Point> poly, const BoundingBox& box) {
  if (poly.size() > 8) throw InvalidArgument("clip_to_box supports at most 8 vertices");
  detail::SmallPolygon in;
  for (const Point& p : poly) in.v[in.n++] = p;
  const auto out = detail::clip_small(in, box);
  return {out.v.begin(), out.v.begin() + static_cast<std::ptrdiff_t>(out.n)};
}

inline double quad_box_iou(const Quad& q, const BoundingBox& b) {
  detail::SmallPolygon in;
  for (const Point& p : q.vertices()) in.v[in.n++] = p;
  const auto clipped = detail::clip_small(in, b);
  const double inter = polygon_area(std::span<const Point>(clipped.v.data(), clipped.n));
  const double uni = q.area() + b.area() - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

inline double iou(const Quad& q, const BoundingBox& b) { return quad_box_iou(q, b); }

inline double iou(const ProjectedBox& p, const BoundingBox& b) {
  return std::visit([&](const auto& r) { return iou(r, b); }, p);
}

struct Match {
  std::size_t a = 0;
  std::size_t b = 0;
  double iou = 0.0;

  friend bool operator==(const Match&, const Match&) = default;
};

// One-to-one pairing, sorted by descending IoU.
using MatchResult = std::vector<Match>;

// Greedy one-to-one matching: all pairs with IoU > 0 ordered by IoU
// descending (ties: smaller a-index, then smaller b-index); a pair is
// accepted iff both sides are still free.
template <typename Region>
MatchResult greedy_match(std::span<const Region> a, std::span<const BoundingBox> b) {
  if (a.empty() || b.empty()) return {};

  // Candidate pruning on the x-extent of b.
  std::vector<std::size_t> by_x0(b.size());
  for (std::size_t j = 0; j < b.size(); ++j) by_x0[j] = j;
  std::sort(by_x0.begin(), by_x0.end(), [&](std::size_t l, std::size_t r) { return b[l].x0() < b[r].x0(); });
  std::vector<double> sorted_x0(b.size());
  for (std::size_t k = 0; k < by_x0.size(); ++k) sorted_x0[k] = b[by_x0[k]].x0();

  struct Candidate {
    double iou;
    std::size_t b;
  };
  // Max-heap order: higher IoU first, then lower b.
  auto worse = [](const Candidate& l, const Candidate& r) {
    if (l.iou != r.iou) return l.iou < r.iou;
    return l.b > r.b;
  };
  std::vector<std::vector<Candidate>> candidates(a.size());
  std::vector<Match> heads;
  heads.reserve(a.size());

  for (std::size_t i = 0; i < a.size(); ++i) {
    BoundingBox hull;
    if constexpr (std::is_same_v<Region, BoundingBox>) {
      hull = a[i];
    } else if constexpr (std::is_same_v<Region, Quad>) {
      hull = a[i].hull();
    } else {
      hull = std::visit([](const auto& r) -> BoundingBox {
        if constexpr (std::is_same_v<std::decay_t<decltype(r)>, BoundingBox>) {
          return r;
        } else {
          return r.hull();
        }
      }, a[i]);
    }
    const auto end = std::lower_bound(sorted_x0.begin(), sorted_x0.end(), hull.x1());
    auto& list = candidates[i];
    for (auto it = sorted_x0.begin(); it != end; ++it) {
      const std::size_t j = by_x0[static_cast<std::size_t>(it - sorted_x0.begin())];
      const BoundingBox& bj = b[j];
      if (bj.x1() <= hull.x0() || bj.y0() >= hull.y1() || bj.y1() <= hull.y0()) continue;
      const double v = iou(a[i], bj);
      if (v > 0.0) list.push_back({v, j});
    }
    std::make_heap(list.begin(), list.end(), worse);
    if (!list.empty()) heads.push_back({i, list.front().b, list.front().iou});
  }

  // Equivalent to scanning all pairs by (IoU desc, a asc, b asc) and taking
  // those with both ends free, but each a only exposes its best remaining
  // candidate, so most pairs are never ordered.
  auto later = [](const Match& l, const Match& r) {
    if (l.iou != r.iou) return l.iou < r.iou;
    if (l.a != r.a) return l.a > r.a;
    return l.b > r.b;
  };
  std::make_heap(heads.begin(), heads.end(), later);
  std::vector<bool> used_b(b.size(), false);
  MatchResult out;
  out.reserve(std::min(a.size(), b.size()));
  while (!heads.empty() && out.size() < b.size()) {
    std::pop_heap(heads.begin(), heads.end(), later);
    const Match m = heads.back();
    heads.pop_back();
    if (!used_b[m.b]) {
      used_b[m.b] = true;
      out.push_back(m);
      continue;
    }
    auto& list = candidates[m.a];
    while (!list.empty() && used_b[list.front().b]) {
      std::pop_heap(list.begin(), list.end(), worse);
      list.pop_back();
    }
    if (list.empty()) continue;
    heads.push_back({m.a, list.front().b, list.front().iou});
    std::push_heap(heads.begin(), heads.end(), later);
  }
  return out;
}

template <typename Region>
MatchResult greedy_match(const std::vector<Region>& a, const std::vector<BoundingBox>& b) {
  return greedy_match(std::span<const Region>(a), std::span<const BoundingBox>(b));
}

// Ascending grid of `count` IoU thresholds spanning [lo, hi].
inline std::vector<double> iou_grid(double lo, double hi, std::size_t count = 41) {
  if (count < 2 || !(hi > lo)) throw InvalidArgument("IoU grid needs at least two points and hi > lo");
  std::vector<double> grid(count);
  for (std::size_t i = 0; i < count; ++i) {
    grid[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1);
  }
  grid.back() = hi;
  return grid;
}

// Threshold grid for repeatability curves.
inline std::vector<double> repeatability_grid() { return iou_grid(0.0, 1.0); }
// Threshold grid for ground-truth recall curves.
inline std::vector<double> recall_grid() { return iou_grid(0.5, 1.0); }

struct RecallCurve {
  std::vector<double> thresholds;
  std::vector<double> recall;
  double auc = 0.0;
};

// Fraction of targets whose best IoU reaches t. A best IoU of 0 means "no
// overlapping match" and never counts, even at t = 0.
inline double recall_at(std::span<const double> best_ious, double t) {
  if (best_ious.empty()) throw EmptyTargetError("recall over an empty target set");
  std::size_t hits = 0;
  for (double v : best_ious) {
    if (v > 0.0 && v >= t) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(best_ious.size());
}

// Trapezoidal area under a sampled curve, normalized by the summed step
// widths so a constant curve integrates to exactly that constant.
inline double normalized_trapezoid(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw InvalidArgument("trapezoid needs >= 2 matching samples");
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i + 1 < x.size(); ++i) {
    const double dx = x[i + 1] - x[i];
    num += 0.5 * (y[i] + y[i + 1]) * dx;
    den += dx;
  }
  return den > 0.0 ? std::clamp(num / den, 0.0, 1.0) : 0.0;
}

inline RecallCurve recall_curve(std::span<const double> best_ious, std::span<const double> thresholds) {
  if (best_ious.empty()) throw EmptyTargetError("recall curve over an empty target set");
  if (thresholds.size() < 2 || !std::is_sorted(thresholds.begin(), thresholds.end())) {
    throw InvalidArgument("threshold grid must be ascending with at least two points");
  }
  std::vector<double> sorted(best_ious.begin(), best_ious.end());
  std::sort(sorted.begin(), sorted.end());
  const auto positive = std::upper_bound(sorted.begin(), sorted.end(), 0.0);
  RecallCurve curve;
  curve.thresholds.assign(thresholds.begin(), thresholds.end());
  curve.recall.reserve(thresholds.size());
  const double n = static_cast<double>(sorted.size());
  for (double t : thresholds) {
    const auto first = std::max(positive, std::lower_bound(sorted.begin(), sorted.end(), t));
    curve.recall.push_back(static_cast<double>(sorted.end() - first) / n);
  }
  curve.auc = normalized_trapezoid(curve.thresholds, curve.recall);
  return curve;
}

inline RecallCurve recall_curve(const std::vector<double>& best_ious, const std::vector<double>& thresholds) {
  return recall_curve(std::span<const double>(best_ious), std::span<const double>(thresholds));
}

inline constexpr std::size_t kSizeBins = 10;

// kSizeBins + 1 edges in sqrt(area), log-spaced from `min_side` to the image
// diagonal.
inline std::vector<double> size_bin_edges(double image_width, double image_height, double min_side = 10.0) {
  double top = std::hypot(image_width, image_height);
  if (!(top > min_side)) top = min_side * 2.0;
  std::vector<double> edges(kSizeBins + 1);
  const double ratio = std::log(top / min_side);
  for (std::size_t i = 0; i <= kSizeBins; ++i) {
    edges[i] = min_side * std::exp(ratio * static_cast<double>(i) / static_cast<double>(kSizeBins));
  }
  edges.front() = min_side;
  edges.back() = top;
  return edges;
}

// Half-open bin [edges[i], edges[i+1]) containing sqrt(area); clamps at both ends.
inline std::size_t size_bin_index(const BoundingBox& box, std::span<const double> edges) {
  if (edges.size() != kSizeBins + 1) throw InvalidArgument("size binning needs 11 edges");
  const double s = box.sqrt_area();
  if (!(s >= edges.front())) return 0;
  if (s >= edges.back()) return kSizeBins - 1;
  const auto it = std::upper_bound(edges.begin(), edges.end(), s);
  return static_cast<std::size_t>(it - edges.begin()) - 1;
}

inline std::size_t size_bin_index(const BoundingBox& box, const std::vector<double>& edges) {
  return size_bin_index(box, std::span<const double>(edges));
}

}  // namespace propeval
