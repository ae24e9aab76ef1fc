#pragma once

// Image perturbations (scale, blur, rotation, illumination, JPEG) and the
// projection of perturbed-frame boxes back into the reference frame.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "propeval/errors.hpp"
#include "propeval/geometry.hpp"
#include "propeval/image.hpp"

namespace propeval {

enum class PerturbationKind { kNone, kScale, kBlur, kRotation, kIllumination, kJpeg };

inline std::string to_string(PerturbationKind k) {
  switch (k) {
    case PerturbationKind::kNone: return "none";
    case PerturbationKind::kScale: return "scale";
    case PerturbationKind::kBlur: return "blur";
    case PerturbationKind::kRotation: return "rotation";
    case PerturbationKind::kIllumination: return "illumination";
    case PerturbationKind::kJpeg: return "jpeg";
  }
  return "none";
}

inline PerturbationKind parse_perturbation_kind(std::string_view s) {
  if (s == "none") return PerturbationKind::kNone;
  if (s == "scale") return PerturbationKind::kScale;
  if (s == "blur") return PerturbationKind::kBlur;
  if (s == "rotation") return PerturbationKind::kRotation;
  if (s == "illumination") return PerturbationKind::kIllumination;
  if (s == "jpeg") return PerturbationKind::kJpeg;
  throw InvalidArgument("unknown perturbation kind: " + std::string(s));
}

// Shortest round-trip decimal form of a double.
inline std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline constexpr double kMaxRotationDegrees = 20.0;

class PerturbationSpec {
 public:
  static PerturbationSpec none() { return {PerturbationKind::kNone, std::nullopt}; }
  static PerturbationSpec scale(double factor) {
    if (!(factor >= 0.5 && factor <= 2.0)) throw InvalidArgument("scale factor outside [0.5, 2]");
    return {PerturbationKind::kScale, factor};
  }
  static PerturbationSpec blur(double sigma) {
    if (!(sigma >= 0.0 && sigma <= 8.0)) throw InvalidArgument("blur sigma outside [0, 8]");
    return {PerturbationKind::kBlur, sigma};
  }
  static PerturbationSpec rotation(double degrees) {
    if (!(degrees >= -kMaxRotationDegrees && degrees <= kMaxRotationDegrees)) {
      throw InvalidArgument("rotation angle outside [-20, 20]");
    }
    return {PerturbationKind::kRotation, degrees};
  }
  static PerturbationSpec illumination(double percent) {
    if (!(percent >= 50.0 && percent <= 150.0)) throw InvalidArgument("brightness outside [50, 150]");
    return {PerturbationKind::kIllumination, percent};
  }
  static PerturbationSpec jpeg(double quality) {
    if (!(quality >= 5.0 && quality <= 100.0)) throw InvalidArgument("JPEG quality outside [5, 100]");
    return {PerturbationKind::kJpeg, quality};
  }
  // No re-encode; distinct from quality 100, which is still lossy.
  static PerturbationSpec jpeg_lossless() { return {PerturbationKind::kJpeg, std::nullopt}; }

  // Parses "<kind>" params as written by label(): "lossless" or a number.
  static PerturbationSpec parse(std::string_view kind, std::string_view param) {
    const PerturbationKind k = parse_perturbation_kind(kind);
    if (k == PerturbationKind::kNone) return none();
    if (k == PerturbationKind::kJpeg && param == "lossless") return jpeg_lossless();
    double v = 0.0;
    const auto res = std::from_chars(param.data(), param.data() + param.size(), v);
    if (res.ec != std::errc() || res.ptr != param.data() + param.size()) {
      throw InvalidArgument("bad perturbation parameter '" + std::string(param) + "' for " + std::string(kind));
    }
    switch (k) {
      case PerturbationKind::kScale: return scale(v);
      case PerturbationKind::kBlur: return blur(v);
      case PerturbationKind::kRotation: return rotation(v);
      case PerturbationKind::kIllumination: return illumination(v);
      case PerturbationKind::kJpeg: return jpeg(v);
      case PerturbationKind::kNone: break;
    }
    return none();
  }

  PerturbationKind kind() const { return kind_; }
  const std::optional<double>& parameter() const { return parameter_; }
  double value() const { return parameter_.value_or(0.0); }
  bool lossless() const { return kind_ == PerturbationKind::kJpeg && !parameter_; }

  bool is_identity() const {
    switch (kind_) {
      case PerturbationKind::kNone: return true;
      case PerturbationKind::kScale: return *parameter_ == 1.0;
      case PerturbationKind::kBlur: return *parameter_ == 0.0;
      case PerturbationKind::kRotation: return *parameter_ == 0.0;
      case PerturbationKind::kIllumination: return *parameter_ == 100.0;
      case PerturbationKind::kJpeg: return !parameter_;
    }
    return false;
  }

  // Geometry unchanged: boxes project by identity.
  bool size_preserving() const {
    return kind_ == PerturbationKind::kNone || kind_ == PerturbationKind::kBlur ||
           kind_ == PerturbationKind::kIllumination || kind_ == PerturbationKind::kJpeg;
  }

  std::string kind_name() const { return to_string(kind_); }
  std::string label() const {
    if (kind_ == PerturbationKind::kNone) return "";
    if (!parameter_) return "lossless";
    return format_number(*parameter_);
  }

  friend bool operator==(const PerturbationSpec&, const PerturbationSpec&) = default;

 private:
  PerturbationSpec(PerturbationKind kind, std::optional<double> parameter) : kind_(kind), parameter_(parameter) {}

  PerturbationKind kind_;
  std::optional<double> parameter_;
};

// Fixed parameter grid of one perturbation family, identity included.
inline std::vector<PerturbationSpec> perturbation_suite(PerturbationKind kind) {
  std::vector<PerturbationSpec> out;
  switch (kind) {
    case PerturbationKind::kNone:
      out.push_back(PerturbationSpec::none());
      break;
    case PerturbationKind::kScale: {
      std::vector<double> factors;
      // Log-uniform over [0.5, 2], rounded to three decimals for stable labels.
      for (int i = 0; i < 8; ++i) factors.push_back(std::round(500.0 * std::pow(4.0, i / 7.0)) / 1000.0);
      for (double f : {0.9, 0.95, 0.99, 1.0, 1.01, 1.05, 1.1}) factors.push_back(f);
      std::sort(factors.begin(), factors.end());
      for (double f : factors) out.push_back(PerturbationSpec::scale(f));
      break;
    }
    case PerturbationKind::kBlur:
      for (double s : {0.0, 0.5, 1.0, 2.0, 3.0, 4.0, 6.0, 8.0}) out.push_back(PerturbationSpec::blur(s));
      break;
    case PerturbationKind::kRotation:
      for (int a = -20; a <= 20; a += 5) out.push_back(PerturbationSpec::rotation(a));
      break;
    case PerturbationKind::kIllumination:
      for (int b = 50; b <= 150; b += 10) out.push_back(PerturbationSpec::illumination(b));
      break;
    case PerturbationKind::kJpeg:
      out.push_back(PerturbationSpec::jpeg_lossless());
      for (double q : {100.0, 90.0, 80.0, 70.0, 50.0, 30.0, 20.0, 10.0, 5.0}) out.push_back(PerturbationSpec::jpeg(q));
      break;
  }
  return out;
}

inline std::vector<PerturbationSpec> perturbation_suite(std::string_view kind) {
  return perturbation_suite(parse_perturbation_kind(kind));
}

// Axis-aligned crop shared by every rotation of one image; integer origin
// and size.
struct CropRect {
  int x = 0;
  int y = 0;
  int width = 0;
  int height = 0;

  BoundingBox box() const { return {double(x), double(y), double(x + width), double(y + height)}; }
  Point center() const { return {x + 0.5 * width, y + 0.5 * height}; }

  friend bool operator==(const CropRect&, const CropRect&) = default;
};

namespace detail {

inline double radians(double degrees) { return degrees * std::numbers::pi / 180.0; }

// Rotates p about c by `degrees` (counter-clockwise as displayed, y down).
inline Point rotate_about(Point p, Point c, double degrees) {
  const double t = radians(degrees);
  const double cs = std::cos(t);
  const double sn = std::sin(t);
  const double dx = p.x - c.x;
  const double dy = p.y - c.y;
  return {c.x + cs * dx + sn * dy, c.y - sn * dx + cs * dy};
}

inline bool crop_fits(const CropRect& crop, int width, int height, double degrees) {
  const BoundingBox b = crop.box();
  const Point c = crop.center();
  constexpr double kEps = 1e-9;
  for (double sign : {1.0, -1.0}) {
    for (Point p : {Point{b.x0(), b.y0()}, Point{b.x1(), b.y0()}, Point{b.x1(), b.y1()}, Point{b.x0(), b.y1()}}) {
      const Point r = rotate_about(p, c, sign * degrees);
      if (r.x < -kEps || r.y < -kEps || r.x > width + kEps || r.y > height + kEps) return false;
    }
  }
  return true;
}

}  // namespace detail

// Largest centred rectangle with the image's aspect ratio whose content stays
// inside the image under rotation by +-max_degrees.
inline CropRect rotation_crop(int width, int height, double max_degrees = kMaxRotationDegrees) {
  if (!(std::abs(max_degrees) < 45.0)) throw InvalidArgument("rotation crop needs |angle| < 45 degrees");
  if (width <= 0 || height <= 0) throw InvalidArgument("rotation crop of an empty image");
  const double t = detail::radians(std::abs(max_degrees));
  const double c = std::cos(t);
  const double s = std::sin(t);
  const double W = width;
  const double H = height;
  const double factor = std::min({1.0, W / (W * c + H * s), H / (W * s + H * c)});
  CropRect crop;
  crop.width = std::max(1, static_cast<int>(std::floor(factor * W + 1e-9)));
  crop.height = std::max(1, static_cast<int>(std::floor(factor * H + 1e-9)));
  for (;;) {
    crop.x = (width - crop.width) / 2;
    crop.y = (height - crop.height) / 2;
    if (detail::crop_fits(crop, width, height, max_degrees) || (crop.width == 1 && crop.height == 1)) break;
    // Integer-origin rounding can push a corner out by a fraction of a pixel.
    crop.width = std::max(1, crop.width - 1);
    crop.height = std::max(1, static_cast<int>(std::floor(crop.width * H / W)));
  }
  return crop;
}

namespace detail {

// Symmetric (mirror-with-edge) border extension.
inline int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * n;
  int m = i % period;
  if (m < 0) m += period;
  return m < n ? m : period - 1 - m;
}

inline std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

inline double cubic_kernel(double x) {
  constexpr double a = -0.5;
  x = std::abs(x);
  if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
  return 0.0;
}

struct Contribution {
  std::vector<int> index;
  std::vector<double> weight;
};

// One-dimensional resampling weights; kernel stretched by 1/scale when
// shrinking (antialiasing).
inline std::vector<Contribution> resample_weights(int in_size, int out_size, double scale) {
  const bool shrink = scale < 1.0;
  const double kscale = shrink ? scale : 1.0;
  const double support = 2.0 / kscale;
  std::vector<Contribution> out(static_cast<std::size_t>(out_size));
  for (int i = 0; i < out_size; ++i) {
    const double u = (i + 0.5) / scale - 0.5;
    const int first = static_cast<int>(std::floor(u - support));
    const int last = static_cast<int>(std::ceil(u + support));
    Contribution& c = out[static_cast<std::size_t>(i)];
    double total = 0.0;
    for (int j = first; j <= last; ++j) {
      const double w = kscale * cubic_kernel(kscale * (u - j));
      if (w == 0.0) continue;
      c.index.push_back(reflect_index(j, in_size));
      c.weight.push_back(w);
      total += w;
    }
    for (double& w : c.weight) w /= total;
  }
  return out;
}

template <typename Fetch>
void convolve_rows(int width, int height, const std::vector<Contribution>& cols, Fetch&& fetch,
                   std::vector<double>& out) {
  const int out_w = static_cast<int>(cols.size());
  out.assign(static_cast<std::size_t>(out_w) * height * 3, 0.0);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < out_w; ++x) {
      const auto& c = cols[static_cast<std::size_t>(x)];
      for (int ch = 0; ch < 3; ++ch) {
        double acc = 0.0;
        for (std::size_t k = 0; k < c.index.size(); ++k) acc += c.weight[k] * fetch(c.index[k], y, ch);
        out[(static_cast<std::size_t>(y) * out_w + x) * 3 + ch] = acc;
      }
    }
  }
  (void)width;
}

// Separable resample: horizontal pass into doubles, vertical pass into bytes.
inline Image separable_filter(const Image& src, const std::vector<Contribution>& cols,
                              const std::vector<Contribution>& rows) {
  const int out_w = static_cast<int>(cols.size());
  const int out_h = static_cast<int>(rows.size());
  std::vector<double> tmp;
  convolve_rows(src.width(), src.height(), cols, [&](int x, int y, int ch) { return double(src.at(x, y, ch)); }, tmp);
  Image out(out_w, out_h);
  for (int y = 0; y < out_h; ++y) {
    const auto& r = rows[static_cast<std::size_t>(y)];
    for (int x = 0; x < out_w; ++x) {
      for (int ch = 0; ch < 3; ++ch) {
        double acc = 0.0;
        for (std::size_t k = 0; k < r.index.size(); ++k) {
          acc += r.weight[k] * tmp[(static_cast<std::size_t>(r.index[k]) * out_w + x) * 3 + ch];
        }
        out.at(x, y, ch) = to_byte(acc);
      }
    }
  }
  return out;
}

inline std::vector<Contribution> gaussian_weights(int size, double sigma) {
  const int radius = static_cast<int>(std::ceil(10.0 * sigma));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double w = std::exp(-0.5 * (i * i) / (sigma * sigma));
    kernel[static_cast<std::size_t>(i + radius)] = w;
    total += w;
  }
  for (double& w : kernel) w /= total;
  std::vector<Contribution> out(static_cast<std::size_t>(size));
  for (int x = 0; x < size; ++x) {
    auto& c = out[static_cast<std::size_t>(x)];
    for (int i = -radius; i <= radius; ++i) {
      c.index.push_back(reflect_index(x + i, size));
      c.weight.push_back(kernel[static_cast<std::size_t>(i + radius)]);
    }
  }
  return out;
}

}  // namespace detail

// Bicubic (a = -0.5) resize by `factor` to floor(factor * size); the kernel is
// widened when shrinking.
inline Image resize_image(const Image& src, double factor) {
  if (!(factor > 0.0)) throw InvalidArgument("resize factor must be positive");
  const int out_w = std::max(1, static_cast<int>(std::floor(factor * src.width())));
  const int out_h = std::max(1, static_cast<int>(std::floor(factor * src.height())));
  if (factor == 1.0) return src;
  return detail::separable_filter(src, detail::resample_weights(src.width(), out_w, factor),
                                  detail::resample_weights(src.height(), out_h, factor));
}

// Separable Gaussian, kernel radius ceil(10 sigma), symmetric borders.
inline Image gaussian_blur(const Image& src, double sigma) {
  if (sigma <= 0.0 || src.empty()) return src;
  return detail::separable_filter(src, detail::gaussian_weights(src.width(), sigma),
                                  detail::gaussian_weights(src.height(), sigma));
}

struct Hsb {
  double hue = 0.0;         // [0, 6) hexcone sector units
  double saturation = 0.0;  // [0, 1]
  double brightness = 0.0;  // [0, 1] = max(R, G, B) / 255
};

inline Hsb rgb_to_hsb(double r, double g, double b) {
  const double mx = std::max({r, g, b});
  const double mn = std::min({r, g, b});
  const double delta = mx - mn;
  Hsb out;
  out.brightness = mx;
  out.saturation = mx > 0.0 ? delta / mx : 0.0;
  if (delta > 0.0) {
    if (mx == r) {
      out.hue = (g - b) / delta;
      if (out.hue < 0.0) out.hue += 6.0;
    } else if (mx == g) {
      out.hue = (b - r) / delta + 2.0;
    } else {
      out.hue = (r - g) / delta + 4.0;
    }
  }
  return out;
}

inline std::array<double, 3> hsb_to_rgb(const Hsb& c) {
  const double v = c.brightness;
  if (c.saturation <= 0.0) return {v, v, v};
  const double h = c.hue >= 6.0 ? 0.0 : c.hue;
  const int sector = static_cast<int>(std::floor(h));
  const double f = h - sector;
  const double p = v * (1.0 - c.saturation);
  const double q = v * (1.0 - c.saturation * f);
  const double t = v * (1.0 - c.saturation * (1.0 - f));
  switch (sector) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

inline Image change_brightness(const Image& src, double percent) {
  if (percent == 100.0) return src;
  Image out(src.width(), src.height());
  const double factor = percent / 100.0;
  for (int y = 0; y < src.height(); ++y) {
    for (int x = 0; x < src.width(); ++x) {
      Hsb c = rgb_to_hsb(src.at(x, y, 0) / 255.0, src.at(x, y, 1) / 255.0, src.at(x, y, 2) / 255.0);
      c.brightness = std::clamp(c.brightness * factor, 0.0, 1.0);
      const auto rgb = hsb_to_rgb(c);
      for (int ch = 0; ch < 3; ++ch) out.at(x, y, ch) = detail::to_byte(rgb[static_cast<std::size_t>(ch)] * 255.0);
    }
  }
  return out;
}

inline Image jpeg_roundtrip(const Image& src, int quality) { return decode_jpeg(encode_jpeg(src, quality)); }

// Rotates the crop's content by `degrees` about the crop centre, bilinear
// sampling, output size = crop size.
inline Image rotate_crop(const Image& src, const CropRect& crop, double degrees) {
  Image out(crop.width, crop.height);
  const Point c = crop.center();
  const double t = detail::radians(degrees);
  const double cs = std::cos(t);
  const double sn = std::sin(t);
  const int w = src.width();
  const int h = src.height();
  for (int v = 0; v < crop.height; ++v) {
    for (int u = 0; u < crop.width; ++u) {
      const double qx = u + 0.5 - 0.5 * crop.width;
      const double qy = v + 0.5 - 0.5 * crop.height;
      // Inverse rotation back into the reference frame.
      const double sx = c.x + cs * qx - sn * qy - 0.5;
      const double sy = c.y + sn * qx + cs * qy - 0.5;
      const int x0 = static_cast<int>(std::floor(sx));
      const int y0 = static_cast<int>(std::floor(sy));
      const double fx = sx - x0;
      const double fy = sy - y0;
      const int xa = std::clamp(x0, 0, w - 1);
      const int xb = std::clamp(x0 + 1, 0, w - 1);
      const int ya = std::clamp(y0, 0, h - 1);
      const int yb = std::clamp(y0 + 1, 0, h - 1);
      for (int ch = 0; ch < 3; ++ch) {
        const double top = (1.0 - fx) * src.at(xa, ya, ch) + fx * src.at(xb, ya, ch);
        const double bottom = (1.0 - fx) * src.at(xa, yb, ch) + fx * src.at(xb, yb, ch);
        out.at(u, v, ch) = detail::to_byte((1.0 - fy) * top + fy * bottom);
      }
    }
  }
  return out;
}

// Applies one perturbation. Rotation uses `crop`, defaulting to the crop for
// the suite's extreme angle.
inline Image apply_perturbation(const Image& image, const PerturbationSpec& spec,
                                std::optional<CropRect> crop = std::nullopt) {
  switch (spec.kind()) {
    case PerturbationKind::kNone: return image;
    case PerturbationKind::kScale: return resize_image(image, spec.value());
    case PerturbationKind::kBlur: return gaussian_blur(image, spec.value());
    case PerturbationKind::kRotation: {
      const CropRect c = crop.value_or(rotation_crop(image.width(), image.height()));
      return rotate_crop(image, c, spec.value());
    }
    case PerturbationKind::kIllumination: return change_brightness(image, spec.value());
    case PerturbationKind::kJpeg:
      if (spec.lossless()) return image;
      return jpeg_roundtrip(image, static_cast<int>(std::lround(spec.value())));
  }
  return image;
}

// Maps a box from the perturbed frame back to the reference frame.
inline ProjectedBox project_box(const BoundingBox& box, const PerturbationSpec& spec,
                                const std::optional<CropRect>& crop = std::nullopt) {
  switch (spec.kind()) {
    case PerturbationKind::kScale: {
      const double s = spec.value();
      return BoundingBox(box.x0() / s, box.y0() / s, box.x1() / s, box.y1() / s, box.score());
    }
    case PerturbationKind::kRotation: {
      if (!crop) throw InvalidArgument("projecting a rotated box requires the crop rectangle");
      const Point pivot{0.5 * crop->width, 0.5 * crop->height};
      std::array<Point, 4> corners = {Point{box.x0(), box.y0()}, Point{box.x1(), box.y0()},
                                      Point{box.x1(), box.y1()}, Point{box.x0(), box.y1()}};
      for (Point& p : corners) {
        const Point r = detail::rotate_about(p, pivot, -spec.value());
        p = {r.x + crop->x, r.y + crop->y};
      }
      if (box.width() <= 0.0 || box.height() <= 0.0) {
        // Degenerate boxes cannot form a quad; keep their hull.
        double x0 = corners[0].x, x1 = x0, y0 = corners[0].y, y1 = y0;
        for (const Point& p : corners) {
          x0 = std::min(x0, p.x);
          x1 = std::max(x1, p.x);
          y0 = std::min(y0, p.y);
          y1 = std::max(y1, p.y);
        }
        return BoundingBox(x0, y0, x1, y1, box.score());
      }
      return Quad(corners);
    }
    default:
      return box;
  }
}

inline bool center_inside(const ProjectedBox& projected, double width, double height) {
  const Point c = center_of(projected);
  return c.x >= 0.0 && c.y >= 0.0 && c.x <= width && c.y <= height;
}

// Size of the perturbed image.
inline std::pair<int, int> perturbed_size(int width, int height, const PerturbationSpec& spec,
                                          const std::optional<CropRect>& crop = std::nullopt) {
  if (spec.kind() == PerturbationKind::kScale) {
    return {std::max(1, static_cast<int>(std::floor(spec.value() * width))),
            std::max(1, static_cast<int>(std::floor(spec.value() * height)))};
  }
  if (spec.kind() == PerturbationKind::kRotation) {
    const CropRect c = crop.value_or(rotation_crop(width, height));
    return {c.width, c.height};
  }
  return {width, height};
}

}  // namespace propeval
