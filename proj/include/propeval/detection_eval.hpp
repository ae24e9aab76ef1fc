#pragma once

// Detection filtering by proposal overlap, per-class NMS, and Pascal VOC
// average precision.
//
// DetectionSet JSONL: {"image_id": "...", "detections": [[x0,y0,x1,y1,score,"class"], ...]}

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "propeval/data_io.hpp"
#include "propeval/errors.hpp"
#include "propeval/geometry.hpp"

namespace propeval {

struct Detection {
  std::string label;
  BoundingBox box;
  double score = 0.0;

  friend bool operator==(const Detection&, const Detection&) = default;
};

struct ImageDetections {
  std::string image_id;
  std::vector<Detection> detections;

  friend bool operator==(const ImageDetections&, const ImageDetections&) = default;
};

struct DetectionSet {
  std::vector<ImageDetections> images;

  std::size_t size() const {
    std::size_t n = 0;
    for (const auto& img : images) n += img.detections.size();
    return n;
  }

  friend bool operator==(const DetectionSet&, const DetectionSet&) = default;
};

inline DetectionSet read_detections_jsonl(std::istream& in, const std::string& source = "<stream>") {
  DetectionSet set;
  detail::for_each_jsonl(in, source, [&](const ordered_json& j, std::size_t line_no) {
    const std::string ctx = detail::where(source, line_no);
    ImageDetections img;
    img.image_id = detail::require_id(j, ctx);
    const ordered_json dets = j.value("detections", ordered_json::array());
    for (const auto& d : dets) {
      if (!d.is_array() || d.size() != 6 || !d[5].is_string()) {
        throw ParseError(ctx + "detection must be [x0,y0,x1,y1,score,\"class\"]");
      }
      for (int k = 0; k < 5; ++k) {
        if (!d[k].is_number()) throw ParseError(ctx + "detection coordinates and score must be numbers");
      }
      const double score = d[4].get<double>();
      if (!std::isfinite(score)) throw ParseError(ctx + "non-finite detection score");
      try {
        img.detections.push_back({d[5].get<std::string>(),
                                  BoundingBox(d[0].get<double>(), d[1].get<double>(), d[2].get<double>(),
                                              d[3].get<double>()),
                                  score});
      } catch (const InvalidArgument& e) {
        throw ParseError(ctx + e.what() + " in image " + img.image_id);
      }
    }
    set.images.push_back(std::move(img));
  });
  return set;
}

inline void write_detections_jsonl(std::ostream& out, const DetectionSet& set) {
  for (const auto& img : set.images) {
    ordered_json j;
    j["image_id"] = img.image_id;
    ordered_json dets = ordered_json::array();
    for (const auto& d : img.detections) {
      dets.push_back(ordered_json::array({d.box.x0(), d.box.y0(), d.box.x1(), d.box.y1(), d.score, d.label}));
    }
    j["detections"] = std::move(dets);
    out << j.dump() << '\n';
  }
}

inline DetectionSet load_detections(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return read_detections_jsonl(in, path.string());
}

// Keeps a detection iff some proposal of the same image overlaps it with
// IoU strictly greater than min_iou.
inline DetectionSet filter_by_proposals(const DetectionSet& dets, const ProposalSet& props, double min_iou = 0.8) {
  if (!(min_iou >= 0.0 && min_iou <= 1.0)) throw InvalidArgument("min IoU outside [0, 1]");
  const auto index = props.index();
  DetectionSet out;
  for (const auto& img : dets.images) {
    ImageDetections kept{img.image_id, {}};
    const auto it = index.find(img.image_id);
    if (it != index.end()) {
      for (const auto& d : img.detections) {
        const bool covered = std::any_of(it->second->boxes.begin(), it->second->boxes.end(),
                                         [&](const BoundingBox& p) { return iou(d.box, p) > min_iou; });
        if (covered) kept.detections.push_back(d);
      }
    }
    out.images.push_back(std::move(kept));
  }
  return out;
}

// Greedy per-image, per-class suppression: highest score first (ties by input
// order); a detection is dropped when its IoU with an accepted one exceeds
// `overlap`. Survivors keep their input order.
inline DetectionSet nms(const DetectionSet& dets, double overlap = 0.5) {
  if (!(overlap >= 0.0 && overlap <= 1.0)) throw InvalidArgument("NMS overlap outside [0, 1]");
  DetectionSet out;
  for (const auto& img : dets.images) {
    const auto& d = img.detections;
    std::vector<std::size_t> order(d.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return d[a].score > d[b].score; });
    std::vector<bool> keep(d.size(), false);
    std::vector<std::size_t> accepted;
    for (std::size_t idx : order) {
      bool suppressed = false;
      for (std::size_t acc : accepted) {
        if (d[acc].label == d[idx].label && iou(d[acc].box, d[idx].box) > overlap) {
          suppressed = true;
          break;
        }
      }
      if (!suppressed) {
        accepted.push_back(idx);
        keep[idx] = true;
      }
    }
    ImageDetections kept{img.image_id, {}};
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (keep[i]) kept.detections.push_back(d[i]);
    }
    out.images.push_back(std::move(kept));
  }
  return out;
}

enum class ApMode { kVoc11Point, kContinuous };

struct PRCurve {
  std::vector<double> recall;
  std::vector<double> precision;
  double ap = 0.0;
  std::size_t positives = 0;  // non-difficult ground truth of the class
};

struct ApOptions {
  double iou_threshold = 0.5;
  ApMode mode = ApMode::kVoc11Point;
  // Count difficult ground truth as ordinary positives.
  bool include_difficult = false;
};

inline double interpolated_ap(const std::vector<double>& recall, const std::vector<double>& precision, ApMode mode) {
  if (mode == ApMode::kVoc11Point) {
    double sum = 0.0;
    for (int i = 0; i <= 10; ++i) {
      const double t = i / 10.0;
      double best = 0.0;
      for (std::size_t k = 0; k < recall.size(); ++k) {
        if (recall[k] >= t) best = std::max(best, precision[k]);
      }
      sum += best;
    }
    return sum / 11.0;
  }
  // Area under the monotone precision envelope.
  std::vector<double> mrec{0.0};
  std::vector<double> mpre{0.0};
  mrec.insert(mrec.end(), recall.begin(), recall.end());
  mpre.insert(mpre.end(), precision.begin(), precision.end());
  mrec.push_back(1.0);
  mpre.push_back(0.0);
  for (std::size_t i = mpre.size() - 1; i > 0; --i) mpre[i - 1] = std::max(mpre[i - 1], mpre[i]);
  double ap = 0.0;
  for (std::size_t i = 1; i < mrec.size(); ++i) ap += (mrec[i] - mrec[i - 1]) * mpre[i];
  return ap;
}

// Pascal VOC protocol: detections of the class ranked by score (ties by image
// then input order); each is compared with the best-overlapping ground truth
// of its image. Overlap >= threshold with an unclaimed box is a true
// positive, with a difficult box it is ignored, otherwise a false positive.
inline PRCurve average_precision(const DetectionSet& dets, const GroundTruthSet& gt, const std::string& label,
                                 const ApOptions& options = {}) {
  if (!gt.classes().contains(label)) throw InvalidArgument("unknown class: " + label);
  struct Ranked {
    double score;
    std::size_t image;
    std::size_t det;
  };
  std::vector<Ranked> ranked;
  for (std::size_t i = 0; i < dets.images.size(); ++i) {
    const auto& img = dets.images[i];
    for (std::size_t k = 0; k < img.detections.size(); ++k) {
      if (img.detections[k].label == label) ranked.push_back({img.detections[k].score, i, k});
    }
  }
  std::stable_sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) { return a.score > b.score; });

  PRCurve curve;
  std::map<std::string, std::vector<bool>> claimed;
  for (const auto& img : gt.images()) {
    std::vector<bool> used;
    for (const auto& a : img.objects) {
      used.push_back(false);
      if (a.label == label && (!a.difficult || options.include_difficult)) ++curve.positives;
    }
    claimed.emplace(img.image_id, std::move(used));
  }

  std::size_t tp = 0;
  std::size_t fp = 0;
  for (const auto& r : ranked) {
    const auto& det = dets.images[r.image].detections[r.det];
    const ImageAnnotations* truth = gt.find(dets.images[r.image].image_id);
    double best = -1.0;
    std::size_t best_index = 0;
    if (truth) {
      for (std::size_t g = 0; g < truth->objects.size(); ++g) {
        if (truth->objects[g].label != label) continue;
        const double v = iou(det.box, truth->objects[g].box);
        if (v > best) {
          best = v;
          best_index = g;
        }
      }
    }
    if (best >= options.iou_threshold) {
      const auto& gt_obj = truth->objects[best_index];
      if (gt_obj.difficult && !options.include_difficult) continue;
      auto used = claimed[truth->image_id][best_index];
      if (!used) {
        used = true;
        ++tp;
      } else {
        ++fp;
      }
    } else {
      ++fp;
    }
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    const double recall = curve.positives ? static_cast<double>(tp) / static_cast<double>(curve.positives) : 0.0;
    curve.recall.push_back(recall);
    curve.precision.push_back(precision);
  }
  curve.ap = curve.positives ? interpolated_ap(curve.recall, curve.precision, options.mode) : 0.0;
  return curve;
}

inline double mean_ap(const std::vector<double>& aps) {
  if (aps.empty()) throw InvalidArgument("mean AP over zero classes");
  return std::accumulate(aps.begin(), aps.end(), 0.0) / static_cast<double>(aps.size());
}

}  // namespace propeval
