#pragma once

// Repeatability under perturbations and ground-truth recall.

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "propeval/data_io.hpp"
#include "propeval/errors.hpp"
#include "propeval/geometry.hpp"
#include "propeval/parallel.hpp"
#include "propeval/perturbations.hpp"

namespace propeval {

struct RepeatabilityResult {
  PerturbationSpec spec = PerturbationSpec::none();
  // Best (matched) IoU of every reference proposal, grouped by size bin.
  std::array<std::vector<double>, kSizeBins> bin_best_ious;
  std::array<std::optional<RecallCurve>, kSizeBins> bin_curves;
  // Unweighted mean of the non-empty bins' AUCs; empty when no bin has targets.
  std::optional<double> auc;
  std::size_t reference_count = 0;
  std::size_t perturbed_count = 0;
  std::size_t kept_count = 0;  // perturbed proposals whose projected centre is inside

  // Per-threshold recall averaged over non-empty bins.
  std::optional<RecallCurve> bin_averaged_curve() const {
    std::optional<RecallCurve> out;
    std::size_t used = 0;
    for (const auto& c : bin_curves) {
      if (!c) continue;
      if (!out) {
        out = RecallCurve{c->thresholds, std::vector<double>(c->recall.size(), 0.0), 0.0};
      }
      for (std::size_t i = 0; i < c->recall.size(); ++i) out->recall[i] += c->recall[i];
      ++used;
    }
    if (!out) return out;
    for (double& r : out->recall) r /= static_cast<double>(used);
    out->auc = *auc;
    return out;
  }
};

struct RepeatabilityOptions {
  std::vector<double> thresholds = repeatability_grid();
  // Match rotated proposals by their axis-aligned hull instead of the quad.
  bool hull_mode = false;
};

namespace detail {

inline void finish_repeatability(RepeatabilityResult& r, const std::vector<double>& thresholds) {
  double sum = 0.0;
  std::size_t used = 0;
  for (std::size_t bin = 0; bin < kSizeBins; ++bin) {
    r.bin_curves[bin].reset();
    if (r.bin_best_ious[bin].empty()) continue;
    r.bin_curves[bin] = recall_curve(r.bin_best_ious[bin], thresholds);
    sum += r.bin_curves[bin]->auc;
    ++used;
  }
  r.auc = used ? std::optional<double>(sum / static_cast<double>(used)) : std::nullopt;
}

}  // namespace detail

// One image, one perturbation: project the perturbed proposals into the
// reference frame, drop those whose centre leaves the image, match greedily
// against the reference proposals, and build per-size-bin recall curves.
inline RepeatabilityResult evaluate_repeatability(const ImageProposals& reference, const ImageProposals& perturbed,
                                                  const PerturbationSpec& spec, const std::optional<CropRect>& crop,
                                                  int width, int height, std::span<const double> bin_edges,
                                                  const RepeatabilityOptions& options = {}) {
  if (reference.image_id != perturbed.image_id) {
    throw InvalidArgument("image id mismatch: reference " + reference.image_id + " vs perturbed " +
                          perturbed.image_id);
  }
  RepeatabilityResult result;
  result.spec = spec;
  result.reference_count = reference.boxes.size();
  result.perturbed_count = perturbed.boxes.size();

  std::vector<ProjectedBox> projected;
  projected.reserve(perturbed.boxes.size());
  for (const auto& b : perturbed.boxes) {
    ProjectedBox p = project_box(b, spec, crop);
    if (!center_inside(p, width, height)) continue;
    if (options.hull_mode && std::holds_alternative<Quad>(p)) p = std::get<Quad>(p).hull();
    projected.push_back(std::move(p));
  }
  result.kept_count = projected.size();

  std::vector<double> best(reference.boxes.size(), 0.0);
  for (const Match& m : greedy_match<ProjectedBox>(projected, reference.boxes)) best[m.b] = m.iou;
  for (std::size_t i = 0; i < reference.boxes.size(); ++i) {
    result.bin_best_ious[size_bin_index(reference.boxes[i], bin_edges)].push_back(best[i]);
  }
  detail::finish_repeatability(result, options.thresholds);
  return result;
}

inline RepeatabilityResult evaluate_repeatability(const ImageProposals& reference, const ImageProposals& perturbed,
                                                  const PerturbationSpec& spec, const std::optional<CropRect>& crop,
                                                  int width, int height, const RepeatabilityOptions& options = {}) {
  const auto edges = size_bin_edges(width, height);
  return evaluate_repeatability(reference, perturbed, spec, crop, width, height, edges, options);
}

// Pools per-image results of one perturbation (in the given order) into
// dataset-level bin curves.
inline RepeatabilityResult aggregate_repeatability(std::span<const RepeatabilityResult> per_image,
                                                   const RepeatabilityOptions& options = {}) {
  RepeatabilityResult out;
  if (!per_image.empty()) out.spec = per_image.front().spec;
  for (const auto& r : per_image) {
    for (std::size_t bin = 0; bin < kSizeBins; ++bin) {
      out.bin_best_ious[bin].insert(out.bin_best_ious[bin].end(), r.bin_best_ious[bin].begin(),
                                    r.bin_best_ious[bin].end());
    }
    out.reference_count += r.reference_count;
    out.perturbed_count += r.perturbed_count;
    out.kept_count += r.kept_count;
  }
  detail::finish_repeatability(out, options.thresholds);
  return out;
}

struct RecallAtBudget {
  std::size_t requested = 0;
  RecallCurve curve;
  double recall_at_05 = 0.0;
  double recall_at_08 = 0.0;
  double average_proposals = 0.0;  // achieved, per ground-truth image
};

struct RecallReport {
  std::vector<RecallAtBudget> budgets;  // in requested order
  std::size_t image_count = 0;
  std::size_t annotation_count = 0;
};

inline std::vector<std::size_t> default_recall_budgets() { return {100, 1000, 10000}; }

// Per-annotation best IoU over the image's proposals, in ground-truth order.
// Coverage semantics: no one-to-one constraint.
inline std::vector<double> coverage_best_ious(const GroundTruthSet& gt, const ProposalSet& proposals,
                                              unsigned threads = 1) {
  const auto index = proposals.index();
  const auto& images = gt.images();
  std::vector<std::vector<double>> per_image(images.size());
  parallel_for(images.size(), threads, [&](std::size_t i) {
    const auto& img = images[i];
    const auto it = index.find(img.image_id);
    auto& out = per_image[i];
    out.assign(img.objects.size(), 0.0);
    if (it == index.end()) return;
    for (std::size_t a = 0; a < img.objects.size(); ++a) {
      double best = 0.0;
      for (const auto& p : it->second->boxes) best = std::max(best, iou(img.objects[a].box, p));
      out[a] = best;
    }
  });
  std::vector<double> flat;
  for (const auto& v : per_image) flat.insert(flat.end(), v.begin(), v.end());
  return flat;
}

inline RecallReport evaluate_recall(const GroundTruthSet& gt, const ProposalSet& proposals,
                                    std::span<const std::size_t> budgets, SelectionPolicy policy,
                                    unsigned threads = 1, std::vector<double> thresholds = recall_grid()) {
  RecallReport report;
  report.image_count = gt.images().size();
  report.annotation_count = gt.annotation_count();
  if (report.annotation_count == 0) throw EmptyTargetError("ground truth holds no annotations");
  for (std::size_t n : budgets) {
    const ProposalSet selected = select_proposals(proposals, n, policy);
    const auto best = coverage_best_ious(gt, selected, threads);
    RecallAtBudget entry;
    entry.requested = n;
    entry.curve = recall_curve(best, thresholds);
    entry.recall_at_05 = recall_at(best, 0.5);
    entry.recall_at_08 = recall_at(best, 0.8);
    const auto index = selected.index();
    std::size_t total = 0;
    for (const auto& img : gt.images()) {
      const auto it = index.find(img.image_id);
      if (it != index.end()) total += it->second->boxes.size();
    }
    entry.average_proposals = report.image_count ? static_cast<double>(total) / report.image_count : 0.0;
    report.budgets.push_back(std::move(entry));
  }
  return report;
}

inline RecallReport evaluate_recall(const GroundTruthSet& gt, const ProposalSet& proposals,
                                    const std::vector<std::size_t>& budgets, SelectionPolicy policy,
                                    unsigned threads = 1) {
  return evaluate_recall(gt, proposals, std::span<const std::size_t>(budgets), policy, threads);
}

}  // namespace propeval
