#include <gtest/gtest.h>

#include <random>

#include "propeval/baselines.hpp"
#include "propeval/evaluation.hpp"
#include "support/scenes.hpp"

namespace propeval {
namespace {

ImageProposals proposals(const std::string& id, std::vector<BoundingBox> boxes, int w = 500, int h = 375) {
  return {id, w, h, std::move(boxes)};
}

GroundTruthSet single_image_gt(std::vector<BoundingBox> boxes, int w = 500, int h = 375) {
  GroundTruthSet gt;
  ImageAnnotations img{"img", w, h, {}};
  for (const auto& b : boxes) img.objects.push_back({"obj", b, false});
  gt.add_image(img);
  return gt;
}

TEST(RepeatabilityTest, IdentityGivesOne) {
  const auto ref = sliding_window("img", 500, 375, 1000);
  const auto r = evaluate_repeatability(ref, ref, PerturbationSpec::none(), std::nullopt, 500, 375);
  ASSERT_TRUE(r.auc);
  EXPECT_EQ(*r.auc, 1.0);
  EXPECT_EQ(r.kept_count, ref.boxes.size());
}

TEST(RepeatabilityTest, EmptyPerturbedGivesZero) {
  const auto ref = sliding_window("img", 500, 375, 100);
  const auto r = evaluate_repeatability(ref, proposals("img", {}), PerturbationSpec::blur(1), std::nullopt, 500, 375);
  ASSERT_TRUE(r.auc);
  EXPECT_EQ(*r.auc, 0.0);
}

TEST(RepeatabilityTest, NoReferenceHasNoAuc) {
  const auto r = evaluate_repeatability(proposals("img", {}), proposals("img", {}), PerturbationSpec::none(),
                                        std::nullopt, 500, 375);
  EXPECT_FALSE(r.auc.has_value());
}

TEST(RepeatabilityTest, TwoBinsHalfMatched) {
  const BoundingBox small(10, 10, 22, 22);
  const BoundingBox large(100, 100, 400, 350);
  const auto edges = size_bin_edges(500, 375);
  ASSERT_NE(size_bin_index(small, edges), size_bin_index(large, edges));
  const auto r = evaluate_repeatability(proposals("img", {small, large}), proposals("img", {small}),
                                        PerturbationSpec::none(), std::nullopt, 500, 375, edges);
  ASSERT_TRUE(r.auc);
  EXPECT_DOUBLE_EQ(*r.auc, 0.5);
}

TEST(RepeatabilityTest, IdMismatchThrows) {
  EXPECT_THROW(evaluate_repeatability(proposals("a", {}), proposals("b", {}), PerturbationSpec::none(), std::nullopt,
                                      10, 10),
               InvalidArgument);
}

TEST(RepeatabilityTest, MatchingDisagreesWithCoverage) {
  const BoundingBox box(50, 50, 150, 150);
  const auto r = evaluate_repeatability(proposals("img", {box, box}), proposals("img", {box}),
                                        PerturbationSpec::none(), std::nullopt, 500, 375);
  const auto& curve = r.bin_curves[size_bin_index(box, size_bin_edges(500, 375))];
  ASSERT_TRUE(curve);
  for (double v : curve->recall) EXPECT_DOUBLE_EQ(v, 0.5);

  ProposalSet props{"m", false, {proposals("img", {box})}};
  const auto report = evaluate_recall(single_image_gt({box, box}), props, std::vector<std::size_t>{10},
                                      SelectionPolicy::kFirstN);
  for (double v : report.budgets[0].curve.recall) EXPECT_DOUBLE_EQ(v, 1.0);
}

TEST(RepeatabilityTest, BinIndependence) {
  const auto edges = size_bin_edges(500, 375);
  const std::vector<BoundingBox> small = {BoundingBox(10, 10, 22, 22), BoundingBox(30, 10, 44, 23)};
  const std::vector<BoundingBox> large = {BoundingBox(100, 100, 400, 350), BoundingBox(120, 90, 380, 360)};
  const std::vector<BoundingBox> small_pert = {BoundingBox(11, 10, 23, 22)};
  const std::vector<BoundingBox> large_pert = {BoundingBox(100, 105, 400, 350), BoundingBox(200, 200, 420, 370)};

  std::vector<BoundingBox> ref_all = small, pert_all = small_pert;
  ref_all.insert(ref_all.end(), large.begin(), large.end());
  pert_all.insert(pert_all.end(), large_pert.begin(), large_pert.end());
  const auto both = evaluate_repeatability(proposals("img", ref_all), proposals("img", pert_all),
                                           PerturbationSpec::none(), std::nullopt, 500, 375, edges);
  const auto only_large = evaluate_repeatability(proposals("img", large), proposals("img", large_pert),
                                                 PerturbationSpec::none(), std::nullopt, 500, 375, edges);
  for (std::size_t bin = 0; bin < kSizeBins; ++bin) {
    if (!only_large.bin_curves[bin]) continue;
    ASSERT_TRUE(both.bin_curves[bin]);
    EXPECT_EQ(both.bin_curves[bin]->recall, only_large.bin_curves[bin]->recall);
  }
}

TEST(RepeatabilityTest, SizePreservingSpecsOnContentIndependentGenerator) {
  const auto ref = sliding_window("img", 320, 240, 500);
  for (const char* kind : {"blur", "illumination", "jpeg"}) {
    for (const auto& spec : perturbation_suite(kind)) {
      const auto pert = sliding_window("img", 320, 240, 500);
      const auto r = evaluate_repeatability(ref, pert, spec, std::nullopt, 320, 240);
      EXPECT_EQ(r.auc.value(), 1.0);
    }
  }
}

TEST(RepeatabilityTest, ScaledSlidingWindowProjectsBack) {
  const auto ref = sliding_window("img", 320, 240, 500);
  const auto spec = PerturbationSpec::scale(2.0);
  const auto [w, h] = perturbed_size(320, 240, spec);
  auto pert = sliding_window("img", w, h, 500);
  const auto r = evaluate_repeatability(ref, pert, spec, std::nullopt, 320, 240);
  ASSERT_TRUE(r.auc);
  EXPECT_GT(*r.auc, 0.0);
  EXPECT_LT(*r.auc, 1.0);
}

TEST(RepeatabilityTest, RotationDropsOutsideCentres) {
  const CropRect crop = rotation_crop(500, 375);
  const auto spec = PerturbationSpec::rotation(0);
  // A perturbed box whose projected centre lies left of the image.
  const BoundingBox outside(-40.0 - crop.x, 10, -20.0 - crop.x, 30);
  const auto r = evaluate_repeatability(proposals("img", {BoundingBox(10, 10, 30, 30)}),
                                        proposals("img", {outside, BoundingBox(10 - crop.x, 10 - crop.y, 30 - crop.x, 30 - crop.y)}),
                                        spec, crop, 500, 375);
  EXPECT_EQ(r.kept_count, 1u);
  EXPECT_NEAR(r.auc.value(), 1.0, 1e-12);
}

TEST(RepeatabilityTest, AggregatePoolsImages) {
  const BoundingBox box(10, 10, 60, 60);
  const auto a = evaluate_repeatability(proposals("a", {box}), proposals("a", {box}), PerturbationSpec::none(),
                                        std::nullopt, 500, 375);
  const auto b = evaluate_repeatability(proposals("b", {box, box, box}), proposals("b", {}), PerturbationSpec::none(),
                                        std::nullopt, 500, 375);
  const std::vector<RepeatabilityResult> all = {a, b};
  const auto pooled = aggregate_repeatability(all);
  EXPECT_DOUBLE_EQ(pooled.auc.value(), 0.25);
  EXPECT_EQ(pooled.reference_count, 4u);
}

TEST(RecallTest, Examples) {
  const std::vector<BoundingBox> gt_boxes = {BoundingBox(0, 0, 100, 100), BoundingBox(200, 200, 300, 300)};
  const auto gt = single_image_gt(gt_boxes);

  ProposalSet exact{"gt", false, {proposals("img", gt_boxes)}};
  const auto full = evaluate_recall(gt, exact, default_recall_budgets(), SelectionPolicy::kFirstN);
  for (const auto& b : full.budgets) {
    EXPECT_EQ(b.curve.auc, 1.0);
    for (double v : b.curve.recall) EXPECT_EQ(v, 1.0);
  }

  ProposalSet none{"none", false, {}};
  const auto zero = evaluate_recall(gt, none, default_recall_budgets(), SelectionPolicy::kFirstN);
  for (const auto& b : zero.budgets) {
    EXPECT_EQ(b.curve.auc, 0.0);
    EXPECT_EQ(b.average_proposals, 0.0);
  }

  // Best IoUs 0.55 and 0.85.
  ProposalSet partial{"p", false, {proposals("img", {BoundingBox(0, 0, 55, 100), BoundingBox(200, 200, 285, 300)})}};
  const auto r = evaluate_recall(gt, partial, std::vector<std::size_t>{10}, SelectionPolicy::kFirstN);
  EXPECT_DOUBLE_EQ(r.budgets[0].recall_at_05, 1.0);
  EXPECT_DOUBLE_EQ(r.budgets[0].recall_at_08, 0.5);
  EXPECT_THROW(evaluate_recall(GroundTruthSet{}, partial, std::vector<std::size_t>{10}, SelectionPolicy::kFirstN),
               EmptyTargetError);
}

TEST(RecallTest, CoverageAllowsOneProposalForManyAnnotations) {
  const BoundingBox box(10, 10, 90, 90);
  const auto gt = single_image_gt({box, box, box});
  ProposalSet props{"p", false, {proposals("img", {box})}};
  EXPECT_EQ(coverage_best_ious(gt, props), (std::vector<double>{1.0, 1.0, 1.0}));
}

TEST(RecallTest, NestedSelectionsAreMonotone) {
  const auto scene = fixture::synthetic_scene(320, 240, 17, 10);
  GroundTruthSet gt;
  gt.add_image({"img", 320, 240, scene.objects});
  std::mt19937 rng(4);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<BoundingBox> boxes;
  for (int i = 0; i < 3000; ++i) {
    const double x0 = u(rng) * 300, y0 = u(rng) * 220;
    boxes.emplace_back(x0, y0, std::min(320.0, x0 + 2 + u(rng) * 200), std::min(240.0, y0 + 2 + u(rng) * 150), u(rng));
  }
  ProposalSet props{"rand", true, {proposals("img", boxes, 320, 240)}};
  for (auto policy : {SelectionPolicy::kTopScore, SelectionPolicy::kFirstN}) {
    const auto report = evaluate_recall(gt, props, std::vector<std::size_t>{1, 10, 50, 100, 500, 1000, 3000}, policy);
    for (std::size_t k = 1; k < report.budgets.size(); ++k) {
      for (std::size_t t = 0; t < report.budgets[k].curve.recall.size(); ++t) {
        EXPECT_LE(report.budgets[k - 1].curve.recall[t], report.budgets[k].curve.recall[t]);
      }
    }
  }
}

TEST(RecallTest, ThreadCountDoesNotChangeResult) {
  GroundTruthSet gt;
  ProposalSet props{"sw", false, {}};
  for (int i = 0; i < 12; ++i) {
    const auto scene = fixture::synthetic_scene(160, 120, 100 + i);
    const std::string id = "im" + std::to_string(i);
    gt.add_image({id, 160, 120, scene.objects});
    props.images.push_back(sliding_window(id, 160, 120, 300));
  }
  const auto one = coverage_best_ious(gt, props, 1);
  const auto many = coverage_best_ious(gt, props, 7);
  EXPECT_EQ(one, many);
}

}  // namespace
}  // namespace propeval
