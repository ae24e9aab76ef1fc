#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "propeval/baselines.hpp"
#include "support/scenes.hpp"

namespace propeval {
namespace {

// Kolmogorov-Smirnov statistic against Uniform(lo, hi).
double ks_uniform(std::vector<double> v, double lo, double hi) {
  std::sort(v.begin(), v.end());
  const double n = static_cast<double>(v.size());
  double d = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double f = (v[i] - lo) / (hi - lo);
    d = std::max({d, (i + 1) / n - f, f - i / n});
  }
  return d;
}

GroundTruthSet gt_with_centers(int count) {
  GroundTruthSet gt;
  ImageAnnotations img{"a", 1000, 1000, {}};
  for (int i = 1; i <= count; ++i) {
    const double cx = i;
    img.objects.push_back({"obj", BoundingBox(cx - 0.5, 100 + i % 7, cx + 0.5 + (i % 3), 120 + i % 11), false});
  }
  gt.add_image(img);
  return gt;
}

GroundTruthSet identical_boxes(int count) {
  GroundTruthSet gt;
  ImageAnnotations img{"a", 500, 400, {}};
  for (int i = 0; i < count; ++i) img.objects.push_back({"obj", BoundingBox(100, 50, 300, 150), false});
  gt.add_image(img);
  return gt;
}

BoxParamStats synthetic_stats() {
  BoxParamStats s;
  s.range = {ParamRange{50, 450}, ParamRange{40, 330}, ParamRange{20, 300}, ParamRange{-1.0, 1.0}};
  s.mean = Eigen::Vector4d(250, 180, 120, 0.1);
  s.covariance = Eigen::Vector4d(900, 600, 1600, 0.25).asDiagonal();
  s.covariance(0, 2) = s.covariance(2, 0) = 300;
  return s;
}

TEST(BoxStatsTest, TrimDropsFloorFractionPerSide) {
  GroundTruthSet gt;
  ImageAnnotations img{"a", 2000, 2000, {}};
  for (int i = 0; i < 1000; ++i) img.objects.push_back({"o", BoundingBox(i, 0, i + 2, 2), false});
  gt.add_image(img);
  const auto stats = estimate_box_stats(gt, 0.005);
  // Centres are i + 1 for i in [0, 1000): 5 dropped per side.
  EXPECT_DOUBLE_EQ(stats.range[0].lo, 6.0);
  EXPECT_DOUBLE_EQ(stats.range[0].hi, 995.0);
}

TEST(BoxStatsTest, SortAndSliceRange) {
  const auto stats = estimate_box_stats(gt_with_centers(100), 0.01);
  // Centre x values: i + (i % 3) / 2 for i in 1..100; sort-and-slice oracle.
  std::vector<double> cx;
  for (int i = 1; i <= 100; ++i) cx.push_back(i + 0.5 * (i % 3));
  std::sort(cx.begin(), cx.end());
  EXPECT_DOUBLE_EQ(stats.range[0].lo, cx[1]);
  EXPECT_DOUBLE_EQ(stats.range[0].hi, cx[98]);
}

TEST(BoxStatsTest, OneToHundredGivesTwoToNinetyNine) {
  GroundTruthSet gt;
  ImageAnnotations img{"a", 200, 200, {}};
  for (int i = 1; i <= 100; ++i) img.objects.push_back({"o", BoundingBox(i - 1, 0, i + 1, 2), false});
  gt.add_image(img);
  const auto stats = estimate_box_stats(gt, 0.01);
  EXPECT_DOUBLE_EQ(stats.range[0].lo, 2.0);
  EXPECT_DOUBLE_EQ(stats.range[0].hi, 99.0);
}

TEST(BoxStatsTest, IdenticalBoxesDegenerate) {
  const auto stats = estimate_box_stats(identical_boxes(20));
  for (const auto& r : stats.range) EXPECT_EQ(r.lo, r.hi);
  EXPECT_LT(stats.covariance.norm(), 1e-18);
  EXPECT_DOUBLE_EQ(stats.mean[0], 200.0);
}

TEST(BoxStatsTest, Errors) {
  EXPECT_THROW(estimate_box_stats(identical_boxes(9)), InvalidArgument);
  EXPECT_THROW(estimate_box_stats(identical_boxes(20), 0.5), InvalidArgument);
}

TEST(BoxStatsTest, CovarianceIsSymmetricPsd) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0, 1);
  GroundTruthSet gt;
  ImageAnnotations img{"a", 500, 500, {}};
  for (int i = 0; i < 200; ++i) {
    const double x0 = u(rng) * 300, y0 = u(rng) * 300;
    img.objects.push_back({"o", BoundingBox(x0, y0, x0 + 5 + u(rng) * 190, y0 + 5 + u(rng) * 190), false});
  }
  gt.add_image(img);
  const auto stats = estimate_box_stats(gt);
  EXPECT_TRUE(stats.covariance.isApprox(stats.covariance.transpose()));
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> eig(stats.covariance);
  EXPECT_GE(eig.eigenvalues().minCoeff(), -1e-9);
  for (const auto& r : stats.range) EXPECT_LE(r.lo, r.hi);
}

TEST(UniformBaselineTest, Examples) {
  const auto stats = synthetic_stats();
  EXPECT_TRUE(sample_uniform(stats, "a", 500, 375, 0, 1).boxes.empty());

  const auto degenerate = estimate_box_stats(identical_boxes(20));
  const auto same = sample_uniform(degenerate, "a", 500, 400, 50, 9);
  ASSERT_EQ(same.boxes.size(), 50u);
  for (const auto& b : same.boxes) EXPECT_EQ(b, same.boxes[0]);
  EXPECT_NEAR(same.boxes[0].x0(), 100, 1e-9);
  EXPECT_NEAR(same.boxes[0].y0(), 50, 1e-9);
  EXPECT_NEAR(same.boxes[0].x1(), 300, 1e-9);
  EXPECT_NEAR(same.boxes[0].y1(), 150, 1e-9);
}

TEST(UniformBaselineTest, MarginalsAreUniformByKs) {
  const auto stats = synthetic_stats();
  const auto params = draw_uniform_params(stats, 100000, 12345);
  std::vector<double> cx, root_area;
  for (const auto& p : params) {
    cx.push_back(p[0]);
    root_area.push_back(p[2]);
  }
  // Asymptotic critical value at alpha = 0.01.
  const double critical = 1.628 / std::sqrt(100000.0);
  EXPECT_LT(ks_uniform(cx, stats.range[0].lo, stats.range[0].hi), critical);
  EXPECT_LT(ks_uniform(root_area, stats.range[2].lo, stats.range[2].hi), critical);
}

TEST(UniformBaselineTest, ReproducibleAndInside) {
  const auto stats = synthetic_stats();
  const auto a = sample_uniform(stats, "x", 500, 375, 2000, 77);
  const auto b = sample_uniform(stats, "x", 500, 375, 2000, 77);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, sample_uniform(stats, "x", 500, 375, 2000, 78));
  for (const auto& box : a.boxes) {
    EXPECT_TRUE(box.inside(500, 375));
    EXPECT_GT(box.width(), 0.0);
    EXPECT_GT(box.height(), 0.0);
  }
}

TEST(GaussianBaselineTest, ZeroCovarianceGivesMeanBox) {
  auto stats = synthetic_stats();
  stats.covariance.setZero();
  const auto img = sample_gaussian(stats, "a", 500, 375, 10, 4);
  const BoundingBox mean_box = box_from_params({250, 180, 120, 0.1}, 500, 375);
  for (const auto& b : img.boxes) EXPECT_EQ(b, mean_box);
}

TEST(GaussianBaselineTest, SampleMeanWithinThreeSigma) {
  const auto stats = synthetic_stats();
  const std::size_t n = 100000;
  const auto params = draw_gaussian_params(stats, n, 2024);
  for (int d = 0; d < 4; ++d) {
    double sum = 0.0;
    for (const auto& p : params) sum += p[static_cast<std::size_t>(d)];
    const double sigma = std::sqrt(stats.covariance(d, d));
    EXPECT_NEAR(sum / n, stats.mean[d], 3.0 * sigma / std::sqrt(double(n))) << d;
  }
}

TEST(GaussianBaselineTest, IdentityCovarianceRecovered) {
  BoxParamStats stats;
  stats.covariance = Eigen::Matrix4d::Identity();
  const std::size_t n = 100000;
  const auto params = draw_gaussian_params(stats, n, 31);
  Eigen::Matrix4d cov = Eigen::Matrix4d::Zero();
  Eigen::Vector4d mean = Eigen::Vector4d::Zero();
  for (const auto& p : params) mean += Eigen::Vector4d(p[0], p[1], p[2], p[3]);
  mean /= double(n);
  for (const auto& p : params) {
    const Eigen::Vector4d d = Eigen::Vector4d(p[0], p[1], p[2], p[3]) - mean;
    cov += d * d.transpose();
  }
  cov /= double(n - 1);
  EXPECT_LT((cov - Eigen::Matrix4d::Identity()).norm() / Eigen::Matrix4d::Identity().norm(), 0.05);
}

TEST(GaussianBaselineTest, NegativeEigenvaluesClamped) {
  BoxParamStats stats;
  stats.mean = Eigen::Vector4d(100, 100, 50, 0);
  stats.covariance = Eigen::Vector4d(4, -1e-6, 9, 0.01).asDiagonal();
  const Eigen::Matrix4d root = psd_sqrt(stats.covariance);
  EXPECT_NEAR(root(1, 1), 0.0, 1e-12);
  EXPECT_NEAR(root(0, 0), 2.0, 1e-12);
  const auto img = sample_gaussian(stats, "a", 200, 200, 100, 1);
  for (const auto& b : img.boxes) EXPECT_TRUE(b.inside(200, 200));
}

TEST(SlidingWindowTest, Examples) {
  EXPECT_EQ(sliding_window("a", 500, 375, 1000), sliding_window("a", 500, 375, 1000));
  EXPECT_EQ(sliding_window("a", 512, 512, 1).boxes.size(), 1u);
  const auto many = sliding_window("a", 500, 375, 1000);
  EXPECT_LE(many.boxes.size(), 1000u);
  EXPECT_GT(many.boxes.size(), 900u);
  for (const auto& b : many.boxes) {
    EXPECT_TRUE(b.inside(500, 375));
    EXPECT_GT(b.area(), 0.0);
  }
}

TEST(SlidingWindowTest, SizesArePowersOfTwoThatFit) {
  const auto sizes = sliding_window_sizes(500, 375);
  EXPECT_EQ(sizes.size(), 25u);  // {16..256}^2
  EXPECT_EQ(sizes.front(), std::make_pair(256, 256));
  EXPECT_TRUE(sliding_window_sizes(10, 10).empty());
  EXPECT_TRUE(sliding_window("a", 10, 10, 100).boxes.empty());
}

TEST(SlidingWindowTest, CountNeverExceedsBudget) {
  for (int w : {40, 200, 500, 1000}) {
    for (int h : {40, 300, 700}) {
      for (std::size_t n : {1u, 7u, 100u, 999u, 5000u}) {
        const auto img = sliding_window("a", w, h, n);
        EXPECT_LE(img.boxes.size(), n);
        for (const auto& b : img.boxes) EXPECT_TRUE(b.inside(w, h));
      }
    }
  }
}

TEST(SuperpixelBaselineTest, ConstantImageGivesFullImageBox) {
  const auto img = superpixel_proposals(fixture::constant_image(40, 30, 10, 200, 30), "c", default_superpixel_params());
  ASSERT_EQ(img.boxes.size(), 1u);
  EXPECT_EQ(img.boxes[0], BoundingBox(0, 0, 40, 30));
}

TEST(SuperpixelBaselineTest, TwoHalfPlanes) {
  Image img = fixture::constant_image(4, 4, 0, 0, 0);
  for (int y = 0; y < 4; ++y)
    for (int x = 2; x < 4; ++x)
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = 255;
  const auto props = superpixel_proposals(img, "h", {{0.0, 1.0, 1}});
  ASSERT_EQ(props.boxes.size(), 2u);
  EXPECT_EQ(props.boxes[0], BoundingBox(0, 0, 2, 4));
  EXPECT_EQ(props.boxes[1], BoundingBox(2, 0, 4, 4));
}

TEST(SuperpixelBaselineTest, NaturalScaleCount) {
  const auto scene = fixture::synthetic_scene(500, 375, 8);
  const auto props = superpixel_proposals(scene.image, "s", default_superpixel_params());
  EXPECT_GE(props.boxes.size(), 10u);
  EXPECT_LE(props.boxes.size(), 5000u);
  for (const auto& b : props.boxes) {
    EXPECT_TRUE(b.inside(500, 375));
    EXPECT_GT(b.area(), 0.0);
    EXPECT_FALSE(b.score().has_value());
  }
}

TEST(SuperpixelBaselineTest, RequiresSettings) {
  EXPECT_THROW(superpixel_proposals(fixture::constant_image(4, 4, 0, 0, 0), "x", {}), InvalidArgument);
}

TEST(ImageSeedTest, DependsOnSeedAndId) {
  EXPECT_EQ(image_seed(1, "a"), image_seed(1, "a"));
  EXPECT_NE(image_seed(1, "a"), image_seed(2, "a"));
  EXPECT_NE(image_seed(1, "a"), image_seed(1, "b"));
}

}  // namespace
}  // namespace propeval
