// Writes the bundled mini dataset: synthetic scenes, ground truth, raw
// detections with a known true/false-positive mix, and baseline proposals.
//
//   make_mini_dataset <out-dir>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <string>

#include "propeval/cli.hpp"
#include "support/scenes.hpp"

namespace fs = std::filesystem;
using namespace propeval;

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: make_mini_dataset <out-dir>\n";
    return 2;
  }
  const fs::path root = argv[1];
  fs::create_directories(root / "images");
  fs::create_directories(root / "proposals");

  GroundTruthSet gt;
  DetectionSet dets;
  std::mt19937_64 rng(20140901);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 10; ++i) {
    const int w = 200 + 8 * (i % 3);
    const int h = 150 + 6 * (i % 2);
    char id[16];
    std::snprintf(id, sizeof id, "mini_%02d", i);
    const auto scene = fixture::synthetic_scene(w, h, 1000 + static_cast<std::uint64_t>(i), 5 + i % 3);
    write_png(root / "images" / (std::string(id) + ".png"), scene.image);
    ImageAnnotations img{id, w, h, scene.objects};
    if (i % 4 == 0) img.objects.back().difficult = true;
    gt.add_image(img);

    // Jittered detections of each object plus background false positives.
    ImageDetections d{id, {}};
    for (const auto& a : scene.objects) {
      const double jx = (u(rng) - 0.5) * 0.2 * a.box.width();
      const double jy = (u(rng) - 0.5) * 0.2 * a.box.height();
      const BoundingBox moved = BoundingBox(a.box.x0() + jx, a.box.y0() + jy, a.box.x1() + jx, a.box.y1() + jy).clipped(w, h);
      d.detections.push_back({a.label, moved, 0.5 + 0.5 * u(rng)});
      d.detections.push_back({a.label, moved, 0.3 * u(rng)});
    }
    static const char* kLabels[] = {"car", "person", "dog", "chair"};
    for (int k = 0; k < 4; ++k) {
      const double x0 = u(rng) * (w - 30), y0 = u(rng) * (h - 30);
      d.detections.push_back({kLabels[k], BoundingBox(x0, y0, x0 + 10 + u(rng) * 20, y0 + 10 + u(rng) * 20), u(rng)});
    }
    dets.images.push_back(d);
  }
  save_ground_truth(root / "gt.jsonl", gt);
  {
    std::ofstream out(root / "detections.jsonl", std::ios::binary);
    write_detections_jsonl(out, dets);
  }

  const std::string images = (root / "images").string();
  const std::string gt_path = (root / "gt.jsonl").string();
  const std::string sw = (root / "proposals" / "sliding_window.jsonl").string();
  const std::string gauss = (root / "proposals" / "gaussian.jsonl").string();
  const char* sw_args[] = {"propeval", "baseline", "--method", "sliding_window", "--images", images.c_str(),
                           "-n", "1000", "--out", sw.c_str()};
  const char* gauss_args[] = {"propeval", "baseline", "--method", "gaussian", "--images", images.c_str(),
                              "--train-gt", gt_path.c_str(), "--seed", "7", "-n", "1000", "--out", gauss.c_str()};
  if (cli::run(10, sw_args) != 0 || cli::run(14, gauss_args) != 0) return 1;
  std::cout << "mini dataset written to " << root.string() << '\n';
  return 0;
}
