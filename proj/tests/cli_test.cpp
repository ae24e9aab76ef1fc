#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "propeval/cli.hpp"
#include "support/scenes.hpp"
#include "support/tempdir.hpp"

namespace propeval {
namespace {

namespace fs = std::filesystem;

struct RunResult {
  int code;
  std::string out;
  std::string err;
};

RunResult run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "propeval");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::size_t count_lines(const fs::path& p) {
  const std::string s = slurp(p);
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(slurp(p)); }

// Small image directory plus matching ground truth.
void write_fixture(const fs::path& root, int count, int w = 96, int h = 72) {
  fs::create_directories(root / "images");
  GroundTruthSet gt;
  for (int i = 0; i < count; ++i) {
    const std::string id = "im" + std::to_string(i);
    const auto scene = fixture::synthetic_scene(w, h, 50 + static_cast<std::uint64_t>(i), 4);
    write_png(root / "images" / (id + ".png"), scene.image);
    gt.add_image({id, w, h, scene.objects});
  }
  save_ground_truth(root / "gt.jsonl", gt);
}

TEST(CliPerturbTest, RotationWritesNineImagesAndMetadata) {
  fixture::TempDir tmp;
  write_fixture(tmp.path(), 1);
  const auto r = run_cli({"perturb", "--images", (tmp / "images").string(), "--out", (tmp / "pert").string(),
                          "--kind", "rotation", "--threads", "1"});
  ASSERT_EQ(r.code, 0) << r.err;
  std::size_t images = 0;
  for (const auto& e : fs::recursive_directory_iterator(tmp / "pert")) images += e.path().extension() == ".png";
  EXPECT_EQ(images, 9u);
  EXPECT_EQ(count_lines(tmp / "pert" / "projection.jsonl"), 9u);
  EXPECT_TRUE(fs::exists(tmp / "pert" / "rotation" / "-20" / "im0.png"));
  const auto first = nlohmann::json::parse(slurp(tmp / "pert" / "projection.jsonl").substr(0, slurp(tmp / "pert" / "projection.jsonl").find('\n')));
  EXPECT_EQ(first["crop"].size(), 4u);
}

TEST(CliPerturbTest, NoneIsOneIdenticalCopy) {
  fixture::TempDir tmp;
  write_fixture(tmp.path(), 1);
  const auto r = run_cli({"perturb", "--images", (tmp / "images").string(), "--out", (tmp / "pert").string(),
                          "--kind", "none"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(read_image(tmp / "pert" / "none" / "im0.png"), read_image(tmp / "images" / "im0.png"));
  EXPECT_EQ(count_lines(tmp / "pert" / "projection.jsonl"), 1u);
}

TEST(CliPerturbTest, UnreadableImageNamesFile) {
  fixture::TempDir tmp;
  write_fixture(tmp.path(), 2);
  write_file_bytes(tmp / "images" / "broken.png", {0x89, 'P', 'N', 'G', 1, 2, 3});
  const auto r = run_cli({"perturb", "--images", (tmp / "images").string(), "--out", (tmp / "pert").string(),
                          "--kind", "none"});
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("broken"), std::string::npos) << r.err;
  EXPECT_TRUE(fs::exists(tmp / "pert" / "none" / "im0.png"));
}

TEST(CliBaselineTest, SlidingWindowNeedsNoSeed) {
  fixture::TempDir tmp;
  write_fixture(tmp.path(), 2);
  const auto r = run_cli({"baseline", "--method", "sliding_window", "--images", (tmp / "images").string(), "-n",
                          "1000", "--out", (tmp / "sw.jsonl").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto set = load_proposals(tmp / "sw.jsonl");
  ASSERT_EQ(set.images.size(), 2u);
  EXPECT_EQ(set.method, "sliding_window");
  for (const auto& img : set.images) {
    EXPECT_LE(img.boxes.size(), 1000u);
    EXPECT_EQ(img.width, 96);
  }
}

TEST(CliBaselineTest, GaussianRequiresTrainingGroundTruthAndSeed) {
  fixture::TempDir tmp;
  write_fixture(tmp.path(), 3);
  auto r = run_cli({"baseline", "--method", "gaussian", "--images", (tmp / "images").string(), "--seed", "1",
                    "--out", (tmp / "g.jsonl").string()});
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("--train-gt"), std::string::npos);
  r = run_cli({"baseline", "--method", "uniform", "--images", (tmp / "images").string(), "--train-gt",
               (tmp / "gt.jsonl").string(), "--out", (tmp / "g.jsonl").string()});
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("--seed"), std::string::npos);
}

TEST(CliBaselineTest, SameSeedIsByteIdentical) {
  fixture::TempDir tmp;
  write_fixture(tmp.path(), 3);
  for (const char* method : {"gaussian", "uniform"}) {
    for (const char* name : {"a.jsonl", "b.jsonl"}) {
      const auto r = run_cli({"baseline", "--method", method, "--gt", (tmp / "gt.jsonl").string(), "--train-gt",
                              (tmp / "gt.jsonl").string(), "--seed", "42", "-n", "200", "--out", (tmp / name).string(),
                              "--threads", name[0] == 'a' ? "1" : "3"});
      ASSERT_EQ(r.code, 0) << r.err;
    }
    EXPECT_EQ(slurp(tmp / "a.jsonl"), slurp(tmp / "b.jsonl"));
  }
}

TEST(CliBaselineTest, TreeModeWritesProposalsPerDirectory) {
  fixture::TempDir tmp;
  write_fixture(tmp.path(), 2);
  ASSERT_EQ(run_cli({"perturb", "--images", (tmp / "images").string(), "--out", (tmp / "pert").string(), "--kind",
                     "blur"}).code,
            0);
  const auto r = run_cli({"baseline", "--method", "superpixels", "--images", (tmp / "pert").string(), "--tree"});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const auto& spec : perturbation_suite("blur")) {
    EXPECT_EQ(load_proposals(cli::spec_dir(tmp / "pert", spec) / "proposals.jsonl").images.size(), 2u);
  }
}

TEST(CliRecallTest, GroundTruthAsProposalsGivesOne) {
  fixture::TempDir tmp;
  write_fixture(tmp.path(), 3);
  const auto gt = load_ground_truth(tmp / "gt.jsonl", GroundTruthFormat::kJsonl);
  ProposalSet props{"oracle", false, {}};
  for (const auto& img : gt.images()) {
    ImageProposals p{img.image_id, img.width, img.height, {}};
    for (const auto& a : img.objects) p.boxes.push_back(a.box);
    props.images.push_back(p);
  }
  save_proposals(tmp / "oracle.jsonl", props);
  const auto r = run_cli({"eval-recall", "--gt", (tmp / "gt.jsonl").string(), "--proposals",
                          (tmp / "oracle.jsonl").string(), "--out", (tmp / "out").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto summary = read_json(tmp / "out" / "summary.json");
  for (const auto& b : summary["budgets"]) EXPECT_EQ(b["auc"].get<double>(), 1.0);
  std::ifstream csv(tmp / "out" / "recall_curves.csv");
  Metadata meta;
  const auto rows = read_curve_csv(csv, &meta);
  EXPECT_EQ(rows.size(), 3u * 41u);
  EXPECT_FALSE(meta.empty());
}

TEST(CliRepeatabilityTest, IdentityRowIsOneAndMissingImagesAreListed) {
  fixture::TempDir tmp;
  write_fixture(tmp.path(), 2);
  ASSERT_EQ(run_cli({"perturb", "--images", (tmp / "images").string(), "--out", (tmp / "pert").string(), "--kind",
                     "illumination", "--kind", "scale"}).code,
            0);
  ASSERT_EQ(run_cli({"baseline", "--method", "sliding_window", "--images", (tmp / "pert").string(), "--tree", "-n",
                     "300"}).code,
            0);
  ASSERT_EQ(run_cli({"baseline", "--method", "sliding_window", "--images", (tmp / "images").string(), "-n", "300",
                     "--out", (tmp / "ref.jsonl").string()}).code,
            0);
  auto r = run_cli({"eval-repeatability", "--reference", (tmp / "ref.jsonl").string(), "--pert-root",
                    (tmp / "pert").string(), "-n", "300", "--out", (tmp / "out").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto summary = read_json(tmp / "out" / "summary.json");
  int identities = 0;
  for (const auto& s : summary["specs"]) {
    const auto spec = PerturbationSpec::parse(s["kind"].get<std::string>(), s["param"].get<std::string>());
    if (spec.is_identity() || spec.kind() == PerturbationKind::kIllumination) {
      EXPECT_EQ(s["auc"].get<double>(), 1.0) << s.dump();
      identities += spec.is_identity();
    }
  }
  EXPECT_EQ(identities, 2);
  ASSERT_TRUE(fs::exists(tmp / "out" / "repeatability_auc.csv"));

  // Drop one image from one perturbed set: outputs still written, exit non-zero,
  // the image id is reported.
  const fs::path victim = tmp / "pert" / "scale" / "0.5" / "proposals.jsonl";
  auto set = load_proposals(victim);
  set.images.erase(set.images.begin());
  save_proposals(victim, set);
  r = run_cli({"eval-repeatability", "--reference", (tmp / "ref.jsonl").string(), "--pert-root",
               (tmp / "pert").string(), "-n", "300", "--out", (tmp / "out2").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("im0"), std::string::npos) << r.err;
  EXPECT_TRUE(fs::exists(tmp / "out2" / "repeatability_curves.csv"));
}

TEST(CliDetectionTest, ThreeImageFixture) {
  fixture::TempDir tmp;
  GroundTruthSet gt;
  gt.add_image({"a", 100, 100, {{"car", BoundingBox(0, 0, 10, 10), false}}});
  gt.add_image({"b", 100, 100, {{"car", BoundingBox(0, 0, 10, 10), false}, {"dog", BoundingBox(20, 20, 30, 30), false}}});
  gt.add_image({"c", 100, 100, {{"dog", BoundingBox(0, 0, 20, 20), false}}});
  save_ground_truth(tmp / "gt.jsonl", gt);
  DetectionSet dets{{{"a", {{"car", BoundingBox(0, 0, 10, 10), 0.9}}},
                     {"b", {{"car", BoundingBox(50, 50, 60, 60), 0.8}, {"dog", BoundingBox(20, 20, 30, 30), 0.7}}},
                     {"c", {{"dog", BoundingBox(0, 0, 20, 20), 0.6}, {"dog", BoundingBox(0, 0, 20, 20), 0.65}}}}};
  {
    std::ofstream out(tmp / "dets.jsonl");
    write_detections_jsonl(out, dets);
  }
  const auto r = run_cli({"eval-detection", "--gt", (tmp / "gt.jsonl").string(), "--detections",
                          (tmp / "dets.jsonl").string(), "--out", (tmp / "out").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto summary = read_json(tmp / "out" / "summary.json");
  // car: TP then FP, 11-point AP 6/11; dog: duplicate suppressed, AP 1.
  EXPECT_DOUBLE_EQ(summary["ap"]["car"].get<double>(), 6.0 / 11.0);
  EXPECT_DOUBLE_EQ(summary["ap"]["dog"].get<double>(), 1.0);
  EXPECT_DOUBLE_EQ(summary["mAP"].get<double>(), 17.0 / 22.0);
  EXPECT_NE(slurp(tmp / "out" / "ap.csv").find("mAP,"), std::string::npos);
}

TEST(CliConfigTest, ConfigFileAndFlagsWin) {
  fixture::TempDir tmp;
  write_fixture(tmp.path(), 2);
  {
    std::ofstream cfg(tmp / "run.toml");
    cfg << "[baseline]\nmethod = \"sliding_window\"\nimages = \"" << (tmp / "images").generic_string()
        << "\"\ncount = 50\nout = \"" << (tmp / "cfg.jsonl").generic_string() << "\"\n";
  }
  auto r = run_cli({"--config", (tmp / "run.toml").string(), "baseline"});
  ASSERT_EQ(r.code, 0) << r.err << r.out;
  EXPECT_EQ(load_proposals(tmp / "cfg.jsonl").images[0].boxes.size(), 50u);
  r = run_cli({"--config", (tmp / "run.toml").string(), "baseline", "-n", "20"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(load_proposals(tmp / "cfg.jsonl").images[0].boxes.size(), 20u);
}

TEST(CliReportTest, RendersSvgPerCurveCsv) {
  fixture::TempDir tmp;
  save_curve_csv(tmp / "recall_curves.csv", {{"k", "v"}},
                 {{"m", "none", "", "10", "0.5", 1.0}, {"m", "none", "", "10", "1", 0.5}});
  {
    std::ofstream other(tmp / "ap.csv");
    other << "class,ap\ncar,1\n";
  }
  const auto r = run_cli({"report", "--in", tmp.path().string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string svg = slurp(tmp / "recall_curves.svg");
  EXPECT_TRUE(svg.starts_with("<svg"));
  EXPECT_NE(svg.find("<polyline"), std::string::npos);
  EXPECT_FALSE(fs::exists(tmp / "ap.svg"));
}

TEST(CliTest, UsageErrors) {
  EXPECT_NE(run_cli({}).code, 0);
  EXPECT_NE(run_cli({"frobnicate"}).code, 0);
  EXPECT_NE(run_cli({"eval-recall", "--gt", "/nonexistent"}).code, 0);
}

TEST(ReportTest, CsvRoundTrip) {
  std::stringstream ss;
  const std::vector<CurveRow> rows = {{"a,b", "scale", "0.5", "1000", "0.25", 0.125}, {"x\"y", "none", "", "", "1", 1}};
  write_curve_csv(ss, {{"seed", "3"}}, rows);
  Metadata meta;
  const auto back = read_curve_csv(ss, &meta);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].method, "a,b");
  EXPECT_EQ(back[1].method, "x\"y");
  EXPECT_EQ(back[0].value, 0.125);
  EXPECT_EQ(meta.back(), (std::pair<std::string, std::string>{"seed", "3"}));
}

}  // namespace
}  // namespace propeval
