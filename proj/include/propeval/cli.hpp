#pragma once

// Command-line front end. run() is the whole program and is callable from
// tests; tools/propeval.cpp only forwards main().
//
// Perturbed trees: <root>/<kind>/<param>/<image_id>.png, identity spec "none"
// directly under <root>/none/, and <root>/projection.jsonl describing every
// emitted image. Proposals for a perturbed tree live next to the images as
// <root>/<kind>/<param>/proposals.jsonl.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "propeval/baselines.hpp"
#include "propeval/data_io.hpp"
#include "propeval/detection_eval.hpp"
#include "propeval/errors.hpp"
#include "propeval/evaluation.hpp"
#include "propeval/image.hpp"
#include "propeval/log.hpp"
#include "propeval/parallel.hpp"
#include "propeval/perturbations.hpp"
#include "propeval/report.hpp"

namespace propeval::cli {

namespace fs = std::filesystem;

inline const std::vector<std::string>& all_kinds() {
  static const std::vector<std::string> kinds = {"none", "scale", "blur", "rotation", "illumination", "jpeg"};
  return kinds;
}

inline fs::path spec_dir(const fs::path& root, const PerturbationSpec& spec) {
  const std::string label = spec.label();
  return label.empty() ? root / spec.kind_name() : root / spec.kind_name() / label;
}

struct ImageEntry {
  std::string id;
  fs::path path;
};

inline std::vector<ImageEntry> list_images(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<ImageEntry> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && is_image_file(e.path())) out.push_back({e.path().stem().string(), e.path()});
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  for (std::size_t i = 1; i < out.size(); ++i) {
    if (out[i].id == out[i - 1].id) throw InvalidArgument("two images share the id " + out[i].id + " in " + dir.string());
  }
  return out;
}

// Collects per-image failures; reported together at the end of a command.
struct Failures {
  std::vector<std::string> items;

  void report(std::ostream& err, const std::string& what) const {
    if (items.empty()) return;
    err << what << " failed for " << items.size() << " item(s):\n";
    for (const auto& s : items) err << "  " << s << '\n';
  }
};

struct CropKey {
  std::string image_id;
  std::string kind;
  std::string param;
  auto operator<=>(const CropKey&) const = default;
};

// Crop rectangles recorded by `perturb`, if the tree has them.
inline std::map<CropKey, CropRect> read_projection_metadata(const fs::path& root) {
  std::map<CropKey, CropRect> out;
  const fs::path path = root / "projection.jsonl";
  if (!fs::exists(path)) return out;
  std::ifstream in(path);
  detail::for_each_jsonl(in, path.string(), [&](const ordered_json& j, std::size_t line_no) {
    if (!j.contains("crop") || j["crop"].is_null()) return;
    const auto& c = j["crop"];
    if (!c.is_array() || c.size() != 4) throw ParseError(detail::where(path.string(), line_no) + "crop must be [x,y,w,h]");
    const std::string param = j["param"].is_null() ? "" : j["param"].get<std::string>();
    out[{j.at("image_id").get<std::string>(), j.at("kind").get<std::string>(), param}] =
        CropRect{c[0].get<int>(), c[1].get<int>(), c[2].get<int>(), c[3].get<int>()};
  });
  return out;
}

inline std::vector<PerturbationSpec> specs_for(const std::vector<std::string>& kinds) {
  std::vector<PerturbationSpec> out;
  for (const auto& k : kinds) {
    const auto suite = perturbation_suite(k);
    out.insert(out.end(), suite.begin(), suite.end());
  }
  return out;
}

inline std::vector<std::string> expand_kinds(std::vector<std::string> kinds) {
  if (kinds.empty() || std::find(kinds.begin(), kinds.end(), "all") != kinds.end()) return all_kinds();
  for (const auto& k : kinds) parse_perturbation_kind(k);
  return kinds;
}

inline void write_json(const fs::path& path, const ordered_json& j) { write_text_file(path, j.dump(2) + "\n"); }

inline void save_files(const fs::path& dir, const Metadata& meta,
                       const std::map<std::string, std::vector<CurveRow>>& files) {
  for (const auto& [name, rows] : files) save_curve_csv(dir / name, meta, rows);
}

inline std::string join(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

// --- perturb ---------------------------------------------------------------

struct PerturbOptions {
  fs::path images;
  fs::path out;
  std::vector<std::string> kinds;
  unsigned threads = 1;
};

inline int cmd_perturb(const PerturbOptions& o, std::ostream& out, std::ostream& err) {
  const auto images = list_images(o.images);
  const auto kinds = expand_kinds(o.kinds);
  const auto specs = specs_for(kinds);
  std::vector<std::vector<std::string>> lines(images.size());
  std::vector<std::string> errors(images.size());
  parallel_for(images.size(), o.threads, [&](std::size_t i) {
    try {
      const Image img = read_image(images[i].path);
      const CropRect crop = rotation_crop(img.width(), img.height());
      for (const auto& spec : specs) {
        const bool rotation = spec.kind() == PerturbationKind::kRotation;
        const Image pert = apply_perturbation(img, spec, crop);
        const fs::path dir = spec_dir(o.out, spec);
        fs::create_directories(dir);
        write_png(dir / (images[i].id + ".png"), pert);
        ordered_json j;
        j["image_id"] = images[i].id;
        j["kind"] = spec.kind_name();
        j["param"] = spec.label().empty() ? ordered_json(nullptr) : ordered_json(spec.label());
        j["width"] = img.width();
        j["height"] = img.height();
        j["perturbed_width"] = pert.width();
        j["perturbed_height"] = pert.height();
        j["crop"] = rotation ? ordered_json::array({crop.x, crop.y, crop.width, crop.height}) : ordered_json(nullptr);
        lines[i].push_back(j.dump());
      }
    } catch (const std::exception& e) {
      errors[i] = images[i].id + ": " + e.what();
    }
  });
  Failures failures;
  std::string meta;
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (!errors[i].empty()) failures.items.push_back(errors[i]);
    for (const auto& l : lines[i]) meta += l + "\n";
  }
  write_text_file(o.out / "projection.jsonl", meta);
  out << "perturbed " << images.size() - failures.items.size() << " image(s) x " << specs.size() << " spec(s) into "
      << o.out.string() << '\n';
  failures.report(err, "perturb");
  return failures.items.empty() ? 0 : 2;
}

// --- baseline --------------------------------------------------------------

struct BaselineOptions {
  std::string method;
  fs::path images;
  fs::path sizes_gt;
  GroundTruthFormat gt_format = GroundTruthFormat::kJsonl;
  fs::path train_gt;
  fs::path out;
  bool tree = false;
  std::size_t n = 1000;
  std::optional<std::uint64_t> seed;
  double trim = 0.005;
  unsigned threads = 1;
};

struct SizedImage {
  std::string id;
  int width = 0;
  int height = 0;
  fs::path path;  // empty when only the size is known
};

inline ProposalSet generate_baseline(const BaselineOptions& o, const std::optional<BoxParamStats>& stats,
                                     const std::vector<SizedImage>& images, Failures& failures) {
  ProposalSet set{o.method, false, std::vector<ImageProposals>(images.size())};
  std::vector<std::string> errors(images.size());
  parallel_for(images.size(), o.threads, [&](std::size_t i) {
    const auto& im = images[i];
    try {
      int w = im.width, h = im.height;
      std::optional<Image> pixels;
      if (!im.path.empty()) {
        pixels = read_image(im.path);
        w = pixels->width();
        h = pixels->height();
      }
      ImageProposals props;
      if (o.method == "sliding_window") {
        props = sliding_window(im.id, w, h, o.n);
      } else if (o.method == "uniform") {
        props = sample_uniform(*stats, im.id, w, h, o.n, *o.seed);
      } else if (o.method == "gaussian") {
        props = sample_gaussian(*stats, im.id, w, h, o.n, *o.seed);
      } else {
        if (!pixels) throw ConfigError("superpixels need --images");
        props = superpixel_proposals(*pixels, im.id, default_superpixel_params());
        if (props.boxes.size() > o.n) props.boxes.resize(o.n);
      }
      set.images[i] = std::move(props);
    } catch (const std::exception& e) {
      errors[i] = im.id + ": " + e.what();
    }
  });
  ProposalSet ok{set.method, false, {}};
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (errors[i].empty()) {
      ok.images.push_back(std::move(set.images[i]));
    } else {
      failures.items.push_back(errors[i]);
    }
  }
  return ok;
}

inline int cmd_baseline(const BaselineOptions& o, std::ostream& out, std::ostream& err) {
  static const std::vector<std::string> kMethods = {"uniform", "gaussian", "sliding_window", "superpixels"};
  if (std::find(kMethods.begin(), kMethods.end(), o.method) == kMethods.end()) {
    throw ConfigError("unknown baseline method: " + o.method);
  }
  const bool stochastic = o.method == "uniform" || o.method == "gaussian";
  std::optional<BoxParamStats> stats;
  if (stochastic) {
    if (o.train_gt.empty()) throw ConfigError(o.method + " baseline requires --train-gt");
    if (!o.seed) throw ConfigError(o.method + " baseline requires --seed");
    stats = estimate_box_stats(load_ground_truth(o.train_gt, o.gt_format), o.trim);
  }
  if (o.images.empty() == o.sizes_gt.empty()) throw ConfigError("give exactly one of --images or --gt");
  if (o.tree && o.images.empty()) throw ConfigError("--tree needs --images");

  Failures failures;
  auto from_dir = [](const fs::path& dir) {
    std::vector<SizedImage> v;
    for (const auto& e : list_images(dir)) v.push_back({e.id, 0, 0, e.path});
    return v;
  };

  if (o.tree) {
    // Every directory of the perturbed tree that holds images.
    std::vector<fs::path> dirs;
    for (const auto& e : fs::recursive_directory_iterator(o.images)) {
      if (!e.is_directory()) continue;
      bool has_images = false;
      for (const auto& f : fs::directory_iterator(e.path())) has_images |= f.is_regular_file() && is_image_file(f.path());
      if (has_images) dirs.push_back(e.path());
    }
    std::sort(dirs.begin(), dirs.end());
    for (const auto& dir : dirs) {
      const auto set = generate_baseline(o, stats, from_dir(dir), failures);
      save_proposals(dir / "proposals.jsonl", set);
    }
    out << "wrote " << o.method << " proposals for " << dirs.size() << " director(ies) under " << o.images.string()
        << '\n';
  } else {
    if (o.out.empty()) throw ConfigError("--out is required");
    std::vector<SizedImage> images;
    if (!o.images.empty()) {
      images = from_dir(o.images);
    } else {
      const GroundTruthSet sized = load_ground_truth(o.sizes_gt, o.gt_format);
      for (const auto& img : sized.images()) {
        images.push_back({img.image_id, img.width, img.height, {}});
      }
    }
    const auto set = generate_baseline(o, stats, images, failures);
    if (o.out.has_parent_path()) fs::create_directories(o.out.parent_path());
    save_proposals(o.out, set);
    out << "wrote " << set.images.size() << " image(s) of " << o.method << " proposals to " << o.out.string() << '\n';
  }
  failures.report(err, "baseline");
  return failures.items.empty() ? 0 : 2;
}

// --- eval-recall -----------------------------------------------------------

struct GtOptions {
  fs::path path;
  GroundTruthFormat format = GroundTruthFormat::kJsonl;
  fs::path blacklist;
  bool drop_difficult = false;

  GroundTruthSet load() const {
    GroundTruthSet gt = load_ground_truth(path, format);
    if (!blacklist.empty()) gt = apply_blacklist(gt, load_blacklist(blacklist));
    if (drop_difficult) gt = propeval::drop_difficult(gt);
    return gt;
  }
};

struct RecallOptions {
  GtOptions gt;
  fs::path proposals;
  std::string method;
  std::vector<std::size_t> budgets = default_recall_budgets();
  SelectionPolicy policy = SelectionPolicy::kAuto;
  fs::path out;
  unsigned threads = 1;
};

inline int cmd_eval_recall(const RecallOptions& o, std::ostream& out, std::ostream&) {
  const GroundTruthSet gt = o.gt.load();
  const ProposalSet props = load_proposals(o.proposals);
  const std::string method = !o.method.empty() ? o.method : !props.method.empty() ? props.method : o.proposals.stem().string();
  const auto report = evaluate_recall(gt, props, o.budgets, o.policy, o.threads);
  const Metadata meta = {{"command", "eval-recall"},
                         {"method", method},
                         {"policy", to_string(o.policy)},
                         {"budgets", join(o.budgets)},
                         {"threshold grid", format_grid(recall_grid())},
                         {"auc range", "[0.5,1] normalized"},
                         {"images", std::to_string(report.image_count)},
                         {"annotations", std::to_string(report.annotation_count)}};
  save_files(o.out, meta, recall_rows(method, report));

  ordered_json summary;
  summary["command"] = "eval-recall";
  summary["version"] = kVersion;
  summary["method"] = method;
  summary["policy"] = to_string(o.policy);
  summary["images"] = report.image_count;
  summary["annotations"] = report.annotation_count;
  summary["auc_range"] = {0.5, 1.0};
  summary["budgets"] = ordered_json::array();
  for (const auto& b : report.budgets) {
    ordered_json e;
    e["n"] = b.requested;
    e["average_proposals"] = b.average_proposals;
    e["auc"] = b.curve.auc;
    e["recall_at_0.5"] = b.recall_at_05;
    e["recall_at_0.8"] = b.recall_at_08;
    summary["budgets"].push_back(e);
    out << method << " n=" << b.requested << " avg=" << format_number(b.average_proposals)
        << " auc=" << format_number(b.curve.auc) << " recall@0.5=" << format_number(b.recall_at_05) << '\n';
  }
  write_json(o.out / "summary.json", summary);
  return 0;
}

// --- eval-repeatability ----------------------------------------------------

struct RepeatabilityCliOptions {
  fs::path reference;
  fs::path pert_root;
  std::vector<std::string> kinds;
  std::string method;
  std::size_t n = 1000;
  SelectionPolicy policy = SelectionPolicy::kAuto;
  GtOptions sizes;  // optional fallback for image sizes
  bool hull = false;
  fs::path out;
  unsigned threads = 1;
};

inline int cmd_eval_repeatability(const RepeatabilityCliOptions& o, std::ostream& out, std::ostream& err) {
  const ProposalSet reference = select_proposals(load_proposals(o.reference), o.n, o.policy);
  const std::string method =
      !o.method.empty() ? o.method : !reference.method.empty() ? reference.method : o.reference.stem().string();
  std::optional<GroundTruthSet> sizes;
  if (!o.sizes.path.empty()) sizes = load_ground_truth(o.sizes.path, o.sizes.format);

  std::vector<std::string> kinds;
  if (o.kinds.empty()) {
    for (const auto& k : all_kinds()) {
      if (fs::is_directory(o.pert_root / k)) kinds.push_back(k);
    }
    if (kinds.empty()) throw IoError("no perturbation directories under " + o.pert_root.string());
  } else {
    kinds = expand_kinds(o.kinds);
  }
  const auto crops = read_projection_metadata(o.pert_root);
  Failures failures;

  struct Ref {
    const ImageProposals* props;
    int width;
    int height;
  };
  std::vector<Ref> refs;
  for (const auto& img : reference.images) {
    int w = img.width, h = img.height;
    if ((w <= 0 || h <= 0) && sizes) {
      if (const auto* g = sizes->find(img.image_id)) w = g->width, h = g->height;
    }
    if (w <= 0 || h <= 0) {
      failures.items.push_back(img.image_id + ": unknown image size (add width/height or pass --gt)");
      continue;
    }
    refs.push_back({&img, w, h});
  }

  RepeatabilityOptions ropts;
  ropts.hull_mode = o.hull;
  std::vector<RepeatabilityResult> aggregated;
  for (const auto& spec : specs_for(kinds)) {
    const fs::path file = spec_dir(o.pert_root, spec) / "proposals.jsonl";
    if (!fs::exists(file)) {
      failures.items.push_back(spec.kind_name() + " " + spec.label() + ": missing " + file.string());
      continue;
    }
    const ProposalSet pert = select_proposals(load_proposals(file), o.n, o.policy);
    const auto index = pert.index();
    std::vector<std::optional<RepeatabilityResult>> per_image(refs.size());
    std::vector<std::string> errors(refs.size());
    parallel_for(refs.size(), o.threads, [&](std::size_t i) {
      const auto& r = refs[i];
      const auto it = index.find(r.props->image_id);
      if (it == index.end()) {
        errors[i] = r.props->image_id + ": no proposals for " + spec.kind_name() + " " + spec.label();
        return;
      }
      try {
        std::optional<CropRect> crop;
        if (spec.kind() == PerturbationKind::kRotation) {
          const auto c = crops.find({r.props->image_id, spec.kind_name(), spec.label()});
          crop = c != crops.end() ? c->second : rotation_crop(r.width, r.height);
        }
        per_image[i] = evaluate_repeatability(*r.props, *it->second, spec, crop, r.width, r.height, ropts);
      } catch (const std::exception& e) {
        errors[i] = r.props->image_id + ": " + e.what();
      }
    });
    std::vector<RepeatabilityResult> ok;
    for (std::size_t i = 0; i < refs.size(); ++i) {
      if (per_image[i]) ok.push_back(std::move(*per_image[i]));
      if (!errors[i].empty()) failures.items.push_back(errors[i]);
    }
    RepeatabilityResult agg = aggregate_repeatability(ok, ropts);
    agg.spec = spec;
    aggregated.push_back(std::move(agg));
  }

  std::string kinds_text;
  for (const auto& k : kinds) kinds_text += (kinds_text.empty() ? "" : ",") + k;
  const Metadata meta = {{"command", "eval-repeatability"},
                         {"method", method},
                         {"n", std::to_string(o.n)},
                         {"policy", to_string(o.policy)},
                         {"kinds", kinds_text},
                         {"threshold grid", format_grid(ropts.thresholds)},
                         {"size bins", std::to_string(kSizeBins) + " log-spaced, 10px to image diagonal"},
                         {"matching", o.hull ? "greedy one-to-one, rotated boxes by hull" : "greedy one-to-one"},
                         {"images", std::to_string(refs.size())}};
  save_files(o.out, meta, repeatability_rows(method, o.n, aggregated));

  ordered_json summary;
  summary["command"] = "eval-repeatability";
  summary["version"] = kVersion;
  summary["method"] = method;
  summary["n"] = o.n;
  summary["images"] = refs.size();
  summary["specs"] = ordered_json::array();
  for (const auto& r : aggregated) {
    ordered_json e;
    e["kind"] = r.spec.kind_name();
    e["param"] = r.spec.label();
    e["auc"] = r.auc ? ordered_json(*r.auc) : ordered_json(nullptr);
    e["reference_proposals"] = r.reference_count;
    e["perturbed_proposals"] = r.perturbed_count;
    e["kept_after_projection"] = r.kept_count;
    summary["specs"].push_back(e);
    out << method << ' ' << r.spec.kind_name() << ' ' << r.spec.label() << " auc="
        << (r.auc ? format_number(*r.auc) : "n/a") << '\n';
  }
  summary["failures"] = failures.items;
  write_json(o.out / "summary.json", summary);
  failures.report(err, "eval-repeatability");
  return failures.items.empty() ? 0 : 2;
}

// --- eval-detection --------------------------------------------------------

struct DetectionCliOptions {
  GtOptions gt;
  fs::path detections;
  fs::path proposals;
  double min_iou = 0.8;
  double nms_overlap = 0.5;
  bool no_nms = false;
  double iou_threshold = 0.5;
  ApMode mode = ApMode::kVoc11Point;
  bool include_difficult = false;
  fs::path out;
  unsigned threads = 1;
};

inline int cmd_eval_detection(const DetectionCliOptions& o, std::ostream& out, std::ostream&) {
  const GroundTruthSet gt = o.gt.load();
  DetectionSet dets = load_detections(o.detections);
  const std::size_t raw = dets.size();
  std::string method = "all";
  if (!o.proposals.empty()) {
    const ProposalSet props = load_proposals(o.proposals);
    method = props.method.empty() ? o.proposals.stem().string() : props.method;
    dets = filter_by_proposals(dets, props, o.min_iou);
  }
  const std::size_t filtered = dets.size();
  if (!o.no_nms) dets = nms(dets, o.nms_overlap);

  ApOptions ap_opts;
  ap_opts.iou_threshold = o.iou_threshold;
  ap_opts.mode = o.mode;
  ap_opts.include_difficult = o.include_difficult;
  const std::vector<std::string> classes(gt.classes().begin(), gt.classes().end());
  if (classes.empty()) throw EmptyTargetError("ground truth holds no classes");
  std::vector<PRCurve> curves(classes.size());
  parallel_for(classes.size(), o.threads, [&](std::size_t i) { curves[i] = average_precision(dets, gt, classes[i], ap_opts); });

  std::vector<std::pair<std::string, double>> aps;
  std::vector<std::pair<std::string, PRCurve>> prs;
  std::vector<double> values;
  for (std::size_t i = 0; i < classes.size(); ++i) {
    aps.emplace_back(classes[i], curves[i].ap);
    prs.emplace_back(classes[i], curves[i]);
    values.push_back(curves[i].ap);
  }
  const double map = mean_ap(values);
  const Metadata meta = {{"command", "eval-detection"},
                         {"proposals", method},
                         {"filter min IoU", o.proposals.empty() ? "off" : format_number(o.min_iou) + " (strict)"},
                         {"nms overlap", o.no_nms ? "off" : format_number(o.nms_overlap)},
                         {"ap", o.mode == ApMode::kVoc11Point ? "voc07 11-point" : "continuous"},
                         {"match IoU", format_number(o.iou_threshold)}};
  write_text_file(o.out / "ap.csv", ap_csv(meta, aps));
  write_text_file(o.out / "pr_curves.csv", pr_csv(meta, prs));

  ordered_json summary;
  summary["command"] = "eval-detection";
  summary["version"] = kVersion;
  summary["proposals"] = method;
  summary["raw_detections"] = raw;
  summary["after_filter"] = filtered;
  summary["after_nms"] = dets.size();
  summary["ap"] = ordered_json::object();
  for (const auto& [label, ap] : aps) summary["ap"][label] = ap;
  summary["mAP"] = map;
  write_json(o.out / "summary.json", summary);
  out << "mAP=" << format_number(map) << " over " << classes.size() << " class(es); detections " << raw << " -> "
      << filtered << " -> " << dets.size() << '\n';
  return 0;
}

// --- report ----------------------------------------------------------------

inline int cmd_report(const fs::path& in_dir, fs::path out_dir, std::ostream& out, std::ostream& err) {
  if (out_dir.empty()) out_dir = in_dir;
  if (!fs::is_directory(in_dir)) throw IoError("not a directory: " + in_dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(in_dir)) {
    if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::size_t written = 0;
  for (const auto& f : files) {
    std::ifstream in(f);
    std::vector<CurveRow> rows;
    try {
      rows = read_curve_csv(in, nullptr, f.string());
    } catch (const ParseError&) {
      err << "skipping " << f.filename().string() << " (not a curve CSV)\n";
      continue;
    }
    const std::string stem = f.stem().string();
    write_text_file(out_dir / (stem + ".svg"), render_line_chart(rows_to_series(rows), chart_options_for(stem)));
    ++written;
  }
  out << "rendered " << written << " chart(s) into " << out_dir.string() << '\n';
  return 0;
}

// --- entry point -----------------------------------------------------------

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Benchmark harness for object detection proposals", "propeval"};
  app.set_config("--config", "", "TOML-style config file; command-line flags take precedence");
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));

  const unsigned default_threads = default_thread_count();
  const std::map<std::string, GroundTruthFormat> gt_formats = {{"jsonl", GroundTruthFormat::kJsonl},
                                                               {"voc", GroundTruthFormat::kVocXmlDir}};
  const std::map<std::string, SelectionPolicy> policies = {{"top-score", SelectionPolicy::kTopScore},
                                                           {"first-n", SelectionPolicy::kFirstN},
                                                           {"auto", SelectionPolicy::kAuto}};
  const std::map<std::string, ApMode> ap_modes = {{"voc11", ApMode::kVoc11Point}, {"continuous", ApMode::kContinuous}};

  auto add_threads = [&](CLI::App* sub, unsigned& threads) {
    threads = default_threads;
    sub->add_option("--threads", threads, "Worker threads (default: PROPEVAL_THREADS or all cores)")
        ->check(CLI::PositiveNumber);
  };
  auto add_gt = [&](CLI::App* sub, GtOptions& gt, bool required) {
    auto* opt = sub->add_option("--gt", gt.path, "Ground truth (JSONL file or VOC XML directory)");
    if (required) opt->required();
    sub->add_option("--gt-format", gt.format, "jsonl or voc")->transform(CLI::CheckedTransformer(gt_formats));
    sub->add_option("--blacklist", gt.blacklist, "CSV of image_id,class pairs to drop")->check(CLI::ExistingFile);
    sub->add_flag("--drop-difficult", gt.drop_difficult, "Remove difficult annotations");
  };

  PerturbOptions perturb;
  auto* p = app.add_subcommand("perturb", "Write perturbed copies of every image");
  p->add_option("--images", perturb.images, "Directory of reference images")->required()->check(CLI::ExistingDirectory);
  p->add_option("--out", perturb.out, "Output root")->required();
  p->add_option("--kind", perturb.kinds, "Perturbation kind(s) or 'all'");
  add_threads(p, perturb.threads);

  BaselineOptions baseline;
  std::uint64_t seed = 0;
  auto* b = app.add_subcommand("baseline", "Generate baseline proposals");
  b->add_option("--method", baseline.method, "uniform, gaussian, sliding_window or superpixels")->required();
  b->add_option("--images", baseline.images, "Directory of images")->check(CLI::ExistingDirectory);
  b->add_option("--gt", baseline.sizes_gt, "Take image ids and sizes from this ground truth");
  b->add_option("--gt-format", baseline.gt_format, "jsonl or voc")->transform(CLI::CheckedTransformer(gt_formats));
  b->add_option("--train-gt", baseline.train_gt, "Ground truth for box statistics");
  b->add_option("--out", baseline.out, "Output proposals JSONL");
  b->add_flag("--tree", baseline.tree, "Treat --images as a perturbed tree; write proposals.jsonl per directory");
  b->add_option("-n,--count", baseline.n, "Proposals per image")->check(CLI::NonNegativeNumber);
  auto* seed_opt = b->add_option("--seed", seed, "Random seed (uniform, gaussian)");
  b->add_option("--trim", baseline.trim, "Fraction trimmed from each end for ranges")->check(CLI::Range(0.0, 0.49));
  add_threads(b, baseline.threads);

  RecallOptions recall;
  auto* r = app.add_subcommand("eval-recall", "Ground-truth recall versus number of proposals");
  add_gt(r, recall.gt, true);
  r->add_option("--proposals", recall.proposals, "Proposals JSONL")->required()->check(CLI::ExistingFile);
  r->add_option("--method", recall.method, "Method name in reports");
  r->add_option("-n,--count", recall.budgets, "Requested proposal counts")->delimiter(',');
  r->add_option("--policy", recall.policy, "top-score, first-n or auto")->transform(CLI::CheckedTransformer(policies));
  r->add_option("--out", recall.out, "Output directory")->required();
  add_threads(r, recall.threads);

  RepeatabilityCliOptions rep;
  auto* rp = app.add_subcommand("eval-repeatability", "Repeatability under perturbations");
  rp->add_option("--reference", rep.reference, "Proposals on the reference images")->required()->check(CLI::ExistingFile);
  rp->add_option("--pert-root", rep.pert_root, "Perturbed tree holding <kind>/<param>/proposals.jsonl")
      ->required()
      ->check(CLI::ExistingDirectory);
  rp->add_option("--kind", rep.kinds, "Perturbation kind(s); default: all present");
  rp->add_option("--method", rep.method, "Method name in reports");
  rp->add_option("-n,--count", rep.n, "Proposals per image")->check(CLI::PositiveNumber);
  rp->add_option("--policy", rep.policy, "top-score, first-n or auto")->transform(CLI::CheckedTransformer(policies));
  rp->add_option("--gt", rep.sizes.path, "Ground truth supplying image sizes");
  rp->add_option("--gt-format", rep.sizes.format, "jsonl or voc")->transform(CLI::CheckedTransformer(gt_formats));
  rp->add_flag("--hull", rep.hull, "Match rotated proposals by their axis-aligned hull");
  rp->add_option("--out", rep.out, "Output directory")->required();
  add_threads(rp, rep.threads);

  DetectionCliOptions det;
  auto* d = app.add_subcommand("eval-detection", "Filter detections by proposals, NMS, and per-class AP");
  add_gt(d, det.gt, true);
  d->add_option("--detections", det.detections, "Raw detections JSONL")->required()->check(CLI::ExistingFile);
  d->add_option("--proposals", det.proposals, "Proposals used as filter")->check(CLI::ExistingFile);
  d->add_option("--min-iou", det.min_iou, "Keep detections overlapping a proposal above this IoU")
      ->check(CLI::Range(0.0, 1.0));
  d->add_option("--nms", det.nms_overlap, "NMS overlap")->check(CLI::Range(0.0, 1.0));
  d->add_flag("--no-nms", det.no_nms, "Skip NMS");
  d->add_option("--iou", det.iou_threshold, "IoU for a true positive")->check(CLI::Range(0.0, 1.0));
  d->add_option("--ap-mode", det.mode, "voc11 or continuous")->transform(CLI::CheckedTransformer(ap_modes));
  d->add_flag("--include-difficult", det.include_difficult, "Score difficult objects as ordinary positives");
  d->add_option("--out", det.out, "Output directory")->required();
  add_threads(d, det.threads);

  fs::path report_in, report_out;
  auto* rep_cmd = app.add_subcommand("report", "Render SVG line charts from curve CSVs");
  rep_cmd->add_option("--in", report_in, "Directory of CSVs")->required()->check(CLI::ExistingDirectory);
  rep_cmd->add_option("--out", report_out, "Output directory (default: --in)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  auto previous = set_warning_sink([&err](const std::string& m) { err << "warning: " << m << '\n'; });
  int code = 0;
  try {
    if (*p) {
      code = cmd_perturb(perturb, out, err);
    } else if (*b) {
      if (*seed_opt) baseline.seed = seed;
      code = cmd_baseline(baseline, out, err);
    } else if (*r) {
      code = cmd_eval_recall(recall, out, err);
    } else if (*rp) {
      code = cmd_eval_repeatability(rep, out, err);
    } else if (*d) {
      code = cmd_eval_detection(det, out, err);
    } else if (*rep_cmd) {
      code = cmd_report(report_in, report_out, out, err);
    }
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << '\n';
    code = 3;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    code = 1;
  }
  set_warning_sink(std::move(previous));
  return code;
}

}  // namespace propeval::cli
