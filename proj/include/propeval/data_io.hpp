#pragma once

// Ground truth, proposal and blacklist ingestion; proposal-count selection.
//
// Canonical interchange is JSON Lines, one image per line:
//   {"image_id": "...", "width": W, "height": H,
//    "boxes": [[x0,y0,x1,y1] | [x0,y0,x1,y1,score], ...],
//    "labels": [...], "difficult": [...]}
// Proposal records may also carry "method".

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <nlohmann/json.hpp>

#include "propeval/errors.hpp"
#include "propeval/geometry.hpp"
#include "propeval/log.hpp"

namespace propeval {

using ordered_json = nlohmann::ordered_json;

inline constexpr std::string_view kDefaultLabel = "object";

struct Annotation {
  std::string label;
  BoundingBox box;
  bool difficult = false;

  friend bool operator==(const Annotation&, const Annotation&) = default;
};

struct ImageAnnotations {
  std::string image_id;
  int width = 0;
  int height = 0;
  std::vector<Annotation> objects;

  friend bool operator==(const ImageAnnotations&, const ImageAnnotations&) = default;
};

class GroundTruthSet {
 public:
  // Throws InvalidArgument on duplicate ids or boxes outside the image.
  void add_image(ImageAnnotations image) {
    if (index_.contains(image.image_id)) throw InvalidArgument("duplicate image id: " + image.image_id);
    for (const Annotation& a : image.objects) {
      if (!a.box.inside(image.width, image.height)) {
        throw InvalidArgument("annotation outside image bounds in " + image.image_id);
      }
      classes_.insert(a.label);
    }
    index_.emplace(image.image_id, images_.size());
    images_.push_back(std::move(image));
  }

  const std::vector<ImageAnnotations>& images() const { return images_; }
  const std::set<std::string>& classes() const { return classes_; }

  const ImageAnnotations* find(const std::string& image_id) const {
    const auto it = index_.find(image_id);
    return it == index_.end() ? nullptr : &images_[it->second];
  }

  std::size_t annotation_count() const {
    std::size_t n = 0;
    for (const auto& img : images_) n += img.objects.size();
    return n;
  }

  bool empty() const { return images_.empty(); }

  friend bool operator==(const GroundTruthSet& a, const GroundTruthSet& b) { return a.images_ == b.images_; }

 private:
  std::vector<ImageAnnotations> images_;
  std::unordered_map<std::string, std::size_t> index_;
  std::set<std::string> classes_;
};

struct ImageProposals {
  std::string image_id;
  int width = 0;   // 0 when unknown
  int height = 0;  // 0 when unknown
  std::vector<BoundingBox> boxes;

  friend bool operator==(const ImageProposals&, const ImageProposals&) = default;
};

struct ProposalSet {
  std::string method;
  bool scored = false;
  std::vector<ImageProposals> images;

  const ImageProposals* find(const std::string& image_id) const {
    for (const auto& img : images) {
      if (img.image_id == image_id) return &img;
    }
    return nullptr;
  }

  std::unordered_map<std::string, const ImageProposals*> index() const {
    std::unordered_map<std::string, const ImageProposals*> out;
    for (const auto& img : images) out.emplace(img.image_id, &img);
    return out;
  }

  friend bool operator==(const ProposalSet&, const ProposalSet&) = default;
};

struct Blacklist {
  std::set<std::pair<std::string, std::string>> pairs;  // (image id, class)

  bool contains(const std::string& image_id, const std::string& label) const {
    return pairs.contains({image_id, label});
  }
};

enum class GroundTruthFormat { kJsonl, kVocXmlDir };
enum class SelectionPolicy { kTopScore, kFirstN, kAuto };

inline GroundTruthFormat parse_gt_format(std::string_view s) {
  if (s == "jsonl") return GroundTruthFormat::kJsonl;
  if (s == "voc-xml-dir" || s == "voc") return GroundTruthFormat::kVocXmlDir;
  throw InvalidArgument("unknown ground-truth format: " + std::string(s));
}

inline SelectionPolicy parse_policy(std::string_view s) {
  if (s == "top-score") return SelectionPolicy::kTopScore;
  if (s == "first-n") return SelectionPolicy::kFirstN;
  if (s == "auto") return SelectionPolicy::kAuto;
  throw InvalidArgument("unknown selection policy: " + std::string(s));
}

inline std::string to_string(SelectionPolicy p) {
  switch (p) {
    case SelectionPolicy::kTopScore: return "top-score";
    case SelectionPolicy::kFirstN: return "first-n";
    case SelectionPolicy::kAuto: return "auto";
  }
  return "auto";
}

namespace detail {

inline std::string where(const std::string& source, std::size_t line) {
  return source + ":" + std::to_string(line) + ": ";
}

// Calls fn(json, line_number) for each non-blank line.
template <typename Fn>
void for_each_jsonl(std::istream& in, const std::string& source, Fn&& fn) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ordered_json j;
    try {
      j = ordered_json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(where(source, line_no) + e.what());
    }
    if (!j.is_object()) throw ParseError(where(source, line_no) + "record is not a JSON object");
    fn(j, line_no);
  }
}

struct ParsedBox {
  double x0, y0, x1, y1;
  std::optional<double> score;
};

inline ParsedBox parse_box_array(const ordered_json& arr, const std::string& ctx) {
  if (!arr.is_array() || (arr.size() != 4 && arr.size() != 5)) {
    throw ParseError(ctx + "box must be [x0,y0,x1,y1] or [x0,y0,x1,y1,score]");
  }
  for (const auto& v : arr) {
    if (!v.is_number()) throw ParseError(ctx + "box entries must be numbers");
  }
  ParsedBox b{arr[0].get<double>(), arr[1].get<double>(), arr[2].get<double>(), arr[3].get<double>(), std::nullopt};
  if (arr.size() == 5) b.score = arr[4].get<double>();
  return b;
}

inline std::string require_id(const ordered_json& j, const std::string& ctx) {
  if (!j.contains("image_id")) throw ParseError(ctx + "missing image_id");
  const auto& id = j["image_id"];
  if (id.is_string()) return id.get<std::string>();
  if (id.is_number_integer()) return std::to_string(id.get<long long>());
  throw ParseError(ctx + "image_id must be a string");
}

inline ordered_json box_to_json(const BoundingBox& b) {
  ordered_json arr = ordered_json::array({b.x0(), b.y0(), b.x1(), b.y1()});
  if (b.score()) arr.push_back(*b.score());
  return arr;
}

}  // namespace detail

// Clamps an annotation box into the image, warning when it overflows.
inline BoundingBox clamp_annotation(double x0, double y0, double x1, double y1, int width, int height,
                                    const std::string& image_id) {
  const BoundingBox raw(x0, y0, x1, y1);
  if (raw.inside(width, height)) return raw;
  warn("annotation in " + image_id + " exceeds image bounds; clamped");
  return raw.clipped(width, height);
}

inline GroundTruthSet read_ground_truth_jsonl(std::istream& in, const std::string& source = "<stream>") {
  GroundTruthSet gt;
  detail::for_each_jsonl(in, source, [&](const ordered_json& j, std::size_t line_no) {
    const std::string ctx = detail::where(source, line_no);
    const std::string id = detail::require_id(j, ctx);
    if (!j.contains("width") || !j.contains("height") || !j["width"].is_number() || !j["height"].is_number()) {
      throw MissingSizeError(ctx + "image " + id + " lacks width/height");
    }
    ImageAnnotations img{id, j["width"].get<int>(), j["height"].get<int>(), {}};
    if (img.width <= 0 || img.height <= 0) throw ParseError(ctx + "image " + id + " has non-positive size");
    const ordered_json boxes = j.value("boxes", ordered_json::array());
    const ordered_json labels = j.value("labels", ordered_json::array());
    const ordered_json difficult = j.value("difficult", ordered_json::array());
    if (!labels.empty() && labels.size() != boxes.size()) throw ParseError(ctx + "labels/boxes length mismatch in " + id);
    if (!difficult.empty() && difficult.size() != boxes.size()) {
      throw ParseError(ctx + "difficult/boxes length mismatch in " + id);
    }
    for (std::size_t i = 0; i < boxes.size(); ++i) {
      const auto b = detail::parse_box_array(boxes[i], ctx);
      if (b.x1 < b.x0 || b.y1 < b.y0) throw ParseError(ctx + "box with negative extent in image " + id);
      Annotation a;
      a.box = clamp_annotation(b.x0, b.y0, b.x1, b.y1, img.width, img.height, id);
      a.label = labels.empty() ? std::string(kDefaultLabel) : labels[i].get<std::string>();
      if (!difficult.empty()) a.difficult = difficult[i].is_boolean() ? difficult[i].get<bool>() : difficult[i].get<int>() != 0;
      img.objects.push_back(std::move(a));
    }
    try {
      gt.add_image(std::move(img));
    } catch (const InvalidArgument& e) {
      throw ParseError(ctx + e.what());
    }
  });
  return gt;
}

inline void write_ground_truth_jsonl(std::ostream& out, const GroundTruthSet& gt) {
  for (const auto& img : gt.images()) {
    ordered_json j;
    j["image_id"] = img.image_id;
    j["width"] = img.width;
    j["height"] = img.height;
    ordered_json boxes = ordered_json::array();
    ordered_json labels = ordered_json::array();
    ordered_json difficult = ordered_json::array();
    for (const auto& a : img.objects) {
      boxes.push_back(detail::box_to_json(a.box.without_score()));
      labels.push_back(a.label);
      difficult.push_back(a.difficult);
    }
    j["boxes"] = std::move(boxes);
    j["labels"] = std::move(labels);
    j["difficult"] = std::move(difficult);
    out << j.dump() << '\n';
  }
}

// Pascal VOC annotation directory: one XML per image, 1-based inclusive
// pixel indices converted to continuous coordinates as (x0-1, y0-1, x1, y1).
inline GroundTruthSet read_voc_xml_dir(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  namespace pt = boost::property_tree;
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".xml") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  GroundTruthSet gt;
  if (files.empty()) warn("no VOC annotation files in " + dir.string());
  for (const auto& file : files) {
    pt::ptree tree;
    try {
      pt::read_xml(file.string(), tree);
    } catch (const pt::xml_parser_error& e) {
      throw ParseError(file.string() + ":" + std::to_string(e.line()) + ": " + e.message());
    }
    const auto root = tree.get_child_optional("annotation");
    if (!root) throw ParseError(file.string() + ": missing <annotation>");
    const std::string id = file.stem().string();
    const auto w = root->get_optional<int>("size.width");
    const auto h = root->get_optional<int>("size.height");
    if (!w || !h || *w <= 0 || *h <= 0) throw MissingSizeError(file.string() + ": image " + id + " lacks <size>");
    ImageAnnotations img{id, *w, *h, {}};
    for (const auto& [tag, node] : *root) {
      if (tag != "object") continue;
      try {
        const double xmin = node.get<double>("bndbox.xmin");
        const double ymin = node.get<double>("bndbox.ymin");
        const double xmax = node.get<double>("bndbox.xmax");
        const double ymax = node.get<double>("bndbox.ymax");
        if (xmax < xmin - 1 || ymax < ymin - 1) throw ParseError(file.string() + ": box with negative extent in image " + id);
        Annotation a;
        a.label = node.get<std::string>("name");
        a.difficult = node.get<int>("difficult", 0) != 0;
        a.box = clamp_annotation(xmin - 1.0, ymin - 1.0, xmax, ymax, img.width, img.height, id);
        img.objects.push_back(std::move(a));
      } catch (const pt::ptree_error& e) {
        throw ParseError(file.string() + ": " + e.what());
      }
    }
    gt.add_image(std::move(img));
  }
  return gt;
}

inline GroundTruthSet load_ground_truth(const std::filesystem::path& path, GroundTruthFormat format) {
  namespace fs = std::filesystem;
  if (!fs::exists(path)) throw IoError("ground truth not found: " + path.string());
  if (format == GroundTruthFormat::kVocXmlDir) return read_voc_xml_dir(path);
  if (fs::is_directory(path)) {
    GroundTruthSet empty;
    bool any = false;
    for (const auto& e : fs::directory_iterator(path)) any = any || e.is_regular_file();
    if (!any) {
      warn("empty ground-truth directory " + path.string());
      return empty;
    }
    throw InvalidArgument("JSONL ground truth must be a file: " + path.string());
  }
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  GroundTruthSet gt = read_ground_truth_jsonl(in, path.string());
  if (gt.empty()) warn("ground truth " + path.string() + " holds no images");
  return gt;
}

inline void save_ground_truth(const std::filesystem::path& path, const GroundTruthSet& gt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  write_ground_truth_jsonl(out, gt);
}

inline ProposalSet read_proposals_jsonl(std::istream& in, const std::string& source = "<stream>") {
  ProposalSet set;
  std::optional<bool> scored;
  std::set<std::string> seen;
  detail::for_each_jsonl(in, source, [&](const ordered_json& j, std::size_t line_no) {
    const std::string ctx = detail::where(source, line_no);
    ImageProposals img;
    img.image_id = detail::require_id(j, ctx);
    if (!seen.insert(img.image_id).second) throw ParseError(ctx + "duplicate image id " + img.image_id);
    if (j.contains("width") && j["width"].is_number()) img.width = j["width"].get<int>();
    if (j.contains("height") && j["height"].is_number()) img.height = j["height"].get<int>();
    if (j.contains("method") && j["method"].is_string()) {
      const auto m = j["method"].get<std::string>();
      if (set.method.empty()) set.method = m;
    }
    const ordered_json boxes = j.value("boxes", ordered_json::array());
    if (!boxes.is_array()) throw ParseError(ctx + "boxes must be an array");
    for (const auto& arr : boxes) {
      const auto b = detail::parse_box_array(arr, ctx);
      const bool has_score = b.score.has_value();
      if (scored && *scored != has_score) {
        throw ParseError(ctx + "mixed scored and unscored proposals (image " + img.image_id + ")");
      }
      scored = has_score;
      if (b.x1 < b.x0 || b.y1 < b.y0) throw ParseError(ctx + "box with negative extent in image " + img.image_id);
      img.boxes.emplace_back(b.x0, b.y0, b.x1, b.y1, b.score);
    }
    set.images.push_back(std::move(img));
  });
  set.scored = scored.value_or(false);
  return set;
}

inline void write_proposals_jsonl(std::ostream& out, const ProposalSet& set) {
  for (const auto& img : set.images) {
    ordered_json j;
    j["image_id"] = img.image_id;
    if (!set.method.empty()) j["method"] = set.method;
    if (img.width > 0) j["width"] = img.width;
    if (img.height > 0) j["height"] = img.height;
    ordered_json boxes = ordered_json::array();
    for (const auto& b : img.boxes) boxes.push_back(detail::box_to_json(b));
    j["boxes"] = std::move(boxes);
    out << j.dump() << '\n';
  }
}

inline ProposalSet load_proposals(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return read_proposals_jsonl(in, path.string());
}

inline void save_proposals(const std::filesystem::path& path, const ProposalSet& set) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  write_proposals_jsonl(out, set);
}

// CSV "image_id,class"; an optional header line with exactly those names is skipped.
inline Blacklist read_blacklist_csv(std::istream& in, const std::string& source = "<stream>") {
  Blacklist bl;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw ParseError(detail::where(source, line_no) + "expected image_id,class");
    std::string id = line.substr(0, comma);
    std::string cls = line.substr(comma + 1);
    if (line_no == 1 && id == "image_id" && cls == "class") continue;
    bl.pairs.emplace(std::move(id), std::move(cls));
  }
  return bl;
}

inline Blacklist load_blacklist(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return read_blacklist_csv(in, path.string());
}

// Drops annotations whose (image id, class) pair is blacklisted. Images
// stay, possibly with zero annotations.
inline GroundTruthSet apply_blacklist(const GroundTruthSet& gt, const Blacklist& bl) {
  for (const auto& [id, cls] : bl.pairs) {
    if (!gt.find(id) || !gt.classes().contains(cls)) warn("blacklist entry (" + id + ", " + cls + ") matches nothing");
  }
  GroundTruthSet out;
  for (const auto& img : gt.images()) {
    ImageAnnotations kept{img.image_id, img.width, img.height, {}};
    for (const auto& a : img.objects) {
      if (!bl.contains(img.image_id, a.label)) kept.objects.push_back(a);
    }
    out.add_image(std::move(kept));
  }
  return out;
}

inline GroundTruthSet drop_difficult(const GroundTruthSet& gt) {
  GroundTruthSet out;
  for (const auto& img : gt.images()) {
    ImageAnnotations kept{img.image_id, img.width, img.height, {}};
    for (const auto& a : img.objects) {
      if (!a.difficult) kept.objects.push_back(a);
    }
    out.add_image(std::move(kept));
  }
  return out;
}

// Keeps at most n proposals per image. top-score: by score descending, ties
// by file order; first-n: file prefix; auto: top-score iff the set is scored.
inline ProposalSet select_proposals(const ProposalSet& s, std::size_t n, SelectionPolicy policy) {
  if (policy == SelectionPolicy::kAuto) policy = s.scored ? SelectionPolicy::kTopScore : SelectionPolicy::kFirstN;
  if (policy == SelectionPolicy::kTopScore && !s.scored) {
    bool any_box = false;
    for (const auto& img : s.images) any_box = any_box || !img.boxes.empty();
    if (any_box) throw PolicyError("top-score selection requested on unscored proposals (" + s.method + ")");
  }
  ProposalSet out;
  out.method = s.method;
  out.scored = s.scored;
  out.images.reserve(s.images.size());
  for (const auto& img : s.images) {
    ImageProposals sel{img.image_id, img.width, img.height, {}};
    const std::size_t keep = std::min(n, img.boxes.size());
    if (policy == SelectionPolicy::kFirstN) {
      sel.boxes.assign(img.boxes.begin(), img.boxes.begin() + static_cast<std::ptrdiff_t>(keep));
    } else {
      std::vector<std::size_t> order(img.boxes.size());
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return *img.boxes[a].score() > *img.boxes[b].score(); });
      sel.boxes.reserve(keep);
      for (std::size_t k = 0; k < keep; ++k) sel.boxes.push_back(img.boxes[order[k]]);
    }
    out.images.push_back(std::move(sel));
  }
  return out;
}

}  // namespace propeval
