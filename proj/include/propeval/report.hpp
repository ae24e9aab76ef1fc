#pragma once

// CSV reports, summary JSON and self-contained SVG line charts.
//
// Curve CSVs share one schema:
//   method,spec_kind,spec_param,n,x,value
// preceded by "# key: value" metadata lines.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "propeval/detection_eval.hpp"
#include "propeval/errors.hpp"
#include "propeval/evaluation.hpp"
#include "propeval/perturbations.hpp"

namespace propeval {

inline constexpr std::string_view kVersion = "0.1.0";
inline constexpr std::string_view kCurveHeader = "method,spec_kind,spec_param,n,x,value";

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

using Metadata = std::vector<std::pair<std::string, std::string>>;

struct CurveRow {
  std::string method;
  std::string spec_kind;
  std::string spec_param;
  std::string n;
  std::string x;
  double value = 0.0;
};

inline std::string format_grid(const std::vector<double>& grid) {
  if (grid.empty()) return "[]";
  return "[" + format_number(grid.front()) + "," + format_number(grid.back()) + "] x" + std::to_string(grid.size());
}

inline void write_metadata(std::ostream& out, const Metadata& meta) {
  out << "# propeval " << kVersion << '\n';
  for (const auto& [k, v] : meta) out << "# " << k << ": " << v << '\n';
}

inline void write_curve_csv(std::ostream& out, const Metadata& meta, const std::vector<CurveRow>& rows) {
  write_metadata(out, meta);
  out << kCurveHeader << '\n';
  for (const auto& r : rows) {
    out << csv_field(r.method) << ',' << csv_field(r.spec_kind) << ',' << csv_field(r.spec_param) << ','
        << csv_field(r.n) << ',' << csv_field(r.x) << ',' << format_number(r.value) << '\n';
  }
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

inline void save_curve_csv(const std::filesystem::path& path, const Metadata& meta, const std::vector<CurveRow>& rows) {
  std::ostringstream ss;
  write_curve_csv(ss, meta, rows);
  write_text_file(path, ss.str());
}

// Splits one CSV line, honouring double quotes.
inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        out.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        out.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.emplace_back();
    } else if (c != '\r') {
      out.back() += c;
    }
  }
  return out;
}

inline std::optional<double> parse_double(const std::string& s) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

// Reads a curve CSV back; metadata lines are returned separately.
inline std::vector<CurveRow> read_curve_csv(std::istream& in, Metadata* meta = nullptr,
                                            const std::string& source = "<stream>") {
  std::vector<CurveRow> rows;
  std::string line;
  bool header = false;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line.starts_with("# ")) {
      const auto colon = line.find(": ");
      if (meta && colon != std::string::npos) meta->emplace_back(line.substr(2, colon - 2), line.substr(colon + 2));
      continue;
    }
    if (!header) {
      if (line != kCurveHeader) throw ParseError(source + ": not a curve CSV");
      header = true;
      continue;
    }
    const auto f = split_csv_line(line);
    const auto value = f.size() == 6 ? parse_double(f[5]) : std::nullopt;
    if (!value) throw ParseError(source + ":" + std::to_string(line_no) + ": malformed row");
    rows.push_back({f[0], f[1], f[2], f[3], f[4], *value});
  }
  if (!header) throw ParseError(source + ": missing CSV header");
  return rows;
}

// Recall report as CSV families keyed by file name.
inline std::map<std::string, std::vector<CurveRow>> recall_rows(const std::string& method, const RecallReport& report) {
  std::map<std::string, std::vector<CurveRow>> files;
  for (const auto& b : report.budgets) {
    const std::string n = std::to_string(b.requested);
    for (std::size_t i = 0; i < b.curve.thresholds.size(); ++i) {
      files["recall_curves.csv"].push_back(
          {method, "none", "", n, format_number(b.curve.thresholds[i]), b.curve.recall[i]});
    }
    const std::string x = format_number(b.average_proposals);
    files["recall_auc.csv"].push_back({method, "none", "", n, x, b.curve.auc});
    files["recall_at_0.5.csv"].push_back({method, "none", "", n, x, b.recall_at_05});
    files["recall_at_0.8.csv"].push_back({method, "none", "", n, x, b.recall_at_08});
  }
  return files;
}

inline std::string spec_param_text(const PerturbationSpec& spec) { return spec.label(); }

inline std::map<std::string, std::vector<CurveRow>> repeatability_rows(const std::string& method, std::size_t n,
                                                                       const std::vector<RepeatabilityResult>& results) {
  std::map<std::string, std::vector<CurveRow>> files;
  auto& curves = files["repeatability_curves.csv"];
  auto& aucs = files["repeatability_auc.csv"];
  auto& bins = files["repeatability_bins.csv"];
  const std::string n_text = std::to_string(n);
  for (const auto& r : results) {
    const std::string kind = r.spec.kind_name();
    const std::string param = spec_param_text(r.spec);
    const std::string x = param.empty() ? "0" : param;
    if (const auto avg = r.bin_averaged_curve()) {
      for (std::size_t i = 0; i < avg->thresholds.size(); ++i) {
        curves.push_back({method, kind, param, n_text, format_number(avg->thresholds[i]), avg->recall[i]});
      }
      aucs.push_back({method, kind, param, n_text, x, *r.auc});
    }
    for (std::size_t bin = 0; bin < kSizeBins; ++bin) {
      if (r.bin_curves[bin]) bins.push_back({method, kind, param, n_text, std::to_string(bin), r.bin_curves[bin]->auc});
    }
  }
  return files;
}

// --- SVG -------------------------------------------------------------------

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

struct ChartOptions {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = false;
  int width = 640;
  int height = 420;
};

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline std::string svg_number(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, std::round(v * 100.0) / 100.0, std::chars_format::fixed, 2);
  return std::string(buf, res.ptr);
}

inline std::string render_line_chart(const std::vector<Series>& series, const ChartOptions& opt) {
  static const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                   "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  const double left = 60, right = 170, top = 36, bottom = 48;
  const double pw = opt.width - left - right;
  const double ph = opt.height - top - bottom;

  auto tx = [&](double v) { return opt.log_x ? std::log10(v) : v; };
  double x_lo = 1e300, x_hi = -1e300, y_lo = 0.0, y_hi = 1.0;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (opt.log_x && s.x[i] <= 0) continue;
      x_lo = std::min(x_lo, tx(s.x[i]));
      x_hi = std::max(x_hi, tx(s.x[i]));
      y_lo = std::min(y_lo, s.y[i]);
      y_hi = std::max(y_hi, s.y[i]);
    }
  }
  if (x_lo > x_hi) x_lo = 0, x_hi = 1;
  if (x_lo == x_hi) x_lo -= 0.5, x_hi += 0.5;
  auto px = [&](double v) { return left + (tx(v) - x_lo) / (x_hi - x_lo) * pw; };
  auto py = [&](double v) { return top + (1.0 - (v - y_lo) / (y_hi - y_lo)) * ph; };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << opt.width << "\" height=\"" << opt.height
    << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << svg_number(left + pw / 2) << "\" y=\"20\" text-anchor=\"middle\" font-size=\"13\">"
    << xml_escape(opt.title) << "</text>\n";
  o << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << svg_number(pw) << "\" height=\"" << svg_number(ph)
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double yv = y_lo + (y_hi - y_lo) * i / 5.0;
    const double xv = x_lo + (x_hi - x_lo) * i / 5.0;
    const double xs = left + pw * i / 5.0;
    o << "<line x1=\"" << left << "\" x2=\"" << svg_number(left + pw) << "\" y1=\"" << svg_number(py(yv))
      << "\" y2=\"" << svg_number(py(yv)) << "\" stroke=\"#ddd\"/>\n";
    o << "<text x=\"" << left - 4 << "\" y=\"" << svg_number(py(yv) + 4) << "\" text-anchor=\"end\">"
      << format_number(std::round(yv * 100) / 100) << "</text>\n";
    const double label = opt.log_x ? std::pow(10.0, xv) : xv;
    o << "<text x=\"" << svg_number(xs) << "\" y=\"" << svg_number(top + ph + 14) << "\" text-anchor=\"middle\">"
      << format_number(std::round(label * 100) / 100) << "</text>\n";
  }
  o << "<text x=\"" << svg_number(left + pw / 2) << "\" y=\"" << opt.height - 10 << "\" text-anchor=\"middle\">"
    << xml_escape(opt.x_label) << "</text>\n";
  o << "<text transform=\"translate(14," << svg_number(top + ph / 2) << ") rotate(-90)\" text-anchor=\"middle\">"
    << xml_escape(opt.y_label) << "</text>\n";

  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* colour = kPalette[k % 10];
    o << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.5\" points=\"";
    bool first = true;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (opt.log_x && s.x[i] <= 0) continue;
      o << (first ? "" : " ") << svg_number(px(s.x[i])) << ',' << svg_number(py(s.y[i]));
      first = false;
    }
    o << "\"/>\n";
    const double ly = top + 12 + 14.0 * static_cast<double>(k);
    o << "<line x1=\"" << svg_number(left + pw + 10) << "\" x2=\"" << svg_number(left + pw + 28) << "\" y1=\""
      << svg_number(ly - 4) << "\" y2=\"" << svg_number(ly - 4) << "\" stroke=\"" << colour
      << "\" stroke-width=\"2\"/>\n";
    o << "<text x=\"" << svg_number(left + pw + 32) << "\" y=\"" << svg_number(ly) << "\">" << xml_escape(s.name)
      << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

// Groups curve rows into one series per (method, kind, param, n), keeping
// first-appearance order; rows with a non-numeric x are skipped.
inline std::vector<Series> rows_to_series(const std::vector<CurveRow>& rows) {
  std::vector<Series> out;
  std::map<std::string, std::size_t> index;
  for (const auto& r : rows) {
    const auto x = parse_double(r.x);
    if (!x) continue;
    std::string name = r.method;
    if (r.spec_kind != "none" || !r.spec_param.empty()) name += " " + r.spec_kind + " " + r.spec_param;
    if (!r.n.empty()) name += " n=" + r.n;
    const auto [it, inserted] = index.emplace(name, out.size());
    if (inserted) out.push_back({name, {}, {}});
    out[it->second].x.push_back(*x);
    out[it->second].y.push_back(r.value);
  }
  return out;
}

inline ChartOptions chart_options_for(const std::string& stem) {
  ChartOptions opt;
  opt.title = stem;
  opt.y_label = "value";
  if (stem.find("curves") != std::string::npos) {
    opt.x_label = "IoU threshold";
    opt.y_label = "recall";
  } else if (stem.starts_with("recall_")) {
    opt.x_label = "proposals per image";
    opt.y_label = stem == "recall_auc" ? "area under recall" : "recall";
    opt.log_x = true;
  } else if (stem == "repeatability_auc") {
    opt.x_label = "perturbation parameter";
    opt.y_label = "repeatability";
  } else if (stem == "repeatability_bins") {
    opt.x_label = "size bin";
    opt.y_label = "area under recall";
  }
  return opt;
}

// Detection report: per-class AP CSV with a trailing mAP line.
inline std::string ap_csv(const Metadata& meta, const std::vector<std::pair<std::string, double>>& aps) {
  std::ostringstream o;
  write_metadata(o, meta);
  o << "class,ap\n";
  std::vector<double> values;
  for (const auto& [label, ap] : aps) {
    o << csv_field(label) << ',' << format_number(ap) << '\n';
    values.push_back(ap);
  }
  if (!values.empty()) o << "mAP," << format_number(mean_ap(values)) << '\n';
  return o.str();
}

inline std::string pr_csv(const Metadata& meta, const std::vector<std::pair<std::string, PRCurve>>& curves) {
  std::ostringstream o;
  write_metadata(o, meta);
  o << "class,rank,recall,precision\n";
  for (const auto& [label, c] : curves) {
    for (std::size_t i = 0; i < c.recall.size(); ++i) {
      o << csv_field(label) << ',' << i + 1 << ',' << format_number(c.recall[i]) << ','
        << format_number(c.precision[i]) << '\n';
    }
  }
  return o.str();
}

}  // namespace propeval
