#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "adqc/pcm.hpp"
#include "adqc/util.hpp"

namespace adqc {

struct WrightMapOptions {
  double bin_width = 0.25;   // histogram bin, logits
  double margin = 0.25;      // axis padding beyond extreme marks, logits
  bool grouped = false;      // partition item columns by AD source
};

struct WrightItemColumn {
  Item item;
  std::vector<double> gammas;

  double top_gamma() const { return gammas.back(); }

  bool operator==(const WrightItemColumn&) const = default;
};

struct WrightGroup {
  std::string label;   // d1..d4
  std::string source;  // human, qwen, gemini, gpt
  std::size_t begin = 0;  // column range [begin, end)
  std::size_t end = 0;

  bool operator==(const WrightGroup&) const = default;
};

struct WrightHistBin {
  double lo = 0, hi = 0;
  int count = 0;

  bool operator==(const WrightHistBin&) const = default;
};

struct WrightMapModel {
  double axis_min = 0, axis_max = 0;
  std::vector<WrightItemColumn> item_columns;
  std::vector<std::pair<std::string, double>> respondent_marks;  // (id, θ̂)
  std::vector<double> cut_points;  // one per respondent
  std::vector<WrightHistBin> histogram;
  std::vector<WrightGroup> groups;  // empty unless grouped

  bool operator==(const WrightMapModel&) const = default;
};

// Fixed d1..d4 source order for the grouped variant.
inline constexpr std::array<std::string_view, 4> kGroupSourceOrder = {
    "human", "qwen", "gemini", "gpt"};

inline int group_rank(const std::string& source) {
  for (std::size_t i = 0; i < kGroupSourceOrder.size(); ++i) {
    if (source == kGroupSourceOrder[i]) return static_cast<int>(i);
  }
  return -1;
}

// Items ordered by top threshold (tie-break by item id), respondents placed
// at their EAP ability, cut points one per respondent, and a binned ability
// histogram. Grouped mode orders by source first, keeping the threshold
// order within each group.
inline WrightMapModel build_map(const std::vector<Thresholds>& thresholds,
                                const std::vector<PersonAbility>& abilities,
                                const WrightMapOptions& options = {}) {
  if (thresholds.empty()) throw ValidationError("build_map: no items");
  if (abilities.empty()) throw ValidationError("build_map: no respondents");
  if (options.bin_width <= 0) throw ValidationError("build_map: bin width must be positive");

  WrightMapModel model;
  for (const auto& t : thresholds) {
    if (t.gammas.empty()) {
      throw ValidationError("build_map: item " + t.item.id() + " has no thresholds");
    }
    model.item_columns.push_back({t.item, t.gammas});
    if (options.grouped && group_rank(t.item.source) < 0) {
      throw ValidationError("build_map: unknown source in grouped mode: " +
                            t.item.source);
    }
  }
  auto by_threshold = [](const WrightItemColumn& a, const WrightItemColumn& b) {
    if (a.top_gamma() != b.top_gamma()) return a.top_gamma() < b.top_gamma();
    return a.item.id() < b.item.id();
  };
  if (options.grouped) {
    std::stable_sort(model.item_columns.begin(), model.item_columns.end(),
                     [&](const WrightItemColumn& a, const WrightItemColumn& b) {
                       int ga = group_rank(a.item.source);
                       int gb = group_rank(b.item.source);
                       if (ga != gb) return ga < gb;
                       return by_threshold(a, b);
                     });
    std::size_t begin = 0;
    for (std::size_t i = 0; i <= model.item_columns.size(); ++i) {
      bool boundary = i == model.item_columns.size() ||
                      (i > 0 && model.item_columns[i].item.source !=
                                    model.item_columns[i - 1].item.source);
      if (boundary && i > begin) {
        const std::string& src = model.item_columns[begin].item.source;
        model.groups.push_back(
            {"d" + std::to_string(group_rank(src) + 1), src, begin, i});
        begin = i;
      }
    }
  } else {
    std::stable_sort(model.item_columns.begin(), model.item_columns.end(),
                     by_threshold);
  }

  double lo = abilities[0].theta, hi = abilities[0].theta;
  for (const auto& a : abilities) {
    model.respondent_marks.emplace_back(a.respondent_id, a.theta);
    model.cut_points.push_back(a.theta);
    lo = std::min(lo, a.theta);
    hi = std::max(hi, a.theta);
  }
  for (const auto& c : model.item_columns) {
    for (double g : c.gammas) {
      lo = std::min(lo, g);
      hi = std::max(hi, g);
    }
  }
  model.axis_min = lo - options.margin;
  model.axis_max = hi + options.margin;

  double w = options.bin_width;
  long k_lo = static_cast<long>(std::floor(model.axis_min / w));
  long k_hi = static_cast<long>(std::floor(model.axis_max / w));
  for (long k = k_lo; k <= k_hi; ++k) {
    WrightHistBin bin;
    bin.lo = k * w;
    bin.hi = (k + 1) * w;
    for (const auto& [id, theta] : model.respondent_marks) {
      if (theta >= bin.lo && theta < bin.hi) bin.count++;
    }
    model.histogram.push_back(bin);
  }
  return model;
}

struct SvgStyle {
  int width = 900;
  int height = 620;
  int margin_top = 40;
  int margin_bottom = 60;
  int hist_left = 20;
  int hist_right = 180;
  int axis_x = 205;
  int items_left = 250;
  int items_right = 660;
  int resp_x = 700;
};

// Vertical pixel position of a logit value; the single source of the axis
// transform for both the renderer and layout tests.
inline double svg_y(const WrightMapModel& model, const SvgStyle& style,
                    double value) {
  double plot_h = style.height - style.margin_top - style.margin_bottom;
  return style.margin_top +
         (model.axis_max - value) / (model.axis_max - model.axis_min) * plot_h;
}

namespace detail {

inline std::string svg_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  std::string s = buf;
  if (s == "-0.00") s = "0.00";
  return s;
}

inline std::string xml_escape(std::string_view v) {
  std::string out;
  for (char c : v) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

}  // namespace detail

// Deterministic SVG: histogram on the left, item threshold lanes in the
// middle (γ1 open circle, γ2 filled), respondents on the right, dashed cut
// lines across. No timestamps, no randomness.
inline std::string render_svg(const WrightMapModel& model,
                              const SvgStyle& style = {}) {
  if (model.item_columns.empty() || model.respondent_marks.empty()) {
    throw ValidationError("render_svg: empty model");
  }
  using detail::svg_num;
  using detail::xml_escape;
  std::string s;
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
       std::to_string(style.width) + "\" height=\"" + std::to_string(style.height) +
       "\" viewBox=\"0 0 " + std::to_string(style.width) + " " +
       std::to_string(style.height) + "\" font-family=\"monospace\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "<text x=\"20\" y=\"20\" font-size=\"12\">" +
       xml_escape(std::string(to_string(model.item_columns[0].item.dimension))) +
       "</text>\n";

  // Axis ticks at whole logits.
  for (long t = static_cast<long>(std::ceil(model.axis_min));
       t <= static_cast<long>(std::floor(model.axis_max)); ++t) {
    double y = svg_y(model, style, static_cast<double>(t));
    s += "<line x1=\"" + std::to_string(style.axis_x - 4) + "\" y1=\"" + svg_num(y) +
         "\" x2=\"" + std::to_string(style.axis_x + 4) + "\" y2=\"" + svg_num(y) +
         "\" stroke=\"#888\"/>\n";
    s += "<text x=\"" + std::to_string(style.axis_x + 8) + "\" y=\"" +
         svg_num(y + 3) + "\" font-size=\"9\" fill=\"#555\">" + std::to_string(t) +
         "</text>\n";
  }
  s += "<line x1=\"" + std::to_string(style.axis_x) + "\" y1=\"" +
       svg_num(svg_y(model, style, model.axis_max)) + "\" x2=\"" +
       std::to_string(style.axis_x) + "\" y2=\"" +
       svg_num(svg_y(model, style, model.axis_min)) + "\" stroke=\"#888\"/>\n";

  // Ability histogram, bars growing leftward.
  int max_count = 1;
  for (const auto& b : model.histogram) max_count = std::max(max_count, b.count);
  double bar_unit =
      std::min(12.0, double(style.hist_right - style.hist_left) / max_count);
  for (const auto& b : model.histogram) {
    if (b.count == 0) continue;
    double y_top = svg_y(model, style, b.hi);
    double y_bot = svg_y(model, style, b.lo);
    double w = b.count * bar_unit;
    s += "<rect x=\"" + svg_num(style.hist_right - w) + "\" y=\"" + svg_num(y_top) +
         "\" width=\"" + svg_num(w) + "\" height=\"" + svg_num(y_bot - y_top - 1) +
         "\" fill=\"#9db8d2\"/>\n";
  }

  // Cut lines, one per respondent.
  for (double cut : model.cut_points) {
    double y = svg_y(model, style, cut);
    s += "<line x1=\"" + std::to_string(style.items_left - 20) + "\" y1=\"" +
         svg_num(y) + "\" x2=\"" + std::to_string(style.resp_x - 8) + "\" y2=\"" +
         svg_num(y) + "\" stroke=\"#b55\" stroke-dasharray=\"4 3\"/>\n";
  }

  // Item columns.
  std::size_t n = model.item_columns.size();
  double lane_w = double(style.items_right - style.items_left) / double(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& col = model.item_columns[i];
    double x = style.items_left + (i + 0.5) * lane_w;
    for (std::size_t k = 0; k < col.gammas.size(); ++k) {
      double y = svg_y(model, style, col.gammas[k]);
      bool top = k + 1 == col.gammas.size();
      s += "<circle cx=\"" + svg_num(x) + "\" cy=\"" + svg_num(y) + "\" r=\"3\"" +
           (top ? " fill=\"#333\""
                : " fill=\"none\" stroke=\"#333\" stroke-width=\"1\"") +
           "/>\n";
    }
    s += "<text font-size=\"7\" fill=\"#555\" transform=\"translate(" +
         svg_num(x + 2) + "," + std::to_string(style.height - style.margin_bottom + 6) +
         ") rotate(60)\">" + xml_escape(col.item.ad_id()) + "</text>\n";
  }

  // Group separators and labels.
  for (const auto& g : model.groups) {
    double x0 = style.items_left + g.begin * lane_w;
    double x1 = style.items_left + g.end * lane_w;
    if (g.begin > 0) {
      s += "<line x1=\"" + svg_num(x0) + "\" y1=\"" +
           std::to_string(style.margin_top) + "\" x2=\"" + svg_num(x0) + "\" y2=\"" +
           std::to_string(style.height - style.margin_bottom) +
           "\" stroke=\"#bbb\" stroke-dasharray=\"2 3\"/>\n";
    }
    s += "<text x=\"" + svg_num(0.5 * (x0 + x1)) + "\" y=\"" +
         std::to_string(style.margin_top - 8) +
         "\" font-size=\"11\" text-anchor=\"middle\">" + xml_escape(g.label) +
         "</text>\n";
  }

  // Respondent marks and labels.
  for (const auto& [id, theta] : model.respondent_marks) {
    double y = svg_y(model, style, theta);
    s += "<circle cx=\"" + std::to_string(style.resp_x - 6) + "\" cy=\"" + svg_num(y) +
         "\" r=\"2.5\" fill=\"#b55\"/>\n";
    s += "<text x=\"" + std::to_string(style.resp_x) + "\" y=\"" + svg_num(y + 3) +
         "\" font-size=\"10\">" + xml_escape(id) + "</text>\n";
  }
  s += "</svg>\n";
  return s;
}

// Monospaced variant: one row per ability band (0.2 logits by default),
// highest band first. Item lanes mark γ2 with '#' and lower thresholds with
// '-'; the histogram column counts respondents per band.
inline std::string render_text(const WrightMapModel& model, int width = 100,
                               double band = 0.2) {
  if (model.item_columns.empty() || model.respondent_marks.empty()) {
    throw ValidationError("render_text: empty model");
  }
  if (band <= 0) throw ValidationError("render_text: band must be positive");
  constexpr int kLabelW = 7;
  constexpr int kHistW = 10;
  int n_items = static_cast<int>(model.item_columns.size());
  int fixed_cols = kLabelW + 2 + kHistW + 2 + n_items + 3;
  if (width < 60 || width < fixed_cols + 4) {
    throw ValidationError("render_text: width " + std::to_string(width) +
                          " too small, need at least " +
                          std::to_string(std::max(60, fixed_cols + 4)));
  }
  int name_w = width - fixed_cols;
  long k_hi = static_cast<long>(std::floor(model.axis_max / band));
  long k_lo = static_cast<long>(std::floor(model.axis_min / band));
  std::string out;
  out += "logit   persons     items ('-' first threshold, '#' top)\n";
  for (long k = k_hi; k >= k_lo; --k) {
    double lo = k * band, hi = (k + 1) * band;
    char label[16];
    std::snprintf(label, sizeof label, "%*.2f", kLabelW, lo);
    std::string row(label);
    row += " |";
    int count = 0;
    std::string names;
    for (const auto& [id, theta] : model.respondent_marks) {
      if (theta >= lo && theta < hi) {
        count++;
        if (!names.empty()) names += ",";
        names += id;
      }
    }
    std::string bar(std::min(count, kHistW - 1), '*');
    if (count > kHistW - 1) bar += "+";
    bar.resize(kHistW, ' ');
    row += bar + "| ";
    for (const auto& col : model.item_columns) {
      char ch = ' ';
      for (std::size_t g = 0; g < col.gammas.size(); ++g) {
        if (col.gammas[g] >= lo && col.gammas[g] < hi) {
          ch = (g + 1 == col.gammas.size()) ? '#' : (ch == '#' ? '#' : '-');
        }
      }
      row.push_back(ch);
    }
    row += " | ";
    if (static_cast<int>(names.size()) > name_w) {
      names.resize(static_cast<std::size_t>(std::max(0, name_w - 1)));
      names += "~";
    }
    row += names;
    while (!row.empty() && row.back() == ' ') row.pop_back();
    out += row + "\n";
  }
  out += "\nitems left to right:";
  std::size_t line_len = 20;
  for (std::size_t i = 0; i < model.item_columns.size(); ++i) {
    std::string id = model.item_columns[i].item.ad_id();
    if (line_len + id.size() + 1 > static_cast<std::size_t>(width)) {
      out += "\n ";
      line_len = 1;
    }
    out += " " + id;
    line_len += id.size() + 1;
  }
  out += "\n";
  if (!model.groups.empty()) {
    out += "groups:";
    for (const auto& g : model.groups) {
      out += " " + g.label + "=" + g.source + "[" + std::to_string(g.begin) + ".." +
             std::to_string(g.end) + ")";
    }
    out += "\n";
  }
  return out;
}

}  // namespace adqc
