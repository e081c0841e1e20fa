#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "adqc/wright_map.hpp"

#include "test_support.hpp"

using namespace adqc;
using Catch::Approx;
using Catch::Matchers::ContainsSubstring;

namespace {

Thresholds th(const char* video, const char* source, double g1, double g2) {
  Thresholds t;
  t.item = {video, source, DimensionKey::Accurate};
  t.gammas = {g1, g2};
  return t;
}

std::vector<PersonAbility> three_marks() {
  return {{"r1", -0.9, 0.3}, {"r2", 0.1, 0.3}, {"r3", 1.2, 0.3}};
}

}  // namespace

TEST_CASE("items sort by top threshold with id tie-break") {
  // Top thresholds 0.5, -0.2, 0.1 must order as item2, item3, item1.
  std::vector<Thresholds> items = {
      th("v01", "human", -0.5, 0.5),   // item1
      th("v02", "human", -0.8, -0.2),  // item2
      th("v03", "human", -0.3, 0.1),   // item3
  };
  auto model = build_map(items, three_marks());
  REQUIRE(model.item_columns.size() == 3);
  CHECK(model.item_columns[0].item.video_id == "v02");
  CHECK(model.item_columns[1].item.video_id == "v03");
  CHECK(model.item_columns[2].item.video_id == "v01");

  // Equal top thresholds fall back to the id ordering.
  std::vector<Thresholds> tied = {
      th("v09", "human", -0.5, 0.4),
      th("v02", "human", -0.1, 0.4),
  };
  auto tied_model = build_map(tied, three_marks());
  CHECK(tied_model.item_columns[0].item.video_id == "v02");
  CHECK(tied_model.item_columns[1].item.video_id == "v09");
}

TEST_CASE("grouped mode partitions by source in fixed order") {
  std::vector<Thresholds> items = {
      th("v01", "gpt", -0.5, 0.6),
      th("v01", "human", -0.2, 0.3),
      th("v02", "gpt", -0.9, -0.1),
      th("v01", "gemini", 0.0, 0.2),
      th("v01", "qwen", -0.4, 0.1),
  };
  WrightMapOptions opt;
  opt.grouped = true;
  auto model = build_map(items, three_marks(), opt);

  REQUIRE(model.groups.size() == 4);
  CHECK(model.groups[0].label == "d1");
  CHECK(model.groups[0].source == "human");
  CHECK(model.groups[1].source == "qwen");
  CHECK(model.groups[2].source == "gemini");
  CHECK(model.groups[3].source == "gpt");
  CHECK(model.groups[0].begin == 0);
  CHECK(model.groups[3].end == 5);

  // Within the gpt group, v02 (top -0.1) precedes v01 (top 0.6).
  CHECK(model.item_columns[model.groups[3].begin].item.video_id == "v02");

  // Sources outside the fixed set are rejected in grouped mode only.
  std::vector<Thresholds> odd = {th("v01", "llava", -0.5, 0.5)};
  CHECK_THROWS_WITH(build_map(odd, three_marks(), opt),
                    ContainsSubstring("llava"));
  CHECK_NOTHROW(build_map(odd, three_marks()));
}

TEST_CASE("axis bounds pad the extreme marks by the margin") {
  std::vector<Thresholds> items = {th("v01", "human", -0.5, 0.5)};
  std::vector<PersonAbility> abilities = {{"r1", -1.3, 0.2}, {"r2", 0.9, 0.2}};
  auto model = build_map(items, abilities);
  CHECK(model.axis_min == Approx(-1.55).margin(1e-12));
  CHECK(model.axis_max == Approx(1.15).margin(1e-12));

  // A threshold can set the extreme too.
  std::vector<Thresholds> wide = {th("v01", "human", -2.0, 2.0)};
  auto wide_model = build_map(wide, abilities);
  CHECK(wide_model.axis_min == Approx(-2.25).margin(1e-12));
  CHECK(wide_model.axis_max == Approx(2.25).margin(1e-12));
}

TEST_CASE("histogram bins tile the axis on multiples of the bin width") {
  std::vector<Thresholds> items = {th("v01", "human", -0.5, 0.5)};
  std::vector<PersonAbility> abilities = {
      {"r1", 0.05, 0.2}, {"r2", 0.1, 0.2}, {"r3", 0.6, 0.2}};
  auto model = build_map(items, abilities);
  REQUIRE(!model.histogram.empty());
  // Bins align to multiples of 0.25 and cover the axis.
  CHECK(model.histogram.front().lo <= model.axis_min);
  CHECK(model.histogram.back().hi >= model.axis_max);
  int total = 0;
  for (const auto& b : model.histogram) {
    CHECK(b.hi == Approx(b.lo + 0.25).margin(1e-12));
    double k = b.lo / 0.25;
    CHECK(k == Approx(std::round(k)).margin(1e-9));
    total += b.count;
  }
  CHECK(total == 3);
  // r1 and r2 share [0, 0.25).
  for (const auto& b : model.histogram) {
    if (std::abs(b.lo) < 1e-12) CHECK(b.count == 2);
    if (std::abs(b.lo - 0.5) < 1e-12) CHECK(b.count == 1);
  }
}

TEST_CASE("cut points carry one line per respondent") {
  std::vector<Thresholds> items = {th("v01", "human", -0.5, 0.5)};
  auto abilities = three_marks();
  auto model = build_map(items, abilities);
  REQUIRE(model.cut_points.size() == 3);
  for (std::size_t i = 0; i < abilities.size(); ++i) {
    CHECK(model.cut_points[i] == abilities[i].theta);
  }
}

TEST_CASE("build_map validation") {
  CHECK_THROWS_WITH(build_map({}, three_marks()), ContainsSubstring("no items"));
  CHECK_THROWS_WITH(build_map({th("v01", "human", -0.5, 0.5)}, {}),
                    ContainsSubstring("no respondents"));
  WrightMapOptions bad;
  bad.bin_width = 0;
  CHECK_THROWS_AS(build_map({th("v01", "human", -0.5, 0.5)}, three_marks(), bad),
                  ValidationError);
  Thresholds empty;
  empty.item = {"v01", "human", DimensionKey::Accurate};
  CHECK_THROWS_WITH(build_map({empty}, three_marks()),
                    ContainsSubstring("no thresholds"));
}

TEST_CASE("svg output is deterministic and places marks on the transform") {
  std::vector<Thresholds> items = {
      th("v01", "human", -0.5, 0.5),
      th("v01", "gpt", -0.2, 0.8),
  };
  auto abilities = three_marks();
  auto model = build_map(items, abilities);
  SvgStyle style;
  auto svg = render_svg(model, style);
  CHECK(svg == render_svg(model, style));
  CHECK_THAT(svg, ContainsSubstring("<svg xmlns"));
  CHECK_THAT(svg, ContainsSubstring("stroke-dasharray=\"4 3\""));  // cut lines
  CHECK_THAT(svg, ContainsSubstring(">accurate</text>"));

  // Every respondent label sits within half a pixel of the axis transform.
  for (const auto& [id, theta] : model.respondent_marks) {
    double expected_y = svg_y(model, style, theta);
    auto pos = svg.find(">" + id + "</text>");
    REQUIRE(pos != std::string::npos);
    auto y_attr = svg.rfind("y=\"", pos);
    REQUIRE(y_attr != std::string::npos);
    double got = std::stod(svg.substr(y_attr + 3)) - 3;  // label offset
    CHECK(std::abs(got - expected_y) <= 0.5);
  }

  // One filled and one open circle per item lane.
  std::size_t filled = 0, open = 0, pos = 0;
  while ((pos = svg.find("<circle", pos)) != std::string::npos) {
    auto end = svg.find("/>", pos);
    auto tag = svg.substr(pos, end - pos);
    if (tag.find("fill=\"none\"") != std::string::npos) open++;
    else if (tag.find("fill=\"#333\"") != std::string::npos) filled++;
    pos = end;
  }
  CHECK(filled == items.size());  // one top threshold each
  CHECK(open == items.size());    // one lower threshold each

  CHECK_THROWS_AS(render_svg(WrightMapModel{}), ValidationError);
}

TEST_CASE("easier items sit strictly below the cut line in svg pixels") {
  // gamma2 < theta-hat means mastered: below the respondent's cut line, which
  // in SVG has a larger y.
  std::vector<Thresholds> items = {
      th("v01", "human", -1.5, -0.8),  // easier than r2 (0.1)
      th("v01", "gpt", 0.6, 1.4),      // harder than r2
  };
  std::vector<PersonAbility> abilities = {{"r2", 0.1, 0.2}};
  auto model = build_map(items, abilities);
  SvgStyle style;
  double cut_y = svg_y(model, style, 0.1);
  for (const auto& col : model.item_columns) {
    double item_y = svg_y(model, style, col.top_gamma());
    if (col.top_gamma() < 0.1) CHECK(item_y > cut_y);
    else CHECK(item_y < cut_y);
  }
}

TEST_CASE("text map bands run top down and mark thresholds") {
  std::vector<Thresholds> items = {
      th("v01", "human", -0.5, 0.5),
      th("v01", "gpt", -0.3, 0.7),
  };
  auto model = build_map(items, three_marks());
  auto text = render_text(model, 100);
  CHECK(text == render_text(model, 100));

  // Header, then bands with strictly decreasing lower bounds.
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    auto nl = text.find('\n', start);
    lines.push_back(text.substr(start, nl - start));
    start = nl + 1;
  }
  REQUIRE(lines.size() > 3);
  CHECK_THAT(lines[0], ContainsSubstring("logit"));
  CHECK_THAT(lines[0], ContainsSubstring("'#' top"));
  double prev = 1e9;
  std::size_t band_rows = 0;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].size() < 8 || lines[i][7] != ' ') break;
    double lo = std::stod(lines[i].substr(0, 7));
    CHECK(lo < prev);
    prev = lo;
    band_rows++;
  }
  CHECK(band_rows >= 8);

  // Counts: '#' appears once per item (top), '-' once per item (lower).
  CHECK(std::count(text.begin(), text.end(), '#') ==
        2 + 1);  // two tops plus the header legend
  CHECK_THAT(text, ContainsSubstring("items left to right:"));
  CHECK_THAT(text, ContainsSubstring("v01:human"));

  // Respondents land in their band rows.
  CHECK_THAT(text, ContainsSubstring("r2"));
  CHECK_THAT(text, ContainsSubstring("*"));
}

TEST_CASE("text map rejects narrow widths with the needed size") {
  std::vector<Thresholds> items = {th("v01", "human", -0.5, 0.5)};
  auto model = build_map(items, three_marks());
  CHECK_THROWS_WITH(render_text(model, 59), ContainsSubstring("need at least"));
  CHECK_NOTHROW(render_text(model, 60));
  CHECK_THROWS_AS(render_text(model, 100, 0.0), ValidationError);

  // Many items push the minimum width past 60.
  std::vector<Thresholds> many;
  for (int i = 0; i < 60; ++i) {
    many.push_back(th(("v" + std::to_string(i)).c_str(), "human", -0.5, 0.5));
  }
  auto big = build_map(many, three_marks());
  CHECK_THROWS_WITH(render_text(big, 60), ContainsSubstring("need at least"));
}

TEST_CASE("grouped text map appends the group legend") {
  std::vector<Thresholds> items = {
      th("v01", "human", -0.5, 0.5),
      th("v01", "gpt", -0.3, 0.7),
  };
  WrightMapOptions opt;
  opt.grouped = true;
  auto model = build_map(items, three_marks(), opt);
  auto text = render_text(model, 100);
  CHECK_THAT(text, ContainsSubstring("groups: d1=human[0..1) d4=gpt[1..2)"));
}

TEST_CASE("map goldens stay byte-stable") {
  std::vector<Thresholds> items = {
      th("v01", "human", -0.9, -0.1), th("v01", "qwen", -0.2, 0.9),
      th("v01", "gemini", -0.55, 0.35), th("v01", "gpt", 0.1, 1.1),
      th("v02", "human", -1.2, -0.4),
  };
  std::vector<PersonAbility> abilities = {
      {"Human1", 0.8, 0.3}, {"Human2", 0.15, 0.3}, {"gpt_json_v1", -0.7, 0.4}};
  WrightMapOptions opt;
  opt.grouped = true;
  auto model = build_map(items, abilities, opt);
  testsup::check_golden("wright_grouped.svg", render_svg(model));
  testsup::check_golden("wright_grouped.txt", render_text(model, 100));
}
