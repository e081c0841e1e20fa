#pragma once

#include <algorithm>
#include <compare>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "adqc/csv.hpp"
#include "adqc/framework.hpp"
#include "adqc/util.hpp"

namespace adqc {

enum class VideoCategory { Entertainment, HowtoStyle, Education, Other };

inline constexpr std::string_view to_string(VideoCategory c) {
  switch (c) {
    case VideoCategory::Entertainment: return "entertainment";
    case VideoCategory::HowtoStyle: return "howto_style";
    case VideoCategory::Education: return "education";
    case VideoCategory::Other: return "other";
  }
  return "?";
}

inline VideoCategory parse_video_category(std::string_view s) {
  for (VideoCategory c : {VideoCategory::Entertainment, VideoCategory::HowtoStyle,
                          VideoCategory::Education, VideoCategory::Other}) {
    if (s == to_string(c)) return c;
  }
  throw ValidationError("unknown video category: " + std::string(s));
}

struct Video {
  std::string id;
  std::string title;
  VideoCategory category = VideoCategory::Other;
  double duration_seconds = 0.0;

  bool operator==(const Video&) const = default;
};

// Description delivery: inline narration fits existing pauses, extended
// narration pauses the video.
enum class Track { Inline, Extended };

inline constexpr std::string_view to_string(Track t) {
  return t == Track::Inline ? "inline" : "extended";
}

inline Track parse_track(std::string_view s) {
  if (s == "inline") return Track::Inline;
  if (s == "extended") return Track::Extended;
  throw ValidationError("unknown track: " + std::string(s));
}

enum class DescType { Visual, TextOnScreen };

inline constexpr std::string_view to_string(DescType t) {
  return t == DescType::Visual ? "visual" : "text_on_screen";
}

inline DescType parse_desc_type(std::string_view s) {
  if (s == "visual") return DescType::Visual;
  if (s == "text_on_screen") return DescType::TextOnScreen;
  throw ValidationError("unknown desc_type: " + std::string(s));
}

struct AdSegment {
  std::string text;
  double start = 0.0;  // seconds
  double end = 0.0;
  Track track = Track::Inline;
  DescType desc_type = DescType::Visual;

  bool operator==(const AdSegment&) const = default;
};

// One audio description track for one video. The segment file itself never
// names the source; callers attach video_id/source from study metadata so
// raters stay blind to authorship.
struct AdVersion {
  std::string video_id;
  std::string source;  // "human" or a model name
  std::vector<AdSegment> segments;

  bool operator==(const AdVersion&) const = default;
};

enum class RespondentKind { Expert, Human, Vlm };

inline constexpr std::string_view to_string(RespondentKind k) {
  switch (k) {
    case RespondentKind::Expert: return "expert";
    case RespondentKind::Human: return "human";
    case RespondentKind::Vlm: return "vlm";
  }
  return "?";
}

inline RespondentKind parse_respondent_kind(std::string_view s) {
  for (RespondentKind k :
       {RespondentKind::Expert, RespondentKind::Human, RespondentKind::Vlm}) {
    if (s == to_string(k)) return k;
  }
  throw ValidationError("unknown respondent kind: " + std::string(s));
}

struct Respondent {
  std::string id;
  RespondentKind kind = RespondentKind::Human;
  // VLM-only fields; empty / zero for experts and humans.
  std::string model;
  std::string input_format;
  int prompt_version = 0;

  bool operator==(const Respondent&) const = default;
};

// One rated (video, source, dimension) cell. version_label holds the blinded
// label (A, B, ...) as collected; label resolution rewrites it to the source.
struct RatingRecord {
  std::string respondent_id;
  std::string video_id;
  std::string version_label;
  DimensionKey dimension = DimensionKey::Accurate;
  int rating = 0;
  std::optional<std::string> comment;

  bool operator==(const RatingRecord&) const = default;
};

// Measurement item: one AD version rated on one dimension.
struct Item {
  std::string video_id;
  std::string source;
  DimensionKey dimension = DimensionKey::Accurate;

  std::string ad_id() const { return video_id + ":" + source; }
  std::string id() const {
    return ad_id() + ":" + std::string(to_string(dimension));
  }

  friend bool operator==(const Item& a, const Item& b) = default;
  friend auto operator<=>(const Item& a, const Item& b) {
    return std::tie(a.video_id, a.source, a.dimension) <=>
           std::tie(b.video_id, b.source, b.dimension);
  }
};

inline Item parse_item_id(std::string_view s) {
  auto first = s.find(':');
  auto last = s.rfind(':');
  if (first == std::string_view::npos || first == last) {
    throw ValidationError("malformed item id: " + std::string(s));
  }
  Item it;
  it.video_id = std::string(s.substr(0, first));
  it.source = std::string(s.substr(first + 1, last - first - 1));
  it.dimension = parse_dimension_key(s.substr(last + 1));
  if (it.video_id.empty() || it.source.empty()) {
    throw ValidationError("malformed item id: " + std::string(s));
  }
  return it;
}

inline constexpr std::string_view kRatingsHeader =
    "respondent_id,video_id,version_label,dimension,rating,comment";

namespace detail {

inline void check_header(const std::vector<std::string>& row,
                         std::string_view expected, std::string_view what) {
  std::string joined;
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (i) joined.push_back(',');
    joined += row[i];
  }
  if (joined != expected) {
    throw ValidationError(std::string(what) + ": expected header '" +
                          std::string(expected) + "', got '" + joined + "'");
  }
}

inline int parse_rating_field(const std::string& s, std::size_t row) {
  if (s.size() != 1 || s[0] < '0' || s[0] > '9') {
    throw ValidationError("row " + std::to_string(row) +
                          ": malformed rating: '" + s + "'");
  }
  int v = s[0] - '0';
  if (v < kMinRating || v > kMaxRating) {
    throw ValidationError("row " + std::to_string(row) +
                          ": rating out of range: " + s);
  }
  return v;
}

}  // namespace detail

// Ratings CSV. Data rows are numbered from 1 (the header is row 0) so error
// messages match what a spreadsheet shows minus one.
inline std::vector<RatingRecord> parse_ratings(std::string_view text) {
  auto rows = parse_csv(text);
  if (rows.empty()) throw ValidationError("ratings CSV: empty file");
  detail::check_header(rows[0], kRatingsHeader, "ratings CSV");
  std::vector<RatingRecord> out;
  std::map<std::tuple<std::string, std::string, std::string, DimensionKey>,
           std::size_t>
      seen;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() != 6) {
      throw ValidationError("row " + std::to_string(r) + ": expected 6 fields, got " +
                            std::to_string(row.size()));
    }
    RatingRecord rec;
    rec.respondent_id = row[0];
    rec.video_id = row[1];
    rec.version_label = row[2];
    if (rec.respondent_id.empty() || rec.video_id.empty() ||
        rec.version_label.empty()) {
      throw ValidationError("row " + std::to_string(r) + ": empty identifier field");
    }
    auto key = dimension_key_from(row[3]);
    if (!key) {
      throw ValidationError("row " + std::to_string(r) +
                            ": unknown dimension: '" + row[3] + "'");
    }
    rec.dimension = *key;
    rec.rating = detail::parse_rating_field(row[4], r);
    if (!row[5].empty()) rec.comment = row[5];
    auto dup_key = std::make_tuple(rec.respondent_id, rec.video_id,
                                   rec.version_label, rec.dimension);
    auto [it, inserted] = seen.emplace(dup_key, r);
    if (!inserted) {
      throw ValidationError(
          "duplicate rating for (" + rec.respondent_id + ", " + rec.video_id +
          ", " + rec.version_label + ", " + std::string(to_string(rec.dimension)) +
          ") at rows " + std::to_string(it->second) + " and " + std::to_string(r));
    }
    out.push_back(std::move(rec));
  }
  return out;
}

inline std::vector<RatingRecord> load_ratings(const std::filesystem::path& p) {
  try {
    return parse_ratings(read_text_file(p));
  } catch (const ValidationError& e) {
    throw ValidationError(p.string() + ": " + e.what());
  }
}

inline std::string save_ratings(const std::vector<RatingRecord>& records) {
  std::string out = std::string(kRatingsHeader) + "\n";
  for (const auto& r : records) {
    out += csv_row({r.respondent_id, r.video_id, r.version_label,
                    std::string(to_string(r.dimension)), std::to_string(r.rating),
                    r.comment.value_or("")});
  }
  return out;
}

// Segment JSON used both for AD files on disk and for the JSON block inside
// VLM prompts. Two-space indent, keys in fixed order.
inline std::string segments_to_json(const std::vector<AdSegment>& segments) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& s : segments) {
    nlohmann::ordered_json sj;
    sj["text"] = s.text;
    sj["start"] = s.start;
    sj["end"] = s.end;
    sj["track"] = std::string(to_string(s.track));
    sj["desc_type"] = std::string(to_string(s.desc_type));
    arr.push_back(std::move(sj));
  }
  return arr.dump(2);
}

inline AdVersion parse_ad_version(std::string_view text,
                                  std::string video_id = "",
                                  std::string source = "") {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("ad version: invalid JSON: ") + e.what());
  }
  if (!j.is_array()) throw ValidationError("ad version: root must be an array");
  AdVersion ad;
  ad.video_id = std::move(video_id);
  ad.source = std::move(source);
  for (std::size_t i = 0; i < j.size(); ++i) {
    const auto& sj = j[i];
    auto ctx = "segment " + std::to_string(i);
    if (!sj.is_object()) throw ValidationError(ctx + ": must be an object");
    if (!sj.contains("text") || !sj["text"].is_string()) {
      throw ValidationError(ctx + ": missing string field 'text'");
    }
    if (!sj.contains("start") || !sj["start"].is_number() ||
        !sj.contains("end") || !sj["end"].is_number()) {
      throw ValidationError(ctx + ": missing numeric start/end");
    }
    AdSegment s;
    s.text = sj["text"].get<std::string>();
    s.start = sj["start"].get<double>();
    s.end = sj["end"].get<double>();
    if (s.start < 0) throw ValidationError(ctx + ": negative start");
    if (s.end < s.start) throw ValidationError(ctx + ": end before start");
    try {
      s.track = parse_track(sj.value("track", "inline"));
      s.desc_type = parse_desc_type(sj.value("desc_type", "visual"));
    } catch (const ValidationError& e) {
      throw ValidationError(ctx + ": " + e.what());
    }
    ad.segments.push_back(std::move(s));
  }
  std::stable_sort(ad.segments.begin(), ad.segments.end(),
                   [](const AdSegment& a, const AdSegment& b) {
                     return a.start < b.start;
                   });
  return ad;
}

inline AdVersion load_ad_version(const std::filesystem::path& p,
                                 std::string video_id = "",
                                 std::string source = "") {
  try {
    return parse_ad_version(read_text_file(p), std::move(video_id),
                            std::move(source));
  } catch (const ValidationError& e) {
    throw ValidationError(p.string() + ": " + e.what());
  }
}

inline constexpr std::string_view kVideosHeader =
    "video_id,title,category,duration_seconds";

inline std::vector<Video> parse_videos(std::string_view text) {
  auto rows = parse_csv(text);
  if (rows.empty()) throw ValidationError("videos CSV: empty file");
  detail::check_header(rows[0], kVideosHeader, "videos CSV");
  std::vector<Video> out;
  std::set<std::string> ids;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() != 4) {
      throw ValidationError("row " + std::to_string(r) + ": expected 4 fields");
    }
    Video v;
    v.id = row[0];
    v.title = row[1];
    v.category = parse_video_category(row[2]);
    try {
      v.duration_seconds = std::stod(row[3]);
    } catch (const std::exception&) {
      throw ValidationError("row " + std::to_string(r) + ": malformed duration");
    }
    if (v.id.empty()) throw ValidationError("row " + std::to_string(r) + ": empty video_id");
    if (v.id.find(':') != std::string::npos) {
      throw ValidationError("row " + std::to_string(r) + ": video_id must not contain ':'");
    }
    if (v.duration_seconds <= 0) {
      throw ValidationError("row " + std::to_string(r) + ": duration must be positive");
    }
    if (!ids.insert(v.id).second) {
      throw ValidationError("row " + std::to_string(r) + ": duplicate video_id " + v.id);
    }
    out.push_back(std::move(v));
  }
  return out;
}

inline std::vector<Video> load_videos(const std::filesystem::path& p) {
  try {
    return parse_videos(read_text_file(p));
  } catch (const ValidationError& e) {
    throw ValidationError(p.string() + ": " + e.what());
  }
}

inline std::string save_videos(const std::vector<Video>& videos) {
  std::string out = std::string(kVideosHeader) + "\n";
  for (const auto& v : videos) {
    out += csv_row({v.id, v.title, std::string(to_string(v.category)),
                    fixed(v.duration_seconds, 1)});
  }
  return out;
}

inline constexpr std::string_view kVersionsHeader = "video_id,source";

// Which AD sources exist for each video, in file order.
inline std::map<std::string, std::vector<std::string>> parse_versions(
    std::string_view text) {
  auto rows = parse_csv(text);
  if (rows.empty()) throw ValidationError("versions CSV: empty file");
  detail::check_header(rows[0], kVersionsHeader, "versions CSV");
  std::map<std::string, std::vector<std::string>> out;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() != 2) {
      throw ValidationError("row " + std::to_string(r) + ": expected 2 fields");
    }
    if (row[0].empty() || row[1].empty()) {
      throw ValidationError("row " + std::to_string(r) + ": empty field");
    }
    if (row[1].find(':') != std::string::npos) {
      throw ValidationError("row " + std::to_string(r) + ": source must not contain ':'");
    }
    auto& sources = out[row[0]];
    if (std::find(sources.begin(), sources.end(), row[1]) != sources.end()) {
      throw ValidationError("row " + std::to_string(r) + ": duplicate source " +
                            row[1] + " for video " + row[0]);
    }
    sources.push_back(row[1]);
  }
  return out;
}

inline std::map<std::string, std::vector<std::string>> load_versions(
    const std::filesystem::path& p) {
  try {
    return parse_versions(read_text_file(p));
  } catch (const ValidationError& e) {
    throw ValidationError(p.string() + ": " + e.what());
  }
}

inline std::string save_versions(
    const std::map<std::string, std::vector<std::string>>& versions) {
  std::string out = std::string(kVersionsHeader) + "\n";
  for (const auto& [video, sources] : versions) {
    for (const auto& s : sources) out += csv_row({video, s});
  }
  return out;
}

inline constexpr std::string_view kRespondentsHeader =
    "respondent_id,kind,model,input_format,prompt_version";

inline std::vector<Respondent> parse_respondents(std::string_view text) {
  auto rows = parse_csv(text);
  if (rows.empty()) throw ValidationError("respondents CSV: empty file");
  detail::check_header(rows[0], kRespondentsHeader, "respondents CSV");
  std::vector<Respondent> out;
  std::set<std::string> ids;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() != 5) {
      throw ValidationError("row " + std::to_string(r) + ": expected 5 fields");
    }
    Respondent resp;
    resp.id = row[0];
    resp.kind = parse_respondent_kind(row[1]);
    resp.model = row[2];
    resp.input_format = row[3];
    if (!row[4].empty()) {
      if (row[4] != "1" && row[4] != "2") {
        throw ValidationError("row " + std::to_string(r) +
                              ": prompt_version must be 1 or 2");
      }
      resp.prompt_version = row[4][0] - '0';
    }
    if (resp.id.empty()) throw ValidationError("row " + std::to_string(r) + ": empty respondent_id");
    if (resp.kind == RespondentKind::Vlm && resp.model.empty()) {
      throw ValidationError("row " + std::to_string(r) + ": vlm respondent needs a model");
    }
    if (!ids.insert(resp.id).second) {
      throw ValidationError("row " + std::to_string(r) + ": duplicate respondent_id " + resp.id);
    }
    out.push_back(std::move(resp));
  }
  return out;
}

inline std::vector<Respondent> load_respondents(const std::filesystem::path& p) {
  try {
    return parse_respondents(read_text_file(p));
  } catch (const ValidationError& e) {
    throw ValidationError(p.string() + ": " + e.what());
  }
}

inline std::string save_respondents(const std::vector<Respondent>& respondents) {
  std::string out = std::string(kRespondentsHeader) + "\n";
  for (const auto& r : respondents) {
    out += csv_row({r.id, std::string(to_string(r.kind)), r.model, r.input_format,
                    r.prompt_version ? std::to_string(r.prompt_version) : ""});
  }
  return out;
}

}  // namespace adqc
