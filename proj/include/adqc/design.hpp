#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include "adqc/csv.hpp"
#include "adqc/rng.hpp"
#include "adqc/study.hpp"
#include "adqc/util.hpp"

namespace adqc {

// Blinded label alphabet: A, B, C, ... one letter per AD version of a video.
inline std::vector<std::string> version_labels(std::size_t n) {
  if (n > 26) throw ValidationError("more than 26 versions per video");
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(std::string(1, char('A' + i)));
  return out;
}

// Per-video bijection between blinded labels and AD sources. One mapping per
// video, shared by every rater, so consensus compares like with like.
struct LabelMapping {
  std::string video_id;
  // label -> source, ordered by label.
  std::vector<std::pair<std::string, std::string>> label_to_source;

  const std::string& source_for(const std::string& label) const {
    for (const auto& [l, s] : label_to_source) {
      if (l == label) return s;
    }
    throw ValidationError("video " + video_id + ": unknown label " + label);
  }

  bool has_source(const std::string& source) const {
    for (const auto& [l, s] : label_to_source) {
      if (s == source) return true;
    }
    return false;
  }

  bool operator==(const LabelMapping&) const = default;
};

// Draws one uniform label permutation per video. Sources are sorted before
// shuffling so the draw depends only on (seed, video, source set), not on
// input file order.
inline std::vector<LabelMapping> make_label_mappings(
    const std::vector<Video>& videos,
    const std::map<std::string, std::vector<std::string>>& versions_per_video,
    std::uint64_t seed) {
  if (videos.empty()) throw ValidationError("make_label_mappings: no videos");
  std::vector<LabelMapping> out;
  for (const auto& v : videos) {
    auto it = versions_per_video.find(v.id);
    if (it == versions_per_video.end() || it->second.size() < 2) {
      throw ValidationError("video " + v.id + ": needs at least 2 AD versions");
    }
    std::vector<std::string> sources = it->second;
    std::sort(sources.begin(), sources.end());
    if (std::adjacent_find(sources.begin(), sources.end()) != sources.end()) {
      throw ValidationError("video " + v.id + ": duplicate source");
    }
    auto rng = stream(seed, {"labels", v.id});
    shuffle(sources, rng);
    LabelMapping m;
    m.video_id = v.id;
    auto labels = version_labels(sources.size());
    for (std::size_t i = 0; i < sources.size(); ++i) {
      m.label_to_source.emplace_back(labels[i], sources[i]);
    }
    out.push_back(std::move(m));
  }
  return out;
}

inline constexpr std::string_view kMappingsHeader = "video_id,label,source";

inline std::string save_label_mappings(const std::vector<LabelMapping>& maps) {
  std::string out = std::string(kMappingsHeader) + "\n";
  for (const auto& m : maps) {
    for (const auto& [label, source] : m.label_to_source) {
      out += csv_row({m.video_id, label, source});
    }
  }
  return out;
}

inline std::vector<LabelMapping> parse_label_mappings(std::string_view text) {
  auto rows = parse_csv(text);
  if (rows.empty()) throw ValidationError("mappings CSV: empty file");
  detail::check_header(rows[0], kMappingsHeader, "mappings CSV");
  std::vector<LabelMapping> out;
  std::map<std::string, std::size_t> index;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() != 3) {
      throw ValidationError("row " + std::to_string(r) + ": expected 3 fields");
    }
    auto [it, inserted] = index.emplace(row[0], out.size());
    if (inserted) out.push_back(LabelMapping{row[0], {}});
    auto& m = out[it->second];
    for (const auto& [l, s] : m.label_to_source) {
      if (l == row[1]) {
        throw ValidationError("row " + std::to_string(r) + ": duplicate label " +
                              row[1] + " for video " + row[0]);
      }
      if (s == row[2]) {
        throw ValidationError("row " + std::to_string(r) + ": duplicate source " +
                              row[2] + " for video " + row[0]);
      }
    }
    m.label_to_source.emplace_back(row[1], row[2]);
  }
  for (auto& m : out) {
    std::sort(m.label_to_source.begin(), m.label_to_source.end());
  }
  return out;
}

inline std::vector<LabelMapping> load_label_mappings(
    const std::filesystem::path& p) {
  try {
    return parse_label_mappings(read_text_file(p));
  } catch (const ValidationError& e) {
    throw ValidationError(p.string() + ": " + e.what());
  }
}

// Personalized task sheet: the order a rater watches videos, and the label
// order within each video. Orders are respondent-specific; the label->source
// mapping is not.
struct AssignmentSheet {
  std::string respondent_id;
  std::vector<std::string> video_order;
  std::map<std::string, std::vector<std::string>> label_order;  // per video

  // Flattened checklist tasks as (video_id, label), in presentation order.
  std::vector<std::pair<std::string, std::string>> tasks() const {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& v : video_order) {
      for (const auto& l : label_order.at(v)) out.emplace_back(v, l);
    }
    return out;
  }

  bool operator==(const AssignmentSheet&) const = default;
};

inline std::vector<AssignmentSheet> make_sheets(
    const std::vector<Respondent>& respondents,
    const std::vector<Video>& videos,
    const std::vector<LabelMapping>& mappings, std::uint64_t seed) {
  if (respondents.empty()) throw ValidationError("make_sheets: no respondents");
  if (videos.empty()) throw ValidationError("make_sheets: no videos");
  std::map<std::string, const LabelMapping*> by_video;
  for (const auto& m : mappings) by_video[m.video_id] = &m;
  for (const auto& v : videos) {
    if (!by_video.count(v.id)) {
      throw ValidationError("make_sheets: no label mapping for video " + v.id);
    }
  }
  std::vector<AssignmentSheet> out;
  for (const auto& r : respondents) {
    AssignmentSheet s;
    s.respondent_id = r.id;
    for (const auto& v : videos) s.video_order.push_back(v.id);
    auto vrng = stream(seed, {"video-order", r.id});
    shuffle(s.video_order, vrng);
    for (const auto& v : videos) {
      std::vector<std::string> labels;
      for (const auto& [l, src] : by_video[v.id]->label_to_source) {
        labels.push_back(l);
      }
      auto lrng = stream(seed, {"label-order", r.id, v.id});
      shuffle(labels, lrng);
      s.label_order[v.id] = std::move(labels);
    }
    out.push_back(std::move(s));
  }
  return out;
}

enum class SheetFormat { Markdown, Csv };

inline constexpr std::string_view kSheetCsvHeader = "task_index,video_id,label,done";

inline std::string render_sheet(const AssignmentSheet& sheet, SheetFormat fmt) {
  auto tasks = sheet.tasks();
  if (fmt == SheetFormat::Csv) {
    std::string out = std::string(kSheetCsvHeader) + "\n";
    int idx = 1;
    for (const auto& [video, label] : tasks) {
      out += csv_row({std::to_string(idx++), video, label, ""});
    }
    return out;
  }
  std::string out;
  out += "# Rating assignment for " + sheet.respondent_id + "\n\n";
  out += "Work through the tasks in the listed order. Rate every dimension of\n";
  out += "a version before moving on, then tick its box.\n\n";
  int idx = 1;
  for (const auto& [video, label] : tasks) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%3d", idx++);
    out += std::string(buf) + ". [ ] video " + video + ", version " + label + "\n";
  }
  return out;
}

}  // namespace adqc
