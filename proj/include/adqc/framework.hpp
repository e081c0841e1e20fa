#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "adqc/util.hpp"

namespace adqc {

// The seven rated dimensions, in canonical report order. Five content
// dimensions followed by two formatting dimensions.
enum class DimensionKey {
  Accurate,
  Prioritized,
  Appropriate,
  Consistent,
  Equal,
  Strategy,
  Timing,
};

inline constexpr std::array<DimensionKey, 7> kDimensionOrder = {
    DimensionKey::Accurate,  DimensionKey::Prioritized,
    DimensionKey::Appropriate, DimensionKey::Consistent,
    DimensionKey::Equal,     DimensionKey::Strategy,
    DimensionKey::Timing,
};

inline constexpr std::string_view to_string(DimensionKey k) {
  switch (k) {
    case DimensionKey::Accurate: return "accurate";
    case DimensionKey::Prioritized: return "prioritized";
    case DimensionKey::Appropriate: return "appropriate";
    case DimensionKey::Consistent: return "consistent";
    case DimensionKey::Equal: return "equal";
    case DimensionKey::Strategy: return "strategy";
    case DimensionKey::Timing: return "timing";
  }
  return "?";
}

inline std::optional<DimensionKey> dimension_key_from(std::string_view s) {
  for (DimensionKey k : kDimensionOrder) {
    if (s == to_string(k)) return k;
  }
  return std::nullopt;
}

inline DimensionKey parse_dimension_key(std::string_view s) {
  auto k = dimension_key_from(s);
  if (!k) throw ValidationError("unknown dimension key: " + std::string(s));
  return *k;
}

inline constexpr int kMinRating = 1;
inline constexpr int kMaxRating = 5;

struct Dimension {
  DimensionKey key;
  std::string name;
  std::string definition;
  // Rating level -> descriptive criterion, levels 1..5 exactly.
  std::map<int, std::string> levels;

  bool operator==(const Dimension&) const = default;
};

struct AssessmentFramework {
  std::string version;
  std::vector<Dimension> dimensions;  // canonical order

  const Dimension& dimension(DimensionKey k) const {
    for (const auto& d : dimensions) {
      if (d.key == k) return d;
    }
    throw ValidationError("framework missing dimension: " +
                          std::string(to_string(k)));
  }

  bool operator==(const AssessmentFramework&) const = default;
};

namespace detail {

inline Dimension make_dimension(DimensionKey key, std::string name,
                                std::string definition,
                                std::array<std::string, 5> level_5_to_1) {
  Dimension d;
  d.key = key;
  d.name = std::move(name);
  d.definition = std::move(definition);
  for (int i = 0; i < 5; ++i) d.levels[5 - i] = std::move(level_5_to_1[i]);
  return d;
}

}  // namespace detail

// The bundled seven-dimension rating scale for audio description quality:
// five content dimensions and two formatting dimensions, each rated 1-5.
inline const AssessmentFramework& default_framework() {
  static const AssessmentFramework fw = [] {
    AssessmentFramework f;
    f.version = "1.0";
    f.dimensions.push_back(detail::make_dimension(
        DimensionKey::Accurate, "Accurate",
        "Description provides error-free visual information with correct "
        "identification of what's actually happening. No factual mistakes or "
        "misleading information.",
        {"All visual elements are factually correct. No errors in describing "
         "what's actually happening. Perfect factual accuracy.",
         "Mostly factually correct with minor errors that don't mislead. "
         "Generally accurate descriptions.",
         "Generally factually correct but with some noticeable errors. Mostly "
         "accurate with some mistakes.",
         "Multiple factual errors that mislead about what's happening. Poor "
         "accuracy in descriptions.",
         "Major factual errors or completely incorrect information. Fails to "
         "accurately describe what's happening."}));
    f.dimensions.push_back(detail::make_dimension(
        DimensionKey::Prioritized, "Prioritized",
        "The description achieves optimal prioritization by selecting details "
        "based on their contextual significance and inferential value. For "
        "example, the description prioritizes contextually-rich details over "
        "generic descriptions such as \"Harry runs into the forest\" vs. \"a "
        "boy runs into the forest\", and makes reasonable inferences, such as "
        "\"a boy in a soccer uniform\" vs \"a boy in red jersey and tall "
        "socks\".",
        {"Just right balance - perfect prioritization on most significant "
         "elements for understanding. Chooses contextually relevant details "
         "and appropriate spatial information.",
         "Good prioritization but not perfect - either slightly too generic "
         "or slightly excessive. Generally good choices about what to include",
         "Adequate prioritization but noticeable imbalance - either missing "
         "some important details or including some unnecessary information.",
         "Poor prioritization - either incomplete important information or "
         "includes too many unimportant details. Poor choices about what "
         "matters.",
         "Major problems - either major gaps in important information or "
         "describes everything including unimportant elements. No clear "
         "prioritization on what's significant."}));
    f.dimensions.push_back(detail::make_dimension(
        DimensionKey::Appropriate, "Appropriate",
        "The language, level of detail, and style of the description should "
        "suit the type of content and the intended audience experiences. For "
        "example, for entertainment videos, the description should enhance "
        "enjoyment, for educational videos, it should support understanding, "
        "and instructional videos should enable viewers to follow or "
        "replicate the steps shown.",
        {"Perfect alignment - language and detail level expertly matched to "
         "both audience capabilities and content purpose. Description fully "
         "supports intended experience.",
         "Good alignment with minor mismatches - generally appropriate for "
         "audience and purpose but occasional lapses in tone, complexity, or "
         "focus.",
         "Adequate alignment but noticeable disconnects - partially serves "
         "audience and purpose but inconsistent in matching language level or "
         "functional needs.",
         "Poor alignment - frequently uses inappropriate language for the "
         "audience or fails to support content purpose. Description often "
         "works against intended goals.",
         "Complete misalignment - language and approach entirely unsuited to "
         "the audience and/or actively undermines content purpose. No "
         "apparent consideration of who will use this or why."}));
    f.dimensions.push_back(detail::make_dimension(
        DimensionKey::Consistent, "Consistent",
        "The description maintains consistent terminology, style, and tone, "
        "supporting a coherent and unified narrative throughout the video.",
        {"Fully consistent in terminology and style. Narrative flows smoothly "
         "and coherently.",
         "Mostly consistent with minor variations. The narrative remains "
         "generally coherent.",
         "Adequate consistency, but some noticeable shifts in terminology or "
         "style.",
         "Frequent inconsistencies in word choice or tone. The narrative "
         "becomes difficult to follow.",
         "No consistency maintained. The narrative is disjointed or "
         "incoherent."}));
    f.dimensions.push_back(detail::make_dimension(
        DimensionKey::Equal, "Equal",
        "The description ensures equal access by being objective and without "
        "personal interpretation, bias, or unnecessary commentary.",
        {"Completely objective. No personal interpretation. Appropriate "
         "descriptive language without editorial comment.",
         "Generally objective with rare minor interpretive moments.",
         "Mostly objective but some unnecessary interpretation present.",
         "Frequent interpretive language. Some bias evident in descriptions.",
         "Highly interpretive and biased. Significant personal commentary "
         "interferes with equal access."}));
    f.dimensions.push_back(detail::make_dimension(
        DimensionKey::Strategy, "Strategic Use of Description Method",
        "The description makes effective choices between inline and extended "
        "description methods based on content characteristics.",
        {"Perfect method selection - consistently chooses inline for content "
         "with adequate pauses, extended only when absolutely necessary based "
         "on professional criteria.",
         "Good method selection with occasional minor errors - generally "
         "appropriate choices with rare unnecessary use of extended "
         "description.",
         "Adequate method selection but some poor choices - sometimes uses "
         "extended unnecessarily or misses opportunities when extended is "
         "needed.",
         "Poor method selection - frequently uses wrong method, either "
         "overusing extended description or failing to use it when required.",
         "Severe method selection issues - no understanding of when to use "
         "inline vs. extended based on professional standards."}));
    f.dimensions.push_back(detail::make_dimension(
        DimensionKey::Timing, "Timing & Placement",
        "Appropriate timing of description placement relative to visual "
        "content and audio elements based on established accessibility "
        "standards.",
        {"Optimal timing - descriptions placed during natural pauses close to "
         "the visual action without interrupting essential audio.",
         "Occasionally poor timing - generally good placement but sometimes "
         "descriptions are too early, too late, or slightly overlap important "
         "audio.",
         "Noticeable timing issues - descriptions poorly timed relative to "
         "visual content, some interference with dialogue.",
         "Poor timing - descriptions often mistimed, frequently interrupting "
         "dialogue or placed too far from relevant action.",
         "Severe timing issues - consistently poor timing that disrupts "
         "content flow and interferes with essential audio."}));
    return f;
  }();
  return fw;
}

inline AssessmentFramework parse_framework(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("framework: root must be an object");
  if (!j.contains("version") || !j["version"].is_string()) {
    throw ValidationError("framework: missing string field 'version'");
  }
  if (!j.contains("dimensions") || !j["dimensions"].is_array()) {
    throw ValidationError("framework: missing array field 'dimensions'");
  }
  AssessmentFramework fw;
  fw.version = j["version"].get<std::string>();
  std::map<DimensionKey, Dimension> seen;
  for (const auto& dj : j["dimensions"]) {
    if (!dj.is_object()) throw ValidationError("framework: dimension entries must be objects");
    for (const char* field : {"key", "name", "definition"}) {
      if (!dj.contains(field) || !dj[field].is_string()) {
        throw ValidationError(std::string("framework: dimension missing string field '") + field + "'");
      }
    }
    Dimension d;
    d.key = parse_dimension_key(dj["key"].get<std::string>());
    if (seen.count(d.key)) {
      throw ValidationError("framework: duplicate dimension: " +
                            std::string(to_string(d.key)));
    }
    d.name = dj["name"].get<std::string>();
    d.definition = dj["definition"].get<std::string>();
    if (!dj.contains("levels") || !dj["levels"].is_object()) {
      throw ValidationError("framework: " + std::string(to_string(d.key)) +
                            ": missing object field 'levels'");
    }
    for (const auto& [lk, lv] : dj["levels"].items()) {
      if (lk.size() != 1 || lk[0] < '1' || lk[0] > '5') {
        throw ValidationError("framework: " + std::string(to_string(d.key)) +
                              ": unexpected level " + lk);
      }
      if (!lv.is_string()) {
        throw ValidationError("framework: " + std::string(to_string(d.key)) +
                              ": level " + lk + " must be a string");
      }
      d.levels[lk[0] - '0'] = lv.get<std::string>();
    }
    for (int lvl = kMinRating; lvl <= kMaxRating; ++lvl) {
      if (!d.levels.count(lvl)) {
        throw ValidationError("framework: " + std::string(to_string(d.key)) +
                              ": missing level " + std::to_string(lvl));
      }
    }
    seen.emplace(d.key, std::move(d));
  }
  for (DimensionKey k : kDimensionOrder) {
    auto it = seen.find(k);
    if (it == seen.end()) {
      throw ValidationError("framework: missing dimension: " +
                            std::string(to_string(k)));
    }
    fw.dimensions.push_back(std::move(it->second));
  }
  return fw;
}

inline AssessmentFramework load_framework(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("framework: " + path.string() +
                          ": invalid JSON: " + e.what());
  }
  return parse_framework(j);
}

inline std::string framework_to_json(const AssessmentFramework& fw) {
  nlohmann::ordered_json j;
  j["version"] = fw.version;
  j["dimensions"] = nlohmann::ordered_json::array();
  for (const auto& d : fw.dimensions) {
    nlohmann::ordered_json dj;
    dj["key"] = std::string(to_string(d.key));
    dj["name"] = d.name;
    dj["definition"] = d.definition;
    nlohmann::ordered_json levels;
    for (const auto& [lvl, text] : d.levels) levels[std::to_string(lvl)] = text;
    dj["levels"] = std::move(levels);
    j["dimensions"].push_back(std::move(dj));
  }
  return j.dump(2) + "\n";
}

}  // namespace adqc
