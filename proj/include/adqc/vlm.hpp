#pragma once

#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "adqc/framework.hpp"
#include "adqc/study.hpp"
#include "adqc/util.hpp"

#include <json.hpp>

namespace adqc {

// Role framings for the model-respondent system prompt. Version 2 was added
// to counter rating inflation; it demands stricter standards.
inline constexpr std::string_view kSystemPromptV1 =
    "You are an expert Accessibility Consultant specializing in the quality "
    "assurance of audio description (AD) for video content.";
inline constexpr std::string_view kSystemPromptV2 =
    "You are a STRICT Accessibility Consultant specializing in AD quality "
    "assurance. You must apply the HIGHEST professional standards with ZERO "
    "tolerance for errors or non-compliance. A final score of 5 is allowed "
    "ONLY if EVERY audio clip clearly supports perfection.";

// Full evaluation prompt template. The ROLE line doubles as system prompt
// version 1; the remainder (CONTEXT onward) becomes the user prompt. Literal
// braces are escaped as {{ }}; {json_data} is the single substitution slot.
inline constexpr std::string_view kPromptTemplate = R"ADQC(ROLE: You are an expert Accessibility Consultant specializing in the quality assurance of audio description (AD) for video content.

CONTEXT: I am providing you with two assets:
1. A video file.
2. The structured JSON data of the existing audio description, which is included below.

**JSON DATA:**
```json
{json_data}
```

TASK: Analyze the video and the JSON data to evaluate the quality of the audio description track using the Multi-Dimensional Assessment Model for Audio Description.

EVALUATION FRAMEWORK:
This model evaluates audio description across two main dimensions:
I. CONTENT (5 criteria based on DCMP guidelines)
II. FORMATTING (2 criteria covering how and when descriptions are delivered)

I. CONTENT CRITERIA:
1. ACCURATE - Error Free Content
Definition: Description provides error-free visual information with correct identification of what's actually happening. No factual mistakes or misleading information.
 5: All visual elements are factually correct. No errors in describing what's actually happening. Perfect factual accuracy.
 4: Mostly factually correct with minor errors that don't mislead. Generally accurate descriptions.
 3: Generally factually correct but with some noticeable errors. Mostly accurate with some mistakes.
 2: Multiple factual errors that mislead about what's happening. Poor accuracy in descriptions.
 1: Major factual errors or completely incorrect information. Fails to accurately describe what's happening.

2. PRIORITIZED - Context & Inference
Definition: The description achieves optimal prioritization by selecting details based on their contextual significance and inferential value. Prioritizes contextually-rich details over generic descriptions and makes reasonable inferences.
 5: Just right balance - perfect prioritization on most significant elements for understanding. Chooses contextually relevant details and appropriate spatial information.
 4: Good prioritization but not perfect - either slightly too generic or slightly excessive. Generally good choices about what to include.
 3: Adequate prioritization but noticeable imbalance - either missing some important details or including some unnecessary information.
 2: Poor prioritization - either incomplete important information or includes too many unimportant details. Poor choices about what matters.
 1: Major problems - either major gaps in important information or describes everything including unimportant elements. No clear prioritization on what's significant.

3. APPROPRIATE - Audience & Purpose Alignment
Definition: The language, level of detail, and style of the description should suit the type of content and the intended audience experiences. For entertainment videos, enhance enjoyment; for educational videos, support understanding; for instructional videos, enable viewers to follow steps.
 5: Perfect alignment - language and detail level expertly matched to both audience capabilities and content purpose. Description fully supports intended experience.
 4: Good alignment with minor mismatches - generally appropriate for audience and purpose but occasional lapses in tone, complexity, or focus.
 3: Adequate alignment but noticeable disconnects - partially serves audience and purpose but inconsistent in matching language level or functional needs.
 2: Poor alignment - frequently uses inappropriate language for the audience or fails to support content purpose. Description often works against intended goals.
 1: Complete misalignment - language and approach entirely unsuited to the audience and/or actively undermines content purpose.

4. CONSISTENT - Consistency & Coherence
Definition: The description maintains consistent terminology, style, and tone, supporting a coherent and unified narrative throughout the video.
 5: Fully consistent in terminology and style. Narrative flows smoothly and coherently.
 4: Mostly consistent with minor variations. The narrative remains generally coherent.
 3: Adequate consistency, but some noticeable shifts in terminology or style.
 2: Frequent inconsistencies in word choice or tone. The narrative becomes difficult to follow.
 1: No consistency maintained. The narrative is disjointed or incoherent.

5. EQUAL - Objectivity & Non-Interpretation
Definition: The description ensures equal access by being objective and without personal interpretation, bias, or unnecessary commentary.
 5: Completely objective. No personal interpretation. Appropriate descriptive language without editorial comment.
 4: Generally objective with rare minor interpretive moments.
 3: Mostly objective but some unnecessary interpretation present.
 2: Frequent interpretive language. Some bias evident in descriptions.
 1: Highly interpretive and biased. Significant personal commentary interferes with equal access.

II. FORMATTING CRITERIA:
1. Strategic Use of Description Method (Inline vs. Extended)
Definition: The description makes effective choices between inline and extended description methods based on content characteristics.
Notes:
- Inline description is preferred when sufficient natural pauses exist and visual content can be adequately described within available audio gaps
- Extended description is appropriate for text-heavy videos, dialogue-heavy content, noisy videos with important music/sound, videos with short cuts/detailed frames, or when essential visual information cannot fit within natural pauses
 5: Perfect method selection - consistently chooses inline for content with adequate pauses, extended only when absolutely necessary based on professional criteria
 4: Good method selection with occasional minor errors - generally appropriate choices with rare unnecessary use of extended description
 3: Adequate method selection but some poor choices - sometimes uses extended unnecessarily or misses opportunities when extended is needed
 2: Poor method selection - frequently uses wrong method, either overusing extended description or failing to use it when required
 1: Severe method selection issues - no understanding of when to use inline vs. extended based on professional standards

2. Timing & Placement
Definition: Appropriate timing of description placement relative to visual content and audio elements based on established accessibility standards.
Notes:
- No interruption of important dialogue or essential sound effects
- Insert descriptions at natural points in the timeline
- Place descriptions as close to the visual action as possible
- Pre-description is allowed if it clarifies the situation
  5: Optimal timing - descriptions placed during natural pauses close to the visual action without interrupting essential audio
  4: Occasionally poor timing - generally good placement but sometimes descriptions are too early, too late, or slightly overlap important audio
  3: Noticeable timing issues - descriptions poorly timed relative to visual content, some interference with dialogue
  2: Poor timing - descriptions often mistimed, frequently interrupting dialogue or placed too far from relevant action
  1: Severe timing issues - consistently poor timing that disrupts content flow and interferes with essential audio

OUTPUT FORMAT:
You MUST return your response as a single, flat JSON object. Do not use nested structures. Do not include any text or markdown before or after the JSON. The JSON object must have this EXACT structure:
{{
"accurate_rating": "1-5",
"accurate_justification": "Justification for the rating.",
"prioritized_rating": "1-5",
"prioritized_justification": "Justification for the rating.",
"appropriate_rating": "1-5",
"appropriate_justification": "Justification for the rating.",
"consistent_rating": "1-5",
"consistent_justification": "Justification for the rating.",
"equal_rating": "1-5",
"equal_justification": "Justification for the rating.",
"strategic_method_selection_rating": "1-5",
"strategic_method_selection_justification": "Justification for the rating.",
"timing_and_placement_rating": "1-5",
"timing_and_placement_justification": "Justification for the rating."
}})ADQC";

struct ChunkWindow {
  int index = 0;
  double start = 0;  // seconds, inclusive
  double end = 0;    // seconds, exclusive

  bool operator==(const ChunkWindow&) const = default;
};

// Consecutive half-open [k*width, (k+1)*width) windows; the last one is
// truncated at the video duration.
inline std::vector<ChunkWindow> chunk_windows(double duration_seconds,
                                              double width = 30.0) {
  if (!(duration_seconds > 0)) {
    throw ValidationError("chunk_windows: duration must be positive");
  }
  if (!(width > 0)) throw ValidationError("chunk_windows: width must be positive");
  std::vector<ChunkWindow> windows;
  for (int k = 0; k * width < duration_seconds; ++k) {
    windows.push_back(
        {k, k * width, std::min((k + 1) * width, duration_seconds)});
  }
  return windows;
}

struct PromptPackage {
  std::string system_prompt;
  std::string user_prompt;
  std::optional<ChunkWindow> chunk;
  bool empty_segments = false;  // no segment overlapped the chunk window

  std::uint64_t content_hash() const {
    std::uint64_t h = fnv1a64(system_prompt);
    h = fnv1a64("\n\n", h);
    return fnv1a64(user_prompt, h);
  }

  // System and user parts joined back into the single-template form.
  std::string full_text() const {
    return "ROLE: " + system_prompt + "\n\n" + user_prompt;
  }
};

namespace detail {

inline std::string unescape_braces(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (i + 1 < text.size() &&
        ((text[i] == '{' && text[i + 1] == '{') ||
         (text[i] == '}' && text[i + 1] == '}'))) {
      out.push_back(text[i]);
      ++i;
    } else {
      out.push_back(text[i]);
    }
  }
  return out;
}

}  // namespace detail

// Byte-deterministic prompt assembly. A chunk keeps exactly the segments
// overlapping its window (touching an endpoint is not overlap).
inline PromptPackage build_prompt(const AssessmentFramework& framework,
                                  const std::vector<AdSegment>& segments,
                                  int role_version,
                                  std::optional<ChunkWindow> chunk = {}) {
  if (role_version != 1 && role_version != 2) {
    throw ValidationError("build_prompt: role version must be 1 or 2");
  }
  if (framework.dimensions.size() != kDimensionOrder.size()) {
    throw ValidationError(
        "build_prompt: template requires the standard 7-dimension framework");
  }
  if (chunk && !(chunk->start < chunk->end)) {
    throw ValidationError("build_prompt: chunk start must precede end");
  }
  std::vector<AdSegment> kept;
  for (const auto& seg : segments) {
    if (!chunk || (seg.start < chunk->end && seg.end > chunk->start)) {
      kept.push_back(seg);
    }
  }

  std::string_view tpl = kPromptTemplate;
  std::size_t body_at = tpl.find("CONTEXT:");
  std::size_t slot = tpl.find("{json_data}");
  if (body_at == std::string_view::npos || slot == std::string_view::npos ||
      tpl.find("{json_data}", slot + 1) != std::string_view::npos) {
    throw ComputationError("build_prompt: malformed embedded template");
  }
  std::string pre = detail::unescape_braces(tpl.substr(body_at, slot - body_at));
  std::string post = detail::unescape_braces(tpl.substr(slot + 11));

  PromptPackage pkg;
  pkg.system_prompt = std::string(role_version == 1 ? kSystemPromptV1 : kSystemPromptV2);
  pkg.user_prompt = pre + segments_to_json(kept) + post;
  pkg.chunk = chunk;
  pkg.empty_segments = kept.empty();
  return pkg;
}

struct VlmResponse {
  std::map<DimensionKey, int> ratings;
  std::map<DimensionKey, std::string> justifications;
  std::string raw;

  bool operator==(const VlmResponse& other) const {
    return ratings == other.ratings && justifications == other.justifications;
  }
};

namespace detail {

// Response keys per dimension; the two formatting dimensions use long names.
inline std::string response_key(DimensionKey k) {
  switch (k) {
    case DimensionKey::Strategy: return "strategic_method_selection";
    case DimensionKey::Timing: return "timing_and_placement";
    default: return std::string(to_string(k));
  }
}

inline std::string strip_fences(std::string_view payload) {
  std::size_t begin = payload.find_first_not_of(" \t\r\n");
  if (begin == std::string_view::npos) return "";
  std::size_t end = payload.find_last_not_of(" \t\r\n") + 1;
  std::string_view body = payload.substr(begin, end - begin);
  if (body.substr(0, 3) == "```") {
    std::size_t nl = body.find('\n');
    if (nl != std::string_view::npos) {
      std::size_t close = body.rfind("```");
      if (close > nl) body = body.substr(nl + 1, close - nl - 1);
    }
  }
  return std::string(body);
}

}  // namespace detail

// Accepts the documented flat JSON object, optionally inside a fenced code
// block. Ratings arrive as integers or digit strings; both coerce.
inline VlmResponse parse_response(std::string_view payload) {
  std::string body = detail::strip_fences(payload);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("response is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ValidationError("response is not a JSON object");

  VlmResponse r;
  r.raw = std::string(payload);
  for (DimensionKey k : kDimensionOrder) {
    std::string rating_key = detail::response_key(k) + "_rating";
    std::string just_key = detail::response_key(k) + "_justification";
    if (!j.contains(rating_key)) {
      throw ValidationError("response missing key: " + rating_key);
    }
    if (!j.contains(just_key)) {
      throw ValidationError("response missing key: " + just_key);
    }
    const auto& v = j.at(rating_key);
    int rating = 0;
    if (v.is_number_integer()) {
      rating = v.get<int>();
    } else if (v.is_string()) {
      const std::string s = v.get<std::string>();
      if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) {
        throw ValidationError(rating_key + ": not an integer: \"" + s + "\"");
      }
      rating = std::stoi(s);
    } else {
      throw ValidationError(rating_key + ": not an integer");
    }
    if (rating < kMinRating || rating > kMaxRating) {
      throw ValidationError(rating_key + ": rating " + std::to_string(rating) +
                            " outside 1..5");
    }
    if (!j.at(just_key).is_string()) {
      throw ValidationError(just_key + ": not a string");
    }
    r.ratings[k] = rating;
    r.justifications[k] = j.at(just_key).get<std::string>();
  }
  return r;
}

inline std::string serialize_response(const VlmResponse& r) {
  nlohmann::ordered_json j;
  for (DimensionKey k : kDimensionOrder) {
    j[detail::response_key(k) + "_rating"] = r.ratings.at(k);
    j[detail::response_key(k) + "_justification"] = r.justifications.at(k);
  }
  return j.dump(2) + "\n";
}

struct ChunkAverage {
  double mean = 0;
  int rating = 0;  // half-up rounded mean, clamped to 1..5
};

inline ChunkAverage average_chunks(const std::vector<int>& chunk_ratings) {
  if (chunk_ratings.empty()) throw ValidationError("average_chunks: empty list");
  double sum = 0;
  for (int r : chunk_ratings) {
    if (r < kMinRating || r > kMaxRating) {
      throw ValidationError("average_chunks: rating " + std::to_string(r) +
                            " outside 1..5");
    }
    sum += r;
  }
  ChunkAverage a;
  a.mean = sum / static_cast<double>(chunk_ratings.size());
  a.rating = static_cast<int>(std::floor(a.mean + 0.5));
  a.rating = std::max(kMinRating, std::min(kMaxRating, a.rating));
  return a;
}

// Transport pluggability: tests and the bundled demo never talk to a model;
// they read canned payloads keyed by the prompt's content hash.
struct VlmTransport {
  virtual ~VlmTransport() = default;
  virtual std::string complete(const PromptPackage& prompt) const = 0;
};

struct CannedTransport : VlmTransport {
  std::filesystem::path dir;

  explicit CannedTransport(std::filesystem::path d) : dir(std::move(d)) {}

  std::string complete(const PromptPackage& prompt) const override {
    auto path = dir / (to_hex16(prompt.content_hash()) + ".json");
    if (!std::filesystem::exists(path)) {
      throw ComputationError("no canned response at " + path.string());
    }
    return read_text_file(path);
  }
};

struct VlmAdResult {
  std::map<DimensionKey, int> ratings;
  std::map<DimensionKey, double> means;  // unrounded chunk means
  std::vector<VlmResponse> responses;    // one per prompt issued
};

// Whole-AD evaluation: either one full-video prompt or one prompt per
// 30-second window with per-dimension averaging.
inline VlmAdResult evaluate_ad(const AssessmentFramework& framework,
                               const std::vector<AdSegment>& segments,
                               double duration_seconds, int role_version,
                               bool chunked, const VlmTransport& transport,
                               double chunk_width = 30.0) {
  VlmAdResult out;
  if (!chunked) {
    auto pkg = build_prompt(framework, segments, role_version);
    auto resp = parse_response(transport.complete(pkg));
    for (DimensionKey k : kDimensionOrder) {
      out.ratings[k] = resp.ratings.at(k);
      out.means[k] = resp.ratings.at(k);
    }
    out.responses.push_back(std::move(resp));
    return out;
  }
  std::map<DimensionKey, std::vector<int>> per_dim;
  for (const auto& window : chunk_windows(duration_seconds, chunk_width)) {
    auto pkg = build_prompt(framework, segments, role_version, window);
    auto resp = parse_response(transport.complete(pkg));
    for (DimensionKey k : kDimensionOrder) per_dim[k].push_back(resp.ratings.at(k));
    out.responses.push_back(std::move(resp));
  }
  for (DimensionKey k : kDimensionOrder) {
    auto avg = average_chunks(per_dim.at(k));
    out.ratings[k] = avg.rating;
    out.means[k] = avg.mean;
  }
  return out;
}

}  // namespace adqc
