#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "adqc/consensus.hpp"
#include "adqc/design.hpp"
#include "adqc/diagnostics.hpp"
#include "adqc/framework.hpp"
#include "adqc/pcm.hpp"
#include "adqc/rng.hpp"
#include "adqc/study.hpp"
#include "adqc/vlm.hpp"

namespace adqc {

// Scored demo respondent with its rating noise profile: systematic bias,
// spread around the item's true quality, and a wildcard probability of a
// uniform random rating (drives person misfit).
struct DemoProfile {
  Respondent respondent;
  double bias = 0;
  double sd = 0;
  double wild = 0;
};

struct DemoStudy {
  AssessmentFramework framework;
  std::vector<Video> videos;
  std::vector<std::pair<std::string, std::string>> versions;  // (video, source)
  std::map<std::string, AdVersion> ads;                       // key "video:source"
  std::vector<Respondent> respondents;  // experts first, then scored
  std::vector<LabelMapping> mappings;
  std::vector<RatingRecord> expert_records;
  std::vector<RatingRecord> rating_records;
  std::uint64_t seed = 0;
  int salt = 0;
};

namespace detail {

inline const std::vector<Video>& demo_videos() {
  static const std::vector<Video> v = {
      {"v01", "Sourdough starter basics", VideoCategory::HowtoStyle, 412},
      {"v02", "Campus library tour", VideoCategory::Education, 95},
      {"v03", "Desk cable management in five minutes", VideoCategory::HowtoStyle, 301},
      {"v04", "Rooftop garden harvest", VideoCategory::Entertainment, 180},
      {"v05", "Intro to block printing", VideoCategory::Education, 240},
      {"v06", "Street food market walk", VideoCategory::Entertainment, 150},
      {"v07", "Bike tire replacement", VideoCategory::HowtoStyle, 330},
      {"v08", "Morning radio bloopers", VideoCategory::Other, 62},
      {"v09", "Watercolor wash techniques", VideoCategory::Education, 275},
      {"v10", "Apartment workout, no equipment", VideoCategory::HowtoStyle, 205},
  };
  return v;
}

inline const std::vector<std::string>& demo_sources() {
  static const std::vector<std::string> s = {"human", "qwen", "gemini", "gpt"};
  return s;
}

inline std::vector<Respondent> demo_experts() {
  std::vector<Respondent> out;
  for (const char* id : {"E1", "E2", "E3"}) {
    Respondent r;
    r.id = id;
    r.kind = RespondentKind::Expert;
    out.push_back(std::move(r));
  }
  return out;
}

inline const std::vector<DemoProfile>& demo_profiles() {
  auto human = [](const char* id, double bias, double sd, double wild) {
    DemoProfile p;
    p.respondent = {id, RespondentKind::Human, "", "", 0};
    p.bias = bias;
    p.sd = sd;
    p.wild = wild;
    return p;
  };
  auto vlm = [](const char* id, const char* model, const char* format,
                int version, double bias, double sd) {
    DemoProfile p;
    p.respondent = {id, RespondentKind::Vlm, model, format, version};
    p.bias = bias;
    p.sd = sd;
    return p;
  };
  static const std::vector<DemoProfile> profiles = {
      human("Human1", 0.0, 0.55, 0.0),
      human("Human2", 0.2, 0.70, 0.0),
      human("Human3", -0.2, 0.80, 0.0),
      // Erratic rater: wildcard draws make surprising distal ratings.
      human("Human4", 0.0, 0.60, 0.18),
      vlm("qwen_json_v1", "qwen2.5-vl", "json_chunks", 1, 1.0, 1.00),
      vlm("qwen_json_v2", "qwen2.5-vl", "json_chunks", 2, 0.3, 1.00),
      vlm("gpt_json_v1", "gpt-4o", "json_chunks_frames", 1, 0.8, 0.85),
      vlm("gpt_json_v2", "gpt-4o", "json_chunks_frames", 2, 0.1, 0.85),
      vlm("gemini_json_v1", "gemini-1.5-pro", "json_full_video", 1, 0.6, 0.70),
      vlm("gemini_json_v2", "gemini-1.5-pro", "json_full_video", 2, 0.0, 0.70),
      vlm("gemini_video_v1", "gemini-1.5-pro", "screen_recording", 1, 0.5, 0.75),
      vlm("gemini_video_v2", "gemini-1.5-pro", "screen_recording", 2, -0.1, 0.75),
  };
  return profiles;
}

struct DemoSentence {
  const char* text;
  DescType type;
};

inline const std::vector<DemoSentence>& demo_sentences() {
  static const std::vector<DemoSentence> pool = {
      {"A hand lifts the lid and steam rises.", DescType::Visual},
      {"Text on screen lists the three required tools.", DescType::TextOnScreen},
      {"She sets the jar on the counter and labels it.", DescType::Visual},
      {"A close-up shows the gauge needle settle at forty.", DescType::Visual},
      {"He threads the cable behind the monitor arm.", DescType::Visual},
      {"The camera pans across the finished shelf.", DescType::Visual},
      {"A diagram appears with arrows marking each step.", DescType::TextOnScreen},
      {"She taps the card against the reader and the gate opens.", DescType::Visual},
      {"Rows of seedlings line the windowsill.", DescType::Visual},
      {"He flips the tire lever and the bead pops free.", DescType::Visual},
      {"The timer counts down from ten in the corner.", DescType::TextOnScreen},
      {"A title card reads part two.", DescType::TextOnScreen},
      {"She wipes the brush on the rim of the jar.", DescType::Visual},
      {"Two people carry the bench toward the wall.", DescType::Visual},
      {"The spreadsheet scrolls to a highlighted row.", DescType::TextOnScreen},
      {"Sunlight moves across the workbench.", DescType::Visual},
  };
  return pool;
}

inline double round1(double v) { return std::round(v * 10.0) / 10.0; }

inline std::vector<AdSegment> demo_segments(std::uint64_t eff_seed,
                                            const Video& video,
                                            const std::string& source) {
  auto rng = stream(eff_seed, {"segments", video.id, source});
  const auto& pool = demo_sentences();
  std::size_t n = 4 + rng.below(5);
  double slot = video.duration_seconds / static_cast<double>(n);
  std::vector<AdSegment> segs;
  std::size_t prev_pick = pool.size();
  for (std::size_t i = 0; i < n; ++i) {
    AdSegment seg;
    double start = i * slot + rng.uniform() * 0.4 * slot;
    seg.track = rng.uniform() < 0.25 ? Track::Extended : Track::Inline;
    std::size_t pick = rng.below(pool.size());
    if (pick == prev_pick) pick = (pick + 1) % pool.size();
    prev_pick = pick;
    seg.text = pool[pick].text;
    seg.desc_type = pool[pick].type;
    double len = seg.track == Track::Inline ? 1.2 + rng.uniform() * 2.3
                                            : 3.0 + rng.uniform() * 4.0;
    double end = std::min({start + len, (i + 1) * slot - 0.2,
                           static_cast<double>(video.duration_seconds)});
    seg.start = round1(start);
    seg.end = round1(end);
    if (seg.end <= seg.start) seg.end = round1(seg.start + 0.5);
    segs.push_back(std::move(seg));
  }
  return segs;
}

inline int clamp_rating(double x) {
  int r = static_cast<int>(std::llround(x));
  return std::max(kMinRating, std::min(kMaxRating, r));
}

inline double true_quality(std::uint64_t eff_seed, const std::string& video_id,
                           const std::string& source, DimensionKey dim) {
  double base = 0;
  if (source == "human") base = 4.4;
  else if (source == "gemini") base = 3.6;
  else if (source == "gpt") base = 3.1;
  else base = 2.6;
  auto drng = stream(eff_seed, {"truth", video_id, source, std::string(to_string(dim))});
  double wobble = drng.uniform() * 1.8 - 0.9;
  auto vrng = stream(eff_seed, {"video", video_id});
  double tilt = vrng.uniform() * 0.6 - 0.3;
  return std::max(1.0, std::min(5.0, base + wobble + tilt));
}

}  // namespace detail

// Deterministic synthetic study shaped like the real one: 10 videos, 4 AD
// sources each, 3 experts for ground truth, 12 scored respondents. The salt
// feeds every noise stream; make_demo_study picks the first salt whose data
// pass the structural checks.
inline DemoStudy make_demo_candidate(std::uint64_t seed, int salt) {
  DemoStudy study;
  study.framework = default_framework();
  study.videos = detail::demo_videos();
  study.seed = seed;
  study.salt = salt;
  std::uint64_t eff = fnv1a64_u64(static_cast<std::uint64_t>(salt), seed);

  std::map<std::string, std::vector<std::string>> per_video;
  for (const auto& v : study.videos) {
    for (const auto& s : detail::demo_sources()) {
      study.versions.emplace_back(v.id, s);
      per_video[v.id].push_back(s);
      AdVersion ad;
      ad.video_id = v.id;
      ad.source = s;
      ad.segments = detail::demo_segments(eff, v, s);
      study.ads[v.id + ":" + s] = std::move(ad);
    }
  }

  study.respondents = detail::demo_experts();
  for (const auto& p : detail::demo_profiles()) {
    study.respondents.push_back(p.respondent);
  }
  study.mappings = make_label_mappings(study.videos, per_video, seed);

  std::map<std::string, std::map<std::string, std::string>> label_of;
  for (const auto& m : study.mappings) {
    for (const auto& [label, source] : m.label_to_source) {
      label_of[m.video_id][source] = label;
    }
  }

  for (const auto& v : study.videos) {
    for (const auto& s : detail::demo_sources()) {
      for (DimensionKey dim : kDimensionOrder) {
        double q = detail::true_quality(eff, v.id, s, dim);
        for (const auto& e : detail::demo_experts()) {
          auto rng = stream(eff, {"expert", e.id, v.id, s, std::string(to_string(dim))});
          RatingRecord rec;
          rec.respondent_id = e.id;
          rec.video_id = v.id;
          rec.version_label = label_of[v.id][s];
          rec.dimension = dim;
          rec.rating = detail::clamp_rating(q + normal(rng, 0.0, 0.5));
          study.expert_records.push_back(std::move(rec));
        }
        for (const auto& p : detail::demo_profiles()) {
          auto rng = stream(eff, {"rating", p.respondent.id, v.id, s,
                                  std::string(to_string(dim))});
          RatingRecord rec;
          rec.respondent_id = p.respondent.id;
          rec.video_id = v.id;
          rec.version_label = label_of[v.id][s];
          rec.dimension = dim;
          if (rng.uniform() < p.wild) {
            rec.rating = 1 + static_cast<int>(rng.below(5));
          } else {
            rec.rating = detail::clamp_rating(q + p.bias + normal(rng, 0.0, p.sd));
          }
          study.rating_records.push_back(std::move(rec));
        }
      }
    }
  }

  // A couple of free-text comments so the CSV round-trip sees quoting.
  for (auto& rec : study.expert_records) {
    if (rec.respondent_id == "E2" && rec.video_id == "v01" &&
        rec.dimension == DimensionKey::Accurate &&
        rec.version_label == label_of["v01"]["human"]) {
      rec.comment = "Clear throughout; one name misread near 0:42";
    }
    if (rec.respondent_id == "E3" && rec.video_id == "v02" &&
        rec.dimension == DimensionKey::Prioritized &&
        rec.version_label == label_of["v02"]["gemini"]) {
      rec.comment = "Too many \"wide shot\" asides, repetitive";
    }
  }

  std::map<std::string, std::size_t> rank;
  for (std::size_t i = 0; i < study.respondents.size(); ++i) {
    rank[study.respondents[i].id] = i;
  }
  std::map<DimensionKey, std::size_t> dim_rank;
  for (std::size_t i = 0; i < kDimensionOrder.size(); ++i) {
    dim_rank[kDimensionOrder[i]] = i;
  }
  auto order = [&](const RatingRecord& a, const RatingRecord& b) {
    auto ka = std::tuple(rank.at(a.respondent_id), a.video_id, a.version_label,
                         dim_rank.at(a.dimension));
    auto kb = std::tuple(rank.at(b.respondent_id), b.video_id, b.version_label,
                         dim_rank.at(b.dimension));
    return ka < kb;
  };
  std::sort(study.expert_records.begin(), study.expert_records.end(), order);
  std::sort(study.rating_records.begin(), study.rating_records.end(), order);
  return study;
}

// Structural checks the committed demo data must satisfy. Throws on failure
// so make_demo_study can move to the next salt.
inline void validate_demo_study(const DemoStudy& study) {
  auto resolved_experts = resolve_labels(study.expert_records, study.mappings);
  auto gt = build_ground_truth(resolved_experts);
  auto resolved = resolve_labels(study.rating_records, study.mappings);
  auto matrices = build_matrices(resolved, gt);
  if (matrices.size() != kDimensionOrder.size()) {
    throw ComputationError("demo: not all dimensions present");
  }
  bool misfit_seen = false;
  for (auto& [dim, matrix] : matrices) {
    if (matrix.persons.size() != detail::demo_profiles().size() ||
        matrix.items.size() != study.versions.size()) {
      throw ComputationError("demo: unexpected matrix shape");
    }
    for (std::size_t i = 0; i < matrix.items.size(); ++i) {
      std::set<int> seen;
      for (std::size_t p = 0; p < matrix.persons.size(); ++p) {
        const auto& c = matrix.cell(p, i);
        if (!c) throw ComputationError("demo: missing cell");
        seen.insert(*c);
      }
      if (seen.size() < 2) {
        throw ComputationError("demo: constant item column " +
                               matrix.items[i].id());
      }
    }
    FitConfig fc;
    fc.collapse_null_categories = true;
    auto fit = fit_pcm(matrix, fc);
    if (!fit.converged) {
      throw ComputationError("demo: fit did not converge for " +
                             std::string(to_string(dim)));
    }
    auto eap = eap_abilities(fit, fit.matrix);
    for (const auto& stats : person_fit(fit, eap, fit.matrix)) {
      if (stats.unit == "Human4" && stats.outfit_flag == FitFlag::Misfit) {
        misfit_seen = true;
      }
    }
  }
  if (!misfit_seen) {
    throw ComputationError("demo: erratic rater never flagged as misfit");
  }
}

inline DemoStudy make_demo_study(std::uint64_t seed = 42) {
  std::string last_error;
  for (int salt = 0; salt < 64; ++salt) {
    DemoStudy study = make_demo_candidate(seed, salt);
    try {
      validate_demo_study(study);
      return study;
    } catch (const std::exception& e) {
      last_error = e.what();
    }
  }
  throw ComputationError("make_demo_study: no salt in 0..63 passed validation; last: " +
                         last_error);
}

struct CannedResponseFile {
  std::string name;  // <content-hash>.json
  std::string payload;
};

// Canned model outputs for one video so the prompt -> transport -> parse ->
// average loop runs offline: the chunked condition answers per window with
// the respondent's committed ratings, the full-video condition once.
inline std::vector<CannedResponseFile> make_canned_responses(
    const DemoStudy& study) {
  const std::string video_id = "v02";
  const std::string source = "human";
  const Video* video = nullptr;
  for (const auto& v : study.videos) {
    if (v.id == video_id) video = &v;
  }
  if (!video) throw ComputationError("canned: demo video missing");
  const auto& segments = study.ads.at(video_id + ":" + source).segments;

  std::string label;
  for (const auto& m : study.mappings) {
    if (m.video_id != video_id) continue;
    for (const auto& [l, s] : m.label_to_source) {
      if (s == source) label = l;
    }
  }
  auto ratings_of = [&](const std::string& respondent_id) {
    std::map<DimensionKey, int> out;
    for (const auto& rec : study.rating_records) {
      if (rec.respondent_id == respondent_id && rec.video_id == video_id &&
          rec.version_label == label) {
        out[rec.dimension] = rec.rating;
      }
    }
    if (out.size() != kDimensionOrder.size()) {
      throw ComputationError("canned: incomplete ratings for " + respondent_id);
    }
    return out;
  };

  auto response_payload = [&](const std::map<DimensionKey, int>& ratings,
                              const std::string& note) {
    VlmResponse r;
    for (DimensionKey k : kDimensionOrder) {
      r.ratings[k] = ratings.at(k);
      r.justifications[k] = note;
    }
    return serialize_response(r);
  };

  std::vector<CannedResponseFile> files;
  auto add = [&](const PromptPackage& pkg, const std::string& payload) {
    files.push_back({to_hex16(pkg.content_hash()) + ".json", payload});
  };

  auto qwen = ratings_of("qwen_json_v1");
  std::string qwen_payload =
      response_payload(qwen, "Consistent with the visible actions in this span.");
  for (const auto& window :
       chunk_windows(static_cast<double>(video->duration_seconds))) {
    add(build_prompt(study.framework, segments, 1, window), qwen_payload);
  }
  auto gemini = ratings_of("gemini_json_v1");
  add(build_prompt(study.framework, segments, 1),
      response_payload(gemini, "Assessed across the full timeline."));

  // Identical prompts must map to identical payloads; otherwise the canned
  // store would be ambiguous.
  std::map<std::string, std::string> unique;
  for (const auto& f : files) {
    auto [it, inserted] = unique.emplace(f.name, f.payload);
    if (!inserted && it->second != f.payload) {
      throw ComputationError("canned: conflicting payloads for " + f.name);
    }
  }
  std::vector<CannedResponseFile> out;
  for (auto& [name, payload] : unique) out.push_back({name, payload});
  return out;
}

}  // namespace adqc
