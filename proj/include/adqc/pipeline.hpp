#pragma once

#include <charconv>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "adqc/consensus.hpp"
#include "adqc/design.hpp"
#include "adqc/diagnostics.hpp"
#include "adqc/framework.hpp"
#include "adqc/pcm.hpp"
#include "adqc/study.hpp"
#include "adqc/util.hpp"
#include "adqc/wright_map.hpp"

#include <json.hpp>

namespace adqc {

// One run, one config file. Relative paths resolve against the config file's
// directory so a run is reproducible from the artifact alone.
struct RunConfig {
  std::filesystem::path base_dir;
  std::optional<std::filesystem::path> framework;
  std::optional<std::filesystem::path> videos;
  std::optional<std::filesystem::path> versions;
  std::optional<std::filesystem::path> respondents;
  std::optional<std::filesystem::path> label_mappings;
  std::optional<std::filesystem::path> ratings;
  std::optional<std::filesystem::path> expert_ratings;
  std::optional<std::filesystem::path> ad_dir;
  std::optional<std::filesystem::path> out_dir;
  std::uint64_t seed = 42;
  int nodes = 61;
  double span_sds = 5.0;
  double tolerance = 1e-4;
  int max_iter = 1000;
  bool fast = false;
  bool collapse = false;  // merge never-observed credit categories downward
  double bin_width = 0.25;
  int text_width = 100;
  double chunk_width = 30.0;
};

namespace detail {

inline std::string trim(std::string_view s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
inline T parse_number(const std::string& key, const std::string& value) {
  T out{};
  auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || p != value.data() + value.size()) {
    throw ValidationError("run config: " + key + ": not a number: '" + value + "'");
  }
  return out;
}

// from_chars for double is missing in some standard libraries; strtod does.
template <>
inline double parse_number<double>(const std::string& key,
                                   const std::string& value) {
  char* end = nullptr;
  double out = std::strtod(value.c_str(), &end);
  if (end != value.c_str() + value.size() || value.empty()) {
    throw ValidationError("run config: " + key + ": not a number: '" + value + "'");
  }
  return out;
}

}  // namespace detail

inline RunConfig parse_run_config(std::string_view text,
                                  const std::filesystem::path& base_dir) {
  RunConfig cfg;
  cfg.base_dir = base_dir;
  auto resolve = [&](const std::string& value) {
    std::filesystem::path p(value);
    if (p.is_relative()) p = base_dir / p;
    return p.lexically_normal();
  };
  std::set<std::string> seen;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    std::string_view raw = text.substr(pos, nl == std::string_view::npos
                                                ? std::string_view::npos
                                                : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    std::string line = detail::trim(raw);
    if (line.empty() || line[0] == '#') continue;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ValidationError("run config line " + std::to_string(line_no) +
                            ": expected key = value");
    }
    std::string key = detail::trim(line.substr(0, eq));
    std::string value = detail::trim(line.substr(eq + 1));
    if (key.empty()) {
      throw ValidationError("run config line " + std::to_string(line_no) +
                            ": empty key");
    }
    if (value.empty()) {
      throw ValidationError("run config: " + key + ": empty value");
    }
    if (!seen.insert(key).second) {
      throw ValidationError("run config: duplicate key '" + key + "'");
    }
    if (key == "framework") cfg.framework = resolve(value);
    else if (key == "videos") cfg.videos = resolve(value);
    else if (key == "versions") cfg.versions = resolve(value);
    else if (key == "respondents") cfg.respondents = resolve(value);
    else if (key == "label_mappings") cfg.label_mappings = resolve(value);
    else if (key == "ratings") cfg.ratings = resolve(value);
    else if (key == "expert_ratings") cfg.expert_ratings = resolve(value);
    else if (key == "ad_dir") cfg.ad_dir = resolve(value);
    else if (key == "out_dir") cfg.out_dir = resolve(value);
    else if (key == "seed") cfg.seed = detail::parse_number<std::uint64_t>(key, value);
    else if (key == "nodes") cfg.nodes = detail::parse_number<int>(key, value);
    else if (key == "span_sds") cfg.span_sds = detail::parse_number<double>(key, value);
    else if (key == "tolerance") cfg.tolerance = detail::parse_number<double>(key, value);
    else if (key == "max_iter") cfg.max_iter = detail::parse_number<int>(key, value);
    else if (key == "bin_width") cfg.bin_width = detail::parse_number<double>(key, value);
    else if (key == "text_width") cfg.text_width = detail::parse_number<int>(key, value);
    else if (key == "chunk_width") cfg.chunk_width = detail::parse_number<double>(key, value);
    else if (key == "fast" || key == "collapse") {
      bool flag = false;
      if (value == "true") flag = true;
      else if (value != "false") {
        throw ValidationError("run config: " + key + ": expected true or false");
      }
      (key == "fast" ? cfg.fast : cfg.collapse) = flag;
    } else {
      throw ValidationError("run config: unknown key '" + key + "'");
    }
  }
  return cfg;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  return parse_run_config(read_text_file(path),
                          std::filesystem::absolute(path).parent_path());
}

namespace detail {

inline const std::filesystem::path& require_path(
    const std::optional<std::filesystem::path>& p, const char* key) {
  if (!p) throw ValidationError(std::string("run config: missing key '") + key + "'");
  return *p;
}

inline void require_exists(const std::filesystem::path& p, const char* key) {
  if (!std::filesystem::exists(p)) {
    throw ValidationError(std::string(key) + ": no such path: " + p.string());
  }
}

inline std::map<std::string, Respondent> respondent_index(
    const std::vector<Respondent>& respondents) {
  std::map<std::string, Respondent> by_id;
  for (const auto& r : respondents) by_id[r.id] = r;
  return by_id;
}

inline void check_rating_respondents(
    const std::vector<RatingRecord>& records,
    const std::map<std::string, Respondent>& by_id, bool want_experts,
    const char* file_label) {
  for (const auto& rec : records) {
    auto it = by_id.find(rec.respondent_id);
    if (it == by_id.end()) {
      throw ValidationError(std::string(file_label) + ": unknown respondent " +
                            rec.respondent_id);
    }
    bool is_expert = it->second.kind == RespondentKind::Expert;
    if (want_experts && !is_expert) {
      throw ValidationError(std::string(file_label) + ": respondent " +
                            rec.respondent_id + " is not an expert");
    }
    if (!want_experts && is_expert) {
      throw ValidationError(std::string(file_label) + ": respondent " +
                            rec.respondent_id + " is an expert");
    }
  }
}

inline std::filesystem::path out_file(const RunConfig& cfg,
                                      const std::string& name) {
  return require_path(cfg.out_dir, "out_dir") / name;
}

inline std::filesystem::path write_artifact(const RunConfig& cfg,
                                            const std::string& name,
                                            std::string_view content) {
  auto path = out_file(cfg, name);
  write_text_file(path, content);
  return path;
}

}  // namespace detail

// Expert ratings -> consensus ground truth on disk.
inline std::vector<std::filesystem::path> stage_consensus(const RunConfig& cfg) {
  auto by_id = detail::respondent_index(
      load_respondents(detail::require_path(cfg.respondents, "respondents")));
  auto mappings =
      load_label_mappings(detail::require_path(cfg.label_mappings, "label_mappings"));
  auto records =
      load_ratings(detail::require_path(cfg.expert_ratings, "expert_ratings"));
  detail::check_rating_respondents(records, by_id, true, "expert ratings");
  auto gt = build_ground_truth(resolve_labels(records, mappings));
  return {detail::write_artifact(cfg, "ground_truth.csv", save_ground_truth(gt))};
}

// Scored ratings + ground truth -> one partial-credit matrix per dimension.
inline std::vector<std::filesystem::path> stage_recode(const RunConfig& cfg) {
  auto by_id = detail::respondent_index(
      load_respondents(detail::require_path(cfg.respondents, "respondents")));
  auto mappings =
      load_label_mappings(detail::require_path(cfg.label_mappings, "label_mappings"));
  auto records = load_ratings(detail::require_path(cfg.ratings, "ratings"));
  detail::check_rating_respondents(records, by_id, false, "scored ratings");
  auto gt = load_ground_truth(detail::out_file(cfg, "ground_truth.csv"));
  auto matrices = build_matrices(resolve_labels(records, mappings), gt);
  std::vector<std::filesystem::path> written;
  for (DimensionKey k : kDimensionOrder) {
    auto it = matrices.find(k);
    if (it == matrices.end()) {
      throw ValidationError("no scored ratings for dimension " +
                            std::string(to_string(k)));
    }
    written.push_back(detail::write_artifact(
        cfg, "matrix_" + std::string(to_string(k)) + ".csv",
        save_matrix(it->second)));
  }
  return written;
}

inline FitConfig fit_config_from(const RunConfig& cfg) {
  FitConfig fc;
  fc.nodes = cfg.nodes;
  fc.span_sds = cfg.span_sds;
  fc.tolerance = cfg.tolerance;
  fc.max_iter = cfg.max_iter;
  fc.fast = cfg.fast;
  fc.collapse_null_categories = cfg.collapse;
  return fc;
}

// Matrices -> fitted model + EAP abilities per dimension.
inline std::vector<std::filesystem::path> stage_fit(const RunConfig& cfg) {
  FitConfig fc = fit_config_from(cfg);
  std::vector<std::filesystem::path> written;
  for (DimensionKey k : kDimensionOrder) {
    std::string dim(to_string(k));
    auto matrix = load_matrix(detail::out_file(cfg, "matrix_" + dim + ".csv"));
    auto fit = fit_pcm(matrix, fc);
    if (!fit.converged) {
      throw ComputationError("fit did not converge for dimension " + dim);
    }
    written.push_back(
        detail::write_artifact(cfg, "fit_" + dim + ".json", save_fit_json(fit)));
    written.push_back(detail::write_artifact(
        cfg, "abilities_" + dim + ".csv",
        save_abilities(eap_abilities(fit, fit.matrix))));
  }
  return written;
}

// Fits -> person/item fit stats, reliability table, proficiency table.
inline std::vector<std::filesystem::path> stage_diagnose(const RunConfig& cfg) {
  std::vector<std::filesystem::path> written;
  std::map<DimensionKey, ReliabilityReport> reliability;
  std::map<DimensionKey, std::vector<PersonAbility>> abilities;
  for (DimensionKey k : kDimensionOrder) {
    std::string dim(to_string(k));
    auto fit = load_fit_json(detail::out_file(cfg, "fit_" + dim + ".json"));
    auto work = working_matrix(
        load_matrix(detail::out_file(cfg, "matrix_" + dim + ".csv")), cfg.collapse);
    auto eap = eap_abilities(fit, work);
    written.push_back(detail::write_artifact(
        cfg, "fit_stats_" + dim + ".csv",
        save_fit_stats(person_fit(fit, eap, work), "respondent_id")));
    written.push_back(detail::write_artifact(
        cfg, "item_fit_" + dim + ".csv",
        save_fit_stats(item_fit(fit, eap, work), "item_id")));
    abilities[k] = eap;

    ReliabilityReport rel;
    rel.dimension = k;
    rel.latent_variance = fit.latent.variance;
    rel.eap_reliability = eap_reliability(eap);
    rel.total_items = static_cast<int>(work.items.size());
    for (const auto& irc : item_rest_correlation(work)) {
      if (irc.well_fit) rel.well_fit_items++;
    }
    reliability[k] = rel;
  }
  auto dim_report = dimension_report(reliability);
  written.push_back(
      detail::write_artifact(cfg, "dimension_report.csv", dim_report.to_csv()));
  written.push_back(
      detail::write_artifact(cfg, "dimension_report.md", dim_report.to_markdown()));
  auto prof = proficiency_report(abilities);
  written.push_back(
      detail::write_artifact(cfg, "proficiency_report.csv", prof.to_csv()));
  written.push_back(
      detail::write_artifact(cfg, "proficiency_report.md", prof.to_markdown()));
  return written;
}

// Fits + abilities -> plain and source-grouped maps, SVG and text.
inline std::vector<std::filesystem::path> stage_map(const RunConfig& cfg) {
  std::vector<std::filesystem::path> written;
  for (DimensionKey k : kDimensionOrder) {
    std::string dim(to_string(k));
    auto fit = load_fit_json(detail::out_file(cfg, "fit_" + dim + ".json"));
    auto eap = load_abilities(detail::out_file(cfg, "abilities_" + dim + ".csv"));
    std::vector<Thresholds> thresholds;
    for (const auto& item : fit.items) {
      thresholds.push_back(thurstonian_thresholds(item));
    }
    for (bool grouped : {false, true}) {
      WrightMapOptions opt;
      opt.bin_width = cfg.bin_width;
      opt.grouped = grouped;
      auto model = build_map(thresholds, eap, opt);
      std::string stem = "wright_" + dim + (grouped ? "_grouped" : "");
      written.push_back(
          detail::write_artifact(cfg, stem + ".svg", render_svg(model)));
      written.push_back(detail::write_artifact(
          cfg, stem + ".txt", render_text(model, cfg.text_width)));
    }
  }
  return written;
}

struct PipelineResult {
  std::vector<std::filesystem::path> artifacts;
  std::filesystem::path manifest_path;
};

// All stages in order, each reading its inputs from disk; any failure aborts
// with the stage name. The manifest records a content hash per artifact.
inline PipelineResult run_pipeline(const RunConfig& cfg) {
  for (const auto& [p, key] :
       std::initializer_list<std::pair<const std::optional<std::filesystem::path>*,
                                       const char*>>{
           {&cfg.respondents, "respondents"},
           {&cfg.label_mappings, "label_mappings"},
           {&cfg.ratings, "ratings"},
           {&cfg.expert_ratings, "expert_ratings"}}) {
    detail::require_exists(detail::require_path(*p, key), key);
  }
  const auto& out_dir = detail::require_path(cfg.out_dir, "out_dir");
  std::filesystem::create_directories(out_dir);

  PipelineResult result;
  auto stage = [&](const char* name, auto&& fn) {
    try {
      auto files = fn(cfg);
      result.artifacts.insert(result.artifacts.end(), files.begin(), files.end());
    } catch (const std::exception& e) {
      throw ComputationError(std::string("stage ") + name + ": " + e.what());
    }
  };
  stage("consensus", [](const RunConfig& c) { return stage_consensus(c); });
  stage("recode", [](const RunConfig& c) { return stage_recode(c); });
  stage("fit", [](const RunConfig& c) { return stage_fit(c); });
  stage("diagnose", [](const RunConfig& c) { return stage_diagnose(c); });
  stage("map", [](const RunConfig& c) { return stage_map(c); });

  nlohmann::ordered_json manifest;
  manifest["seed"] = cfg.seed;
  manifest["fast"] = cfg.fast;
  std::vector<std::pair<std::string, std::string>> hashed;
  for (const auto& p : result.artifacts) {
    hashed.emplace_back(p.lexically_relative(out_dir).generic_string(),
                        to_hex16(fnv1a64(read_text_file(p))));
  }
  std::sort(hashed.begin(), hashed.end());
  manifest["artifacts"] = nlohmann::ordered_json::array();
  for (const auto& [rel, hash] : hashed) {
    manifest["artifacts"].push_back({{"path", rel}, {"fnv1a64", hash}});
  }
  result.manifest_path = out_dir / "manifest.json";
  write_text_file(result.manifest_path, manifest.dump(2) + "\n");
  return result;
}

// Blinded assignment sheets for the experts and trained humans; model
// respondents rate programmatically and get no sheet.
inline std::vector<std::filesystem::path> run_design(const RunConfig& cfg) {
  auto videos = load_videos(detail::require_path(cfg.videos, "videos"));
  auto per_video = load_versions(detail::require_path(cfg.versions, "versions"));
  auto respondents =
      load_respondents(detail::require_path(cfg.respondents, "respondents"));
  std::filesystem::create_directories(detail::require_path(cfg.out_dir, "out_dir"));

  std::set<std::string> video_ids;
  for (const auto& v : videos) video_ids.insert(v.id);
  for (const auto& [vid, sources] : per_video) {
    if (!video_ids.count(vid)) {
      throw ValidationError("versions: unknown video " + vid);
    }
  }
  auto mappings = make_label_mappings(videos, per_video, cfg.seed);

  std::vector<Respondent> sheet_takers;
  for (const auto& r : respondents) {
    if (r.kind != RespondentKind::Vlm) sheet_takers.push_back(r);
  }
  if (sheet_takers.empty()) {
    throw ValidationError("design: no expert or human respondents");
  }
  auto sheets = make_sheets(sheet_takers, videos, mappings, cfg.seed);

  std::vector<std::filesystem::path> written;
  written.push_back(detail::write_artifact(cfg, "label_mappings.csv",
                                           save_label_mappings(mappings)));
  for (const auto& sheet : sheets) {
    written.push_back(
        detail::write_artifact(cfg, "sheet_" + sheet.respondent_id + ".md",
                               render_sheet(sheet, SheetFormat::Markdown)));
    written.push_back(
        detail::write_artifact(cfg, "sheet_" + sheet.respondent_id + ".csv",
                               render_sheet(sheet, SheetFormat::Csv)));
  }
  return written;
}

}  // namespace adqc
