// Command-line front end: study design, consensus scoring, model fitting,
// diagnostics, maps, simulation, and prompt plumbing, driven by a run config
// file with flag overrides. Exit codes: 0 ok, 2 bad input, 3 computation or
// pipeline failure.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "adqc/pipeline.hpp"
#include "adqc/simulate.hpp"
#include "adqc/vlm.hpp"

#include <CLI11.hpp>

namespace {

namespace fs = std::filesystem;

struct ConfigFlags {
  std::string config_path;
  std::optional<std::string> out_dir;
  std::optional<std::uint64_t> seed;
  bool fast = false;
  bool deterministic = false;
};

void add_config_flags(CLI::App* cmd, ConfigFlags& flags, bool with_mode) {
  cmd->add_option("--config", flags.config_path, "Run config file")
      ->required();
  cmd->add_option("--out", flags.out_dir, "Override out_dir");
  cmd->add_option("--seed", flags.seed, "Override seed");
  if (with_mode) {
    auto* fast = cmd->add_flag("--fast", flags.fast, "Threaded E-step");
    cmd->add_flag("--deterministic", flags.deterministic,
                  "Single-threaded E-step (default)")
        ->excludes(fast);
  }
}

adqc::RunConfig load_config(const ConfigFlags& flags) {
  adqc::RunConfig cfg = adqc::load_run_config(flags.config_path);
  if (flags.out_dir) {
    cfg.out_dir = fs::path(*flags.out_dir).lexically_normal();
  }
  if (flags.seed) cfg.seed = *flags.seed;
  if (flags.fast) cfg.fast = true;
  if (flags.deterministic) cfg.fast = false;
  return cfg;
}

void report_written(const std::vector<fs::path>& files) {
  for (const auto& p : files) std::cout << "wrote " << p.string() << "\n";
}

int run(int argc, char** argv) {
  CLI::App app{"Audio description quality toolkit"};
  app.require_subcommand(1);
  int exit_code = 0;

  ConfigFlags design_flags;
  auto* design = app.add_subcommand(
      "design", "Blinded label mappings and rating sheets");
  add_config_flags(design, design_flags, false);
  design->callback([&] { report_written(adqc::run_design(load_config(design_flags))); });

  ConfigFlags consensus_flags;
  auto* consensus = app.add_subcommand(
      "consensus", "Expert ratings to ground-truth consensus");
  add_config_flags(consensus, consensus_flags, false);
  consensus->callback([&] {
    auto cfg = load_config(consensus_flags);
    fs::create_directories(adqc::detail::require_path(cfg.out_dir, "out_dir"));
    report_written(adqc::stage_consensus(cfg));
  });

  ConfigFlags recode_flags;
  auto* recode = app.add_subcommand(
      "recode", "Scored ratings to partial-credit matrices");
  add_config_flags(recode, recode_flags, false);
  recode->callback([&] {
    auto cfg = load_config(recode_flags);
    fs::create_directories(adqc::detail::require_path(cfg.out_dir, "out_dir"));
    report_written(adqc::stage_recode(cfg));
  });

  ConfigFlags fit_flags;
  auto* fit = app.add_subcommand("fit", "Fit the partial credit model");
  add_config_flags(fit, fit_flags, true);
  fit->callback([&] {
    auto cfg = load_config(fit_flags);
    fs::create_directories(adqc::detail::require_path(cfg.out_dir, "out_dir"));
    report_written(adqc::stage_fit(cfg));
  });

  ConfigFlags diagnose_flags;
  auto* diagnose = app.add_subcommand(
      "diagnose", "Fit statistics, reliability, and report tables");
  add_config_flags(diagnose, diagnose_flags, false);
  diagnose->callback([&] {
    auto cfg = load_config(diagnose_flags);
    fs::create_directories(adqc::detail::require_path(cfg.out_dir, "out_dir"));
    report_written(adqc::stage_diagnose(cfg));
  });

  ConfigFlags map_flags;
  std::optional<double> map_bin_width;
  std::optional<int> map_text_width;
  auto* map = app.add_subcommand("map", "Item-respondent maps, SVG and text");
  add_config_flags(map, map_flags, false);
  map->add_option("--bin-width", map_bin_width, "Histogram bin width, logits");
  map->add_option("--text-width", map_text_width, "Text map width, columns");
  map->callback([&] {
    auto cfg = load_config(map_flags);
    if (map_bin_width) cfg.bin_width = *map_bin_width;
    if (map_text_width) cfg.text_width = *map_text_width;
    fs::create_directories(adqc::detail::require_path(cfg.out_dir, "out_dir"));
    report_written(adqc::stage_map(cfg));
  });

  ConfigFlags pipeline_flags;
  auto* pipeline = app.add_subcommand(
      "pipeline", "All stages: consensus, recode, fit, diagnose, map");
  add_config_flags(pipeline, pipeline_flags, true);
  pipeline->callback([&] {
    auto result = adqc::run_pipeline(load_config(pipeline_flags));
    report_written(result.artifacts);
    std::cout << "wrote " << result.manifest_path.string() << "\n";
  });

  std::size_t sim_persons = 500, sim_items = 40;
  std::uint64_t sim_seed = 7;
  double sim_variance = 1.0;
  std::string sim_out, sim_truth;
  auto* simulate = app.add_subcommand(
      "simulate", "Simulate a response matrix with known parameters");
  simulate->add_option("--persons", sim_persons, "Person count");
  simulate->add_option("--items", sim_items, "Item count");
  simulate->add_option("--seed", sim_seed, "Seed");
  simulate->add_option("--theta-variance", sim_variance, "Latent variance");
  simulate->add_option("--out", sim_out, "Matrix CSV path")->required();
  simulate->add_option("--truth", sim_truth, "True parameter JSON path");
  simulate->callback([&] {
    adqc::SimConfig config;
    config.n_persons = sim_persons;
    config.theta_variance = sim_variance;
    config.seed = sim_seed;
    auto irng = adqc::stream(sim_seed, {"sim-items"});
    config.items = adqc::random_item_params(sim_items, irng);
    auto data = adqc::simulate_responses(config);
    adqc::write_text_file(sim_out, adqc::save_matrix(data.matrix));
    std::cout << "wrote " << sim_out << "\n";
    if (!sim_truth.empty()) {
      nlohmann::ordered_json truth;
      truth["seed"] = sim_seed;
      truth["items"] = nlohmann::ordered_json::array();
      for (const auto& item : config.items) {
        truth["items"].push_back(
            {{"id", item.item.id()}, {"deltas", item.deltas}});
      }
      truth["thetas"] = data.thetas;
      adqc::write_text_file(sim_truth, truth.dump(2) + "\n");
      std::cout << "wrote " << sim_truth << "\n";
    }
  });

  std::size_t rec_persons = 500, rec_items = 40, rec_reps = 1;
  std::uint64_t rec_seed = 7;
  std::string rec_out;
  auto* recover = app.add_subcommand(
      "recover", "Simulate, refit, and report parameter recovery");
  recover->add_option("--persons", rec_persons, "Person count");
  recover->add_option("--items", rec_items, "Item count");
  recover->add_option("--replications", rec_reps, "Replication count");
  recover->add_option("--seed", rec_seed, "Seed");
  recover->add_option("--out", rec_out, "Output directory")->required();
  recover->callback([&] {
    adqc::SimConfig config;
    config.n_persons = rec_persons;
    config.seed = rec_seed;
    auto irng = adqc::stream(rec_seed, {"sim-items"});
    config.items = adqc::random_item_params(rec_items, irng);
    auto report = adqc::recovery_experiment(config, rec_reps);
    adqc::write_text_file(fs::path(rec_out) / "recovery_report.md",
                          report.to_markdown());
    adqc::write_text_file(fs::path(rec_out) / "recovery_report.json",
                          report.to_json().dump(2) + "\n");
    std::cout << "delta correlation " << adqc::fixed(report.delta_correlation, 5)
              << ", theta correlation " << adqc::fixed(report.theta_correlation, 5)
              << "\n";
    std::cout << "wrote " << (fs::path(rec_out) / "recovery_report.md").string()
              << "\n";
  });

  std::string prompt_ad, prompt_framework, prompt_out;
  int prompt_role = 1;
  std::optional<int> prompt_chunk;
  double prompt_duration = 0, prompt_width = 30.0;
  auto* prompt = app.add_subcommand(
      "prompt", "Assemble the model evaluation prompt for one AD track");
  prompt->add_option("--ad", prompt_ad, "AD segments JSON")->required();
  prompt->add_option("--role", prompt_role, "System prompt version (1 or 2)");
  prompt->add_option("--chunk-index", prompt_chunk, "Window index, 0-based");
  prompt->add_option("--duration", prompt_duration,
                     "Video duration in seconds (required with --chunk-index)");
  prompt->add_option("--chunk-width", prompt_width, "Window width in seconds");
  prompt->add_option("--framework", prompt_framework, "Framework JSON path");
  prompt->add_option("--out", prompt_out, "Write prompt here instead of stdout");
  prompt->callback([&] {
    auto framework = prompt_framework.empty()
                         ? adqc::default_framework()
                         : adqc::load_framework(prompt_framework);
    auto ad = adqc::load_ad_version(prompt_ad);
    std::optional<adqc::ChunkWindow> window;
    if (prompt_chunk) {
      auto windows = adqc::chunk_windows(prompt_duration, prompt_width);
      if (*prompt_chunk < 0 ||
          static_cast<std::size_t>(*prompt_chunk) >= windows.size()) {
        throw adqc::ValidationError(
            "chunk index out of range; video has " +
            std::to_string(windows.size()) + " windows");
      }
      window = windows[static_cast<std::size_t>(*prompt_chunk)];
    }
    auto pkg = adqc::build_prompt(framework, ad.segments, prompt_role, window);
    if (pkg.empty_segments) {
      std::cerr << "note: no segments overlap the requested window\n";
    }
    if (prompt_out.empty()) {
      std::cout << pkg.full_text();
    } else {
      adqc::write_text_file(prompt_out, pkg.full_text());
      std::cout << "wrote " << prompt_out << "\n";
    }
  });

  std::string parse_file, parse_respondent, parse_video, parse_label, parse_out;
  auto* parse = app.add_subcommand(
      "parse", "Parse a model response payload into rating rows");
  parse->add_option("--response", parse_file, "Payload file")->required();
  parse->add_option("--respondent", parse_respondent, "Respondent id")->required();
  parse->add_option("--video", parse_video, "Video id")->required();
  parse->add_option("--label", parse_label, "Version label")->required();
  parse->add_option("--out", parse_out, "Write CSV here instead of stdout");
  parse->callback([&] {
    auto response = adqc::parse_response(adqc::read_text_file(parse_file));
    std::vector<adqc::RatingRecord> records;
    for (adqc::DimensionKey k : adqc::kDimensionOrder) {
      adqc::RatingRecord rec;
      rec.respondent_id = parse_respondent;
      rec.video_id = parse_video;
      rec.version_label = parse_label;
      rec.dimension = k;
      rec.rating = response.ratings.at(k);
      rec.comment = response.justifications.at(k);
      records.push_back(std::move(rec));
    }
    auto csv = adqc::save_ratings(records);
    if (parse_out.empty()) {
      std::cout << csv;
    } else {
      adqc::write_text_file(parse_out, csv);
      std::cout << "wrote " << parse_out << "\n";
    }
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const adqc::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return exit_code;
}

}  // namespace

int main(int argc, char** argv) { return run(argc, argv); }
