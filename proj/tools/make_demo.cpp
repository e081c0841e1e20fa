// Regenerates the committed demo study under data/. Deterministic for a given
// seed, so a re-run must reproduce the committed files byte for byte.

#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "adqc/demo.hpp"
#include "adqc/pipeline.hpp"

#include <CLI11.hpp>

namespace fs = std::filesystem;

namespace {

std::string run_conf_text() {
  return
      "# Demo study run configuration. Paths are relative to this file.\n"
      "framework = ../framework.json\n"
      "videos = videos.csv\n"
      "versions = versions.csv\n"
      "respondents = respondents.csv\n"
      "label_mappings = label_mappings.csv\n"
      "expert_ratings = expert_ratings.csv\n"
      "ratings = ratings.csv\n"
      "ad_dir = ad\n"
      "out_dir = out\n"
      "seed = 42\n"
      "nodes = 61\n"
      "span_sds = 5\n"
      "tolerance = 0.0001\n"
      "max_iter = 1000\n"
      "fast = false\n"
      "# 12-person matrices leave some credit levels unobserved.\n"
      "collapse = true\n"
      "bin_width = 0.25\n"
      "text_width = 100\n"
      "chunk_width = 30\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Regenerate the demo study under data/"};
  std::string root = ".";
  std::uint64_t seed = 42;
  app.add_option("--root", root, "Repository root to write data/ under");
  app.add_option("--seed", seed, "Study seed");
  try {
    app.parse(argc, argv);

    adqc::DemoStudy study = adqc::make_demo_study(seed);

    fs::path data = fs::path(root) / "data";
    fs::path demo = data / "demo";
    adqc::write_text_file(data / "framework.json",
                          adqc::framework_to_json(study.framework));
    adqc::write_text_file(demo / "videos.csv", adqc::save_videos(study.videos));

    std::map<std::string, std::vector<std::string>> per_video;
    for (const auto& [video, source] : study.versions) {
      per_video[video].push_back(source);
    }
    adqc::write_text_file(demo / "versions.csv", adqc::save_versions(per_video));
    adqc::write_text_file(demo / "respondents.csv",
                          adqc::save_respondents(study.respondents));
    adqc::write_text_file(demo / "label_mappings.csv",
                          adqc::save_label_mappings(study.mappings));
    adqc::write_text_file(demo / "expert_ratings.csv",
                          adqc::save_ratings(study.expert_records));
    adqc::write_text_file(demo / "ratings.csv",
                          adqc::save_ratings(study.rating_records));

    for (const auto& [key, ad] : study.ads) {
      adqc::write_text_file(
          demo / "ad" / (ad.video_id + "_" + ad.source + ".json"),
          adqc::segments_to_json(ad.segments) + "\n");
    }

    auto canned = adqc::make_canned_responses(study);
    for (const auto& file : canned) {
      adqc::write_text_file(demo / "canned" / file.name, file.payload);
    }

    adqc::write_text_file(demo / "run.conf", run_conf_text());

    std::cout << "salt " << study.salt << ", " << study.ads.size()
              << " AD tracks, " << study.expert_records.size()
              << " expert ratings, " << study.rating_records.size()
              << " scored ratings, " << canned.size()
              << " canned responses\n";
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
  return 0;
}
