#include "adqc/framework.hpp"

#include "test_support.hpp"

using adqc::AssessmentFramework;
using adqc::default_framework;
using adqc::DimensionKey;
using adqc::parse_framework;
using nlohmann::json;

TEST_CASE("dimension keys round-trip through their names") {
  for (DimensionKey k : adqc::kDimensionOrder) {
    CHECK(adqc::parse_dimension_key(adqc::to_string(k)) == k);
  }
  CHECK_THROWS_AS(adqc::parse_dimension_key("speed"), adqc::ValidationError);
  CHECK(!adqc::dimension_key_from("Accurate"));  // names are lowercase
}

TEST_CASE("bundled framework has seven dimensions with full level ladders") {
  const AssessmentFramework& fw = default_framework();
  REQUIRE(fw.dimensions.size() == 7);
  for (std::size_t i = 0; i < fw.dimensions.size(); ++i) {
    const auto& d = fw.dimensions[i];
    CHECK(d.key == adqc::kDimensionOrder[i]);
    CHECK(!d.name.empty());
    CHECK(!d.definition.empty());
    REQUIRE(d.levels.size() == 5);
    for (int lvl = 1; lvl <= 5; ++lvl) {
      REQUIRE(d.levels.count(lvl));
      CHECK(!d.levels.at(lvl).empty());
    }
  }
  // The two formatting dimensions close the order.
  CHECK(fw.dimensions[5].key == DimensionKey::Strategy);
  CHECK(fw.dimensions[6].key == DimensionKey::Timing);
}

TEST_CASE("json serialization round-trips the bundled framework") {
  const AssessmentFramework& fw = default_framework();
  auto text = adqc::framework_to_json(fw);
  AssessmentFramework back = parse_framework(json::parse(text));
  CHECK(back == fw);
}

TEST_CASE("committed framework file equals the bundled framework") {
  auto path = testsup::repo_dir() / "data" / "framework.json";
  if (std::getenv("ADQC_UPDATE_GOLDENS") && !std::filesystem::exists(path)) {
    SUCCEED("framework file not generated yet");
    return;
  }
  REQUIRE(std::filesystem::exists(path));
  CHECK(adqc::load_framework(path) == default_framework());
}

TEST_CASE("parser accepts dimensions in any order but demands all seven") {
  auto base = json::parse(adqc::framework_to_json(default_framework()));

  SECTION("reversed input order is normalized") {
    json reversed = base;
    std::reverse(reversed["dimensions"].begin(), reversed["dimensions"].end());
    CHECK(parse_framework(reversed) == default_framework());
  }

  SECTION("a missing dimension names itself") {
    json j = base;
    j["dimensions"].erase(2);  // appropriate
    CHECK_THROWS_WITH(parse_framework(j),
                      Catch::Matchers::ContainsSubstring("appropriate"));
  }

  SECTION("duplicates are rejected") {
    json j = base;
    j["dimensions"].push_back(j["dimensions"][0]);
    CHECK_THROWS_WITH(parse_framework(j),
                      Catch::Matchers::ContainsSubstring("duplicate"));
  }
}

TEST_CASE("parser names the missing piece") {
  auto base = json::parse(adqc::framework_to_json(default_framework()));

  SECTION("non-object root") {
    CHECK_THROWS_AS(parse_framework(json::array()), adqc::ValidationError);
  }
  SECTION("missing version") {
    json j = base;
    j.erase("version");
    CHECK_THROWS_WITH(parse_framework(j),
                      Catch::Matchers::ContainsSubstring("version"));
  }
  SECTION("bad dimension key") {
    json j = base;
    j["dimensions"][0]["key"] = "speed";
    CHECK_THROWS_WITH(parse_framework(j),
                      Catch::Matchers::ContainsSubstring("speed"));
  }
  SECTION("missing level") {
    json j = base;
    j["dimensions"][0]["levels"].erase("3");
    CHECK_THROWS_WITH(parse_framework(j),
                      Catch::Matchers::ContainsSubstring("level 3"));
  }
  SECTION("out-of-range level") {
    json j = base;
    j["dimensions"][0]["levels"]["6"] = "too good";
    CHECK_THROWS_AS(parse_framework(j), adqc::ValidationError);
  }
  SECTION("non-string level text") {
    json j = base;
    j["dimensions"][0]["levels"]["2"] = 7;
    CHECK_THROWS_AS(parse_framework(j), adqc::ValidationError);
  }
}

TEST_CASE("dimension lookup by key") {
  const auto& fw = default_framework();
  CHECK(fw.dimension(DimensionKey::Equal).name == "Equal");
  AssessmentFramework partial;
  partial.version = "x";
  CHECK_THROWS_AS(partial.dimension(DimensionKey::Equal), adqc::ValidationError);
}
