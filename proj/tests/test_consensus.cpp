#include <algorithm>
#include <map>
#include <optional>
#include <vector>

#include "adqc/consensus.hpp"

#include "test_support.hpp"

using namespace adqc;
using Catch::Matchers::ContainsSubstring;

namespace {

// Reference consensus, written independently of the production rule: count
// occurrences, find modal values, apply majority / ambiguity / median.
std::optional<ConsensusResult> reference_consensus(const std::vector<int>& r) {
  std::map<int, int> counts;
  for (int v : r) counts[v]++;
  int best = 0;
  for (auto& [v, c] : counts) best = std::max(best, c);
  std::vector<int> modal;
  for (auto& [v, c] : counts) {
    if (c == best) modal.push_back(v);
  }
  if (best >= 2 && modal.size() == 1) {
    return ConsensusResult{modal[0], ConsensusRule::Majority};
  }
  if (best >= 2 && modal.size() > 1 && r.size() > 3) return std::nullopt;
  std::vector<int> sorted = r;
  std::sort(sorted.begin(), sorted.end());
  return ConsensusResult{sorted[(sorted.size() - 1) / 2], ConsensusRule::Median};
}

}  // namespace

TEST_CASE("consensus over every expert triple") {
  // All 125 ordered triples of ratings 1..5.
  for (int a = 1; a <= 5; ++a) {
    for (int b = 1; b <= 5; ++b) {
      for (int c = 1; c <= 5; ++c) {
        auto expected = reference_consensus({a, b, c});
        REQUIRE(expected.has_value());  // triples are never ambiguous
        auto got = consensus({a, b, c});
        INFO("panel (" << a << "," << b << "," << c << ")");
        CHECK(got == *expected);
      }
    }
  }
}

TEST_CASE("consensus point cases") {
  CHECK(consensus({4, 4, 2}) == ConsensusResult{4, ConsensusRule::Majority});
  CHECK(consensus({1, 3, 5}) == ConsensusResult{3, ConsensusRule::Median});
  // Even panel, no majority: lower middle.
  CHECK(consensus({1, 2, 4, 5}) == ConsensusResult{2, ConsensusRule::Median});
  // Pairs agree or fall to the lower value.
  CHECK(consensus({5, 5}) == ConsensusResult{5, ConsensusRule::Majority});
  CHECK(consensus({2, 3}) == ConsensusResult{2, ConsensusRule::Median});
}

TEST_CASE("consensus over every panel up to size four") {
  std::vector<std::vector<int>> panels;
  for (int a = 1; a <= 5; ++a) {
    for (int b = 1; b <= 5; ++b) {
      panels.push_back({a, b});
      for (int c = 1; c <= 5; ++c) {
        for (int d = 1; d <= 5; ++d) panels.push_back({a, b, c, d});
      }
    }
  }
  for (const auto& p : panels) {
    auto expected = reference_consensus(p);
    if (!expected) {
      CHECK_THROWS_WITH(consensus(p), ContainsSubstring("tied modal"));
    } else {
      CHECK(consensus(p) == *expected);
    }
  }
}

TEST_CASE("consensus input validation") {
  CHECK_THROWS_WITH(consensus({}), ContainsSubstring("at least 2"));
  CHECK_THROWS_WITH(consensus({3}), ContainsSubstring("at least 2"));
  CHECK_THROWS_AS(consensus({3, 6}), ValidationError);
  CHECK_THROWS_AS(consensus({0, 3}), ValidationError);
  // 2-2 tie on a panel of 4 is ambiguous.
  CHECK_THROWS_WITH(consensus({2, 2, 4, 4}), ContainsSubstring("2 and 4"));
}

TEST_CASE("recode covers all 25 rating pairs") {
  for (int raw = 1; raw <= 5; ++raw) {
    for (int gt = 1; gt <= 5; ++gt) {
      int d = std::abs(raw - gt);
      int expected = d == 0 ? 2 : d == 1 ? 1 : 0;
      CHECK(recode(raw, gt) == expected);
    }
  }
  CHECK_THROWS_AS(recode(0, 3), ValidationError);
  CHECK_THROWS_AS(recode(3, 6), ValidationError);
}

TEST_CASE("label resolution rewrites labels and passes sources through") {
  LabelMapping m{"v01", {{"A", "gpt"}, {"B", "human"}}};
  std::vector<RatingRecord> records = {
      {"E1", "v01", "A", DimensionKey::Accurate, 4, std::nullopt},
      {"E1", "v01", "human", DimensionKey::Accurate, 3, std::nullopt},
  };
  auto resolved = resolve_labels(records, {m});
  CHECK(resolved[0].version_label == "gpt");
  CHECK(resolved[1].version_label == "human");

  records[0].video_id = "v99";
  CHECK_THROWS_WITH(resolve_labels(records, {m}),
                    ContainsSubstring("no label mapping"));
  records[0].video_id = "v01";
  records[0].version_label = "Z";
  CHECK_THROWS_WITH(resolve_labels(records, {m}),
                    ContainsSubstring("matches no label or source"));
}

TEST_CASE("ground truth from an expert panel") {
  std::vector<RatingRecord> experts;
  for (const char* e : {"E1", "E2", "E3"}) {
    experts.push_back({e, "v01", "human", DimensionKey::Accurate, 4, std::nullopt});
  }
  experts[2].rating = 2;
  auto gt = build_ground_truth(experts);
  Item item{"v01", "human", DimensionKey::Accurate};
  CHECK(gt.at(item) == GroundTruthEntry{4, ConsensusRule::Majority});

  CHECK_THROWS_WITH(gt.at(Item{"v02", "human", DimensionKey::Accurate}),
                    ContainsSubstring("no ground truth"));

  // Lone rating on an item: the per-item panel is too small.
  std::vector<RatingRecord> lone = {
      {"E1", "v01", "human", DimensionKey::Accurate, 4, std::nullopt}};
  CHECK_THROWS_WITH(build_ground_truth(lone),
                    ContainsSubstring("v01:human:accurate"));
}

TEST_CASE("ground truth CSV round-trips") {
  GroundTruth gt;
  gt.entries[{"v01", "human", DimensionKey::Accurate}] = {4, ConsensusRule::Majority};
  gt.entries[{"v01", "gpt", DimensionKey::Timing}] = {2, ConsensusRule::Median};
  CHECK(parse_ground_truth(save_ground_truth(gt)) == gt);

  const std::string header(kGroundTruthHeader);
  CHECK_THROWS_WITH(
      parse_ground_truth(header + "\nv01,human,accurate,4,majority\n"
                                  "v01,human,accurate,3,median\n"),
      ContainsSubstring("duplicate item"));
  CHECK_THROWS_AS(parse_ground_truth(header + "\nv01,human,accurate,4,plurality\n"),
                  ValidationError);
}

TEST_CASE("matrices split by dimension with recoded cells") {
  GroundTruth gt;
  gt.entries[{"v01", "human", DimensionKey::Accurate}] = {4, ConsensusRule::Majority};
  gt.entries[{"v01", "gpt", DimensionKey::Accurate}] = {3, ConsensusRule::Majority};
  gt.entries[{"v01", "human", DimensionKey::Timing}] = {5, ConsensusRule::Majority};

  std::vector<RatingRecord> records = {
      {"H1", "v01", "human", DimensionKey::Accurate, 4, std::nullopt},  // d0 -> 2
      {"H1", "v01", "gpt", DimensionKey::Accurate, 5, std::nullopt},    // d2 -> 0
      {"H2", "v01", "human", DimensionKey::Accurate, 3, std::nullopt},  // d1 -> 1
      {"H1", "v01", "human", DimensionKey::Timing, 1, std::nullopt},    // d4 -> 0
  };
  auto matrices = build_matrices(records, gt);
  REQUIRE(matrices.size() == 2);
  const auto& acc = matrices.at(DimensionKey::Accurate);
  REQUIRE(acc.persons == std::vector<std::string>{"H1", "H2"});
  REQUIRE(acc.items.size() == 2);
  // Items sorted by id: v01:gpt before v01:human.
  CHECK(acc.items[0].source == "gpt");
  CHECK(acc.cell(0, 1) == 2);
  CHECK(acc.cell(0, 0) == 0);
  CHECK(acc.cell(1, 1) == 1);
  CHECK(!acc.cell(1, 0).has_value());  // H2 never rated gpt
  CHECK(matrices.at(DimensionKey::Timing).cell(0, 0) == 0);

  auto dup = records;
  dup.push_back(records[0]);
  CHECK_THROWS_WITH(build_matrices(dup, gt), ContainsSubstring("duplicate rating"));

  std::vector<RatingRecord> unknown = {
      {"H1", "v02", "human", DimensionKey::Accurate, 4, std::nullopt}};
  CHECK_THROWS_WITH(build_matrices(unknown, gt), ContainsSubstring("no ground truth"));
}

TEST_CASE("matrix CSV round-trips with missing cells") {
  ResponseMatrix m;
  m.dimension = DimensionKey::Accurate;
  m.persons = {"H1", "H2"};
  m.items = {{"v01", "gpt", DimensionKey::Accurate},
             {"v01", "human", DimensionKey::Accurate}};
  m.cells = {2, 1, std::nullopt, 0};
  CHECK(parse_matrix(save_matrix(m)) == m);

  CHECK_THROWS_WITH(parse_matrix("x,y\n"), ContainsSubstring("respondent_id"));
  CHECK_THROWS_WITH(
      parse_matrix("respondent_id,v01:human:accurate,v01:gpt:accurate\nH1,1,2\n"),
      ContainsSubstring("sorted"));
  CHECK_THROWS_WITH(
      parse_matrix("respondent_id,v01:gpt:accurate,v01:human:timing\nH1,1,2\n"),
      ContainsSubstring("mixed dimensions"));
  CHECK_THROWS_WITH(parse_matrix("respondent_id,v01:gpt:accurate\nH1,7\n"),
                    ContainsSubstring("out of range"));
  CHECK_THROWS_WITH(parse_matrix("respondent_id,v01:gpt:accurate\nH1,1\nH1,2\n"),
                    ContainsSubstring("duplicate respondent"));
}
