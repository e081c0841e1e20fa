#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "adqc/csv.hpp"
#include "adqc/design.hpp"
#include "adqc/study.hpp"
#include "adqc/util.hpp"

namespace adqc {

enum class ConsensusRule { Majority, Median };

inline constexpr std::string_view to_string(ConsensusRule r) {
  return r == ConsensusRule::Majority ? "majority" : "median";
}

inline ConsensusRule parse_consensus_rule(std::string_view s) {
  if (s == "majority") return ConsensusRule::Majority;
  if (s == "median") return ConsensusRule::Median;
  throw ValidationError("unknown consensus rule: " + std::string(s));
}

struct ConsensusResult {
  int rating = 0;
  ConsensusRule rule = ConsensusRule::Majority;

  bool operator==(const ConsensusResult&) const = default;
};

// Majority-then-median panel consensus. A unique modal rating held by at
// least two raters wins; otherwise the median decides, taking the lower of
// the two middle values on even panels. Two distinct ratings sharing the
// modal count on panels larger than three is ambiguous and rejected.
inline ConsensusResult consensus(const std::vector<int>& ratings) {
  if (ratings.size() < 2) {
    throw ValidationError("consensus: need at least 2 ratings, got " +
                          std::to_string(ratings.size()));
  }
  std::map<int, int> counts;
  for (int r : ratings) {
    if (r < kMinRating || r > kMaxRating) {
      throw ValidationError("consensus: rating out of range: " + std::to_string(r));
    }
    counts[r]++;
  }
  int best_count = 0;
  for (const auto& [value, count] : counts) best_count = std::max(best_count, count);
  if (best_count >= 2) {
    std::vector<int> modal;
    for (const auto& [value, count] : counts) {
      if (count == best_count) modal.push_back(value);
    }
    if (modal.size() == 1) {
      return {modal[0], ConsensusRule::Majority};
    }
    if (ratings.size() > 3) {
      std::string vals;
      for (std::size_t i = 0; i < modal.size(); ++i) {
        if (i) vals += " and ";
        vals += std::to_string(modal[i]);
      }
      throw ValidationError("consensus: tied modal ratings " + vals);
    }
    // A 2-2 split cannot occur on panels of 2 or 3; fall through to median.
  }
  std::vector<int> sorted = ratings;
  std::sort(sorted.begin(), sorted.end());
  int median = sorted[(sorted.size() - 1) / 2];  // lower middle on even panels
  return {median, ConsensusRule::Median};
}

// Partial credit against ground truth: exact match 2, off by one 1, else 0.
inline int recode(int raw, int ground_truth) {
  for (int v : {raw, ground_truth}) {
    if (v < kMinRating || v > kMaxRating) {
      throw ValidationError("recode: rating out of range: " + std::to_string(v));
    }
  }
  int d = raw > ground_truth ? raw - ground_truth : ground_truth - raw;
  if (d == 0) return 2;
  if (d == 1) return 1;
  return 0;
}

inline constexpr int kMaxCredit = 2;

struct GroundTruthEntry {
  int rating = 0;
  ConsensusRule rule = ConsensusRule::Majority;

  bool operator==(const GroundTruthEntry&) const = default;
};

struct GroundTruth {
  std::map<Item, GroundTruthEntry> entries;

  const GroundTruthEntry& at(const Item& item) const {
    auto it = entries.find(item);
    if (it == entries.end()) {
      throw ValidationError("no ground truth for item " + item.id());
    }
    return it->second;
  }

  bool operator==(const GroundTruth&) const = default;
};

// Rewrites version labels to sources using the per-video mappings. A
// version_label already naming a mapped source passes through, so resolved
// files can be fed back in.
inline std::vector<RatingRecord> resolve_labels(
    std::vector<RatingRecord> records, const std::vector<LabelMapping>& maps) {
  std::map<std::string, const LabelMapping*> by_video;
  for (const auto& m : maps) by_video[m.video_id] = &m;
  for (auto& r : records) {
    auto it = by_video.find(r.video_id);
    if (it == by_video.end()) {
      throw ValidationError("no label mapping for video " + r.video_id);
    }
    const LabelMapping& m = *it->second;
    bool is_label = false;
    for (const auto& [label, source] : m.label_to_source) {
      if (label == r.version_label) {
        r.version_label = source;
        is_label = true;
        break;
      }
    }
    if (!is_label && !m.has_source(r.version_label)) {
      throw ValidationError("video " + r.video_id + ": version label '" +
                            r.version_label + "' matches no label or source");
    }
  }
  return records;
}

// Builds per-item consensus from expert ratings. Records must already be
// label-resolved (version_label == source).
inline GroundTruth build_ground_truth(const std::vector<RatingRecord>& expert_records) {
  if (expert_records.empty()) {
    throw ValidationError("build_ground_truth: no expert ratings");
  }
  std::map<Item, std::vector<int>> panel;
  for (const auto& r : expert_records) {
    panel[Item{r.video_id, r.version_label, r.dimension}].push_back(r.rating);
  }
  GroundTruth gt;
  for (const auto& [item, ratings] : panel) {
    try {
      ConsensusResult c = consensus(ratings);
      gt.entries[item] = {c.rating, c.rule};
    } catch (const ValidationError& e) {
      throw ValidationError("item " + item.id() + ": " + e.what());
    }
  }
  return gt;
}

inline constexpr std::string_view kGroundTruthHeader =
    "video_id,source,dimension,rating,rule";

inline std::string save_ground_truth(const GroundTruth& gt) {
  std::string out = std::string(kGroundTruthHeader) + "\n";
  for (const auto& [item, entry] : gt.entries) {
    out += csv_row({item.video_id, item.source,
                    std::string(to_string(item.dimension)),
                    std::to_string(entry.rating),
                    std::string(to_string(entry.rule))});
  }
  return out;
}

inline GroundTruth parse_ground_truth(std::string_view text) {
  auto rows = parse_csv(text);
  if (rows.empty()) throw ValidationError("ground truth CSV: empty file");
  detail::check_header(rows[0], kGroundTruthHeader, "ground truth CSV");
  GroundTruth gt;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() != 5) {
      throw ValidationError("row " + std::to_string(r) + ": expected 5 fields");
    }
    Item item{row[0], row[1], parse_dimension_key(row[2])};
    GroundTruthEntry entry;
    entry.rating = detail::parse_rating_field(row[3], r);
    entry.rule = parse_consensus_rule(row[4]);
    if (!gt.entries.emplace(item, entry).second) {
      throw ValidationError("row " + std::to_string(r) + ": duplicate item " + item.id());
    }
  }
  return gt;
}

inline GroundTruth load_ground_truth(const std::filesystem::path& p) {
  try {
    return parse_ground_truth(read_text_file(p));
  } catch (const ValidationError& e) {
    throw ValidationError(p.string() + ": " + e.what());
  }
}

// Person x item credit matrix for one dimension. Cells are partial credits
// 0..max_credit; missing cells stay unset.
struct ResponseMatrix {
  DimensionKey dimension = DimensionKey::Accurate;
  int max_credit = kMaxCredit;
  std::vector<std::string> persons;
  std::vector<Item> items;
  std::vector<std::optional<int>> cells;  // row-major persons x items

  std::optional<int>& cell(std::size_t p, std::size_t i) {
    return cells[p * items.size() + i];
  }
  const std::optional<int>& cell(std::size_t p, std::size_t i) const {
    return cells[p * items.size() + i];
  }

  std::size_t observed_count(std::size_t p) const {
    std::size_t n = 0;
    for (std::size_t i = 0; i < items.size(); ++i) {
      if (cell(p, i)) ++n;
    }
    return n;
  }

  bool operator==(const ResponseMatrix&) const = default;
};

// Recode label-resolved ratings against ground truth and split them into one
// matrix per dimension. Persons keep first-appearance order; items are sorted
// by id.
inline std::map<DimensionKey, ResponseMatrix> build_matrices(
    const std::vector<RatingRecord>& records, const GroundTruth& gt) {
  if (records.empty()) throw ValidationError("build_matrices: no ratings");
  std::vector<std::string> persons;
  std::map<std::string, std::size_t> person_index;
  for (const auto& r : records) {
    if (person_index.emplace(r.respondent_id, persons.size()).second) {
      persons.push_back(r.respondent_id);
    }
  }
  std::map<DimensionKey, std::set<Item>> item_sets;
  for (const auto& r : records) {
    item_sets[r.dimension].insert(Item{r.video_id, r.version_label, r.dimension});
  }
  std::map<DimensionKey, ResponseMatrix> out;
  for (const auto& [dim, items] : item_sets) {
    ResponseMatrix m;
    m.dimension = dim;
    m.persons = persons;
    m.items.assign(items.begin(), items.end());
    m.cells.assign(persons.size() * m.items.size(), std::nullopt);
    out.emplace(dim, std::move(m));
  }
  for (const auto& r : records) {
    Item item{r.video_id, r.version_label, r.dimension};
    const auto& entry = gt.at(item);
    auto& m = out.at(r.dimension);
    auto it = std::lower_bound(m.items.begin(), m.items.end(), item);
    std::size_t col = static_cast<std::size_t>(it - m.items.begin());
    auto& cell = m.cell(person_index.at(r.respondent_id), col);
    if (cell) {
      throw ValidationError("duplicate rating for " + r.respondent_id + " on " +
                            item.id());
    }
    cell = recode(r.rating, entry.rating);
  }
  return out;
}

// Matrix CSV: item-id columns, one person per row, blank cell = missing.
inline std::string save_matrix(const ResponseMatrix& m) {
  std::vector<std::string> header{"respondent_id"};
  for (const auto& it : m.items) header.push_back(it.id());
  std::string out = csv_row(header);
  for (std::size_t p = 0; p < m.persons.size(); ++p) {
    std::vector<std::string> row{m.persons[p]};
    for (std::size_t i = 0; i < m.items.size(); ++i) {
      const auto& c = m.cell(p, i);
      row.push_back(c ? std::to_string(*c) : "");
    }
    out += csv_row(row);
  }
  return out;
}

inline ResponseMatrix parse_matrix(std::string_view text) {
  auto rows = parse_csv(text);
  if (rows.empty()) throw ValidationError("matrix CSV: empty file");
  const auto& header = rows[0];
  if (header.size() < 2 || header[0] != "respondent_id") {
    throw ValidationError("matrix CSV: header must start with respondent_id");
  }
  ResponseMatrix m;
  for (std::size_t i = 1; i < header.size(); ++i) {
    m.items.push_back(parse_item_id(header[i]));
  }
  m.dimension = m.items[0].dimension;
  for (const auto& it : m.items) {
    if (it.dimension != m.dimension) {
      throw ValidationError("matrix CSV: mixed dimensions in header");
    }
  }
  if (!std::is_sorted(m.items.begin(), m.items.end())) {
    throw ValidationError("matrix CSV: item columns must be sorted by id");
  }
  std::set<std::string> seen;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() != header.size()) {
      throw ValidationError("row " + std::to_string(r) + ": expected " +
                            std::to_string(header.size()) + " fields");
    }
    if (!seen.insert(row[0]).second) {
      throw ValidationError("row " + std::to_string(r) + ": duplicate respondent " + row[0]);
    }
    m.persons.push_back(row[0]);
    for (std::size_t i = 1; i < row.size(); ++i) {
      if (row[i].empty()) {
        m.cells.push_back(std::nullopt);
        continue;
      }
      if (row[i].size() != 1 || row[i][0] < '0' || row[i][0] > '9') {
        throw ValidationError("row " + std::to_string(r) + ": malformed credit '" +
                              row[i] + "'");
      }
      int credit = row[i][0] - '0';
      if (credit > m.max_credit) {
        throw ValidationError("row " + std::to_string(r) + ": credit out of range: " +
                              row[i]);
      }
      m.cells.push_back(credit);
    }
  }
  if (m.persons.empty()) throw ValidationError("matrix CSV: no persons");
  return m;
}

inline ResponseMatrix load_matrix(const std::filesystem::path& p) {
  try {
    return parse_matrix(read_text_file(p));
  } catch (const ValidationError& e) {
    throw ValidationError(p.string() + ": " + e.what());
  }
}

}  // namespace adqc
