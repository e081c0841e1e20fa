#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "adqc/consensus.hpp"
#include "adqc/csv.hpp"
#include "adqc/pcm.hpp"
#include "adqc/rng.hpp"
#include "adqc/util.hpp"

namespace adqc {

inline constexpr double kMnsqLow = 0.75;
inline constexpr double kMnsqHigh = 1.33;

enum class FitFlag { Ok, Overfit, Misfit };

inline constexpr std::string_view to_string(FitFlag f) {
  switch (f) {
    case FitFlag::Ok: return "ok";
    case FitFlag::Overfit: return "overfit";
    case FitFlag::Misfit: return "misfit";
  }
  return "?";
}

// Bounds are inclusive: exactly 0.75 or 1.33 is acceptable.
inline FitFlag classify_mnsq(double mnsq) {
  if (mnsq < kMnsqLow) return FitFlag::Overfit;
  if (mnsq > kMnsqHigh) return FitFlag::Misfit;
  return FitFlag::Ok;
}

struct FitStats {
  std::string unit;  // respondent or item id
  double infit = 0;
  double outfit = 0;
  FitFlag infit_flag = FitFlag::Ok;
  FitFlag outfit_flag = FitFlag::Ok;

  bool operator==(const FitStats&) const = default;
};

namespace detail {

// Residual moments of one response at ability theta: expected score and
// score variance under the model.
inline void response_moments(double theta, const PcmItemParams& params,
                             double& expected, double& variance) {
  auto p = category_probabilities(theta, params);
  expected = 0;
  for (std::size_t x = 1; x < p.size(); ++x) expected += x * p[x];
  variance = 0;
  for (std::size_t x = 0; x < p.size(); ++x) {
    double d = x - expected;
    variance += d * d * p[x];
  }
}

struct FitAccum {
  double sq_sum = 0;       // Σ (x−E)²  (for infit numerator)
  double var_sum = 0;      // Σ W
  double ratio_sum = 0;    // Σ (x−E)²/W  (for outfit)
  int n = 0;

  FitStats finish(std::string unit) const {
    FitStats s;
    s.unit = std::move(unit);
    if (n == 0 || var_sum <= 0) {
      throw ComputationError("fit statistics undefined for " + s.unit);
    }
    s.infit = sq_sum / var_sum;
    s.outfit = ratio_sum / n;
    s.infit_flag = classify_mnsq(s.infit);
    s.outfit_flag = classify_mnsq(s.outfit);
    return s;
  }
};

inline void check_abilities_match(const std::vector<PersonAbility>& abilities,
                                  const ResponseMatrix& matrix) {
  if (abilities.size() != matrix.persons.size()) {
    throw ValidationError("fit statistics: abilities/persons size mismatch");
  }
  for (std::size_t p = 0; p < abilities.size(); ++p) {
    if (abilities[p].respondent_id != matrix.persons[p]) {
      throw ValidationError("fit statistics: abilities out of order at row " +
                            std::to_string(p));
    }
  }
}

}  // namespace detail

// Mean-square fit per person. Residuals are taken at the EAP ability.
// infit = Σ(x−E)² / ΣW (information-weighted), outfit = mean of (x−E)²/W.
inline std::vector<FitStats> person_fit(const PcmFit& fit,
                                        const std::vector<PersonAbility>& abilities,
                                        const ResponseMatrix& matrix) {
  detail::check_abilities_match(abilities, matrix);
  if (matrix.items.size() != fit.items.size()) {
    throw ValidationError("person_fit: item count mismatch with fit");
  }
  std::vector<FitStats> out;
  for (std::size_t p = 0; p < matrix.persons.size(); ++p) {
    detail::FitAccum acc;
    for (std::size_t i = 0; i < matrix.items.size(); ++i) {
      const auto& c = matrix.cell(p, i);
      if (!c) continue;
      double e, w;
      detail::response_moments(abilities[p].theta, fit.items[i], e, w);
      double r = *c - e;
      acc.sq_sum += r * r;
      acc.var_sum += w;
      acc.ratio_sum += r * r / w;
      acc.n += 1;
    }
    if (acc.n == 0) {
      throw ValidationError("person " + matrix.persons[p] + ": no responses");
    }
    out.push_back(acc.finish(matrix.persons[p]));
  }
  return out;
}

// Mean-square fit per item: the same formulas with persons and items swapped.
inline std::vector<FitStats> item_fit(const PcmFit& fit,
                                      const std::vector<PersonAbility>& abilities,
                                      const ResponseMatrix& matrix) {
  detail::check_abilities_match(abilities, matrix);
  if (matrix.items.size() != fit.items.size()) {
    throw ValidationError("item_fit: item count mismatch with fit");
  }
  std::vector<FitStats> out;
  for (std::size_t i = 0; i < matrix.items.size(); ++i) {
    detail::FitAccum acc;
    for (std::size_t p = 0; p < matrix.persons.size(); ++p) {
      const auto& c = matrix.cell(p, i);
      if (!c) continue;
      double e, w;
      detail::response_moments(abilities[p].theta, fit.items[i], e, w);
      double r = *c - e;
      acc.sq_sum += r * r;
      acc.var_sum += w;
      acc.ratio_sum += r * r / w;
      acc.n += 1;
    }
    if (acc.n == 0) {
      throw ValidationError("item " + matrix.items[i].id() + ": no responses");
    }
    out.push_back(acc.finish(matrix.items[i].id()));
  }
  return out;
}

inline constexpr std::string_view kFitStatsHeader =
    "respondent_id,infit,outfit,infit_flag,outfit_flag";

inline std::string save_fit_stats(const std::vector<FitStats>& stats,
                                  std::string_view id_column = "respondent_id") {
  std::string header = std::string(id_column) + ",infit,outfit,infit_flag,outfit_flag";
  std::string out = header + "\n";
  for (const auto& s : stats) {
    out += csv_row({s.unit, fixed(s.infit, 5), fixed(s.outfit, 5),
                    std::string(to_string(s.infit_flag)),
                    std::string(to_string(s.outfit_flag))});
  }
  return out;
}

// R = Var(θ̂) / (Var(θ̂) + mean psd²), population variance across persons.
// No spread and no precision at all means nothing was measured: R = 0.
inline double eap_reliability(const std::vector<PersonAbility>& abilities) {
  if (abilities.size() < 2) {
    throw ValidationError("eap_reliability: need at least 2 persons");
  }
  double n = static_cast<double>(abilities.size());
  double mean = 0;
  for (const auto& a : abilities) mean += a.theta;
  mean /= n;
  double var = 0, msd = 0;
  for (const auto& a : abilities) {
    var += (a.theta - mean) * (a.theta - mean);
    msd += a.psd * a.psd;
  }
  var /= n;
  msd /= n;
  if (var + msd == 0) return 0.0;
  return var / (var + msd);
}

namespace detail {

// Core of pv_reliability over explicit posteriors: draw M plausible values
// per person from the node-discretized posterior, then
// R = 1 − mean within-person variance / total variance of all draws.
inline double pv_reliability_core(const std::vector<std::vector<double>>& posterior,
                                  const std::vector<double>& nodes, int draws,
                                  std::uint64_t seed) {
  if (draws < 2) throw ValidationError("pv_reliability: draws must be >= 2");
  std::size_t P = posterior.size();
  if (P == 0) throw ValidationError("pv_reliability: no persons");
  std::vector<double> all;
  all.reserve(P * static_cast<std::size_t>(draws));
  double within_sum = 0;
  for (std::size_t p = 0; p < P; ++p) {
    auto rng = stream(seed, {"pv", std::to_string(p)});
    std::vector<double> pv;
    for (int d = 0; d < draws; ++d) {
      double u = rng.uniform();
      double cumulative = 0;
      std::size_t pick = nodes.size() - 1;
      for (std::size_t q = 0; q < nodes.size(); ++q) {
        cumulative += posterior[p][q];
        if (u < cumulative) {
          pick = q;
          break;
        }
      }
      pv.push_back(nodes[pick]);
    }
    double m = 0;
    for (double v : pv) m += v;
    m /= draws;
    double v = 0;
    for (double x : pv) v += (x - m) * (x - m);
    within_sum += v / (draws - 1);  // within-person sample variance
    for (double x : pv) all.push_back(x);
  }
  double gm = 0;
  for (double x : all) gm += x;
  gm /= all.size();
  double total = 0;
  for (double x : all) total += (x - gm) * (x - gm);
  total /= all.size();
  if (total == 0) {
    throw ComputationError(
        "pv_reliability: degenerate posterior, all draws identical");
  }
  return 1.0 - (within_sum / P) / total;
}

}  // namespace detail

inline double pv_reliability(const PcmFit& fit, const ResponseMatrix& matrix,
                             int draws, std::uint64_t seed) {
  if (draws < 2) throw ValidationError("pv_reliability: draws must be >= 2");
  // Recompute posteriors from the matrix so a fit loaded from JSON works.
  std::size_t Q = fit.grid.nodes.size();
  std::vector<double> logw(Q);
  for (std::size_t q = 0; q < Q; ++q) logw[q] = std::log(fit.grid.weights[q]);
  std::vector<std::vector<double>> posterior(matrix.persons.size(),
                                             std::vector<double>(Q, 0.0));
  std::vector<std::vector<double>> logp(fit.items.size());
  if (matrix.items.size() != fit.items.size()) {
    throw ValidationError("pv_reliability: item count mismatch with fit");
  }
  for (std::size_t i = 0; i < fit.items.size(); ++i) {
    std::size_t stride = fit.items[i].deltas.size() + 1;
    logp[i].resize(Q * stride);
    for (std::size_t q = 0; q < Q; ++q) {
      log_category_probabilities(fit.grid.nodes[q], fit.items[i].deltas,
                                 logp[i].data() + q * stride);
    }
  }
  std::vector<double> acc(Q);
  for (std::size_t p = 0; p < matrix.persons.size(); ++p) {
    acc = logw;
    for (std::size_t i = 0; i < matrix.items.size(); ++i) {
      const auto& c = matrix.cell(p, i);
      if (!c) continue;
      std::size_t stride = fit.items[i].deltas.size() + 1;
      if (*c < 0 || static_cast<std::size_t>(*c) >= stride) {
        throw ValidationError(
            "pv_reliability: response exceeds item top category; pass the "
            "fit's working matrix");
      }
      const double* tbl = logp[i].data();
      for (std::size_t q = 0; q < Q; ++q) acc[q] += tbl[q * stride + *c];
    }
    double mx = acc[0];
    for (std::size_t q = 1; q < Q; ++q) mx = std::max(mx, acc[q]);
    double s = 0;
    for (std::size_t q = 0; q < Q; ++q) {
      posterior[p][q] = std::exp(acc[q] - mx);
      s += posterior[p][q];
    }
    for (std::size_t q = 0; q < Q; ++q) posterior[p][q] /= s;
  }
  return detail::pv_reliability_core(posterior, fit.grid.nodes, draws, seed);
}

inline constexpr double kWellFitThreshold = 0.20;

struct ItemRestCorrelation {
  Item item;
  std::optional<double> r;  // unset when either vector has zero variance
  bool well_fit = false;

  bool operator==(const ItemRestCorrelation&) const = default;
};

// Pearson correlation between an item's credits and the person's remaining
// total credit, pairwise over persons observed on the item.
inline std::vector<ItemRestCorrelation> item_rest_correlation(
    const ResponseMatrix& matrix) {
  std::vector<ItemRestCorrelation> out;
  for (std::size_t i = 0; i < matrix.items.size(); ++i) {
    std::vector<double> xs, ys;
    for (std::size_t p = 0; p < matrix.persons.size(); ++p) {
      const auto& c = matrix.cell(p, i);
      if (!c) continue;
      double rest = 0;
      for (std::size_t j = 0; j < matrix.items.size(); ++j) {
        if (j == i) continue;
        const auto& cj = matrix.cell(p, j);
        if (cj) rest += *cj;
      }
      xs.push_back(*c);
      ys.push_back(rest);
    }
    if (xs.size() < 3) {
      throw ValidationError("item " + matrix.items[i].id() +
                            ": fewer than 3 observed persons");
    }
    ItemRestCorrelation irc;
    irc.item = matrix.items[i];
    irc.r = pearson(xs, ys);
    if (irc.r) irc.well_fit = *irc.r >= kWellFitThreshold;
    out.push_back(std::move(irc));
  }
  return out;
}

struct ReliabilityReport {
  DimensionKey dimension = DimensionKey::Accurate;
  double latent_variance = 0;
  double eap_reliability = 0;
  std::optional<double> pv_reliability;
  int well_fit_items = 0;
  int total_items = 0;

  bool operator==(const ReliabilityReport&) const = default;
};

// Per-dimension summary table: variance, EAP/PV reliability, well-fit item
// count. One column per dimension in canonical order, values at 3 decimals.
struct DimensionReport {
  std::vector<ReliabilityReport> columns;  // canonical dimension order

  std::string to_markdown() const {
    std::string out = "| Statistic |";
    for (const auto& c : columns) {
      out += " " + std::string(to_string(c.dimension)) + " |";
    }
    out += "\n|---|";
    for (std::size_t i = 0; i < columns.size(); ++i) out += "---|";
    out += "\n| variance |";
    for (const auto& c : columns) out += " " + fixed(c.latent_variance, 3) + " |";
    out += "\n| eap_pv_reliability |";
    for (const auto& c : columns) out += " " + fixed(c.eap_reliability, 3) + " |";
    out += "\n| well_fit_items |";
    for (const auto& c : columns) {
      out += " " + std::to_string(c.well_fit_items) + "/" +
             std::to_string(c.total_items) + " |";
    }
    out += "\n";
    return out;
  }

  std::string to_csv() const {
    std::vector<std::string> header{"statistic"};
    for (const auto& c : columns) header.push_back(std::string(to_string(c.dimension)));
    std::string out = csv_row(header);
    std::vector<std::string> var_row{"variance"}, rel_row{"eap_pv_reliability"},
        fit_row{"well_fit_items"};
    for (const auto& c : columns) {
      var_row.push_back(fixed(c.latent_variance, 3));
      rel_row.push_back(fixed(c.eap_reliability, 3));
      fit_row.push_back(std::to_string(c.well_fit_items) + "/" +
                        std::to_string(c.total_items));
    }
    out += csv_row(var_row);
    out += csv_row(rel_row);
    out += csv_row(fit_row);
    return out;
  }
};

inline DimensionReport dimension_report(
    const std::map<DimensionKey, ReliabilityReport>& per_dimension) {
  DimensionReport report;
  for (DimensionKey k : kDimensionOrder) {
    auto it = per_dimension.find(k);
    if (it == per_dimension.end()) {
      throw ValidationError("dimension_report: missing dimension " +
                            std::string(to_string(k)));
    }
    if (it->second.well_fit_items > it->second.total_items) {
      throw ValidationError("dimension_report: well_fit_items exceeds total");
    }
    report.columns.push_back(it->second);
  }
  return report;
}

// Respondent x dimension ability table. Column maxima are marked (ties all
// marked); a respondent missing from a dimension leaves a blank cell and
// adds a footnote.
struct ProficiencyReport {
  std::vector<std::string> respondents;
  // cells[row][dim index in kDimensionOrder]
  std::vector<std::array<std::optional<double>, 7>> cells;
  std::vector<std::array<bool, 7>> is_max;
  bool has_missing = false;

  std::string footnote() const {
    return "Blank cells: no responses from that respondent in that dimension.";
  }

  std::string to_markdown() const {
    std::string out = "| Respondent |";
    for (DimensionKey k : kDimensionOrder) {
      out += " " + std::string(to_string(k)) + " |";
    }
    out += "\n|---|";
    for (int i = 0; i < 7; ++i) out += "---|";
    out += "\n";
    for (std::size_t r = 0; r < respondents.size(); ++r) {
      out += "| " + respondents[r] + " |";
      for (int d = 0; d < 7; ++d) {
        if (!cells[r][d]) {
          out += "  |";
        } else if (is_max[r][d]) {
          out += " **" + fixed(*cells[r][d], 5) + "** |";
        } else {
          out += " " + fixed(*cells[r][d], 5) + " |";
        }
      }
      out += "\n";
    }
    if (has_missing) out += "\n" + footnote() + "\n";
    return out;
  }

  std::string to_csv() const {
    std::vector<std::string> header{"respondent_id"};
    for (DimensionKey k : kDimensionOrder) {
      header.push_back(std::string(to_string(k)));
      header.push_back(std::string(to_string(k)) + "_max");
    }
    std::string out = csv_row(header);
    for (std::size_t r = 0; r < respondents.size(); ++r) {
      std::vector<std::string> row{respondents[r]};
      for (int d = 0; d < 7; ++d) {
        row.push_back(cells[r][d] ? fixed(*cells[r][d], 5) : "");
        row.push_back(cells[r][d] && is_max[r][d] ? "1" : "");
      }
      out += csv_row(row);
    }
    return out;
  }
};

inline ProficiencyReport proficiency_report(
    const std::map<DimensionKey, std::vector<PersonAbility>>& per_dimension) {
  for (DimensionKey k : kDimensionOrder) {
    if (!per_dimension.count(k)) {
      throw ValidationError("proficiency_report: missing dimension " +
                            std::string(to_string(k)));
    }
  }
  ProficiencyReport rep;
  std::map<std::string, std::size_t> row_index;
  for (DimensionKey k : kDimensionOrder) {
    for (const auto& a : per_dimension.at(k)) {
      if (row_index.emplace(a.respondent_id, rep.respondents.size()).second) {
        rep.respondents.push_back(a.respondent_id);
        rep.cells.emplace_back();
        rep.is_max.emplace_back();
      }
    }
  }
  for (int d = 0; d < 7; ++d) {
    for (const auto& a : per_dimension.at(kDimensionOrder[d])) {
      rep.cells[row_index[a.respondent_id]][d] = a.theta;
    }
  }
  for (int d = 0; d < 7; ++d) {
    std::optional<double> best;
    for (std::size_t r = 0; r < rep.respondents.size(); ++r) {
      if (!rep.cells[r][d]) {
        rep.has_missing = true;
        continue;
      }
      if (!best || *rep.cells[r][d] > *best) best = *rep.cells[r][d];
    }
    for (std::size_t r = 0; r < rep.respondents.size(); ++r) {
      rep.is_max[r][d] = rep.cells[r][d] && best && *rep.cells[r][d] == *best;
    }
  }
  return rep;
}

}  // namespace adqc
