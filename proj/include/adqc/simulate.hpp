#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "adqc/pcm.hpp"
#include "adqc/rng.hpp"
#include "adqc/util.hpp"

#include <json.hpp>

namespace adqc {

struct SimConfig {
  std::size_t n_persons = 0;
  std::vector<PcmItemParams> items;
  double theta_variance = 1.0;        // used when fixed_thetas is empty
  std::vector<double> fixed_thetas;   // overrides the normal draw when set
  std::uint64_t seed = 0;
};

struct SimulatedData {
  ResponseMatrix matrix;
  std::vector<double> thetas;
};

inline std::vector<PcmItemParams> random_item_params(std::size_t count,
                                                     SplitMix64& rng,
                                                     int m = 2) {
  std::vector<PcmItemParams> items;
  for (std::size_t i = 0; i < count; ++i) {
    char id[16];
    std::snprintf(id, sizeof id, "i%02zu", i + 1);
    PcmItemParams p;
    p.item = {id, "sim", DimensionKey::Accurate};
    for (int k = 0; k < m; ++k) p.deltas.push_back(-1.5 + 3.0 * rng.uniform());
    items.push_back(std::move(p));
  }
  return items;
}

// Draws each response by inverse CDF over the model's category probabilities.
// Deterministic: thetas come from stream (seed, "sim-theta"), cells from
// (seed, "sim-cells") consumed in row-major person x item order.
inline SimulatedData simulate_responses(const SimConfig& config) {
  if (config.items.empty()) throw ValidationError("simulate: no items");
  if (!config.fixed_thetas.empty() &&
      config.fixed_thetas.size() != config.n_persons) {
    throw ValidationError("simulate: fixed theta count does not match persons");
  }
  if (config.fixed_thetas.empty()) {
    if (config.n_persons < 1) throw ValidationError("simulate: need persons");
    if (config.theta_variance <= 0) {
      throw ValidationError("simulate: theta variance must be positive");
    }
  }
  for (const auto& it : config.items) {
    if (it.deltas.empty()) {
      throw ValidationError("simulate: item " + it.item.id() + " has no steps");
    }
  }

  SimulatedData out;
  if (config.fixed_thetas.empty()) {
    auto rng = stream(config.seed, {"sim-theta"});
    double sd = std::sqrt(config.theta_variance);
    for (std::size_t p = 0; p < config.n_persons; ++p) {
      out.thetas.push_back(normal(rng, 0.0, sd));
    }
  } else {
    out.thetas = config.fixed_thetas;
  }

  ResponseMatrix& m = out.matrix;
  m.dimension = config.items[0].item.dimension;
  m.max_credit = 0;
  for (const auto& it : config.items) {
    m.items.push_back(it.item);
    m.max_credit = std::max(m.max_credit, static_cast<int>(it.deltas.size()));
  }
  for (std::size_t p = 0; p < out.thetas.size(); ++p) {
    char id[16];
    std::snprintf(id, sizeof id, "p%04zu", p + 1);
    m.persons.emplace_back(id);
  }
  m.cells.assign(m.persons.size() * m.items.size(), std::nullopt);

  auto rng = stream(config.seed, {"sim-cells"});
  for (std::size_t p = 0; p < m.persons.size(); ++p) {
    for (std::size_t i = 0; i < m.items.size(); ++i) {
      auto probs = category_probabilities(out.thetas[p], config.items[i]);
      double u = rng.uniform();
      int x = static_cast<int>(probs.size()) - 1;
      double acc = 0;
      for (std::size_t k = 0; k < probs.size(); ++k) {
        acc += probs[k];
        if (u < acc) {
          x = static_cast<int>(k);
          break;
        }
      }
      m.cells[p * m.items.size() + i] = x;
    }
  }
  return out;
}

namespace detail {

// Rows collapsed to distinct response patterns with multiplicities; keeps the
// oracle's exhaustive sweeps cheap (< 3^items patterns regardless of n).
struct PatternTable {
  std::vector<std::vector<std::optional<int>>> patterns;
  std::vector<double> counts;
};

inline PatternTable collapse_patterns(const ResponseMatrix& matrix) {
  std::map<std::vector<std::optional<int>>, double> acc;
  for (std::size_t p = 0; p < matrix.persons.size(); ++p) {
    std::vector<std::optional<int>> row;
    for (std::size_t i = 0; i < matrix.items.size(); ++i) {
      row.push_back(matrix.cell(p, i));
    }
    acc[row] += 1.0;
  }
  PatternTable t;
  for (auto& [row, count] : acc) {
    t.patterns.push_back(row);
    t.counts.push_back(count);
  }
  return t;
}

}  // namespace detail

// Exhaustive lattice reference for fit_pcm, deliberately simple and slow-ish:
// cyclic per-item sweeps over every (δ1, δ2) lattice point with the latent
// variance profiled over a coarse grid, repeated until a full cycle makes no
// change. Shares marginal_log_likelihood's model definition through the same
// probability kernel, so disagreement with fit_pcm isolates optimizer bugs.
inline std::vector<PcmItemParams> brute_force_mml(const ResponseMatrix& matrix,
                                                  double delta_step = 0.05,
                                                  double delta_limit = 3.0) {
  if (matrix.items.size() > 4) {
    throw ValidationError("brute_force_mml: more than 4 items");
  }
  if (matrix.items.empty()) throw ValidationError("brute_force_mml: no items");
  if (matrix.persons.empty()) throw ValidationError("brute_force_mml: no persons");
  if (matrix.max_credit != 2) {
    throw ValidationError("brute_force_mml: requires max credit 2");
  }
  if (delta_step <= 0 || delta_limit <= 0) {
    throw ValidationError("brute_force_mml: bad lattice");
  }

  auto table = detail::collapse_patterns(matrix);
  std::size_t n_items = matrix.items.size();
  std::size_t n_pat = table.patterns.size();

  QuadratureGrid grid = QuadratureGrid::make(61, 1.0, 5.0);
  std::vector<double> variance_grid;
  for (double v = 0.1; v <= 4.0 + 1e-9; v += 0.1) variance_grid.push_back(v);
  std::vector<double> lattice;
  long steps = static_cast<long>(std::floor(delta_limit / delta_step + 1e-9));
  for (long k = -steps; k <= steps; ++k) lattice.push_back(k * delta_step);

  std::vector<PcmItemParams> params;
  for (const auto& item : matrix.items) {
    PcmItemParams p;
    p.item = item;
    p.deltas = {0.0, 0.0};
    params.push_back(std::move(p));
  }
  double variance = 1.0;

  // probs[i][q][x] for current params of item i.
  auto item_probs = [&](const PcmItemParams& p) {
    std::vector<std::array<double, 3>> probs(grid.nodes.size());
    for (std::size_t q = 0; q < grid.nodes.size(); ++q) {
      auto v = category_probabilities(grid.nodes[q], p);
      probs[q] = {v[0], v[1], v[2]};
    }
    return probs;
  };
  std::vector<std::vector<std::array<double, 3>>> probs;
  for (const auto& p : params) probs.push_back(item_probs(p));

  auto reweight = [&](double var) {
    QuadratureGrid g = grid;
    g.reweight(var);
    return g.weights;
  };

  // log-likelihood with item `skip` replaced by candidate probabilities
  // (skip == n_items means none).
  auto log_lik = [&](std::size_t skip,
                     const std::vector<std::array<double, 3>>& cand,
                     const std::vector<double>& weights) {
    double ll = 0;
    for (std::size_t t = 0; t < n_pat; ++t) {
      double marginal = 0;
      for (std::size_t q = 0; q < grid.nodes.size(); ++q) {
        double lik = 1.0;
        for (std::size_t i = 0; i < n_items; ++i) {
          const auto& cell = table.patterns[t][i];
          if (!cell) continue;
          lik *= (i == skip ? cand[q] : probs[i][q])[*cell];
        }
        marginal += weights[q] * lik;
      }
      ll += table.counts[t] * std::log(marginal);
    }
    return ll;
  };

  auto weights = reweight(variance);
  for (int cycle = 0; cycle < 30; ++cycle) {
    bool changed = false;
    for (std::size_t i = 0; i < n_items; ++i) {
      double best_ll = log_lik(n_items, {}, weights);
      std::array<double, 2> best = {params[i].deltas[0], params[i].deltas[1]};
      PcmItemParams cand_params = params[i];
      for (double d1 : lattice) {
        for (double d2 : lattice) {
          cand_params.deltas = {d1, d2};
          auto cand = item_probs(cand_params);
          double ll = log_lik(i, cand, weights);
          if (ll > best_ll + 1e-12) {
            best_ll = ll;
            best = {d1, d2};
          }
        }
      }
      if (best[0] != params[i].deltas[0] || best[1] != params[i].deltas[1]) {
        params[i].deltas = {best[0], best[1]};
        probs[i] = item_probs(params[i]);
        changed = true;
      }
    }
    double best_var = variance;
    double best_ll = log_lik(n_items, {}, weights);
    for (double v : variance_grid) {
      auto w = reweight(v);
      double ll = log_lik(n_items, {}, w);
      if (ll > best_ll + 1e-12) {
        best_ll = ll;
        best_var = v;
      }
    }
    if (best_var != variance) {
      variance = best_var;
      weights = reweight(variance);
      changed = true;
    }
    if (!changed) break;
  }
  return params;
}

struct RecoveryReport {
  std::size_t replications = 0;
  std::size_t n_persons = 0;
  std::size_t n_items = 0;
  double delta_bias = 0;
  double delta_rmse = 0;
  double delta_correlation = 0;
  double theta_correlation = 0;
  double mean_iterations = 0;
  bool all_converged = false;
  bool em_monotone = false;  // log-likelihood non-decreasing within 1e-9

  std::string to_markdown() const {
    std::string s;
    s += "# Parameter recovery\n\n";
    s += "| quantity | value |\n|---|---|\n";
    s += "| replications | " + std::to_string(replications) + " |\n";
    s += "| persons | " + std::to_string(n_persons) + " |\n";
    s += "| items | " + std::to_string(n_items) + " |\n";
    s += "| delta bias | " + fixed(delta_bias, 5) + " |\n";
    s += "| delta RMSE | " + fixed(delta_rmse, 5) + " |\n";
    s += "| delta correlation | " + fixed(delta_correlation, 5) + " |\n";
    s += "| theta correlation | " + fixed(theta_correlation, 5) + " |\n";
    s += "| mean EM iterations | " + fixed(mean_iterations, 1) + " |\n";
    s += std::string("| all runs converged | ") + (all_converged ? "yes" : "no") +
         " |\n";
    s += std::string("| log-likelihood monotone | ") + (em_monotone ? "yes" : "no") +
         " |\n";
    return s;
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["replications"] = replications;
    j["n_persons"] = n_persons;
    j["n_items"] = n_items;
    j["delta_bias"] = delta_bias;
    j["delta_rmse"] = delta_rmse;
    j["delta_correlation"] = delta_correlation;
    j["theta_correlation"] = theta_correlation;
    j["mean_iterations"] = mean_iterations;
    j["all_converged"] = all_converged;
    j["em_monotone"] = em_monotone;
    return j;
  }
};

// Simulate -> fit -> compare, pooling estimates across replications.
// Replication r uses the derived stream (seed, "rep", r) for its data.
inline RecoveryReport recovery_experiment(const SimConfig& config,
                                          std::size_t replications,
                                          const FitConfig& fit_config = {}) {
  if (replications < 1) throw ValidationError("recovery: replications must be >= 1");
  RecoveryReport report;
  report.replications = replications;
  report.n_persons = config.n_persons;
  report.n_items = config.items.size();
  report.all_converged = true;
  report.em_monotone = true;

  std::vector<double> est_deltas, true_deltas, est_thetas, true_thetas;
  double iter_sum = 0;
  for (std::size_t r = 0; r < replications; ++r) {
    SimConfig rep = config;
    rep.seed = stream(config.seed, {"rep", std::to_string(r)}).next();
    auto data = simulate_responses(rep);
    auto fit = fit_pcm(data.matrix, fit_config);
    report.all_converged = report.all_converged && fit.converged;
    iter_sum += static_cast<double>(fit.iterations);
    for (std::size_t t = 1; t < fit.ll_trace.size(); ++t) {
      if (fit.ll_trace[t] < fit.ll_trace[t - 1] - 1e-9) report.em_monotone = false;
    }
    for (std::size_t i = 0; i < fit.items.size(); ++i) {
      for (std::size_t k = 0; k < fit.items[i].deltas.size(); ++k) {
        est_deltas.push_back(fit.items[i].deltas[k]);
        true_deltas.push_back(rep.items[i].deltas[k]);
      }
    }
    auto abilities = eap_abilities(fit, fit.matrix);
    for (std::size_t p = 0; p < abilities.size(); ++p) {
      est_thetas.push_back(abilities[p].theta);
      true_thetas.push_back(data.thetas[p]);
    }
  }
  report.mean_iterations = iter_sum / static_cast<double>(replications);

  double bias = 0, mse = 0;
  for (std::size_t k = 0; k < est_deltas.size(); ++k) {
    double d = est_deltas[k] - true_deltas[k];
    bias += d;
    mse += d * d;
  }
  report.delta_bias = bias / static_cast<double>(est_deltas.size());
  report.delta_rmse = std::sqrt(mse / static_cast<double>(est_deltas.size()));
  report.delta_correlation = pearson(est_deltas, true_deltas).value_or(0.0);
  report.theta_correlation = pearson(est_thetas, true_thetas).value_or(0.0);
  return report;
}

}  // namespace adqc
