#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <future>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "adqc/consensus.hpp"
#include "adqc/csv.hpp"
#include "adqc/study.hpp"
#include "adqc/util.hpp"

namespace adqc {

struct PcmItemParams {
  Item item;
  std::vector<double> deltas;  // step difficulties δ_i1..δ_im, logits

  int m() const { return static_cast<int>(deltas.size()); }

  bool operator==(const PcmItemParams&) const = default;
};

// Latent ability distribution. The mean is pinned at 0 for identification;
// only the variance is estimated.
struct LatentDistribution {
  double variance = 1.0;

  bool operator==(const LatentDistribution&) const = default;
};

struct QuadratureGrid {
  std::vector<double> nodes;    // strictly increasing logits
  std::vector<double> weights;  // sum to 1

  // Equally spaced nodes over ±span_sds*sd, weighted by a normal density.
  static QuadratureGrid make(int count, double sd, double span_sds) {
    if (count < 3) throw ValidationError("quadrature: need at least 3 nodes");
    if (sd <= 0 || span_sds <= 0) {
      throw ValidationError("quadrature: sd and span must be positive");
    }
    QuadratureGrid g;
    double hi = span_sds * sd;
    double step = 2.0 * hi / (count - 1);
    for (int i = 0; i < count; ++i) g.nodes.push_back(-hi + i * step);
    g.weights.assign(g.nodes.size(), 0.0);
    g.reweight(sd * sd);
    return g;
  }

  // Weights proportional to the N(0, variance) density at each node; the
  // density normalizer cancels in the renormalization.
  void reweight(double variance) {
    if (variance <= 0) throw ValidationError("quadrature: variance must be positive");
    double sum = 0;
    for (std::size_t q = 0; q < nodes.size(); ++q) {
      weights[q] = std::exp(-nodes[q] * nodes[q] / (2.0 * variance));
      sum += weights[q];
    }
    for (auto& w : weights) w /= sum;
  }

  bool operator==(const QuadratureGrid&) const = default;
};

// log P(X = x | theta) for x = 0..m, computed in log space with
// max-subtraction. out must hold m+1 slots.
inline void log_category_probabilities(double theta,
                                       const std::vector<double>& deltas,
                                       double* out) {
  std::size_t m = deltas.size();
  double cum = 0.0;
  out[0] = 0.0;
  for (std::size_t k = 0; k < m; ++k) {
    cum += theta - deltas[k];
    out[k + 1] = cum;
  }
  double mx = out[0];
  for (std::size_t x = 1; x <= m; ++x) mx = std::max(mx, out[x]);
  double sum = 0.0;
  for (std::size_t x = 0; x <= m; ++x) sum += std::exp(out[x] - mx);
  double log_norm = mx + std::log(sum);
  for (std::size_t x = 0; x <= m; ++x) out[x] -= log_norm;
}

inline std::vector<double> category_probabilities(double theta,
                                                  const PcmItemParams& params) {
  if (!std::isfinite(theta)) {
    throw ValidationError("category_probabilities: non-finite theta");
  }
  for (double d : params.deltas) {
    if (!std::isfinite(d)) {
      throw ValidationError("category_probabilities: non-finite delta");
    }
  }
  std::vector<double> logp(params.deltas.size() + 1);
  log_category_probabilities(theta, params.deltas, logp.data());
  for (auto& v : logp) v = std::exp(v);
  return logp;
}

struct Thresholds {
  Item item;
  std::vector<double> gammas;  // γ_i1 ≤ ... ≤ γ_im

  bool operator==(const Thresholds&) const = default;
};

namespace detail {

inline double prob_at_least(double theta, const PcmItemParams& params, int k) {
  auto p = category_probabilities(theta, params);
  double s = 0;
  for (std::size_t x = static_cast<std::size_t>(k); x < p.size(); ++x) s += p[x];
  return s;
}

}  // namespace detail

// Cumulative Thurstonian thresholds: γ_ik is the ability where reaching
// category k or above becomes more likely than not. Monotone in θ, so plain
// bisection; the initial bracket widens until it straddles the root.
inline Thresholds thurstonian_thresholds(const PcmItemParams& params) {
  for (double d : params.deltas) {
    if (!std::isfinite(d)) {
      throw ValidationError("thurstonian_thresholds: non-finite delta");
    }
  }
  Thresholds out;
  out.item = params.item;
  for (int k = 1; k <= params.m(); ++k) {
    double lo = -10, hi = 10;
    while (detail::prob_at_least(lo, params, k) > 0.5) {
      hi = lo;
      lo *= 2;
      if (lo < -1e9) throw ComputationError("threshold bracket failed (low)");
    }
    while (detail::prob_at_least(hi, params, k) < 0.5) {
      lo = std::max(lo, hi / 2);
      hi *= 2;
      if (hi > 1e9) throw ComputationError("threshold bracket failed (high)");
    }
    for (int it = 0; it < 200 && hi - lo > 1e-12; ++it) {
      double mid = 0.5 * (lo + hi);
      if (detail::prob_at_least(mid, params, k) < 0.5) lo = mid;
      else hi = mid;
    }
    out.gammas.push_back(0.5 * (lo + hi));
  }
  for (std::size_t k = 1; k < out.gammas.size(); ++k) {
    if (out.gammas[k] < out.gammas[k - 1] - 1e-9) {
      throw ComputationError("thresholds out of order for item " +
                             params.item.id());
    }
  }
  return out;
}

// Σ_n log Σ_q w_q Π_i P(x_ni | θ_q), with the node weights taken from the
// latent distribution over the grid's nodes. Log-space throughout.
inline double marginal_log_likelihood(const ResponseMatrix& matrix,
                                      const std::vector<PcmItemParams>& items,
                                      const LatentDistribution& latent,
                                      const QuadratureGrid& grid) {
  if (items.size() != matrix.items.size()) {
    throw ValidationError("marginal_log_likelihood: item count mismatch");
  }
  if (latent.variance <= 0) {
    throw ValidationError("marginal_log_likelihood: variance must be positive");
  }
  std::size_t Q = grid.nodes.size();
  QuadratureGrid g = grid;
  g.reweight(latent.variance);
  std::vector<double> logw(Q);
  for (std::size_t q = 0; q < Q; ++q) logw[q] = std::log(g.weights[q]);

  // logp[i][q*(m+1)+x]
  std::vector<std::vector<double>> logp(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    std::size_t stride = items[i].deltas.size() + 1;
    logp[i].resize(Q * stride);
    for (std::size_t q = 0; q < Q; ++q) {
      log_category_probabilities(grid.nodes[q], items[i].deltas,
                                 logp[i].data() + q * stride);
    }
  }
  double total = 0;
  std::vector<double> acc(Q);
  for (std::size_t p = 0; p < matrix.persons.size(); ++p) {
    acc = logw;
    for (std::size_t i = 0; i < matrix.items.size(); ++i) {
      const auto& c = matrix.cell(p, i);
      if (!c) continue;
      std::size_t stride = items[i].deltas.size() + 1;
      if (*c < 0 || static_cast<std::size_t>(*c) >= stride) {
        throw ValidationError("marginal_log_likelihood: response " +
                              std::to_string(*c) + " exceeds item categories");
      }
      const double* tbl = logp[i].data();
      for (std::size_t q = 0; q < Q; ++q) acc[q] += tbl[q * stride + *c];
    }
    double mx = acc[0];
    for (std::size_t q = 1; q < Q; ++q) mx = std::max(mx, acc[q]);
    double s = 0;
    for (std::size_t q = 0; q < Q; ++q) s += std::exp(acc[q] - mx);
    total += mx + std::log(s);
  }
  return total;
}

struct FitConfig {
  int nodes = 61;
  double span_sds = 5.0;
  double tolerance = 1e-4;
  int max_iter = 1000;
  bool collapse_null_categories = false;
  // fast mode runs E-step chunks on threads; the chunked fixed-order
  // reduction makes it bit-identical to deterministic mode.
  bool fast = false;
  double initial_sd = 1.0;
  int max_grid_rebuilds = 2;
};

struct PcmFit {
  std::vector<PcmItemParams> items;
  LatentDistribution latent;
  double log_likelihood = 0;
  int iterations = 0;
  bool converged = false;
  QuadratureGrid grid;
  std::vector<std::string> persons;
  std::vector<std::vector<double>> posterior;  // [person][node]
  std::vector<std::string> warnings;
  std::vector<double> ll_trace;  // one entry per E-step of the final grid run
  int grid_rebuilds = 0;
  // Working matrix the parameters refer to; equals the input unless null
  // categories were collapsed.
  ResponseMatrix matrix;
};

namespace detail {

struct CollapsePlan {
  // map[i][raw credit] = working credit, or -1 for impossible raw values
  std::vector<std::vector<int>> map;
  std::vector<int> item_m;
  std::vector<std::string> warnings;
};

inline CollapsePlan analyze_categories(const ResponseMatrix& matrix,
                                       bool collapse) {
  CollapsePlan plan;
  std::size_t P = matrix.persons.size(), I = matrix.items.size();
  for (std::size_t p = 0; p < P; ++p) {
    if (matrix.observed_count(p) == 0) {
      throw ValidationError("person " + matrix.persons[p] + ": no responses");
    }
  }
  for (std::size_t i = 0; i < I; ++i) {
    std::set<int> observed;
    for (std::size_t p = 0; p < P; ++p) {
      const auto& c = matrix.cell(p, i);
      if (c) observed.insert(*c);
    }
    const std::string id = matrix.items[i].id();
    if (observed.empty()) {
      throw ValidationError("item " + id + ": no responses");
    }
    if (observed.size() < 2) {
      throw ValidationError("item " + id + ": constant responses (all " +
                            std::to_string(*observed.begin()) + ")");
    }
    std::vector<int> remap(matrix.max_credit + 1, -1);
    if (static_cast<int>(observed.size()) == matrix.max_credit + 1) {
      for (int x = 0; x <= matrix.max_credit; ++x) remap[x] = x;
      plan.item_m.push_back(matrix.max_credit);
    } else {
      if (!collapse) {
        int missing = 0;
        for (int x = 0; x <= matrix.max_credit; ++x) {
          if (!observed.count(x)) { missing = x; break; }
        }
        throw ValidationError(
            "item " + id + ": category " + std::to_string(missing) +
            " never observed (set collapse_null_categories to merge)");
      }
      int next = 0;
      std::string obs_list;
      for (int x : observed) {
        remap[x] = next++;
        if (!obs_list.empty()) obs_list += ",";
        obs_list += std::to_string(x);
      }
      plan.item_m.push_back(next - 1);
      plan.warnings.push_back("item " + id + ": only categories {" + obs_list +
                              "} observed; collapsed to 0.." +
                              std::to_string(next - 1));
    }
    plan.map.push_back(std::move(remap));
  }
  return plan;
}

struct EStepResult {
  double ll = 0;
  // counts[i][q*(m_i+1)+x]: expected count of response x to item i at node q
  std::vector<std::vector<double>> counts;
  double s_theta2 = 0;  // Σ_n Σ_q f_nq θ_q²
};

// One E-step over a person range; posteriors written into rows of post.
inline EStepResult e_step_range(const ResponseMatrix& m,
                                const std::vector<std::vector<double>>& logp,
                                const std::vector<double>& logw,
                                const std::vector<double>& nodes,
                                std::size_t p_begin, std::size_t p_end,
                                std::vector<std::vector<double>>& post) {
  std::size_t Q = nodes.size(), I = m.items.size();
  EStepResult res;
  res.counts.resize(I);
  for (std::size_t i = 0; i < I; ++i) res.counts[i].assign(logp[i].size(), 0.0);
  std::vector<double> acc(Q);
  for (std::size_t p = p_begin; p < p_end; ++p) {
    acc = logw;
    for (std::size_t i = 0; i < I; ++i) {
      const auto& c = m.cell(p, i);
      if (!c) continue;
      std::size_t stride = res.counts[i].size() / Q;
      const double* tbl = logp[i].data();
      for (std::size_t q = 0; q < Q; ++q) acc[q] += tbl[q * stride + *c];
    }
    double mx = acc[0];
    for (std::size_t q = 1; q < Q; ++q) mx = std::max(mx, acc[q]);
    double s = 0;
    for (std::size_t q = 0; q < Q; ++q) {
      acc[q] = std::exp(acc[q] - mx);
      s += acc[q];
    }
    res.ll += mx + std::log(s);
    auto& row = post[p];
    for (std::size_t q = 0; q < Q; ++q) {
      row[q] = acc[q] / s;
      res.s_theta2 += row[q] * nodes[q] * nodes[q];
    }
    for (std::size_t i = 0; i < I; ++i) {
      const auto& c = m.cell(p, i);
      if (!c) continue;
      std::size_t stride = res.counts[i].size() / Q;
      double* cnt = res.counts[i].data() + *c;
      for (std::size_t q = 0; q < Q; ++q) cnt[q * stride] += row[q];
    }
  }
  return res;
}

// Expected complete-data log-likelihood for one item given expected counts.
inline double item_objective(const std::vector<double>& counts,
                             const std::vector<double>& nodes,
                             const std::vector<double>& deltas) {
  std::size_t Q = nodes.size();
  std::size_t stride = deltas.size() + 1;
  std::vector<double> logp(stride);
  double obj = 0;
  for (std::size_t q = 0; q < Q; ++q) {
    log_category_probabilities(nodes[q], deltas, logp.data());
    for (std::size_t x = 0; x < stride; ++x) {
      double c = counts[q * stride + x];
      if (c > 0) obj += c * logp[x];
    }
  }
  return obj;
}

inline void item_gradient(const std::vector<double>& counts,
                          const std::vector<double>& nodes,
                          const std::vector<double>& deltas,
                          std::vector<double>& grad,
                          std::vector<double>* hess /* m x m row-major */) {
  std::size_t Q = nodes.size();
  std::size_t m = deltas.size();
  std::size_t stride = m + 1;
  // R_k = Σ observed counts with x ≥ k, a constant of the data.
  std::vector<double> R(m, 0.0);
  std::vector<double> nq(Q, 0.0);
  for (std::size_t q = 0; q < Q; ++q) {
    for (std::size_t x = 0; x < stride; ++x) {
      double c = counts[q * stride + x];
      nq[q] += c;
      for (std::size_t k = 1; k <= x; ++k) R[k - 1] += c;
    }
  }
  grad.assign(m, 0.0);
  if (hess) hess->assign(m * m, 0.0);
  std::vector<double> logp(stride), cum(m + 1);
  for (std::size_t q = 0; q < Q; ++q) {
    if (nq[q] == 0) continue;
    log_category_probabilities(nodes[q], deltas, logp.data());
    // cum[k] = P(X ≥ k), k = 1..m
    double tail = 0;
    for (std::size_t x = m + 1; x-- > 1;) {
      tail += std::exp(logp[x]);
      cum[x] = tail;
    }
    for (std::size_t k = 0; k < m; ++k) grad[k] += nq[q] * cum[k + 1];
    if (hess) {
      for (std::size_t k = 0; k < m; ++k) {
        for (std::size_t j = 0; j < m; ++j) {
          double ck = cum[k + 1], cj = cum[j + 1];
          double cmax = cum[std::max(k, j) + 1];
          (*hess)[k * m + j] += nq[q] * (ck * cj - cmax);
        }
      }
    }
  }
  for (std::size_t k = 0; k < m; ++k) grad[k] -= R[k];
}

// Solve A x = b for small m by Gaussian elimination with partial pivoting.
inline bool solve_small(std::vector<double> A, std::vector<double> b,
                        std::size_t m, std::vector<double>& x) {
  for (std::size_t col = 0; col < m; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < m; ++r) {
      if (std::fabs(A[r * m + col]) > std::fabs(A[piv * m + col])) piv = r;
    }
    if (std::fabs(A[piv * m + col]) < 1e-300) return false;
    if (piv != col) {
      for (std::size_t c = 0; c < m; ++c) std::swap(A[piv * m + c], A[col * m + c]);
      std::swap(b[piv], b[col]);
    }
    for (std::size_t r = col + 1; r < m; ++r) {
      double f = A[r * m + col] / A[col * m + col];
      for (std::size_t c = col; c < m; ++c) A[r * m + c] -= f * A[col * m + c];
      b[r] -= f * b[col];
    }
  }
  x.assign(m, 0.0);
  for (std::size_t r = m; r-- > 0;) {
    double s = b[r];
    for (std::size_t c = r + 1; c < m; ++c) s -= A[r * m + c] * x[c];
    x[r] = s / A[r * m + r];
  }
  return true;
}

// Per-coordinate bisection on the gradient; the objective is concave so each
// partial is decreasing in its own delta. Fallback when Newton stalls.
inline void item_bisection(const std::vector<double>& counts,
                           const std::vector<double>& nodes,
                           std::vector<double>& deltas) {
  std::size_t m = deltas.size();
  std::vector<double> grad;
  for (int cycle = 0; cycle < 60; ++cycle) {
    double moved = 0;
    for (std::size_t k = 0; k < m; ++k) {
      double width = 4;
      double lo = deltas[k] - width, hi = deltas[k] + width;
      auto gk = [&](double v) {
        std::vector<double> d = deltas;
        d[k] = v;
        item_gradient(counts, nodes, d, grad, nullptr);
        return grad[k];
      };
      while (gk(lo) < 0 && width < 128) {
        width *= 2;
        lo = deltas[k] - width;
      }
      while (gk(hi) > 0 && width < 128) {
        width *= 2;
        hi = deltas[k] + width;
      }
      double before = deltas[k];
      for (int it = 0; it < 80 && hi - lo > 1e-11; ++it) {
        double mid = 0.5 * (lo + hi);
        if (gk(mid) > 0) lo = mid;
        else hi = mid;
      }
      deltas[k] = 0.5 * (lo + hi);
      moved = std::max(moved, std::fabs(deltas[k] - before));
    }
    if (moved < 1e-10) break;
  }
}

// Newton-Raphson with step halving on the expected complete-data objective.
inline void item_m_step(const std::vector<double>& counts,
                        const std::vector<double>& nodes,
                        std::vector<double>& deltas) {
  std::size_t m = deltas.size();
  double total = 0;
  for (double c : counts) total += c;
  std::vector<double> grad, hess, step;
  for (int iter = 0; iter < 100; ++iter) {
    item_gradient(counts, nodes, deltas, grad, &hess);
    double gmax = 0;
    for (double g : grad) gmax = std::max(gmax, std::fabs(g));
    if (gmax < 1e-9 * (1.0 + total)) return;
    // Newton direction: solve H s = -g (H negative definite).
    for (std::size_t k = 0; k < m; ++k) hess[k * m + k] -= 1e-12 * (1.0 + total);
    std::vector<double> rhs(grad);
    for (auto& v : rhs) v = -v;
    if (!solve_small(hess, rhs, m, step)) {
      item_bisection(counts, nodes, deltas);
      return;
    }
    double base = item_objective(counts, nodes, deltas);
    double scale = 1.0;
    int halvings = 0;
    std::vector<double> trial(m);
    for (;; ++halvings) {
      if (halvings >= 50) {
        item_bisection(counts, nodes, deltas);
        return;
      }
      for (std::size_t k = 0; k < m; ++k) trial[k] = deltas[k] + scale * step[k];
      if (item_objective(counts, nodes, trial) >=
          base - 1e-12 * (1.0 + std::fabs(base))) {
        break;
      }
      scale *= 0.5;
    }
    deltas = trial;
  }
}

// Exact variance M-step: choose σ² so the prior's second moment over the
// fixed nodes matches the posterior's, S/N. With u = 1/(2σ²) the moment is
// strictly decreasing in u, so bisection on log u is safe.
inline double solve_variance(const std::vector<double>& nodes, double target) {
  auto moment = [&](double u) {
    double num = 0, den = 0;
    for (double t : nodes) {
      double w = std::exp(-u * t * t);
      num += w * t * t;
      den += w;
    }
    return num / den;
  };
  double lo = std::log(1e-6), hi = std::log(1e6);
  if (moment(std::exp(lo)) <= target) return 1.0 / (2.0 * std::exp(lo));
  if (moment(std::exp(hi)) >= target) return 1.0 / (2.0 * std::exp(hi));
  for (int it = 0; it < 200 && hi - lo > 1e-14; ++it) {
    double mid = 0.5 * (lo + hi);
    if (moment(std::exp(mid)) > target) lo = mid;
    else hi = mid;
  }
  return 1.0 / (2.0 * std::exp(0.5 * (lo + hi)));
}

inline constexpr std::size_t kEStepChunk = 64;

}  // namespace detail

// The matrix fit_pcm actually models: credits remapped by the same
// deterministic collapse plan the estimator derives. Lets callers rebuild a
// fit's working matrix from the raw one saved on disk.
inline ResponseMatrix working_matrix(const ResponseMatrix& input,
                                     bool collapse = true) {
  auto plan = detail::analyze_categories(input, collapse);
  ResponseMatrix out = input;
  for (std::size_t i = 0; i < input.items.size(); ++i) {
    for (std::size_t p = 0; p < input.persons.size(); ++p) {
      auto& c = out.cell(p, i);
      if (c) c = plan.map[i][*c];
    }
  }
  return out;
}

// MML-EM fit of the partial credit model. Latent mean fixed at 0, variance
// estimated by an exact moment-matching M-step on a grid that stays fixed
// within a run, which keeps the marginal log-likelihood non-decreasing
// across iterations. If the estimated SD drifts far from the grid's design
// SD, the grid is rebuilt around it and EM restarts warm (bounded retries);
// reported iterations and trace refer to the final grid.
inline PcmFit fit_pcm(const ResponseMatrix& input, const FitConfig& config = {}) {
  if (config.tolerance <= 0) throw ValidationError("fit_pcm: tolerance must be positive");
  if (config.max_iter < 1) throw ValidationError("fit_pcm: max_iter must be >= 1");
  if (config.initial_sd <= 0) throw ValidationError("fit_pcm: initial_sd must be positive");
  if (input.persons.empty()) throw ValidationError("fit_pcm: no persons");
  if (input.items.empty()) throw ValidationError("fit_pcm: no items");

  auto plan = detail::analyze_categories(input, config.collapse_null_categories);

  PcmFit fit;
  fit.matrix = working_matrix(input, config.collapse_null_categories);
  std::size_t P = input.persons.size(), I = input.items.size();
  fit.persons = input.persons;
  fit.warnings = plan.warnings;
  for (std::size_t i = 0; i < I; ++i) {
    PcmItemParams params;
    params.item = input.items[i];
    params.deltas.assign(plan.item_m[i], 0.0);
    fit.items.push_back(std::move(params));
  }

  std::size_t Q = static_cast<std::size_t>(config.nodes);
  double sd0 = config.initial_sd;
  double variance = sd0 * sd0;

  for (int attempt = 0;; ++attempt) {
    QuadratureGrid grid = QuadratureGrid::make(config.nodes, sd0, config.span_sds);
    grid.reweight(variance);
    fit.posterior.assign(P, std::vector<double>(Q, 0.0));
    fit.ll_trace.clear();
    fit.iterations = 0;
    fit.converged = false;

    std::vector<double> logw(Q);
    std::vector<std::vector<double>> logp(I);
    auto refresh_logw = [&] {
      grid.reweight(variance);
      for (std::size_t q = 0; q < Q; ++q) logw[q] = std::log(grid.weights[q]);
    };
    auto refresh_logp = [&] {
      for (std::size_t i = 0; i < I; ++i) {
        std::size_t stride = fit.items[i].deltas.size() + 1;
        logp[i].resize(Q * stride);
        for (std::size_t q = 0; q < Q; ++q) {
          log_category_probabilities(grid.nodes[q], fit.items[i].deltas,
                                     logp[i].data() + q * stride);
        }
      }
    };
    auto run_e_step = [&]() -> detail::EStepResult {
      std::size_t chunks = (P + detail::kEStepChunk - 1) / detail::kEStepChunk;
      std::vector<detail::EStepResult> parts(chunks);
      auto run_chunk = [&](std::size_t c) {
        std::size_t b = c * detail::kEStepChunk;
        std::size_t e = std::min(P, b + detail::kEStepChunk);
        parts[c] = detail::e_step_range(fit.matrix, logp, logw, grid.nodes, b, e,
                                        fit.posterior);
      };
      if (config.fast && chunks > 1) {
        std::vector<std::future<void>> futs;
        for (std::size_t c = 0; c < chunks; ++c) {
          futs.push_back(std::async(std::launch::async, run_chunk, c));
        }
        for (auto& f : futs) f.get();
      } else {
        for (std::size_t c = 0; c < chunks; ++c) run_chunk(c);
      }
      // Fixed-order merge: chunk 0, 1, 2, ... regardless of execution order.
      detail::EStepResult merged = std::move(parts[0]);
      for (std::size_t c = 1; c < chunks; ++c) {
        merged.ll += parts[c].ll;
        merged.s_theta2 += parts[c].s_theta2;
        for (std::size_t i = 0; i < I; ++i) {
          for (std::size_t k = 0; k < merged.counts[i].size(); ++k) {
            merged.counts[i][k] += parts[c].counts[i][k];
          }
        }
      }
      return merged;
    };

    refresh_logw();
    for (int iter = 0; iter < config.max_iter; ++iter) {
      refresh_logp();
      auto e = run_e_step();
      fit.ll_trace.push_back(e.ll);
      double change = 0;
      for (std::size_t i = 0; i < I; ++i) {
        std::vector<double> before = fit.items[i].deltas;
        detail::item_m_step(e.counts[i], grid.nodes, fit.items[i].deltas);
        for (std::size_t k = 0; k < before.size(); ++k) {
          change = std::max(change, std::fabs(before[k] - fit.items[i].deltas[k]));
        }
      }
      double new_variance =
          detail::solve_variance(grid.nodes, e.s_theta2 / static_cast<double>(P));
      change = std::max(change, std::fabs(new_variance - variance));
      variance = new_variance;
      refresh_logw();
      fit.iterations = iter + 1;
      if (change < config.tolerance) {
        fit.converged = true;
        break;
      }
    }
    // Final E-step so the reported likelihood and posteriors match the
    // returned parameters.
    refresh_logp();
    auto final_e = run_e_step();
    fit.ll_trace.push_back(final_e.ll);
    fit.log_likelihood = final_e.ll;
    fit.latent.variance = variance;
    fit.grid = grid;

    double sd_hat = std::sqrt(variance);
    bool grid_stale = sd_hat > 1.25 * sd0 || sd_hat < 0.6 * sd0;
    if (grid_stale && attempt < config.max_grid_rebuilds) {
      sd0 = sd_hat;
      fit.grid_rebuilds = attempt + 1;
      continue;  // warm restart: keep deltas and variance
    }
    break;
  }
  return fit;
}

struct PersonAbility {
  std::string respondent_id;
  double theta = 0;
  double psd = 0;

  bool operator==(const PersonAbility&) const = default;
};

// EAP ability and posterior SD per person. The matrix must be the fit's
// working matrix (fit.matrix); responses above an item's top category are
// rejected to catch accidentally passing the uncollapsed input.
inline std::vector<PersonAbility> eap_abilities(const PcmFit& fit,
                                                const ResponseMatrix& matrix) {
  if (matrix.items.size() != fit.items.size()) {
    throw ValidationError("eap_abilities: item count mismatch with fit");
  }
  for (std::size_t i = 0; i < matrix.items.size(); ++i) {
    if (!(matrix.items[i] == fit.items[i].item)) {
      throw ValidationError("eap_abilities: item mismatch at column " +
                            std::to_string(i));
    }
  }
  std::size_t Q = fit.grid.nodes.size();
  std::vector<double> logw(Q);
  for (std::size_t q = 0; q < Q; ++q) logw[q] = std::log(fit.grid.weights[q]);
  std::vector<std::vector<double>> logp(fit.items.size());
  for (std::size_t i = 0; i < fit.items.size(); ++i) {
    std::size_t stride = fit.items[i].deltas.size() + 1;
    logp[i].resize(Q * stride);
    for (std::size_t q = 0; q < Q; ++q) {
      log_category_probabilities(fit.grid.nodes[q], fit.items[i].deltas,
                                 logp[i].data() + q * stride);
    }
  }
  std::vector<PersonAbility> out;
  std::vector<double> acc(Q);
  for (std::size_t p = 0; p < matrix.persons.size(); ++p) {
    if (matrix.observed_count(p) == 0) {
      throw ValidationError("person " + matrix.persons[p] + ": no responses");
    }
    acc = logw;
    for (std::size_t i = 0; i < matrix.items.size(); ++i) {
      const auto& c = matrix.cell(p, i);
      if (!c) continue;
      std::size_t stride = fit.items[i].deltas.size() + 1;
      if (*c < 0 || static_cast<std::size_t>(*c) >= stride) {
        throw ValidationError(
            "eap_abilities: response exceeds item top category for " +
            matrix.items[i].id() + "; pass the fit's working matrix");
      }
      const double* tbl = logp[i].data();
      for (std::size_t q = 0; q < Q; ++q) acc[q] += tbl[q * stride + *c];
    }
    double mx = acc[0];
    for (std::size_t q = 1; q < Q; ++q) mx = std::max(mx, acc[q]);
    double den = 0, m1 = 0, m2 = 0;
    for (std::size_t q = 0; q < Q; ++q) {
      double f = std::exp(acc[q] - mx);
      den += f;
      m1 += f * fit.grid.nodes[q];
      m2 += f * fit.grid.nodes[q] * fit.grid.nodes[q];
    }
    m1 /= den;
    m2 /= den;
    PersonAbility a;
    a.respondent_id = matrix.persons[p];
    a.theta = m1;
    a.psd = std::sqrt(std::max(0.0, m2 - m1 * m1));
    out.push_back(std::move(a));
  }
  return out;
}

// --- fit report serialization ---

inline std::string save_fit_json(const PcmFit& fit) {
  nlohmann::ordered_json j;
  j["model"] = "pcm";
  j["dimension"] = std::string(to_string(fit.matrix.dimension));
  j["latent_variance"] = fit.latent.variance;
  j["log_likelihood"] = fit.log_likelihood;
  j["iterations"] = fit.iterations;
  j["converged"] = fit.converged;
  j["grid_rebuilds"] = fit.grid_rebuilds;
  j["quadrature"] = {{"nodes", fit.grid.nodes}, {"weights", fit.grid.weights}};
  j["items"] = nlohmann::ordered_json::array();
  for (const auto& it : fit.items) {
    nlohmann::ordered_json ij;
    ij["id"] = it.item.id();
    ij["m"] = it.m();
    ij["deltas"] = it.deltas;
    ij["gammas"] = thurstonian_thresholds(it).gammas;
    j["items"].push_back(std::move(ij));
  }
  j["warnings"] = fit.warnings;
  return j.dump(2) + "\n";
}

// Rebuilds the parts of a fit needed downstream (abilities, maps,
// diagnostics). Posteriors are recomputed on demand from a matrix.
inline PcmFit parse_fit_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("fit report: invalid JSON: ") + e.what());
  }
  try {
    if (j.at("model").get<std::string>() != "pcm") {
      throw ValidationError("fit report: unknown model");
    }
    PcmFit fit;
    fit.latent.variance = j.at("latent_variance").get<double>();
    fit.log_likelihood = j.at("log_likelihood").get<double>();
    fit.iterations = j.at("iterations").get<int>();
    fit.converged = j.at("converged").get<bool>();
    fit.grid_rebuilds = j.value("grid_rebuilds", 0);
    fit.grid.nodes = j.at("quadrature").at("nodes").get<std::vector<double>>();
    fit.grid.weights = j.at("quadrature").at("weights").get<std::vector<double>>();
    if (fit.grid.nodes.size() != fit.grid.weights.size() || fit.grid.nodes.empty()) {
      throw ValidationError("fit report: malformed quadrature");
    }
    for (const auto& ij : j.at("items")) {
      PcmItemParams params;
      params.item = parse_item_id(ij.at("id").get<std::string>());
      params.deltas = ij.at("deltas").get<std::vector<double>>();
      if (params.deltas.empty()) {
        throw ValidationError("fit report: item with no deltas");
      }
      fit.items.push_back(std::move(params));
    }
    if (fit.items.empty()) throw ValidationError("fit report: no items");
    fit.warnings = j.value("warnings", std::vector<std::string>{});
    fit.matrix.dimension =
        parse_dimension_key(j.at("dimension").get<std::string>());
    return fit;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("fit report: ") + e.what());
  }
}

inline PcmFit load_fit_json(const std::filesystem::path& p) {
  try {
    return parse_fit_json(read_text_file(p));
  } catch (const ValidationError& e) {
    throw ValidationError(p.string() + ": " + e.what());
  }
}

inline constexpr std::string_view kAbilitiesHeader = "respondent_id,theta,psd";

inline std::string save_abilities(const std::vector<PersonAbility>& abilities) {
  std::string out = std::string(kAbilitiesHeader) + "\n";
  for (const auto& a : abilities) {
    out += csv_row({a.respondent_id, fixed(a.theta, 5), fixed(a.psd, 5)});
  }
  return out;
}

inline std::vector<PersonAbility> parse_abilities(std::string_view text) {
  auto rows = parse_csv(text);
  if (rows.empty()) throw ValidationError("abilities CSV: empty file");
  detail::check_header(rows[0], kAbilitiesHeader, "abilities CSV");
  std::vector<PersonAbility> out;
  std::set<std::string> seen;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() != 3) {
      throw ValidationError("row " + std::to_string(r) + ": expected 3 fields");
    }
    PersonAbility a;
    a.respondent_id = row[0];
    try {
      a.theta = std::stod(row[1]);
      a.psd = std::stod(row[2]);
    } catch (const std::exception&) {
      throw ValidationError("row " + std::to_string(r) + ": malformed number");
    }
    if (!seen.insert(a.respondent_id).second) {
      throw ValidationError("row " + std::to_string(r) + ": duplicate respondent " +
                            a.respondent_id);
    }
    out.push_back(std::move(a));
  }
  return out;
}

inline std::vector<PersonAbility> load_abilities(const std::filesystem::path& p) {
  try {
    return parse_abilities(read_text_file(p));
  } catch (const ValidationError& e) {
    throw ValidationError(p.string() + ": " + e.what());
  }
}

}  // namespace adqc
