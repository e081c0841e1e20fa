#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <vector>

#include "adqc/pcm.hpp"
#include "adqc/rng.hpp"
#include "adqc/simulate.hpp"

#include "test_support.hpp"

using namespace adqc;
using Catch::Approx;
using Catch::Matchers::ContainsSubstring;

namespace {

// Independent probability oracle: direct exponentials, no log-space tricks.
// Numerator for category x is exp(sum_{k<=x}(theta - delta_k)).
std::vector<double> oracle_probs(double theta, const std::vector<double>& deltas) {
  std::vector<double> numer{1.0};
  double cum = 0.0;
  for (double d : deltas) {
    cum += theta - d;
    numer.push_back(std::exp(cum));
  }
  double z = std::accumulate(numer.begin(), numer.end(), 0.0);
  for (auto& v : numer) v /= z;
  return numer;
}

// Same for the marginal likelihood: plain products, weights renormalized from
// the normal density by hand.
double oracle_mll(const ResponseMatrix& m, const std::vector<PcmItemParams>& items,
                  double variance, const QuadratureGrid& grid) {
  std::vector<double> w(grid.nodes.size());
  double sum = 0;
  for (std::size_t q = 0; q < grid.nodes.size(); ++q) {
    w[q] = std::exp(-grid.nodes[q] * grid.nodes[q] / (2 * variance));
    sum += w[q];
  }
  for (auto& v : w) v /= sum;
  double total = 0;
  for (std::size_t p = 0; p < m.persons.size(); ++p) {
    double lik = 0;
    for (std::size_t q = 0; q < grid.nodes.size(); ++q) {
      double prod = w[q];
      for (std::size_t i = 0; i < m.items.size(); ++i) {
        const auto& c = m.cell(p, i);
        if (!c) continue;
        prod *= oracle_probs(grid.nodes[q], items[i].deltas)[*c];
      }
      lik += prod;
    }
    total += std::log(lik);
  }
  return total;
}

PcmItemParams item_with(std::vector<double> deltas, const char* video = "v01") {
  PcmItemParams p;
  p.item = {video, "human", DimensionKey::Accurate};
  p.deltas = std::move(deltas);
  return p;
}

ResponseMatrix small_matrix() {
  ResponseMatrix m;
  m.dimension = DimensionKey::Accurate;
  m.persons = {"p1", "p2", "p3", "p4"};
  m.items = {{"v01", "gpt", DimensionKey::Accurate},
             {"v01", "human", DimensionKey::Accurate},
             {"v02", "gpt", DimensionKey::Accurate}};
  m.cells = {0, 1, 2,
             2, 2, 1,
             1, std::nullopt, 0,
             2, 0, 2};
  return m;
}

}  // namespace

TEST_CASE("category probabilities match the independent oracle") {
  // Pinned point: theta = 1 with both steps at 0.
  auto probs = category_probabilities(1.0, item_with({0.0, 0.0}));
  REQUIRE(probs.size() == 3);
  CHECK(probs[0] == Approx(0.09003).margin(1e-5));
  CHECK(probs[1] == Approx(0.24473).margin(1e-5));
  CHECK(probs[2] == Approx(0.66524).margin(1e-5));

  SplitMix64 rng(314159);
  for (int trial = 0; trial < 10000; ++trial) {
    double theta = -4.0 + 8.0 * rng.uniform();
    std::size_t m = 1 + rng.below(4);
    std::vector<double> deltas;
    for (std::size_t k = 0; k < m; ++k) deltas.push_back(-3.0 + 6.0 * rng.uniform());
    auto got = category_probabilities(theta, item_with(deltas));
    auto want = oracle_probs(theta, deltas);
    REQUIRE(got.size() == want.size());
    double sum = 0;
    for (std::size_t x = 0; x < got.size(); ++x) {
      CHECK(got[x] == Approx(want[x]).margin(1e-12));
      sum += got[x];
    }
    CHECK(std::abs(sum - 1.0) < 1e-12);
  }
}

TEST_CASE("probabilities survive extreme parameters") {
  // Far tails must not overflow; category shares go to 0/1 cleanly.
  auto lo = category_probabilities(-700.0, item_with({0.0, 0.0}));
  CHECK(lo[0] == Approx(1.0).margin(1e-12));
  auto hi = category_probabilities(700.0, item_with({0.0, 0.0}));
  CHECK(hi[2] == Approx(1.0).margin(1e-12));
  for (double p : lo) CHECK(std::isfinite(p));
  for (double p : hi) CHECK(std::isfinite(p));

  CHECK_THROWS_AS(category_probabilities(std::nan(""), item_with({0.0})),
                  ValidationError);
  CHECK_THROWS_AS(category_probabilities(0.0, item_with({std::nan("")})),
                  ValidationError);
}

TEST_CASE("probability symmetry and translation invariance") {
  SplitMix64 rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    double theta = -3.0 + 6.0 * rng.uniform();
    std::vector<double> deltas = {-2.0 + 4.0 * rng.uniform(),
                                  -2.0 + 4.0 * rng.uniform()};
    auto p = category_probabilities(theta, item_with(deltas));

    // Mirroring theta and reversing negated steps flips the category order.
    auto q = category_probabilities(-theta,
                                    item_with({-deltas[1], -deltas[0]}));
    CHECK(p[0] == Approx(q[2]).margin(1e-12));
    CHECK(p[1] == Approx(q[1]).margin(1e-12));
    CHECK(p[2] == Approx(q[0]).margin(1e-12));

    // Shifting theta and every step together changes nothing.
    double c = -1.0 + 2.0 * rng.uniform();
    auto r = category_probabilities(theta + c,
                                    item_with({deltas[0] + c, deltas[1] + c}));
    for (int x = 0; x < 3; ++x) CHECK(p[x] == Approx(r[x]).margin(1e-12));
  }
}

TEST_CASE("thresholds solve a closed-form case") {
  // With both steps at zero, P(X>=1) = 0.5 at exp(theta) = (sqrt(5)-1)/2.
  double expected = std::log((std::sqrt(5.0) - 1.0) / 2.0);
  auto th = thurstonian_thresholds(item_with({0.0, 0.0}));
  REQUIRE(th.gammas.size() == 2);
  CHECK(th.gammas[0] == Approx(expected).margin(1e-9));
  CHECK(th.gammas[1] == Approx(-expected).margin(1e-9));
  CHECK(th.gammas[0] == Approx(-0.4812118250596).margin(1e-9));
}

TEST_CASE("thresholds satisfy their defining equation and ordering") {
  SplitMix64 rng(271828);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> deltas = {-2.5 + 5.0 * rng.uniform(),
                                  -2.5 + 5.0 * rng.uniform()};
    auto item = item_with(deltas);
    auto th = thurstonian_thresholds(item);
    REQUIRE(th.gammas.size() == 2);
    CHECK(th.gammas[0] <= th.gammas[1] + 1e-12);
    for (int k = 1; k <= 2; ++k) {
      auto p = category_probabilities(th.gammas[k - 1], item);
      double at_least = 0;
      for (int x = k; x <= 2; ++x) at_least += p[x];
      CHECK(std::abs(at_least - 0.5) < 1e-8);
    }
  }
}

TEST_CASE("thresholds translate with the step parameters") {
  auto base = thurstonian_thresholds(item_with({-0.7, 0.4}));
  auto shifted = thurstonian_thresholds(item_with({-0.7 + 1.3, 0.4 + 1.3}));
  for (std::size_t k = 0; k < base.gammas.size(); ++k) {
    CHECK(shifted.gammas[k] == Approx(base.gammas[k] + 1.3).margin(1e-9));
  }
}

TEST_CASE("quadrature grid shape and reweighting") {
  auto g = QuadratureGrid::make(61, 1.0, 5.0);
  REQUIRE(g.nodes.size() == 61);
  CHECK(g.nodes.front() == Approx(-5.0));
  CHECK(g.nodes.back() == Approx(5.0));
  CHECK(g.nodes[30] == Approx(0.0).margin(1e-12));
  CHECK(std::is_sorted(g.nodes.begin(), g.nodes.end()));
  double sum = std::accumulate(g.weights.begin(), g.weights.end(), 0.0);
  CHECK(sum == Approx(1.0).margin(1e-12));
  // Symmetric nodes carry symmetric weights.
  for (std::size_t q = 0; q < 30; ++q) {
    CHECK(g.weights[q] == Approx(g.weights[60 - q]).margin(1e-15));
  }
  // Reweighting tracks the normal density ratio.
  g.reweight(4.0);
  double ratio = g.weights[30] / g.weights[36];  // nodes 0 and 1
  CHECK(ratio == Approx(std::exp(1.0 / 8.0)).margin(1e-9));

  CHECK_THROWS_AS(QuadratureGrid::make(2, 1.0, 5.0), ValidationError);
  CHECK_THROWS_AS(QuadratureGrid::make(61, -1.0, 5.0), ValidationError);
  CHECK_THROWS_AS(g.reweight(0.0), ValidationError);
}

TEST_CASE("marginal log-likelihood matches the direct oracle") {
  auto m = small_matrix();
  std::vector<PcmItemParams> items;
  for (const auto& it : m.items) {
    PcmItemParams p;
    p.item = it;
    items.push_back(p);
  }
  items[0].deltas = {-0.5, 0.3};
  items[1].deltas = {0.2, 0.9};
  items[2].deltas = {-1.1, -0.2};
  auto grid = QuadratureGrid::make(21, 1.0, 4.0);
  for (double variance : {0.5, 1.0, 2.0}) {
    double got = marginal_log_likelihood(m, items, {variance}, grid);
    double want = oracle_mll(m, items, variance, grid);
    CHECK(got == Approx(want).margin(1e-10));
  }
  CHECK_THROWS_AS(marginal_log_likelihood(m, {items[0]}, {1.0}, grid),
                  ValidationError);
  CHECK_THROWS_AS(marginal_log_likelihood(m, items, {-1.0}, grid),
                  ValidationError);
}

TEST_CASE("fit recovers simulated parameters") {
  SimConfig config;
  config.n_persons = 400;
  config.seed = 11;
  auto rng = stream(config.seed, {"items"});
  config.items = random_item_params(12, rng);
  auto data = simulate_responses(config);

  auto fit = fit_pcm(data.matrix);
  CHECK(fit.converged);
  CHECK(fit.warnings.empty());

  std::vector<double> est, truth;
  for (std::size_t i = 0; i < fit.items.size(); ++i) {
    for (std::size_t k = 0; k < 2; ++k) {
      est.push_back(fit.items[i].deltas[k]);
      truth.push_back(config.items[i].deltas[k]);
    }
  }
  auto r = pearson(est, truth);
  REQUIRE(r.has_value());
  CHECK(*r > 0.9);
  double rmse = 0;
  for (std::size_t k = 0; k < est.size(); ++k) {
    rmse += (est[k] - truth[k]) * (est[k] - truth[k]);
  }
  rmse = std::sqrt(rmse / est.size());
  CHECK(rmse < 0.35);
  CHECK(fit.latent.variance == Approx(1.0).margin(0.4));

  // EAP abilities track the simulated thetas.
  auto abilities = eap_abilities(fit, fit.matrix);
  std::vector<double> eap;
  for (const auto& a : abilities) eap.push_back(a.theta);
  auto tr = pearson(eap, data.thetas);
  REQUIRE(tr.has_value());
  CHECK(*tr > 0.8);
}

TEST_CASE("em log-likelihood never decreases") {
  SimConfig config;
  config.n_persons = 150;
  config.seed = 23;
  auto rng = stream(config.seed, {"items"});
  config.items = random_item_params(6, rng);
  auto data = simulate_responses(config);

  auto fit = fit_pcm(data.matrix);
  REQUIRE(fit.ll_trace.size() >= 2);
  for (std::size_t t = 1; t < fit.ll_trace.size(); ++t) {
    CHECK(fit.ll_trace[t] >= fit.ll_trace[t - 1] - 1e-9);
  }
  // Reported likelihood matches the returned parameters exactly.
  double check = marginal_log_likelihood(fit.matrix, fit.items, fit.latent,
                                         fit.grid);
  CHECK(check == Approx(fit.log_likelihood).margin(1e-8));
}

TEST_CASE("equal raw scores on complete data earn equal abilities") {
  SimConfig config;
  config.n_persons = 120;
  config.seed = 5;
  auto rng = stream(config.seed, {"items"});
  config.items = random_item_params(5, rng);
  auto data = simulate_responses(config);

  auto fit = fit_pcm(data.matrix);
  auto abilities = eap_abilities(fit, fit.matrix);
  std::map<int, double> theta_by_score;
  for (std::size_t p = 0; p < data.matrix.persons.size(); ++p) {
    int raw = 0;
    for (std::size_t i = 0; i < data.matrix.items.size(); ++i) {
      raw += *data.matrix.cell(p, i);
    }
    auto [it, inserted] = theta_by_score.emplace(raw, abilities[p].theta);
    if (!inserted) {
      CHECK(abilities[p].theta == Approx(it->second).margin(1e-12));
    }
  }
  // And the mapping is monotone in the raw score.
  double prev = -1e9;
  for (const auto& [raw, theta] : theta_by_score) {
    CHECK(theta > prev);
    prev = theta;
  }
}

TEST_CASE("fits are deterministic and fast mode is bit-identical") {
  SimConfig config;
  config.n_persons = 200;  // several chunks
  config.seed = 77;
  auto rng = stream(config.seed, {"items"});
  config.items = random_item_params(6, rng);
  auto data = simulate_responses(config);

  auto a = fit_pcm(data.matrix);
  auto b = fit_pcm(data.matrix);
  FitConfig fast_cfg;
  fast_cfg.fast = true;
  auto c = fit_pcm(data.matrix, fast_cfg);

  CHECK(a.log_likelihood == b.log_likelihood);
  CHECK(a.log_likelihood == c.log_likelihood);
  for (std::size_t i = 0; i < a.items.size(); ++i) {
    for (std::size_t k = 0; k < a.items[i].deltas.size(); ++k) {
      // Bitwise equality, not approximate.
      CHECK(a.items[i].deltas[k] == b.items[i].deltas[k]);
      CHECK(a.items[i].deltas[k] == c.items[i].deltas[k]);
    }
  }
  CHECK(a.latent.variance == c.latent.variance);
  CHECK(a.posterior == c.posterior);
}

TEST_CASE("null categories: hard error by default, collapse on request") {
  // Nobody ever scores 0 on the second item.
  ResponseMatrix m;
  m.dimension = DimensionKey::Accurate;
  m.persons = {"p1", "p2", "p3", "p4", "p5", "p6"};
  m.items = {{"v01", "gpt", DimensionKey::Accurate},
             {"v01", "human", DimensionKey::Accurate}};
  m.cells = {0, 1, 1, 2, 2, 1, 0, 2, 1, 1, 2, 2};

  CHECK_THROWS_WITH(fit_pcm(m), ContainsSubstring("v01:human:accurate"));
  CHECK_THROWS_WITH(fit_pcm(m), ContainsSubstring("category 0"));

  FitConfig cfg;
  cfg.collapse_null_categories = true;
  auto fit = fit_pcm(m, cfg);
  REQUIRE(fit.warnings.size() == 1);
  CHECK_THAT(fit.warnings[0], ContainsSubstring("v01:human:accurate"));
  CHECK(fit.items[0].m() == 2);
  CHECK(fit.items[1].m() == 1);  // {1,2} merged down to {0,1}

  // The fit's working matrix holds the remapped credits.
  CHECK(*fit.matrix.cell(0, 1) == 0);
  CHECK(*fit.matrix.cell(1, 1) == 1);
  CHECK(working_matrix(m, true) == fit.matrix);

  // Handing eap the raw matrix is caught.
  CHECK_THROWS_WITH(eap_abilities(fit, m),
                    ContainsSubstring("working matrix"));
  CHECK_NOTHROW(eap_abilities(fit, fit.matrix));
}

TEST_CASE("degenerate inputs are rejected with names") {
  ResponseMatrix m = small_matrix();

  ResponseMatrix empty_person = m;
  empty_person.cells[2 * 3 + 0] = std::nullopt;
  empty_person.cells[2 * 3 + 2] = std::nullopt;
  CHECK_THROWS_WITH(fit_pcm(empty_person), ContainsSubstring("p3"));

  ResponseMatrix constant_item = m;
  for (std::size_t p = 0; p < 4; ++p) constant_item.cell(p, 0) = 1;
  CHECK_THROWS_WITH(fit_pcm(constant_item), ContainsSubstring("constant"));

  ResponseMatrix none;
  CHECK_THROWS_AS(fit_pcm(none), ValidationError);

  FitConfig bad;
  bad.tolerance = 0;
  CHECK_THROWS_AS(fit_pcm(m, bad), ValidationError);
  bad = {};
  bad.max_iter = 0;
  CHECK_THROWS_AS(fit_pcm(m, bad), ValidationError);
}

TEST_CASE("grid rebuilds when the variance outgrows the design sd") {
  SimConfig config;
  config.n_persons = 300;
  config.seed = 31;
  config.theta_variance = 6.25;  // sd 2.5, well past the 1.25x trigger
  auto rng = stream(config.seed, {"items"});
  config.items = random_item_params(10, rng);
  auto data = simulate_responses(config);

  auto fit = fit_pcm(data.matrix);
  CHECK(fit.grid_rebuilds >= 1);
  CHECK(fit.grid.nodes.back() > 5.0);  // widened past the default span
  CHECK(fit.converged);
  for (std::size_t t = 1; t < fit.ll_trace.size(); ++t) {
    CHECK(fit.ll_trace[t] >= fit.ll_trace[t - 1] - 1e-9);
  }
  CHECK(fit.latent.variance > 2.0);
}

TEST_CASE("fit report JSON round-trips the estimates") {
  SimConfig config;
  config.n_persons = 80;
  config.seed = 13;
  auto rng = stream(config.seed, {"items"});
  config.items = random_item_params(4, rng);
  auto data = simulate_responses(config);
  auto fit = fit_pcm(data.matrix);

  auto text = save_fit_json(fit);
  auto back = parse_fit_json(text);
  CHECK(back.latent.variance == fit.latent.variance);
  CHECK(back.log_likelihood == fit.log_likelihood);
  CHECK(back.iterations == fit.iterations);
  CHECK(back.converged == fit.converged);
  CHECK(back.grid.nodes == fit.grid.nodes);
  CHECK(back.grid.weights == fit.grid.weights);
  REQUIRE(back.items.size() == fit.items.size());
  for (std::size_t i = 0; i < fit.items.size(); ++i) {
    CHECK(back.items[i].item == fit.items[i].item);
    CHECK(back.items[i].deltas == fit.items[i].deltas);
  }
  CHECK(back.matrix.dimension == fit.matrix.dimension);

  // Abilities recomputed from the parsed fit agree exactly.
  auto a1 = eap_abilities(fit, fit.matrix);
  auto a2 = eap_abilities(back, fit.matrix);
  for (std::size_t p = 0; p < a1.size(); ++p) {
    CHECK(a1[p].theta == a2[p].theta);
    CHECK(a1[p].psd == a2[p].psd);
  }

  CHECK_THROWS_WITH(parse_fit_json("{"), ContainsSubstring("invalid JSON"));
  CHECK_THROWS_AS(parse_fit_json(R"({"model":"xyz"})"), ValidationError);
}

TEST_CASE("abilities CSV round-trips at five decimals") {
  std::vector<PersonAbility> abilities = {{"p1", 0.123456, 0.45}, {"p2", -1.5, 0.3}};
  auto text = save_abilities(abilities);
  auto back = parse_abilities(text);
  REQUIRE(back.size() == 2);
  CHECK(back[0].theta == Approx(0.12346).margin(1e-9));
  CHECK(back[0].psd == Approx(0.45).margin(1e-9));
  CHECK(back[1].respondent_id == "p2");

  CHECK_THROWS_WITH(parse_abilities("respondent_id,theta,psd\np1,x,1\n"),
                    ContainsSubstring("malformed number"));
  CHECK_THROWS_WITH(parse_abilities("respondent_id,theta,psd\np1,1,1\np1,2,1\n"),
                    ContainsSubstring("duplicate respondent"));
}

TEST_CASE("eap abilities guard their inputs") {
  auto m = small_matrix();
  auto fit = fit_pcm(m);

  ResponseMatrix wrong = m;
  wrong.items.pop_back();
  for (auto& c : wrong.cells) c = 1;
  wrong.cells.resize(wrong.persons.size() * wrong.items.size());
  CHECK_THROWS_WITH(eap_abilities(fit, wrong), ContainsSubstring("item count"));

  ResponseMatrix renamed = m;
  renamed.items[0].source = "qwen";
  CHECK_THROWS_WITH(eap_abilities(fit, renamed), ContainsSubstring("mismatch"));
}
