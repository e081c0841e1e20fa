#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <vector>

#include "adqc/rng.hpp"

#include "test_support.hpp"

using adqc::SplitMix64;

TEST_CASE("splitmix64 matches the published reference sequence") {
  // First three outputs for seed 0 from the reference implementation.
  SplitMix64 rng(0);
  CHECK(rng.next() == 0xE220A8397B1DCDAFull);
  CHECK(rng.next() == 0x6E789E6AA1B965F4ull);
  CHECK(rng.next() == 0x06C45D188009454Full);

  SplitMix64 rng2(0x123456789abcdefull);
  std::uint64_t first = rng2.next();
  SplitMix64 rng3(0x123456789abcdefull);
  CHECK(rng3.next() == first);
}

TEST_CASE("uniform stays in [0,1) and uniform_open avoids endpoints") {
  SplitMix64 rng(99);
  for (int i = 0; i < 20000; ++i) {
    double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    double v = rng.uniform_open();
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
}

TEST_CASE("below is unbiased and range-checked") {
  SplitMix64 rng(7);
  CHECK_THROWS_AS(rng.below(0), adqc::ValidationError);

  std::vector<int> counts(5, 0);
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) ++counts[rng.below(5)];
  for (int c : counts) {
    CHECK(std::abs(c / double(draws) - 0.2) < 0.01);
  }
}

TEST_CASE("shuffle is a permutation and hits all orders of three") {
  std::map<std::vector<int>, int> seen;
  SplitMix64 rng(123);
  for (int i = 0; i < 6000; ++i) {
    std::vector<int> v = {1, 2, 3};
    adqc::shuffle(v, rng);
    std::vector<int> s = v;
    std::sort(s.begin(), s.end());
    REQUIRE(s == std::vector<int>{1, 2, 3});
    ++seen[v];
  }
  CHECK(seen.size() == 6);
  for (const auto& [perm, n] : seen) {
    CHECK(std::abs(n / 6000.0 - 1.0 / 6.0) < 0.03);
  }
}

TEST_CASE("normal quantile matches tabulated values") {
  // Classic two-sided critical points.
  CHECK(adqc::normal_quantile(0.975) == Catch::Approx(1.9599639845).margin(1e-8));
  CHECK(adqc::normal_quantile(0.025) == Catch::Approx(-1.9599639845).margin(1e-8));
  CHECK(adqc::normal_quantile(0.9) == Catch::Approx(1.2815515655).margin(1e-8));
  CHECK(adqc::normal_quantile(0.1) == Catch::Approx(-1.2815515655).margin(1e-8));
  CHECK(adqc::normal_quantile(0.5) == Catch::Approx(0.0).margin(1e-12));
  // Tail branch.
  CHECK(adqc::normal_quantile(0.001) == Catch::Approx(-3.0902323062).margin(1e-7));
  CHECK(adqc::normal_quantile(0.999) == Catch::Approx(3.0902323062).margin(1e-7));

  CHECK_THROWS_AS(adqc::normal_quantile(0.0), adqc::ValidationError);
  CHECK_THROWS_AS(adqc::normal_quantile(1.0), adqc::ValidationError);
  CHECK_THROWS_AS(adqc::normal_quantile(-0.2), adqc::ValidationError);
}

TEST_CASE("normal draws have roughly the requested moments") {
  SplitMix64 rng(2024);
  const int n = 50000;
  double sum = 0, sumsq = 0;
  for (int i = 0; i < n; ++i) {
    double x = adqc::normal(rng, 1.5, 2.0);
    sum += x;
    sumsq += x * x;
  }
  double mean = sum / n;
  double var = sumsq / n - mean * mean;
  CHECK(mean == Catch::Approx(1.5).margin(0.05));
  CHECK(std::sqrt(var) == Catch::Approx(2.0).margin(0.05));
}

TEST_CASE("streams differ by key and ignore unrelated keys") {
  auto a = adqc::stream(42, {"alpha"});
  auto b = adqc::stream(42, {"beta"});
  CHECK(a.next() != b.next());

  // Same parts, same stream.
  auto c = adqc::stream(42, {"alpha"});
  auto d = adqc::stream(42, {"alpha"});
  CHECK(c.next() == d.next());

  // Multi-part keys must not collide with their concatenation.
  auto joined = adqc::stream(42, {"alphabeta"});
  auto split = adqc::stream(42, {"alpha", "beta"});
  CHECK(joined.next() != split.next());

  // Seed participates.
  auto s1 = adqc::stream(1, {"x"});
  auto s2 = adqc::stream(2, {"x"});
  CHECK(s1.next() != s2.next());
}
