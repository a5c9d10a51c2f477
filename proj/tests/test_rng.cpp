#include <catch2/catch_amalgamated.hpp>

#include <cstring>
#include <vector>

#include "ctrl/rng.hpp"
#include "support/oracles.hpp"

using ctrl::RngStream;

TEST_CASE("identical seeds give identical sequences", "[rng]") {
  RngStream a(42), b(42);
  for (int i = 0; i < 1000; ++i) REQUIRE(a.next_u64() == b.next_u64());

  RngStream c(7), d(7);
  for (int i = 0; i < 1000; ++i) {
    const double x = c.normal();
    const double y = d.normal();
    // bitwise, not approximate
    REQUIRE(std::memcmp(&x, &y, sizeof x) == 0);
  }
}

TEST_CASE("derived streams are independent of each other", "[rng]") {
  RngStream env = RngStream::derive(3, "env");
  RngStream agent = RngStream::derive(3, "agent");
  REQUIRE(env.state() != agent.state());

  // Draining one stream must not change what the other produces.
  RngStream agent2 = RngStream::derive(3, "agent");
  for (int i = 0; i < 500; ++i) env.uniform();
  for (int i = 0; i < 100; ++i) REQUIRE(agent.next_u64() == agent2.next_u64());
}

TEST_CASE("uniform lies in [0,1) and looks uniform", "[rng]") {
  RngStream r(11);
  const long n = 100000;
  std::vector<double> xs(n);
  for (auto& x : xs) {
    x = r.uniform();
    REQUIRE(x >= 0.0);
    REQUIRE(x < 1.0);
  }
  const double d = oracle::ks_statistic(xs, [](double x) { return x; });
  REQUIRE(d < oracle::ks_critical_one(n));
}

TEST_CASE("normal moments", "[rng]") {
  RngStream r(13);
  auto xs = r.sample_normal(200000);
  REQUIRE(oracle::mean(xs) == Catch::Approx(0.0).margin(0.01));
  REQUIRE(oracle::variance(xs) == Catch::Approx(1.0).margin(0.02));
}

TEST_CASE("beta(b,b) variance matches 1/(4(2b+1))", "[rng]") {
  // Closed form: symmetric Beta has mean 1/2, variance 1/(4(2b+1)).
  const long n = 100000;
  for (double b : {0.1, 0.5, 1.0}) {
    RngStream r(17);
    auto xs = r.sample_beta(b, n);
    for (double x : xs) {
      REQUIRE(x > 0.0);
      REQUIRE(x < 1.0);
    }
    const double want = 1.0 / (4.0 * (2.0 * b + 1.0));
    REQUIRE(oracle::mean(xs) == Catch::Approx(0.5).margin(0.01));
    REQUIRE(oracle::variance(xs) == Catch::Approx(want).margin(0.01));
  }
}

TEST_CASE("beta(1,1) is uniform", "[rng]") {
  RngStream r(19);
  const long n = 100000;
  auto xs = r.sample_beta(1.0, n);
  const double d = oracle::ks_statistic(xs, [](double x) { return x; });
  REQUIRE(d < oracle::ks_critical_one(n));
}

TEST_CASE("beta survives the 1e-4 shape floor", "[rng]") {
  RngStream r(23);
  auto xs = r.sample_beta(1e-4, 10000);
  for (double x : xs) {
    REQUIRE(x > 0.0);
    REQUIRE(x < 1.0);
    REQUIRE(std::isfinite(x));
  }
  // Nearly all mass should sit at the ends for such a small shape.
  long near_end = 0;
  for (double x : xs)
    if (x < 0.01 || x > 0.99) ++near_end;
  REQUIRE(near_end > 9900);
}

TEST_CASE("beta and its reflection agree in distribution", "[rng]") {
  RngStream r(29);
  const long n = 100000;
  auto eps = r.sample_beta(0.4, n);
  auto flipped = r.sample_beta(0.4, n);
  for (auto& x : flipped) x = 1.0 - x;
  const double d = oracle::ks_statistic2(eps, flipped);
  REQUIRE(d < oracle::ks_critical_two(n, n));
}

TEST_CASE("sample_beta rejects out-of-range shapes", "[rng]") {
  RngStream r(31);
  REQUIRE_THROWS_AS(r.sample_beta(0.0, 10), ctrl::InvalidInput);
  REQUIRE_THROWS_AS(r.sample_beta(-0.5, 10), ctrl::InvalidInput);
  REQUIRE_THROWS_AS(r.sample_beta(1.5, 10), ctrl::InvalidInput);
  REQUIRE_THROWS_AS(r.sample_beta(0.5, 0), ctrl::InvalidInput);
}

TEST_CASE("state can be captured and restored", "[rng]") {
  RngStream r(37);
  for (int i = 0; i < 17; ++i) r.uniform();
  const auto snap = r.state();
  std::vector<double> first;
  for (int i = 0; i < 50; ++i) first.push_back(r.normal());
  r.set_state(snap);
  for (int i = 0; i < 50; ++i) REQUIRE(r.normal() == first[i]);
}
