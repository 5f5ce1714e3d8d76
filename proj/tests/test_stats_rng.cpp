#include <doctest.h>

#include <cmath>
#include <thread>
#include <vector>

#include "ucts/montecarlo.hpp"
#include "ucts/rng.hpp"
#include "ucts/stats.hpp"

using namespace ucts;

TEST_CASE("normal quantile hits published values to 1e-10") {
  using stats::normal_quantile;
  CHECK(normal_quantile(0.5) == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(std::abs(normal_quantile(0.975) - 1.959963984540054) < 1e-10);
  CHECK(std::abs(normal_quantile(0.95) - 1.6448536269514722) < 1e-10);
  CHECK(std::abs(normal_quantile(0.995) - 2.5758293035489004) < 1e-10);
  CHECK(std::abs(normal_quantile(0.9) - 1.2815515655446004) < 1e-10);
  CHECK(std::abs(normal_quantile(1e-10) + 6.361340902404056) < 1e-9);
  CHECK(normal_quantile(0.025) == doctest::Approx(-normal_quantile(0.975)).epsilon(1e-13));
  CHECK_THROWS_AS(normal_quantile(0.0), RangeError);
  CHECK_THROWS_AS(normal_quantile(1.0), RangeError);
}

TEST_CASE("quantile and cdf are inverse") {
  for (double p : {0.001, 0.01, 0.2, 0.5, 0.77, 0.99, 0.9999}) {
    CHECK(stats::normal_cdf(stats::normal_quantile(p)) == doctest::Approx(p).epsilon(1e-12));
  }
}

TEST_CASE("chi-squared tail probabilities") {
  // chi2(2) has the closed form sf(x) = exp(-x/2).
  for (double x : {0.5, 2.0, 5.991, 9.21}) {
    CHECK(stats::chi_squared_sf(x, 2.0) == doctest::Approx(std::exp(-x / 2.0)).epsilon(1e-12));
  }
  // 95th percentile of chi2(24) is 36.415; classic table value.
  CHECK(stats::chi_squared_sf(36.415, 24.0) == doctest::Approx(0.05).epsilon(1e-3));
  CHECK(stats::chi_squared_cdf(0.0, 5.0) == 0.0);
}

TEST_CASE("F distribution cdf against known quantiles") {
  // F(10,10) median is 1, and P(F <= 2.978) = 0.95.
  CHECK(stats::f_cdf(1.0, 10, 10) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(stats::f_cdf(2.978, 10, 10) == doctest::Approx(0.95).epsilon(1e-3));
}

TEST_CASE("ols residuals are orthogonal to the regressors") {
  Eigen::MatrixXd X(6, 2);
  X << 1, 0, 1, 1, 1, 2, 1, 3, 1, 4, 1, 5;
  Eigen::VectorXd y(6);
  y << 1.0, 2.2, 2.9, 4.1, 5.2, 5.8;
  Eigen::VectorXd e = stats::ols_residuals(y, X);
  CHECK(std::abs((X.transpose() * e)(0)) < 1e-10);
  CHECK(std::abs((X.transpose() * e)(1)) < 1e-10);
}

TEST_CASE("rng streams are reproducible and decorrelated") {
  RngStream a(42, 0), b(42, 0), c(42, 1);
  std::vector<std::uint64_t> va, vb;
  for (int i = 0; i < 100; ++i) {
    va.push_back(a.next_u64());
    vb.push_back(b.next_u64());
  }
  CHECK(va == vb);
  // Different stream: different values.
  bool any_diff = false;
  for (int i = 0; i < 100; ++i) any_diff |= (c.next_u64() != va[static_cast<std::size_t>(i)]);
  CHECK(any_diff);
}

TEST_CASE("rng normal draws have the right first two moments") {
  RngStream rng(7, 3);
  const int n = 100000;
  double sum = 0.0, ss = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = rng.next_normal();
    sum += x;
    ss += x * x;
  }
  const double mean = sum / n;
  const double var = ss / n - mean * mean;
  CHECK(std::abs(mean) < 0.02);
  CHECK(var == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("disturbance streams for distinct replications are nearly uncorrelated") {
  const int n = 10000;
  RngStream s1(99, 11), s2(99, 12);
  double sum1 = 0.0, sum2 = 0.0, cross = 0.0, sq1 = 0.0, sq2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = s1.next_normal();
    const double y = s2.next_normal();
    sum1 += x;
    sum2 += y;
    cross += x * y;
    sq1 += x * x;
    sq2 += y * y;
  }
  const double corr = (cross / n - (sum1 / n) * (sum2 / n)) /
                      std::sqrt((sq1 / n - std::pow(sum1 / n, 2)) * (sq2 / n - std::pow(sum2 / n, 2)));
  CHECK(std::abs(corr) < 3.0 / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("parallel replication harness is deterministic across thread counts") {
  auto run_with = [](int threads) {
    std::vector<double> slots(200, 0.0);
    parallel_replications(200, threads, [&](int rep) {
      RngStream rng(5, static_cast<std::uint64_t>(rep));
      double acc = 0.0;
      for (int i = 0; i < 50; ++i) acc += rng.next_normal();
      slots[static_cast<std::size_t>(rep)] = acc;
    });
    return slots;
  };
  const auto serial = run_with(1);
  const auto parallel4 = run_with(4);
  CHECK(serial == parallel4);  // bit identical
}

TEST_CASE("parallel harness counts failures instead of dropping them") {
  const int failures = parallel_replications(10, 2, [&](int rep) {
    if (rep % 3 == 0) throw std::runtime_error("boom");
  });
  CHECK(failures == 4);
}
