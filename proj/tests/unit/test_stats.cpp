#include <doctest.h>

#include <cmath>
#include <random>

#include "lrp/stats.hpp"

using namespace lrp::stats;

TEST_CASE("chi-square survival function matches tabulated quantiles") {
  // 95th percentiles of chi-square with 1, 5, 10 degrees of freedom.
  CHECK(chi2_sf(3.841458820694124, 1) == doctest::Approx(0.05).epsilon(1e-9));
  CHECK(chi2_sf(11.070497693516351, 5) == doctest::Approx(0.05).epsilon(1e-9));
  CHECK(chi2_sf(18.307038053275146, 10) == doctest::Approx(0.05).epsilon(1e-9));
}

TEST_CASE("kolmogorov survival function at known points") {
  // Q(1.3581) = 0.05, Q(1.6276) = 0.01.
  CHECK(kolmogorov_sf(1.3581) == doctest::Approx(0.05).epsilon(1e-3));
  CHECK(kolmogorov_sf(1.6276) == doctest::Approx(0.01).epsilon(1e-3));
  CHECK(kolmogorov_sf(0.0) == 1.0);
}

TEST_CASE("two-sample KS separates shifted samples and accepts equal ones") {
  std::mt19937_64 g(1);
  std::normal_distribution<double> n01;
  std::vector<double> a, b, c;
  for (int i = 0; i < 2000; ++i) {
    a.push_back(n01(g));
    b.push_back(n01(g));
    c.push_back(n01(g) + 0.3);
  }
  CHECK(ks_two_sample(a, b).p_value > 0.01);
  CHECK(ks_two_sample(a, c).p_value < 1e-6);
}

TEST_CASE("Anderson-Darling accepts normal data and rejects exponential data") {
  std::mt19937_64 g(2);
  std::normal_distribution<double> n01;
  std::exponential_distribution<double> e1;
  std::vector<double> a, b;
  for (int i = 0; i < 500; ++i) {
    a.push_back(3.0 + 2.0 * n01(g));
    b.push_back(e1(g));
  }
  CHECK(anderson_darling_normal(a).p_value > 0.01);
  CHECK(anderson_darling_normal(b).p_value < 1e-4);
}

TEST_CASE("chi-square independence: independent table passes, dependent fails") {
  std::vector<std::vector<double>> ind = {{250, 250}, {250, 250}, {100, 100}};
  CHECK(chi2_independence(ind).p_value > 0.99);
  std::vector<std::vector<double>> dep = {{400, 100}, {100, 400}};
  CHECK(chi2_independence(dep).p_value < 1e-10);
}

TEST_CASE("goodness of fit and two-sample chi-square") {
  std::vector<double> probs = {0.5, 0.25, 0.125, 0.125};
  std::vector<double> obs = {5000, 2500, 1250, 1250};
  CHECK(chi2_goodness_of_fit(obs, probs).p_value > 0.99);
  std::vector<double> bad = {4000, 3500, 1250, 1250};
  CHECK(chi2_goodness_of_fit(bad, probs).p_value < 1e-10);
  CHECK(chi2_two_sample(obs, obs).p_value > 0.99);
}

TEST_CASE("line fit recovers slope and intercept") {
  std::vector<double> x = {0, 1, 2, 3, 4}, y;
  for (double v : x) y.push_back(2.0 - 0.5 * v);
  LinearFit f = fit_line(x, y);
  CHECK(f.slope == doctest::Approx(-0.5));
  CHECK(f.intercept == doctest::Approx(2.0));
  CHECK(f.r2 == doctest::Approx(1.0));
}

TEST_CASE("Wilson interval contains the estimate and shrinks with n") {
  Interval a = wilson_interval(10, 100);
  Interval b = wilson_interval(1000, 10000);
  CHECK(a.lo < 0.1);
  CHECK(a.hi > 0.1);
  CHECK(b.hi - b.lo < a.hi - a.lo);
  Interval z = wilson_interval(0, 50);
  CHECK(z.lo == 0.0);
  CHECK(z.hi > 0.0);
}

TEST_CASE("quantiles and total variation") {
  CHECK(median({3, 1, 2}) == 2.0);
  CHECK(quantile({0, 10}, 0.25) == doctest::Approx(2.5));
  CHECK(total_variation({0.5, 0.5}, {1.0}) == doctest::Approx(0.5));
}
