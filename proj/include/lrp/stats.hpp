#pragma once

#include <cstdint>
#include <vector>

namespace lrp::stats {

struct TestResult {
  double statistic = 0.0;
  double dof = 0.0;
  double p_value = 1.0;
};

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_se = 0.0;
  double r2 = 0.0;
  int n = 0;
};

double mean(const std::vector<double>& v);
double variance(const std::vector<double>& v);  // unbiased
double quantile(std::vector<double> v, double q);  // linear interpolation
double median(const std::vector<double>& v);

double chi2_sf(double x, double dof);
double normal_cdf(double z);
double normal_quantile(double p);

// Two histograms over the same ordered bins; adjacent bins are merged until
// each merged bin holds at least `min_count` combined observations.
TestResult chi2_two_sample(const std::vector<double>& a, const std::vector<double>& b,
                           double min_count = 10.0);

// Goodness of fit of observed counts against expected probabilities; tail
// bins are merged so that every expected count is at least `min_expected`.
TestResult chi2_goodness_of_fit(const std::vector<double>& observed,
                                const std::vector<double>& probs,
                                double min_expected = 5.0);

// Pearson independence test on a contingency table (rows x cols). Sparse
// trailing rows/columns are merged into their neighbours first.
TestResult chi2_independence(std::vector<std::vector<double>> table,
                             double min_expected = 5.0);

double kolmogorov_sf(double lambda);
TestResult ks_two_sample(std::vector<double> a, std::vector<double> b);

// Anderson-Darling normality test with mean and variance estimated from the
// data; statistic is the small-sample adjusted A*^2.
TestResult anderson_darling_normal(std::vector<double> x);

LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y);

struct Interval {
  double lo = 0.0;
  double hi = 1.0;
};
Interval wilson_interval(int64_t successes, int64_t n, double z = 1.959963984540054);

double total_variation(const std::vector<double>& p, const std::vector<double>& q);

}  // namespace lrp::stats
