#include "lrp/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/special_functions/gamma.hpp>

namespace lrp::stats {

double mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double variance(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

double quantile(std::vector<double> v, double q) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  double pos = q * static_cast<double>(v.size() - 1);
  auto lo = static_cast<size_t>(std::floor(pos));
  size_t hi = std::min(lo + 1, v.size() - 1);
  double frac = pos - static_cast<double>(lo);
  return v[lo] + frac * (v[hi] - v[lo]);
}

double median(const std::vector<double>& v) { return quantile(v, 0.5); }

double chi2_sf(double x, double dof) {
  if (dof <= 0.0) return 1.0;
  if (x <= 0.0) return 1.0;
  return boost::math::gamma_q(dof / 2.0, x / 2.0);
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double normal_quantile(double p) {
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

TestResult chi2_two_sample(const std::vector<double>& a, const std::vector<double>& b,
                           double min_count) {
  if (a.size() != b.size()) throw std::invalid_argument("histogram size mismatch");
  std::vector<double> ma, mb;
  double acc_a = 0.0, acc_b = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    acc_a += a[i];
    acc_b += b[i];
    if (acc_a + acc_b >= min_count) {
      ma.push_back(acc_a);
      mb.push_back(acc_b);
      acc_a = acc_b = 0.0;
    }
  }
  if (acc_a + acc_b > 0.0) {
    if (ma.empty()) {
      ma.push_back(acc_a);
      mb.push_back(acc_b);
    } else {
      ma.back() += acc_a;
      mb.back() += acc_b;
    }
  }
  double na = std::accumulate(ma.begin(), ma.end(), 0.0);
  double nb = std::accumulate(mb.begin(), mb.end(), 0.0);
  TestResult r;
  if (ma.size() < 2 || na == 0.0 || nb == 0.0) return r;
  double fa = std::sqrt(nb / na), fb = std::sqrt(na / nb);
  for (size_t i = 0; i < ma.size(); ++i) {
    double t = fa * ma[i] - fb * mb[i];
    r.statistic += t * t / (ma[i] + mb[i]);
  }
  r.dof = static_cast<double>(ma.size() - 1);
  r.p_value = chi2_sf(r.statistic, r.dof);
  return r;
}

TestResult chi2_goodness_of_fit(const std::vector<double>& observed,
                                const std::vector<double>& probs, double min_expected) {
  if (observed.size() != probs.size()) throw std::invalid_argument("size mismatch");
  double n = std::accumulate(observed.begin(), observed.end(), 0.0);
  std::vector<double> o, e;
  double acc_o = 0.0, acc_e = 0.0;
  for (size_t i = 0; i < observed.size(); ++i) {
    acc_o += observed[i];
    acc_e += probs[i] * n;
    if (acc_e >= min_expected) {
      o.push_back(acc_o);
      e.push_back(acc_e);
      acc_o = acc_e = 0.0;
    }
  }
  if (acc_e > 0.0 || acc_o > 0.0) {
    if (o.empty()) {
      o.push_back(acc_o);
      e.push_back(acc_e);
    } else {
      o.back() += acc_o;
      e.back() += acc_e;
    }
  }
  TestResult r;
  if (o.size() < 2) return r;
  for (size_t i = 0; i < o.size(); ++i) {
    if (e[i] > 0.0) r.statistic += (o[i] - e[i]) * (o[i] - e[i]) / e[i];
  }
  r.dof = static_cast<double>(o.size() - 1);
  r.p_value = chi2_sf(r.statistic, r.dof);
  return r;
}

namespace {

// Merges trailing rows while the smallest row total is too small.
void merge_sparse_rows(std::vector<std::vector<double>>& t, double need) {
  while (t.size() > 2) {
    double last = std::accumulate(t.back().begin(), t.back().end(), 0.0);
    if (last >= need) break;
    for (size_t j = 0; j < t.back().size(); ++j) t[t.size() - 2][j] += t.back()[j];
    t.pop_back();
  }
}

std::vector<std::vector<double>> transpose(const std::vector<std::vector<double>>& t) {
  if (t.empty()) return {};
  std::vector<std::vector<double>> r(t[0].size(), std::vector<double>(t.size()));
  for (size_t i = 0; i < t.size(); ++i)
    for (size_t j = 0; j < t[i].size(); ++j) r[j][i] = t[i][j];
  return r;
}

}  // namespace

TestResult chi2_independence(std::vector<std::vector<double>> table, double min_expected) {
  TestResult r;
  if (table.size() < 2 || table[0].size() < 2) return r;
  double n = 0.0;
  for (auto& row : table) n += std::accumulate(row.begin(), row.end(), 0.0);
  if (n == 0.0) return r;
  // A trailing row with total T has expected cell counts >= T * (min col
  // share); merging until T * min_share >= min_expected keeps the approximation
  // valid. Alternate row and column merges until stable.
  for (int iter = 0; iter < 64; ++iter) {
    std::vector<double> rows, cols(table[0].size(), 0.0);
    for (auto& row : table) {
      rows.push_back(std::accumulate(row.begin(), row.end(), 0.0));
      for (size_t j = 0; j < row.size(); ++j) cols[j] += row[j];
    }
    double min_col = *std::min_element(cols.begin(), cols.end());
    double min_row = *std::min_element(rows.begin(), rows.end());
    size_t before = table.size() + table[0].size();
    if (rows.back() * min_col / n < min_expected && table.size() > 2) {
      merge_sparse_rows(table, min_expected * n / std::max(min_col, 1.0));
    }
    if (cols.back() * min_row / n < min_expected && table[0].size() > 2) {
      auto t = transpose(table);
      merge_sparse_rows(t, min_expected * n / std::max(min_row, 1.0));
      table = transpose(t);
    }
    if (table.size() + table[0].size() == before) break;
  }
  std::vector<double> rows, cols(table[0].size(), 0.0);
  for (auto& row : table) {
    rows.push_back(std::accumulate(row.begin(), row.end(), 0.0));
    for (size_t j = 0; j < row.size(); ++j) cols[j] += row[j];
  }
  for (size_t i = 0; i < table.size(); ++i) {
    for (size_t j = 0; j < cols.size(); ++j) {
      double e = rows[i] * cols[j] / n;
      if (e > 0.0) r.statistic += (table[i][j] - e) * (table[i][j] - e) / e;
    }
  }
  r.dof = static_cast<double>((table.size() - 1) * (cols.size() - 1));
  r.p_value = chi2_sf(r.statistic, r.dof);
  return r;
}

double kolmogorov_sf(double lambda) {
  if (lambda < 0.2) return 1.0;
  double sum = 0.0;
  double sign = 1.0;
  for (int j = 1; j <= 100; ++j) {
    double term = std::exp(-2.0 * j * j * lambda * lambda);
    sum += sign * term;
    if (term < 1e-16) break;
    sign = -sign;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

TestResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
  TestResult r;
  if (a.empty() || b.empty()) return r;
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::fabs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  double ne = na * nb / (na + nb);
  double sq = std::sqrt(ne);
  r.statistic = d;
  r.dof = ne;
  r.p_value = kolmogorov_sf((sq + 0.12 + 0.11 / sq) * d);
  return r;
}

TestResult anderson_darling_normal(std::vector<double> x) {
  TestResult r;
  size_t n = x.size();
  if (n < 8) throw std::invalid_argument("anderson-darling needs at least 8 points");
  double m = mean(x);
  double sd = std::sqrt(variance(x));
  if (!(sd > 0.0)) throw std::invalid_argument("anderson-darling on constant data");
  std::sort(x.begin(), x.end());
  double s = 0.0;
  for (size_t i = 0; i < n; ++i) {
    double zi = (x[i] - m) / sd;
    double zr = (x[n - 1 - i] - m) / sd;
    double fi = std::clamp(normal_cdf(zi), 1e-300, 1.0 - 1e-16);
    double fr = std::clamp(normal_cdf(zr), 1e-300, 1.0 - 1e-16);
    s += (2.0 * static_cast<double>(i) + 1.0) * (std::log(fi) + std::log1p(-fr));
  }
  double dn = static_cast<double>(n);
  double a2 = -dn - s / dn;
  double a = a2 * (1.0 + 0.75 / dn + 2.25 / (dn * dn));
  // D'Agostino and Stephens (1986), case of estimated mean and variance.
  double p;
  if (a >= 0.6) {
    p = std::exp(1.2937 - 5.709 * a + 0.0186 * a * a);
  } else if (a >= 0.34) {
    p = std::exp(0.9177 - 4.279 * a - 1.38 * a * a);
  } else if (a >= 0.2) {
    p = 1.0 - std::exp(-8.318 + 42.796 * a - 59.938 * a * a);
  } else {
    p = 1.0 - std::exp(-13.436 + 101.14 * a - 223.73 * a * a);
  }
  r.statistic = a;
  r.dof = dn;
  r.p_value = std::clamp(p, 0.0, 1.0);
  return r;
}

LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  LinearFit f;
  size_t n = x.size();
  f.n = static_cast<int>(n);
  if (n < 2 || y.size() != n) return f;
  double mx = mean(x), my = mean(y);
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0) return f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double sse = 0.0;
  for (size_t i = 0; i < n; ++i) {
    double e = y[i] - f.intercept - f.slope * x[i];
    sse += e * e;
  }
  f.r2 = syy > 0.0 ? 1.0 - sse / syy : 1.0;
  if (n > 2) f.slope_se = std::sqrt(sse / static_cast<double>(n - 2) / sxx);
  return f;
}

Interval wilson_interval(int64_t successes, int64_t n, double z) {
  Interval iv;
  if (n <= 0) return iv;
  double dn = static_cast<double>(n);
  double ph = static_cast<double>(successes) / dn;
  double z2 = z * z;
  double denom = 1.0 + z2 / dn;
  double centre = (ph + z2 / (2.0 * dn)) / denom;
  double half = z * std::sqrt(ph * (1.0 - ph) / dn + z2 / (4.0 * dn * dn)) / denom;
  iv.lo = std::max(0.0, centre - half);
  iv.hi = std::min(1.0, centre + half);
  if (successes == 0) iv.lo = 0.0;
  if (successes == n) iv.hi = 1.0;
  return iv;
}

double total_variation(const std::vector<double>& p, const std::vector<double>& q) {
  size_t n = std::max(p.size(), q.size());
  double s = 0.0;
  for (size_t i = 0; i < n; ++i) {
    double a = i < p.size() ? p[i] : 0.0;
    double b = i < q.size() ? q[i] : 0.0;
    s += std::fabs(a - b);
  }
  return 0.5 * s;
}

}  // namespace lrp::stats
