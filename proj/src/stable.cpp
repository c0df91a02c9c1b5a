#include "lrp/stable.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "lrp/stats.hpp"

namespace lrp {

namespace {

constexpr int kEcfGridSize = 16;
constexpr double kEcfLo = 0.25;
constexpr double kEcfHi = 4.0;
constexpr int kEcfDirections = 8;
constexpr int kJackknifeGroups = 10;

std::vector<double> ecf_grid() {
  std::vector<double> g(kEcfGridSize);
  for (int i = 0; i < kEcfGridSize; ++i)
    g[i] = kEcfLo * std::pow(kEcfHi / kEcfLo, static_cast<double>(i) / (kEcfGridSize - 1));
  return g;
}

// Fixed unit directions: evenly spread angles in the first two coordinates
// for d >= 2, rotated into the remaining coordinates in turn.
std::vector<std::vector<double>> ecf_directions(int d) {
  std::vector<std::vector<double>> out;
  if (d == 1) return {{1.0}};
  for (int k = 0; k < kEcfDirections; ++k) {
    double th = std::numbers::pi * k / kEcfDirections;
    std::vector<double> u(d, 0.0);
    int a = k % (d - 1);
    u[a] = std::cos(th);
    u[a + 1] = std::sin(th);
    out.push_back(u);
  }
  return out;
}

double pooled_iqr(const std::vector<std::vector<double>>& x) {
  std::vector<double> all;
  for (const auto& v : x) all.insert(all.end(), v.begin(), v.end());
  return stats::quantile(all, 0.75) - stats::quantile(all, 0.25);
}

// |empirical characteristic function| for every (direction, |xi|) pair,
// averaged over directions, on samples [lo, hi).
std::vector<double> ecf_modulus(const std::vector<std::vector<double>>& x, double unit, size_t lo,
                                size_t hi, const std::vector<double>& grid,
                                const std::vector<std::vector<double>>& dirs) {
  std::vector<double> out(grid.size(), 0.0);
  std::vector<double> proj(hi - lo);
  for (const auto& u : dirs) {
    for (size_t i = lo; i < hi; ++i) {
      double s = 0.0;
      for (size_t a = 0; a < u.size(); ++a) s += u[a] * x[i][a];
      proj[i - lo] = s / unit;
    }
    for (size_t g = 0; g < grid.size(); ++g) {
      double re = 0.0, im = 0.0;
      for (double v : proj) {
        re += std::cos(grid[g] * v);
        im += std::sin(grid[g] * v);
      }
      double n = static_cast<double>(proj.size());
      out[g] += std::hypot(re / n, im / n);
    }
  }
  for (auto& v : out) v /= static_cast<double>(dirs.size());
  return out;
}

struct EcfPoints {
  std::vector<double> logxi, logneglog;
};

// Keeps grid points where -log|phi| is resolvable: |phi| below 1 - 1e-6 and
// above the sampling noise floor 3/sqrt(n).
EcfPoints usable_points(const std::vector<double>& modulus, const std::vector<double>& grid,
                        size_t n) {
  EcfPoints pts;
  const double floor = 3.0 / std::sqrt(static_cast<double>(n));
  for (size_t g = 0; g < grid.size(); ++g) {
    double m = modulus[g];
    if (!(m > floor && m < 1.0 - 1e-6)) continue;
    pts.logxi.push_back(std::log(grid[g]));
    pts.logneglog.push_back(std::log(-std::log(m)));
  }
  return pts;
}

void check_samples(const std::vector<std::vector<double>>& samples) {
  if (samples.size() < 1000) throw std::invalid_argument("ecf: need at least 1000 samples");
  bool any = false;
  for (const auto& v : samples)
    for (double c : v)
      if (c != 0.0) any = true;
  if (!any) throw std::invalid_argument("ecf: degenerate (all-zero) samples");
}

double studentizing_unit(const std::vector<std::vector<double>>& samples) {
  double unit = pooled_iqr(samples);
  if (unit <= 0.0) {
    double s = 0.0;
    size_t c = 0;
    for (const auto& v : samples)
      for (double x : v) {
        s += std::abs(x);
        ++c;
      }
    unit = s / static_cast<double>(c);
  }
  return unit;
}

}  // namespace

void StableParams::validate() const {
  if (!(alpha > 0.0 && alpha <= 2.0)) throw std::invalid_argument("stable: alpha must be in (0,2]");
  if (!(scale > 0.0)) throw std::invalid_argument("stable: scale must be positive");
  if (d < 1 || d > kMaxDim) throw std::invalid_argument("stable: dimension out of range");
}

double positive_stable(double a, Rng& rng) {
  // Kanter's representation.
  double u = std::numbers::pi * rng.uniform_pos();
  double e = -std::log(rng.uniform_pos());
  double left = std::sin(a * u) / std::pow(std::sin(u), 1.0 / a);
  double right = std::pow(std::sin((1.0 - a) * u) / e, (1.0 - a) / a);
  return left * right;
}

void sample_stable_increment(const StableParams& p, double t, Rng& rng, double* out) {
  // sqrt(A) G with A positive (alpha/2)-stable and G ~ N(0, s2 I), where
  // (s2/2)^{alpha/2} = scale * t.
  const double s2 = 2.0 * std::pow(p.scale * t, 2.0 / p.alpha);
  double mult = std::sqrt(s2);
  if (p.alpha < 2.0) mult *= std::sqrt(positive_stable(p.alpha / 2.0, rng));
  for (int a = 0; a < p.d; ++a) out[a] = mult * rng.normal();
}

std::vector<std::vector<double>> sample_stable_vectors(const StableParams& p, double t,
                                                       int64_t count, uint64_t seed) {
  p.validate();
  Rng rng(seed);
  std::vector<std::vector<double>> out(static_cast<size_t>(count), std::vector<double>(p.d));
  for (auto& v : out) sample_stable_increment(p, t, rng, v.data());
  return out;
}

GridPath sample_stable_path(const StableParams& p, int64_t n_steps, uint64_t seed) {
  p.validate();
  if (n_steps < 1) throw std::invalid_argument("stable path: n_steps must be positive");
  Rng rng(seed);
  GridPath g(p.d, n_steps);
  const double dt = 1.0 / static_cast<double>(n_steps);
  std::array<double, kMaxDim> inc{};
  for (int64_t i = 1; i <= n_steps; ++i) {
    sample_stable_increment(p, dt, rng, inc.data());
    for (int a = 0; a < p.d; ++a) g.at(i, a) = g.at(i - 1, a) + inc[a];
  }
  return g;
}

EcfEstimate estimate_alpha_ecf(const std::vector<std::vector<double>>& samples) {
  check_samples(samples);
  const int d = static_cast<int>(samples[0].size());
  const auto grid = ecf_grid();
  const auto dirs = ecf_directions(d);
  EcfEstimate est;
  est.iqr = studentizing_unit(samples);
  const size_t n = samples.size();

  auto full = usable_points(ecf_modulus(samples, est.iqr, 0, n, grid, dirs), grid, n);
  est.points_used = static_cast<int>(full.logxi.size());
  if (est.points_used < 3) throw std::invalid_argument("ecf: too few resolvable grid points");
  auto fit = stats::fit_line(full.logxi, full.logneglog);
  est.alpha = fit.slope;
  est.r2 = fit.r2;
  est.scale = std::exp(fit.intercept) * std::pow(est.iqr, est.alpha);

  // Leave-one-group-out jackknife over contiguous sample groups.
  std::vector<double> leave;
  for (int g = 0; g < kJackknifeGroups; ++g) {
    size_t lo = n * g / kJackknifeGroups, hi = n * (g + 1) / kJackknifeGroups;
    std::vector<std::vector<double>> rest;
    rest.reserve(n - (hi - lo));
    for (size_t i = 0; i < n; ++i)
      if (i < lo || i >= hi) rest.push_back(samples[i]);
    auto pts = usable_points(ecf_modulus(rest, est.iqr, 0, rest.size(), grid, dirs), grid, rest.size());
    if (pts.logxi.size() < 3) continue;
    leave.push_back(stats::fit_line(pts.logxi, pts.logneglog).slope);
  }
  if (leave.size() >= 2) {
    double m = stats::mean(leave);
    double ss = 0.0;
    for (double v : leave) ss += (v - m) * (v - m);
    auto g = static_cast<double>(leave.size());
    est.alpha_se = std::sqrt((g - 1.0) / g * ss);
  }
  est.lo = est.alpha - 1.959963984540054 * est.alpha_se;
  est.hi = est.alpha + 1.959963984540054 * est.alpha_se;
  return est;
}

double fit_stable_scale(const std::vector<std::vector<double>>& samples, double alpha) {
  check_samples(samples);
  const int d = static_cast<int>(samples[0].size());
  const auto grid = ecf_grid();
  double unit = studentizing_unit(samples);
  auto pts = usable_points(ecf_modulus(samples, unit, 0, samples.size(), grid, ecf_directions(d)),
                           grid, samples.size());
  if (pts.logxi.empty()) throw std::invalid_argument("ecf: no resolvable grid points");
  double s = 0.0;
  for (size_t i = 0; i < pts.logxi.size(); ++i) s += pts.logneglog[i] - alpha * pts.logxi[i];
  double log_c = s / static_cast<double>(pts.logxi.size());
  return std::exp(log_c) * std::pow(unit, alpha);
}

HillEstimate estimate_alpha_hill(std::vector<double> x, double top_fraction) {
  if (!(top_fraction > 0.0 && top_fraction <= 1.0))
    throw std::invalid_argument("hill: top_fraction must be in (0,1]");
  for (double v : x)
    if (!(v > 0.0)) throw std::invalid_argument("hill: magnitudes must be positive");
  std::sort(x.begin(), x.end(), std::greater<>());
  auto hill = [&](int64_t k) {
    double s = 0.0;
    const double ref = std::log(x[static_cast<size_t>(k)]);
    for (int64_t i = 0; i < k; ++i) s += std::log(x[static_cast<size_t>(i)]) - ref;
    if (s <= 0.0) throw std::invalid_argument("hill: constant tail");
    return static_cast<double>(k) / s;
  };
  HillEstimate out;
  out.tail_points = static_cast<int64_t>(std::floor(top_fraction * static_cast<double>(x.size())));
  out.tail_points = std::min<int64_t>(out.tail_points, static_cast<int64_t>(x.size()) - 1);
  if (out.tail_points < 10) throw std::invalid_argument("hill: fewer than 10 tail points");
  out.alpha = hill(out.tail_points);
  int64_t deep = out.tail_points / 4;
  if (deep >= 10) {
    out.alpha_deep = hill(deep);
    out.heavy_tail = out.alpha_deep < 1.25 * out.alpha;
  } else {
    out.alpha_deep = out.alpha;
  }
  return out;
}

double lq_path_distance(const GridPath& a, const GridPath& b, double q) {
  if (!(q >= 1.0)) throw std::invalid_argument("lq distance: q must be >= 1");
  if (a.d != b.d) throw std::invalid_argument("lq distance: dimension mismatch");
  if (a.n < 1 || b.n < 1) throw std::invalid_argument("lq distance: empty grid");
  // Merge the breakpoints i/a.n and j/b.n on the common denominator a.n*b.n.
  const __int128 na = a.n, nb = b.n;
  int64_t i = 0, j = 0;
  __int128 t = 0;
  const __int128 end = na * nb;
  double acc = 0.0;
  while (t < end) {
    __int128 next_a = (i + 1) * nb, next_b = (j + 1) * na;
    __int128 next = std::min(next_a, next_b);
    double s = 0.0;
    for (int c = 0; c < a.d; ++c) {
      double diff = a.at(i, c) - b.at(j, c);
      s += diff * diff;
    }
    double len = static_cast<double>(next - t) / static_cast<double>(end);
    acc += std::pow(std::sqrt(s), q) * len;
    t = next;
    if (next_a == next) ++i;
    if (next_b == next) ++j;
  }
  return std::pow(acc, 1.0 / q);
}

std::string FunctionalSpec::name() const {
  switch (kind) {
    case PathFunctional::kEndpointCoord: return "endpoint_x" + std::to_string(coord + 1);
    case PathFunctional::kEndpointNorm: return "endpoint_norm";
    case PathFunctional::kLqNorm: return "lq_norm";
    case PathFunctional::kSupFirstHalf: return "sup_first_half";
  }
  return "unknown";
}

std::vector<FunctionalSpec> default_functionals(int d) {
  std::vector<FunctionalSpec> out;
  for (int a = 0; a < d; ++a) out.push_back({PathFunctional::kEndpointCoord, a});
  out.push_back({PathFunctional::kEndpointNorm, 0});
  out.push_back({PathFunctional::kLqNorm, 0});
  out.push_back({PathFunctional::kSupFirstHalf, 0});
  return out;
}

double evaluate_functional(const GridPath& path, const FunctionalSpec& f, double q) {
  switch (f.kind) {
    case PathFunctional::kEndpointCoord: return path.at(path.n, f.coord);
    case PathFunctional::kEndpointNorm: return path.norm_at(path.n);
    case PathFunctional::kLqNorm: {
      GridPath zero(path.d, 1);
      return lq_path_distance(path, zero, q);
    }
    case PathFunctional::kSupFirstHalf: {
      double m = 0.0;
      // grid points i/n <= 1/2
      for (int64_t i = 0; 2 * i <= path.n; ++i) m = std::max(m, path.norm_at(i));
      return m;
    }
  }
  return 0.0;
}

PathTestResult two_sample_path_test(const std::vector<GridPath>& a, const std::vector<GridPath>& b,
                                    double q, const std::vector<FunctionalSpec>& functionals,
                                    double level) {
  if (a.size() < 200 || b.size() < 200)
    throw std::invalid_argument("path test: ensembles need at least 200 paths");
  PathTestResult out;
  out.q = q;
  for (const auto& f : functionals) {
    std::vector<double> fa, fb;
    fa.reserve(a.size());
    fb.reserve(b.size());
    for (const auto& p : a) fa.push_back(evaluate_functional(p, f, q));
    for (const auto& p : b) fb.push_back(evaluate_functional(p, f, q));
    auto r = stats::ks_two_sample(fa, fb);
    out.names.push_back(f.name());
    out.statistics.push_back(r.statistic);
    out.p_values.push_back(r.p_value);
    out.min_p = std::min(out.min_p, r.p_value);
  }
  out.combined_p = std::min(1.0, out.min_p * static_cast<double>(functionals.size()));
  out.pass = out.combined_p > level;
  return out;
}

// ------------------------------------------------------------- surrogate

std::vector<CrossingGridPoint> sample_local_pool(const EnvConfig& env_cfg, const CouplingParams& p,
                                                 int count, uint64_t seed) {
  EnvConfig cfg = env_cfg;
  cfg.backend = Backend::kLazyShell;
  cfg.seed = derive_seed(seed, {0x9001});
  Environment env(cfg);
  Rng rng(derive_seed(seed, {0x9002}));
  std::vector<CrossingGridPoint> out;
  for (int i = 0; i < count; ++i) {
    LatticePoint v;
    for (int a = 0; a < cfg.d; ++a) v.c[a] = rng.range(-1000000, 1000000);
    auto lc = local_characteristics(v, env, p, 50000, 4000, derive_seed(seed, {0x9003, uint64_t(i)}));
    out.push_back({lc.local_degree, lc.local_return});
  }
  return out;
}

double SurrogateConfig::threshold() const {
  return std::pow(2.0, (1.0 / env.alpha() - epsilon) * k);
}
double SurrogateConfig::threshold_first() const {
  return std::pow(2.0, (1.0 / env.alpha() - epsilon1) * k);
}

void SurrogateConfig::validate() const {
  env.validate();
  if (!(epsilon1 > 0.0 && epsilon1 < epsilon)) throw std::invalid_argument("surrogate: need 0 < epsilon1 < epsilon");
  if (!(c_hat > 0.0 && c_hat < 1.0)) throw std::invalid_argument("surrogate: c_hat must be in (0,1)");
  if (k < 1) throw std::invalid_argument("surrogate: k must be positive");
}

SurrogatePath surrogate_sum(const SurrogateConfig& cfg, int64_t n, uint64_t seed,
                            const std::vector<int64_t>* phi) {
  cfg.validate();
  const int d = cfg.env.d;
  const double thr = cfg.threshold();
  const double thr1 = cfg.threshold_first();
  const double thr1_sq = thr1 * thr1;
  int64_t count = static_cast<int64_t>(std::floor(static_cast<double>(n) * cfg.c_hat));
  if (phi != nullptr)
    for (auto v : *phi) count = std::max(count, v);

  SurrogatePath out;
  out.jumps.resize(static_cast<size_t>(count));
  out.sigma.resize(static_cast<size_t>(count));
  out.z.resize(static_cast<size_t>(count));
  out.large.resize(static_cast<size_t>(count));
  out.medium.resize(static_cast<size_t>(count));

  std::unique_ptr<ShellSampler> sampler;
  if (thr < cfg.env.r_max) sampler = std::make_unique<ShellSampler>(cfg.env, thr, cfg.env.r_max);
  Rng rng(derive_seed(seed, {0x5a11}));
  Rng pool_rng(derive_seed(seed, {0x5a12}));
  std::vector<LatticePoint> hits;
  for (int64_t i = 0; i < count; ++i) {
    hits.clear();
    if (sampler) sampler->sample(rng, hits);
    LatticePoint big, mid;
    for (const auto& x : hits) {
      if (norm2_squared(x) > thr1_sq) big = big + x;
      else mid = mid + x;
    }
    CrossingGridPoint near{2 * d, 0.0}, far{2 * d, 0.0};
    if (!cfg.local_pool.empty()) {
      near = cfg.local_pool[pool_rng.below(cfg.local_pool.size())];
      far = cfg.local_pool[pool_rng.below(cfg.local_pool.size())];
    }
    double qn = crossing_parameter(near.local_degree, near.local_return);
    double qf = crossing_parameter(far.local_degree, far.local_return);
    const auto ui = static_cast<uint64_t>(i);
    int64_t rn = qn > 0.0 ? geometric_variable(qn, UniformStream(derive_seed(seed, {0x5a13, ui, 0})))
                          : kInfiniteCount;
    int64_t rf = qf > 0.0 ? geometric_variable(qf, UniformStream(derive_seed(seed, {0x5a13, ui, 1})))
                          : kInfiniteCount;
    bool odd = (rn == kInfiniteCount && rf != kInfiniteCount) ||
               (rn != kInfiniteCount && rf != kInfiniteCount && rn > rf);
    out.jumps[i] = big + mid;
    out.sigma[i] = odd ? 1 : 0;
    if (odd) {
      out.z[i] = big + mid;
      out.large[i] = big;
      out.medium[i] = mid;
    }
  }

  auto prefix = [&](const std::vector<LatticePoint>& v) {
    std::vector<LatticePoint> s(static_cast<size_t>(count + 1));
    for (int64_t i = 0; i < count; ++i) s[i + 1] = s[i] + v[i];
    return s;
  };
  auto pz = prefix(out.z), pl = prefix(out.large), pm = prefix(out.medium);
  out.by_chat.resize(static_cast<size_t>(n + 1));
  out.large_by_chat.resize(static_cast<size_t>(n + 1));
  out.medium_by_chat.resize(static_cast<size_t>(n + 1));
  for (int64_t i = 0; i <= n; ++i) {
    auto m = static_cast<size_t>(std::floor(static_cast<double>(i) * cfg.c_hat));
    out.by_chat[i] = pz[m];
    out.large_by_chat[i] = pl[m];
    out.medium_by_chat[i] = pm[m];
  }
  if (phi != nullptr) {
    out.by_phi.resize(static_cast<size_t>(n + 1));
    for (int64_t i = 1; i <= n && static_cast<size_t>(i) <= phi->size(); ++i)
      out.by_phi[i] = pz[static_cast<size_t>((*phi)[i - 1])];
  }
  return out;
}

GridPath rescale_sequence(const std::vector<LatticePoint>& seq, int d, double alpha, int64_t m) {
  if (seq.empty()) throw std::invalid_argument("rescale_sequence: empty sequence");
  const auto n = static_cast<int64_t>(seq.size()) - 1;
  GridPath g(d, m);
  const double scale = n > 0 ? std::pow(static_cast<double>(n), -1.0 / alpha) : 1.0;
  for (int64_t i = 0; i <= m; ++i) {
    auto idx = static_cast<int64_t>((static_cast<__int128>(i) * n) / m);
    for (int a = 0; a < d; ++a) g.at(i, a) = scale * static_cast<double>(seq[idx][a]);
  }
  return g;
}

double long_edge_probability(const EnvConfig& cfg, double threshold) {
  if (threshold >= cfg.r_max || cfg.beta <= 0.0) return 0.0;
  // Exact sum of log(1 - p) over the sampler's region (|x| > threshold,
  // |x|_inf <= outer) while that box has at most ~4M points; continuum tail
  // beyond (p is tiny there, log(1 - p) ~ -p).
  const double cap = std::pow(4.0e6, 1.0 / cfg.d) / 2.0;
  const double outer = std::min(cfg.r_max, std::max(threshold, cap));
  double log_empty = 0.0;
  if (threshold < cap) {
    auto ri = static_cast<int64_t>(std::floor(outer));
    const double lo2 = threshold * threshold;
    LatticePoint j;
    for (int a = 0; a < cfg.d; ++a) j.c[a] = -ri;
    for (;;) {
      double r2 = norm2_squared(j);
      if (r2 > lo2) log_empty += std::log1p(-edge_probability(j, cfg));
      int a = 0;
      while (a < cfg.d && j.c[a] == ri) j.c[a++] = -ri;
      if (a == cfg.d) break;
      ++j.c[a];
    }
  }
  log_empty -= tail_mass_beyond(cfg, outer) - tail_mass_beyond(cfg, cfg.r_max);
  return -std::expm1(log_empty);
}

}  // namespace lrp
