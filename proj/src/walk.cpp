#include "lrp/walk.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <unordered_set>

#include "lrp/stats.hpp"

namespace lrp {

std::vector<Jump> WalkPath::jump_log() const {
  std::vector<Jump> out;
  if (steps.size() < 2) return out;
  out.reserve(steps.size() - 1);
  for (int64_t i = 1; i <= horizon(); ++i) {
    out.push_back({jump(i), long_flags[static_cast<size_t>(i - 1)] != 0});
  }
  return out;
}

LatticePoint walk_step(const LatticePoint& x, Environment& env, Rng& rng) {
  const auto& nb = env.neighbors(x);
  if (nb.empty()) return x;
  return nb[rng.below(nb.size())];
}

WalkPath run_walk(Environment& env, int64_t n, uint64_t walk_seed, int64_t max_horizon) {
  if (n < 0) throw std::invalid_argument("run_walk: negative horizon");
  if (n > max_horizon) throw std::length_error("run_walk: horizon exceeds memory budget");
  const auto& cfg = env.config();
  WalkPath path;
  path.d = cfg.d;
  path.env_seed = cfg.seed;
  path.walk_seed = walk_seed;
  path.steps.reserve(static_cast<size_t>(n + 1));
  path.long_flags.reserve(static_cast<size_t>(n));
  const double cutoff_sq = static_cast<double>(cfg.short_cutoff) * cfg.short_cutoff;

  Rng rng(walk_seed);
  LatticePoint x{};
  path.steps.push_back(x);
  for (int64_t i = 0; i < n; ++i) {
    LatticePoint y = walk_step(x, env, rng);
    path.long_flags.push_back(norm2_squared(y - x) > cutoff_sq ? 1 : 0);
    path.steps.push_back(y);
    x = y;
  }
  return path;
}

std::vector<double> RescaledPath::value_at(double t) const {
  t = std::clamp(t, 0.0, 1.0);
  auto idx = static_cast<int64_t>(std::floor(static_cast<double>(n) * t));
  idx = std::min(idx, n);
  std::vector<double> v(static_cast<size_t>(d));
  for (int a = 0; a < d; ++a) v[a] = scale * static_cast<double>(points[idx][a]);
  return v;
}

GridPath RescaledPath::to_grid(int64_t m) const {
  if (m < 1) throw std::invalid_argument("to_grid: m must be positive");
  GridPath g(d, m);
  for (int64_t i = 0; i <= m; ++i) {
    // floor(n i / m) in exact integer arithmetic
    auto idx = static_cast<int64_t>((static_cast<__int128>(n) * i) / m);
    for (int a = 0; a < d; ++a) g.at(i, a) = scale * static_cast<double>(points[idx][a]);
  }
  return g;
}

RescaledPath rescale(const WalkPath& path, double alpha) {
  if (!(alpha > 0.0)) throw std::invalid_argument("rescale: alpha must be positive");
  RescaledPath r;
  r.d = path.d;
  r.alpha = alpha;
  r.n = path.horizon();
  r.scale = r.n > 0 ? std::pow(static_cast<double>(r.n), -1.0 / alpha) : 1.0;
  r.points = path.steps;
  return r;
}

GridPath interpolate_diffusive(const WalkPath& path, int64_t m) {
  const int64_t n = path.horizon();
  if (n < 1 || m < 1) throw std::invalid_argument("interpolate_diffusive: empty path or grid");
  GridPath g(path.d, m);
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  for (int64_t i = 0; i <= m; ++i) {
    auto num = static_cast<__int128>(n) * i;
    auto lo = static_cast<int64_t>(num / m);
    double frac = static_cast<double>(static_cast<int64_t>(num % m)) / static_cast<double>(m);
    int64_t hi = std::min(lo + 1, n);
    for (int a = 0; a < path.d; ++a) {
      double base = static_cast<double>(path.steps[lo][a]);
      double next = static_cast<double>(path.steps[hi][a]);
      g.at(i, a) = scale * (base + frac * (next - base));
    }
  }
  return g;
}

ShortJumpStats short_jump_max(const WalkPath& path, int k, double epsilon, double alpha,
                              bool keep_prefix) {
  if (k < 0 || k > 40) throw std::invalid_argument("short_jump_max: k out of range");
  const int64_t len = int64_t{1} << k;
  // The maximum runs over m < 2^k, so steps 1..2^k-1 must exist.
  if (path.horizon() < len - 1) throw std::invalid_argument("short_jump_max: path too short");
  ShortJumpStats st;
  st.k = k;
  st.epsilon = epsilon;
  st.threshold = std::pow(2.0, (1.0 / alpha - epsilon) * k);
  const double scale = std::pow(2.0, -static_cast<double>(k) / alpha);
  const double thr_sq = st.threshold * st.threshold;

  std::array<double, kMaxDim> sum{};
  double best = 0.0;
  if (keep_prefix) st.prefix_norms.assign(static_cast<size_t>(len), 0.0);
  for (int64_t m = 1; m < len; ++m) {
    LatticePoint j = path.jump(m);
    if (norm2_squared(j) <= thr_sq) {
      ++st.short_steps;
      for (int a = 0; a < path.d; ++a) sum[a] += static_cast<double>(j[a]);
    }
    double s2 = 0.0;
    for (int a = 0; a < path.d; ++a) s2 += sum[a] * sum[a];
    double norm = std::sqrt(s2) * scale;
    best = std::max(best, norm);
    if (keep_prefix) st.prefix_norms[static_cast<size_t>(m)] = norm;
  }
  st.w = best;
  return st;
}

std::vector<double> truncated_drift(const LatticePoint& x, Environment& env, double cutoff) {
  const int d = env.config().d;
  std::vector<double> v(static_cast<size_t>(d), 0.0);
  const auto& nb = env.neighbors(x);
  if (nb.empty()) return v;
  const double inv_deg = 1.0 / static_cast<double>(nb.size());
  const double cut_sq = cutoff * cutoff;
  for (const auto& y : nb) {
    LatticePoint j = y - x;
    if (norm2_squared(j) > cut_sq) continue;
    for (int a = 0; a < d; ++a) v[a] += static_cast<double>(j[a]) * inv_deg;
  }
  return v;
}

NoveltyCounters new_vertex_counter(const std::vector<WalkPath>& paths) {
  NoveltyCounters out;
  std::unordered_set<LatticePoint, PointHash> earlier;
  for (const auto& p : paths) {
    std::unordered_set<LatticePoint, PointHash> own;
    own.insert(p.steps.front());
    const int64_t n = p.horizon();
    std::vector<int64_t> phi(static_cast<size_t>(std::max<int64_t>(n, 0)));
    std::vector<int64_t> phi_tilde(phi.size());
    int64_t c = 0, ct = 0;
    for (int64_t j = 1; j <= n; ++j) {
      const auto& x = p.steps[j];
      if (own.insert(x).second) {
        ++ct;
        if (!earlier.contains(x)) ++c;
      }
      phi[j - 1] = c;
      phi_tilde[j - 1] = ct;
    }
    earlier.insert(own.begin(), own.end());
    out.phi.push_back(std::move(phi));
    out.phi_tilde.push_back(std::move(phi_tilde));
  }
  return out;
}

namespace {

struct Visit {
  uint64_t key;
  uint32_t time;
  uint16_t walk;
  uint16_t deg;
};

}  // namespace

ReturnProfile return_probability_profile(Environment& env, const std::vector<int64_t>& n_list,
                                         int64_t trials, uint64_t walk_seed,
                                         int jackknife_groups) {
  ReturnProfile prof;
  prof.trials = trials;
  if (trials <= 0 || n_list.empty()) return prof;
  if (trials > 65535) throw std::invalid_argument("return_probability_profile: too many trials");
  std::vector<int64_t> ns = n_list;
  std::sort(ns.begin(), ns.end());
  ns.erase(std::unique(ns.begin(), ns.end()), ns.end());
  if (ns.front() < 1) throw std::invalid_argument("return_probability_profile: n must be >= 1");
  const int64_t nmax = ns.back();
  if (nmax > (int64_t{1} << 31)) throw std::invalid_argument("return_probability_profile: n too large");

  const LatticePoint origin{};
  const double deg0 = static_cast<double>(env.degree(origin));
  const int groups = static_cast<int>(std::clamp<int64_t>(jackknife_groups, 1, trials));
  const size_t nb = ns.size();

  std::vector<Visit> visits;
  visits.reserve(static_cast<size_t>(trials * (nmax + 1)));
  std::vector<int64_t> endpoint_hits(nb, 0);
  for (int64_t w = 0; w < trials; ++w) {
    WalkPath p = run_walk(env, nmax, derive_seed(walk_seed, {static_cast<uint64_t>(w)}));
    for (int64_t t = 0; t <= nmax; ++t) {
      const auto& x = p.steps[t];
      auto deg = static_cast<uint16_t>(std::min<size_t>(env.degree(x), 65535));
      visits.push_back({hash_point(x, 0x1234567ULL), static_cast<uint32_t>(t),
                        static_cast<uint16_t>(w), deg});
    }
    for (size_t b = 0; b < nb; ++b) {
      if (p.steps[ns[b]] == origin) ++endpoint_hits[b];
    }
  }
  std::sort(visits.begin(), visits.end(),
            [](const Visit& a, const Visit& b) { return a.key < b.key; });

  // acc[b][ga * groups + gb]: weighted coincidences between walks in groups ga, gb.
  std::vector<std::vector<double>> acc(nb, std::vector<double>(groups * groups, 0.0));
  std::vector<int64_t> hits(nb, 0);
  size_t i = 0;
  while (i < visits.size()) {
    size_t j = i + 1;
    while (j < visits.size() && visits[j].key == visits[i].key) ++j;
    for (size_t a = i; a < j; ++a) {
      for (size_t c = a + 1; c < j; ++c) {
        if (visits[a].walk == visits[c].walk) continue;
        const int64_t m = int64_t{visits[a].time} + visits[c].time;
        const double w = visits[a].deg > 0 ? 1.0 / visits[a].deg : 0.0;
        const int ga = visits[a].walk % groups, gc = visits[c].walk % groups;
        for (size_t b = 0; b < nb; ++b) {
          if (2 * m > ns[b] && m <= ns[b]) {
            acc[b][ga * groups + gc] += w;
            acc[b][gc * groups + ga] += w;
            ++hits[b];
          }
        }
      }
    }
    i = j;
  }

  std::vector<int64_t> group_size(groups, 0);
  for (int64_t w = 0; w < trials; ++w) ++group_size[w % groups];

  auto weight_sum = [](int64_t n) {
    // sum of (m + 1) over m in (n/2, n]
    double s = 0.0;
    for (int64_t m = n / 2 + 1; m <= n; ++m) s += static_cast<double>(m + 1);
    return s;
  };

  for (size_t b = 0; b < nb; ++b) {
    ReturnRow row;
    row.n = ns[b];
    row.intersections = hits[b];
    const double wsum = weight_sum(ns[b]);
    double total = 0.0;
    for (double v : acc[b]) total += v;
    auto estimate = [&](double mass, double walks) {
      if (deg0 == 0.0) return 1.0;
      if (walks < 2.0) return 0.0;
      return deg0 * mass / (walks * (walks - 1.0) * wsum);
    };
    row.estimate = estimate(total, static_cast<double>(trials));
    if (groups > 1 && trials > 2) {
      std::vector<double> loo(groups);
      for (int g = 0; g < groups; ++g) {
        double involving = 0.0;
        for (int h = 0; h < groups; ++h) {
          involving += acc[b][g * groups + h] + acc[b][h * groups + g];
        }
        involving -= acc[b][g * groups + g];
        loo[g] = estimate(total - involving, static_cast<double>(trials - group_size[g]));
      }
      double mu = stats::mean(loo), ss = 0.0;
      for (double v : loo) ss += (v - mu) * (v - mu);
      row.std_error = std::sqrt(ss * (groups - 1.0) / groups);
    }
    const double q = static_cast<double>(endpoint_hits[b]) / static_cast<double>(trials);
    row.direct = deg0 == 0.0 ? 1.0 : q;
    row.direct_error = std::sqrt(q * (1.0 - q) / static_cast<double>(trials));
    row.sufficient = deg0 == 0.0 || row.intersections >= 10;
    prof.rows.push_back(row);
  }
  fit_return_slope(prof);
  return prof;
}

void fit_return_slope(ReturnProfile& profile) {
  std::vector<double> x, y;
  for (const auto& r : profile.rows) {
    if (!r.sufficient || r.estimate <= 0.0) continue;
    x.push_back(std::log(static_cast<double>(r.n)));
    y.push_back(std::log(r.estimate));
  }
  if (x.size() < 2) {
    profile.slope = 0.0;
    profile.slope_se = 0.0;
    return;
  }
  auto fit = stats::fit_line(x, y);
  profile.slope = fit.slope;
  profile.slope_se = fit.slope_se;
}

void write_path_csv(std::ostream& os, const WalkPath& path) {
  os << "step";
  for (int a = 0; a < path.d; ++a) os << ",x" << a + 1;
  os << ",long\n";
  for (int64_t i = 0; i <= path.horizon(); ++i) {
    os << i;
    for (int a = 0; a < path.d; ++a) os << ',' << path.steps[i][a];
    os << ',' << (i == 0 ? 0 : int{path.long_flags[i - 1]}) << '\n';
  }
}

namespace {
constexpr char kMagic[4] = {'L', 'R', 'P', 'W'};
constexpr uint32_t kVersion = 1;

template <class T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <class T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("read_path_binary: truncated input");
  return v;
}
}  // namespace

void write_path_binary(std::ostream& os, const WalkPath& path) {
  os.write(kMagic, 4);
  put(os, kVersion);
  put(os, static_cast<uint32_t>(path.d));
  put(os, path.env_seed);
  put(os, path.walk_seed);
  put(os, static_cast<int64_t>(path.horizon()));
  for (const auto& p : path.steps) {
    for (int a = 0; a < path.d; ++a) put(os, p[a]);
  }
  os.write(reinterpret_cast<const char*>(path.long_flags.data()),
           static_cast<std::streamsize>(path.long_flags.size()));
}

WalkPath read_path_binary(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0) throw std::runtime_error("read_path_binary: bad magic");
  if (get<uint32_t>(is) != kVersion) throw std::runtime_error("read_path_binary: unsupported version");
  WalkPath p;
  p.d = static_cast<int>(get<uint32_t>(is));
  if (p.d < 1 || p.d > kMaxDim) throw std::runtime_error("read_path_binary: bad dimension");
  p.env_seed = get<uint64_t>(is);
  p.walk_seed = get<uint64_t>(is);
  auto n = get<int64_t>(is);
  if (n < 0) throw std::runtime_error("read_path_binary: bad horizon");
  p.steps.resize(static_cast<size_t>(n + 1));
  for (auto& x : p.steps) {
    for (int a = 0; a < p.d; ++a) x[a] = get<int64_t>(is);
  }
  p.long_flags.resize(static_cast<size_t>(n));
  is.read(reinterpret_cast<char*>(p.long_flags.data()), static_cast<std::streamsize>(n));
  if (!is) throw std::runtime_error("read_path_binary: truncated input");
  return p;
}

nlohmann::json functional_record(const WalkPath& path, const ShortJumpStats& st) {
  return {{"env_seed", path.env_seed}, {"walk_seed", path.walk_seed},
          {"k", st.k},                 {"epsilon", st.epsilon},
          {"W_k", st.w},               {"threshold", st.threshold},
          {"short_steps", st.short_steps}};
}

}  // namespace lrp
