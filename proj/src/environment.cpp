#include "lrp/environment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "lrp/stats.hpp"

namespace lrp {

namespace {

constexpr uint64_t kPairTag = 0x6a09e667f3bcc908ULL;
constexpr uint64_t kLongTag = 0xbb67ae8584caa73bULL;
constexpr uint64_t kSkipTag = 0x3c6ef372fe94f82bULL;

uint64_t hash_point_d(const LatticePoint& p, int d, uint64_t h) {
  for (int i = 0; i < d; ++i) h = mix64(h ^ static_cast<uint64_t>(p.c[i]));
  return h;
}

// Counter-based uniform stream for displacement-class skips.
struct CounterStream {
  uint64_t base;
  uint64_t n = 0;
  double uniform_pos() { return 1.0 - to_unit(mix64(base + 0x9e3779b97f4a7c15ULL * ++n)); }
};

std::string backend_name(Backend b) {
  return b == Backend::kLazyShell ? "lazy" : "exact";
}

Backend parse_backend(const std::string& s) {
  if (s == "lazy" || s == "LazyShell" || s == "lazy_shell") return Backend::kLazyShell;
  if (s == "exact" || s == "ExactBoxed" || s == "exact_boxed") return Backend::kExactBoxed;
  throw std::invalid_argument("unknown backend: " + s);
}

std::string exact_mode_name(ExactMode m) {
  switch (m) {
    case ExactMode::kHashEnumeration: return "hash";
    case ExactMode::kDisplacementSkip: return "skip";
    default: return "auto";
  }
}

ExactMode parse_exact_mode(const std::string& s) {
  if (s == "auto") return ExactMode::kAuto;
  if (s == "hash") return ExactMode::kHashEnumeration;
  if (s == "skip") return ExactMode::kDisplacementSkip;
  throw std::invalid_argument("unknown exact_mode: " + s);
}

bool parse_bool(const std::string& v) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw std::invalid_argument("not a boolean: " + v);
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

double unit_sphere_area(int d) {
  return 2.0 * std::pow(M_PI, d / 2.0) / std::tgamma(d / 2.0);
}

}  // namespace

std::string to_string(const LatticePoint& p, int d) {
  std::string out;
  for (int i = 0; i < d; ++i) {
    if (i) out += ',';
    out += std::to_string(p.c[i]);
  }
  return out;
}

// ---------------------------------------------------------------- EnvConfig

void EnvConfig::validate() const {
  if (d < 1 || d > kMaxDim) throw std::invalid_argument("d out of range");
  if (!(s > d)) throw std::invalid_argument("s must exceed d");
  if (!(beta >= 0.0)) throw std::invalid_argument("beta must be nonnegative");
  if (short_cutoff < 1) throw std::invalid_argument("short_cutoff must be >= 1");
  if (!(r_max > short_cutoff)) throw std::invalid_argument("r_max must exceed short_cutoff");
  if (r_max > 0x1.0p60) throw std::invalid_argument("r_max too large for 64-bit coordinates");
  if (backend == Backend::kExactBoxed && box_half_width < 1)
    throw std::invalid_argument("box half-width must be >= 1");
}

nlohmann::json EnvConfig::to_json() const {
  return nlohmann::json{{"d", d},
                        {"s", s},
                        {"beta", beta},
                        {"nn_open", nn_open},
                        {"seed", seed},
                        {"short_cutoff", short_cutoff},
                        {"r_max", r_max},
                        {"backend", backend_name(backend)},
                        {"N", box_half_width},
                        {"exact_mode", exact_mode_name(exact_mode)}};
}

EnvConfig EnvConfig::from_json(const nlohmann::json& j) {
  EnvConfig c;
  if (j.contains("d")) c.d = j.at("d").get<int>();
  if (j.contains("s")) c.s = j.at("s").get<double>();
  if (j.contains("beta")) c.beta = j.at("beta").get<double>();
  if (j.contains("nn_open")) c.nn_open = j.at("nn_open").get<bool>();
  if (j.contains("seed")) c.seed = j.at("seed").get<uint64_t>();
  if (j.contains("short_cutoff")) c.short_cutoff = j.at("short_cutoff").get<int>();
  if (j.contains("r_max")) c.r_max = j.at("r_max").get<double>();
  if (j.contains("backend")) c.backend = parse_backend(j.at("backend").get<std::string>());
  if (j.contains("N")) c.box_half_width = j.at("N").get<int64_t>();
  if (j.contains("exact_mode"))
    c.exact_mode = parse_exact_mode(j.at("exact_mode").get<std::string>());
  c.validate();
  return c;
}

EnvConfig EnvConfig::parse(const std::string& text) {
  std::string t = trim(text);
  if (!t.empty() && t.front() == '{') return from_json(nlohmann::json::parse(t));
  nlohmann::json j = nlohmann::json::object();
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("expected key=value: " + line);
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    if (key == "d" || key == "short_cutoff") {
      j[key] = std::stoi(val);
    } else if (key == "N") {
      j[key] = std::stoll(val);
    } else if (key == "seed") {
      j[key] = std::stoull(val);
    } else if (key == "s" || key == "beta" || key == "r_max") {
      j[key] = std::stod(val);
    } else if (key == "nn_open") {
      j[key] = parse_bool(val);
    } else if (key == "backend" || key == "exact_mode") {
      j[key] = val;
    } else {
      throw std::invalid_argument("unknown config key: " + key);
    }
  }
  return from_json(j);
}

// ------------------------------------------------------- edge probabilities

double edge_probability(const LatticePoint& j, const EnvConfig& cfg) {
  int64_t l1 = norm1(j);
  if (l1 == 0) throw std::invalid_argument("edge_probability of the zero displacement");
  if (cfg.nn_open && l1 == 1) return 1.0;
  if (cfg.beta <= 0.0) return 0.0;
  double p = cfg.beta * std::pow(norm2_squared(j), -cfg.s / 2.0);
  return std::min(1.0, p);
}

double alpha(const EnvConfig& cfg) {
  if (!(cfg.s > cfg.d)) throw std::invalid_argument("alpha requires s > d");
  return cfg.s - cfg.d;
}

double pair_uniform(uint64_t seed, const LatticePoint& x, const LatticePoint& y) {
  const LatticePoint& a = x < y ? x : y;
  const LatticePoint& b = x < y ? y : x;
  // Each point folds to one word with odd multipliers; distinct points with
  // coordinates below 2^40 do not collide in practice.
  auto fold = [](const LatticePoint& p) {
    return static_cast<uint64_t>(p.c[0]) * 0x9e3779b97f4a7c15ULL +
           static_cast<uint64_t>(p.c[1]) * 0xc2b2ae3d27d4eb4fULL +
           static_cast<uint64_t>(p.c[2]) * 0x165667b19e3779f9ULL +
           static_cast<uint64_t>(p.c[3]) * 0xd6e8feb86659fd93ULL;
  };
  uint64_t h = mix64(seed ^ kPairTag ^ fold(a));
  h = mix64(h ^ fold(b));
  return to_unit(h);
}

double tail_mass_beyond(const EnvConfig& cfg, double radius) {
  if (cfg.beta <= 0.0) return 0.0;
  return cfg.beta * unit_sphere_area(cfg.d) * std::pow(radius, cfg.d - cfg.s) /
         (cfg.s - cfg.d);
}

// ------------------------------------------------------------ ShellSampler

ShellSampler::ShellSampler(const EnvConfig& cfg, double inner, double outer)
    : cfg_(cfg), inner_(inner), outer_(outer) {
  if (inner < 0.0) throw std::invalid_argument("negative inner radius");
  auto outer_int = static_cast<int64_t>(std::floor(outer));
  auto lo = static_cast<int64_t>(std::floor(inner / std::sqrt(static_cast<double>(cfg.d))));
  while (lo < outer_int) {
    int64_t hi = std::max<int64_t>(lo + 1, static_cast<int64_t>(std::floor(lo * 1.25)));
    hi = std::min(hi, outer_int);
    Shell sh;
    sh.lo = lo;
    sh.hi = hi;
    sh.size = std::pow(2.0 * hi + 1.0, cfg.d) - std::pow(2.0 * lo + 1.0, cfg.d);
    double rmin = std::max(inner, static_cast<double>(lo + 1));
    sh.pbar = cfg.beta <= 0.0 ? 0.0 : std::min(1.0, cfg.beta * std::pow(rmin, -cfg.s));
    if (sh.pbar >= 1.0) {
      if (sh.size > 1e7) throw std::invalid_argument("beta too large for the short cutoff");
      sh.log_empty = -std::numeric_limits<double>::infinity();
    } else {
      sh.log_empty = sh.size * std::log1p(-sh.pbar);
    }
    shells_.push_back(sh);
    lo = hi;
  }
  cum_log_empty_.assign(shells_.size() + 1, 0.0);
  for (size_t i = 0; i < shells_.size(); ++i) {
    double le = shells_[i].pbar >= 1.0 ? 0.0 : shells_[i].log_empty;
    cum_log_empty_[i + 1] = cum_log_empty_[i] + le;
  }
}

double ShellSampler::truncation_bound() const { return tail_mass_beyond(cfg_, outer_); }

int64_t ShellSampler::draw_count(const Shell& sh, Rng& rng) const {
  double lam = sh.size * sh.pbar;
  if (lam > 30.0) {
    if (sh.size > 9e18) throw std::runtime_error("shell too large for binomial draw");
    std::binomial_distribution<int64_t> bin(static_cast<int64_t>(sh.size), sh.pbar);
    for (;;) {
      int64_t k = bin(rng.engine());
      if (k > 0) return k;
    }
  }
  double log1m = std::log1p(-sh.pbar);
  double nonempty = -std::expm1(sh.size * log1m);
  double pmf = sh.size * sh.pbar * std::exp((sh.size - 1.0) * log1m);
  double target = rng.uniform() * nonempty;
  int64_t k = 1;
  double cum = pmf;
  double ratio = sh.pbar / (1.0 - sh.pbar);
  while (cum < target && static_cast<double>(k) < sh.size) {
    pmf *= (sh.size - static_cast<double>(k)) / static_cast<double>(k + 1) * ratio;
    if (pmf <= 0.0) break;
    ++k;
    cum += pmf;
  }
  return k;
}

void ShellSampler::sample_shell(size_t i, Rng& rng, std::vector<LatticePoint>& out) const {
  const Shell& sh = shells_[i];
  const int d = cfg_.d;
  const double inner_sq = inner_ * inner_;
  auto keep = [&](const LatticePoint& j, double pbar) {
    double r2 = norm2_squared(j);
    if (r2 <= inner_sq) return false;
    double p = std::min(1.0, cfg_.beta * std::pow(r2, -cfg_.s / 2.0));
    return rng.uniform() * pbar < p;
  };
  if (sh.pbar >= 1.0) {
    // Enumerate every point of the annulus.
    LatticePoint j;
    for (int a = 0; a < d; ++a) j.c[a] = -sh.hi;
    for (;;) {
      if (norm_inf(j) > sh.lo && keep(j, 1.0)) out.push_back(j);
      int a = 0;
      while (a < d && j.c[a] == sh.hi) j.c[a++] = -sh.hi;
      if (a == d) break;
      ++j.c[a];
    }
    return;
  }
  int64_t k = draw_count(sh, rng);
  std::vector<LatticePoint> picked;
  picked.reserve(static_cast<size_t>(k));
  std::unordered_set<LatticePoint, PointHash> seen;
  while (static_cast<int64_t>(picked.size()) < k) {
    LatticePoint j;
    for (int a = 0; a < d; ++a) j.c[a] = rng.range(-sh.hi, sh.hi);
    if (norm_inf(j) <= sh.lo) continue;
    if (!seen.insert(j).second) continue;
    picked.push_back(j);
  }
  for (const auto& j : picked)
    if (keep(j, sh.pbar)) out.push_back(j);
}

void ShellSampler::sample(Rng& rng, std::vector<LatticePoint>& out) const {
  const size_t n = shells_.size();
  size_t i = 0;
  while (i < n) {
    if (shells_[i].pbar >= 1.0) {
      sample_shell(i, rng, out);
      ++i;
      continue;
    }
    size_t limit = i;
    while (limit < n && shells_[limit].pbar < 1.0) ++limit;
    double target = cum_log_empty_[i] + std::log(rng.uniform_pos());
    if (cum_log_empty_[limit] >= target) {
      i = limit;
      continue;
    }
    // First q in (i, limit] with cum[q] < target; shell q-1 is the next
    // nonempty one.
    auto first = cum_log_empty_.begin() + static_cast<std::ptrdiff_t>(i + 1);
    auto last = cum_log_empty_.begin() + static_cast<std::ptrdiff_t>(limit + 1);
    auto it = std::partition_point(first, last, [&](double c) { return c >= target; });
    size_t m = static_cast<size_t>(it - cum_log_empty_.begin()) - 1;
    sample_shell(m, rng, out);
    i = m + 1;
  }
}

// ---------------------------------------------------------- LocalAdjacency

size_t LocalAdjacency::edge_count() const {
  size_t s = 0;
  for (const auto& a : adjacency) s += a.size();
  return s / 2;
}

int LocalAdjacency::index_of(const LatticePoint& p) const {
  auto it = std::lower_bound(vertices.begin(), vertices.end(), p);
  if (it == vertices.end() || !(*it == p)) return -1;
  return static_cast<int>(it - vertices.begin());
}

// ------------------------------------------------------------- Environment

Environment::Environment(EnvConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  short_cutoff_sq_ = static_cast<double>(cfg_.short_cutoff) * cfg_.short_cutoff;
  const int d = cfg_.d;
  const int64_t r = cfg_.short_cutoff;
  LatticePoint j;
  for (int a = 0; a < d; ++a) j.c[a] = -r;
  for (;;) {
    double r2 = norm2_squared(j);
    if (r2 > 0.0 && r2 <= short_cutoff_sq_) {
      double p = edge_probability(j, cfg_);
      if (p > 0.0) short_offsets_.emplace_back(j, p);
    }
    int a = 0;
    while (a < d && j.c[a] == r) j.c[a++] = -r;
    if (a == d) break;
    ++j.c[a];
  }
  if (cfg_.backend == Backend::kLazyShell) {
    sampler_ = std::make_unique<ShellSampler>(cfg_, static_cast<double>(cfg_.short_cutoff),
                                              cfg_.r_max);
  } else {
    width_ = 2 * cfg_.box_half_width + 1;
    ExactMode mode = cfg_.exact_mode;
    if (mode == ExactMode::kAuto) {
      double v = std::pow(static_cast<double>(width_), d);
      mode = v <= 8192.0 ? ExactMode::kHashEnumeration : ExactMode::kDisplacementSkip;
    }
    cfg_.exact_mode = mode;
    if (mode == ExactMode::kDisplacementSkip) {
      materialize_skip();
    } else {
      const int64_t n2 = 2 * cfg_.box_half_width;
      const int64_t w = 2 * n2 + 1;
      box_prob_.assign(static_cast<size_t>(std::pow(static_cast<double>(w), d)), 0.0);
      LatticePoint q;
      for (int a = 0; a < d; ++a) q.c[a] = -n2;
      for (size_t idx = 0;; ++idx) {
        box_prob_[idx] = norm1(q) == 0 ? 0.0 : edge_probability(q, cfg_);
        int a = d - 1;
        while (a >= 0 && q.c[a] == n2) q.c[a--] = -n2;
        if (a < 0) break;
        ++q.c[a];
      }
    }
  }
}

bool Environment::in_box(const LatticePoint& x) const {
  if (!is_boxed()) return true;
  for (int a = 0; a < cfg_.d; ++a)
    if (std::llabs(x.c[a]) > cfg_.box_half_width) return false;
  return true;
}

int64_t Environment::box_index(const LatticePoint& x) const {
  int64_t idx = 0;
  for (int a = 0; a < cfg_.d; ++a) idx = idx * width_ + (x.c[a] + cfg_.box_half_width);
  return idx;
}

LatticePoint Environment::box_point(int64_t idx) const {
  LatticePoint p;
  for (int a = cfg_.d - 1; a >= 0; --a) {
    p.c[a] = idx % width_ - cfg_.box_half_width;
    idx /= width_;
  }
  return p;
}

int64_t Environment::box_volume() const {
  int64_t v = 1;
  for (int a = 0; a < cfg_.d; ++a) v *= width_;
  return v;
}

double Environment::box_probability(const LatticePoint& j) const {
  const int64_t n2 = 2 * cfg_.box_half_width;
  const int64_t w = 2 * n2 + 1;
  int64_t idx = 0;
  for (int a = 0; a < cfg_.d; ++a) idx = idx * w + (j.c[a] + n2);
  return box_prob_[static_cast<size_t>(idx)];
}

double Environment::truncation_bound() const {
  if (sampler_) return sampler_->truncation_bound();
  return 0.0;
}

bool Environment::is_long_complete(const LatticePoint& x) const {
  auto it = records_.find(x);
  return it != records_.end() && it->second.long_done;
}

void Environment::reveal_short(const LatticePoint& x, VertexRecord& rec) {
  for (const auto& [j, p] : short_offsets_) {
    LatticePoint y = x + j;
    if (!in_box(y)) continue;
    if (p >= 1.0 || pair_uniform(cfg_.seed, x, y) < p) rec.nbrs.push_back(y);
  }
  rec.short_done = true;
}

void Environment::reveal_long_exact(const LatticePoint& x, VertexRecord& rec) {
  const int64_t vol = box_volume();
  for (int64_t idx = 0; idx < vol; ++idx) {
    LatticePoint y = box_point(idx);
    LatticePoint j = y - x;
    if (norm2_squared(j) <= short_cutoff_sq_) continue;
    double p = box_probability(j);
    if (p > 0.0 && pair_uniform(cfg_.seed, x, y) < p) rec.nbrs.push_back(y);
  }
  rec.long_done = true;
}

void Environment::sample_long_lazy(const LatticePoint& x, VertexRecord& rec) {
  Rng rng(derive_seed(cfg_.seed, {kLongTag, hash_point_d(x, cfg_.d, 0)}));
  std::vector<LatticePoint> offsets;
  sampler_->sample(rng, offsets);
  for (const auto& j : offsets) {
    LatticePoint y = x + j;
    auto it = records_.find(y);
    if (it != records_.end() && it->second.long_done) continue;
    if (!explicit_pairs_.empty() && explicit_pairs_.count(canonical(x, y))) continue;
    rec.nbrs.push_back(y);
    records_[y].nbrs.push_back(x);
  }
  rec.long_done = true;
}

const std::vector<LatticePoint>& Environment::neighbors(const LatticePoint& x) {
  if (!in_box(x)) throw std::out_of_range("vertex outside the box");
  VertexRecord& rec = records_[x];
  if (rec.short_done && rec.long_done) return rec.nbrs;
  if (materialized_) {
    build_csr();
    int64_t idx = box_index(x);
    rec.nbrs.clear();
    for (int64_t e = csr_offsets_[idx]; e < csr_offsets_[idx + 1]; ++e)
      rec.nbrs.push_back(box_point(csr_targets_[e]));
    rec.short_done = rec.long_done = true;
    return rec.nbrs;
  }
  if (!rec.short_done) reveal_short(x, rec);
  if (!rec.long_done) {
    if (is_boxed()) {
      reveal_long_exact(x, rec);
    } else {
      sample_long_lazy(x, rec);
    }
  }
  return rec.nbrs;
}

std::vector<LatticePoint> Environment::sample_incident_long_edges(const LatticePoint& x) {
  if (is_long_complete(x))
    throw std::logic_error("sample_incident_long_edges on a long-complete vertex");
  const auto& nb = neighbors(x);
  std::vector<LatticePoint> out;
  for (const auto& y : nb)
    if (!is_short(y - x)) out.push_back(y);
  return out;
}

bool Environment::pair_state(const LatticePoint& x, const LatticePoint& y) {
  if (x == y) throw std::invalid_argument("pair_state of a vertex with itself");
  if (!in_box(x) || !in_box(y)) throw std::out_of_range("pair outside the box");
  LatticePoint j = y - x;
  if (materialized_) {
    build_csr();
    int64_t a = box_index(x), b = box_index(y);
    auto first = csr_targets_.begin() + csr_offsets_[a];
    auto last = csr_targets_.begin() + csr_offsets_[a + 1];
    return std::binary_search(first, last, b);
  }
  double p = is_boxed() ? box_probability(j) : edge_probability(j, cfg_);
  if (is_boxed() || is_short(j)) return p >= 1.0 || pair_uniform(cfg_.seed, x, y) < p;
  // Long pair under LazyShell.
  auto rx = records_.find(x);
  auto ry = records_.find(y);
  bool x_done = rx != records_.end() && rx->second.long_done;
  bool y_done = ry != records_.end() && ry->second.long_done;
  if (x_done || y_done) {
    const auto& nb = x_done ? rx->second.nbrs : ry->second.nbrs;
    const LatticePoint& other = x_done ? y : x;
    return std::find(nb.begin(), nb.end(), other) != nb.end();
  }
  PairKey key = canonical(x, y);
  auto it = explicit_pairs_.find(key);
  if (it != explicit_pairs_.end()) return it->second;
  bool open = pair_uniform(cfg_.seed, x, y) < p;
  explicit_pairs_.emplace(key, open);
  if (open) {
    records_[x].nbrs.push_back(y);
    records_[y].nbrs.push_back(x);
  }
  return open;
}

LocalAdjacency Environment::reveal_ball(const LatticePoint& x, double r) {
  LocalAdjacency out;
  out.center = x;
  out.radius = r;
  const int d = cfg_.d;
  auto ri = static_cast<int64_t>(std::floor(r));
  double r2 = r * r;
  LatticePoint j;
  for (int a = 0; a < d; ++a) j.c[a] = -ri;
  for (;;) {
    if (norm2_squared(j) <= r2) {
      LatticePoint y = x + j;
      if (!in_box(y)) throw std::out_of_range("ball leaves the box");
      out.vertices.push_back(y);
    }
    int a = 0;
    while (a < d && j.c[a] == ri) j.c[a++] = -ri;
    if (a == d) break;
    ++j.c[a];
  }
  std::sort(out.vertices.begin(), out.vertices.end());
  out.adjacency.resize(out.vertices.size());
  for (size_t i = 0; i < out.vertices.size(); ++i) {
    const auto& nb = neighbors(out.vertices[i]);
    for (const auto& y : nb) {
      if (norm2_squared(y - x) > r2) continue;
      int k = out.index_of(y);
      if (k >= 0) out.adjacency[i].push_back(k);
    }
    std::sort(out.adjacency[i].begin(), out.adjacency[i].end());
  }
  return out;
}

void Environment::materialize_skip() {
  const int d = cfg_.d;
  const int64_t n = cfg_.box_half_width;
  const int64_t n2 = 2 * n;
  LatticePoint j;
  for (int a = 0; a < d; ++a) j.c[a] = -n2;
  for (;;) {
    // Canonical representative: first nonzero coordinate positive.
    int first = 0;
    while (first < d && j.c[first] == 0) ++first;
    if (first < d && j.c[first] > 0) {
      double p = edge_probability(j, cfg_);
      if (p > 0.0) {
        int64_t lo[kMaxDim], len[kMaxDim];
        double count = 1.0;
        for (int a = 0; a < d; ++a) {
          lo[a] = std::max(-n, -n - j.c[a]);
          len[a] = 2 * n + 1 - std::llabs(j.c[a]);
          count *= static_cast<double>(len[a]);
        }
        auto total = static_cast<int64_t>(count);
        auto emit = [&](int64_t pos) {
          LatticePoint x;
          for (int a = d - 1; a >= 0; --a) {
            x.c[a] = lo[a] + pos % len[a];
            pos /= len[a];
          }
          box_edges_.emplace_back(box_index(x), box_index(x + j));
        };
        if (p >= 1.0) {
          for (int64_t pos = 0; pos < total; ++pos) emit(pos);
        } else {
          CounterStream cs{derive_seed(cfg_.seed, {kSkipTag, hash_point_d(j, d, 0)})};
          double lq = std::log1p(-p);
          double pos = -1.0;
          for (;;) {
            pos += 1.0 + std::floor(std::log(cs.uniform_pos()) / lq);
            if (pos >= count) break;
            emit(static_cast<int64_t>(pos));
          }
        }
      }
    }
    int a = d - 1;
    while (a >= 0 && j.c[a] == n2) j.c[a--] = -n2;
    if (a < 0) break;
    ++j.c[a];
  }
  for (auto& e : box_edges_)
    if (e.first > e.second) std::swap(e.first, e.second);
  std::sort(box_edges_.begin(), box_edges_.end());
  materialized_ = true;
  box_edges_ready_ = true;
}

void Environment::build_csr() {
  if (!csr_offsets_.empty()) return;
  const int64_t vol = box_volume();
  csr_offsets_.assign(static_cast<size_t>(vol + 1), 0);
  for (const auto& e : box_edges_) {
    ++csr_offsets_[e.first + 1];
    ++csr_offsets_[e.second + 1];
  }
  for (int64_t i = 0; i < vol; ++i) csr_offsets_[i + 1] += csr_offsets_[i];
  csr_targets_.assign(static_cast<size_t>(csr_offsets_[vol]), 0);
  std::vector<int64_t> fill(csr_offsets_.begin(), csr_offsets_.end() - 1);
  for (const auto& e : box_edges_) {
    csr_targets_[fill[e.first]++] = e.second;
    csr_targets_[fill[e.second]++] = e.first;
  }
  for (int64_t i = 0; i < vol; ++i)
    std::sort(csr_targets_.begin() + csr_offsets_[i], csr_targets_.begin() + csr_offsets_[i + 1]);
}

const std::vector<std::pair<int64_t, int64_t>>& Environment::box_edges() {
  if (!is_boxed()) throw std::logic_error("box_edges requires the ExactBoxed backend");
  if (box_edges_ready_) return box_edges_;
  const int d = cfg_.d;
  const int64_t n = cfg_.box_half_width;
  const int64_t n2 = 2 * n;
  LatticePoint j;
  for (int a = 0; a < d; ++a) j.c[a] = -n2;
  for (;;) {
    int first = 0;
    while (first < d && j.c[first] == 0) ++first;
    if (first < d && j.c[first] > 0) {
      double p = box_probability(j);
      if (p > 0.0) {
        int64_t lo[kMaxDim], hi[kMaxDim];
        for (int a = 0; a < d; ++a) {
          lo[a] = std::max(-n, -n - j.c[a]);
          hi[a] = std::min(n, n - j.c[a]);
        }
        LatticePoint x;
        for (int a = 0; a < d; ++a) x.c[a] = lo[a];
        for (;;) {
          LatticePoint y = x + j;
          if (p >= 1.0 || pair_uniform(cfg_.seed, x, y) < p) {
            int64_t u = box_index(x), v = box_index(y);
            box_edges_.emplace_back(std::min(u, v), std::max(u, v));
          }
          int a = d - 1;
          while (a >= 0 && x.c[a] == hi[a]) {
            x.c[a] = lo[a];
            --a;
          }
          if (a < 0) break;
          ++x.c[a];
        }
      }
    }
    int a = d - 1;
    while (a >= 0 && j.c[a] == n2) j.c[a--] = -n2;
    if (a < 0) break;
    ++j.c[a];
  }
  std::sort(box_edges_.begin(), box_edges_.end());
  box_edges_ready_ = true;
  return box_edges_;
}

void Environment::write_edge_list(std::ostream& os) const {
  os << "# lrp edge list\n";
  nlohmann::json cj = cfg_.to_json();
  for (auto it = cj.begin(); it != cj.end(); ++it) {
    os << "# " << it.key() << '=';
    if (it.value().is_string()) {
      os << it.value().get<std::string>();
    } else {
      os << it.value().dump();
    }
    os << '\n';
  }
  std::vector<std::pair<LatticePoint, LatticePoint>> edges;
  if (box_edges_ready_) {
    for (const auto& e : box_edges_) edges.emplace_back(box_point(e.first), box_point(e.second));
  } else {
    for (const auto& [x, rec] : records_) {
      for (const auto& y : rec.nbrs) {
        if (x < y) edges.emplace_back(x, y);
        else if (records_.find(y) == records_.end()) edges.emplace_back(y, x);
      }
    }
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  }
  for (const auto& [x, y] : edges) os << to_string(x, cfg_.d) << '\t' << to_string(y, cfg_.d) << '\n';
}

// ----------------------------------------------------- backend comparison

BackendComparison oracle_compare_backends(const EnvConfig& base, int64_t n_box, int trials) {
  BackendComparison out;
  const int d = base.d;
  // Probe vertices: spacing 4 within [-8, 8]^d, clipped to the box.
  std::vector<LatticePoint> probes;
  {
    int64_t span = std::min<int64_t>(8, n_box);
    LatticePoint p;
    for (int a = 0; a < d; ++a) p.c[a] = -span;
    for (;;) {
      probes.push_back(p);
      int a = 0;
      while (a < d && p.c[a] + 4 > span) p.c[a++] = -span;
      if (a == d) break;
      p.c[a] += 4;
    }
  }
  EnvConfig exact_cfg = base;
  exact_cfg.backend = Backend::kExactBoxed;
  exact_cfg.box_half_width = n_box;
  exact_cfg.exact_mode = ExactMode::kHashEnumeration;
  EnvConfig lazy_cfg = base;
  lazy_cfg.backend = Backend::kLazyShell;

  // Long-edge length bins: geometric over (short_cutoff, 2 sqrt(d) N].
  const int kLenBins = 20;
  const double lmin = base.short_cutoff;
  const double lmax = 2.0 * std::sqrt(static_cast<double>(d)) * static_cast<double>(n_box);
  auto len_bin = [&](double len) {
    double t = std::log(len / lmin) / std::log(lmax / lmin);
    return std::clamp(static_cast<int>(t * kLenBins), 0, kLenBins - 1);
  };
  ShellSampler shells(lazy_cfg, lmin, lmax);
  const int kShellBins = 20;
  auto shell_bin = [&](const LatticePoint& j) {
    int64_t li = norm_inf(j);
    const auto& sh = shells.shells();
    for (size_t i = 0; i < sh.size(); ++i)
      if (li <= sh[i].hi) return std::min<int>(static_cast<int>(i), kShellBins - 1);
    return kShellBins - 1;
  };

  std::vector<double> deg_lazy(64, 0.0), deg_exact(64, 0.0);
  std::vector<double> len_lazy(kLenBins, 0.0), len_exact(kLenBins, 0.0);
  std::vector<double> sh_lazy(kShellBins, 0.0), sh_exact(kShellBins, 0.0);
  double sum_lazy = 0.0, sum_exact = 0.0;
  const double cut2 = static_cast<double>(base.short_cutoff) * base.short_cutoff;

  auto tally = [&](Environment& env, std::vector<double>& deg, std::vector<double>& len,
                   std::vector<double>& shc, double& sum, int64_t& long_count) {
    for (const auto& x : probes) {
      const auto& nb = env.neighbors(x);
      int k = 0;
      for (const auto& y : nb) {
        bool inside = true;
        for (int a = 0; a < d; ++a)
          if (std::llabs(y.c[a]) > n_box) inside = false;
        if (!inside) continue;
        ++k;
        LatticePoint j = y - x;
        if (norm2_squared(j) > cut2) {
          ++long_count;
          len[len_bin(norm2(j))] += 1.0;
          shc[shell_bin(j)] += 1.0;
        }
      }
      deg[std::min<size_t>(k, deg.size() - 1)] += 1.0;
      sum += k;
    }
  };

  for (int t = 0; t < trials; ++t) {
    exact_cfg.seed = derive_seed(base.seed, {static_cast<uint64_t>(t), 1});
    lazy_cfg.seed = derive_seed(base.seed, {static_cast<uint64_t>(t), 2});
    Environment ex(exact_cfg);
    Environment lz(lazy_cfg);
    tally(ex, deg_exact, len_exact, sh_exact, sum_exact, out.long_edges_exact);
    tally(lz, deg_lazy, len_lazy, sh_lazy, sum_lazy, out.long_edges_lazy);
  }
  out.samples_per_backend = static_cast<int64_t>(probes.size()) * trials;
  double ns = static_cast<double>(std::max<int64_t>(out.samples_per_backend, 1));
  out.degree_mean_exact = sum_exact / ns;
  out.degree_mean_lazy = sum_lazy / ns;
  double analytic = 0.0;
  for (const auto& x : probes) {
    LatticePoint y;
    for (int a = 0; a < d; ++a) y.c[a] = -n_box;
    for (;;) {
      if (!(y == x)) analytic += edge_probability(y - x, base);
      int a = 0;
      while (a < d && y.c[a] == n_box) y.c[a++] = -n_box;
      if (a == d) break;
      ++y.c[a];
    }
  }
  out.degree_mean_analytic = analytic / static_cast<double>(probes.size());
  out.degree_chi2_p = stats::chi2_two_sample(deg_lazy, deg_exact).p_value;
  out.length_chi2_p = stats::chi2_two_sample(len_lazy, len_exact).p_value;
  out.shell_chi2_p = stats::chi2_two_sample(sh_lazy, sh_exact).p_value;
  return out;
}

}  // namespace lrp
