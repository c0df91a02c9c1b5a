#include "lrp/coupling.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

namespace lrp {

// ------------------------------------------------------------- parameters

double CouplingParams::long_threshold() const {
  return std::pow(2.0, (1.0 / alpha - epsilon) * k);
}
double CouplingParams::ball_radius() const { return std::pow(2.0, delta * k); }
double CouplingParams::ball_radius_sq() const { return std::pow(2.0, 2.0 * delta * k); }
double CouplingParams::return_window() const { return std::pow(2.0, gamma * k); }
int64_t CouplingParams::phase_length() const {
  return 2 * static_cast<int64_t>(std::ceil(return_window() - 1e-12));
}

void CouplingParams::validate() const {
  if (k < 1 || k > 40) throw std::invalid_argument("coupling: k out of range");
  if (!(alpha > 0.0 && alpha <= 2.0)) throw std::invalid_argument("coupling: alpha out of range");
  if (!(epsilon > 0.0 && epsilon < 1.0 / alpha)) throw std::invalid_argument("coupling: epsilon out of range");
  if (!(gamma > 0.0 && delta > 0.0 && delta < 1.0)) throw std::invalid_argument("coupling: gamma/delta out of range");
}

nlohmann::json CouplingParams::to_json() const {
  return {{"k", k}, {"alpha", alpha}, {"epsilon", epsilon}, {"gamma", gamma}, {"delta", delta},
          {"long_threshold", long_threshold()}, {"ball_radius", ball_radius()},
          {"phase_length", phase_length()}};
}

// ------------------------------------------------------------ geometrics

double UniformStream::at(uint64_t i) const {
  return to_unit(mix64(seed_ ^ mix64(i + 0x632be59bd9b4e019ULL)));
}

int64_t geometric_variable(double t, const UniformStream& stream) {
  if (!(t > 0.0 && t <= 1.0)) throw std::invalid_argument("geometric_variable: t must be in (0,1]");
  uint64_t i = 0;
  while (!(stream.at(i) < t)) ++i;
  return static_cast<int64_t>(i);
}

double crossing_parameter(int local_degree, double local_return) {
  double a = (1.0 - local_return) * local_degree;
  return a / (1.0 + a);
}

// ---------------------------------------------------- local characteristics

double local_return_exact(const std::vector<std::vector<int>>& adj, int center, int64_t window) {
  if (adj[center].empty()) return 1.0;
  const size_t n = adj.size();
  std::vector<double> cur(n, 0.0), next(n, 0.0);
  const double first = 1.0 / static_cast<double>(adj[center].size());
  for (int u : adj[center]) cur[u] += first;
  double returned = 0.0;
  for (int64_t t = 2; t <= window; ++t) {
    std::fill(next.begin(), next.end(), 0.0);
    for (size_t u = 0; u < n; ++u) {
      if (cur[u] == 0.0 || static_cast<int>(u) == center) continue;
      const double share = cur[u] / static_cast<double>(adj[u].size());
      for (int w : adj[u]) next[w] += share;
    }
    returned += next[center];
    next[center] = 0.0;
    std::swap(cur, next);
  }
  return returned;
}

LocalCharacteristics local_characteristics(const LatticePoint& v, Environment& env,
                                           const CouplingParams& p, size_t dp_budget,
                                           int mc_trials, uint64_t seed) {
  LocalCharacteristics out;
  out.v = v;
  const double r2 = p.ball_radius_sq();
  auto in_ball = [&](const LatticePoint& y) { return norm2_squared(y - v) <= r2; };
  for (const auto& y : env.neighbors(v))
    if (in_ball(y)) ++out.local_degree;
  if (out.local_degree == 0) {
    out.local_return = 1.0;
    out.ball_size = 1;
    return out;
  }
  const auto window = static_cast<int64_t>(std::floor(p.return_window() + 1e-12));
  if (window < 2) {
    out.local_return = 0.0;
    return out;
  }
  // A return by time `window` never leaves graph distance window/2 of v, so
  // states beyond that depth are dropped without changing the answer.
  const int64_t depth = window / 2;
  std::unordered_map<LatticePoint, int, PointHash> index;
  std::vector<LatticePoint> verts{v};
  std::vector<int64_t> level{0};
  index.emplace(v, 0);
  bool over_budget = false;
  for (size_t q = 0; q < verts.size(); ++q) {
    if (level[q] >= depth) continue;
    for (const auto& y : env.neighbors(verts[q])) {
      if (!in_ball(y) || index.count(y)) continue;
      index.emplace(y, static_cast<int>(verts.size()));
      verts.push_back(y);
      level.push_back(level[q] + 1);
    }
    if (verts.size() > dp_budget) {
      over_budget = true;
      break;
    }
  }
  out.ball_size = verts.size();
  if (!over_budget) {
    // Vertices at the last level keep their true in-ball degree; mass sent
    // to unindexed vertices cannot come back in time and is dropped.
    const int sink = static_cast<int>(verts.size());
    std::vector<std::vector<int>> adj(verts.size() + 1);
    for (size_t q = 0; q < verts.size(); ++q) {
      for (const auto& y : env.neighbors(verts[q])) {
        if (!in_ball(y)) continue;
        auto it = index.find(y);
        adj[q].push_back(it == index.end() ? sink : it->second);
      }
    }
    adj[sink] = {sink};
    out.local_return = local_return_exact(adj, 0, window);
    return out;
  }
  out.monte_carlo = true;
  Rng rng(seed);
  int64_t hits = 0;
  std::vector<LatticePoint> local;
  for (int trial = 0; trial < mc_trials; ++trial) {
    LatticePoint x = v;
    for (int64_t t = 1; t <= window; ++t) {
      local.clear();
      for (const auto& y : env.neighbors(x))
        if (in_ball(y)) local.push_back(y);
      x = local[rng.below(local.size())];
      if (x == v) {
        ++hits;
        break;
      }
    }
  }
  double ph = static_cast<double>(hits) / mc_trials;
  out.local_return = ph;
  out.std_error = std::sqrt(std::max(ph * (1.0 - ph), 1e-12) / mc_trials);
  return out;
}

// ---------------------------------------------------- excursion simulator

ExcursionLaw excursion_simulator(int dv, double pv, int dx, double px, int64_t trials,
                                 uint64_t seed) {
  if (dv < 0 || dx < 0 || pv < 0.0 || pv > 1.0 || px < 0.0 || px > 1.0)
    throw std::invalid_argument("excursion_simulator: parameters out of range");
  ExcursionLaw out;
  out.trials = trials;
  const int deg[2] = {dv, dx};
  const double ret[2] = {dv == 0 ? 1.0 : pv, dx == 0 ? 1.0 : px};
  double cross[2], stay[2];
  bool degenerate[2];
  for (int s = 0; s < 2; ++s) {
    cross[s] = 1.0 / (1.0 + deg[s]);
    stay[s] = cross[s] + ret[s] * deg[s] / (1.0 + deg[s]);
    degenerate[s] = crossing_parameter(deg[s], ret[s]) <= 0.0;
  }
  out.degenerate_v = degenerate[0];
  out.degenerate_x = degenerate[1];
  out.both_degenerate = degenerate[0] && degenerate[1];
  if (out.both_degenerate) return out;

  Rng rng(seed);
  out.r_v.reserve(static_cast<size_t>(trials));
  out.r_x.reserve(static_cast<size_t>(trials));
  out.far.reserve(static_cast<size_t>(trials));
  for (int64_t t = 0; t < trials; ++t) {
    int64_t r[2] = {0, 0};
    int side = 0;
    for (;;) {
      double u = rng.uniform();
      if (u < cross[side]) {
        ++r[side];
        side = 1 - side;
      } else if (u >= stay[side]) {
        break;
      }
    }
    const int other = 1 - side;
    if (degenerate[other]) {
      r[other] = kInfiniteCount;
    } else {
      for (;;) {
        double u = rng.uniform();
        if (u < cross[other]) {
          ++r[other];
        } else if (u >= stay[other]) {
          break;
        }
      }
    }
    const bool far = side == 1;
    const bool predicted_far = r[0] == kInfiniteCount || (r[1] != kInfiniteCount && r[0] > r[1]);
    if (far != predicted_far) ++out.rule_violations;
    out.r_v.push_back(r[0]);
    out.r_x.push_back(r[1]);
    out.far.push_back(far ? 1 : 0);
  }
  return out;
}

double far_side_probability(double qv, double qx) {
  // sum_k P(R_x = k) P(R_v > k)
  double total = 0.0;
  double px = qx, tail_v = 1.0 - qv;
  for (int64_t k = 0; k < 100000000; ++k) {
    double term = px * tail_v;
    total += term;
    if (term < 1e-19 && k > 10) break;
    px *= 1.0 - qx;
    tail_v *= 1.0 - qv;
  }
  return total;
}

namespace {

struct MarginalFit {
  double tv = 0.0;
  double gof_p = 1.0;
};

MarginalFit compare_geometric(const std::vector<int64_t>& r, double q) {
  MarginalFit out;
  if (r.empty()) return out;
  int64_t kmax = *std::max_element(r.begin(), r.end());
  std::vector<double> counts(static_cast<size_t>(kmax + 2), 0.0);
  for (auto v : r) counts[static_cast<size_t>(v)] += 1.0;
  std::vector<double> probs(counts.size(), 0.0);
  double pk = q, used = 0.0;
  for (int64_t k = 0; k <= kmax; ++k) {
    probs[k] = pk;
    used += pk;
    pk *= 1.0 - q;
  }
  probs.back() = std::max(0.0, 1.0 - used);  // tail beyond the largest observation
  const double n = static_cast<double>(r.size());
  std::vector<double> emp(counts.size());
  for (size_t i = 0; i < counts.size(); ++i) emp[i] = counts[i] / n;
  out.tv = stats::total_variation(emp, probs);
  out.gof_p = stats::chi2_goodness_of_fit(counts, probs).p_value;
  return out;
}

}  // namespace

CrossingReport verify_crossing_claim(const std::vector<CrossingGridPoint>& grid, int64_t trials,
                                     uint64_t seed) {
  CrossingReport rep;
  double pooled_stat = 0.0, pooled_dof = 0.0;
  for (size_t c = 0; c < grid.size(); ++c) {
    const auto& g = grid[c];
    CrossingCell cell;
    cell.dv = cell.dx = g.local_degree;
    cell.pv = cell.px = g.local_return;
    auto law = excursion_simulator(cell.dv, cell.pv, cell.dx, cell.px, trials,
                                   derive_seed(seed, {static_cast<uint64_t>(c)}));
    const double q = crossing_parameter(cell.dv, cell.pv);
    if (law.both_degenerate || q <= 0.0) {
      rep.cells.push_back(cell);
      continue;
    }
    auto fv = compare_geometric(law.r_v, q);
    auto fx = compare_geometric(law.r_x, q);
    cell.tv_v = fv.tv;
    cell.tv_x = fx.tv;
    cell.gof_p_v = fv.gof_p;
    cell.gof_p_x = fx.gof_p;

    // Contingency table of (R(v), R(x)) with the tail lumped at `cap`.
    const int cap = 12;
    std::vector<std::vector<double>> table(cap + 1, std::vector<double>(cap + 1, 0.0));
    for (size_t i = 0; i < law.r_v.size(); ++i) {
      auto a = static_cast<size_t>(std::min<int64_t>(law.r_v[i], cap));
      auto b = static_cast<size_t>(std::min<int64_t>(law.r_x[i], cap));
      table[a][b] += 1.0;
    }
    cell.independence = stats::chi2_independence(table);
    pooled_stat += cell.independence.statistic;
    pooled_dof += cell.independence.dof;

    double far = 0.0;
    for (auto f : law.far) far += f;
    cell.far_empirical = far / static_cast<double>(trials);
    cell.far_exact = far_side_probability(q, q);
    cell.rule_violations = law.rule_violations;

    rep.max_tv = std::max({rep.max_tv, cell.tv_v, cell.tv_x});
    rep.min_cell_independence_p = std::min(rep.min_cell_independence_p, cell.independence.p_value);
    rep.rule_violations += law.rule_violations;
    rep.cells.push_back(cell);
  }
  if (pooled_dof > 0.0) rep.pooled_independence_p = stats::chi2_sf(pooled_stat, pooled_dof);
  return rep;
}

// ------------------------------------------------------------ ledger

void ErrorLedger::add(int walk, int64_t time, int type) {
  ++counts[static_cast<size_t>(type)];
  events.push_back({walk, time, type});
}

bool ErrorLedger::good() const { return total() == 0; }

int64_t ErrorLedger::total() const {
  int64_t s = 0;
  for (int t = 1; t <= 6; ++t) s += counts[t];
  return s;
}

// ------------------------------------------------------------- replay

namespace {

struct Edge {
  LatticePoint a, b;
  bool operator==(const Edge&) const = default;
};

Edge make_edge(const LatticePoint& x, const LatticePoint& y) {
  return x < y ? Edge{x, y} : Edge{y, x};
}

struct EdgeHash {
  size_t operator()(const Edge& e) const {
    return static_cast<size_t>(hash_point(e.b, hash_point(e.a, 0x51ed27ULL)));
  }
};

using PointSet = std::unordered_set<LatticePoint, PointHash>;

std::vector<LatticePoint> long_neighbors(Environment& env, const LatticePoint& u, double l2) {
  std::vector<LatticePoint> out;
  for (const auto& y : env.neighbors(u))
    if (norm2_squared(y - u) > l2) out.push_back(y);
  return out;
}

int local_degree(Environment& env, const LatticePoint& u, double r2) {
  int c = 0;
  for (const auto& y : env.neighbors(u))
    if (norm2_squared(y - u) <= r2) ++c;
  return c;
}

// Lattice points of the closed ball, relative to its centre.
std::vector<LatticePoint> ball_offsets(int d, double r2) {
  std::vector<LatticePoint> out;
  auto ri = static_cast<int64_t>(std::floor(std::sqrt(r2) + 1e-9));
  LatticePoint j;
  for (int a = 0; a < d; ++a) j.c[a] = -ri;
  for (;;) {
    if (norm2_squared(j) <= r2) out.push_back(j);
    int a = 0;
    while (a < d && j.c[a] == ri) j.c[a++] = -ri;
    if (a == d) break;
    ++j.c[a];
  }
  return out;
}

class Replay {
 public:
  Replay(Environment& env, const CouplingParams& p, const DetectOptions& opt, DetectionResult& res)
      : env_(env), p_(p), opt_(opt), res_(res) {
    l2_ = p.long_threshold() * p.long_threshold();
    r2_ = p.ball_radius_sq();
    h_ = p.return_window();
    T_ = p.phase_length();
    window_ = static_cast<int64_t>(std::floor(h_ + 1e-12));
    offsets_ = ball_offsets(env.config().d, r2_);
  }

  void run_walk(int l, const WalkPath& path) {
    const auto& X = path.steps;
    const int64_t n = path.horizon();
    int64_t special_until = -1;
    for (int64_t i = 0; i <= n; ++i) {
      const LatticePoint& u = X[i];
      if (i <= special_until) {
        absorb(u);
        continue;
      }
      const bool was_known = known_.count(u) > 0;
      auto lng = long_neighbors(env_, u, l2_);
      if (was_known) {
        if (!lng.empty()) error(l, i, 1);
        absorb(u);
        continue;
      }
      if (lng.empty()) {
        absorb(u);
        continue;
      }
      if (lng.size() >= 2 || near_known(lng[0])) {
        error(l, i, 2);
        absorb(u);
        continue;
      }
      const LatticePoint x = lng[0];
      absorb(u);
      special_phase(l, i, path, u, x);
      special_until = i + T_;
    }
  }

 private:
  void error(int l, int64_t t, int type) {
    res_.ledger.add(l, t, type);
    res_.walk_error[static_cast<size_t>(l)] = 1;
  }

  void absorb(const LatticePoint& u) {
    if (!known_.insert(u).second && absorbed_.count(u)) return;
    absorbed_.insert(u);
    for (const auto& y : long_neighbors(env_, u, l2_)) {
      known_.insert(y);
      discovered_.insert(make_edge(u, y));
    }
  }

  bool near_known(const LatticePoint& y) const {
    if (offsets_.size() <= known_.size()) {
      for (const auto& j : offsets_)
        if (known_.count(y + j)) return true;
      return false;
    }
    for (const auto& z : known_)
      if (norm2_squared(z - y) <= r2_) return true;
    return false;
  }

  void special_phase(int l, int64_t e, const WalkPath& path, const LatticePoint& v,
                     const LatticePoint& x) {
    const auto& X = path.steps;
    const int64_t n = path.horizon();
    PhaseRecord ph;
    ph.walk = l;
    ph.entry = e;
    ph.v = v;
    ph.x = x;
    ph.local_degree_v = local_degree(env_, v, r2_);
    ph.local_degree_x = local_degree(env_, x, r2_);
    if (static_cast<int>(env_.degree(v)) != ph.local_degree_v + 1 ||
        static_cast<int>(env_.degree(x)) != ph.local_degree_x + 1) {
      ph.type3 = true;
      error(l, e, 3);
    }
    if (opt_.local_returns) {
      ph.local_return_v = local_characteristics(v, env_, p_, opt_.dp_budget, opt_.mc_trials,
                                                derive_seed(7, {static_cast<uint64_t>(e)})).local_return;
      ph.local_return_x = local_characteristics(x, env_, p_, opt_.dp_budget, opt_.mc_trials,
                                                derive_seed(8, {static_cast<uint64_t>(e)})).local_return;
    }
    const int64_t last = std::min(e + T_, n);
    ph.truncated = e + T_ > n;

    auto in_v = [&](const LatticePoint& y) { return norm2_squared(y - v) <= r2_; };
    auto in_x = [&](const LatticePoint& y) { return norm2_squared(y - x) <= r2_; };
    const Edge bridge = make_edge(v, x);

    // tau: first step that leaves the localized graph
    ph.tau = T_;
    for (int64_t t = 1; e + t <= last; ++t) {
      const auto& a = X[e + t - 1];
      const auto& b = X[e + t];
      bool ok = (in_v(a) && in_v(b)) || (in_x(a) && in_x(b)) || make_edge(a, b) == bridge;
      if (!ok) {
        ph.tau = t - 1;  // last time still inside the localized graph
        break;
      }
    }
    if (ph.truncated && ph.tau == T_) ph.tau = last - e;

    // new long edges found during the phase
    for (int64_t t = 1; e + t <= last; ++t) {
      const auto& w = X[e + t];
      for (const auto& z : long_neighbors(env_, w, l2_)) {
        Edge ed = make_edge(w, z);
        if (ed == bridge || discovered_.count(ed)) continue;
        discovered_.insert(ed);
        if (!ph.type4) {
          ph.type4 = true;
          error(l, e + t, 4);
        }
      }
    }

    if (!ph.truncated) {
      if (ph.tau != T_) {
        ph.type5 = true;
        error(l, e + ph.tau + 1, 5);
      } else {
        // last_hit[t]: last time <= t at which Y is at v or x
        std::vector<int64_t> last_hit(static_cast<size_t>(T_ + 1));
        for (int64_t t = 0; t <= T_; ++t) {
          const auto& y = X[e + t];
          last_hit[t] = (y == v || y == x) ? t : (t > 0 ? last_hit[t - 1] : -1);
        }
        for (int64_t t = static_cast<int64_t>(std::floor(h_)) + 1; t <= T_; ++t) {
          if (static_cast<double>(t) <= h_) continue;
          auto window_start = static_cast<int64_t>(std::ceil(static_cast<double>(t) - h_ - 1e-12));
          if (last_hit[t] < std::max<int64_t>(window_start, 0)) {
            ph.tau_star = t;
            break;
          }
        }
        bool k_event = ph.tau_star >= 0 && ph.tau_star < T_ && last_hit[T_] < ph.tau_star;
        if (!k_event) {
          ph.type6 = true;
          error(l, e + T_, 6);
        } else {
          observe_crossings(ph, X, e);
        }
      }
      ph.settled_far = in_x(X[e + T_]);
      if (ph.rule_checked) {
        bool predicted_far = ph.r_v == kInfiniteCount ||
                             (ph.r_x != kInfiniteCount && ph.r_v > ph.r_x);
        ph.rule_ok = predicted_far == ph.settled_far;
      }
    }
    res_.phases.push_back(ph);
  }

  // Splits the phase path into excursions from v and x and reads off the
  // crossing counts before the first non-returning excursion of each side.
  void observe_crossings(PhaseRecord& ph, const std::vector<LatticePoint>& X, int64_t e) {
    int64_t crossings[2] = {0, 0};
    int64_t first_escape[2] = {kInfiniteCount, kInfiniteCount};
    for (int64_t t = 0; t < T_; ++t) {
      const auto& y = X[e + t];
      int side = y == ph.v ? 0 : (y == ph.x ? 1 : -1);
      if (side < 0 || first_escape[side] != kInfiniteCount) continue;
      const LatticePoint& partner = side == 0 ? ph.x : ph.v;
      if (X[e + t + 1] == partner) {
        ++crossings[side];
        continue;
      }
      int64_t back = -1;
      for (int64_t s = t + 1; s <= T_; ++s) {
        if (X[e + s] == y) {
          back = s;
          break;
        }
        if (X[e + s] == partner) break;
      }
      // Non-returning exactly when the gap holds a full escape window [t'-h, t'].
      if (back < 0 || back - t >= window_ + 2) first_escape[side] = crossings[side];
    }
    ph.r_v = first_escape[0];
    ph.r_x = first_escape[1];
    ph.rule_checked = ph.r_v != kInfiniteCount || ph.r_x != kInfiniteCount;
  }

  Environment& env_;
  const CouplingParams& p_;
  const DetectOptions& opt_;
  DetectionResult& res_;
  double l2_, r2_, h_;
  int64_t T_, window_;
  std::vector<LatticePoint> offsets_;
  PointSet known_;
  PointSet absorbed_;
  std::unordered_set<Edge, EdgeHash> discovered_;
};

}  // namespace

DetectionResult detect_bad_events(const std::vector<WalkPath>& paths, Environment& env,
                                  const CouplingParams& p, const DetectOptions& opt) {
  p.validate();
  DetectionResult res;
  res.params = p;
  res.walk_error.assign(paths.size(), 0);
  Replay replay(env, p, opt, res);
  for (size_t l = 0; l < paths.size(); ++l) replay.run_walk(static_cast<int>(l), paths[l]);
  if (!paths.empty()) res.bad = bad_event_indicators(paths, env, p);
  return res;
}

BadEvents bad_event_indicators(const std::vector<WalkPath>& paths, Environment& env,
                               const CouplingParams& p) {
  BadEvents out;
  if (paths.empty()) return out;
  const double l2 = p.long_threshold() * p.long_threshold();
  const double r2 = p.ball_radius_sq();
  const double r = p.ball_radius();
  const int64_t T = p.phase_length();
  const auto h = static_cast<int64_t>(std::floor(p.return_window() + 1e-12));
  const auto& X = paths[0].steps;
  const int64_t n = paths[0].horizon();

  std::unordered_map<LatticePoint, std::vector<int64_t>, PointHash> visits;
  for (int64_t t = 0; t <= n; ++t) visits[X[t]].push_back(t);

  for (const auto& [u, times] : visits) {
    auto lng = long_neighbors(env, u, l2);
    if (lng.empty()) continue;
    for (const auto& y : lng) {
      auto vy = visits.find(y);
      // D: the far endpoint is first reached by some other route.
      if (vy != visits.end()) {
        int64_t tu = times.front(), ty = vy->second.front();
        if (tu < ty && !(X[ty - 1] == u)) out.d = true;
      }
      // E: either endpoint carries a further edge of length >= 2^{delta k}.
      auto far_from_both = [&](const LatticePoint& z) {
        return norm2_squared(z - u) >= r2 && norm2_squared(z - y) >= r2;
      };
      for (const auto& z : env.neighbors(u))
        if (!(z == y) && far_from_both(z)) out.e = true;
      for (const auto& z : env.neighbors(y))
        if (!(z == u) && far_from_both(z)) out.e = true;
      // F: a visit to u or y at least 2^{gamma k + 1} after the first visit to u.
      int64_t latest = times.back();
      if (vy != visits.end()) latest = std::max(latest, vy->second.back());
      if (latest >= times.front() + T) out.f = true;
    }
    // G: from some visit to u, no long partner is reached within the phase
    // length, yet the walk leaves B(u, 2^{delta k}) within 2^{gamma k} steps.
    for (int64_t j : times) {
      bool crossed = false;
      for (int64_t t = j + 1; t <= std::min(n, j + T) && !crossed; ++t)
        for (const auto& y : lng)
          if (X[t] == y) crossed = true;
      if (crossed) continue;
      for (int64_t l = 0; l <= h && j + l <= n; ++l) {
        if (norm2(X[j + l] - u) > r) {
          out.g = true;
          break;
        }
      }
    }
  }

  if (paths.size() >= 2) {
    auto touched = [&](const WalkPath& w) {
      std::unordered_set<Edge, EdgeHash> edges;
      PointSet seen;
      for (const auto& u : w.steps) {
        if (!seen.insert(u).second) continue;
        for (const auto& y : long_neighbors(env, u, l2)) edges.insert(make_edge(u, y));
      }
      return edges;
    };
    auto a = touched(paths[0]);
    auto b = touched(paths[1]);
    for (const auto& ed : b)
      if (a.count(ed)) {
        out.f_star = true;
        break;
      }
  }
  return out;
}

// ------------------------------------------------------- regeneration

RegenerationTimes regeneration_from_phases(const std::vector<PhaseRecord>& phases, int walk,
                                           const CouplingParams& p) {
  RegenerationTimes out;
  for (const auto& ph : phases) {
    if (ph.walk != walk) continue;
    out.entry_times.push_back(ph.entry);
    if (!ph.truncated && ph.settled_far) out.regenerations.push_back(ph.entry);
  }
  std::sort(out.entry_times.begin(), out.entry_times.end());
  std::sort(out.regenerations.begin(), out.regenerations.end());
  const int64_t horizon = p.horizon();
  for (auto t : out.entry_times) out.beta_tilde += t <= horizon;
  for (auto t : out.regenerations) out.beta += t <= horizon;
  for (size_t j = 1; j < out.regenerations.size(); ++j)
    out.max_gap = std::max(out.max_gap, out.regenerations[j] - out.regenerations[j - 1]);
  return out;
}

RegenerationTimes regeneration_times(const WalkPath& path, Environment& env,
                                     const CouplingParams& p) {
  auto res = detect_bad_events({path}, env, p);
  return regeneration_from_phases(res.phases, 0, p);
}

int64_t BlockNovelty::block_total() const {
  int64_t s = 0;
  for (auto b : blocks) s += b;
  return s;
}

BlockNovelty block_novelty(const WalkPath& path, Environment& env, const CouplingParams& p,
                           const RegenerationTimes& regen, double epsilon1) {
  BlockNovelty out;
  const auto& X = path.steps;
  const int64_t n = path.horizon();
  const double r2 = p.ball_radius_sq();
  const double r = p.ball_radius();
  const double first_scale_sq = std::pow(2.0, 2.0 * epsilon1 * p.k);
  const int64_t T = p.phase_length();
  const auto& m = regen.regenerations;
  const int d = path.d;

  // Block j (0-based) spans [start_j, m_j]; start_0 = 0, start_j = m_{j-1} + T.
  std::vector<int64_t> block_of(static_cast<size_t>(n + 1), -1);
  for (size_t j = 0; j < m.size(); ++j) {
    int64_t lo = j == 0 ? 0 : m[j - 1] + T;
    for (int64_t i = lo; i <= std::min(m[j], n); ++i) block_of[i] = static_cast<int64_t>(j);
  }
  out.blocks.assign(m.size(), 0);

  // Earlier positions bucketed on a grid of cell size r for the re-entry test.
  auto cell_of = [&](const LatticePoint& x) {
    LatticePoint c;
    for (int a = 0; a < d; ++a) c.c[a] = static_cast<int64_t>(std::floor(static_cast<double>(x[a]) / r));
    return c;
  };
  std::unordered_map<LatticePoint, std::vector<LatticePoint>, PointHash> grid;
  int64_t filled_to = -1;  // positions 0..filled_to are in the grid
  auto fill_until = [&](int64_t t) {
    while (filled_to < t) {
      ++filled_to;
      grid[cell_of(X[filled_to])].push_back(X[filled_to]);
    }
  };
  auto near_earlier = [&](const LatticePoint& x) {
    LatticePoint c = cell_of(x);
    LatticePoint off;
    for (int a = 0; a < d; ++a) off.c[a] = -1;
    for (;;) {
      auto it = grid.find(c + off);
      if (it != grid.end())
        for (const auto& z : it->second)
          if (norm2_squared(z - x) <= r2) return true;
      int a = 0;
      while (a < d && off.c[a] == 1) off.c[a++] = -1;
      if (a == d) break;
      ++off.c[a];
    }
    return false;
  };
  auto has_edge_beyond = [&](const LatticePoint& x, double scale_sq) {
    for (const auto& y : env.neighbors(x))
      if (norm2_squared(y - x) > scale_sq) return true;
    return false;
  };

  PointSet seen;
  for (int64_t i = 0; i <= n; ++i) {
    if (!seen.insert(X[i]).second) continue;
    ++out.distinct;
    const int64_t j = block_of[i];
    if (j < 0) {
      ++out.outside_blocks;
      continue;
    }
    if (j == 0) {
      if (has_edge_beyond(X[i], first_scale_sq)) ++out.long_attached;
      else ++out.blocks[0];
      continue;
    }
    if (has_edge_beyond(X[i], r2)) {
      ++out.long_attached;
      continue;
    }
    fill_until(m[j - 1]);
    if (near_earlier(X[i])) {
      ++out.ball_reentries;
      continue;
    }
    ++out.blocks[j];
  }
  return out;
}

nlohmann::json to_json(const DetectionResult& r) {
  nlohmann::json j;
  j["params"] = r.params.to_json();
  nlohmann::json counts;
  for (int t = 1; t <= 6; ++t) counts[std::to_string(t)] = r.ledger.counts[t];
  j["counts"] = counts;
  j["good"] = r.good();
  nlohmann::json events = nlohmann::json::array();
  for (const auto& e : r.ledger.events) events.push_back({{"walk", e.walk}, {"time", e.time}, {"type", e.type}});
  j["events"] = events;
  nlohmann::json phases = nlohmann::json::array();
  for (const auto& ph : r.phases) {
    phases.push_back({{"walk", ph.walk},
                      {"entry", ph.entry},
                      {"local_degree_v", ph.local_degree_v},
                      {"local_degree_x", ph.local_degree_x},
                      {"tau", ph.tau},
                      {"tau_star", ph.tau_star},
                      {"truncated", ph.truncated},
                      {"settled_far", ph.settled_far},
                      {"r_v", ph.r_v},
                      {"r_x", ph.r_x},
                      {"rule_ok", ph.rule_ok}});
  }
  j["phases"] = phases;
  j["bad_events"] = {{"F_star", r.bad.f_star}, {"D", r.bad.d}, {"E", r.bad.e},
                     {"F", r.bad.f},           {"G", r.bad.g}, {"H", r.bad.h()}};
  return j;
}

}  // namespace lrp
