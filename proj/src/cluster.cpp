#include "lrp/cluster.hpp"

#include <unordered_map>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace lrp {

UnionFind::UnionFind(int64_t n) : parent_(static_cast<size_t>(n)), size_(static_cast<size_t>(n), 1) {
  std::iota(parent_.begin(), parent_.end(), int64_t{0});
}

int64_t UnionFind::find(int64_t v) {
  int64_t root = v;
  while (parent_[root] != root) root = parent_[root];
  while (parent_[v] != root) {
    int64_t next = parent_[v];
    parent_[v] = root;
    v = next;
  }
  return root;
}

bool UnionFind::unite(int64_t a, int64_t b) {
  a = find(a);
  b = find(b);
  if (a == b) return false;
  if (size_[a] < size_[b] || (size_[a] == size_[b] && b < a)) std::swap(a, b);
  parent_[b] = a;
  size_[a] += size_[b];
  return true;
}

int64_t ClusterDecomposition::index_of(const LatticePoint& x) const {
  const int64_t w = 2 * half_width + 1;
  int64_t idx = 0;
  for (int a = 0; a < d; ++a) {
    if (std::llabs(x[a]) > half_width) throw std::out_of_range("point outside the decomposed box");
    idx = idx * w + (x[a] + half_width);
  }
  return idx;
}

LatticePoint ClusterDecomposition::point_of(int64_t idx) const {
  const int64_t w = 2 * half_width + 1;
  LatticePoint x;
  for (int a = d - 1; a >= 0; --a) {
    x.c[a] = idx % w - half_width;
    idx /= w;
  }
  return x;
}

ClusterDecomposition decompose(Environment& env, int64_t n) {
  const auto& cfg = env.config();
  if (!env.is_boxed()) throw std::invalid_argument("decompose requires the ExactBoxed backend");
  if (n < 0 || n > cfg.box_half_width) throw std::invalid_argument("decompose: N exceeds the box");
  ClusterDecomposition out;
  out.d = cfg.d;
  out.half_width = n;
  int64_t vol = 1;
  for (int a = 0; a < cfg.d; ++a) vol *= 2 * n + 1;

  UnionFind uf(vol);
  const bool same_box = n == cfg.box_half_width;
  for (const auto& [u, v] : env.box_edges()) {
    if (same_box) {
      uf.unite(u, v);
      continue;
    }
    LatticePoint x = env.box_point(u), y = env.box_point(v);
    if (norm_inf(x) > n || norm_inf(y) > n) continue;
    uf.unite(out.index_of(x), out.index_of(y));
  }
  out.labels.resize(static_cast<size_t>(vol));
  std::vector<std::pair<int64_t, int64_t>> roots;  // (size, root)
  for (int64_t i = 0; i < vol; ++i) {
    out.labels[i] = uf.find(i);
    if (out.labels[i] == i) roots.emplace_back(uf.size_of(i), i);
  }
  std::sort(roots.begin(), roots.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  out.sizes.reserve(roots.size());
  for (const auto& r : roots) out.sizes.push_back(r.first);
  if (!roots.empty()) out.largest_root = roots.front().second;
  return out;
}

std::vector<int64_t> bfs_labels(Environment& env, int64_t n) {
  const int d = env.config().d;
  int64_t vol = 1;
  for (int a = 0; a < d; ++a) vol *= 2 * n + 1;
  ClusterDecomposition geom;
  geom.d = d;
  geom.half_width = n;
  std::vector<int64_t> label(static_cast<size_t>(vol), -1);
  std::vector<int64_t> queue;
  for (int64_t s = 0; s < vol; ++s) {
    if (label[s] >= 0) continue;
    label[s] = s;
    queue.assign(1, s);
    for (size_t q = 0; q < queue.size(); ++q) {
      LatticePoint x = geom.point_of(queue[q]);
      for (const auto& y : env.neighbors(x)) {
        if (norm_inf(y) > n) continue;
        int64_t j = geom.index_of(y);
        if (label[j] >= 0) continue;
        label[j] = s;
        queue.push_back(j);
      }
    }
  }
  return label;
}

bool partitions_agree(const std::vector<int64_t>& a, const std::vector<int64_t>& b) {
  if (a.size() != b.size()) return false;
  std::unordered_map<int64_t, int64_t> ab, ba;
  for (size_t i = 0; i < a.size(); ++i) {
    auto [it, fresh] = ab.emplace(a[i], b[i]);
    if (!fresh && it->second != b[i]) return false;
    auto [jt, fresh2] = ba.emplace(b[i], a[i]);
    if (!fresh2 && jt->second != a[i]) return false;
  }
  return true;
}

namespace {

EnvConfig boxed(const EnvConfig& cfg, int64_t half_width, uint64_t seed) {
  EnvConfig c = cfg;
  c.backend = Backend::kExactBoxed;
  c.box_half_width = half_width;
  c.exact_mode = ExactMode::kAuto;
  c.seed = seed;
  return c;
}

}  // namespace

SecondClusterScaling second_cluster_scaling(const EnvConfig& cfg, const std::vector<int64_t>& n_list,
                                            int trials, uint64_t seed) {
  SecondClusterScaling out;
  for (int64_t n : n_list) {
    SecondClusterRow row;
    row.n = n;
    row.trials = trials;
    for (int t = 0; t < trials; ++t) {
      Environment env(boxed(cfg, n, derive_seed(seed, {static_cast<uint64_t>(n), static_cast<uint64_t>(t)})));
      auto dec = decompose(env, n);
      row.n1.push_back(dec.n1());
      row.n2.push_back(dec.n2());
    }
    if (trials > 0) {
      std::vector<double> a(row.n1.begin(), row.n1.end()), b(row.n2.begin(), row.n2.end());
      row.median_n1 = stats::median(a);
      row.median_n2 = stats::median(b);
      row.q90_n2 = stats::quantile(b, 0.9);
      row.max_n2 = *std::max_element(b.begin(), b.end());
    }
    out.rows.push_back(std::move(row));
  }
  std::vector<double> lx, llx, ly;
  for (const auto& r : out.rows) {
    if (r.median_n2 <= 0.0 || r.n < 3) continue;
    lx.push_back(std::log(static_cast<double>(r.n)));
    llx.push_back(std::log(std::log(static_cast<double>(r.n))));
    ly.push_back(std::log(r.median_n2));
  }
  if (lx.size() >= 2) {
    out.power_fit = stats::fit_line(lx, ly);
    out.polylog_fit = stats::fit_line(llx, ly);
    out.fitted = true;
  }
  return out;
}

EscapeEstimate escape_given_not_largest(const EnvConfig& cfg, int64_t n, int trials, uint64_t seed,
                                        int outer_factor) {
  EscapeEstimate est;
  est.n = n;
  est.trials = trials;
  if (outer_factor < 2) throw std::invalid_argument("escape: outer factor must be at least 2");
  if (cfg.nn_open) {
    // The box is connected through nearest-neighbour edges, so 0 is always in
    // the largest cluster.
    est.null_event = true;
    return est;
  }
  const LatticePoint origin{};
  for (int t = 0; t < trials; ++t) {
    Environment env(boxed(cfg, outer_factor * n,
                          derive_seed(seed, {static_cast<uint64_t>(n), static_cast<uint64_t>(t)})));
    auto inner = decompose(env, n);
    if (inner.in_largest(origin)) continue;
    ++est.conditioned;
    auto outer = decompose(env, outer_factor * n);
    const int64_t root = outer.labels[outer.index_of(origin)];
    bool escaped = false;
    for (int64_t i = 0; i < outer.volume() && !escaped; ++i) {
      if (outer.labels[i] == root && norm_inf(env.box_point(i)) > n) escaped = true;
    }
    est.escapes += escaped;
  }
  if (est.conditioned == 0) {
    est.null_event = true;
    return est;
  }
  est.probability = static_cast<double>(est.escapes) / est.conditioned;
  est.interval = stats::wilson_interval(est.escapes, est.conditioned);
  return est;
}

EscapeSweep escape_sweep(const EnvConfig& cfg, const std::vector<int64_t>& n_list, int trials,
                         uint64_t seed, int outer_factor) {
  EscapeSweep out;
  std::vector<double> x, y;
  for (int64_t n : n_list) {
    auto e = escape_given_not_largest(cfg, n, trials, seed, outer_factor);
    if (!e.null_event && e.escapes > 0) {
      x.push_back(std::log(static_cast<double>(n)));
      y.push_back(std::log(e.probability));
    }
    out.rows.push_back(e);
  }
  if (x.size() >= 2) {
    out.fit = stats::fit_line(x, y);
    out.fitted = true;
  }
  return out;
}

}  // namespace lrp
