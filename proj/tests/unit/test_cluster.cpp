#include <doctest.h>

#include <algorithm>
#include <queue>

#include "lrp/cluster.hpp"

using namespace lrp;

namespace {

EnvConfig boxed_cfg(int64_t n, double beta, bool nn, uint64_t seed, double s = 3.2) {
  EnvConfig c;
  c.d = 2;
  c.s = s;
  c.beta = beta;
  c.nn_open = nn;
  c.seed = seed;
  c.backend = Backend::kExactBoxed;
  c.box_half_width = n;
  return c;
}

// Component sizes by breadth-first search over pair_state queries.
std::vector<int64_t> bfs_sizes(Environment& env, int64_t n) {
  std::vector<LatticePoint> pts;
  for (int64_t a = -n; a <= n; ++a)
    for (int64_t b = -n; b <= n; ++b) {
      LatticePoint p;
      p.c[0] = a;
      p.c[1] = b;
      pts.push_back(p);
    }
  std::vector<char> seen(pts.size(), 0);
  std::vector<int64_t> sizes;
  for (size_t s = 0; s < pts.size(); ++s) {
    if (seen[s]) continue;
    seen[s] = 1;
    std::queue<size_t> q;
    q.push(s);
    int64_t count = 0;
    while (!q.empty()) {
      size_t u = q.front();
      q.pop();
      ++count;
      for (size_t v = 0; v < pts.size(); ++v) {
        if (seen[v] || v == u) continue;
        if (env.pair_state(pts[u], pts[v])) {
          seen[v] = 1;
          q.push(v);
        }
      }
    }
    sizes.push_back(count);
  }
  std::sort(sizes.rbegin(), sizes.rend());
  return sizes;
}

}  // namespace

TEST_CASE("union-find merges by size with deterministic roots") {
  UnionFind uf(6);
  CHECK(uf.unite(3, 1));
  CHECK(uf.find(3) == 1);
  CHECK(uf.unite(4, 5));
  CHECK(uf.unite(5, 1));  // equal sizes: smaller root wins
  CHECK(uf.find(4) == 1);
  CHECK(uf.size_of(5) == 4);
  CHECK_FALSE(uf.unite(3, 4));
}

TEST_CASE("decompose trivial environments") {
  Environment empty(boxed_cfg(4, 0.0, false, 1));
  auto a = decompose(empty, 4);
  CHECK(a.sizes.size() == 81);
  CHECK(std::all_of(a.sizes.begin(), a.sizes.end(), [](int64_t s) { return s == 1; }));

  Environment grid(boxed_cfg(6, 0.5, true, 1));
  auto b = decompose(grid, 6);
  REQUIRE(b.sizes.size() == 1);
  CHECK(b.n1() == 169);
  CHECK(b.n2() == 0);
  CHECK(b.in_largest(LatticePoint{}));

  Environment beta_zero(boxed_cfg(4, 0.0, false, 1));
  CHECK_THROWS_AS(decompose(beta_zero, 5), std::invalid_argument);
  EnvConfig lazy;
  Environment lz(lazy);
  CHECK_THROWS_AS(decompose(lz, 2), std::invalid_argument);
}

TEST_CASE("union-find sizes equal the breadth-first oracle") {
  for (int64_t n : {8, 12, 16}) {
    for (uint64_t seed = 1; seed <= 3; ++seed) {
      Environment env(boxed_cfg(n, 0.45, false, seed));
      auto dec = decompose(env, n);
      CHECK(dec.sizes == bfs_sizes(env, n));
      int64_t total = 0;
      for (auto s : dec.sizes) total += s;
      CHECK(total == (2 * n + 1) * (2 * n + 1));
      auto again = decompose(env, n);
      CHECK(again.labels == dec.labels);
    }
  }
}

TEST_CASE("sub-box decomposition keeps internal edges only") {
  Environment env(boxed_cfg(10, 0.5, false, 4));
  auto dec = decompose(env, 5);
  CHECK(dec.volume() == 121);
  for (const auto& [u, v] : env.box_edges()) {
    auto x = env.box_point(u), y = env.box_point(v);
    if (norm_inf(x) <= 5 && norm_inf(y) <= 5) CHECK(dec.labels[dec.index_of(x)] == dec.labels[dec.index_of(y)]);
  }
}

TEST_CASE("second cluster scaling with open nearest neighbours has no second cluster") {
  EnvConfig c = boxed_cfg(4, 1.0, true, 1);
  auto sc = second_cluster_scaling(c, {4, 8}, 3, 5);
  for (const auto& r : sc.rows) {
    CHECK(r.median_n2 == 0.0);
    CHECK(r.median_n1 == doctest::Approx(std::pow(2.0 * r.n + 1, 2)));
  }
  CHECK_FALSE(sc.fitted);
}

TEST_CASE("escape probability conditioning") {
  EnvConfig open = boxed_cfg(4, 1.0, true, 1);
  CHECK(escape_given_not_largest(open, 4, 5, 1).null_event);

  EnvConfig sub = boxed_cfg(4, 0.3, false, 1);
  auto e = escape_given_not_largest(sub, 4, 40, 2);
  CHECK_FALSE(e.null_event);
  CHECK(e.conditioned > 0);
  CHECK(e.escapes <= e.conditioned);
  CHECK(e.interval.lo <= e.probability);
  CHECK(e.interval.hi >= e.probability);
}

TEST_CASE("breadth-first labels match union-find") {
  for (int64_t n : {8, 13, 20}) {
    for (uint64_t seed = 1; seed <= 3; ++seed) {
      Environment env(boxed_cfg(n, 0.45, false, seed));
      auto dec = decompose(env, n);
      auto bfs = bfs_labels(env, n);
      CHECK(partitions_agree(dec.labels, bfs));
      CHECK(dec.point_of(dec.index_of(env.box_point(5))) == env.box_point(5));
    }
  }
  CHECK_FALSE(partitions_agree({0, 0, 2}, {0, 1, 1}));
  CHECK(partitions_agree({4, 4, 7}, {0, 0, 1}));
}
