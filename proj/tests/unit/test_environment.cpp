#include <doctest.h>

#include <cmath>
#include <sstream>

#include "lrp/environment.hpp"

using namespace lrp;

namespace {

LatticePoint pt(int64_t a, int64_t b = 0, int64_t c = 0) {
  LatticePoint p;
  p.c[0] = a;
  p.c[1] = b;
  p.c[2] = c;
  return p;
}

EnvConfig cfg2(double s = 3.2, double beta = 1.0, bool nn = true, uint64_t seed = 7) {
  EnvConfig c;
  c.d = 2;
  c.s = s;
  c.beta = beta;
  c.nn_open = nn;
  c.seed = seed;
  return c;
}

// Continuum mass of beta r^{-s} outside the square [-L, L]^2, by Simpson's
// rule over the boundary angle.
double outside_square_mass(double s, double beta, double L) {
  const int m = 2000;
  const double h = (M_PI / 4.0) / m;
  double acc = 0.0;
  for (int i = 0; i <= m; ++i) {
    double th = i * h;
    double f = std::pow(L / std::cos(th), 2.0 - s) / (s - 2.0);
    acc += f * (i == 0 || i == m ? 1.0 : (i % 2 ? 4.0 : 2.0));
  }
  return 8.0 * beta * acc * h / 3.0;
}

// Independent oracle: sum of beta |j|^{-s} over r_in < |j| with |j|_inf <= box,
// plus the continuum mass outside the box.
double long_mass_oracle(double s, double beta, double r_in, int64_t box) {
  double sum = 0.0;
  for (int64_t a = -box; a <= box; ++a) {
    for (int64_t b = -box; b <= box; ++b) {
      double r2 = static_cast<double>(a * a + b * b);
      if (r2 <= r_in * r_in) continue;
      sum += std::min(1.0, beta * std::pow(r2, -s / 2.0));
    }
  }
  return sum + outside_square_mass(s, beta, static_cast<double>(box) + 0.5);
}

}  // namespace

TEST_CASE("edge_probability examples") {
  EnvConfig c = cfg2(3.0, 1.0, false);
  CHECK(edge_probability(pt(3, 4), c) == doctest::Approx(0.008).epsilon(1e-12));
  EnvConfig nn = cfg2(5.0, 0.01, true);
  CHECK(edge_probability(pt(1, 0), nn) == 1.0);
  CHECK(edge_probability(pt(0, -1), nn) == 1.0);
  EnvConfig c4 = cfg2(4.0, 2.0, false);
  CHECK(edge_probability(pt(1, 1), c4) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK_THROWS_AS(edge_probability(pt(0, 0), c), std::invalid_argument);
}

TEST_CASE("edge_probability is symmetric and bounded") {
  EnvConfig c = cfg2(3.2, 3.0, true);
  for (int64_t a = -6; a <= 6; ++a) {
    for (int64_t b = -6; b <= 6; ++b) {
      if (a == 0 && b == 0) continue;
      double p = edge_probability(pt(a, b), c);
      CHECK(p >= 0.0);
      CHECK(p <= 1.0);
      CHECK(p == edge_probability(pt(-a, -b), c));
    }
  }
}

TEST_CASE("alpha examples") {
  EnvConfig c;
  c.d = 2;
  c.s = 3.2;
  CHECK(alpha(c) == doctest::Approx(1.2));
  c.d = 1;
  c.s = 1.5;
  CHECK(alpha(c) == doctest::Approx(0.5));
  c.d = 2;
  c.s = 3.0;
  CHECK(alpha(c) == doctest::Approx(1.0));
}

TEST_CASE("config parsing from key=value and JSON") {
  EnvConfig a = EnvConfig::parse("d=1\ns = 2.5 # comment\nbeta=0.5\nnn_open=true\nseed=99\n");
  CHECK(a.d == 1);
  CHECK(a.s == 2.5);
  CHECK(a.beta == 0.5);
  CHECK(a.nn_open);
  CHECK(a.seed == 99);
  EnvConfig b = EnvConfig::parse(R"({"d":2,"s":3.4,"backend":"exact","N":12})");
  CHECK(b.backend == Backend::kExactBoxed);
  CHECK(b.box_half_width == 12);
  EnvConfig c = EnvConfig::from_json(b.to_json());
  CHECK(c.s == 3.4);
  CHECK_THROWS(EnvConfig::parse("d=2\ns=1.5\n"));
  CHECK_THROWS(EnvConfig::parse("bogus=1\n"));
}

TEST_CASE("pair_state is deterministic and symmetric") {
  Environment env(cfg2());
  Environment env2(cfg2());
  for (int64_t a = -5; a <= 5; ++a) {
    LatticePoint x = pt(a, 2 * a);
    LatticePoint y = pt(a + 2, 2 * a - 1);
    bool s1 = env.pair_state(x, y);
    CHECK(s1 == env.pair_state(x, y));
    CHECK(s1 == env.pair_state(y, x));
    CHECK(s1 == env2.pair_state(y, x));
  }
  CHECK_THROWS(env.pair_state(pt(1, 1), pt(1, 1)));
}

TEST_CASE("hashed pair frequency matches the Bernoulli parameter") {
  EnvConfig c = cfg2(3.2, 1.0, true, 12345);
  LatticePoint j = pt(2, 1);
  double p = edge_probability(j, c);
  const int n = 1000000;
  int open = 0;
  for (int i = 0; i < n; ++i) {
    LatticePoint x = pt(i % 1000, i / 1000);
    if (pair_uniform(c.seed, x, x + j) < p) ++open;
  }
  double sigma = std::sqrt(p * (1.0 - p) / n);
  CHECK(std::fabs(static_cast<double>(open) / n - p) < 3.0 * sigma);
}

TEST_CASE("reveal_ball opens the forced nearest neighbours and is idempotent") {
  Environment env(cfg2(3.2, 0.3, true, 5));
  LocalAdjacency ball = env.reveal_ball(pt(0, 0), 1.0);
  REQUIRE(ball.vertices.size() == 5);
  int centre = ball.index_of(pt(0, 0));
  REQUIRE(centre >= 0);
  CHECK(ball.adjacency[centre].size() == 4);
  size_t revealed = env.revealed_vertex_count();
  size_t ledger = env.ledger_pair_count();
  LocalAdjacency again = env.reveal_ball(pt(0, 0), 1.0);
  CHECK(env.revealed_vertex_count() == revealed);
  CHECK(env.ledger_pair_count() == ledger);
  CHECK(again.edge_count() == ball.edge_count());
}

TEST_CASE("open pair count in a ball matches the summed probabilities") {
  // Oracle: sum of p over unordered pairs inside the closed ball of radius 3.
  EnvConfig base = cfg2(3.2, 1.0, false, 0);
  std::vector<LatticePoint> pts;
  for (int64_t a = -3; a <= 3; ++a)
    for (int64_t b = -3; b <= 3; ++b)
      if (a * a + b * b <= 9) pts.push_back(pt(a, b));
  double expected = 0.0, var = 0.0;
  for (size_t i = 0; i < pts.size(); ++i) {
    for (size_t k = i + 1; k < pts.size(); ++k) {
      LatticePoint j = pts[k] - pts[i];
      double r2 = static_cast<double>(j.c[0] * j.c[0] + j.c[1] * j.c[1]);
      double p = std::min(1.0, std::pow(r2, -1.6));
      expected += p;
      var += p * (1.0 - p);
    }
  }
  const int seeds = 10000;
  double total = 0.0;
  for (int t = 0; t < seeds; ++t) {
    EnvConfig c = base;
    c.seed = 1000 + t;
    Environment env(c);
    total += static_cast<double>(env.reveal_ball(pt(0, 0), 3.0).edge_count());
  }
  double m = total / seeds;
  CHECK(std::fabs(m - expected) < 3.0 * std::sqrt(var / seeds));
}

TEST_CASE("beta zero gives no long edges") {
  Environment env(cfg2(3.2, 0.0, true, 3));
  for (int i = 0; i < 100; ++i) {
    CHECK(env.sample_incident_long_edges(pt(1000 * i, 0)).empty());
  }
  CHECK(env.neighbors(pt(0, 0)).size() == 4);
}

TEST_CASE("long-complete vertices reject a second shell sampling") {
  Environment env(cfg2());
  env.sample_incident_long_edges(pt(0, 0));
  CHECK(env.is_long_complete(pt(0, 0)));
  CHECK_THROWS_AS(env.sample_incident_long_edges(pt(0, 0)), std::logic_error);
}

TEST_CASE("shell sampler mean count matches direct summation") {
  EnvConfig c = cfg2(3.2, 1.0, true, 77);
  ShellSampler sampler(c, 8.0, c.r_max);
  double oracle = long_mass_oracle(3.2, 1.0, 8.0, 2000);
  Rng rng(2024);
  const int n = 100000;
  double total = 0.0;
  std::vector<LatticePoint> out;
  for (int i = 0; i < n; ++i) {
    out.clear();
    sampler.sample(rng, out);
    total += static_cast<double>(out.size());
    for (const auto& j : out) CHECK_MESSAGE(norm2(j) > 8.0, "inside cutoff");
  }
  double m = total / n;
  // Sum of independent Bernoullis: variance below the mean.
  CHECK(std::fabs(m - oracle) < 3.0 * std::sqrt(oracle / n));
}

TEST_CASE("longest incident edge law matches the exact product") {
  EnvConfig c = cfg2(3.2, 1.0, true, 78);
  ShellSampler sampler(c, 8.0, c.r_max);
  const int n = 100000;
  std::vector<double> radii = {10.0, 20.0, 50.0, 100.0};
  std::vector<int> exceed(radii.size(), 0);
  Rng rng(99);
  std::vector<LatticePoint> out;
  for (int i = 0; i < n; ++i) {
    out.clear();
    sampler.sample(rng, out);
    double longest = 0.0;
    for (const auto& j : out) longest = std::max(longest, norm2(j));
    for (size_t k = 0; k < radii.size(); ++k)
      if (longest > radii[k]) ++exceed[k];
  }
  for (size_t k = 0; k < radii.size(); ++k) {
    // 1 - prod_{|j|>r} (1 - p(j)), summed in logs over a 2000 box plus tail.
    double log_prod = 0.0;
    const int64_t box = 2000;
    for (int64_t a = -box; a <= box; ++a) {
      for (int64_t b = -box; b <= box; ++b) {
        double r2 = static_cast<double>(a * a + b * b);
        if (r2 <= radii[k] * radii[k]) continue;
        log_prod += std::log1p(-std::min(1.0, std::pow(r2, -1.6)));
      }
    }
    log_prod -= outside_square_mass(3.2, 1.0, box + 0.5);
    double pexact = 1.0 - std::exp(log_prod);
    double pemp = static_cast<double>(exceed[k]) / n;
    double sigma = std::sqrt(pexact * (1.0 - pexact) / n);
    CHECK_MESSAGE(std::fabs(pemp - pexact) < 3.0 * sigma, "r=" << radii[k]);
  }
}

TEST_CASE("lazy environment is symmetric and replayable") {
  auto run = [](uint64_t seed) {
    Environment env(cfg2(3.2, 2.0, true, seed));
    std::vector<std::vector<LatticePoint>> lists;
    for (int64_t a = -20; a <= 20; a += 3) {
      for (int64_t b = -20; b <= 20; b += 5) lists.push_back(env.neighbors(pt(a, b)));
    }
    // Every open edge of a complete vertex is listed at the other end.
    for (int64_t a = -20; a <= 20; a += 3) {
      for (int64_t b = -20; b <= 20; b += 5) {
        LatticePoint x = pt(a, b);
        std::vector<LatticePoint> nb = env.neighbors(x);
        for (const auto& y : nb) {
          const auto& back = env.neighbors(y);
          CHECK(std::find(back.begin(), back.end(), x) != back.end());
        }
      }
    }
    return lists;
  };
  CHECK(run(41) == run(41));
  CHECK(run(41) != run(42));
}

TEST_CASE("pair_state agrees with the sampled long edges") {
  Environment env(cfg2(3.2, 4.0, true, 8));
  LatticePoint x = pt(0, 0);
  auto longs = env.sample_incident_long_edges(x);
  for (const auto& y : longs) CHECK(env.pair_state(x, y));
  // A long pair determined first through pair_state is excluded later.
  LatticePoint u = pt(500, 0), v = pt(500, 9);
  bool s = env.pair_state(u, v);
  const auto& nb = env.neighbors(u);
  CHECK((std::find(nb.begin(), nb.end(), v) != nb.end()) == s);
  CHECK(env.pair_state(v, u) == s);
}

TEST_CASE("exact boxed backend stays in the box") {
  EnvConfig c = cfg2(3.2, 1.0, true, 11);
  c.backend = Backend::kExactBoxed;
  c.box_half_width = 10;
  Environment env(c);
  for (int64_t a = -10; a <= 10; a += 5) {
    for (const auto& y : env.neighbors(pt(a, 3))) CHECK(env.in_box(y));
  }
  CHECK_THROWS_AS(env.pair_state(pt(0, 0), pt(11, 0)), std::out_of_range);
  CHECK_THROWS_AS(env.neighbors(pt(0, 12)), std::out_of_range);
  // Box edge list agrees with the per-vertex lists.
  const auto& edges = env.box_edges();
  size_t deg_sum = 0;
  for (int64_t i = 0; i < env.box_volume(); ++i) deg_sum += env.neighbors(env.box_point(i)).size();
  CHECK(deg_sum == 2 * edges.size());
}

TEST_CASE("displacement-skip materialization matches the hashed law") {
  // Oracle: expected edge count = sum over in-box pairs of p.
  EnvConfig c = cfg2(3.2, 0.7, false, 0);
  c.backend = Backend::kExactBoxed;
  c.box_half_width = 6;
  double expected = 0.0;
  const int64_t n = 6, w = 13;
  for (int64_t i = 0; i < w * w; ++i) {
    for (int64_t k = i + 1; k < w * w; ++k) {
      LatticePoint j = pt(k / w - i / w, k % w - i % w);
      expected += edge_probability(j, c);
    }
  }
  (void)n;
  double hash_total = 0.0, skip_total = 0.0;
  const int trials = 300;
  for (int t = 0; t < trials; ++t) {
    c.seed = 500 + t;
    c.exact_mode = ExactMode::kHashEnumeration;
    Environment eh(c);
    hash_total += static_cast<double>(eh.box_edges().size());
    c.exact_mode = ExactMode::kDisplacementSkip;
    Environment es(c);
    skip_total += static_cast<double>(es.box_edges().size());
    CHECK(es.materialized());
  }
  double sd = std::sqrt(expected / trials);
  CHECK(std::fabs(hash_total / trials - expected) < 4.0 * sd);
  CHECK(std::fabs(skip_total / trials - expected) < 4.0 * sd);
}

TEST_CASE("skip-materialized pair_state agrees with neighbour lists") {
  EnvConfig c = cfg2(3.2, 1.0, false, 4);
  c.backend = Backend::kExactBoxed;
  c.box_half_width = 50;
  Environment env(c);
  REQUIRE(env.materialized());
  LatticePoint x = pt(3, -4);
  auto nb = env.neighbors(x);
  for (const auto& y : nb) CHECK(env.pair_state(x, y));
  CHECK(env.pair_state(x, x + pt(1, 0)) ==
        (std::find(nb.begin(), nb.end(), x + pt(1, 0)) != nb.end()));
}

TEST_CASE("backend comparison: beta zero and analytic degree mean") {
  EnvConfig c = cfg2(3.2, 0.0, true, 1);
  BackendComparison z = oracle_compare_backends(c, 16, 5);
  CHECK(z.long_edges_lazy == 0);
  CHECK(z.long_edges_exact == 0);
  EnvConfig d = cfg2(3.2, 1.0, true, 2);
  BackendComparison r = oracle_compare_backends(d, 32, 40);
  double se = std::sqrt(r.degree_mean_analytic / static_cast<double>(r.samples_per_backend));
  CHECK(std::fabs(r.degree_mean_exact - r.degree_mean_analytic) < 4.0 * se);
  CHECK(std::fabs(r.degree_mean_lazy - r.degree_mean_analytic) < 4.0 * se);
}

TEST_CASE("edge list export carries a config header and tab separated edges") {
  Environment env(cfg2(3.2, 1.0, true, 9));
  env.neighbors(pt(0, 0));
  std::ostringstream os;
  env.write_edge_list(os);
  std::string s = os.str();
  CHECK(s.find("# s=3.2") != std::string::npos);
  CHECK(s.find("0,0\t1,0") != std::string::npos);
}
