#include <doctest.h>

#include <cmath>
#include <functional>
#include <set>

#include "lrp/coupling.hpp"

using namespace lrp;

namespace {

EnvConfig lazy_cfg(double beta, bool nn, uint64_t seed, double s = 3.2) {
  EnvConfig c;
  c.d = 2;
  c.s = s;
  c.beta = beta;
  c.nn_open = nn;
  c.seed = seed;
  return c;
}

// Small scales so that every event type shows up on short walks.
CouplingParams busy_params() {
  CouplingParams p;
  p.k = 8;
  p.alpha = 1.2;
  p.epsilon = 0.7;
  p.gamma = 0.4;
  p.delta = 0.3;
  return p;
}

// Return probability by enumerating every path of length <= window.
double enumerate_return(const std::vector<std::vector<int>>& adj, int center, int window) {
  std::function<double(int, int)> go = [&](int u, int left) -> double {
    if (left == 0) return 0.0;
    double acc = 0.0;
    for (int w : adj[u]) acc += (w == center ? 1.0 : go(w, left - 1)) / adj[u].size();
    return acc;
  };
  return go(center, window);
}

}  // namespace

TEST_CASE("scales follow the horizon exponent") {
  CouplingParams p;
  p.k = 20;
  p.alpha = 1.0;
  p.epsilon = 0.25;
  p.gamma = 0.1;
  p.delta = 0.2;
  CHECK(p.long_threshold() == doctest::Approx(32768.0));
  CHECK(p.ball_radius() == doctest::Approx(16.0));
  CHECK(p.ball_radius_sq() == doctest::Approx(256.0));
  CHECK(p.return_window() == doctest::Approx(4.0));
  CHECK(p.phase_length() == 8);
  CHECK(p.horizon() == (1 << 20));
  p.epsilon = 1.5;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
}

TEST_CASE("shared-stream geometric variable") {
  UniformStream s(11);
  CHECK(geometric_variable(1.0, s) == 0);
  CHECK_THROWS_AS(geometric_variable(0.0, s), std::invalid_argument);

  // Mean (1 - t) / t = 3 at t = 1/4.
  const int n = 1000000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    auto r = static_cast<double>(geometric_variable(0.25, UniformStream(derive_seed(5, {uint64_t(i)}))));
    sum += r;
    sq += r * r;
  }
  double m = sum / n;
  double sd = std::sqrt((sq / n - m * m) / n);
  CHECK(std::abs(m - 3.0) < 4.0 * sd);

  // Same stream, larger threshold: never a larger count.
  for (uint64_t seed = 0; seed < 2000; ++seed) {
    UniformStream st(seed);
    int64_t prev = geometric_variable(0.05, st);
    for (double t : {0.1, 0.3, 0.5, 0.9, 1.0}) {
      int64_t r = geometric_variable(t, st);
      CHECK(r <= prev);
      prev = r;
    }
  }
}

TEST_CASE("crossing parameter values") {
  CHECK(crossing_parameter(1, 0.0) == doctest::Approx(0.5));
  CHECK(crossing_parameter(3, 0.4) == doctest::Approx(1.8 / 2.8));
  CHECK(crossing_parameter(0, 1.0) == 0.0);
  CHECK(crossing_parameter(4, 1.0) == 0.0);
}

TEST_CASE("local return on small graphs") {
  // leaf: forced return at time 2
  std::vector<std::vector<int>> leaf{{1}, {0}};
  CHECK(local_return_exact(leaf, 0, 1) == 0.0);
  CHECK(local_return_exact(leaf, 0, 2) == doctest::Approx(1.0));
  // isolated centre
  std::vector<std::vector<int>> alone{{}};
  CHECK(local_return_exact(alone, 0, 5) == 1.0);
  // triangle with a pendant path
  std::vector<std::vector<int>> g{{1, 2}, {0, 2, 3}, {0, 1}, {1, 4}, {3}};
  for (int w = 1; w <= 9; ++w)
    CHECK(local_return_exact(g, 0, w) == doctest::Approx(enumerate_return(g, 0, w)).epsilon(1e-12));
  CHECK(enumerate_return(g, 0, 3) == doctest::Approx(5.0 / 12.0 + 1.0 / 12.0 + 1.0 / 12.0));
}

TEST_CASE("local characteristics: isolated vertex and exact vs Monte Carlo") {
  CouplingParams p;
  p.k = 20;
  p.alpha = 1.2;
  p.gamma = 0.25;
  p.delta = 0.25;
  {
    Environment env(lazy_cfg(0.0, false, 3));
    auto lc = local_characteristics(LatticePoint{}, env, p);
    CHECK(lc.local_degree == 0);
    CHECK(lc.local_return == 1.0);
  }
  Environment env(lazy_cfg(1.0, true, 4));
  auto exact = local_characteristics(LatticePoint{}, env, p);
  CHECK_FALSE(exact.monte_carlo);
  CHECK(exact.local_degree >= 4);
  auto mc = local_characteristics(LatticePoint{}, env, p, 1, 40000, 9);
  CHECK(mc.monte_carlo);
  CHECK(std::abs(mc.local_return - exact.local_return) < 4.0 * mc.std_error);
}

TEST_CASE("excursion simulator: geometric marginals") {
  auto law = excursion_simulator(1, 0.0, 1, 0.0, 200000, 21);
  CHECK(law.rule_violations == 0);
  double mv = 0.0;
  for (auto r : law.r_v) mv += static_cast<double>(r);
  mv /= law.trials;
  // Geom(1/2): mean 1, variance 2
  CHECK(std::abs(mv - 1.0) < 4.0 * std::sqrt(2.0 / law.trials));

  auto deg = excursion_simulator(2, 1.0, 1, 0.3, 1000, 2);
  CHECK(deg.degenerate_v);
  CHECK_FALSE(deg.degenerate_x);
  for (size_t i = 0; i < deg.r_v.size(); ++i) {
    CHECK(deg.r_v[i] == kInfiniteCount);
    CHECK(deg.far[i] == 1);
  }
  auto both = excursion_simulator(0, 0.0, 3, 1.0, 10, 2);
  CHECK(both.both_degenerate);
  CHECK(both.r_v.empty());
}

TEST_CASE("far side probability matches the closed form") {
  for (double qv : {0.1, 0.35, 0.5, 0.9})
    for (double qx : {0.05, 0.5, 0.75}) {
      double closed = qx * (1.0 - qv) / (1.0 - (1.0 - qx) * (1.0 - qv));
      CHECK(far_side_probability(qv, qx) == doctest::Approx(closed).epsilon(1e-12));
    }
}

TEST_CASE("crossing claim on one cell") {
  auto rep = verify_crossing_claim({{3, 0.4}}, 200000, 77);
  REQUIRE(rep.cells.size() == 1);
  CHECK(rep.max_tv < 0.01);
  CHECK(rep.rule_violations == 0);
  CHECK(rep.pooled_independence_p > 1e-4);
  const auto& c = rep.cells[0];
  double se = std::sqrt(c.far_exact * (1.0 - c.far_exact) / 200000.0);
  CHECK(std::abs(c.far_empirical - c.far_exact) < 4.0 * se);
}

TEST_CASE("no long edges means no errors and no regenerations") {
  Environment env(lazy_cfg(0.0, true, 5));
  CouplingParams p = busy_params();
  std::vector<WalkPath> paths{run_walk(env, 256, 1), run_walk(env, 256, 2)};
  auto res = detect_bad_events(paths, env, p);
  CHECK(res.good());
  CHECK(res.phases.empty());
  CHECK_FALSE(res.bad.h());
  CHECK_FALSE(res.bad.f_star);
  auto rg = regeneration_times(paths[0], env, p);
  CHECK(rg.beta == 0);
  CHECK(rg.beta_tilde == 0);
}

TEST_CASE("regeneration times from phase records") {
  CouplingParams p = busy_params();
  PhaseRecord ph;
  ph.entry = p.phase_length();
  ph.settled_far = true;
  auto rg = regeneration_from_phases({ph}, 0, p);
  REQUIRE(rg.regenerations.size() == 1);
  CHECK(rg.regenerations[0] == p.phase_length());
  CHECK(rg.beta == 1);
  CHECK(rg.max_gap == 0);

  PhaseRecord near = ph;
  near.entry = 40;
  near.settled_far = false;
  PhaseRecord far2 = ph;
  far2.entry = 100;
  PhaseRecord other = ph;
  other.walk = 1;
  rg = regeneration_from_phases({ph, near, far2, other}, 0, p);
  CHECK(rg.beta_tilde == 3);
  CHECK(rg.beta == 2);
  CHECK(rg.max_gap == 100 - p.phase_length());
}

namespace {

// Direct time-indexed reading of the four single-walk events.
BadEvents brute_bad_events(const WalkPath& w, Environment& env, const CouplingParams& p) {
  BadEvents b;
  const auto& X = w.steps;
  const int64_t n = w.horizon();
  const double L = p.long_threshold(), r = p.ball_radius();
  const int64_t T = p.phase_length();
  const auto h = static_cast<int64_t>(std::floor(p.return_window()));
  auto first = [&](const LatticePoint& y) {
    for (int64_t t = 0; t <= n; ++t)
      if (X[t] == y) return t;
    return int64_t{-1};
  };
  for (int64_t j = 0; j <= n; ++j) {
    const auto u = X[j];
    for (const auto& y : env.neighbors(u)) {
      if (!(norm2(y - u) > L)) continue;
      int64_t fu = first(u), fy = first(y);
      if (fy > fu && !(X[fy - 1] == u)) b.d = true;
      for (const auto& z : env.neighbors(u))
        if (!(z == y) && norm2(z - u) >= r && norm2(z - y) >= r) b.e = true;
      for (const auto& z : env.neighbors(y))
        if (!(z == u) && norm2(z - y) >= r && norm2(z - u) >= r) b.e = true;
      for (int64_t i = j + T; i <= n; ++i)
        if (X[i] == u || X[i] == y) b.f = true;
    }
    bool crossed = false, has_long = false;
    for (const auto& y : env.neighbors(u)) {
      if (!(norm2(y - u) > L)) continue;
      has_long = true;
      for (int64_t t = j + 1; t <= std::min(n, j + T); ++t)
        if (X[t] == y) crossed = true;
    }
    if (!has_long || crossed) continue;
    for (int64_t l = 0; l <= h && j + l <= n; ++l)
      if (norm2(X[j + l] - u) > r) b.g = true;
  }
  return b;
}

}  // namespace

TEST_CASE("bad events agree with a time-indexed reading") {
  CouplingParams p = busy_params();
  int fired[4] = {0, 0, 0, 0};
  for (uint64_t seed = 1; seed <= 30; ++seed) {
    Environment env(lazy_cfg(0.6, true, seed));
    std::vector<WalkPath> paths{run_walk(env, 200, 10 + seed)};
    auto got = bad_event_indicators(paths, env, p);
    auto want = brute_bad_events(paths[0], env, p);
    CHECK(got.d == want.d);
    CHECK(got.e == want.e);
    CHECK(got.f == want.f);
    CHECK(got.g == want.g);
    fired[0] += want.d;
    fired[1] += want.e;
    fired[2] += want.f;
    fired[3] += want.g;
  }
  for (int i = 0; i < 4; ++i) CHECK(fired[i] > 0);
}

TEST_CASE("replay bookkeeping invariants") {
  CouplingParams p;
  p.k = 12;
  p.alpha = 1.0;
  p.epsilon = 0.5;
  p.gamma = 0.3;
  p.delta = 0.4;
  int64_t checked = 0;
  for (uint64_t seed = 1; seed <= 12; ++seed) {
    Environment env(lazy_cfg(1.0, true, seed, 3.0));
    std::vector<WalkPath> paths{run_walk(env, 4096, 3 * seed), run_walk(env, 4096, 3 * seed + 1)};
    auto res = detect_bad_events(paths, env, p);
    int64_t total = 0;
    for (int t = 1; t <= 6; ++t) total += res.ledger.counts[t];
    CHECK(total == static_cast<int64_t>(res.ledger.events.size()));
    std::vector<uint8_t> err(2, 0);
    for (const auto& e : res.ledger.events) {
      CHECK(e.type >= 1);
      CHECK(e.type <= 6);
      err[e.walk] = 1;
    }
    CHECK(err == res.walk_error);
    for (const auto& ph : res.phases) {
      // phases never overlap on one walk and the crossing rule holds on
      // every phase that escaped cleanly
      if (ph.good() && ph.rule_checked) {
        CHECK(ph.rule_ok);
        ++checked;
      }
      if (ph.type5) CHECK(ph.tau < p.phase_length());
    }
    for (size_t i = 1; i < res.phases.size(); ++i)
      if (res.phases[i].walk == res.phases[i - 1].walk)
        CHECK(res.phases[i].entry > res.phases[i - 1].entry + p.phase_length());
  }
  CHECK(checked > 0);
}

TEST_CASE("block novelty partitions the distinct vertices") {
  CouplingParams p = busy_params();
  for (uint64_t seed = 1; seed <= 10; ++seed) {
    Environment env(lazy_cfg(0.5, true, seed, 3.0));
    auto w = run_walk(env, 256, seed);
    auto rg = regeneration_times(w, env, p);
    auto bn = block_novelty(w, env, p, rg, 0.2);
    std::set<LatticePoint> distinct(w.steps.begin(), w.steps.end());
    CHECK(bn.distinct == static_cast<int64_t>(distinct.size()));
    CHECK(bn.distinct == bn.block_total() + bn.long_attached + bn.ball_reentries + bn.outside_blocks);
    CHECK(bn.blocks.size() == rg.regenerations.size());
    auto nov = new_vertex_counter({w});
    CHECK(nov.phi_tilde[0].back() + 1 == bn.distinct);
  }
}
