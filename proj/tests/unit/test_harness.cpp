#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "lrp/harness.hpp"

using namespace lrp;

TEST_CASE("experiment specs round-trip and validate") {
  for (const auto& name : experiment_names()) {
    auto s = ExperimentSpec::defaults(name);
    CHECK_NOTHROW(s.validate());
    auto back = ExperimentSpec::from_json(s.to_json());
    CHECK(back.to_json() == s.to_json());
  }
  CHECK_THROWS(ExperimentSpec::defaults("nope"));
  auto s = ExperimentSpec::defaults("short_steps");
  s.q_list = {0.5};
  CHECK_THROWS(s.validate());
  CHECK_THROWS(measure_from_string("mu1"));
  CHECK(measure_from_string(to_string(MeasureMode::kMu0Proxy)) == MeasureMode::kMu0Proxy);
}

TEST_CASE("empty ensembles report insufficient data") {
  for (const auto& name : experiment_names()) {
    auto s = ExperimentSpec::defaults(name);
    s.walks = 0;
    s.trials = 0;
    auto r = run_experiment(s);
    CHECK_MESSAGE(r.verdict == "insufficient data", name);
    CHECK_FALSE(r.passed());
  }
}

TEST_CASE("small runs are deterministic in the seed") {
  auto s = ExperimentSpec::defaults("no_return");
  s.k_list = {6, 7, 8};
  s.walks = 12;
  s.threads = 2;
  auto a = run_experiment(s);
  s.threads = 1;
  auto b = run_experiment(s);
  CHECK(a.body() == b.body());
  s.seed = 2;
  auto c = run_experiment(s);
  CHECK(c.body() != a.body());

  auto e = ExperimentSpec::defaults("coupling_errors");
  e.k_list = {8, 9};
  e.walks = 6;
  CHECK(run_experiment(e).body() == run_experiment(e).body());
}

TEST_CASE("reports persist json and tidy csv") {
  namespace fs = std::filesystem;
  auto dir = fs::temp_directory_path() / "lrp_harness_test";
  fs::remove_all(dir);
  auto s = ExperimentSpec::defaults("phi_fluctuations");
  s.k_list = {6, 7, 8};
  s.walks = 8;
  s.out_dir = dir.string();
  auto r = run_experiment(s);
  REQUIRE(fs::exists(dir / "report.json"));
  std::ifstream is(dir / "report.json");
  auto j = nlohmann::json::parse(is);
  CHECK(j.at("verdict") == r.verdict);
  CHECK(j.contains("runtime_seconds"));
  REQUIRE(fs::exists(dir / "plots" / "per_k.csv"));
  std::ifstream pc(dir / "plots" / "per_k.csv");
  std::string header;
  std::getline(pc, header);
  CHECK(header == "k,statistic,value");
  CHECK(fs::exists(dir / "raw" / "phi_max_deviation.csv"));
  fs::remove_all(dir);
}

TEST_CASE("budget overrun is flagged") {
  auto s = ExperimentSpec::defaults("no_return");
  s.k_list = {10, 12};
  s.walks = 400;
  s.budget_seconds = 1e-6;
  auto r = run_experiment(s);
  CHECK(r.budget_exceeded);
  CHECK(r.verdict == "fail");
}

TEST_CASE("parallel_for covers every index once and rethrows") {
  std::vector<int> hits(1000, 0);
  parallel_for(1000, 3, [&](int64_t i) { ++hits[i]; });
  CHECK(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));
  CHECK_THROWS(parallel_for(10, 2, [](int64_t i) {
    if (i == 7) throw std::runtime_error("x");
  }));
}

TEST_CASE("mean degree and nu weight") {
  EnvConfig c;
  c.d = 1;
  c.s = 3.0;
  c.beta = 0.5;
  c.nn_open = false;
  // 2 * sum_j 0.5 j^-3 = zeta(3)
  CHECK(mean_degree(c) == doctest::Approx(1.2020569).epsilon(1e-4));
  c.nn_open = true;
  c.seed = 5;
  Environment env(c);
  CHECK(nu_weight(env) == doctest::Approx(env.degree(LatticePoint{}) / mean_degree(c)));
}
