// Acceptance suite: one line per criterion, "PASS" or "FAIL".
// Tolerances and run sizes are pinned here rather than taken from defaults.

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>

#include "lrp/harness.hpp"

using lrp::ExperimentReport;
using lrp::ExperimentSpec;
using nlohmann::json;

namespace {

struct Criterion {
  int id;
  std::string experiment;
  double runtime_limit;  // seconds
  std::function<void(ExperimentSpec&)> pin;
  std::function<std::string(const json&)> summary;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double num(const json& j, const std::vector<std::string>& path, double fallback = NAN) {
  const json* cur = &j;
  for (const auto& key : path) {
    if (!cur->is_object() || !cur->contains(key)) return fallback;
    cur = &cur->at(key);
  }
  return cur->is_number() ? cur->get<double>() : fallback;
}

std::string path_test_summary(const json& r) {
  std::string out;
  if (!r.contains("path_tests")) return out;
  for (const auto& t : r.at("path_tests"))
    out += " q=" + fmt("%g", t.at("q").get<double>()) + ":" + (t.at("pass").get<bool>() ? "ok" : "reject") +
           "(p=" + fmt("%.3g", t.at("combined_p").get<double>()) + ")";
  return out;
}

std::vector<Criterion> criteria() {
  std::vector<Criterion> c;
  c.push_back({1, "backend_oracle", 120.0,
               [](ExperimentSpec& s) {
                 s.env.box_half_width = 32;
                 s.trials = 200;
                 s.thresholds["p_min"] = 0.01;
               },
               [](const json& r) {
                 return "degree p=" + fmt("%.3g", num(r, {"degree_chi2_p"})) +
                        " length p=" + fmt("%.3g", num(r, {"length_chi2_p"}));
               }});
  c.push_back({2, "crossing_law", 300.0,
               [](ExperimentSpec& s) {
                 s.trials = 1000000;
                 s.walks = 20;
                 s.k_list = {14};
                 s.thresholds["tv_max"] = 0.01;
                 s.thresholds["p_min"] = 0.01;
               },
               [](const json& r) {
                 return "max TV=" + fmt("%.4f", num(r, {"max_tv"})) +
                        " pooled p=" + fmt("%.3g", num(r, {"pooled_independence_p"})) + " rule " +
                        fmt("%.0f", num(r, {"replay", "rule_matches"})) + "/" +
                        fmt("%.0f", num(r, {"replay", "good_phases_checked"}));
               }});
  c.push_back({3, "short_steps", 1800.0,
               [](ExperimentSpec& s) {
                 s.k_list = {10, 11, 12, 13, 14, 15, 16, 17, 18};
                 s.walks = 256;
                 s.epsilon = 0.1;
                 s.measure = lrp::MeasureMode::kNuWeighted;
                 s.thresholds["slope_max"] = -(1.0 - s.env.alpha() / 2.0) * s.epsilon / 2.0;
               },
               [](const json& r) {
                 return "slope=" + fmt("%.4f", num(r, {"fit", "slope"})) + " (max " +
                        fmt("%.3f", num(r, {"slope_max"})) + ", strict target " +
                        fmt("%.3f", num(r, {"strict_target"})) + ")";
               }});
  c.push_back({4, "stable_limit", 1800.0,
               [](ExperimentSpec& s) {
                 s.k_list = {18};
                 s.walks = 256;
                 s.q_list = {1.0, 2.0};
                 s.thresholds["alpha_tol"] = 0.15;
                 s.thresholds["level"] = 0.01;
               },
               [](const json& r) {
                 return "ECF alpha=" + fmt("%.3f", num(r, {"ecf", "alpha"})) + " Hill alpha=" +
                        fmt("%.3f", num(r, {"hill", "alpha"})) + path_test_summary(r);
               }});
  c.push_back({5, "heat_kernel", 900.0,
               [](ExperimentSpec& s) {
                 s.k_list = {8, 9, 10, 11, 12, 13, 14, 15, 16};
                 s.walks = 64;
                 s.environments = 4;
                 s.thresholds["slope_tol"] = 0.3;
               },
               [](const json& r) {
                 return "slope=" + fmt("%.3f", num(r, {"fit", "slope"})) + " target " +
                        fmt("%.3f", num(r, {"target_slope"}));
               }});
  c.push_back({6, "coupling_errors", 1200.0,
               [](ExperimentSpec& s) {
                 s.k_list = {10, 12, 14, 16};
                 s.walks = 300;
                 s.epsilon = 0.05;
                 s.gamma = 0.4;
                 s.delta = 0.6;
                 s.thresholds["slope_max"] = 0.0;
               },
               [](const json& r) {
                 std::string p;
                 if (r.contains("per_k"))
                   for (const auto& row : r.at("per_k")) p += fmt(" %.3f", row.at("p_error").get<double>());
                 return "P(error):" + p + " slope=" + fmt("%.3f", num(r, {"fit", "slope"}));
               }});
  c.push_back({7, "sampler_selftest", 120.0,
               [](ExperimentSpec& s) {
                 s.trials = 10000;
                 s.thresholds["r2_min"] = 0.99;
                 s.thresholds["hill_tol"] = 0.1;
                 s.thresholds["cov_sigmas"] = 3.0;
               },
               [](const json& r) {
                 return "ECF r2=" + fmt("%.4f", num(r, {"ecf", "r2"})) + " alpha=" +
                        fmt("%.3f", num(r, {"ecf", "alpha"})) + " Hill=" + fmt("%.3f", num(r, {"hill", "alpha"})) +
                        " ECF sd@1024=" + fmt("%.3f", num(r, {"ecf_sd_at_1024"}));
               }});
  c.push_back({8, "phi_fluctuations", 1200.0,
               [](ExperimentSpec& s) {
                 s.k_list = {10, 11, 12, 13, 14, 15, 16, 17, 18};
                 s.walks = 64;
                 s.thresholds["exponent_max"] = 1.0;
                 s.thresholds["c_hat_rel_tol"] = 0.02;
               },
               [](const json& r) {
                 return "exponent=" + fmt("%.3f", num(r, {"fit", "slope"})) + " C drift=" +
                        fmt("%.4f", num(r, {"c_hat_max_rel_diff"}));
               }});
  c.push_back({9, "gaussian_d1", 600.0,
               [](ExperimentSpec& s) {
                 s.env.d = 1;
                 s.env.s = 2.5;
                 s.env.nn_open = true;
                 s.k_list = {16};
                 s.walks = 512;
                 s.thresholds["p_min"] = 0.01;
                 s.thresholds["slope_rel_tol"] = 0.1;
               },
               [](const json& r) {
                 return "AD p=" + fmt("%.3g", num(r, {"anderson_darling", "p_value"})) + " var slope=" +
                        fmt("%.3f", num(r, {"variance_fit", "slope"}));
               }});
  c.push_back({10, "cluster_sizes", 900.0,
               [](ExperimentSpec& s) {
                 s.env.beta = 0.05;
                 s.env.nn_open = false;
                 s.k_list = {6, 7, 8, 9};
                 s.trials = 20;
                 s.thresholds["slope_max"] = 0.1;
               },
               [](const json& r) {
                 return "n2 slope=" + fmt("%.3f", num(r, {"power_fit", "slope"})) + " BFS " +
                        fmt("%.0f", num(r, {"bfs_agree"})) + "/" + fmt("%.0f", num(r, {"bfs_instances"}));
               }});
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  std::string out;
  int threads = 0;
  for (int i = 1; i < argc; ++i) {
    if (!std::strcmp(argv[i], "--only") && i + 1 < argc) only = std::atoi(argv[++i]);
    else if (!std::strcmp(argv[i], "--out") && i + 1 < argc) out = argv[++i];
    else if (!std::strcmp(argv[i], "--threads") && i + 1 < argc) threads = std::atoi(argv[++i]);
    else {
      std::cerr << "usage: acceptance [--only N] [--out DIR] [--threads N]\n";
      return 2;
    }
  }
  bool all_ok = true;
  int ran = 0;
  for (const auto& c : criteria()) {
    if (only && c.id != only) continue;
    ++ran;
    auto spec = ExperimentSpec::defaults(c.experiment);
    spec.seed = 20240 + static_cast<uint64_t>(c.id);
    spec.threads = threads;
    c.pin(spec);
    if (!out.empty()) spec.out_dir = (std::filesystem::path(out) / ("criterion_" + std::to_string(c.id))).string();
    try {
      auto rep = run_experiment(spec);
      const bool in_time = rep.runtime_seconds < c.runtime_limit;
      const bool ok = rep.passed() && in_time;
      all_ok = all_ok && ok;
      std::cout << "criterion " << c.id << " " << c.experiment << ": " << (ok ? "PASS" : "FAIL") << " ["
                << rep.verdict << "] " << c.summary(rep.results) << " runtime " << fmt("%.1f", rep.runtime_seconds)
                << "s/" << fmt("%.0f", c.runtime_limit) << "s" << std::endl;
    } catch (const std::exception& e) {
      all_ok = false;
      std::cout << "criterion " << c.id << " " << c.experiment << ": FAIL [error] " << e.what() << std::endl;
    }
  }
  if (ran == 0) {
    std::cerr << "no criterion " << only << "\n";
    return 2;
  }
  return all_ok ? 0 : 1;
}
