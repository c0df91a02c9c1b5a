#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lrp/environment.hpp"

namespace lrp {

enum class MeasureMode { kMu, kMu0Proxy, kNuWeighted };

std::string to_string(MeasureMode m);
MeasureMode measure_from_string(const std::string& s);

struct ExperimentSpec {
  std::string experiment;
  EnvConfig env;
  std::vector<int> k_list;
  int walks = 256;         // walk ensemble size
  int64_t trials = 0;      // Monte Carlo trials per cell / instance count
  int environments = 1;    // independent environments, where relevant
  double epsilon = 0.1;
  double epsilon1 = 0.05;
  double delta = 0.05;
  double gamma = 0.02;
  std::vector<double> q_list{1.0, 2.0};
  MeasureMode measure = MeasureMode::kMu;
  std::string out_dir;     // empty: nothing persisted
  uint64_t seed = 1;
  int threads = 0;         // 0: hardware concurrency
  double budget_seconds = 0.0;  // 0: unlimited
  nlohmann::json thresholds = nlohmann::json::object();

  nlohmann::json to_json() const;
  static ExperimentSpec from_json(const nlohmann::json& j);
  // Fills unset fields with the defaults of `experiment`.
  static ExperimentSpec defaults(const std::string& experiment);
  void validate() const;
  double threshold(const std::string& key, double fallback) const;
};

// A table of rows written to raw/<name>.csv or plots/<name>.csv.
struct Table {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<nlohmann::json>> rows;  // numbers or strings
  void write_csv(std::ostream& os) const;
};

struct ExperimentReport {
  ExperimentSpec spec;
  std::string verdict = "insufficient data";  // "pass", "fail" or "insufficient data"
  bool budget_exceeded = false;
  nlohmann::json results = nlohmann::json::object();
  std::vector<Table> raw;
  std::vector<Table> plots;
  double runtime_seconds = 0.0;

  bool passed() const { return verdict == "pass"; }
  // Everything except the runtime; identical for identical (spec, seed).
  nlohmann::json body() const;
  nlohmann::json to_json() const;
};

const std::vector<std::string>& experiment_names();

// Throws std::invalid_argument for an unknown experiment or invalid spec.
ExperimentReport run_experiment(const ExperimentSpec& spec);

// Writes report.json, raw/*.csv and plots/*.csv under spec.out_dir.
void persist_report(const ExperimentReport& report);

// One row per (k, statistic) for every numeric per-k entry of the results.
std::vector<Table> emit_plot_data(const ExperimentReport& report);

// Runs fn(i) for i in [0, count) on `threads` workers; results land by index.
void parallel_for(int64_t count, int threads, const std::function<void(int64_t)>& fn);

// Importance weight deg(0) / E[deg(0)] of an environment.
double nu_weight(Environment& env);
double mean_degree(const EnvConfig& cfg);

}  // namespace lrp
