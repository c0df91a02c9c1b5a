#pragma once

#include <cstdint>
#include <vector>

#include <json.hpp>

#include "lrp/environment.hpp"
#include "lrp/path.hpp"
#include "lrp/rng.hpp"

namespace lrp {

struct Jump {
  LatticePoint delta;
  bool long_jump = false;  // |delta| above the structural short cutoff
};

struct WalkPath {
  int d = 2;
  uint64_t env_seed = 0;
  uint64_t walk_seed = 0;
  std::vector<LatticePoint> steps;  // X_0 .. X_n
  std::vector<uint8_t> long_flags;  // entry i-1 classifies the jump X_{i-1} -> X_i

  int64_t horizon() const { return static_cast<int64_t>(steps.size()) - 1; }
  LatticePoint jump(int64_t i) const { return steps[i] - steps[i - 1]; }
  std::vector<Jump> jump_log() const;
};

// Default upper bound on the horizon of a single stored path.
inline constexpr int64_t kMaxHorizon = int64_t{1} << 26;

LatticePoint walk_step(const LatticePoint& x, Environment& env, Rng& rng);

WalkPath run_walk(Environment& env, int64_t n, uint64_t walk_seed,
                  int64_t max_horizon = kMaxHorizon);

struct RescaledPath {
  int d = 2;
  double alpha = 1.0;
  int64_t n = 0;
  double scale = 1.0;  // n^{-1/alpha}
  std::vector<LatticePoint> points;

  // n^{-1/alpha} X_{floor(n t)} for t in [0,1].
  std::vector<double> value_at(double t) const;
  // Samples the step function on the grid i/m, i = 0..m.
  GridPath to_grid(int64_t m) const;
};

RescaledPath rescale(const WalkPath& path, double alpha);

// Linear interpolation n^{-1/2}(X_{floor(nt)} + (nt - floor(nt))(X_{floor(nt)+1} - X_{floor(nt)}))
// sampled on the grid i/m.
GridPath interpolate_diffusive(const WalkPath& path, int64_t m);

struct ShortJumpStats {
  int k = 0;
  double epsilon = 0.0;
  double threshold = 0.0;
  double w = 0.0;
  int64_t short_steps = 0;
  std::vector<double> prefix_norms;  // scaled |partial sum| for m = 0 .. 2^k - 1
};

ShortJumpStats short_jump_max(const WalkPath& path, int k, double epsilon, double alpha,
                              bool keep_prefix = false);

std::vector<double> truncated_drift(const LatticePoint& x, Environment& env, double cutoff);

struct NoveltyCounters {
  std::vector<std::vector<int64_t>> phi;        // cross-walk exclusion
  std::vector<std::vector<int64_t>> phi_tilde;  // single-walk novelty
};

// Sequences are indexed by i = 1..n (entry i-1).
NoveltyCounters new_vertex_counter(const std::vector<WalkPath>& paths);

struct ReturnRow {
  int64_t n = 0;
  double estimate = 0.0;  // pairwise-intersection estimate of P(X_m = 0), m in (n/2, n]
  double std_error = 0.0;
  double direct = 0.0;    // fraction of walks with X_n = 0
  double direct_error = 0.0;
  int64_t intersections = 0;
  bool sufficient = true;
};

struct ReturnProfile {
  int64_t trials = 0;
  std::vector<ReturnRow> rows;
  double slope = 0.0;
  double slope_se = 0.0;
};

// Runs `trials` walks of length max(n_list) from the origin in one environment.
// Uses reversibility: P_0(X_{s+t} = 0) = deg(0) sum_y P_0(X_s = y) P_0(X_t = y) / deg(y),
// estimated from all cross-walk coincidences X^a_s = X^b_t.
ReturnProfile return_probability_profile(Environment& env, const std::vector<int64_t>& n_list,
                                         int64_t trials, uint64_t walk_seed,
                                         int jackknife_groups = 8);

// Fits log P against log n over the rows with sufficient data.
void fit_return_slope(ReturnProfile& profile);

void write_path_csv(std::ostream& os, const WalkPath& path);
void write_path_binary(std::ostream& os, const WalkPath& path);
WalkPath read_path_binary(std::istream& is);

nlohmann::json functional_record(const WalkPath& path, const ShortJumpStats& st);

}  // namespace lrp
