#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include <json.hpp>

#include "lrp/environment.hpp"
#include "lrp/stats.hpp"
#include "lrp/walk.hpp"

namespace lrp {

// Scales attached to a horizon 2^k.
struct CouplingParams {
  int k = 10;
  double alpha = 1.2;
  double epsilon = 0.1;
  double gamma = 0.02;
  double delta = 0.05;

  double long_threshold() const;     // 2^{(1/alpha - epsilon) k}
  double ball_radius() const;        // 2^{delta k}
  double ball_radius_sq() const;     // 2^{2 delta k}, exact for the closed-ball test
  double return_window() const;      // 2^{gamma k}
  int64_t phase_length() const;      // 2 * ceil(2^{gamma k})
  int64_t horizon() const { return int64_t{1} << k; }
  void validate() const;
  nlohmann::json to_json() const;
};

// Counter-based uniforms Uni(0), Uni(1), ... shared by every threshold t.
class UniformStream {
 public:
  explicit UniformStream(uint64_t seed) : seed_(seed) {}
  double at(uint64_t i) const;

 private:
  uint64_t seed_;
};

// R(t) = min{i >= 0 : Uni(i) < t}; nonincreasing in t on one stream.
int64_t geometric_variable(double t, const UniformStream& stream);

// Success parameter (1 - p) d / (1 + (1 - p) d) of the crossing count.
double crossing_parameter(int local_degree, double local_return);

struct LocalCharacteristics {
  LatticePoint v;
  int local_degree = 0;
  double local_return = 1.0;
  double std_error = 0.0;  // zero for the exact method
  bool monte_carlo = false;
  size_t ball_size = 0;
};

LocalCharacteristics local_characteristics(const LatticePoint& v, Environment& env,
                                           const CouplingParams& p, size_t dp_budget = 50000,
                                           int mc_trials = 4000, uint64_t seed = 1);

// Same computation on an explicit ball graph; `center` indexes adj.
double local_return_exact(const std::vector<std::vector<int>>& adj, int center, int64_t window);

inline constexpr int64_t kInfiniteCount = -1;

struct ExcursionLaw {
  int64_t trials = 0;
  bool degenerate_v = false;
  bool degenerate_x = false;
  bool both_degenerate = false;
  std::vector<int64_t> r_v;    // kInfiniteCount when degenerate
  std::vector<int64_t> r_x;
  std::vector<uint8_t> far;    // walk settles at x
  int64_t rule_violations = 0; // settled side disagrees with R(v) <= R(x)
};

ExcursionLaw excursion_simulator(int dv, double pv, int dx, double px, int64_t trials,
                                 uint64_t seed);

struct CrossingCell {
  int dv = 1, dx = 1;
  double pv = 0.0, px = 0.0;
  double tv_v = 0.0, tv_x = 0.0;
  double gof_p_v = 1.0, gof_p_x = 1.0;
  stats::TestResult independence;
  double far_empirical = 0.0;
  double far_exact = 0.0;
  int64_t rule_violations = 0;
};

struct CrossingReport {
  std::vector<CrossingCell> cells;
  double max_tv = 0.0;
  double pooled_independence_p = 1.0;
  double min_cell_independence_p = 1.0;
  int64_t rule_violations = 0;
};

struct CrossingGridPoint {
  int local_degree;
  double local_return;
};

// Symmetric grid: both endpoints share the parameters of each cell.
CrossingReport verify_crossing_claim(const std::vector<CrossingGridPoint>& grid, int64_t trials,
                                     uint64_t seed);

// P(R(v) > R(x)) for independent geometrics by direct double summation.
double far_side_probability(double qv, double qx);

struct ErrorEvent {
  int walk = 0;
  int64_t time = 0;
  int type = 0;
};

struct ErrorLedger {
  std::array<int64_t, 7> counts{};  // index 1..6
  std::vector<ErrorEvent> events;
  void add(int walk, int64_t time, int type);
  bool good() const;
  int64_t total() const;
};

struct PhaseRecord {
  int walk = 0;
  int64_t entry = 0;
  LatticePoint v, x;
  int local_degree_v = 0, local_degree_x = 0;
  double local_return_v = std::numeric_limits<double>::quiet_NaN();
  double local_return_x = std::numeric_limits<double>::quiet_NaN();
  int64_t tau = 0;
  int64_t tau_star = -1;  // -1 when no escape window exists
  bool truncated = false;
  bool type3 = false, type4 = false, type5 = false, type6 = false;
  bool settled_far = false;
  int64_t r_v = kInfiniteCount, r_x = kInfiniteCount;  // observed crossing counts
  bool rule_checked = false;
  bool rule_ok = false;
  bool good() const { return !truncated && !type3 && !type4 && !type5 && !type6; }
};

struct BadEvents {
  bool f_star = false;  // walks 1 and 2 touch a common long edge
  bool d = false, e = false, f = false, g = false;
  bool h() const { return d || e || f || g; }
};

struct DetectOptions {
  bool local_returns = false;  // compute the local return probabilities per phase
  size_t dp_budget = 50000;
  int mc_trials = 4000;
};

struct DetectionResult {
  CouplingParams params;
  ErrorLedger ledger;
  std::vector<PhaseRecord> phases;
  std::vector<uint8_t> walk_error;  // any error attributed to walk l
  BadEvents bad;
  bool good() const { return ledger.good(); }
};

// Replays the coupling procedure over walks that share one environment.
DetectionResult detect_bad_events(const std::vector<WalkPath>& paths, Environment& env,
                                  const CouplingParams& p, const DetectOptions& opt = {});

BadEvents bad_event_indicators(const std::vector<WalkPath>& paths, Environment& env,
                               const CouplingParams& p);

struct RegenerationTimes {
  std::vector<int64_t> entry_times;    // first visits to new long edges
  std::vector<int64_t> regenerations;  // entries settled at the far endpoint
  int64_t beta = 0;                    // max{j : m_j <= 2^k}
  int64_t beta_tilde = 0;
  int64_t max_gap = 0;                 // max_j (m_{j+1} - m_j)
};

RegenerationTimes regeneration_times(const WalkPath& path, Environment& env,
                                     const CouplingParams& p);
RegenerationTimes regeneration_from_phases(const std::vector<PhaseRecord>& phases, int walk,
                                           const CouplingParams& p);

// Novel-vertex count of one walk split into regeneration blocks.
struct BlockNovelty {
  int64_t distinct = 0;            // |{X_0..X_n}|
  std::vector<int64_t> blocks;     // block sums
  int64_t long_attached = 0;       // novel vertices with an edge above the block's scale
  int64_t ball_reentries = 0;      // novel vertices within 2^{delta k} of an earlier block
  int64_t outside_blocks = 0;      // special windows after each m_j, and after m_beta
  int64_t block_total() const;
};

BlockNovelty block_novelty(const WalkPath& path, Environment& env, const CouplingParams& p,
                           const RegenerationTimes& regen, double epsilon1);

nlohmann::json to_json(const DetectionResult& r);

}  // namespace lrp
