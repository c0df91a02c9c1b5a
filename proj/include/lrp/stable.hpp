#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "lrp/coupling.hpp"
#include "lrp/environment.hpp"
#include "lrp/path.hpp"
#include "lrp/rng.hpp"

namespace lrp {

// Isotropic alpha-stable law: an increment of duration t has characteristic
// function exp(-scale * t * |xi|^alpha).
struct StableParams {
  double alpha = 1.2;
  double scale = 1.0;
  int d = 2;
  void validate() const;
};

// Positive stable variable with Laplace transform exp(-lambda^a), a in (0,1).
double positive_stable(double a, Rng& rng);

// One increment of duration t, written into out[0..d).
void sample_stable_increment(const StableParams& p, double t, Rng& rng, double* out);

std::vector<std::vector<double>> sample_stable_vectors(const StableParams& p, double t,
                                                       int64_t count, uint64_t seed);

// Path on the grid i/n_steps of [0,1], started at 0.
GridPath sample_stable_path(const StableParams& p, int64_t n_steps, uint64_t seed);

struct EcfEstimate {
  double alpha = 0.0;
  double alpha_se = 0.0;  // group jackknife
  double lo = 0.0, hi = 0.0;
  double scale = 0.0;     // in the units of the input
  double r2 = 0.0;
  int points_used = 0;
  double iqr = 0.0;
};

// 16 log-spaced |xi| in [0.25, 4] applied after dividing the samples by their
// pooled interquartile range. Throws on fewer than 1000 samples or all zeros.
EcfEstimate estimate_alpha_ecf(const std::vector<std::vector<double>>& samples);

// Scale c of exp(-c |xi|^alpha) with alpha held fixed, on the same grid.
double fit_stable_scale(const std::vector<std::vector<double>>& samples, double alpha);

struct HillEstimate {
  double alpha = 0.0;
  double alpha_deep = 0.0;  // same estimator on a quarter of the tail
  int64_t tail_points = 0;
  bool heavy_tail = true;   // false when the estimate climbs as the tail shrinks
};

HillEstimate estimate_alpha_hill(std::vector<double> magnitudes, double top_fraction);

// Exact L^q[0,1] distance between two step paths. Throws on q < 1.
double lq_path_distance(const GridPath& a, const GridPath& b, double q);

enum class PathFunctional { kEndpointCoord, kEndpointNorm, kLqNorm, kSupFirstHalf };

struct FunctionalSpec {
  PathFunctional kind;
  int coord = 0;
  std::string name() const;
};

std::vector<FunctionalSpec> default_functionals(int d);
double evaluate_functional(const GridPath& path, const FunctionalSpec& f, double q);

struct PathTestResult {
  double q = 1.0;
  std::vector<std::string> names;
  std::vector<double> statistics;
  std::vector<double> p_values;
  double min_p = 1.0;
  double combined_p = 1.0;  // Bonferroni: min(1, m * min_p)
  bool pass = true;
};

// Kolmogorov-Smirnov two-sample test per functional with a Bonferroni
// verdict at `level`. Ensembles need at least 200 paths each.
PathTestResult two_sample_path_test(const std::vector<GridPath>& a, const std::vector<GridPath>& b,
                                    double q, const std::vector<FunctionalSpec>& functionals,
                                    double level = 0.01);

// Local characteristics (d~, p~) used for both sides of a surrogate crossing.
std::vector<CrossingGridPoint> sample_local_pool(const EnvConfig& env_cfg, const CouplingParams& p,
                                                 int count, uint64_t seed);

struct SurrogateConfig {
  EnvConfig env;             // long-jump law
  int k = 12;
  double epsilon = 0.1;
  double epsilon1 = 0.05;
  double c_hat = 0.5;
  std::vector<CrossingGridPoint> local_pool;  // empty: (2d, 0) at both ends

  double threshold() const;        // 2^{(1/alpha - epsilon) k}
  double threshold_first() const;  // 2^{(1/alpha - epsilon1) k}
  void validate() const;
};

struct SurrogatePath {
  std::vector<LatticePoint> jumps;     // long-edge sums before the parity factor
  std::vector<uint8_t> sigma;
  std::vector<LatticePoint> z;         // sigma * jumps
  std::vector<LatticePoint> large;     // part above threshold_first
  std::vector<LatticePoint> medium;    // part in (threshold, threshold_first]
  std::vector<LatticePoint> by_chat;   // sum of the first floor(i c_hat) z, i = 0..n
  std::vector<LatticePoint> large_by_chat;
  std::vector<LatticePoint> medium_by_chat;
  std::vector<LatticePoint> by_phi;    // sum of the first phi_i z; empty without phi
};

// n is the horizon; phi (entries i = 1..n) is optional.
SurrogatePath surrogate_sum(const SurrogateConfig& cfg, int64_t n, uint64_t seed,
                            const std::vector<int64_t>* phi = nullptr);

// Rescales a lattice sequence indexed by i = 0..n to the grid i/m.
GridPath rescale_sequence(const std::vector<LatticePoint>& seq, int d, double alpha, int64_t m);

// P(some long edge at a fresh vertex) = 1 - prod_{|x| > threshold} (1 - p(x)).
double long_edge_probability(const EnvConfig& cfg, double threshold);

}  // namespace lrp
