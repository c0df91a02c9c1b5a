#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lrp/lattice.hpp"
#include "lrp/rng.hpp"

namespace lrp {

enum class Backend { kLazyShell, kExactBoxed };

// How an ExactBoxed environment realizes its pairs.
//   kHashEnumeration: every pair is the hashed Bernoulli of pair_state.
//   kDisplacementSkip: geometric skips along each displacement class, built
//     eagerly; pair_state then answers from the materialized edge set.
enum class ExactMode { kAuto, kHashEnumeration, kDisplacementSkip };

struct EnvConfig {
  int d = 2;
  double s = 3.2;
  double beta = 1.0;
  bool nn_open = true;
  uint64_t seed = 1;
  int short_cutoff = 8;
  double r_max = 0x1.0p40;
  Backend backend = Backend::kLazyShell;
  int64_t box_half_width = 32;
  ExactMode exact_mode = ExactMode::kAuto;

  double alpha() const { return s - d; }

  // Throws std::invalid_argument on out-of-range fields.
  void validate() const;

  nlohmann::json to_json() const;
  static EnvConfig from_json(const nlohmann::json& j);
  // Accepts either a JSON object or "key=value" lines ('#' starts a comment).
  static EnvConfig parse(const std::string& text);
};

double edge_probability(const LatticePoint& j, const EnvConfig& cfg);
double alpha(const EnvConfig& cfg);

// Hashed uniform in [0,1) for the unordered pair {x, y}.
double pair_uniform(uint64_t seed, const LatticePoint& x, const LatticePoint& y);

// Continuum upper estimate of sum_{|j| > radius} beta |j|^{-s}.
double tail_mass_beyond(const EnvConfig& cfg, double radius);

// Samples the set {j : |j| > inner, |j|_inf <= outer} where each j is kept
// independently with probability edge_probability(j). Shells are l-infinity
// annuli; each shell draws a Binomial(size, pbar) count, places candidates
// uniformly without replacement, then thins by p(j)/pbar.
class ShellSampler {
 public:
  ShellSampler(const EnvConfig& cfg, double inner, double outer);

  void sample(Rng& rng, std::vector<LatticePoint>& out) const;

  double inner() const { return inner_; }
  double outer() const { return outer_; }
  size_t shell_count() const { return shells_.size(); }
  // Tail mass not covered because of the outer cutoff.
  double truncation_bound() const;

  struct Shell {
    int64_t lo;   // exclusive l-infinity bound
    int64_t hi;   // inclusive l-infinity bound
    double size;  // number of lattice points in the annulus
    double pbar;  // dominating probability over the shell
    double log_empty;
  };
  const std::vector<Shell>& shells() const { return shells_; }

 private:
  void sample_shell(size_t i, Rng& rng, std::vector<LatticePoint>& out) const;
  int64_t draw_count(const Shell& sh, Rng& rng) const;

  EnvConfig cfg_;
  double inner_;
  double outer_;
  std::vector<Shell> shells_;
  std::vector<double> cum_log_empty_;  // cum[i] = sum_{i' < i} log_empty
};

struct LocalAdjacency {
  LatticePoint center;
  double radius = 0.0;
  std::vector<LatticePoint> vertices;       // sorted
  std::vector<std::vector<int>> adjacency;  // indices into vertices
  size_t edge_count() const;
  int index_of(const LatticePoint& p) const;  // -1 if absent
};

class Environment {
 public:
  explicit Environment(EnvConfig cfg);

  const EnvConfig& config() const { return cfg_; }
  bool is_boxed() const { return cfg_.backend == Backend::kExactBoxed; }
  bool in_box(const LatticePoint& x) const;
  bool materialized() const { return materialized_; }

  // Open/closed state of {x, y}. Records long pairs in the ledger when the
  // state was not previously determined.
  bool pair_state(const LatticePoint& x, const LatticePoint& y);

  // Full neighbour list; reveals short and long edges on first use.
  const std::vector<LatticePoint>& neighbors(const LatticePoint& x);
  size_t degree(const LatticePoint& x) { return neighbors(x).size(); }

  // Open edges with both endpoints in the closed ball |y - x| <= r.
  LocalAdjacency reveal_ball(const LatticePoint& x, double r);

  // LazyShell: samples long edges of x not yet determined, marks x
  // long-complete and returns every long neighbour of x.
  std::vector<LatticePoint> sample_incident_long_edges(const LatticePoint& x);

  bool is_long_complete(const LatticePoint& x) const;
  size_t revealed_vertex_count() const { return records_.size(); }
  size_t ledger_pair_count() const { return explicit_pairs_.size(); }
  double truncation_bound() const;

  // Materialized box edges as (index, index) pairs; ExactBoxed only. Builds
  // them by hash enumeration if the environment is not materialized.
  const std::vector<std::pair<int64_t, int64_t>>& box_edges();
  int64_t box_index(const LatticePoint& x) const;
  LatticePoint box_point(int64_t idx) const;
  int64_t box_volume() const;

  void write_edge_list(std::ostream& os) const;

 private:
  struct VertexRecord {
    std::vector<LatticePoint> nbrs;
    bool short_done = false;
    bool long_done = false;
  };
  struct PairKey {
    LatticePoint a, b;
    bool operator==(const PairKey&) const = default;
  };
  struct PairKeyHash {
    size_t operator()(const PairKey& k) const {
      return static_cast<size_t>(hash_point(k.b, hash_point(k.a, 0x7f4a7c15ULL)));
    }
  };

  static PairKey canonical(const LatticePoint& x, const LatticePoint& y) {
    return x < y ? PairKey{x, y} : PairKey{y, x};
  }
  bool is_short(const LatticePoint& j) const {
    return norm2_squared(j) <= short_cutoff_sq_;
  }
  void reveal_short(const LatticePoint& x, VertexRecord& rec);
  void reveal_long_exact(const LatticePoint& x, VertexRecord& rec);
  void sample_long_lazy(const LatticePoint& x, VertexRecord& rec);
  void materialize_skip();
  void build_csr();
  double box_probability(const LatticePoint& j) const;

  EnvConfig cfg_;
  double short_cutoff_sq_;
  std::vector<std::pair<LatticePoint, double>> short_offsets_;
  std::unique_ptr<ShellSampler> sampler_;
  std::unordered_map<LatticePoint, VertexRecord, PointHash> records_;
  // Long pairs determined through pair_state before either endpoint was
  // long-complete; value is the open/closed state.
  std::unordered_map<PairKey, bool, PairKeyHash> explicit_pairs_;

  // ExactBoxed data.
  int64_t width_ = 0;  // 2N+1
  std::vector<double> box_prob_;
  bool materialized_ = false;
  bool box_edges_ready_ = false;
  std::vector<std::pair<int64_t, int64_t>> box_edges_;
  std::vector<int64_t> csr_offsets_;
  std::vector<int64_t> csr_targets_;
};

// Matched statistics between a LazyShell and an ExactBoxed realization of the
// same parameters, restricted to the box.
struct BackendComparison {
  int64_t samples_per_backend = 0;
  double degree_mean_lazy = 0.0;
  double degree_mean_exact = 0.0;
  double degree_mean_analytic = 0.0;
  double degree_chi2_p = 1.0;
  double length_chi2_p = 1.0;
  double shell_chi2_p = 1.0;
  int64_t long_edges_lazy = 0;
  int64_t long_edges_exact = 0;
};

// Probes a sparse grid of central vertices in `trials` seeds per backend.
BackendComparison oracle_compare_backends(const EnvConfig& base, int64_t n_box,
                                          int trials);

}  // namespace lrp
