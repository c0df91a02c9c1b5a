#pragma once

#include <cstdint>
#include <vector>

#include "lrp/environment.hpp"
#include "lrp/stats.hpp"

namespace lrp {

// Disjoint sets with path compression and union by size. Equal sizes are
// broken toward the smaller index, so roots are deterministic.
class UnionFind {
 public:
  explicit UnionFind(int64_t n);
  int64_t find(int64_t v);
  bool unite(int64_t a, int64_t b);
  int64_t size_of(int64_t v) { return size_[find(v)]; }
  int64_t count() const { return static_cast<int64_t>(parent_.size()); }

 private:
  std::vector<int64_t> parent_;
  std::vector<int64_t> size_;
};

struct ClusterDecomposition {
  int d = 2;
  int64_t half_width = 0;
  std::vector<int64_t> labels;  // per vertex of [-N,N]^d in lexicographic order: root index
  std::vector<int64_t> sizes;   // descending
  int64_t largest_root = -1;

  int64_t volume() const { return static_cast<int64_t>(labels.size()); }
  int64_t index_of(const LatticePoint& x) const;
  LatticePoint point_of(int64_t idx) const;
  int64_t n1() const { return sizes.empty() ? 0 : sizes[0]; }
  int64_t n2() const { return sizes.size() < 2 ? 0 : sizes[1]; }
  bool in_largest(const LatticePoint& x) const { return labels[index_of(x)] == largest_root; }
};

// Components of the graph of open edges with both endpoints in [-N,N]^d.
ClusterDecomposition decompose(Environment& env, int64_t n);

// Breadth-first component labels over env.neighbors restricted to
// [-N,N]^d; the label of a vertex is the box index of the first vertex
// reached in its component.
std::vector<int64_t> bfs_labels(Environment& env, int64_t n);

// True when both labelings induce the same partition.
bool partitions_agree(const std::vector<int64_t>& a, const std::vector<int64_t>& b);

struct SecondClusterRow {
  int64_t n = 0;
  int trials = 0;
  std::vector<int64_t> n1;
  std::vector<int64_t> n2;
  double median_n1 = 0.0;
  double median_n2 = 0.0;
  double q90_n2 = 0.0;
  double max_n2 = 0.0;
};

struct SecondClusterScaling {
  std::vector<SecondClusterRow> rows;
  stats::LinearFit power_fit;   // log median n2 against log N
  stats::LinearFit polylog_fit; // log median n2 against log log N
  bool fitted = false;
};

SecondClusterScaling second_cluster_scaling(const EnvConfig& cfg, const std::vector<int64_t>& n_list,
                                            int trials, uint64_t seed);

struct EscapeEstimate {
  int64_t n = 0;
  int trials = 0;
  int conditioned = 0;  // environments with 0 outside the largest box cluster
  int escapes = 0;
  double probability = 0.0;
  stats::Interval interval;
  bool null_event = false;
};

// The infinite lattice is approximated by a box of half-width outer_factor * N.
EscapeEstimate escape_given_not_largest(const EnvConfig& cfg, int64_t n, int trials, uint64_t seed,
                                        int outer_factor = 2);

struct EscapeSweep {
  std::vector<EscapeEstimate> rows;
  stats::LinearFit fit;  // log p against log N over rows with escapes
  bool fitted = false;
};

EscapeSweep escape_sweep(const EnvConfig& cfg, const std::vector<int64_t>& n_list, int trials,
                         uint64_t seed, int outer_factor = 2);

}  // namespace lrp
