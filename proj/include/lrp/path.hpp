#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace lrp {

// Right-continuous step function on [0,1] with breakpoints i/n: the value on
// [i/n, (i+1)/n) is row i, and row n is the value at t = 1.
struct GridPath {
  int d = 1;
  int64_t n = 0;
  std::vector<double> values;  // (n + 1) * d, row major

  GridPath() = default;
  GridPath(int dim, int64_t steps)
      : d(dim), n(steps), values(static_cast<size_t>((steps + 1) * dim), 0.0) {}

  double& at(int64_t i, int a) { return values[static_cast<size_t>(i * d + a)]; }
  double at(int64_t i, int a) const { return values[static_cast<size_t>(i * d + a)]; }

  double norm_at(int64_t i) const {
    double s = 0.0;
    for (int a = 0; a < d; ++a) s += at(i, a) * at(i, a);
    return std::sqrt(s);
  }
};

}  // namespace lrp
