#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <string>

namespace lrp {

// Dimensions above this are rejected by EnvConfig validation.
inline constexpr int kMaxDim = 4;

struct LatticePoint {
  std::array<int64_t, kMaxDim> c{};

  int64_t& operator[](int i) { return c[i]; }
  int64_t operator[](int i) const { return c[i]; }

  friend bool operator==(const LatticePoint&, const LatticePoint&) = default;
  friend auto operator<=>(const LatticePoint&, const LatticePoint&) = default;

  LatticePoint operator+(const LatticePoint& o) const {
    LatticePoint r;
    for (int i = 0; i < kMaxDim; ++i) r.c[i] = c[i] + o.c[i];
    return r;
  }
  LatticePoint operator-(const LatticePoint& o) const {
    LatticePoint r;
    for (int i = 0; i < kMaxDim; ++i) r.c[i] = c[i] - o.c[i];
    return r;
  }
  LatticePoint operator-() const {
    LatticePoint r;
    for (int i = 0; i < kMaxDim; ++i) r.c[i] = -c[i];
    return r;
  }

  static LatticePoint unit(int axis, int64_t sign = 1) {
    LatticePoint r;
    r.c[axis] = sign;
    return r;
  }
};

inline double norm2(const LatticePoint& p) {
  double s = 0.0;
  for (int i = 0; i < kMaxDim; ++i) {
    double v = static_cast<double>(p.c[i]);
    s += v * v;
  }
  return std::sqrt(s);
}

inline double norm2_squared(const LatticePoint& p) {
  double s = 0.0;
  for (int i = 0; i < kMaxDim; ++i) {
    double v = static_cast<double>(p.c[i]);
    s += v * v;
  }
  return s;
}

inline int64_t norm1(const LatticePoint& p) {
  int64_t s = 0;
  for (int i = 0; i < kMaxDim; ++i) s += std::llabs(p.c[i]);
  return s;
}

inline int64_t norm_inf(const LatticePoint& p) {
  int64_t s = 0;
  for (int i = 0; i < kMaxDim; ++i) s = std::max<int64_t>(s, std::llabs(p.c[i]));
  return s;
}

// Tab-free, comma separated coordinates, first d entries only.
std::string to_string(const LatticePoint& p, int d);

// splitmix64 finalizer.
inline uint64_t mix64(uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline uint64_t hash_point(const LatticePoint& p, uint64_t h) {
  for (int i = 0; i < kMaxDim; ++i) h = mix64(h ^ static_cast<uint64_t>(p.c[i]));
  return h;
}

struct PointHash {
  size_t operator()(const LatticePoint& p) const {
    return static_cast<size_t>(hash_point(p, 0x5bd1e995ULL));
  }
};

// Top 53 bits of a 64-bit word as a double in [0,1).
inline double to_unit(uint64_t h) {
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

}  // namespace lrp
