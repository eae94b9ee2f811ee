#pragma once

#include <array>
#include <unordered_map>
#include <vector>

#include "common.hpp"

namespace gfp {

struct RenormScheme {
  int64_t lambda = 2;  // relative scale; L_n = lambda^n
  int64_t rho = 1;     // range
  int64_t sigma = 1;   // separation
  int d = 2;

  void validate() const;
  bool geometry_ok() const { return lambda * rho >= 100 * sigma && rho >= 2; }
  // lambda^n, overflow-checked (simulation scales only)
  int64_t L(int n) const;
};

enum class HMode { Cap, Eps };

// P[H_n^c] upper bounds fed to the recursion: Cap uses the hypothesis cap
// q0bar*2^{-2^n} itself; Eps uses exp(-(R*L_{n-1})^2), the sup-norm
// concentration shape, as an exact dyadic upper bound.
struct HBoundSpec {
  HMode mode = HMode::Cap;
  double R = 0;  // eps mode only
};

struct RecursionStep {
  int n = 0;
  double h_ratio = 0;     // (P[H_n^c] bound) / q0bar
  double u = 0;           // q_n / q0bar upper bound
  double u_over_cap = 0;  // exact ratio against the target 2^{1-2^n}
  bool ok = true;
};

struct RecursionTrace {
  std::vector<RecursionStep> steps;  // n = 0..n_max
  bool all_ok = true;
  int first_fail = -1;
  json to_json() const;
};

// Exact upper-bound iteration of q_{n+1} <= P[H_{n+1}^c] + (3 rho lambda)^{2d} q_n^2
// in units of q0bar (dyadic integer arithmetic; directed upward rounding only).
// q0_ratio = q0/q0bar must be <= 1; pass exactly 1.0 for q0 = q0bar.
RecursionTrace verify_recursion(const RenormScheme& s, double q0_ratio,
                                const HBoundSpec& h, int n_max);

struct EpsBounds {
  double e = 0;             // gamma*(beta - d/2) - 1
  std::vector<double> eps;  // eps_n = (R L_{n-1})^{-e}, n = 1..
  double sum_bound = 0;     // geometric-series bound R^{-e}/(1 - lambda^{-e})
  double budget = 0;        // R^{-3/2}/2
  bool ok = false;          // sum_bound <= budget
  double minimal_R = 0;     // smallest R passing the budget
};
EpsBounds make_h_bounds(double R, double gamma, double beta, int d,
                        int64_t lambda, int n_terms = 32);

// Synthetic renormalization lattice: iid Bernoulli inputs for the base events
// G_{0,x} and the H_n translates, all pure functions of (seed, site), with
// the cascade events evaluated exactly (and memoized) on demand.
class BlackLattice {
 public:
  BlackLattice(RenormScheme s, int n_max, double p_g0, std::vector<double> p_h,
               uint64_t seed);

  const RenormScheme& scheme() const { return s_; }
  int n_max() const { return n_max_; }
  uint64_t seed() const { return seed_; }

  bool g0(const std::array<int64_t, 3>& x) const;  // x in Z^d
  // H_m translate based at y in L_m Z^d (absolute coordinates)
  bool h_event(int m, const std::array<int64_t, 3>& y) const;
  // G_{n,x} for x in L_n Z^d
  bool g_event(int n, const std::array<int64_t, 3>& x) const;
  bool black(const std::array<int64_t, 3>& x, int n) const;

 private:
  RenormScheme s_;
  int n_max_ = 0;
  double p_g0_ = 1;
  std::vector<double> p_h_;
  uint64_t seed_ = 0;

  struct Key {
    int n;
    std::array<int64_t, 3> x;
    bool operator==(const Key& o) const { return n == o.n && x == o.x; }
  };
  struct KeyHash {
    size_t operator()(const Key& k) const;
  };
  mutable std::unordered_map<Key, bool, KeyHash> memo_;

  double p_h_at(int m) const;
  bool bernoulli(uint64_t tag, const std::array<int64_t, 3>& cell, double p) const;
};

// Dense black/base maps over Z^d cap [-4 rho L_n, 4 rho L_n]^d; one pass of
// site hashes plus prefix-summed H coverage windows.
struct BlackMap {
  int dim = 2;
  std::array<int64_t, 3> lo{0, 0, 0}, hi{0, 0, 0};
  std::array<int64_t, 3> n{1, 1, 1};
  std::vector<uint8_t> base;   // G_{0,x}
  std::vector<uint8_t> black;  // black at scale n

  int64_t lin(const std::array<int64_t, 3>& x) const {
    int64_t idx = 0;
    for (int k = 0; k < dim; ++k) idx = idx * n[k] + (x[k] - lo[k]);
    return idx;
  }
  bool contains(const std::array<int64_t, 3>& x) const {
    for (int k = 0; k < dim; ++k)
      if (x[k] < lo[k] || x[k] > hi[k]) return false;
    return true;
  }
  bool black_at(const std::array<int64_t, 3>& x) const {
    return black[(size_t)lin(x)] != 0;
  }
  bool base_at(const std::array<int64_t, 3>& x) const {
    return base[(size_t)lin(x)] != 0;
  }
};
BlackMap materialize_black(const BlackLattice& lat, int n);

// G_{n,0} evaluated from a materialized map (the map box equals the cascade
// child box, so the base layer is shared); exact same event as
// lat.g_event(n, 0) for n = 1
bool g1_from_map(const BlackLattice& lat, const BlackMap& map);

// BFS over black vertices in [-4 rho L_n, 4 rho L_n]^d joining S1 to S2.
// S1, S2 must be nonempty connected subsets of [-rho L_n, rho L_n]^d with
// Euclidean diameter >= 10 sigma L_{n-1}.
bool check_geometry(const BlackLattice& lat, int n,
                    const std::vector<std::array<int64_t, 3>>& s1,
                    const std::vector<std::array<int64_t, 3>>& s2,
                    const BlackMap* prebuilt = nullptr);

}  // namespace gfp
