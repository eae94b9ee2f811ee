#pragma once

#include <memory>

#include "excursion.hpp"

namespace gfp {

// A detector maps one field realization to a 0/1 indicator (or a count).
struct Detector {
  virtual ~Detector() = default;
  virtual double evaluate(const FieldSample& f) const = 0;
  // monotone increasing in the field (raising values can only switch 0 -> 1
  // or raise the count)
  virtual bool monotone() const { return false; }
  virtual bool binary() const { return true; }
  virtual int required_dim() const { return 2; }
  virtual json describe() const = 0;
};

// registry: construct by {"name": ..., params...}
std::unique_ptr<Detector> make_detector(const json& cfg);

// left-right style crossing of a sub-box along `axis` (FaceOnly BFS inside
// the box); shared by the crossing detector and the duality checks
bool box_crossing(const ExcursionMask& m, const IndexBox& ib, int axis);

// deterministic good-pair search: scan angles on the two concentric circles
// and return the first (x, z) satisfying both separation conditions for the
// path clipped to D(0, 1.9R)
struct GoodPairResult {
  bool found = false;
  std::array<double, 2> x{0, 0}, z{0, 0};
  double theta = 0;
};
GoodPairResult good_pair_search(const std::vector<std::array<double, 2>>& path,
                                double R, double r_prime, int angular_steps = 720);
// condition re-check for an explicit candidate pair (used by tests)
bool good_pair_conditions(const std::vector<std::array<double, 2>>& path,
                          double R, double r_prime,
                          const std::array<double, 2>& x,
                          const std::array<double, 2>& z);

// greedy contact-point placement along a polyline: spacing >= 20 rho,
// tie-break by path order; returns the chosen centers
std::vector<std::array<double, 2>> place_contact_points(
    const std::vector<std::array<double, 2>>& path, double rho);

}  // namespace gfp
