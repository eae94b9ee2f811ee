#pragma once

#include "grid.hpp"

namespace gfp {

// FaceOnly is the excursion-set convention (6-neighbour in 3D); the
// complement side of planar duality uses FaceAndDiagonal.
enum class Connectivity { FaceOnly, FaceAndDiagonal };

struct ExcursionMask {
  GridGeometry grid;
  double level = 0;
  Connectivity conn = Connectivity::FaceOnly;
  bool complement = false;  // mask is {f < level} instead of {f >= level}
  std::vector<uint8_t> in;

  bool at(int64_t i, int64_t j, int64_t k = 0) const {
    return in[grid.lin(i, j, k)] != 0;
  }
};

ExcursionMask threshold(const FieldSample& f, double level,
                        Connectivity conn = Connectivity::FaceOnly,
                        bool complement = false, bool use_coupled = false);

// box-restricted copy (same dim); grid extents snap to the index box
ExcursionMask restrict_mask(const ExcursionMask& m, const IndexBox& ib);
// 2D plane extract from a 3D mask at node index `k` along axis 2
ExcursionMask slice2d(const ExcursionMask& m, int64_t k, const IndexBox& lateral);

struct ComponentStats {
  int64_t size = 0;
  std::array<int64_t, 3> bb_lo{0, 0, 0};
  std::array<int64_t, 3> bb_hi{0, 0, 0};
  int64_t rep = -1;              // first node in scan order
  double min_dist2_origin = 0;   // over member nodes
  bool touches_edge = false;
};

struct ComponentLabeling {
  GridGeometry grid;
  Connectivity conn = Connectivity::FaceOnly;
  int32_t count = 0;
  std::vector<int32_t> labels;  // -1 outside the mask, else 0..count-1
  std::vector<ComponentStats> stats;

  double diameter(int32_t comp) const;  // exact max pairwise node distance
  std::vector<int32_t> filter_by_diameter(double min_diam) const;
  // lower/upper diameter bounds from the bounding box (h units applied)
  double diam_lower_bound(int32_t comp) const;
  double diam_upper_bound(int32_t comp) const;

 private:
  mutable std::vector<double> diam_cache_;
  friend ComponentLabeling label_components(const ExcursionMask&);
};

ComponentLabeling label_components(const ExcursionMask& m);

// exact diameter of a finite point set (O(n^2) small, cell-pruned above)
double point_set_diameter(const std::vector<std::array<double, 3>>& pts, int dim);

}  // namespace gfp
