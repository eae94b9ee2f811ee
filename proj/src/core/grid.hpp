#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "common.hpp"

namespace gfp {

struct Box {
  int dim = 2;
  std::array<double, 3> lo{0, 0, 0};
  std::array<double, 3> hi{0, 0, 0};

  static Box square(double a, double b) { return Box{2, {a, a, 0}, {b, b, 0}}; }
  static Box rect(double x0, double x1, double y0, double y1) {
    return Box{2, {x0, y0, 0}, {x1, y1, 0}};
  }
  static Box cube(int dim, double a, double b) {
    Box bx;
    bx.dim = dim;
    for (int k = 0; k < dim; ++k) {
      bx.lo[k] = a;
      bx.hi[k] = b;
    }
    return bx;
  }
  double side(int axis) const { return hi[axis] - lo[axis]; }
  json to_json() const;
  static Box from_json(const json& j);
};

// Uniform node grid over a box, plus the physical padding width the sampler
// used around it.  Nodes: x_k(i) = lo[k] + i*h, i = 0..n[k]-1.  Values arrays
// are row-major with axis 0 slowest.
struct GridGeometry {
  int dim = 2;
  std::array<double, 3> lo{0, 0, 0};
  std::array<double, 3> hi{0, 0, 0};
  double h = 0.25;
  double pad = 0.0;
  std::array<int64_t, 3> n{1, 1, 1};

  static GridGeometry make(int dim, const Box& box, double h, double pad);

  int64_t num_nodes() const {
    int64_t t = 1;
    for (int k = 0; k < dim; ++k) t *= n[k];
    return t;
  }
  int64_t pad_nodes() const { return (int64_t)std::ceil(pad / h - 1e-9); }
  double coord(int axis, int64_t i) const { return lo[axis] + (double)i * h; }
  // nearest node index, clamped into range
  int64_t index_of(int axis, double x) const;
  int64_t lin(int64_t i, int64_t j = 0, int64_t k = 0) const {
    if (dim == 2) return i * n[1] + j;
    return (i * n[1] + j) * n[2] + k;
  }
  void de_lin(int64_t idx, int64_t out[3]) const {
    if (dim == 2) {
      out[0] = idx / n[1];
      out[1] = idx % n[1];
      out[2] = 0;
    } else {
      out[2] = idx % n[2];
      const int64_t q = idx / n[2];
      out[1] = q % n[1];
      out[0] = q / n[1];
    }
  }
  std::array<double, 3> node_pos(int64_t idx) const {
    int64_t c[3];
    de_lin(idx, c);
    std::array<double, 3> p{0, 0, 0};
    for (int k = 0; k < dim; ++k) p[k] = coord(k, c[k]);
    return p;
  }
  double diameter() const;  // box diagonal length

  json to_json() const;
  static GridGeometry from_json(const json& j);
};

// Inclusive node-index ranges of a sub-box (snapped to nearest nodes).
struct IndexBox {
  std::array<int64_t, 3> lo{0, 0, 0};
  std::array<int64_t, 3> hi{0, 0, 0};
  bool contains(const int64_t c[3], int dim) const {
    for (int k = 0; k < dim; ++k)
      if (c[k] < lo[k] || c[k] > hi[k]) return false;
    return true;
  }
  int64_t count(int dim) const {
    int64_t t = 1;
    for (int k = 0; k < dim; ++k) t *= hi[k] - lo[k] + 1;
    return t;
  }
};
IndexBox index_box(const GridGeometry& g, const Box& box);

struct TruncatedKernel;  // fwd

struct FieldSample {
  GridGeometry grid;
  std::vector<double> values;   // f_r (or f when sampled untruncated)
  std::vector<double> coupled;  // optional untruncated partner f (same noise)
  uint64_t seed = 0;            // derived stream key used
  json provenance;              // sampler + kernel description

  bool has_coupled() const { return !coupled.empty(); }
  double value_at(int64_t i, int64_t j, int64_t k = 0) const {
    return values[grid.lin(i, j, k)];
  }
};

// .fgrid container: one-line JSON header, '\n', then the raw row-major
// little-endian payload (float64 fields, int32 labelings).
void save_fgrid(const std::string& path, const FieldSample& f,
                const json& level = json());
FieldSample load_fgrid(const std::string& path);
void save_labels_fgrid(const std::string& path, const GridGeometry& g,
                       const std::vector<int32_t>& labels, const json& extra);
std::vector<int32_t> load_labels_fgrid(const std::string& path, GridGeometry* g_out);

// temp-file + rename
void atomic_write_file(const std::string& path, const std::string& bytes);
std::string read_file(const std::string& path);

}  // namespace gfp
