#include "excursion.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

namespace gfp {

ExcursionMask threshold(const FieldSample& f, double level, Connectivity conn,
                        bool complement, bool use_coupled) {
  const std::vector<double>& v = use_coupled ? f.coupled : f.values;
  require_config(!v.empty(), use_coupled ? "threshold: sample has no coupled values"
                                         : "threshold: empty sample");
  ExcursionMask m;
  m.grid = f.grid;
  m.level = level;
  m.conn = conn;
  m.complement = complement;
  m.in.resize(v.size());
  for (size_t i = 0; i < v.size(); ++i)
    m.in[i] = complement ? (v[i] < level) : (v[i] >= level);
  return m;
}

ExcursionMask restrict_mask(const ExcursionMask& m, const IndexBox& ib) {
  ExcursionMask out;
  out.level = m.level;
  out.conn = m.conn;
  out.complement = m.complement;
  out.grid = m.grid;
  for (int a = 0; a < m.grid.dim; ++a) {
    out.grid.lo[a] = m.grid.coord(a, ib.lo[a]);
    out.grid.n[a] = ib.hi[a] - ib.lo[a] + 1;
    out.grid.hi[a] = out.grid.lo[a] + (double)(out.grid.n[a] - 1) * m.grid.h;
  }
  out.in.resize(out.grid.num_nodes());
  if (m.grid.dim == 2) {
    for (int64_t i = 0; i < out.grid.n[0]; ++i)
      for (int64_t j = 0; j < out.grid.n[1]; ++j)
        out.in[out.grid.lin(i, j)] = m.in[m.grid.lin(i + ib.lo[0], j + ib.lo[1])];
  } else {
    for (int64_t i = 0; i < out.grid.n[0]; ++i)
      for (int64_t j = 0; j < out.grid.n[1]; ++j)
        for (int64_t k = 0; k < out.grid.n[2]; ++k)
          out.in[out.grid.lin(i, j, k)] =
              m.in[m.grid.lin(i + ib.lo[0], j + ib.lo[1], k + ib.lo[2])];
  }
  return out;
}

ExcursionMask slice2d(const ExcursionMask& m, int64_t k, const IndexBox& lateral) {
  require_config(m.grid.dim == 3, "slice2d: 3D mask required");
  ExcursionMask out;
  out.level = m.level;
  out.conn = m.conn;
  out.complement = m.complement;
  out.grid.dim = 2;
  out.grid.h = m.grid.h;
  out.grid.pad = m.grid.pad;
  for (int a = 0; a < 2; ++a) {
    out.grid.lo[a] = m.grid.coord(a, lateral.lo[a]);
    out.grid.n[a] = lateral.hi[a] - lateral.lo[a] + 1;
    out.grid.hi[a] = out.grid.lo[a] + (double)(out.grid.n[a] - 1) * m.grid.h;
  }
  out.in.resize(out.grid.num_nodes());
  for (int64_t i = 0; i < out.grid.n[0]; ++i)
    for (int64_t j = 0; j < out.grid.n[1]; ++j)
      out.in[out.grid.lin(i, j)] =
          m.in[m.grid.lin(i + lateral.lo[0], j + lateral.lo[1], k)];
  return out;
}

namespace {

struct Dsu {
  std::vector<int32_t> parent;
  int32_t make() {
    parent.push_back((int32_t)parent.size());
    return (int32_t)parent.size() - 1;
  }
  int32_t find(int32_t a) {
    while (parent[a] != a) {
      parent[a] = parent[parent[a]];
      a = parent[a];
    }
    return a;
  }
  void unite(int32_t a, int32_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

}  // namespace

ComponentLabeling label_components(const ExcursionMask& m) {
  const GridGeometry& g = m.grid;
  ComponentLabeling out;
  out.grid = g;
  out.conn = m.conn;
  out.labels.assign(m.in.size(), -1);

  Dsu dsu;
  const bool diag = m.conn == Connectivity::FaceAndDiagonal;
  const int64_t n0 = g.n[0], n1 = g.n[1], n2 = g.dim == 3 ? g.n[2] : 1;

  // pass 1: provisional labels, union with already-scanned neighbours
  for (int64_t i = 0; i < n0; ++i)
    for (int64_t j = 0; j < n1; ++j)
      for (int64_t k = 0; k < n2; ++k) {
        const int64_t idx = g.dim == 2 ? g.lin(i, j) : g.lin(i, j, k);
        if (!m.in[idx]) continue;
        const int32_t id = dsu.make();
        out.labels[idx] = id;
        auto try_union = [&](int64_t di, int64_t dj, int64_t dk) {
          const int64_t a = i + di, b = j + dj, c = k + dk;
          if (a < 0 || b < 0 || b >= n1 || c < 0 || c >= n2) return;
          const int64_t nidx = g.dim == 2 ? g.lin(a, b) : g.lin(a, b, c);
          if (out.labels[nidx] >= 0) dsu.unite(id, out.labels[nidx]);
        };
        if (g.dim == 2) {
          try_union(-1, 0, 0);
          try_union(0, -1, 0);
          if (diag) {
            try_union(-1, -1, 0);
            try_union(-1, 1, 0);
          }
        } else {
          try_union(-1, 0, 0);
          try_union(0, -1, 0);
          try_union(0, 0, -1);
          if (diag) {
            // all lexicographically earlier neighbours of the 26-neighbourhood
            for (int64_t di = -1; di <= 0; ++di)
              for (int64_t dj = -1; dj <= 1; ++dj)
                for (int64_t dk = -1; dk <= 1; ++dk) {
                  if (di == 0 && (dj > 0 || (dj == 0 && dk >= 0))) continue;
                  if (di == 0 && dj == 0 && dk == 0) continue;
                  if (std::abs(di) + std::abs(dj) + std::abs(dk) <= 1) continue;
                  try_union(di, dj, dk);
                }
          }
        }
      }

  // pass 2: compact roots into final labels ordered by first occurrence
  std::vector<int32_t> final_of(dsu.parent.size(), -1);
  int32_t next = 0;
  for (auto& lab : out.labels) {
    if (lab < 0) continue;
    const int32_t root = dsu.find(lab);
    if (final_of[root] < 0) final_of[root] = next++;
    lab = final_of[root];
  }
  out.count = next;

  // pass 3: stats
  out.stats.assign(next, ComponentStats{});
  for (int64_t idx = 0; idx < (int64_t)out.labels.size(); ++idx) {
    const int32_t lab = out.labels[idx];
    if (lab < 0) continue;
    ComponentStats& s = out.stats[lab];
    int64_t c[3];
    g.de_lin(idx, c);
    if (s.size == 0) {
      s.rep = idx;
      for (int a = 0; a < 3; ++a) s.bb_lo[a] = s.bb_hi[a] = c[a];
      s.min_dist2_origin = kInf;
    } else {
      for (int a = 0; a < g.dim; ++a) {
        s.bb_lo[a] = std::min(s.bb_lo[a], c[a]);
        s.bb_hi[a] = std::max(s.bb_hi[a], c[a]);
      }
    }
    double d2 = 0;
    for (int a = 0; a < g.dim; ++a) {
      const double x = g.coord(a, c[a]);
      d2 += x * x;
      if (c[a] == 0 || c[a] == g.n[a] - 1) s.touches_edge = true;
    }
    s.min_dist2_origin = std::min(s.min_dist2_origin, d2);
    s.size += 1;
  }
  return out;
}

namespace {

struct CellBox {
  std::array<double, 3> lo{kInf, kInf, kInf}, hi{-kInf, -kInf, -kInf};
  std::vector<int32_t> pts;
};

double pair_ub(const CellBox& a, const CellBox& b, int dim) {
  double s = 0;
  for (int k = 0; k < dim; ++k) {
    const double m = std::max(
        std::max(std::abs(a.lo[k] - b.lo[k]), std::abs(a.lo[k] - b.hi[k])),
        std::max(std::abs(a.hi[k] - b.lo[k]), std::abs(a.hi[k] - b.hi[k])));
    s += m * m;
  }
  return std::sqrt(s);
}

double dist(const std::array<double, 3>& p, const std::array<double, 3>& q, int dim) {
  double s = 0;
  for (int k = 0; k < dim; ++k) s += (p[k] - q[k]) * (p[k] - q[k]);
  return std::sqrt(s);
}

}  // namespace

double point_set_diameter(const std::vector<std::array<double, 3>>& pts, int dim) {
  const size_t n = pts.size();
  if (n == 0) return 0;
  if (n <= 10000) {
    double best = 0;
    for (size_t i = 0; i < n; ++i)
      for (size_t j = i + 1; j < n; ++j) best = std::max(best, dist(pts[i], pts[j], dim));
    return best;
  }
  // bucket into cells, prune cell pairs by their max attainable distance
  std::array<double, 3> lo{kInf, kInf, kInf}, hi{-kInf, -kInf, -kInf};
  for (const auto& p : pts)
    for (int k = 0; k < dim; ++k) {
      lo[k] = std::min(lo[k], p[k]);
      hi[k] = std::max(hi[k], p[k]);
    }
  const int per_axis = dim == 2 ? 32 : 10;
  std::array<double, 3> step{1, 1, 1};
  for (int k = 0; k < dim; ++k)
    step[k] = std::max((hi[k] - lo[k]) / per_axis, 1e-12);
  auto cell_of = [&](const std::array<double, 3>& p) {
    int64_t idx = 0;
    for (int k = 0; k < dim; ++k) {
      int64_t c = (int64_t)((p[k] - lo[k]) / step[k]);
      c = std::min<int64_t>(std::max<int64_t>(c, 0), per_axis - 1);
      idx = idx * per_axis + c;
    }
    return idx;
  };
  std::unordered_map<int64_t, CellBox> cells;
  for (int32_t i = 0; i < (int32_t)n; ++i) {
    CellBox& cb = cells[cell_of(pts[i])];
    cb.pts.push_back(i);
    for (int k = 0; k < dim; ++k) {
      cb.lo[k] = std::min(cb.lo[k], pts[i][k]);
      cb.hi[k] = std::max(cb.hi[k], pts[i][k]);
    }
  }
  std::vector<const CellBox*> cl;
  cl.reserve(cells.size());
  for (auto& kv : cells) cl.push_back(&kv.second);
  struct Cand {
    double ub;
    const CellBox *a, *b;
  };
  std::vector<Cand> cand;
  for (size_t i = 0; i < cl.size(); ++i)
    for (size_t j = i; j < cl.size(); ++j)
      cand.push_back({pair_ub(*cl[i], *cl[j], dim), cl[i], cl[j]});
  std::sort(cand.begin(), cand.end(),
            [](const Cand& a, const Cand& b) { return a.ub > b.ub; });
  double best = 0;
  for (const Cand& c : cand) {
    if (c.ub <= best) break;
    for (int32_t ia : c.a->pts)
      for (int32_t ib : c.b->pts)
        best = std::max(best, dist(pts[ia], pts[ib], dim));
  }
  return best;
}

namespace {

// gather a component's nodes; for large components keep only face-boundary
// nodes (the diameter is attained there)
std::vector<std::array<double, 3>> gather_nodes(const ComponentLabeling& L,
                                                int32_t comp) {
  const GridGeometry& g = L.grid;
  const bool filter = L.stats[comp].size > 10000;
  std::vector<std::array<double, 3>> pts;
  const auto& s = L.stats[comp];
  const int64_t klo = g.dim == 3 ? s.bb_lo[2] : 0, khi = g.dim == 3 ? s.bb_hi[2] : 0;
  for (int64_t i = s.bb_lo[0]; i <= s.bb_hi[0]; ++i)
    for (int64_t j = s.bb_lo[1]; j <= s.bb_hi[1]; ++j)
      for (int64_t k = klo; k <= khi; ++k) {
        const int64_t idx = g.dim == 2 ? g.lin(i, j) : g.lin(i, j, k);
        if (L.labels[idx] != comp) continue;
        if (filter) {
          bool boundary = false;
          const int64_t c[3] = {i, j, k};
          for (int a = 0; a < g.dim && !boundary; ++a)
            for (int d = -1; d <= 1 && !boundary; d += 2) {
              int64_t q[3] = {i, j, k};
              q[a] = c[a] + d;
              if (q[a] < 0 || q[a] >= g.n[a]) {
                boundary = true;
                break;
              }
              const int64_t nidx = g.dim == 2 ? g.lin(q[0], q[1]) : g.lin(q[0], q[1], q[2]);
              if (L.labels[nidx] != comp) boundary = true;
            }
          if (!boundary) continue;
        }
        pts.push_back(g.node_pos(idx));
      }
  return pts;
}

}  // namespace

double ComponentLabeling::diameter(int32_t comp) const {
  if (diam_cache_.empty()) diam_cache_.assign(count, -1.0);
  if (diam_cache_[comp] >= 0) return diam_cache_[comp];
  const double d = point_set_diameter(gather_nodes(*this, comp), grid.dim);
  diam_cache_[comp] = d;
  return d;
}

double ComponentLabeling::diam_lower_bound(int32_t comp) const {
  double m = 0;
  for (int a = 0; a < grid.dim; ++a)
    m = std::max(m, (double)(stats[comp].bb_hi[a] - stats[comp].bb_lo[a]) * grid.h);
  return m;
}

double ComponentLabeling::diam_upper_bound(int32_t comp) const {
  double s = 0;
  for (int a = 0; a < grid.dim; ++a) {
    const double e = (double)(stats[comp].bb_hi[a] - stats[comp].bb_lo[a]) * grid.h;
    s += e * e;
  }
  return std::sqrt(s);
}

std::vector<int32_t> ComponentLabeling::filter_by_diameter(double min_diam) const {
  std::vector<int32_t> out;
  for (int32_t c = 0; c < count; ++c) {
    if (diam_upper_bound(c) < min_diam) continue;
    if (diam_lower_bound(c) >= min_diam || diameter(c) >= min_diam) out.push_back(c);
  }
  return out;
}

}  // namespace gfp
