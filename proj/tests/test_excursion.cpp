#include <doctest.h>

#include <cmath>
#include <queue>
#include <vector>

#include "core/excursion.hpp"
#include "core/rng.hpp"

using namespace gfp;

namespace {

FieldSample random_field(int dim, int64_t side, uint64_t key, double h = 1.0) {
  FieldSample f;
  const Box b = dim == 2 ? Box::square(0, (double)(side - 1) * h)
                         : Box::cube(3, 0, (double)(side - 1) * h);
  f.grid = GridGeometry::make(dim, b, h, 0);
  f.values.resize((size_t)f.grid.num_nodes());
  const CounterRng rng(key);
  for (size_t i = 0; i < f.values.size(); ++i)
    f.values[i] = rng.unit_at(i) - 0.5;
  f.seed = key;
  return f;
}

// independent labeling oracle: plain BFS flood fill
std::vector<int32_t> flood_labels(const ExcursionMask& m) {
  const GridGeometry& g = m.grid;
  const bool diag = m.conn == Connectivity::FaceAndDiagonal;
  std::vector<int32_t> lab((size_t)g.num_nodes(), -1);
  int32_t next = 0;
  const int dlo = g.dim == 3 ? -1 : 0, dhi = g.dim == 3 ? 1 : 0;
  for (int64_t start = 0; start < g.num_nodes(); ++start) {
    if (m.in[(size_t)start] == 0 || lab[(size_t)start] >= 0) continue;
    std::queue<int64_t> q;
    q.push(start);
    lab[(size_t)start] = next;
    while (!q.empty()) {
      int64_t c[3];
      g.de_lin(q.front(), c);
      q.pop();
      for (int di = -1; di <= 1; ++di)
        for (int dj = -1; dj <= 1; ++dj)
          for (int dk = dlo; dk <= dhi; ++dk) {
            if (di == 0 && dj == 0 && dk == 0) continue;
            if (!diag && std::abs(di) + std::abs(dj) + std::abs(dk) != 1)
              continue;
            const int64_t ni = c[0] + di, nj = c[1] + dj, nk = c[2] + dk;
            if (ni < 0 || ni >= g.n[0] || nj < 0 || nj >= g.n[1]) continue;
            if (g.dim == 3 && (nk < 0 || nk >= g.n[2])) continue;
            const int64_t lv = g.lin(ni, nj, g.dim == 3 ? nk : 0);
            if (m.in[(size_t)lv] == 0 || lab[(size_t)lv] >= 0) continue;
            lab[(size_t)lv] = next;
            q.push(lv);
          }
    }
    ++next;
  }
  return lab;
}

// do two labelings induce the same partition?
bool same_partition(const std::vector<int32_t>& a, const std::vector<int32_t>& b) {
  if (a.size() != b.size()) return false;
  std::vector<int32_t> a2b, b2a;
  for (size_t i = 0; i < a.size(); ++i) {
    if ((a[i] < 0) != (b[i] < 0)) return false;
    if (a[i] < 0) continue;
    if ((size_t)a[i] >= a2b.size()) a2b.resize((size_t)a[i] + 1, -1);
    if ((size_t)b[i] >= b2a.size()) b2a.resize((size_t)b[i] + 1, -1);
    if (a2b[(size_t)a[i]] < 0) a2b[(size_t)a[i]] = b[i];
    if (b2a[(size_t)b[i]] < 0) b2a[(size_t)b[i]] = a[i];
    if (a2b[(size_t)a[i]] != b[i] || b2a[(size_t)b[i]] != a[i]) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("threshold: mask is {f >= level}, complement is {f < level}") {
  const FieldSample f = random_field(2, 8, 31);
  const double level = 0.1;
  const ExcursionMask m = threshold(f, level);
  const ExcursionMask c = threshold(f, level, Connectivity::FaceAndDiagonal, true);
  for (size_t i = 0; i < f.values.size(); ++i) {
    CHECK((m.in[i] != 0) == (f.values[i] >= level));
    CHECK((c.in[i] != 0) == (f.values[i] < level));
    CHECK((m.in[i] != 0) != (c.in[i] != 0));  // exact complement
  }
  CHECK(m.conn == Connectivity::FaceOnly);
  CHECK(c.complement);
}

TEST_CASE("label_components matches a BFS flood-fill oracle") {
  for (uint64_t key : {1u, 2u, 3u, 4u, 5u}) {
    for (Connectivity conn : {Connectivity::FaceOnly, Connectivity::FaceAndDiagonal}) {
      const FieldSample f = random_field(2, 13, key);
      const ExcursionMask m = threshold(f, 0.0, conn);
      const ComponentLabeling lab = label_components(m);
      const std::vector<int32_t> want = flood_labels(m);
      CHECK(same_partition(lab.labels, want));
      int32_t mx = -1;
      for (int32_t v : want) mx = std::max(mx, v);
      CHECK(lab.count == mx + 1);
      CHECK((size_t)lab.count == lab.stats.size());
    }
  }
  // 3D, face connectivity
  const FieldSample f3 = random_field(3, 7, 99);
  const ExcursionMask m3 = threshold(f3, 0.05);
  const ComponentLabeling lab3 = label_components(m3);
  CHECK(same_partition(lab3.labels, flood_labels(m3)));
}

TEST_CASE("component stats: sizes, bounding boxes, edge contact, origin dist") {
  const FieldSample f = random_field(2, 10, 77);
  const ExcursionMask m = threshold(f, -0.05);
  const ComponentLabeling lab = label_components(m);
  const GridGeometry& g = m.grid;

  int64_t mask_count = 0;
  for (uint8_t v : m.in) mask_count += v != 0;
  int64_t stat_count = 0;
  for (const auto& s : lab.stats) stat_count += s.size;
  CHECK(mask_count == stat_count);

  std::vector<double> min_d2(lab.stats.size(), 1e300);
  std::vector<bool> edge(lab.stats.size(), false);
  for (int64_t idx = 0; idx < g.num_nodes(); ++idx) {
    const int32_t l = lab.labels[(size_t)idx];
    if (l < 0) continue;
    int64_t c[3];
    g.de_lin(idx, c);
    const auto& s = lab.stats[(size_t)l];
    for (int k = 0; k < g.dim; ++k) {
      CHECK(c[k] >= s.bb_lo[k]);
      CHECK(c[k] <= s.bb_hi[k]);
    }
    const auto p = g.node_pos(idx);
    min_d2[(size_t)l] = std::min(min_d2[(size_t)l], p[0] * p[0] + p[1] * p[1]);
    for (int k = 0; k < g.dim; ++k)
      if (c[k] == 0 || c[k] == g.n[k] - 1) edge[(size_t)l] = true;
  }
  for (size_t l = 0; l < lab.stats.size(); ++l) {
    CHECK(lab.stats[l].min_dist2_origin == doctest::Approx(min_d2[l]).epsilon(1e-12));
    CHECK(lab.stats[l].touches_edge == edge[l]);
    CHECK(lab.labels[(size_t)lab.stats[l].rep] == (int32_t)l);
  }
}

TEST_CASE("exact diameters agree with the quadratic oracle") {
  const FieldSample f = random_field(2, 12, 5150, 0.5);
  const ExcursionMask m = threshold(f, 0.0);
  const ComponentLabeling lab = label_components(m);
  const GridGeometry& g = m.grid;

  for (int32_t comp = 0; comp < lab.count; ++comp) {
    std::vector<std::array<double, 3>> pts;
    for (int64_t idx = 0; idx < g.num_nodes(); ++idx)
      if (lab.labels[(size_t)idx] == comp) pts.push_back(g.node_pos(idx));
    double want = 0;
    for (size_t i = 0; i < pts.size(); ++i)
      for (size_t j = i + 1; j < pts.size(); ++j)
        want = std::max(want, std::hypot(pts[i][0] - pts[j][0],
                                         pts[i][1] - pts[j][1]));
    const double got = lab.diameter(comp);
    CHECK(got == doctest::Approx(want).epsilon(1e-12));
    CHECK(lab.diam_lower_bound(comp) <= got + 1e-12);
    CHECK(lab.diam_upper_bound(comp) >= got - 1e-12);
  }

  std::vector<std::array<double, 3>> line{{0, 0, 0}, {3, 4, 0}, {1, 1, 0}};
  CHECK(point_set_diameter(line, 2) == doctest::Approx(5.0).epsilon(1e-14));
}

TEST_CASE("filter_by_diameter keeps exactly the large components") {
  const FieldSample f = random_field(2, 14, 8);
  const ExcursionMask m = threshold(f, 0.0);
  const ComponentLabeling lab = label_components(m);
  const double cut = 3.0;
  const auto got = lab.filter_by_diameter(cut);
  std::vector<int32_t> want;
  for (int32_t c = 0; c < lab.count; ++c)
    if (lab.diameter(c) >= cut) want.push_back(c);
  CHECK(got == want);
}

TEST_CASE("raising the level refines the excursion set and its components") {
  const FieldSample f = random_field(2, 15, 123);
  const ExcursionMask lo = threshold(f, -0.1);
  const ExcursionMask hi = threshold(f, 0.15);
  const ComponentLabeling lab_lo = label_components(lo);
  const ComponentLabeling lab_hi = label_components(hi);
  std::vector<int32_t> parent((size_t)lab_hi.count, -2);
  for (size_t i = 0; i < hi.in.size(); ++i) {
    if (hi.in[i] == 0) continue;
    CHECK(lo.in[i] != 0);  // mask nesting
    const int32_t ch = lab_hi.labels[i];
    const int32_t pl = lab_lo.labels[i];
    if (parent[(size_t)ch] == -2) parent[(size_t)ch] = pl;
    CHECK(parent[(size_t)ch] == pl);  // each fine component has one parent
  }
}

TEST_CASE("restrict_mask and slice2d take the expected sub-geometry") {
  const FieldSample f3 = random_field(3, 6, 2024);
  const ExcursionMask m3 = threshold(f3, 0.0);
  IndexBox ib;
  ib.lo = {1, 1, 0};
  ib.hi = {4, 4, 5};
  const ExcursionMask r = restrict_mask(m3, ib);
  CHECK(r.grid.dim == 3);
  CHECK(r.grid.n[0] == 4);
  CHECK(r.grid.n[2] == 6);
  for (int64_t i = 0; i < 4; ++i)
    for (int64_t j = 0; j < 4; ++j)
      for (int64_t k = 0; k < 6; ++k)
        CHECK(r.at(i, j, k) == m3.at(i + 1, j + 1, k));

  IndexBox lat;
  lat.lo = {0, 0, 0};
  lat.hi = {5, 5, 0};
  const ExcursionMask s = slice2d(m3, 2, lat);
  CHECK(s.grid.dim == 2);
  for (int64_t i = 0; i < 6; ++i)
    for (int64_t j = 0; j < 6; ++j)
      CHECK(s.at(i, j) == m3.at(i, j, 2));
}
