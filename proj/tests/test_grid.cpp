#include <doctest.h>

#include <cstdio>
#include <cstring>
#include <filesystem>

#include "core/grid.hpp"

using namespace gfp;
namespace fs = std::filesystem;

namespace {

std::string tmpdir() {
  static const std::string d = [] {
    auto p = fs::temp_directory_path() / "gfperc_test_grid";
    fs::create_directories(p);
    return p.string();
  }();
  return d;
}

}  // namespace

TEST_CASE("grid geometry: nodes, coordinates, nearest index") {
  const GridGeometry g = GridGeometry::make(2, Box::rect(0, 2, -1, 1), 0.25, 0);
  CHECK(g.n[0] == 9);
  CHECK(g.n[1] == 9);
  CHECK(g.num_nodes() == 81);
  CHECK(g.coord(0, 0) == 0.0);
  CHECK(g.coord(0, 8) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(g.coord(1, 0) == -1.0);
  CHECK(g.index_of(0, 0.37) == 1);    // nearest of 0.25 / 0.5
  CHECK(g.index_of(0, 0.38) == 2);
  CHECK(g.index_of(0, -5.0) == 0);    // clamped
  CHECK(g.index_of(0, 99.0) == 8);

  int64_t c[3];
  g.de_lin(g.lin(3, 7), c);
  CHECK(c[0] == 3);
  CHECK(c[1] == 7);

  const GridGeometry g3 = GridGeometry::make(3, Box::cube(3, 0, 1), 0.5, 0);
  CHECK(g3.num_nodes() == 27);
  g3.de_lin(g3.lin(1, 2, 0), c);
  CHECK(c[0] == 1);
  CHECK(c[1] == 2);
  CHECK(c[2] == 0);

  CHECK(GridGeometry::make(2, Box::square(0, 4), 0.25, 1.6).pad_nodes() == 7);
}

TEST_CASE("box json round trip and index_box snapping") {
  const Box b = Box::rect(-1.5, 2.5, 0, 3);
  const Box r = Box::from_json(b.to_json());
  CHECK(r.dim == 2);
  CHECK(r.lo[0] == -1.5);
  CHECK(r.hi[1] == 3.0);

  const GridGeometry g = GridGeometry::make(2, Box::square(0, 4), 0.25, 0);
  const IndexBox ib = index_box(g, Box::rect(1, 3, 0.5, 2));
  CHECK(ib.lo[0] == 4);
  CHECK(ib.hi[0] == 12);
  CHECK(ib.lo[1] == 2);
  CHECK(ib.hi[1] == 8);
  CHECK(ib.count(2) == 9 * 7);
}

TEST_CASE("fgrid round trip is bit exact") {
  FieldSample f;
  f.grid = GridGeometry::make(2, Box::square(-1, 1), 0.5, 0.75);
  f.seed = 0x1234abcdu;
  f.provenance = {{"sampler", "unit_test"}};
  f.values.resize((size_t)f.grid.num_nodes());
  for (size_t i = 0; i < f.values.size(); ++i)
    f.values[i] = std::sin((double)i * 0.7) * 1e3 + 1e-7 * (double)i;
  f.values[3] = -0.0;  // sign bit must survive
  f.coupled = f.values;
  f.coupled[1] += 1e-16;

  const std::string path = tmpdir() + "/roundtrip.fgrid";
  save_fgrid(path, f);
  const FieldSample g = load_fgrid(path);

  CHECK(g.grid.dim == 2);
  CHECK(g.grid.n[0] == f.grid.n[0]);
  CHECK(g.grid.h == f.grid.h);
  CHECK(g.seed == f.seed);
  REQUIRE(g.values.size() == f.values.size());
  CHECK(std::memcmp(g.values.data(), f.values.data(),
                    f.values.size() * sizeof(double)) == 0);
  CHECK(std::signbit(g.values[3]));
  // the container holds one payload; a coupled partner is not persisted
  CHECK(g.coupled.empty());
}

TEST_CASE("labels fgrid round trip") {
  const GridGeometry g = GridGeometry::make(2, Box::square(0, 1), 0.5, 0);
  std::vector<int32_t> labels((size_t)g.num_nodes(), -1);
  labels[0] = 0;
  labels[4] = 17;
  const std::string path = tmpdir() + "/labels.fgrid";
  save_labels_fgrid(path, g, labels, json{{"level", 0.25}});
  GridGeometry g2;
  const std::vector<int32_t> back = load_labels_fgrid(path, &g2);
  CHECK(g2.num_nodes() == g.num_nodes());
  REQUIRE(back.size() == labels.size());
  CHECK(back == labels);
}

TEST_CASE("atomic_write_file leaves no partial file behind") {
  const std::string path = tmpdir() + "/atomic.txt";
  atomic_write_file(path, "first");
  atomic_write_file(path, "second");
  CHECK(read_file(path) == "second");
  // no stray temporaries in the directory
  int strays = 0;
  for (const auto& e : fs::directory_iterator(tmpdir())) {
    const std::string name = e.path().filename().string();
    if (name.find("atomic.txt.") == 0) ++strays;
  }
  CHECK(strays == 0);
}
