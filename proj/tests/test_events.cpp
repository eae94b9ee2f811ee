#include <doctest.h>

#include <cmath>
#include <functional>

#include "core/events.hpp"
#include "core/rng.hpp"
#include "core/sampler.hpp"

using namespace gfp;

namespace {

using Fill2 = std::function<double(double, double)>;
using Fill3 = std::function<double(double, double, double)>;

FieldSample field2(const Box& b, double h, const Fill2& fill) {
  FieldSample f;
  f.grid = GridGeometry::make(2, b, h, 0);
  f.values.resize((size_t)f.grid.num_nodes());
  for (int64_t i = 0; i < f.grid.n[0]; ++i)
    for (int64_t j = 0; j < f.grid.n[1]; ++j)
      f.values[(size_t)f.grid.lin(i, j)] =
          fill(f.grid.coord(0, i), f.grid.coord(1, j));
  f.seed = 1;
  return f;
}

FieldSample field3(const Box& b, double h, const Fill3& fill) {
  FieldSample f;
  f.grid = GridGeometry::make(3, b, h, 0);
  f.values.resize((size_t)f.grid.num_nodes());
  for (int64_t i = 0; i < f.grid.n[0]; ++i)
    for (int64_t j = 0; j < f.grid.n[1]; ++j)
      for (int64_t k = 0; k < f.grid.n[2]; ++k)
        f.values[(size_t)f.grid.lin(i, j, k)] = fill(
            f.grid.coord(0, i), f.grid.coord(1, j), f.grid.coord(2, k));
  f.seed = 1;
  return f;
}

FieldSample dummy(uint64_t seed) {
  FieldSample f;
  f.grid = GridGeometry::make(2, Box::square(0, 1), 1.0, 0);
  f.values.assign((size_t)f.grid.num_nodes(), 0.0);
  f.seed = seed;
  return f;
}

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind;
  }
  return ErrorKind::Runtime;
}

}  // namespace

TEST_CASE("crossing detector: planted stripe crosses one way only") {
  const Box b = Box::square(0, 10);
  const FieldSample f = field2(b, 1.0, [](double, double y) {
    return std::abs(y - 5.0) < 0.5 ? 1.0 : -1.0;
  });
  const json base{{"name", "crossing"}, {"level", 0.0}, {"box", b.to_json()}};

  json lr = base;  // default left -> right
  CHECK(make_detector(lr)->evaluate(f) == 1.0);

  json bt = base;
  bt["from"] = "bottom";
  bt["to"] = "top";
  CHECK(make_detector(bt)->evaluate(f) == 0.0);

  // complement of the stripe splits into two halves: no bottom-top crossing
  json cbt = bt;
  cbt["complement"] = true;
  CHECK(make_detector(cbt)->evaluate(f) == 0.0);

  // complement left-right crossing exists (run along y = 0)
  json clr = base;
  clr["complement"] = true;
  CHECK(make_detector(clr)->evaluate(f) == 1.0);

  CHECK(make_detector(lr)->monotone());
  CHECK_FALSE(make_detector(clr)->monotone());
  CHECK(make_detector(lr)->binary());
}

TEST_CASE("crossing detector: config validation") {
  CHECK(kind_of([] {
          make_detector({{"name", "crossing"},
                         {"level", 0.0},
                         {"R", 5.0},
                         {"from", "left"},
                         {"to", "top"}});
        }) == ErrorKind::Config);
  CHECK(kind_of([] { make_detector({{"name", "crossing"}, {"R", 5.0}}); }) ==
        ErrorKind::Config);  // level is required
  CHECK(kind_of([] { make_detector({{"name", "nope"}}); }) == ErrorKind::Config);
  // R-box construction: 3:1 rectangle, long axis crossing
  const auto det = make_detector(
      {{"name", "crossing"}, {"level", 0.0}, {"R", 4.0}, {"aspect", 3.0}});
  const json d = det->describe();
  CHECK(d.at("box").at("hi")[0].get<double>() == 12.0);
  CHECK(d.at("box").at("hi")[1].get<double>() == 4.0);
}

TEST_CASE("crossing detector: 3D slab boxes") {
  const Box slab{3, {0, 0, 0}, {12, 4, 2}};
  const FieldSample f = field3(slab, 1.0, [](double, double y, double z) {
    return (std::abs(y - 2.0) < 0.5 && std::abs(z - 1.0) < 0.5) ? 1.0 : -1.0;
  });
  const json cfg{{"name", "crossing"}, {"level", 0.0}, {"R", 4.0},
                 {"aspect", 3.0},      {"slab_height", 2.0}};
  const auto det = make_detector(cfg);
  CHECK(det->required_dim() == 3);
  CHECK(det->evaluate(f) == 1.0);

  json updown = cfg;
  updown["from"] = "down";
  updown["to"] = "up";
  CHECK(make_detector(updown)->evaluate(f) == 0.0);
}

TEST_CASE("planar duality: primal crossing XOR dual complement crossing") {
  const Box b = Box::square(0, 8);
  const TruncatedKernel k(KernelSpec{}, 4.0);
  const GridGeometry g = GridGeometry::make(2, b, 0.5, required_pad(k, false));
  const json lr{{"name", "crossing"}, {"level", 0.1}, {"box", b.to_json()}};
  json dual{{"name", "crossing"}, {"level", 0.1}, {"box", b.to_json()},
            {"from", "bottom"},   {"to", "top"},  {"complement", true}};
  const auto a = make_detector(lr);
  const auto c = make_detector(dual);
  for (int64_t rep = 0; rep < 60; ++rep) {
    const FieldSample f = sample_convolution(k, g, false, 424242, (uint64_t)rep);
    const double pa = a->evaluate(f), pc = c->evaluate(f);
    CHECK(pa + pc == 1.0);  // exactly one of the two, every realization
  }
}

TEST_CASE("annulus detector: circuits and arms on planted rings and spokes") {
  const Box b = Box::square(-10, 10);
  const double h = 0.5;
  const json common{{"name", "annulus"}, {"level", 0.0},
                    {"r_inner", 2.0},    {"r_outer", 8.0}};

  // a full ring (three-plus nodes thick): circuit yes, arm no
  const FieldSample ring = field2(b, h, [](double x, double y) {
    const double d = std::hypot(x, y);
    return (d >= 4.25 && d <= 5.75) ? 1.0 : -1.0;
  });
  json circuit = common;
  circuit["mode"] = "circuit";
  json arm = common;
  arm["mode"] = "arm";
  CHECK(make_detector(circuit)->evaluate(ring) == 1.0);
  CHECK(make_detector(arm)->evaluate(ring) == 0.0);

  // ring with a gap: the complement sneaks through, circuit fails
  const FieldSample broken = field2(b, h, [](double x, double y) {
    const double d = std::hypot(x, y);
    const double th = std::atan2(y, x);
    if (th > 0.2 && th < 0.8) return -1.0;
    return (d >= 4.25 && d <= 5.75) ? 1.0 : -1.0;
  });
  CHECK(make_detector(circuit)->evaluate(broken) == 0.0);

  // a radial spoke: arm yes, circuit no
  const FieldSample spoke = field2(b, h, [](double x, double y) {
    return (x >= 0.0 && std::abs(y) <= 0.3) ? 1.0 : -1.0;
  });
  CHECK(make_detector(arm)->evaluate(spoke) == 1.0);
  CHECK(make_detector(circuit)->evaluate(spoke) == 0.0);

  // half-plane arms see the spoke only on the matching side
  json hp = common;
  hp["mode"] = "half_plane_arm";
  hp["half_plane"] = "upper";
  CHECK(make_detector(hp)->evaluate(spoke) == 1.0);  // y = 0 row is admissible
  hp["half_plane"] = "left";
  CHECK(make_detector(hp)->evaluate(spoke) == 0.0);

  CHECK(make_detector(circuit)->monotone());
  CHECK(make_detector(arm)->monotone());
  CHECK(kind_of([&] {
          json badc = common;
          badc["r_inner"] = 9.0;
          make_detector(badc);
        }) == ErrorKind::Config);
}

TEST_CASE("orthogonal squares: planted L-shaped sheet") {
  const Box b = Box::cube(3, 0, 4);
  const json cfg{{"name", "orthogonal_squares"}, {"r", 4.0}, {"level", 0.0}};
  // wall x2 = 0 and floor x3 = 0, joined along the shared edge
  const FieldSample sheet = field3(b, 1.0, [](double, double y, double z) {
    return (y < 0.5 || z < 0.5) ? 1.0 : -1.0;
  });
  CHECK(make_detector(cfg)->evaluate(sheet) == 1.0);

  // wall only: the start edge lives on the wall top, but the far floor edge
  // is unreachable
  const FieldSample wall = field3(b, 1.0, [](double, double y, double) {
    return y < 0.5 ? 1.0 : -1.0;
  });
  CHECK(make_detector(cfg)->evaluate(wall) == 0.0);
  CHECK(make_detector(cfg)->monotone());
}

TEST_CASE("contact points: greedy placement spacing and planted counts") {
  // straight path of length 4R: greedy keeps ceil(len/20rho) + 1-ish points,
  // here exactly {-20,-10,0,10,20}
  const std::vector<std::array<double, 2>> path{{-20, 0}, {20, 0}};
  const auto kept = place_contact_points(path, 0.5);
  CHECK(kept.size() == 5);
  for (size_t i = 0; i < kept.size(); ++i)
    for (size_t j = i + 1; j < kept.size(); ++j)
      CHECK(std::hypot(kept[i][0] - kept[j][0], kept[i][1] - kept[j][1]) >=
            10.0 - 1e-12);

  const Box b = Box::square(-12, 12);
  const json cfg{{"name", "contact_points"}, {"R", 4.0}, {"rho", 0.5},
                 {"level", 0.0},             {"path", json::array({
                                                 json::array({-8.0, 0.0}),
                                                 json::array({8.0, 0.0}),
                                             })}};
  const FieldSample high = field2(b, 0.5, [](double, double) { return 1.0; });
  const FieldSample low = field2(b, 0.5, [](double, double) { return -1.0; });
  const auto det = make_detector(cfg);
  CHECK_FALSE(det->binary());
  CHECK(det->evaluate(high) == 2.0);  // two centers 16 > 10 apart
  CHECK(det->evaluate(low) == 0.0);

  json gated = cfg;
  gated["min_count"] = 2;
  CHECK(make_detector(gated)->binary());
  CHECK(make_detector(gated)->evaluate(high) == 1.0);
  gated["min_count"] = 3;
  CHECK(make_detector(gated)->evaluate(high) == 0.0);
}

TEST_CASE("good pair: straight chord admits a pair, a small loop does not") {
  const double R = 100, rp = 1.0;
  const std::vector<std::array<double, 2>> chord{{-200, 0}, {200, 0}};
  const GoodPairResult res = good_pair_search(chord, R, rp);
  REQUIRE(res.found);
  // the reported pair must satisfy the conditions verbatim
  CHECK(good_pair_conditions(chord, R, rp, res.x, res.z));
  CHECK(std::hypot(res.z[0] - res.x[0], res.z[1] - res.x[1]) ==
        doctest::Approx(10 * rp).epsilon(1e-9));

  // a loop of radius 50 never comes near the candidate circle of radius ~190
  std::vector<std::array<double, 2>> loop;
  for (int s = 0; s <= 100; ++s) {
    const double t = 2 * M_PI * s / 100;
    loop.push_back({50 * std::cos(t), 50 * std::sin(t)});
  }
  CHECK_FALSE(good_pair_search(loop, R, rp).found);

  const json cfg{{"name", "good_pair"}, {"R", R}, {"r_prime", rp},
                 {"path", json::array({json::array({-200.0, 0.0}),
                                       json::array({200.0, 0.0})})}};
  const auto det = make_detector(cfg);
  CHECK(det->required_dim() == 0);
  CHECK(det->evaluate(dummy(1)) == 1.0);
}

TEST_CASE("uniqueness_in_slab: bridged twin blobs vs separated ones") {
  const double R = 4;
  const Box b{3, {-16, -16, 0}, {16, 16, 2}};
  const json cfg{{"name", "uniqueness_in_slab"}, {"R", R}, {"a", 0.5},
                 {"delta", 0.25}, {"level", 0.4}, {"level_planar", 0.5}};
  auto blob = [](double x, double y, double cx) {
    return std::abs(x - cx) <= 3.0 && std::abs(y) <= 2.0;
  };
  // two planar blobs joined through the slab by a z = 1 bridge
  const FieldSample joined = field3(b, 1.0, [&](double x, double y, double z) {
    if (z < 0.5 && (blob(x, y, -5) || blob(x, y, 5))) return 1.0;
    // z = 1 bridge between the blob centers, below the planar level
    if (std::abs(y) < 0.5 && std::abs(x) <= 5.5 && z > 0.5) return 0.45;
    return -1.0;
  });
  // same blobs with no bridge
  const FieldSample split = field3(b, 1.0, [&](double x, double y, double z) {
    return (z < 0.5 && (blob(x, y, -5) || blob(x, y, 5))) ? 1.0 : -1.0;
  });
  const auto det = make_detector(cfg);
  CHECK_FALSE(det->monotone());
  CHECK(det->evaluate(joined) == 1.0);
  CHECK(det->evaluate(split) == 0.0);
  // a single blob is vacuously unique
  const FieldSample one = field3(b, 1.0, [&](double x, double y, double z) {
    return (z < 0.5 && blob(x, y, 0)) ? 1.0 : -1.0;
  });
  CHECK(det->evaluate(one) == 1.0);
}

TEST_CASE("sprouts: plane-bound components fail, filled slabs pass") {
  const double R = 4;
  const Box b{3, {-8, -8, 0}, {8, 8, 2}};
  const json cfg{{"name", "sprouts"}, {"R", R}, {"a", 0.5},
                 {"level", 0.4}, {"level_planar", 0.5}};
  const auto det = make_detector(cfg);
  CHECK_FALSE(det->monotone());

  const FieldSample filled = field3(b, 1.0, [](double, double, double) {
    return 1.0;
  });
  CHECK(det->evaluate(filled) == 1.0);

  // a big planar component with nothing above it cannot sprout
  const FieldSample flat = field3(b, 1.0, [](double, double, double z) {
    return z < 0.5 ? 1.0 : -1.0;
  });
  CHECK(det->evaluate(flat) == 0.0);

  // no large planar component: vacuous pass
  const FieldSample empty = field3(b, 1.0, [](double, double, double) {
    return -1.0;
  });
  CHECK(det->evaluate(empty) == 1.0);
}

TEST_CASE("good_point: constant fields decide both variants") {
  const double R = 4;
  const Box b{3, {-16, -16, 0}, {16, 16, 4}};
  const FieldSample high = field3(b, 1.0, [](double, double, double) {
    return 5.0;
  });
  const FieldSample low = field3(b, 1.0, [](double, double, double) {
    return -5.0;
  });
  for (const char* variant : {"planar", "faces"}) {
    json cfg{{"name", "good_point"}, {"variant", variant}, {"R", R},
             {"level", 0.0}};
    // the faces cube is center +/- R/2; lift it so it stays inside the slab
    if (std::string(variant) == "faces") cfg["center"] = {0.0, 0.0, 2.0};
    const auto det = make_detector(cfg);
    CHECK_FALSE(det->monotone());
    CHECK(det->evaluate(high) == 1.0);
    CHECK(det->evaluate(low) == 0.0);
  }
}

TEST_CASE("synthetic detectors: const, coin, gauss_threshold") {
  const auto c1 = make_detector({{"name", "const"}, {"value", 1.0}});
  CHECK(c1->evaluate(dummy(3)) == 1.0);
  CHECK(c1->binary());
  const auto ch = make_detector({{"name", "const"}, {"value", 0.25}});
  CHECK_FALSE(ch->binary());

  const auto sure = make_detector({{"name", "coin"}, {"p", 1.0}});
  const auto never = make_detector({{"name", "coin"}, {"p", 0.0}});
  const auto fair = make_detector({{"name", "coin"}, {"p", 0.5}});
  int64_t heads = 0;
  for (uint64_t s = 0; s < 2000; ++s) {
    CHECK(sure->evaluate(dummy(s)) == 1.0);
    CHECK(never->evaluate(dummy(s)) == 0.0);
    heads += fair->evaluate(dummy(s)) == 1.0;
    // determinism in the field seed
    CHECK(fair->evaluate(dummy(s)) == fair->evaluate(dummy(s)));
  }
  CHECK(std::abs((double)heads / 2000 - 0.5) < 0.05);

  const auto always = make_detector({{"name", "gauss_threshold"}, {"level", -1e9}});
  const auto nothing = make_detector({{"name", "gauss_threshold"}, {"level", 1e9}});
  int64_t half = 0;
  const auto mid = make_detector({{"name", "gauss_threshold"}, {"level", 0.0}});
  for (uint64_t s = 0; s < 2000; ++s) {
    CHECK(always->evaluate(dummy(s)) == 1.0);
    CHECK(nothing->evaluate(dummy(s)) == 0.0);
    half += mid->evaluate(dummy(s)) == 1.0;
  }
  CHECK(std::abs((double)half / 2000 - 0.5) < 0.05);
  CHECK(kind_of([] { make_detector({{"name", "coin"}, {"p", 1.5}}); }) ==
        ErrorKind::Config);
}

TEST_CASE("gluing: three crossings plus two strip risers imply a long crossing") {
  // per-realization implication (a deterministic fact about masks, checked on
  // random fields): left-right crossings of [0,1.5R], [.75R,2.25R], [1.5R,3R]
  // glued through bottom-top crossings of the two overlap strips give a
  // left-right crossing of [0,3R] x [0,R]
  const double R = 6;
  const Box full = Box::rect(0, 3 * R, 0, R);
  const TruncatedKernel k(KernelSpec{}, 4.0);
  const GridGeometry g =
      GridGeometry::make(2, full, 0.5, required_pad(k, false));
  const double lv = -0.4;  // generous level so the joint event is common
  auto det = [&](const Box& box, const char* from, const char* to) {
    return make_detector({{"name", "crossing"}, {"level", lv},
                          {"box", box.to_json()}, {"from", from}, {"to", to}});
  };
  const auto a = det(Box::rect(0, 1.5 * R, 0, R), "left", "right");
  const auto bd = det(Box::rect(0.75 * R, 2.25 * R, 0, R), "left", "right");
  const auto c = det(Box::rect(1.5 * R, 3 * R, 0, R), "left", "right");
  const auto o1 = det(Box::rect(0.75 * R, 1.5 * R, 0, R), "bottom", "top");
  const auto o2 = det(Box::rect(1.5 * R, 2.25 * R, 0, R), "bottom", "top");
  const auto whole = det(full, "left", "right");

  int64_t hits = 0, violations = 0;
  for (int64_t rep = 0; rep < 120; ++rep) {
    const FieldSample f = sample_convolution(k, g, false, 777, (uint64_t)rep);
    const bool all5 = a->evaluate(f) == 1.0 && bd->evaluate(f) == 1.0 &&
                      c->evaluate(f) == 1.0 && o1->evaluate(f) == 1.0 &&
                      o2->evaluate(f) == 1.0;
    if (!all5) continue;
    ++hits;
    if (whole->evaluate(f) != 1.0) ++violations;
  }
  CHECK(violations == 0);
  CHECK(hits >= 5);  // the implication must not hold vacuously
}
