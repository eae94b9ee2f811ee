#include <doctest.h>

#include <array>
#include <cmath>
#include <functional>

#include "core/renorm.hpp"

using namespace gfp;

namespace {

using A3 = std::array<int64_t, 3>;

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind;
  }
  return ErrorKind::Runtime;
}

RenormScheme scheme(int64_t lambda, int64_t rho, int64_t sigma, int d) {
  RenormScheme s;
  s.lambda = lambda;
  s.rho = rho;
  s.sigma = sigma;
  s.d = d;
  return s;
}

// vertical segment of lattice sites at fixed x
std::vector<A3> segment_x(int64_t x, int64_t y0, int64_t y1) {
  std::vector<A3> out;
  for (int64_t y = y0; y <= y1; ++y) out.push_back({x, y, 0});
  return out;
}

}  // namespace

TEST_CASE("scheme validation and overflow-checked scales") {
  CHECK(kind_of([] { scheme(1, 1, 1, 2).validate(); }) == ErrorKind::Config);
  CHECK(kind_of([] { scheme(2, 0, 1, 2).validate(); }) == ErrorKind::Config);
  CHECK(kind_of([] { scheme(2, 1, 0, 2).validate(); }) == ErrorKind::Config);
  CHECK(kind_of([] { scheme(2, 1, 1, 4).validate(); }) == ErrorKind::Config);

  const RenormScheme s = scheme(3, 2, 1, 2);
  s.validate();
  CHECK(s.L(0) == 1);
  CHECK(s.L(4) == 81);
  CHECK(s.geometry_ok() == false);  // 3*2 < 100
  CHECK(scheme(50, 2, 1, 2).geometry_ok());

  const RenormScheme big = scheme(10000000000LL, 2, 1, 2);
  CHECK(big.L(1) == 10000000000LL);
  CHECK(kind_of([&] { (void)big.L(2); }) == ErrorKind::Resource);
}

TEST_CASE("cap-mode recursion saturates the doubly exponential cap exactly") {
  for (int d : {2, 3}) {
    const RenormScheme s = scheme(10000000000LL, 2, 1000, d);
    const RecursionTrace tr = verify_recursion(s, 1.0, {HMode::Cap, 0.0}, 20);
    CHECK(tr.all_ok);
    CHECK(tr.first_fail == -1);
    REQUIRE(tr.steps.size() == 21);
    for (int n = 0; n <= 20; ++n) {
      const RecursionStep& st = tr.steps[(size_t)n];
      CHECK(st.n == n);
      CHECK(st.ok);
      // u_n = 2^{1-2^n} on the nose, detected through the dyadic fast path
      CHECK(st.u_over_cap == 1.0);
      if (n <= 8)
        CHECK(st.u == doctest::Approx(std::ldexp(1.0, 1 - (1 << n))).epsilon(1e-15));
      if (n >= 1 && n <= 8)
        CHECK(st.h_ratio == doctest::Approx(std::ldexp(1.0, -(1 << n))).epsilon(1e-15));
    }
    const json js = tr.to_json();
    CHECK(js.at("all_ok").get<bool>());
    CHECK(js.at("steps").size() == 21);
  }

  // slack in q0 keeps every step strictly under the cap
  const RecursionTrace half =
      verify_recursion(scheme(2, 2, 1, 2), 0.5, {HMode::Cap, 0.0}, 12);
  CHECK(half.all_ok);
  for (const auto& st : half.steps) CHECK(st.u_over_cap <= 1.0);
}

TEST_CASE("recursion rejects violated hypotheses") {
  const RenormScheme s = scheme(2, 2, 1, 2);
  CHECK(kind_of([&] { verify_recursion(s, 1.01, {HMode::Cap, 0.0}, 5); }) ==
        ErrorKind::Config);
  CHECK(kind_of([&] { verify_recursion(s, -0.5, {HMode::Cap, 0.0}, 5); }) ==
        ErrorKind::Config);
  CHECK(kind_of([&] { verify_recursion(s, 1.0, {HMode::Cap, 0.0}, 99); }) ==
        ErrorKind::Config);
  CHECK(kind_of([&] { verify_recursion(s, 1.0, {HMode::Eps, 0.0}, 5); }) ==
        ErrorKind::Config);
  // R far too small: the very first H-bound exceeds the dyadic cap
  CHECK(kind_of([&] { verify_recursion(s, 1.0, {HMode::Eps, 1.0}, 5); }) ==
        ErrorKind::Config);
}

TEST_CASE("eps-mode recursion passes once R clears the concentration scale") {
  const RenormScheme s = scheme(2, 2, 1, 2);
  const RecursionTrace tr = verify_recursion(s, 1.0, {HMode::Eps, 4.0}, 10);
  CHECK(tr.all_ok);
  REQUIRE(tr.steps.size() == 11);
  for (const auto& st : tr.steps) {
    CHECK(st.ok);
    CHECK(st.u_over_cap <= 1.0);
  }
  // the H contribution shrinks much faster than in cap mode
  CHECK(tr.steps[2].h_ratio < std::ldexp(1.0, -(1 << 2)));
}

TEST_CASE("eps-budget bounds: geometric sum against the sprinkling budget") {
  // gamma (beta - d/2) - 1 = 2 for gamma = 0.2, beta = 16, d = 2
  const EpsBounds eb = make_h_bounds(8.0, 0.2, 16.0, 2, 2, 8);
  CHECK(eb.e == doctest::Approx(2.0).epsilon(1e-12));
  REQUIRE(eb.eps.size() == 8);
  CHECK(eb.eps[0] == doctest::Approx(1.0 / 64.0).epsilon(1e-12));
  CHECK(eb.eps[1] == doctest::Approx(1.0 / 256.0).epsilon(1e-12));
  CHECK(eb.sum_bound == doctest::Approx(4.0 / (3.0 * 64.0)).epsilon(1e-12));
  CHECK(eb.budget == doctest::Approx(0.5 * std::pow(8.0, -1.5)).epsilon(1e-12));
  CHECK(eb.ok);
  // closed-form minimal R for this (gamma, beta, lambda): (8/3)^2
  CHECK(eb.minimal_R == doctest::Approx(64.0 / 9.0).epsilon(1e-9));
  CHECK(!make_h_bounds(7.0, 0.2, 16.0, 2, 2, 8).ok);
  CHECK(make_h_bounds(7.2, 0.2, 16.0, 2, 2, 8).ok);

  CHECK(kind_of([] { make_h_bounds(8.0, 0.2, 13.5, 2, 2, 8); }) ==
        ErrorKind::Config);  // e = 3/2 is not enough
  CHECK(kind_of([] { make_h_bounds(8.0, 1.5, 16.0, 2, 2, 8); }) ==
        ErrorKind::Config);
  CHECK(kind_of([] { make_h_bounds(-1.0, 0.2, 16.0, 2, 2, 8); }) ==
        ErrorKind::Config);
}

TEST_CASE("black lattice: degenerate probabilities and determinism") {
  const RenormScheme s = scheme(2, 2, 1, 2);

  const BlackLattice all(s, 2, 1.0, {1.0}, 9);
  CHECK(all.g0({0, 0, 0}));
  CHECK(all.g0({-7, 3, 0}));
  CHECK(all.h_event(1, {2, -4, 0}));
  CHECK(all.h_event(2, {4, 8, 0}));
  CHECK(all.g_event(1, {0, 0, 0}));
  CHECK(all.g_event(2, {0, 0, 0}));
  CHECK(all.black({3, -5, 0}, 2));

  const BlackLattice none(s, 1, 0.0, {1.0}, 9);
  CHECK(!none.g0({0, 0, 0}));
  CHECK(!none.black({0, 0, 0}, 1));
  CHECK(!none.g_event(0, {1, 2, 0}));

  // pure functions of (seed, site): instances replay, seeds decouple
  const BlackLattice a(s, 1, 0.5, {0.5}, 77);
  const BlackLattice b(s, 1, 0.5, {0.5}, 77);
  const BlackLattice c(s, 1, 0.5, {0.5}, 78);
  int diff = 0;
  for (int64_t x = -4; x <= 4; ++x)
    for (int64_t y = -4; y <= 4; ++y) {
      CHECK(a.g0({x, y, 0}) == b.g0({x, y, 0}));
      if (a.g0({x, y, 0}) != c.g0({x, y, 0})) ++diff;
    }
  CHECK(diff > 0);
  CHECK(a.h_event(1, {2, 2, 0}) == b.h_event(1, {2, 2, 0}));
  CHECK(a.g_event(1, {0, 0, 0}) == b.g_event(1, {0, 0, 0}));

  // base points of H and G translates must sit on the right sublattice
  CHECK(kind_of([&] { all.h_event(1, {1, 0, 0}); }) == ErrorKind::Config);
  CHECK(kind_of([&] { all.h_event(0, {0, 0, 0}); }) == ErrorKind::Config);
  CHECK(kind_of([&] { all.g_event(1, {3, 0, 0}); }) == ErrorKind::Config);
  CHECK(kind_of([] {
          BlackLattice(scheme(2, 2, 1, 2), 1, 1.5, {0.5}, 1);
        }) == ErrorKind::Config);
}

TEST_CASE("materialized map agrees with the lazy per-site queries") {
  const RenormScheme s = scheme(2, 2, 1, 2);
  const BlackLattice lat(s, 1, 0.9, {0.8}, 42);
  const BlackMap map = materialize_black(lat, 1);

  CHECK(map.dim == 2);
  CHECK(map.lo[0] == -16);  // 4 rho L_1
  CHECK(map.hi[0] == 16);
  CHECK(map.n[0] == 33);
  REQUIRE(map.base.size() == 33 * 33);

  int blacks = 0, bases = 0;
  for (int64_t x = -16; x <= 16; ++x)
    for (int64_t y = -16; y <= 16; ++y) {
      const A3 p{x, y, 0};
      CHECK(map.contains(p));
      CHECK(map.base_at(p) == lat.g0(p));
      CHECK(map.black_at(p) == lat.black(p, 1));
      blacks += map.black_at(p) ? 1 : 0;
      bases += map.base_at(p) ? 1 : 0;
    }
  // the run is genuinely mixed, and black is a subset of the base layer
  CHECK(bases > 0);
  CHECK(bases < 33 * 33);
  CHECK(blacks <= bases);
  CHECK(!map.contains({17, 0, 0}));

  // independent covering recomputation at scale 1 for a few sites
  for (const A3& p : {A3{0, 0, 0}, A3{-5, 7, 0}, A3{16, -16, 0}}) {
    bool covered = false;
    for (int64_t ky = -16; ky <= 16 && !covered; ++ky)
      for (int64_t kx = -16; kx <= 16 && !covered; ++kx) {
        const A3 y{2 * kx, 2 * ky, 0};
        if (std::llabs(y[0] - p[0]) <= 16 && std::llabs(y[1] - p[1]) <= 16 &&
            lat.h_event(1, y))
          covered = true;
      }
    CHECK(lat.black(p, 1) == (lat.g0(p) && covered));
  }
}

TEST_CASE("g1_from_map replays the cascade event at scale one") {
  const RenormScheme s = scheme(2, 2, 1, 2);
  int seen_true = 0, seen_false = 0;
  for (uint64_t seed = 1; seed <= 16; ++seed) {
    const BlackLattice lat(s, 1, 0.9987, {0.8}, seed);
    const BlackMap map = materialize_black(lat, 1);
    const bool fast = g1_from_map(lat, map);
    const bool slow = lat.g_event(1, {0, 0, 0});
    CHECK(fast == slow);
    (fast ? seen_true : seen_false) += 1;
  }
  // with these rates both outcomes occur across the seeds
  CHECK(seen_true > 0);
  CHECK(seen_false > 0);
}

TEST_CASE("check_geometry: black paths join distant marked sets") {
  const RenormScheme s = scheme(50, 2, 1, 2);
  const std::vector<A3> s1 = segment_x(-20, -10, 10);
  const std::vector<A3> s2 = segment_x(20, -10, 10);

  const BlackLattice all(s, 1, 1.0, {1.0}, 5);
  CHECK(check_geometry(all, 1, s1, s2));

  const BlackLattice none(s, 1, 0.0, {1.0}, 5);
  CHECK(!check_geometry(none, 1, s1, s2));

  // the prebuilt dense map answers the same connectivity question
  for (uint64_t seed : {3ull, 4ull}) {
    const BlackLattice lat(s, 1, 0.97, {0.9}, seed);
    const BlackMap map = materialize_black(lat, 1);
    CHECK(check_geometry(lat, 1, s1, s2, &map) == check_geometry(lat, 1, s1, s2));
  }
}

TEST_CASE("check_geometry validates the marked sets and the scheme") {
  const RenormScheme s = scheme(50, 2, 1, 2);
  const BlackLattice lat(s, 1, 1.0, {1.0}, 1);
  const std::vector<A3> good1 = segment_x(-20, -10, 10);
  const std::vector<A3> good2 = segment_x(20, -10, 10);

  CHECK(kind_of([&] { check_geometry(lat, 1, {}, good2); }) == ErrorKind::Config);
  CHECK(kind_of([&] { check_geometry(lat, 0, good1, good2); }) == ErrorKind::Config);
  // out of the [-rho L_1, rho L_1] box
  CHECK(kind_of([&] {
          check_geometry(lat, 1, segment_x(200, -10, 10), good2);
        }) == ErrorKind::Config);
  // disconnected set
  CHECK(kind_of([&] {
          check_geometry(lat, 1, {{0, 0, 0}, {0, 20, 0}}, good2);
        }) == ErrorKind::Config);
  // diameter below 10 sigma L_0
  CHECK(kind_of([&] {
          check_geometry(lat, 1, segment_x(0, 0, 5), good2);
        }) == ErrorKind::Config);
  // scheme without the geometric margin
  const BlackLattice tight(scheme(2, 2, 1, 2), 1, 1.0, {1.0}, 1);
  CHECK(kind_of([&] {
          check_geometry(tight, 1, segment_x(-2, -2, 2), segment_x(2, -2, 2));
        }) == ErrorKind::Config);
}
