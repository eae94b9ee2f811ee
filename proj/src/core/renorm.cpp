#include "renorm.hpp"

#include <algorithm>
#include <boost/multiprecision/cpp_int.hpp>
#include <cmath>
#include <cstdlib>
#include <unordered_set>

#include "rng.hpp"

namespace gfp {

using boost::multiprecision::cpp_int;

void RenormScheme::validate() const {
  require_config(lambda >= 2, "scheme.lambda must be >= 2");
  require_config(rho >= 1, "scheme.rho must be >= 1");
  require_config(sigma >= 1, "scheme.sigma must be >= 1");
  require_config(d == 2 || d == 3, "scheme.d must be 2 or 3");
}

int64_t RenormScheme::L(int n) const {
  require_config(n >= 0, "scale index must be >= 0");
  int64_t v = 1;
  for (int i = 0; i < n; ++i) {
    if (v > std::numeric_limits<int64_t>::max() / lambda)
      fail_resource("lattice scale L_" + std::to_string(n) +
                    " overflows 64-bit coordinates; reduce n or lambda");
    v *= lambda;
  }
  return v;
}

// ---------------------------------------------------------------------------
// Exact dyadic upper-bound arithmetic: value = mant * 2^exp with mant >= 0.
// Every rounding is upward, so any inequality chain established with these
// numbers is a genuine inequality for the real quantities.

namespace {

constexpr int64_t kMantBits = 4096;      // round-up width for general inputs
constexpr int64_t kAlignLimit = 1 << 21;  // max bit shift for exact addition

struct Dyadic {
  cpp_int mant;
  int64_t exp = 0;

  static Dyadic zero() { return {cpp_int(0), 0}; }
  static Dyadic pow2(int64_t k) { return {cpp_int(1), k}; }

  static Dyadic from_double(double v) {
    if (!(v >= 0) || !std::isfinite(v)) fail_config("dyadic input must be finite and >= 0");
    if (v == 0) return zero();
    int k = 0;
    double fr = std::frexp(v, &k);            // v = fr * 2^k, fr in [0.5, 1)
    auto m = (int64_t)std::ldexp(fr, 53);     // exact: 53-bit integer
    return {cpp_int(m), (int64_t)k - 53};
  }

  bool is_zero() const { return mant == 0; }

  void normalize() {
    if (mant == 0) { exp = 0; return; }
    unsigned lsb = boost::multiprecision::lsb(mant);
    if (lsb > 0) { mant >>= lsb; exp += (int64_t)lsb; }
  }

  int64_t bit_length() const {
    return mant == 0 ? 0 : (int64_t)boost::multiprecision::msb(mant) + 1;
  }

  // directed upward rounding to at most `bits` mantissa bits
  void round_up(int64_t bits) {
    int64_t l = bit_length();
    if (l <= bits) return;
    int64_t s = l - bits;
    cpp_int rem = mant & ((cpp_int(1) << (unsigned)s) - 1);
    mant >>= (unsigned)s;
    if (rem != 0) ++mant;
    exp += s;
  }
};

int cmp(const Dyadic& a, const Dyadic& b) {
  if (a.mant == 0 && b.mant == 0) return 0;
  if (a.mant == 0) return -1;
  if (b.mant == 0) return 1;
  // compare magnitudes without materializing huge shifts when possible
  int64_t atop = a.exp + a.bit_length(), btop = b.exp + b.bit_length();
  if (atop != btop) return atop < btop ? -1 : 1;
  int64_t e = std::min(a.exp, b.exp);
  int64_t sa = a.exp - e, sb = b.exp - e;
  // top bits equal, so the shift difference is bounded by the mantissa widths
  cpp_int am = a.mant << (unsigned)sa, bm = b.mant << (unsigned)sb;
  return am == bm ? 0 : (am < bm ? -1 : 1);
}

// a + b, rounded upward if exact alignment would be astronomically wide
Dyadic add_up(const Dyadic& a, const Dyadic& b) {
  if (a.is_zero()) return b;
  if (b.is_zero()) return a;
  const Dyadic& big = (a.exp + a.bit_length() >= b.exp + b.bit_length()) ? a : b;
  const Dyadic& sml = (&big == &a) ? b : a;
  int64_t shift = big.exp - sml.exp;
  if (shift > kAlignLimit) {
    // sml < 2^{sml.exp + len} <= 2^{big.exp}: bump the last bit of big
    Dyadic r = big;
    ++r.mant;
    return r;
  }
  int64_t e = std::min(a.exp, b.exp);
  Dyadic r{(a.mant << (unsigned)(a.exp - e)) + (b.mant << (unsigned)(b.exp - e)), e};
  return r;
}

Dyadic mul(const Dyadic& a, const Dyadic& b) {
  return {a.mant * b.mant, a.exp + b.exp};
}

double to_double(const Dyadic& a) {
  if (a.mant == 0) return 0.0;
  int64_t l = a.bit_length();
  if (l <= 62) return std::ldexp((double)(uint64_t)a.mant, (int)std::max<int64_t>(-2000, std::min<int64_t>(2000, a.exp)));
  auto top = (uint64_t)(a.mant >> (unsigned)(l - 53));
  int64_t e = a.exp + l - 53;
  if (e < -1200) return 0.0;
  if (e > 1200) return kInf;
  return std::ldexp((double)top, (int)e);
}

}  // namespace

// ---------------------------------------------------------------------------

json RecursionTrace::to_json() const {
  json js;
  js["all_ok"] = all_ok;
  js["first_fail"] = first_fail;
  js["steps"] = json::array();
  for (const auto& st : steps) {
    js["steps"].push_back({{"n", st.n},
                           {"h_ratio", st.h_ratio},
                           {"u", st.u},
                           {"u_over_cap", st.u_over_cap},
                           {"ok", st.ok}});
  }
  return js;
}

RecursionTrace verify_recursion(const RenormScheme& s, double q0_ratio,
                                const HBoundSpec& h, int n_max) {
  s.validate();
  require_config(n_max >= 0 && n_max <= 40, "n_max must be in [0, 40]");
  require_config(q0_ratio >= 0, "q0 must be >= 0");
  if (h.mode == HMode::Eps)
    require_config(h.R > 0 && std::isfinite(h.R), "eps mode needs R > 0");

  // 4 M with M = (3 rho lambda)^{2d}: the h-to-ratio conversion 1/q0bar
  cpp_int m4 = 1;
  {
    cpp_int base = cpp_int(3) * s.rho * s.lambda;
    for (int i = 0; i < 2 * s.d; ++i) m4 *= base;
    m4 <<= 2;
  }

  // ratio-space bound on P[H_n^c]/q0bar for step n >= 1
  auto h_ratio = [&](int n) -> Dyadic {
    if (h.mode == HMode::Cap) return Dyadic::pow2(-(int64_t(1) << n));
    // exp(-(R L_{n-1})^2) <= 2^{-floor((R L_{n-1})^2 log2 e)}, exact dyadic
    double rl = h.R * std::pow((double)s.lambda, n - 1);
    double y = rl * rl * 1.4426950408889634;  // log2(e)
    int64_t fl = y >= 9.0e18 ? (int64_t)4e18 : (int64_t)std::floor(y);
    Dyadic hb = Dyadic::pow2(-fl);
    hb.mant *= m4;
    hb.round_up(kMantBits);
    return hb;
  };

  RecursionTrace tr;
  Dyadic u = Dyadic::from_double(q0_ratio);
  if (cmp(u, Dyadic::pow2(0)) > 0)
    fail_config("hypothesis q0 <= q0bar violated (n=0)");

  auto record = [&](int n, const Dyadic& hr, Dyadic& uu) {
    uu.normalize();
    Dyadic cap = Dyadic::pow2(1 - (int64_t(1) << n));
    int c = cmp(uu, cap);
    RecursionStep st;
    st.n = n;
    st.h_ratio = to_double(hr);
    st.u = to_double(uu);
    // cap is a pure power of two, so the quotient stays in dyadic form and
    // never underflows the way to_double(uu)/to_double(cap) would for large n
    st.u_over_cap = to_double(Dyadic{uu.mant, uu.exp - cap.exp});
    st.ok = c <= 0;
    tr.steps.push_back(st);
    if (!st.ok && tr.first_fail < 0) { tr.all_ok = false; tr.first_fail = n; }
  };

  record(0, Dyadic::zero(), u);
  for (int n = 1; n <= n_max; ++n) {
    Dyadic hr = h_ratio(n);
    if (cmp(hr, Dyadic::pow2(-(int64_t(1) << n))) > 0)
      fail_config("hypothesis P[H_n^c] <= q0bar*2^-2^n violated (n=" +
                  std::to_string(n) + ")");
    Dyadic usq = mul(u, u);
    usq.exp -= 2;  // u^2 / 4
    u = add_up(hr, usq);
    u.round_up(kMantBits);
    record(n, hr, u);
  }
  return tr;
}

EpsBounds make_h_bounds(double R, double gamma, double beta, int d,
                        int64_t lambda, int n_terms) {
  require_config(R > 0 && std::isfinite(R), "R must be > 0");
  require_config(gamma > 0 && gamma < 1, "gamma must be in (0,1)");
  require_config(lambda >= 2, "lambda must be >= 2");
  require_config(d == 2 || d == 3, "d must be 2 or 3");
  require_config(n_terms >= 1, "n_terms must be >= 1");
  EpsBounds eb;
  eb.e = gamma * (beta - 0.5 * d) - 1.0;
  // beta > 5/(2 gamma) + d/2 is exactly e > 3/2
  require_config(eb.e > 1.5,
                 "beta too small: need gamma*(beta - d/2) - 1 > 3/2");
  eb.eps.resize((size_t)n_terms);
  for (int n = 1; n <= n_terms; ++n) {
    double rl = R * std::pow((double)lambda, n - 1);
    eb.eps[(size_t)n - 1] = std::pow(rl, -eb.e);
  }
  eb.sum_bound = std::pow(R, -eb.e) / (1.0 - std::pow((double)lambda, -eb.e));
  eb.budget = 0.5 * std::pow(R, -1.5);
  eb.ok = eb.sum_bound <= eb.budget;
  // sum_bound <= budget  <=>  R^{3/2 - e} <= (1 - lambda^{-e})/2
  eb.minimal_R =
      std::pow(0.5 * (1.0 - std::pow((double)lambda, -eb.e)), 1.0 / (1.5 - eb.e));
  return eb;
}

// ---------------------------------------------------------------------------
// BlackLattice

namespace {

uint64_t coord_hash(const std::array<int64_t, 3>& x) {
  uint64_t h = 0x8f1bbcdcu;
  for (int k = 0; k < 3; ++k)
    h = mix64(h ^ ((uint64_t)x[(size_t)k] * 0x9e3779b97f4a7c15ull + (uint64_t)k));
  return h;
}

int64_t floor_div(int64_t a, int64_t b) {
  int64_t q = a / b, r = a % b;
  return (r != 0 && ((r < 0) != (b < 0))) ? q - 1 : q;
}
int64_t ceil_div(int64_t a, int64_t b) { return -floor_div(-a, b); }

constexpr uint64_t kTagG0 = 0xB10C0;
constexpr uint64_t kTagH = 0xB10C1;

}  // namespace

size_t BlackLattice::KeyHash::operator()(const Key& k) const {
  uint64_t h = coord_hash(k.x);
  return (size_t)mix64(h ^ (uint64_t)k.n);
}

BlackLattice::BlackLattice(RenormScheme s, int n_max, double p_g0,
                           std::vector<double> p_h, uint64_t seed)
    : s_(s), n_max_(n_max), p_g0_(p_g0), p_h_(std::move(p_h)), seed_(seed) {
  s_.validate();
  require_config(n_max_ >= 0, "n_max must be >= 0");
  require_config(p_g0_ >= 0 && p_g0_ <= 1, "p_g0 must be in [0,1]");
  for (double p : p_h_)
    require_config(p >= 0 && p <= 1, "p_h entries must be in [0,1]");
}

double BlackLattice::p_h_at(int m) const {
  if (p_h_.empty()) return 1.0;
  size_t i = std::min((size_t)(m - 1), p_h_.size() - 1);
  return p_h_[i];
}

bool BlackLattice::bernoulli(uint64_t tag, const std::array<int64_t, 3>& cell,
                             double p) const {
  if (p >= 1.0) return true;
  if (p <= 0.0) return false;
  CounterRng rng(derive_seed(seed_, coord_hash(cell), tag));
  return rng.unit_at(0) <= p;  // exact for dyadic p; unit_at in (0,1]
}

bool BlackLattice::g0(const std::array<int64_t, 3>& x) const {
  return bernoulli(kTagG0, x, p_g0_);
}

bool BlackLattice::h_event(int m, const std::array<int64_t, 3>& y) const {
  require_config(m >= 1, "h_event needs scale m >= 1");
  int64_t lm = s_.L(m);
  std::array<int64_t, 3> cell{0, 0, 0};
  for (int k = 0; k < s_.d; ++k) {
    require_config(y[(size_t)k] % lm == 0, "H translate base must lie in L_m Z^d");
    cell[(size_t)k] = y[(size_t)k] / lm;
  }
  return bernoulli(kTagH + (uint64_t)m * 0x10001u, cell, p_h_at(m));
}

bool BlackLattice::g_event(int n, const std::array<int64_t, 3>& x) const {
  if (n == 0) return g0(x);
  require_config(n >= 0, "scale must be >= 0");
  int64_t ln = s_.L(n), lprev = s_.L(n - 1);
  std::array<int64_t, 3> xr{0, 0, 0};
  for (int k = 0; k < s_.d; ++k) {
    require_config(x[(size_t)k] % ln == 0, "G base must lie in L_n Z^d");
    xr[(size_t)k] = x[(size_t)k];
  }
  Key key{n, xr};
  auto it = memo_.find(key);
  if (it != memo_.end()) return it->second;

  bool val = h_event(n, xr);
  if (val) {
    // children on x + L_{n-1}Z^d within the side-8*rho*L_n box; the cascade
    // fails iff two child failures sit at Euclidean distance >= sigma*L_{n-1}
    int64_t kmax = 4 * s_.rho * s_.lambda;  // (4 rho L_n)/L_{n-1}
    int64_t sep2 = s_.sigma * s_.sigma;     // in child-lattice units
    std::vector<std::array<int64_t, 3>> fails;
    std::array<int64_t, 3> k{0, 0, 0};
    bool bad = false;
    auto visit = [&](auto&& self, int axis) -> void {
      if (bad) return;
      if (axis == s_.d) {
        std::array<int64_t, 3> c = xr;
        for (int t = 0; t < s_.d; ++t) c[(size_t)t] += k[(size_t)t] * lprev;
        if (!g_event(n - 1, c)) {
          for (const auto& f : fails) {
            int64_t d2 = 0;
            for (int t = 0; t < s_.d; ++t) {
              int64_t dd = k[(size_t)t] - f[(size_t)t];
              d2 += dd * dd;
            }
            if (d2 >= sep2) { bad = true; return; }
          }
          fails.push_back(k);
        }
        return;
      }
      for (k[(size_t)axis] = -kmax; k[(size_t)axis] <= kmax; ++k[(size_t)axis]) {
        self(self, axis + 1);
        if (bad) return;
      }
    };
    visit(visit, 0);
    val = !bad;
  }
  memo_.emplace(key, val);
  return val;
}

bool BlackLattice::black(const std::array<int64_t, 3>& x, int n) const {
  if (!g0(x)) return false;
  for (int m = 1; m <= n; ++m) {
    int64_t lm = s_.L(m), reach = 4 * s_.rho * lm;
    bool covered = false;
    std::array<int64_t, 3> klo{0, 0, 0}, khi{0, 0, 0}, k{0, 0, 0};
    for (int t = 0; t < s_.d; ++t) {
      // y = lm*k with |y_t - x_t| <= reach
      klo[(size_t)t] = ceil_div(x[(size_t)t] - reach, lm);
      khi[(size_t)t] = floor_div(x[(size_t)t] + reach, lm);
    }
    auto visit = [&](auto&& self, int axis) -> void {
      if (covered) return;
      if (axis == s_.d) {
        std::array<int64_t, 3> y{0, 0, 0};
        for (int t = 0; t < s_.d; ++t) y[(size_t)t] = k[(size_t)t] * lm;
        if (h_event(m, y)) covered = true;
        return;
      }
      for (k[(size_t)axis] = klo[(size_t)axis]; k[(size_t)axis] <= khi[(size_t)axis];
           ++k[(size_t)axis]) {
        self(self, axis + 1);
        if (covered) return;
      }
    };
    visit(visit, 0);
    if (!covered) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Dense materialization with prefix-summed coverage windows

BlackMap materialize_black(const BlackLattice& lat, int n) {
  const RenormScheme& s = lat.scheme();
  require_config(n >= 1, "materialize_black needs n >= 1");
  int64_t reach = 4 * s.rho * s.L(n);
  BlackMap map;
  map.dim = s.d;
  int64_t total = 1;
  for (int k = 0; k < s.d; ++k) {
    map.lo[(size_t)k] = -reach;
    map.hi[(size_t)k] = reach;
    map.n[(size_t)k] = 2 * reach + 1;
    if (total > (int64_t)1 << 31 || map.n[(size_t)k] > ((int64_t)1 << 31) / total)
      fail_resource("black-vertex region too large to materialize; "
                    "use the lazy per-site queries instead");
    total *= map.n[(size_t)k];
  }
  const char* env = std::getenv("GFPERC_MEM_BUDGET_BYTES");
  int64_t budget = env ? std::atoll(env) : ((int64_t)8 << 30);
  if (total * 2 + (total / 4) > budget)
    fail_resource("black-vertex map exceeds the memory budget");

  map.base.resize((size_t)total);
  map.black.resize((size_t)total);

  // coverage[x] for scale m: does any y in L_m Z^d with |y - x|_inf <= 4 rho L_m
  // satisfy the H_m translate?  Prefix sums over the y-lattice answer each
  // site in O(1).
  std::vector<uint8_t> covered_all((size_t)total, 1);
  for (int m = 1; m <= n; ++m) {
    int64_t lm = s.L(m), hreach = 4 * s.rho * lm;
    // y-lattice indices possibly covering some site in the map box
    std::array<int64_t, 3> jlo{0, 0, 0}, jhi{0, 0, 0}, jn{1, 1, 1};
    for (int k = 0; k < s.d; ++k) {
      jlo[(size_t)k] = ceil_div(map.lo[(size_t)k] - hreach, lm);
      jhi[(size_t)k] = floor_div(map.hi[(size_t)k] + hreach, lm);
      jn[(size_t)k] = jhi[(size_t)k] - jlo[(size_t)k] + 1;
    }
    int64_t jtotal = jn[0] * jn[1] * (s.d == 3 ? jn[2] : 1);
    // prefix[i] over the flattened j-grid, (jn+1) extents
    std::array<int64_t, 3> pn{jn[0] + 1, jn[1] + 1, s.d == 3 ? jn[2] + 1 : 2};
    std::vector<int32_t> pref((size_t)(pn[0] * pn[1] * pn[2]), 0);
    auto pidx = [&](int64_t a, int64_t b, int64_t c) {
      return (size_t)((a * pn[1] + b) * pn[2] + c);
    };
    {
      std::array<int64_t, 3> j{0, 0, 0};
      for (j[0] = 0; j[0] < jn[0]; ++j[0])
        for (j[1] = 0; j[1] < jn[1]; ++j[1])
          for (j[2] = 0; j[2] < (s.d == 3 ? jn[2] : 1); ++j[2]) {
            std::array<int64_t, 3> y{0, 0, 0};
            for (int k = 0; k < s.d; ++k)
              y[(size_t)k] = (jlo[(size_t)k] + j[(size_t)k]) * lm;
            int32_t v = lat.h_event(m, y) ? 1 : 0;
            pref[pidx(j[0] + 1, j[1] + 1, j[2] + 1)] = v;
          }
      (void)jtotal;
      for (int64_t a = 1; a < pn[0]; ++a)
        for (int64_t b = 1; b < pn[1]; ++b)
          for (int64_t c = 1; c < pn[2]; ++c)
            pref[pidx(a, b, c)] += pref[pidx(a - 1, b, c)] + pref[pidx(a, b - 1, c)] -
                                   pref[pidx(a - 1, b - 1, c)] + pref[pidx(a, b, c - 1)] -
                                   pref[pidx(a - 1, b, c - 1)] - pref[pidx(a, b - 1, c - 1)] +
                                   pref[pidx(a - 1, b - 1, c - 1)];
    }
    auto rect_any = [&](const std::array<int64_t, 3>& a,
                        const std::array<int64_t, 3>& b) {
      // inclusive j-index rectangle [a, b]; empty if inverted
      std::array<int64_t, 3> aa = a, bb = b;
      for (int k = 0; k < 3; ++k) {
        if (k >= s.d) { aa[(size_t)k] = 0; bb[(size_t)k] = 0; }
        aa[(size_t)k] = std::max<int64_t>(aa[(size_t)k], 0);
        bb[(size_t)k] = std::min<int64_t>(bb[(size_t)k], (k < s.d ? jn[(size_t)k] : 1) - 1);
        if (aa[(size_t)k] > bb[(size_t)k]) return false;
      }
      int64_t sum = pref[pidx(bb[0] + 1, bb[1] + 1, bb[2] + 1)] -
                    pref[pidx(aa[0], bb[1] + 1, bb[2] + 1)] -
                    pref[pidx(bb[0] + 1, aa[1], bb[2] + 1)] +
                    pref[pidx(aa[0], aa[1], bb[2] + 1)] -
                    pref[pidx(bb[0] + 1, bb[1] + 1, aa[2])] +
                    pref[pidx(aa[0], bb[1] + 1, aa[2])] +
                    pref[pidx(bb[0] + 1, aa[1], aa[2])] -
                    pref[pidx(aa[0], aa[1], aa[2])];
      return sum > 0;
    };
    std::array<int64_t, 3> x{0, 0, 0};
    auto scan = [&](auto&& self, int axis) -> void {
      if (axis == s.d) {
        std::array<int64_t, 3> a{0, 0, 0}, b{0, 0, 0};
        for (int k = 0; k < s.d; ++k) {
          int64_t xk = x[(size_t)k];
          a[(size_t)k] = ceil_div(xk - hreach, lm) - jlo[(size_t)k];
          b[(size_t)k] = floor_div(xk + hreach, lm) - jlo[(size_t)k];
        }
        if (!rect_any(a, b)) covered_all[(size_t)map.lin(x)] = 0;
        return;
      }
      for (x[(size_t)axis] = map.lo[(size_t)axis]; x[(size_t)axis] <= map.hi[(size_t)axis];
           ++x[(size_t)axis])
        self(self, axis + 1);
    };
    scan(scan, 0);
  }

  std::array<int64_t, 3> x{0, 0, 0};
  auto fill = [&](auto&& self, int axis) -> void {
    if (axis == s.d) {
      size_t i = (size_t)map.lin(x);
      map.base[i] = lat.g0(x) ? 1 : 0;
      map.black[i] = (map.base[i] && covered_all[i]) ? 1 : 0;
      return;
    }
    for (x[(size_t)axis] = map.lo[(size_t)axis]; x[(size_t)axis] <= map.hi[(size_t)axis];
         ++x[(size_t)axis])
      self(self, axis + 1);
  };
  fill(fill, 0);
  return map;
}

bool g1_from_map(const BlackLattice& lat, const BlackMap& map) {
  const RenormScheme& s = lat.scheme();
  if (!lat.h_event(1, {0, 0, 0})) return false;
  int64_t l0 = 1, kmax = 4 * s.rho * s.lambda;
  int64_t sep2 = (s.sigma * l0) * (s.sigma * l0);
  std::vector<std::array<int64_t, 3>> fails;
  std::array<int64_t, 3> x{0, 0, 0};
  bool bad = false;
  auto visit = [&](auto&& self, int axis) -> void {
    if (bad) return;
    if (axis == s.d) {
      if (!map.base_at(x)) {
        for (const auto& f : fails) {
          int64_t d2 = 0;
          for (int t = 0; t < s.d; ++t) {
            int64_t dd = x[(size_t)t] - f[(size_t)t];
            d2 += dd * dd;
          }
          if (d2 >= sep2) { bad = true; return; }
        }
        fails.push_back(x);
      }
      return;
    }
    for (x[(size_t)axis] = -kmax; x[(size_t)axis] <= kmax; ++x[(size_t)axis]) {
      self(self, axis + 1);
      if (bad) return;
    }
  };
  visit(visit, 0);
  return !bad;
}

// ---------------------------------------------------------------------------

namespace {

struct ArrHash {
  size_t operator()(const std::array<int64_t, 3>& a) const { return (size_t)coord_hash(a); }
};

void validate_marked_set(const RenormScheme& s, int n,
                         const std::vector<std::array<int64_t, 3>>& set,
                         const char* name) {
  require_config(!set.empty(), std::string(name) + " must be nonempty");
  int64_t bound = s.rho * s.L(n);
  std::unordered_set<std::array<int64_t, 3>, ArrHash> nodes;
  for (auto x : set) {
    for (int k = s.d; k < 3; ++k) x[(size_t)k] = 0;
    for (int k = 0; k < s.d; ++k)
      require_config(std::llabs(x[(size_t)k]) <= bound,
                     std::string(name) + " must lie in [-rho L_n, rho L_n]^d");
    nodes.insert(x);
  }
  // hypercubic connectivity of the set itself
  std::vector<std::array<int64_t, 3>> stack{*nodes.begin()};
  std::unordered_set<std::array<int64_t, 3>, ArrHash> seen{*nodes.begin()};
  while (!stack.empty()) {
    auto cur = stack.back();
    stack.pop_back();
    for (int k = 0; k < s.d; ++k)
      for (int dir = -1; dir <= 1; dir += 2) {
        auto nb = cur;
        nb[(size_t)k] += dir;
        if (nodes.count(nb) && !seen.count(nb)) { seen.insert(nb); stack.push_back(nb); }
      }
  }
  require_config(seen.size() == nodes.size(), std::string(name) + " must be connected");
  double d2max = 0;
  for (const auto& a : set)
    for (const auto& b : set) {
      double d2 = 0;
      for (int k = 0; k < s.d; ++k) {
        double dd = (double)(a[(size_t)k] - b[(size_t)k]);
        d2 += dd * dd;
      }
      d2max = std::max(d2max, d2);
    }
  double need = 10.0 * (double)s.sigma * (double)s.L(n - 1);
  require_config(std::sqrt(d2max) >= need,
                 std::string(name) + " diameter must be >= 10 sigma L_{n-1}");
}

}  // namespace

bool check_geometry(const BlackLattice& lat, int n,
                    const std::vector<std::array<int64_t, 3>>& s1,
                    const std::vector<std::array<int64_t, 3>>& s2,
                    const BlackMap* prebuilt) {
  const RenormScheme& s = lat.scheme();
  require_config(s.geometry_ok(),
                 "scheme must satisfy lambda*rho >= 100*sigma and rho >= 2");
  require_config(n >= 1, "check_geometry needs n >= 1");
  validate_marked_set(s, n, s1, "S1");
  validate_marked_set(s, n, s2, "S2");

  int64_t reach = 4 * s.rho * s.L(n);
  auto in_region = [&](const std::array<int64_t, 3>& x) {
    for (int k = 0; k < s.d; ++k)
      if (std::llabs(x[(size_t)k]) > reach) return false;
    return true;
  };
  auto is_black = [&](const std::array<int64_t, 3>& x) {
    if (prebuilt) return prebuilt->black_at(x);
    return lat.black(x, n);
  };

  std::unordered_set<std::array<int64_t, 3>, ArrHash> target;
  for (auto x : s2) {
    for (int k = s.d; k < 3; ++k) x[(size_t)k] = 0;
    target.insert(x);
  }
  std::unordered_set<std::array<int64_t, 3>, ArrHash> seen;
  std::vector<std::array<int64_t, 3>> stack;
  for (auto x : s1) {
    for (int k = s.d; k < 3; ++k) x[(size_t)k] = 0;
    if (is_black(x) && !seen.count(x)) {
      if (target.count(x)) return true;
      seen.insert(x);
      stack.push_back(x);
    }
  }
  while (!stack.empty()) {
    auto cur = stack.back();
    stack.pop_back();
    for (int k = 0; k < s.d; ++k)
      for (int dir = -1; dir <= 1; dir += 2) {
        auto nb = cur;
        nb[(size_t)k] += dir;
        if (!in_region(nb) || seen.count(nb) || !is_black(nb)) continue;
        if (target.count(nb)) return true;
        seen.insert(nb);
        stack.push_back(nb);
      }
  }
  return false;
}

}  // namespace gfp
