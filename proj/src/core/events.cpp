#include "events.hpp"

#include <algorithm>
#include <cmath>

#include "rng.hpp"

namespace gfp {

namespace {

double jreq(const json& c, const char* key) {
  require_config(c.contains(key) && c.at(key).is_number(),
                 std::string("detector: missing numeric field '") + key + "'");
  return c.at(key).get<double>();
}

double jnum(const json& c, const char* key, double dflt) {
  if (!c.contains(key) || c.at(key).is_null()) return dflt;
  require_config(c.at(key).is_number(),
                 std::string("detector: field '") + key + "' must be a number");
  return c.at(key).get<double>();
}

bool jflag(const json& c, const char* key, bool dflt) {
  if (!c.contains(key) || c.at(key).is_null()) return dflt;
  require_config(c.at(key).is_boolean(),
                 std::string("detector: field '") + key + "' must be a boolean");
  return c.at(key).get<bool>();
}

std::string jstr(const json& c, const char* key, const std::string& dflt) {
  if (!c.contains(key) || c.at(key).is_null()) return dflt;
  require_config(c.at(key).is_string(),
                 std::string("detector: field '") + key + "' must be a string");
  return c.at(key).get<std::string>();
}

struct Face {
  int axis;
  bool high;
};

Face parse_face(const std::string& name, int dim) {
  Face f{};
  if (name == "left") f = {0, false};
  else if (name == "right") f = {0, true};
  else if (name == "bottom") f = {1, false};
  else if (name == "top") f = {1, true};
  else if (name == "down") f = {2, false};
  else if (name == "up") f = {2, true};
  else fail_config("unknown face '" + name + "'");
  require_config(f.axis < dim, "face '" + name + "' needs a 3D box");
  return f;
}

// BFS over mask nodes inside `ib`, honouring the mask's own connectivity.
// `inset` further restricts admissible nodes; returns true when any target
// node is reachable from a start node.
template <class Inset, class Start, class Target>
bool mask_bfs(const ExcursionMask& m, const IndexBox& ib, Inset inset,
              Start start, Target target) {
  const GridGeometry& g = m.grid;
  const int dim = g.dim;
  const int64_t e0 = ib.hi[0] - ib.lo[0] + 1;
  const int64_t e1 = ib.hi[1] - ib.lo[1] + 1;
  const int64_t e2 = dim == 3 ? ib.hi[2] - ib.lo[2] + 1 : 1;
  std::vector<uint8_t> seen((size_t)(e0 * e1 * e2), 0);
  std::vector<int64_t> stack;

  auto adm = [&](int64_t i, int64_t j, int64_t k) {
    return m.at(i, j, k) && inset(i, j, k);
  };
  auto push = [&](int64_t i, int64_t j, int64_t k) {
    const int64_t loc = ((i - ib.lo[0]) * e1 + (j - ib.lo[1])) * e2 +
                        (dim == 3 ? k - ib.lo[2] : 0);
    if (seen[(size_t)loc]) return false;
    seen[(size_t)loc] = 1;
    stack.push_back(loc);
    return true;
  };

  const int64_t klo = dim == 3 ? ib.lo[2] : 0;
  const int64_t khi = dim == 3 ? ib.hi[2] : 0;
  for (int64_t i = ib.lo[0]; i <= ib.hi[0]; ++i)
    for (int64_t j = ib.lo[1]; j <= ib.hi[1]; ++j)
      for (int64_t k = klo; k <= khi; ++k)
        if (start(i, j, k) && adm(i, j, k)) {
          if (target(i, j, k)) return true;
          push(i, j, k);
        }

  const bool diag = m.conn == Connectivity::FaceAndDiagonal;
  const int dlo = dim == 3 ? -1 : 0, dhi = dim == 3 ? 1 : 0;
  while (!stack.empty()) {
    const int64_t loc = stack.back();
    stack.pop_back();
    const int64_t i = loc / (e1 * e2) + ib.lo[0];
    const int64_t j = (loc / e2) % e1 + ib.lo[1];
    const int64_t k = (dim == 3 ? loc % e2 + ib.lo[2] : 0);
    for (int di = -1; di <= 1; ++di)
      for (int dj = -1; dj <= 1; ++dj)
        for (int dk = dlo; dk <= dhi; ++dk) {
          if (di == 0 && dj == 0 && dk == 0) continue;
          if (!diag && std::abs(di) + std::abs(dj) + std::abs(dk) != 1) continue;
          const int64_t ni = i + di, nj = j + dj, nk = k + dk;
          if (ni < ib.lo[0] || ni > ib.hi[0] || nj < ib.lo[1] || nj > ib.hi[1])
            continue;
          if (dim == 3 && (nk < ib.lo[2] || nk > ib.hi[2])) continue;
          if (!adm(ni, nj, nk)) continue;
          if (!push(ni, nj, nk)) continue;
          if (target(ni, nj, nk)) return true;
        }
  }
  return false;
}

// ---------------------------------------------------------------------------
// polyline geometry (good pairs, contact points)

using P2 = std::array<double, 2>;

double seg_point_dist(const P2& x, const P2& a, const P2& b) {
  const double dx = b[0] - a[0], dy = b[1] - a[1];
  const double len2 = dx * dx + dy * dy;
  double t = 0;
  if (len2 > 0)
    t = std::clamp(((x[0] - a[0]) * dx + (x[1] - a[1]) * dy) / len2, 0.0, 1.0);
  const double px = a[0] + t * dx - x[0], py = a[1] + t * dy - x[1];
  return std::hypot(px, py);
}

std::vector<P2> parse_path(const json& c, const char* key) {
  require_config(c.contains(key) && c.at(key).is_array(),
                 std::string("detector: '") + key + "' must be a point array");
  std::vector<P2> path;
  for (const auto& p : c.at(key)) {
    require_config(p.is_array() && p.size() == 2 && p[0].is_number() &&
                       p[1].is_number(),
                   "detector: path points must be [x, y]");
    path.push_back({p[0].get<double>(), p[1].get<double>()});
  }
  require_config(path.size() >= 2, "detector: path needs at least 2 points");
  return path;
}

json path_to_json(const std::vector<P2>& path) {
  json j = json::array();
  for (const auto& p : path) j.push_back(json::array({p[0], p[1]}));
  return j;
}

// pieces of the polyline inside the closed disk |p| <= rad
std::vector<std::vector<P2>> clip_polyline_to_disk(const std::vector<P2>& path,
                                                   double rad) {
  std::vector<std::vector<P2>> pieces;
  bool open_piece = false;
  for (size_t s = 0; s + 1 < path.size(); ++s) {
    const P2 a = path[s], b = path[s + 1];
    const double dx = b[0] - a[0], dy = b[1] - a[1];
    const double A = dx * dx + dy * dy;
    const double B = a[0] * dx + a[1] * dy;
    const double C = a[0] * a[0] + a[1] * a[1] - rad * rad;
    double t0, t1;
    if (A == 0) {
      if (C > 0) {
        open_piece = false;
        continue;
      }
      t0 = 0;
      t1 = 1;
    } else {
      const double disc = B * B - A * C;
      if (disc < 0) {
        open_piece = false;
        continue;
      }
      const double sq = std::sqrt(disc);
      t0 = std::max(0.0, (-B - sq) / A);
      t1 = std::min(1.0, (-B + sq) / A);
      if (t0 > t1) {
        open_piece = false;
        continue;
      }
    }
    const P2 p0{a[0] + t0 * dx, a[1] + t0 * dy};
    const P2 p1{a[0] + t1 * dx, a[1] + t1 * dy};
    if (open_piece && t0 == 0.0) {
      pieces.back().push_back(p1);
    } else {
      pieces.push_back({p0, p1});
    }
    open_piece = (t1 == 1.0);
  }
  return pieces;
}

double dist_to_piece(const P2& x, const std::vector<P2>& piece) {
  double d = kInf;
  for (size_t s = 0; s + 1 < piece.size(); ++s)
    d = std::min(d, seg_point_dist(x, piece[s], piece[s + 1]));
  return d;
}

// max |p - x| over a polyline piece (attained at a vertex)
double max_dist_on_piece(const P2& x, const std::vector<P2>& piece) {
  double d = 0;
  for (const auto& p : piece) d = std::max(d, std::hypot(p[0] - x[0], p[1] - x[1]));
  return d;
}

}  // namespace

bool box_crossing(const ExcursionMask& m, const IndexBox& ib, int axis) {
  return mask_bfs(
      m, ib, [](int64_t, int64_t, int64_t) { return true; },
      [&](int64_t i, int64_t j, int64_t k) {
        const int64_t c[3] = {i, j, k};
        return c[axis] == ib.lo[axis];
      },
      [&](int64_t i, int64_t j, int64_t k) {
        const int64_t c[3] = {i, j, k};
        return c[axis] == ib.hi[axis];
      });
}

std::vector<P2> place_contact_points(const std::vector<P2>& path, double rho) {
  std::vector<P2> kept;
  const double min_gap = 20.0 * rho;
  const double step = rho / 4.0;
  auto consider = [&](const P2& p) {
    for (const auto& q : kept)
      if (std::hypot(p[0] - q[0], p[1] - q[1]) < min_gap) return;
    kept.push_back(p);
  };
  for (size_t s = 0; s + 1 < path.size(); ++s) {
    const P2 a = path[s], b = path[s + 1];
    const double len = std::hypot(b[0] - a[0], b[1] - a[1]);
    const int64_t nsteps = std::max<int64_t>(1, (int64_t)std::ceil(len / step));
    for (int64_t q = 0; q <= nsteps; ++q) {
      const double t = (double)q / (double)nsteps;
      consider({a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])});
    }
  }
  return kept;
}

bool good_pair_conditions(const std::vector<P2>& path, double R, double r_prime,
                          const P2& x, const P2& z) {
  const auto pieces = clip_polyline_to_disk(path, 1.9 * R);
  if (pieces.empty()) return false;
  const double tol = 1e-9 * std::max(1.0, r_prime);
  // (1) the clipped path meets D(x, 2R') and touches the circle of radius
  //     10R' around x (min/max distance straddle per connected piece)
  bool meets = false, straddles = false;
  for (const auto& piece : pieces) {
    const double lo = dist_to_piece(x, piece);
    const double hi = max_dist_on_piece(x, piece);
    if (lo <= 2 * r_prime + tol) meets = true;
    if (lo <= 10 * r_prime + tol && hi >= 10 * r_prime - tol) straddles = true;
  }
  if (!meets || !straddles) return false;
  // (2) z sits on that circle and keeps distance 11R' from the clipped path
  if (std::abs(std::hypot(z[0] - x[0], z[1] - x[1]) - 10 * r_prime) > tol)
    return false;
  for (const auto& piece : pieces)
    if (dist_to_piece(z, piece) < 11 * r_prime - tol) return false;
  return true;
}

GoodPairResult good_pair_search(const std::vector<P2>& path, double R,
                                double r_prime, int angular_steps) {
  require_config(r_prime > 0 && R > 0, "good pair: radii must be positive");
  require_config(angular_steps >= 4, "good pair: need at least 4 angular steps");
  GoodPairResult res;
  const double rx = 1.9 * R + 2 * r_prime;
  const double rz = 1.9 * R + 12 * r_prime;
  for (int s = 0; s < angular_steps; ++s) {
    const double theta = 2.0 * M_PI * s / angular_steps;
    const P2 x{rx * std::cos(theta), rx * std::sin(theta)};
    const P2 z{rz * std::cos(theta), rz * std::sin(theta)};
    if (good_pair_conditions(path, R, r_prime, x, z)) {
      res.found = true;
      res.x = x;
      res.z = z;
      res.theta = theta;
      return res;
    }
  }
  return res;
}

namespace {

// ---------------------------------------------------------------------------
// crossing

struct CrossingDetector final : Detector {
  Box box_;
  int axis_ = 0;
  double level_ = 0;
  bool complement_ = false;
  Connectivity conn_ = Connectivity::FaceOnly;
  json canon_;

  explicit CrossingDetector(const json& c) {
    level_ = jreq(c, "level");
    complement_ = jflag(c, "complement", false);
    if (c.contains("box")) {
      box_ = Box::from_json(c.at("box"));
    } else {
      const double R = jreq(c, "R");
      require_config(R > 0, "crossing: R must be positive");
      const double aspect = jnum(c, "aspect", 1.0);
      require_config(aspect > 0, "crossing: aspect must be positive");
      if (c.contains("slab_height") && !c.at("slab_height").is_null()) {
        const double L = jreq(c, "slab_height");
        require_config(L > 0, "crossing: slab_height must be positive");
        box_ = Box{3, {0, 0, 0}, {aspect * R, R, L}};
      } else {
        box_ = Box::rect(0, aspect * R, 0, R);
      }
    }
    const Face from = parse_face(jstr(c, "from", "left"), box_.dim);
    const Face to = parse_face(jstr(c, "to", "right"), box_.dim);
    require_config(from.axis == to.axis && from.high != to.high,
                   "crossing: from/to must be opposite faces");
    axis_ = from.axis;
    const std::string cs =
        jstr(c, "connectivity", complement_ ? "face_diagonal" : "face");
    if (cs == "face") conn_ = Connectivity::FaceOnly;
    else if (cs == "face_diagonal") conn_ = Connectivity::FaceAndDiagonal;
    else fail_config("crossing: connectivity must be face or face_diagonal");
    canon_ = {{"name", "crossing"},   {"level", level_},
              {"box", box_.to_json()}, {"axis", axis_},
              {"complement", complement_},
              {"connectivity", cs}};
    if (c.contains("R")) canon_["R"] = c.at("R");
  }

  double evaluate(const FieldSample& f) const override {
    require_config(f.grid.dim == box_.dim, "crossing: sample dim mismatch");
    const ExcursionMask m = threshold(f, level_, conn_, complement_);
    const IndexBox ib = index_box(f.grid, box_);
    return box_crossing(m, ib, axis_) ? 1.0 : 0.0;
  }
  bool monotone() const override { return !complement_; }
  int required_dim() const override { return box_.dim; }
  json describe() const override { return canon_; }
};

// ---------------------------------------------------------------------------
// annulus events: circuit / arm / half-plane arm

struct AnnulusDetector final : Detector {
  enum class Mode { Circuit, Arm, HalfPlaneArm } mode_;
  double cx_ = 0, cy_ = 0, r1_ = 1, r2_ = 2, level_ = 0;
  int hp_axis_ = 1;
  double hp_sign_ = 1;  // keep hp_sign_*(coord - center) >= 0
  json canon_;

  explicit AnnulusDetector(const json& c) {
    const std::string mode = jstr(c, "mode", "circuit");
    if (mode == "circuit") mode_ = Mode::Circuit;
    else if (mode == "arm") mode_ = Mode::Arm;
    else if (mode == "half_plane_arm") mode_ = Mode::HalfPlaneArm;
    else fail_config("annulus: mode must be circuit, arm or half_plane_arm");
    level_ = jreq(c, "level");
    r1_ = jreq(c, "r_inner");
    r2_ = jreq(c, "r_outer");
    require_config(r1_ > 0 && r2_ > r1_, "annulus: need 0 < r_inner < r_outer");
    if (c.contains("center")) {
      const auto& ctr = c.at("center");
      require_config(ctr.is_array() && ctr.size() == 2, "annulus: center must be [x, y]");
      cx_ = ctr[0].get<double>();
      cy_ = ctr[1].get<double>();
    }
    std::string hp = jstr(c, "half_plane", "upper");
    if (hp == "upper") { hp_axis_ = 1; hp_sign_ = 1; }
    else if (hp == "lower") { hp_axis_ = 1; hp_sign_ = -1; }
    else if (hp == "right") { hp_axis_ = 0; hp_sign_ = 1; }
    else if (hp == "left") { hp_axis_ = 0; hp_sign_ = -1; }
    else fail_config("annulus: half_plane must be upper/lower/left/right");
    canon_ = {{"name", "annulus"}, {"mode", mode},
              {"center", json::array({cx_, cy_})},
              {"r_inner", r1_}, {"r_outer", r2_}, {"level", level_}};
    if (mode_ == Mode::HalfPlaneArm) canon_["half_plane"] = hp;
  }

  double evaluate(const FieldSample& f) const override {
    require_config(f.grid.dim == 2, "annulus: needs a 2D sample");
    const GridGeometry& g = f.grid;
    const double h = g.h;
    const IndexBox ib =
        index_box(g, Box::rect(cx_ - r2_, cx_ + r2_, cy_ - r2_, cy_ + r2_));
    auto dist = [&](int64_t i, int64_t j) {
      return std::hypot(g.coord(0, i) - cx_, g.coord(1, j) - cy_);
    };
    if (mode_ == Mode::Circuit) {
      // a mask circuit around the inner disk exists iff the complement has
      // no crossing from the inner disk to the outer boundary
      const ExcursionMask cm =
          threshold(f, level_, Connectivity::FaceAndDiagonal, true);
      const bool crossed = mask_bfs(
          cm, ib,
          [&](int64_t i, int64_t j, int64_t) { return dist(i, j) <= r2_; },
          [&](int64_t i, int64_t j, int64_t) { return dist(i, j) <= r1_ + h; },
          [&](int64_t i, int64_t j, int64_t) { return dist(i, j) >= r2_ - h; });
      return crossed ? 0.0 : 1.0;
    }
    const ExcursionMask m = threshold(f, level_);
    const bool hp = mode_ == Mode::HalfPlaneArm;
    auto inset = [&](int64_t i, int64_t j, int64_t) {
      const double d = dist(i, j);
      if (d < r1_ - h || d > r2_) return false;
      if (!hp) return true;
      const double u = hp_axis_ == 0 ? g.coord(0, i) - cx_ : g.coord(1, j) - cy_;
      return hp_sign_ * u >= -1e-9;
    };
    return mask_bfs(
               m, ib, inset,
               [&](int64_t i, int64_t j, int64_t) { return dist(i, j) <= r1_ + h; },
               [&](int64_t i, int64_t j, int64_t) { return dist(i, j) >= r2_ - h; })
               ? 1.0
               : 0.0;
  }
  bool monotone() const override { return true; }
  int required_dim() const override { return 2; }
  json describe() const override { return canon_; }
};

// ---------------------------------------------------------------------------
// two orthogonal squares sharing an edge line

struct OrthogonalSquaresDetector final : Detector {
  double r_ = 1, level_ = 0;
  json canon_;

  explicit OrthogonalSquaresDetector(const json& c) {
    r_ = jreq(c, "r");
    level_ = jreq(c, "level");
    require_config(r_ > 0, "orthogonal_squares: r must be positive");
    canon_ = {{"name", "orthogonal_squares"}, {"r", r_}, {"level", level_}};
  }

  double evaluate(const FieldSample& f) const override {
    require_config(f.grid.dim == 3, "orthogonal_squares: needs a 3D sample");
    const IndexBox ib = index_box(f.grid, Box::cube(3, 0, r_));
    const int64_t j0 = ib.lo[1], jr = ib.hi[1];
    const int64_t k0 = ib.lo[2], kr = ib.hi[2];
    const ExcursionMask m = threshold(f, level_);
    // union of the vertical square {x2=0} and the horizontal square {x3=0};
    // crossing from the top edge of the first to the far edge of the second
    return mask_bfs(
               m, ib,
               [&](int64_t, int64_t j, int64_t k) { return j == j0 || k == k0; },
               [&](int64_t, int64_t j, int64_t k) { return j == j0 && k == kr; },
               [&](int64_t, int64_t j, int64_t k) { return j == jr && k == k0; })
               ? 1.0
               : 0.0;
  }
  bool monotone() const override { return true; }
  int required_dim() const override { return 3; }
  json describe() const override { return canon_; }
};

// ---------------------------------------------------------------------------
// slab uniqueness

struct UniquenessDetector final : Detector {
  double R_, a_, delta_, level_, level_planar_;
  json canon_;

  explicit UniquenessDetector(const json& c) {
    R_ = jreq(c, "R");
    require_config(R_ > 0, "uniqueness_in_slab: R must be positive");
    a_ = jnum(c, "a", 0.5);
    delta_ = jnum(c, "delta", 0.25);
    require_config(a_ > 0 && a_ < 1, "uniqueness_in_slab: need 0 < a < 1");
    require_config(delta_ > 0, "uniqueness_in_slab: delta must be positive");
    const double gap = std::pow(R_, -1.5);
    level_ = jnum(c, "level", gap);
    level_planar_ = jnum(c, "level_planar", level_ + gap);
    require_config(level_planar_ >= level_,
                   "uniqueness_in_slab: level_planar must be >= level");
    canon_ = {{"name", "uniqueness_in_slab"}, {"R", R_}, {"a", a_},
              {"delta", delta_}, {"level", level_},
              {"level_planar", level_planar_}};
  }

  double evaluate(const FieldSample& f) const override {
    require_config(f.grid.dim == 3, "uniqueness_in_slab: needs a 3D sample");
    const Box slab{3, {-4 * R_, -4 * R_, 0}, {4 * R_, 4 * R_, std::pow(R_, a_)}};
    const IndexBox sib = index_box(f.grid, slab);
    const Box plane{3, {-2 * R_, -2 * R_, 0}, {2 * R_, 2 * R_, 0}};
    const IndexBox pib = index_box(f.grid, plane);
    const int64_t k0 = pib.lo[2];

    const ExcursionMask hi = threshold(f, level_planar_);
    const ExcursionMask pm = slice2d(hi, k0, pib);
    const ComponentLabeling L2 = label_components(pm);
    const std::vector<int32_t> big = L2.filter_by_diameter(delta_ * R_);
    if (big.size() <= 1) return 1.0;

    const ExcursionMask lo = threshold(f, level_);
    const ExcursionMask sm = restrict_mask(lo, sib);
    const ComponentLabeling L3 = label_components(sm);
    int32_t want = -2;
    for (int32_t comp : big) {
      int64_t cc[3];
      pm.grid.de_lin(L2.stats[(size_t)comp].rep, cc);
      const int64_t si = cc[0] + pib.lo[0] - sib.lo[0];
      const int64_t sj = cc[1] + pib.lo[1] - sib.lo[1];
      const int64_t sk = k0 - sib.lo[2];
      const int32_t lbl = L3.labels[(size_t)sm.grid.lin(si, sj, sk)];
      if (lbl < 0) return 0.0;
      if (want == -2) want = lbl;
      else if (lbl != want) return 0.0;
    }
    return 1.0;
  }
  bool monotone() const override { return false; }
  int required_dim() const override { return 3; }
  json describe() const override { return canon_; }
};

// ---------------------------------------------------------------------------
// sprouts: every large planar component grows to the top of a thin slab
// through a connector of diameter <= 3R^a.  The search anchors balls of
// radius 1.5R^a on a R^a/2 net of the component, which keeps any reported
// connector within the diameter bound (a conservative under-approximation).

struct SproutsDetector final : Detector {
  double R_, a_, level_, level_planar_;
  json canon_;

  explicit SproutsDetector(const json& c) {
    R_ = jreq(c, "R");
    require_config(R_ > 0, "sprouts: R must be positive");
    a_ = jnum(c, "a", 0.5);
    require_config(a_ > 0 && a_ < 1, "sprouts: need 0 < a < 1");
    const double gap = std::pow(R_, -1.5);
    level_ = jnum(c, "level", gap);
    level_planar_ = jnum(c, "level_planar", level_ + gap);
    require_config(level_planar_ >= level_,
                   "sprouts: level_planar must be >= level");
    canon_ = {{"name", "sprouts"}, {"R", R_}, {"a", a_},
              {"level", level_}, {"level_planar", level_planar_}};
  }

  double evaluate(const FieldSample& f) const override {
    require_config(f.grid.dim == 3, "sprouts: needs a 3D sample");
    const double ra = std::pow(R_, a_);
    const double ztop = std::pow(R_, a_ * a_);
    const double ball = 1.5 * ra;
    const double net = 0.5 * ra;

    const Box slab{3, {-2 * R_, -2 * R_, 0}, {2 * R_, 2 * R_, ztop}};
    const IndexBox sib = index_box(f.grid, slab);
    const Box plane{3, {-2 * R_, -2 * R_, 0}, {2 * R_, 2 * R_, 0}};
    const IndexBox pib = index_box(f.grid, plane);
    const int64_t k0 = pib.lo[2];

    const ExcursionMask pm = slice2d(threshold(f, level_planar_), k0, pib);
    const ComponentLabeling L2 = label_components(pm);
    const std::vector<int32_t> big = L2.filter_by_diameter(ra);
    if (big.empty()) return 1.0;

    const ExcursionMask sm = restrict_mask(threshold(f, level_), sib);
    const GridGeometry& sg = sm.grid;
    const int64_t ktop = sg.n[2] - 1;
    std::vector<int32_t> stamp((size_t)sg.num_nodes(), 0);
    int32_t epoch = 0;

    for (int32_t comp : big) {
      // component nodes in parent-plane coordinates
      std::vector<P2> pos;
      std::vector<std::array<int64_t, 2>> sidx;
      for (int64_t i = 0; i < pm.grid.n[0]; ++i)
        for (int64_t j = 0; j < pm.grid.n[1]; ++j)
          if (L2.labels[(size_t)pm.grid.lin(i, j)] == comp) {
            pos.push_back({pm.grid.coord(0, i), pm.grid.coord(1, j)});
            sidx.push_back({i + pib.lo[0] - sib.lo[0], j + pib.lo[1] - sib.lo[1]});
          }
      std::vector<P2> anchors;
      for (const auto& p : pos) {
        bool covered = false;
        for (const auto& q : anchors)
          if (std::hypot(p[0] - q[0], p[1] - q[1]) < net) {
            covered = true;
            break;
          }
        if (!covered) anchors.push_back(p);
      }
      bool connected = false;
      const int64_t sk0 = k0 - sib.lo[2];
      for (const auto& anc : anchors) {
        ++epoch;
        std::vector<int64_t> stack;
        auto in_ball = [&](int64_t i, int64_t j, int64_t k) {
          const double dx = sg.coord(0, i) - anc[0];
          const double dy = sg.coord(1, j) - anc[1];
          const double dz = sg.coord(2, k);
          return dx * dx + dy * dy + dz * dz <= ball * ball;
        };
        for (size_t q = 0; q < pos.size(); ++q) {
          const int64_t i = sidx[q][0], j = sidx[q][1];
          if (!in_ball(i, j, sk0) || !sm.at(i, j, sk0)) continue;
          const int64_t lin = sg.lin(i, j, sk0);
          if (stamp[(size_t)lin] == epoch) continue;
          stamp[(size_t)lin] = epoch;
          stack.push_back(lin);
        }
        while (!stack.empty() && !connected) {
          const int64_t lin = stack.back();
          stack.pop_back();
          int64_t cc[3];
          sg.de_lin(lin, cc);
          if (cc[2] == ktop) {
            connected = true;
            break;
          }
          for (int ax = 0; ax < 3; ++ax)
            for (int s = -1; s <= 1; s += 2) {
              int64_t nb[3] = {cc[0], cc[1], cc[2]};
              nb[ax] += s;
              if (nb[ax] < 0 || nb[ax] >= sg.n[ax]) continue;
              if (!in_ball(nb[0], nb[1], nb[2])) continue;
              if (!sm.at(nb[0], nb[1], nb[2])) continue;
              const int64_t nl = sg.lin(nb[0], nb[1], nb[2]);
              if (stamp[(size_t)nl] == epoch) continue;
              stamp[(size_t)nl] = epoch;
              stack.push_back(nl);
            }
        }
        if (connected) break;
      }
      if (!connected) return 0.0;
    }
    return 1.0;
  }
  bool monotone() const override { return false; }
  int required_dim() const override { return 3; }
  json describe() const override { return canon_; }
};

// ---------------------------------------------------------------------------
// contact points along a path

struct ContactPointsDetector final : Detector {
  double R_, rho_, level_;
  std::vector<P2> path_;
  bool has_min_count_ = false;
  double min_count_ = 0;
  json canon_;

  explicit ContactPointsDetector(const json& c) {
    R_ = jreq(c, "R");
    rho_ = jreq(c, "rho");
    level_ = jnum(c, "level", 0.0);
    require_config(R_ > 0 && rho_ > 0 && rho_ <= R_,
                   "contact_points: need 0 < rho <= R");
    if (c.contains("path") && !c.at("path").is_null())
      path_ = parse_path(c, "path");
    else
      path_ = {{-2 * R_, 0}, {2 * R_, 0}};  // horizontal diameter of D(2R)
    for (const auto& p : path_)
      require_config(std::hypot(p[0], p[1]) <= 2 * R_ + 1e-9,
                     "contact_points: path must stay inside D(0, 2R)");
    if (c.contains("min_count") && !c.at("min_count").is_null()) {
      has_min_count_ = true;
      min_count_ = jreq(c, "min_count");
    }
    canon_ = {{"name", "contact_points"}, {"R", R_}, {"rho", rho_},
              {"level", level_}, {"path", path_to_json(path_)}};
    if (has_min_count_) canon_["min_count"] = min_count_;
  }

  double evaluate(const FieldSample& f) const override {
    require_config(f.grid.dim == 2, "contact_points: needs a 2D sample");
    const GridGeometry& g = f.grid;
    const double h = g.h;
    const IndexBox ib =
        index_box(g, Box::rect(-3 * R_, 3 * R_, -3 * R_, 3 * R_));
    const std::vector<P2> centers = place_contact_points(path_, rho_);
    const ExcursionMask m = threshold(f, level_);
    const double r_small = std::max(rho_ / 100.0, 2 * h);
    int64_t count = 0;
    for (size_t i = 0; i < centers.size(); ++i) {
      auto inset = [&](int64_t ii, int64_t jj, int64_t) {
        const double x = g.coord(0, ii), y = g.coord(1, jj);
        if (std::hypot(x, y) > 3 * R_) return false;
        for (size_t j = 0; j < centers.size(); ++j) {
          if (j == i) continue;
          if (std::hypot(x - centers[j][0], y - centers[j][1]) <= 2 * rho_)
            return false;
        }
        return true;
      };
      const bool ok = mask_bfs(
          m, ib, inset,
          [&](int64_t ii, int64_t jj, int64_t) {
            return std::hypot(g.coord(0, ii) - centers[i][0],
                              g.coord(1, jj) - centers[i][1]) <= r_small;
          },
          [&](int64_t ii, int64_t jj, int64_t) {
            return std::hypot(g.coord(0, ii), g.coord(1, jj)) >= 3 * R_ - h;
          });
      count += ok ? 1 : 0;
    }
    if (has_min_count_) return count >= min_count_ ? 1.0 : 0.0;
    return (double)count;
  }
  bool monotone() const override { return true; }
  bool binary() const override { return has_min_count_; }
  int required_dim() const override { return 2; }
  json describe() const override { return canon_; }
};

// ---------------------------------------------------------------------------
// good points (planar and faces variants)

struct GoodPointDetector final : Detector {
  bool faces_ = false;
  double R_, delta_, a_, gamma_, level_;
  std::array<double, 3> center_{0, 0, 0};
  json canon_;

  explicit GoodPointDetector(const json& c) {
    const std::string variant = jstr(c, "variant", "planar");
    if (variant == "faces") faces_ = true;
    else require_config(variant == "planar",
                        "good_point: variant must be planar or faces");
    R_ = jreq(c, "R");
    require_config(R_ > 0, "good_point: R must be positive");
    delta_ = jnum(c, "delta", 0.25);
    a_ = jnum(c, "a", 0.5);
    gamma_ = jnum(c, "gamma", 0.2);
    level_ = jnum(c, "level", 0.0);
    require_config(delta_ > 0, "good_point: delta must be positive");
    require_config(a_ > 0 && a_ < 1, "good_point: need 0 < a < 1");
    if (c.contains("center")) {
      const auto& ctr = c.at("center");
      require_config(ctr.is_array() && ctr.size() >= 2,
                     "good_point: center must be [x, y(, z)]");
      for (size_t k = 0; k < ctr.size() && k < 3; ++k)
        center_[k] = ctr[k].get<double>();
    }
    canon_ = {{"name", "good_point"},
              {"variant", faces_ ? "faces" : "planar"},
              {"R", R_}, {"delta", delta_}, {"a", a_}, {"gamma", gamma_},
              {"level", level_},
              {"center", json::array({center_[0], center_[1], center_[2]})}};
  }

  double sup_gap(const FieldSample& f, const IndexBox& ib) const {
    if (!f.has_coupled()) return 0.0;  // untruncated sampler: f == f_r
    double sup = 0;
    for (int64_t i = ib.lo[0]; i <= ib.hi[0]; ++i)
      for (int64_t j = ib.lo[1]; j <= ib.hi[1]; ++j)
        for (int64_t k = ib.lo[2]; k <= ib.hi[2]; ++k) {
          const int64_t lin = f.grid.lin(i, j, k);
          sup = std::max(sup, std::abs(f.values[(size_t)lin] -
                                       f.coupled[(size_t)lin]));
        }
    return sup;
  }

  double evaluate_planar(const FieldSample& f) const {
    const double gap = std::pow(R_, -1.5);
    const double lv_hi = level_ + 2 * gap, lv_lo = level_ + gap;
    const double cx = center_[0], cy = center_[1];
    const Box slab{3, {cx - 4 * R_, cy - 4 * R_, 0},
                   {cx + 4 * R_, cy + 4 * R_, std::pow(R_, a_)}};
    const IndexBox sib = index_box(f.grid, slab);
    if (sup_gap(f, sib) > 0.5 * gap) return 0.0;  // item iii

    const ExcursionMask hi = threshold(f, lv_hi);
    const Box p1{3, {cx - R_, cy - R_, 0}, {cx + R_, cy + R_, 0}};
    const IndexBox pib1 = index_box(f.grid, p1);
    const int64_t k0 = pib1.lo[2];
    const ComponentLabeling L1 = label_components(slice2d(hi, k0, pib1));
    if (L1.filter_by_diameter(delta_ * R_).empty()) return 0.0;  // item i

    const Box p2{3, {cx - 2 * R_, cy - 2 * R_, 0}, {cx + 2 * R_, cy + 2 * R_, 0}};
    const IndexBox pib2 = index_box(f.grid, p2);
    const ExcursionMask pm2 = slice2d(hi, k0, pib2);
    const ComponentLabeling L2 = label_components(pm2);
    const std::vector<int32_t> big = L2.filter_by_diameter(delta_ * R_);
    if (big.size() <= 1) return 1.0;  // item ii vacuous

    const ExcursionMask sm = restrict_mask(threshold(f, lv_lo), sib);
    const ComponentLabeling L3 = label_components(sm);
    int32_t want = -2;
    for (int32_t comp : big) {
      int64_t cc[3];
      pm2.grid.de_lin(L2.stats[(size_t)comp].rep, cc);
      const int64_t si = cc[0] + pib2.lo[0] - sib.lo[0];
      const int64_t sj = cc[1] + pib2.lo[1] - sib.lo[1];
      const int32_t lbl =
          L3.labels[(size_t)sm.grid.lin(si, sj, k0 - sib.lo[2])];
      if (lbl < 0) return 0.0;
      if (want == -2) want = lbl;
      else if (lbl != want) return 0.0;
    }
    return 1.0;
  }

  double evaluate_faces(const FieldSample& f) const {
    const double gap = std::pow(R_, -1.5);
    const double lv_hi = level_ + 2 * gap, lv_lo = level_ + gap;
    Box cube{3, {0, 0, 0}, {0, 0, 0}};
    for (int k = 0; k < 3; ++k) {
      cube.lo[k] = center_[k] - R_ / 2;
      cube.hi[k] = center_[k] + R_ / 2;
    }
    const IndexBox cib = index_box(f.grid, cube);
    if (sup_gap(f, cib) > 0.5 * gap) return 0.0;

    const ExcursionMask hi = threshold(f, lv_hi);
    const ExcursionMask sm = restrict_mask(threshold(f, lv_lo), cib);
    const ComponentLabeling L3 = label_components(sm);
    int32_t want = -2;
    for (int axis = 0; axis < 3; ++axis)
      for (int side = 0; side < 2; ++side) {
        IndexBox fib;
        fib.lo[axis] = fib.hi[axis] = side ? cib.hi[axis] : cib.lo[axis];
        for (int o = 0; o < 3; ++o) {
          if (o == axis) continue;
          // concentric square of side R/2 inside the R-sided face
          const Box span{3,
                         {center_[0] - R_ / 4, center_[1] - R_ / 4, center_[2] - R_ / 4},
                         {center_[0] + R_ / 4, center_[1] + R_ / 4, center_[2] + R_ / 4}};
          const IndexBox oib = index_box(f.grid, span);
          fib.lo[o] = oib.lo[o];
          fib.hi[o] = oib.hi[o];
        }
        const ExcursionMask fm = restrict_mask(hi, fib);
        const ComponentLabeling Lf = label_components(fm);
        const std::vector<int32_t> big = Lf.filter_by_diameter(delta_ * R_);
        if (big.empty()) return 0.0;  // item i
        for (int32_t comp : big) {
          int64_t cc[3];
          fm.grid.de_lin(Lf.stats[(size_t)comp].rep, cc);
          const int64_t si = cc[0] + fib.lo[0] - cib.lo[0];
          const int64_t sj = cc[1] + fib.lo[1] - cib.lo[1];
          const int64_t sk = cc[2] + fib.lo[2] - cib.lo[2];
          const int32_t lbl = L3.labels[(size_t)sm.grid.lin(si, sj, sk)];
          if (lbl < 0) return 0.0;
          if (want == -2) want = lbl;
          else if (lbl != want) return 0.0;  // item ii
        }
      }
    return 1.0;
  }

  double evaluate(const FieldSample& f) const override {
    require_config(f.grid.dim == 3, "good_point: needs a 3D sample");
    return faces_ ? evaluate_faces(f) : evaluate_planar(f);
  }
  bool monotone() const override { return false; }
  int required_dim() const override { return 3; }
  json describe() const override { return canon_; }
};

// ---------------------------------------------------------------------------
// good pair existence (pure geometry; field unused)

struct GoodPairDetector final : Detector {
  double R_, r_prime_;
  int steps_;
  std::vector<P2> path_;
  json canon_;

  explicit GoodPairDetector(const json& c) {
    R_ = jreq(c, "R");
    require_config(R_ > 0, "good_pair: R must be positive");
    r_prime_ = jnum(c, "r_prime", R_ / 100.0);
    require_config(r_prime_ > 0 && r_prime_ <= R_ / 100.0 + 1e-12,
                   "good_pair: need 0 < r_prime <= R/100");
    steps_ = (int)jnum(c, "angular_steps", 720);
    path_ = parse_path(c, "path");
    canon_ = {{"name", "good_pair"}, {"R", R_}, {"r_prime", r_prime_},
              {"angular_steps", steps_}, {"path", path_to_json(path_)}};
  }

  double evaluate(const FieldSample&) const override {
    return good_pair_search(path_, R_, r_prime_, steps_).found ? 1.0 : 0.0;
  }
  bool monotone() const override { return true; }
  int required_dim() const override { return 0; }
  json describe() const override { return canon_; }
};

// ---------------------------------------------------------------------------
// synthetic detectors for estimator calibration

struct ConstDetector final : Detector {
  double v_;
  explicit ConstDetector(const json& c) : v_(jnum(c, "value", 1.0)) {}
  double evaluate(const FieldSample&) const override { return v_; }
  bool monotone() const override { return true; }
  bool binary() const override { return v_ == 0.0 || v_ == 1.0; }
  int required_dim() const override { return 0; }
  json describe() const override { return {{"name", "const"}, {"value", v_}}; }
};

struct CoinDetector final : Detector {
  double p_;
  uint64_t salt_;
  explicit CoinDetector(const json& c)
      : p_(jreq(c, "p")), salt_((uint64_t)jnum(c, "salt", 0)) {
    require_config(p_ >= 0 && p_ <= 1, "coin: p must be in [0, 1]");
  }
  double evaluate(const FieldSample& f) const override {
    CounterRng rng(derive_seed(f.seed, 0xC0117u, salt_));
    return rng.unit_at(0) <= p_ ? 1.0 : 0.0;
  }
  bool monotone() const override { return true; }
  int required_dim() const override { return 0; }
  json describe() const override {
    return {{"name", "coin"}, {"p", p_}, {"salt", (double)salt_}};
  }
};

// threshold on one standard normal per replicate: P = Phi(-level), and the
// per-replicate indicator is monotone in the level (shared draw)
struct GaussThresholdDetector final : Detector {
  double level_;
  explicit GaussThresholdDetector(const json& c) : level_(jreq(c, "level")) {}
  double evaluate(const FieldSample& f) const override {
    CounterRng rng(derive_seed(f.seed, 0x6A55u, 0));
    return rng.normal_at(0) >= level_ ? 1.0 : 0.0;
  }
  bool monotone() const override { return true; }
  int required_dim() const override { return 0; }
  json describe() const override {
    return {{"name", "gauss_threshold"}, {"level", level_}};
  }
};

}  // namespace

std::unique_ptr<Detector> make_detector(const json& cfg) {
  require_config(cfg.is_object() && cfg.contains("name") &&
                     cfg.at("name").is_string(),
                 "detector: config must be an object with a 'name'");
  const std::string name = cfg.at("name").get<std::string>();
  if (name == "crossing") return std::make_unique<CrossingDetector>(cfg);
  if (name == "annulus") return std::make_unique<AnnulusDetector>(cfg);
  if (name == "orthogonal_squares")
    return std::make_unique<OrthogonalSquaresDetector>(cfg);
  if (name == "uniqueness_in_slab")
    return std::make_unique<UniquenessDetector>(cfg);
  if (name == "sprouts") return std::make_unique<SproutsDetector>(cfg);
  if (name == "contact_points")
    return std::make_unique<ContactPointsDetector>(cfg);
  if (name == "good_point") return std::make_unique<GoodPointDetector>(cfg);
  if (name == "good_pair") return std::make_unique<GoodPairDetector>(cfg);
  if (name == "const") return std::make_unique<ConstDetector>(cfg);
  if (name == "coin") return std::make_unique<CoinDetector>(cfg);
  if (name == "gauss_threshold")
    return std::make_unique<GaussThresholdDetector>(cfg);
  fail_config("unknown detector '" + name + "'");
}

}  // namespace gfp
