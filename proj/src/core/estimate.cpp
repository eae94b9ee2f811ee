#include "estimate.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <mutex>
#include <thread>

#include "excursion.hpp"
#include "rng.hpp"

namespace gfp {

namespace {

int64_t mem_budget() {
  if (const char* env = std::getenv("GFPERC_MEM_BUDGET_BYTES")) {
    char* end = nullptr;
    const long long v = std::strtoll(env, &end, 10);
    if (end && *end == '\0' && v > 0) return (int64_t)v;
  }
  return 8ll << 30;
}

double now_ms() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double, std::milli>(
             clock::now().time_since_epoch())
      .count();
}

json detector_at_level(const json& cfg, double level) {
  json c = cfg;
  c["level"] = level;
  return c;
}

double quantile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return 0;
  const double pos = q * (double)(sorted.size() - 1);
  const size_t i = (size_t)pos;
  if (i + 1 >= sorted.size()) return sorted.back();
  const double t = pos - (double)i;
  return sorted[i] * (1 - t) + sorted[i + 1] * t;
}

}  // namespace

std::pair<double, double> wilson_interval(int64_t successes, int64_t n) {
  if (n <= 0) return {0.0, 1.0};
  const double z = kZ95, z2 = z * z;
  const double nn = (double)n;
  const double p = (double)successes / nn;
  const double denom = 1 + z2 / nn;
  const double center = (p + z2 / (2 * nn)) / denom;
  const double half =
      z * std::sqrt(p * (1 - p) / nn + z2 / (4 * nn * nn)) / denom;
  double lo = std::max(0.0, center - half);
  double hi = std::min(1.0, center + half);
  // at the boundaries the endpoints are exactly 0/1; rounding in the formula
  // must not push p_hat itself outside the interval
  if (successes <= 0) lo = 0.0;
  if (successes >= n) hi = 1.0;
  return {lo, hi};
}

// ---------------------------------------------------------------------------
// sampler configuration

SamplerConfig SamplerConfig::parse(const json& j) {
  require_config(j.is_object(), "sampler: config must be an object");
  SamplerConfig s;
  s.kind = j.value("kind", std::string("convolution"));
  json norm;
  norm["kind"] = s.kind;

  if (s.kind == "null") {
    s.dim = 0;
    s.grid = GridGeometry::make(2, Box::square(0, 0), 1.0, 0);
    s.cfg = norm;
    return s;
  }

  require_config(j.contains("box"), "sampler: missing 'box'");
  const Box box = Box::from_json(j.at("box"));
  const double h = j.value("h", 0.25);
  require_config(h > 0, "sampler: h must be positive");

  if (s.kind == "convolution") {
    require_config(j.contains("kernel"), "sampler: missing 'kernel'");
    KernelSpec spec = KernelSpec::from_json(j.at("kernel"));
    require_config(spec.dim == box.dim, "sampler: kernel/box dim mismatch");
    double r = kInf;
    if (j.contains("r") && !j.at("r").is_null()) {
      require_config(j.at("r").is_number(), "sampler: 'r' must be a number");
      r = j.at("r").get<double>();
    }
    s.kernel = std::make_shared<TruncatedKernel>(spec, r);
    s.coupled = j.value("coupled", false);
    require_config(!s.coupled || s.kernel->truncated(),
                   "sampler: coupled output needs a finite truncation radius");
    double pad = required_pad(*s.kernel, s.coupled);
    if (j.contains("pad") && !j.at("pad").is_null()) {
      const double want = j.at("pad").get<double>();
      require_config(want + 1e-9 >= pad,
                     "sampler: pad below the kernel support " +
                         std::to_string(pad));
      pad = want;
    }
    s.dim = spec.dim;
    s.grid = GridGeometry::make(s.dim, box, h, pad);
    norm["kernel"] = s.kernel->to_json();
    norm["coupled"] = s.coupled;
    norm["pad"] = pad;
  } else if (s.kind == "series") {
    require_config(box.dim == 2, "sampler: series sampler is 2D only");
    s.dim = 2;
    s.grid = GridGeometry::make(2, box, h, 0);
    double rho = 0;
    for (int64_t i : {(int64_t)0, s.grid.n[0] - 1})
      for (int64_t jj : {(int64_t)0, s.grid.n[1] - 1})
        rho = std::max(rho, std::hypot(s.grid.coord(0, i), s.grid.coord(1, jj)));
    const int need = series_required_degree(rho);
    s.degree_cap = (int)j.value("degree_cap", 0);
    if (s.degree_cap <= 0) s.degree_cap = need;
    norm["degree_cap"] = s.degree_cap;
  } else if (s.kind == "plane_wave") {
    s.dim = box.dim;
    s.grid = GridGeometry::make(s.dim, box, h, 0);
    s.num_waves = (int)j.value("num_waves", 256);
    require_config(s.num_waves >= 1, "sampler: num_waves must be >= 1");
    norm["num_waves"] = s.num_waves;
  } else {
    fail_config("sampler: unknown kind '" + s.kind + "'");
  }
  norm["box"] = box.to_json();
  norm["h"] = h;
  s.cfg = norm;
  return s;
}

FieldSample SamplerConfig::sample(uint64_t master_seed, int64_t replicate) const {
  if (kind == "null") {
    FieldSample f;
    f.grid = grid;
    f.values.assign(1, 0.0);
    f.seed = derive_seed(master_seed, (uint64_t)replicate, 0);
    f.provenance = {{"sampler", "null"},
                    {"master_seed", master_seed},
                    {"replicate", replicate}};
    return f;
  }
  if (kind == "convolution")
    return sample_convolution(*kernel, grid, coupled, master_seed,
                              (uint64_t)replicate);
  if (kind == "series")
    return sample_series2d(grid, degree_cap, master_seed, (uint64_t)replicate);
  return sample_plane_waves(grid, num_waves, master_seed, (uint64_t)replicate);
}

int64_t SamplerConfig::approx_bytes_per_sample() const {
  if (kind == "null") return 4096;
  const int64_t nodes = grid.num_nodes();
  if (kind != "convolution") return nodes * 8 + (1 << 16);
  int64_t padded = 1;
  for (int k = 0; k < grid.dim; ++k)
    padded *= grid.n[k] + 2 * grid.pad_nodes();
  // real scratch + spectra + outputs (heuristic mirror of the sampler)
  return padded * 8 * 2 + padded * 16 * 2 + nodes * 8 * (coupled ? 2 : 1);
}

int resolve_workers(int requested) {
  int w = requested;
  if (w <= 0) {
    if (const char* env = std::getenv("GFPERC_WORKERS")) {
      char* end = nullptr;
      const long v = std::strtol(env, &end, 10);
      if (end && *end == '\0' && v > 0) w = (int)v;
    }
  }
  if (w <= 0) w = (int)std::thread::hardware_concurrency();
  return std::max(1, w);
}

// ---------------------------------------------------------------------------
// replicate loop

std::vector<Estimate> run_mc_multi(const std::vector<const Detector*>& dets,
                                   const SamplerConfig& sampler, int64_t n,
                                   uint64_t master_seed, int workers,
                                   const ProgressFn& progress) {
  require_config(n >= 1, "estimate: n must be >= 1");
  require_config(!dets.empty(), "estimate: no detectors");
  for (const Detector* d : dets) {
    const int rd = d->required_dim();
    require_config(rd == 0 || rd == sampler.dim,
                   "estimate: detector needs a " + std::to_string(rd) +
                       "D sampler, got " + std::to_string(sampler.dim) + "D");
  }
  workers = resolve_workers(workers);
  const int64_t per = std::max<int64_t>(1, sampler.approx_bytes_per_sample());
  workers = (int)std::min<int64_t>(workers, std::max<int64_t>(1, mem_budget() / per));
  workers = (int)std::min<int64_t>(workers, n);

  const double t0 = now_ms();
  std::vector<std::vector<double>> values(dets.size());
  for (auto& v : values) v.assign((size_t)n, 0.0);

  std::atomic<int64_t> next{0}, done{0};
  std::atomic<bool> abort{false};
  std::mutex err_mu;
  std::exception_ptr err;

  auto body = [&]() {
    while (!abort.load(std::memory_order_relaxed)) {
      const int64_t i = next.fetch_add(1);
      if (i >= n) break;
      try {
        const FieldSample f = sampler.sample(master_seed, i);
        for (size_t d = 0; d < dets.size(); ++d)
          values[d][(size_t)i] = dets[d]->evaluate(f);
      } catch (...) {
        std::lock_guard<std::mutex> lk(err_mu);
        if (!err) err = std::current_exception();
        abort.store(true);
        break;
      }
      const int64_t fin = done.fetch_add(1) + 1;
      if (progress && (fin % 64 == 0 || fin == n)) progress(fin, n);
    }
  };

  if (workers == 1) {
    body();
  } else {
    std::vector<std::thread> pool;
    pool.reserve((size_t)workers);
    for (int w = 0; w < workers; ++w) pool.emplace_back(body);
    for (auto& th : pool) th.join();
  }
  if (err) std::rethrow_exception(err);

  const double wall = now_ms() - t0;
  std::vector<Estimate> out(dets.size());
  for (size_t d = 0; d < dets.size(); ++d)
    out[d] = reduce_values(std::move(values[d]), master_seed, wall);
  return out;
}

Estimate reduce_values(std::vector<double> values, uint64_t master_seed,
                       double wall_ms) {
  Estimate e;
  const int64_t n = (int64_t)values.size();
  e.n = n;
  e.seed = master_seed;
  e.wall_ms = wall_ms;
  e.values = std::move(values);
  bool binary = true;
  double sum = 0;
  for (double v : e.values) {
    if (v != 0.0 && v != 1.0) binary = false;
    sum += v;
  }
  e.binary = binary;
  e.p_hat = n > 0 ? sum / (double)n : 0.0;
  if (binary) {
    const auto ci = wilson_interval((int64_t)std::llround(sum), n);
    e.ci_lo = ci.first;
    e.ci_hi = ci.second;
  } else {
    double ss = 0;
    for (double v : e.values) ss += (v - e.p_hat) * (v - e.p_hat);
    const double se = n > 1 ? std::sqrt(ss / ((double)n * (double)(n - 1))) : 0;
    e.ci_lo = e.p_hat - kZ95 * se;
    e.ci_hi = e.p_hat + kZ95 * se;
  }
  return e;
}

Estimate run_mc(const Detector& det, const SamplerConfig& sampler, int64_t n,
                uint64_t master_seed, int workers, const ProgressFn& progress) {
  return run_mc_multi({&det}, sampler, n, master_seed, workers, progress)[0];
}

// ---------------------------------------------------------------------------
// level sweeps

LevelCurve sweep_levels(const json& detector_cfg, const SamplerConfig& sampler,
                        std::vector<double> levels, int64_t n,
                        uint64_t master_seed, int workers, bool common_rng,
                        const ProgressFn& progress) {
  require_config(!levels.empty(), "sweep: no levels");
  for (size_t i = 1; i < levels.size(); ++i)
    require_config(levels[i - 1] < levels[i], "sweep: levels must be sorted ascending");

  LevelCurve curve;
  curve.levels = levels;
  curve.common_rng = common_rng;

  std::vector<std::unique_ptr<Detector>> dets;
  for (double l : levels) dets.push_back(make_detector(detector_at_level(detector_cfg, l)));

  if (common_rng) {
    std::vector<const Detector*> ptrs;
    for (auto& d : dets) ptrs.push_back(d.get());
    curve.estimates = run_mc_multi(ptrs, sampler, n, master_seed, workers, progress);
    if (dets[0]->monotone()) {
      curve.monotone_checked = true;
      for (size_t l = 1; l + 0 < levels.size() && curve.per_realization_monotone; ++l)
        for (int64_t i = 0; i < n; ++i)
          if (curve.estimates[l].values[(size_t)i] >
              curve.estimates[l - 1].values[(size_t)i] + 1e-12) {
            curve.per_realization_monotone = false;
            break;
          }
    }
  } else {
    for (size_t l = 0; l < levels.size(); ++l)
      curve.estimates.push_back(run_mc(*dets[l], sampler, n,
                                       derive_seed(master_seed, l, 0x5EEDBEEFull),
                                       workers, progress));
  }
  return curve;
}

// ---------------------------------------------------------------------------
// critical-level bisection

BisectionResult bisect_level(const json& detector_cfg,
                             const SamplerConfig& sampler, double target,
                             double lo, double hi, double tol_level, int64_t n0,
                             uint64_t master_seed, int workers, int64_t n_cap,
                             const ProgressFn& progress) {
  require_config(lo < hi, "bisect: bracket must satisfy lo < hi");
  require_config(tol_level > 0, "bisect: tol must be positive");
  require_config(n0 >= 2, "bisect: n per step must be >= 2");
  require_config(target > 0 && target < 1, "bisect: target must be in (0,1)");

  BisectionResult res;
  res.target = target;

  auto estimate_at = [&](double level, int64_t nn, uint64_t seed) {
    const auto det = make_detector(detector_at_level(detector_cfg, level));
    return run_mc(*det, sampler, nn, seed, workers, progress);
  };

  const Estimate at_lo = estimate_at(lo, n0, derive_seed(master_seed, 0, 1));
  const Estimate at_hi = estimate_at(hi, n0, derive_seed(master_seed, 0, 2));
  if (!(at_lo.p_hat > target && target > at_hi.p_hat))
    fail_config("bisect: bracket does not straddle the target: p(" +
                std::to_string(lo) + ")=" + std::to_string(at_lo.p_hat) +
                ", p(" + std::to_string(hi) + ")=" + std::to_string(at_hi.p_hat));
  res.steps.push_back({lo, at_lo});
  res.steps.push_back({hi, at_hi});

  int64_t nn = n0;
  int iter = 0;
  while (hi - lo > tol_level && iter < 200) {
    ++iter;
    const double mid = 0.5 * (lo + hi);
    Estimate est;
    for (;;) {
      est = estimate_at(mid, nn, derive_seed(master_seed, (uint64_t)iter, 3));
      const bool straddle = est.ci_lo < target && target < est.ci_hi;
      if (!straddle || nn >= n_cap) break;
      nn = std::min(n_cap, nn * 2);  // sharpen before committing a side
    }
    res.steps.push_back({mid, est});
    if (est.p_hat > target) lo = mid;
    else hi = mid;
  }
  res.lo = lo;
  res.hi = hi;
  res.l_hat = 0.5 * (lo + hi);
  res.iterations = iter;
  res.n_final = nn;
  return res;
}

// ---------------------------------------------------------------------------
// FKG validator

FkgResult fkg_check(const json& detA, const json& detB,
                    const SamplerConfig& sampler, int64_t n,
                    uint64_t master_seed, int workers) {
  const auto a = make_detector(detA);
  const auto b = make_detector(detB);
  if (!a->monotone() || !b->monotone())
    fail_config("fkg: both detectors must be increasing events; '" +
                (a->monotone() ? detB : detA).at("name").get<std::string>() +
                "' is not monotone in the field");
  const auto ests = run_mc_multi({a.get(), b.get()}, sampler, n, master_seed, workers);

  FkgResult r;
  r.n = n;
  r.p_a = ests[0].p_hat;
  r.p_b = ests[1].p_hat;
  double pab = 0;
  for (int64_t i = 0; i < n; ++i)
    pab += ests[0].values[(size_t)i] * ests[1].values[(size_t)i];
  pab /= (double)n;
  r.cov = pab - r.p_a * r.p_b;
  // delta-method variance via the influence function of the covariance
  double ss = 0;
  for (int64_t i = 0; i < n; ++i) {
    const double psi = (ests[0].values[(size_t)i] - r.p_a) *
                           (ests[1].values[(size_t)i] - r.p_b) -
                       r.cov;
    ss += psi * psi;
  }
  r.se = std::sqrt(ss) / (double)n;
  r.ci_lo = r.cov - kZ95 * r.se;
  r.ci_hi = r.cov + kZ95 * r.se;
  r.pass = r.cov >= -3.0 * r.se;
  return r;
}

// ---------------------------------------------------------------------------
// sprinkling validator: A at level l vs the shifted field f + t (= level l-t)

SprinklingResult sprinkling_check(const json& detector_cfg,
                                  const SamplerConfig& sampler, double t,
                                  int64_t n, uint64_t master_seed, int workers) {
  require_config(t >= 0, "sprinkling: t must be >= 0");
  const double level = detector_cfg.contains("level")
                           ? detector_cfg.at("level").get<double>()
                           : 0.0;
  const auto base = make_detector(detector_at_level(detector_cfg, level));
  if (!base->monotone())
    fail_config("sprinkling: detector must be monotone in the field");
  const auto shifted = make_detector(detector_at_level(detector_cfg, level - t));
  const auto ests =
      run_mc_multi({base.get(), shifted.get()}, sampler, n, master_seed, workers);

  SprinklingResult r;
  r.t = t;
  r.n = n;
  r.p_base = ests[0].p_hat;
  r.p_shift = ests[1].p_hat;
  double mean = 0;
  for (int64_t i = 0; i < n; ++i)
    mean += ests[1].values[(size_t)i] - ests[0].values[(size_t)i];
  mean /= (double)n;
  r.diff = mean;
  double ss = 0;
  for (int64_t i = 0; i < n; ++i) {
    const double d =
        ests[1].values[(size_t)i] - ests[0].values[(size_t)i] - mean;
    ss += d * d;
  }
  r.diff_se = n > 1 ? std::sqrt(ss / ((double)n * (double)(n - 1))) : 0;
  return r;
}

// ---------------------------------------------------------------------------
// truncation sup-norm validator

std::vector<TruncationRow> truncation_check(const KernelSpec& base,
                                            double box_radius,
                                            const std::vector<double>& radii,
                                            double h, int64_t n,
                                            uint64_t master_seed, int workers) {
  require_config(box_radius > 0, "truncation: box radius must be positive");
  require_config(!radii.empty(), "truncation: no radii");
  std::vector<TruncationRow> rows;
  for (double r : radii) {
    json scfg = {{"kind", "convolution"},
                 {"kernel", base.to_json()},
                 {"r", r},
                 {"coupled", true},
                 {"h", h},
                 {"box", Box::cube(base.dim, -box_radius, box_radius).to_json()}};
    const SamplerConfig sampler = SamplerConfig::parse(scfg);

    // nodes inside the Euclidean ball, and their count for the sup budget
    const GridGeometry& g = sampler.grid;
    std::vector<int64_t> ball;
    for (int64_t idx = 0; idx < g.num_nodes(); ++idx) {
      const auto p = g.node_pos(idx);
      double d2 = 0;
      for (int k = 0; k < g.dim; ++k) d2 += p[k] * p[k];
      if (d2 <= box_radius * box_radius + 1e-12) ball.push_back(idx);
    }

    struct SupDetector final : Detector {
      const std::vector<int64_t>* nodes;
      double evaluate(const FieldSample& f) const override {
        double sup = 0;
        for (int64_t idx : *nodes)
          sup = std::max(sup, std::abs(f.values[(size_t)idx] -
                                       f.coupled[(size_t)idx]));
        return sup;
      }
      bool binary() const override { return false; }
      int required_dim() const override { return 0; }
      json describe() const override { return {{"name", "sup_gap"}}; }
    };
    SupDetector det;
    det.nodes = &ball;
    const Estimate est = run_mc(det, sampler, n, master_seed, workers);

    TruncationRow row;
    row.r = r;
    std::vector<double> sups = est.values;
    std::sort(sups.begin(), sups.end());
    row.median = quantile_sorted(sups, 0.5);
    row.q95 = quantile_sorted(sups, 0.95);
    row.sigma_r = std::sqrt(std::max(0.0, l2_gap_sq(*sampler.kernel)));
    // P[sup of N centered sigma_r-Gaussians > sigma_r(sqrt(2 ln 2N) + u)]
    // <= exp(-u^2/2); budget 5%
    const double N = (double)ball.size();
    row.threshold = row.sigma_r * (std::sqrt(2 * std::log(2 * N)) +
                                   std::sqrt(2 * std::log(1 / 0.05)));
    int64_t over = 0;
    for (double s : est.values)
      if (s > row.threshold) ++over;
    row.exceed = (double)over / (double)n;
    row.exact_zero = sups.back() == 0.0;
    rows.push_back(row);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Kac-Rice component-count validator

KacRiceResult kac_rice_check(const KernelSpec& spec, double r, double level,
                             int64_t n, uint64_t master_seed, int workers) {
  require_config(spec.dim == 2, "kac-rice: 2D fields only");
  json scfg = {{"kind", "convolution"},
               {"kernel", spec.to_json()},
               {"h", 0.25},
               {"box", Box::square(-6, 6).to_json()}};
  if (std::isfinite(r)) scfg["r"] = r;
  const SamplerConfig sampler = SamplerConfig::parse(scfg);

  struct CountDetector final : Detector {
    double level;
    double evaluate(const FieldSample& f) const override {
      const ExcursionMask m = threshold(f, level);
      const ComponentLabeling L = label_components(m);
      int64_t cnt = 0;
      for (const auto& st : L.stats)
        if (st.min_dist2_origin <= 1.0 + 1e-12) ++cnt;
      return (double)cnt;
    }
    bool binary() const override { return false; }
    int required_dim() const override { return 2; }
    json describe() const override {
      return {{"name", "component_count"}, {"level", level}};
    }
  };
  CountDetector det;
  det.level = level;
  const Estimate est = run_mc(det, sampler, n, master_seed, workers);

  KacRiceResult res;
  res.n = n;
  res.mc_mean = est.p_hat;
  res.mc_se = (est.ci_hi - est.ci_lo) / (2 * kZ95);
  res.bound = kac_rice_component_bound(spectral_moments_2d(*sampler.kernel));
  res.pass = res.mc_mean <= res.bound + 3 * res.mc_se;
  return res;
}

}  // namespace gfp
