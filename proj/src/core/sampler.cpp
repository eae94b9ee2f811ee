#include "sampler.hpp"

#include <fftw3.h>

#include <cmath>
#include <cstdlib>
#include <mutex>

#include "rng.hpp"

namespace gfp {

namespace {

std::mutex g_fftw_mutex;  // FFTW planning is not thread-safe

struct FftwReal {
  double* p = nullptr;
  explicit FftwReal(size_t n) { p = fftw_alloc_real(n); }
  ~FftwReal() { fftw_free(p); }
  FftwReal(const FftwReal&) = delete;
};
struct FftwCplx {
  fftw_complex* p = nullptr;
  explicit FftwCplx(size_t n) { p = fftw_alloc_complex(n); }
  ~FftwCplx() { fftw_free(p); }
  FftwCplx(const FftwCplx&) = delete;
};

uint64_t mem_budget_bytes() {
  if (const char* e = std::getenv("GFPERC_MEM_BUDGET_BYTES")) {
    const uint64_t v = std::strtoull(e, nullptr, 10);
    if (v > 0) return v;
  }
  return 8ull << 30;
}

// place kernel taps circularly on the padded lattice
void fill_taps(const TruncatedKernel& k, const GridGeometry& g, const int64_t m[3],
               double* taps, int64_t total) {
  for (int64_t i = 0; i < total; ++i) taps[i] = 0.0;
  const int dim = g.dim;
  const double support = k.support_radius();
  const int64_t S = (int64_t)std::ceil(support / g.h + 1e-9);
  const double amp = std::pow(g.h, dim / 2.0);
  int64_t off[3] = {0, 0, 0};
  const int64_t lo2 = dim == 3 ? -S : 0, hi2 = dim == 3 ? S : 0;
  for (off[0] = -S; off[0] <= S; ++off[0])
    for (off[1] = -S; off[1] <= S; ++off[1])
      for (off[2] = lo2; off[2] <= hi2; ++off[2]) {
        double t2 = 0;
        for (int a = 0; a < dim; ++a) t2 += (double)(off[a] * off[a]);
        const double t = g.h * std::sqrt(t2);
        if (t > support + 1e-12) continue;
        const double w = k.profile(t);
        if (w == 0.0) continue;
        int64_t idx = 0;
        for (int a = 0; a < dim; ++a) {
          const int64_t c = ((off[a] % m[a]) + m[a]) % m[a];
          idx = idx * m[a] + c;
        }
        taps[idx] = w * amp;
      }
}

// correlate the (already transformed) noise with one kernel and gather the
// interior into out
void convolve_one(const TruncatedKernel& k, const GridGeometry& g, const int64_t m[3],
                  const fftw_complex* noise_hat, int64_t total, int64_t chalf,
                  std::vector<double>& out) {
  const int dim = g.dim;
  FftwReal work(total);
  FftwCplx khat(chalf);
  fill_taps(k, g, m, work.p, total);

  int nd[3] = {(int)m[0], (int)m[1], (int)m[2]};
  fftw_plan fwd, inv;
  {
    std::lock_guard<std::mutex> lk(g_fftw_mutex);
    fwd = fftw_plan_dft_r2c(dim, nd, work.p, khat.p, FFTW_ESTIMATE);
  }
  fftw_execute(fwd);
  // multiply spectra in-place into khat, then invert
  for (int64_t i = 0; i < chalf; ++i) {
    const double ar = noise_hat[i][0], ai = noise_hat[i][1];
    const double br = khat.p[i][0], bi = khat.p[i][1];
    khat.p[i][0] = ar * br - ai * bi;
    khat.p[i][1] = ar * bi + ai * br;
  }
  {
    std::lock_guard<std::mutex> lk(g_fftw_mutex);
    fftw_destroy_plan(fwd);
    inv = fftw_plan_dft_c2r(dim, nd, khat.p, work.p, FFTW_ESTIMATE);
  }
  fftw_execute(inv);
  {
    std::lock_guard<std::mutex> lk(g_fftw_mutex);
    fftw_destroy_plan(inv);
  }

  const double scale = 1.0 / (double)total;
  const int64_t P = g.pad_nodes();
  out.resize(g.num_nodes());
  if (dim == 2) {
    for (int64_t i = 0; i < g.n[0]; ++i)
      for (int64_t j = 0; j < g.n[1]; ++j)
        out[g.lin(i, j)] = work.p[(i + P) * m[1] + (j + P)] * scale;
  } else {
    for (int64_t i = 0; i < g.n[0]; ++i)
      for (int64_t j = 0; j < g.n[1]; ++j)
        for (int64_t kk = 0; kk < g.n[2]; ++kk)
          out[g.lin(i, j, kk)] =
              work.p[((i + P) * m[1] + (j + P)) * m[2] + (kk + P)] * scale;
  }
}

}  // namespace

double required_pad(const TruncatedKernel& k, bool coupled) {
  double s = k.support_radius();
  if (coupled) s = std::max(s, k.base_support_radius());
  return s;
}

FieldSample sample_convolution(const TruncatedKernel& k, const GridGeometry& g,
                               bool coupled, uint64_t master_seed,
                               uint64_t replicate, uint64_t stream) {
  require_config(k.spec().family != KernelFamily::RandomPlaneWave,
                 "convolution sampler: plane waves have no convolution kernel; "
                 "use the plane-wave sampler");
  require_config(k.dim() == g.dim, "sampler: kernel/grid dim mismatch");
  require_config(coupled ? k.truncated() : true,
                 "sampler: coupled output needs a truncated kernel");
  const double need = required_pad(k, coupled);
  require_config(g.pad >= need - 1e-9,
                 "sampler: pad " + std::to_string(g.pad) + " < kernel support " +
                     std::to_string(need));

  const int dim = g.dim;
  const int64_t P = g.pad_nodes();
  int64_t m[3] = {1, 1, 1};
  int64_t total = 1;
  for (int a = 0; a < dim; ++a) {
    m[a] = g.n[a] + 2 * P;
    total *= m[a];
    require_config(m[a] < (int64_t)1 << 31, "sampler: axis too large for FFT");
  }
  const int64_t chalf = total / m[dim - 1] * (m[dim - 1] / 2 + 1);
  const uint64_t need_bytes =
      (uint64_t)total * 8ull * 2ull + (uint64_t)chalf * 16ull * 2ull +
      (uint64_t)g.num_nodes() * 8ull * (coupled ? 2 : 1);
  if (need_bytes > mem_budget_bytes())
    fail_resource("sampler: grid needs " + std::to_string(need_bytes) +
                  " bytes, over budget " + std::to_string(mem_budget_bytes()) +
                  " (set GFPERC_MEM_BUDGET_BYTES to raise)");

  FieldSample f;
  f.grid = g;
  f.seed = derive_seed(master_seed, replicate, stream);

  {
    FftwReal noise(total);
    FftwCplx noise_hat(chalf);
    CounterRng rng(f.seed);
    for (int64_t i = 0; i < total; ++i) noise.p[i] = rng.normal_at((uint64_t)i);

    int nd[3] = {(int)m[0], (int)m[1], (int)m[2]};
    fftw_plan fwd;
    {
      std::lock_guard<std::mutex> lk(g_fftw_mutex);
      fwd = fftw_plan_dft_r2c(dim, nd, noise.p, noise_hat.p, FFTW_ESTIMATE);
    }
    fftw_execute(fwd);
    {
      std::lock_guard<std::mutex> lk(g_fftw_mutex);
      fftw_destroy_plan(fwd);
    }

    convolve_one(k, g, m, noise_hat.p, total, chalf, f.values);
    if (coupled) {
      TruncatedKernel full(k.spec(), kInf);
      convolve_one(full, g, m, noise_hat.p, total, chalf, f.coupled);
    }
  }

  f.provenance = json{{"sampler", "convolution"},
                      {"kernel", k.to_json()},
                      {"coupled", coupled},
                      {"master_seed", master_seed},
                      {"replicate", replicate},
                      {"stream", stream}};
  return f;
}

int series_required_degree(double rho) {
  if (rho <= 0) return 0;
  const double log_tol = std::log(1e-8);
  for (int N = 0; N < 100000; ++N) {
    const double lv = rho * rho + 2.0 * N * std::log(rho) - std::lgamma(N + 1.0);
    if (lv < log_tol) return N;
  }
  fail_config("series: no admissible degree for rho = " + std::to_string(rho));
}

FieldSample sample_series2d(const GridGeometry& g, int degree_cap,
                            uint64_t master_seed, uint64_t replicate,
                            uint64_t stream) {
  require_config(g.dim == 2, "series sampler: d=2 only");
  double rho = 0;
  for (double cx : {g.lo[0], g.hi[0]})
    for (double cy : {g.lo[1], g.hi[1]}) rho = std::max(rho, std::hypot(cx, cy));
  const int need = series_required_degree(rho);
  int N = degree_cap;
  if (N < 0) N = need;
  require_config(N >= need, "series: degree cap " + std::to_string(N) +
                                " violates the tail bound; need N >= " +
                                std::to_string(need) + " for this grid");

  FieldSample f;
  f.grid = g;
  f.seed = derive_seed(master_seed, replicate, stream);
  CounterRng rng(f.seed);

  // coefficients in fixed order: total degree k ascending, i1 ascending
  std::vector<std::vector<double>> a(N + 1);
  for (int k = 0; k <= N; ++k) {
    a[k].resize(k + 1);
    for (int i1 = 0; i1 <= k; ++i1) a[k][i1] = rng.next_normal();
  }

  // per-axis tables t[p] = x^p / sqrt(p!)
  auto pow_table = [&](int axis) {
    std::vector<std::vector<double>> t((size_t)g.n[axis]);
    for (int64_t i = 0; i < g.n[axis]; ++i) {
      const double x = g.coord(axis, i);
      auto& row = t[(size_t)i];
      row.resize(N + 1);
      row[0] = 1.0;
      for (int p = 1; p <= N; ++p) row[p] = row[p - 1] * x / std::sqrt((double)p);
    }
    return t;
  };
  const auto t0 = pow_table(0), t1 = pow_table(1);

  f.values.resize(g.num_nodes());
  for (int64_t i = 0; i < g.n[0]; ++i) {
    const auto& r0 = t0[(size_t)i];
    const double x0 = g.coord(0, i);
    for (int64_t j = 0; j < g.n[1]; ++j) {
      const auto& r1 = t1[(size_t)j];
      const double x1 = g.coord(1, j);
      double s = 0;
      for (int k = 0; k <= N; ++k) {
        const auto& ak = a[k];
        double sk = 0;
        for (int i1 = 0; i1 <= k; ++i1) sk += ak[i1] * r0[i1] * r1[k - i1];
        s += sk;
      }
      f.values[g.lin(i, j)] = std::exp(-(x0 * x0 + x1 * x1) / 2.0) * s;
    }
  }

  f.provenance = json{{"sampler", "series"},
                      {"kernel", json{{"family", "bargmann_fock"}, {"dim", 2}}},
                      {"degree", N},
                      {"master_seed", master_seed},
                      {"replicate", replicate},
                      {"stream", stream}};
  return f;
}

FieldSample sample_plane_waves(const GridGeometry& g, int num_waves,
                               uint64_t master_seed, uint64_t replicate,
                               uint64_t stream) {
  require_config(num_waves > 0, "plane waves: num_waves must be positive");
  const int dim = g.dim;
  FieldSample f;
  f.grid = g;
  f.seed = derive_seed(master_seed, replicate, stream);
  CounterRng rng(f.seed);

  std::vector<std::array<double, 3>> kdir(num_waves);
  std::vector<double> phase(num_waves);
  for (int j = 0; j < num_waves; ++j) {
    if (dim == 2) {
      const double ang = rng.next_uniform(0, 2.0 * M_PI);
      kdir[j] = {std::cos(ang), std::sin(ang), 0.0};
    } else {
      const double z = rng.next_uniform(-1.0, 1.0);
      const double az = rng.next_uniform(0, 2.0 * M_PI);
      const double s = std::sqrt(std::max(0.0, 1.0 - z * z));
      kdir[j] = {s * std::cos(az), s * std::sin(az), z};
    }
    phase[j] = rng.next_uniform(0, 2.0 * M_PI);
  }

  const double amp = std::sqrt(2.0 / (double)num_waves);
  f.values.resize(g.num_nodes());
  const int64_t nn = g.num_nodes();
  for (int64_t idx = 0; idx < nn; ++idx) {
    const auto p = f.grid.node_pos(idx);
    double s = 0;
    for (int j = 0; j < num_waves; ++j) {
      double dot = 0;
      for (int a = 0; a < dim; ++a) dot += kdir[j][a] * p[a];
      s += std::cos(dot + phase[j]);
    }
    f.values[idx] = amp * s;
  }

  f.provenance = json{{"sampler", "plane_waves"},
                      {"kernel", json{{"family", "random_plane_wave"}, {"dim", dim}}},
                      {"num_waves", num_waves},
                      {"master_seed", master_seed},
                      {"replicate", replicate},
                      {"stream", stream}};
  return f;
}

}  // namespace gfp
