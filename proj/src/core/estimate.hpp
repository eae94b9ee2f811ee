#pragma once

#include <functional>
#include <memory>
#include <utility>

#include "events.hpp"
#include "sampler.hpp"

namespace gfp {

inline constexpr double kZ95 = 1.959963984540054;  // two-sided 95%

// Wilson score interval for k successes out of n
std::pair<double, double> wilson_interval(int64_t successes, int64_t n);

struct Estimate {
  double p_hat = 0, ci_lo = 0, ci_hi = 1;
  int64_t n = 0;
  uint64_t seed = 0;
  double wall_ms = 0;
  bool binary = true;
  std::vector<double> values;  // indexed by replicate
};

// One sampling configuration, reusable across replicates.  A replicate field
// is a pure function of (config, master_seed, replicate).
struct SamplerConfig {
  json cfg;  // normalized, defaults filled
  std::string kind = "convolution";
  int dim = 0;  // 0 = synthetic null sampler (field ignored by detector)
  GridGeometry grid;
  std::shared_ptr<const TruncatedKernel> kernel;  // convolution only
  bool coupled = false;
  int degree_cap = 0;  // series
  int num_waves = 0;   // plane_wave

  static SamplerConfig parse(const json& j);
  FieldSample sample(uint64_t master_seed, int64_t replicate) const;
  // rough per-replicate working-set estimate, for worker throttling
  int64_t approx_bytes_per_sample() const;
};

// worker count: explicit > GFPERC_WORKERS > hardware concurrency
int resolve_workers(int requested = 0);

using ProgressFn = std::function<void(int64_t done, int64_t total)>;

// n replicates of each detector on shared samples; values stored by
// replicate index so the output is identical for any worker count
std::vector<Estimate> run_mc_multi(const std::vector<const Detector*>& dets,
                                   const SamplerConfig& sampler, int64_t n,
                                   uint64_t master_seed, int workers,
                                   const ProgressFn& progress = {});
Estimate run_mc(const Detector& det, const SamplerConfig& sampler, int64_t n,
                uint64_t master_seed, int workers,
                const ProgressFn& progress = {});

// fixed-order reduction of per-replicate values into an Estimate; the single
// code path shared by run_mc and the resumable run-directory engine
Estimate reduce_values(std::vector<double> values, uint64_t master_seed,
                       double wall_ms);

struct LevelCurve {
  std::vector<double> levels;
  std::vector<Estimate> estimates;
  bool common_rng = true;
  bool monotone_checked = false;  // monotone detector family + common RNG
  bool per_realization_monotone = true;
};
// detector_cfg is the family; each level overrides its "level" field
LevelCurve sweep_levels(const json& detector_cfg, const SamplerConfig& sampler,
                        std::vector<double> levels, int64_t n,
                        uint64_t master_seed, int workers,
                        bool common_rng = true,
                        const ProgressFn& progress = {});

struct BisectionResult {
  double l_hat = 0, lo = 0, hi = 0, target = 0.5;
  int iterations = 0;
  int64_t n_final = 0;
  std::vector<std::pair<double, Estimate>> steps;
};
// requires p_hat(lo) > target > p_hat(hi); doubles n (up to n_cap) whenever
// the step CI straddles the target
BisectionResult bisect_level(const json& detector_cfg,
                             const SamplerConfig& sampler, double target,
                             double lo, double hi, double tol_level, int64_t n0,
                             uint64_t master_seed, int workers,
                             int64_t n_cap = 1 << 20,
                             const ProgressFn& progress = {});

struct FkgResult {
  double cov = 0, se = 0, ci_lo = 0, ci_hi = 0;
  double p_a = 0, p_b = 0;
  int64_t n = 0;
  bool pass = true;  // cov >= -3 se
};
// both detectors must be increasing; evaluated on shared replicates
FkgResult fkg_check(const json& detA, const json& detB,
                    const SamplerConfig& sampler, int64_t n,
                    uint64_t master_seed, int workers);

struct SprinklingResult {
  double t = 0;
  double p_base = 0, p_shift = 0;  // at level l and l - t, same replicates
  double diff = 0, diff_se = 0;    // p_shift - p_base (>= 0 per realization)
  int64_t n = 0;
};
SprinklingResult sprinkling_check(const json& detector_cfg,
                                  const SamplerConfig& sampler, double t,
                                  int64_t n, uint64_t master_seed, int workers);

struct TruncationRow {
  double r = 0;
  double median = 0, q95 = 0;
  double sigma_r = 0;     // stationary sd of f - f_r (quadrature)
  double threshold = 0;   // Gaussian sup-norm budget at 5%
  double exceed = 0;      // fraction of replicates above threshold
  bool exact_zero = false;
};
// coupled samples over the box [-box_radius, box_radius]^dim; sup-norms taken
// over nodes in the Euclidean ball of that radius
std::vector<TruncationRow> truncation_check(const KernelSpec& base,
                                            double box_radius,
                                            const std::vector<double>& radii,
                                            double h, int64_t n,
                                            uint64_t master_seed, int workers);

struct KacRiceResult {
  double mc_mean = 0, mc_se = 0;
  double bound = 0;  // numeric Kac-Rice critical-point bound
  int64_t n = 0;
  bool pass = true;  // mc_mean <= bound + 3 se
};
// mean count of excursion components meeting D(0,1), field sampled on
// [-6,6]^2, against the critical-point bound from the spectral moments
KacRiceResult kac_rice_check(const KernelSpec& spec, double r, double level,
                             int64_t n, uint64_t master_seed, int workers);

}  // namespace gfp
