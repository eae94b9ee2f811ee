#pragma once

#include <cmath>
#include <vector>

#include "common.hpp"

namespace gfp {

enum class KernelFamily { BargmannFock, CustomRadialTable, RandomPlaneWave };

std::string family_name(KernelFamily f);
KernelFamily family_from_name(const std::string& s);

struct KernelSpec {
  KernelFamily family = KernelFamily::BargmannFock;
  int dim = 2;
  double beta = kInf;  // decay exponent of the envelope; inf for Bargmann-Fock
  std::vector<double> table_t, table_q;  // CustomRadialTable profile samples

  json to_json() const;
  static KernelSpec from_json(const json& j);
};

// C^2 quintic smoothstep, s(0)=0, s(1)=1
double smoothstep_c2(double u);
// radial cutoff: 1 for t <= r/2 - 1/4, 0 for t >= r/2
double chi_r(double t, double r);

// q_r = q * chi_r.  r = inf means untruncated (cut numerically where q < 1e-15).
class TruncatedKernel {
 public:
  TruncatedKernel(KernelSpec spec, double r);

  const KernelSpec& spec() const { return spec_; }
  int dim() const { return spec_.dim; }
  double r() const { return r_; }
  bool truncated() const { return std::isfinite(r_); }

  double base_profile(double t) const;  // q(t)
  double profile(double t) const;       // q_r(t)
  double profile_d1(double t) const;
  double profile_d2(double t) const;

  double support_radius() const { return support_; }       // where q_r vanishes
  double base_support_radius() const { return base_support_; }
  double r_q() const { return rq_; }

  json to_json() const;

 private:
  KernelSpec spec_;
  double r_;
  double rq_;
  double support_;
  double base_support_;
};

TruncatedKernel make_kernel(const KernelSpec& spec, double r);

// covariance of the sampled field at a given lag: (q_r * q_r)(lag).
// Closed forms where available (untruncated Bargmann-Fock: exp(-lag^2/2);
// plane waves d=2: J0, d=3: sin(lag)/lag), radial quadrature otherwise.
double covariance(const TruncatedKernel& k, double lag);
// always-quadrature route (used to cross-check the closed forms)
double covariance_quadrature(const TruncatedKernel& k, double lag);

// int (q - q_r)^2 over R^dim: the stationary variance of f - f_r.
double l2_gap_sq(const TruncatedKernel& k);

struct SpectralMoments {
  double lambda2;  // Var d1 f = int (d1 q_r)^2
  double lambda4;  // Var d11 f = int (d11 q_r)^2
};
// d=2 only; smooth families only (Bargmann-Fock)
SpectralMoments spectral_moments_2d(const TruncatedKernel& k);

// Expected number of critical points in/around the unit disk dominating the
// count of excursion components meeting D(0,1):
//   2*sqrt((l4+l2)/l2)   (boundary circle)  +  2*l4/(3*sqrt(3)*l2)  (interior)
double kac_rice_component_bound(const SpectralMoments& m);

// Gauss-Legendre nodes/weights on [a,b]
void gauss_legendre(int n, double a, double b, std::vector<double>& x,
                    std::vector<double>& w);

}  // namespace gfp
