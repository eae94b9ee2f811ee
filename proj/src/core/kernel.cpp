#include "kernel.hpp"

#include <algorithm>
#include <cmath>

namespace gfp {

std::string family_name(KernelFamily f) {
  switch (f) {
    case KernelFamily::BargmannFock: return "bargmann_fock";
    case KernelFamily::CustomRadialTable: return "custom_radial_table";
    case KernelFamily::RandomPlaneWave: return "random_plane_wave";
  }
  return "?";
}

KernelFamily family_from_name(const std::string& s) {
  if (s == "bargmann_fock" || s == "bf") return KernelFamily::BargmannFock;
  if (s == "custom_radial_table" || s == "table") return KernelFamily::CustomRadialTable;
  if (s == "random_plane_wave" || s == "rpw") return KernelFamily::RandomPlaneWave;
  fail_config("unknown kernel family: " + s);
}

json KernelSpec::to_json() const {
  json j{{"family", family_name(family)}, {"dim", dim}};
  j["beta"] = std::isfinite(beta) ? json(beta) : json();
  if (!table_t.empty()) {
    json tb = json::array();
    for (size_t i = 0; i < table_t.size(); ++i) tb.push_back({table_t[i], table_q[i]});
    j["table"] = tb;
  }
  return j;
}

KernelSpec KernelSpec::from_json(const json& j) {
  KernelSpec s;
  s.family = family_from_name(j.value("family", std::string("bargmann_fock")));
  s.dim = j.value("dim", 2);
  require_config(s.dim == 2 || s.dim == 3, "kernel.dim: must be 2 or 3");
  if (j.contains("beta") && !j["beta"].is_null()) s.beta = j["beta"].get<double>();
  if (j.contains("table") && !j["table"].is_null()) {
    for (const auto& row : j["table"]) {
      require_config(row.is_array() && row.size() == 2, "kernel.table: rows are [t,q]");
      s.table_t.push_back(row[0].get<double>());
      s.table_q.push_back(row[1].get<double>());
    }
  }
  return s;
}

double smoothstep_c2(double u) {
  if (u <= 0) return 0;
  if (u >= 1) return 1;
  return u * u * u * (10.0 + u * (-15.0 + 6.0 * u));
}

double chi_r(double t, double r) {
  // transition band [r/2 - 1/4, r/2], width 1/4
  return smoothstep_c2((r / 2.0 - t) * 4.0);
}

namespace {

double smoothstep_c2_d1(double u) {
  if (u <= 0 || u >= 1) return 0;
  return u * u * (30.0 + u * (-60.0 + 30.0 * u));
}
double smoothstep_c2_d2(double u) {
  if (u <= 0 || u >= 1) return 0;
  return u * (60.0 + u * (-180.0 + 120.0 * u));
}

double bf_amp(int dim) { return std::pow(2.0 / M_PI, dim / 4.0); }

// effective support: first t with q(t) < 1e-15
double solve_base_support(const KernelSpec& s) {
  if (s.family == KernelFamily::BargmannFock) {
    // (2/pi)^(d/4) exp(-t^2) = 1e-15
    return std::sqrt(std::log(bf_amp(s.dim) / 1e-15));
  }
  if (s.family == KernelFamily::CustomRadialTable) return s.table_t.back();
  return kInf;  // plane waves: no convolution profile
}

double first_positive_radius(const KernelSpec& s) {
  if (s.family == KernelFamily::BargmannFock) return 0.0;
  for (size_t i = 0; i < s.table_t.size(); ++i)
    if (s.table_q[i] > 0) return s.table_t[i];
  return kInf;
}

// Catmull-Rom interpolation of the radial table, clamped ends
double table_eval(const std::vector<double>& ts, const std::vector<double>& qs, double t) {
  if (t <= ts.front()) return qs.front();
  if (t >= ts.back()) return 0.0;
  size_t hi = (size_t)(std::upper_bound(ts.begin(), ts.end(), t) - ts.begin());
  size_t lo = hi - 1;
  const double t0 = ts[lo], t1 = ts[hi];
  const double u = (t - t0) / (t1 - t0);
  const double p1 = qs[lo], p2 = qs[hi];
  const double p0 = lo > 0 ? qs[lo - 1] : p1;
  const double p3 = hi + 1 < qs.size() ? qs[hi + 1] : p2;
  const double m1 = 0.5 * (p2 - p0), m2 = 0.5 * (p3 - p1);
  const double u2 = u * u, u3 = u2 * u;
  double v = (2 * u3 - 3 * u2 + 1) * p1 + (u3 - 2 * u2 + u) * m1 +
             (-2 * u3 + 3 * u2) * p2 + (u3 - u2) * m2;
  return v > 0 ? v : 0.0;
}

}  // namespace

TruncatedKernel::TruncatedKernel(KernelSpec spec, double r) : spec_(spec), r_(r) {
  require_config(spec_.dim == 2 || spec_.dim == 3, "kernel: dim must be 2 or 3");
  switch (spec_.family) {
    case KernelFamily::BargmannFock:
      require_config(!std::isfinite(spec_.beta),
                     "kernel: bargmann_fock has super-polynomial decay; leave beta unset");
      require_config(spec_.table_t.empty(), "kernel: bargmann_fock takes no table");
      break;
    case KernelFamily::CustomRadialTable: {
      require_config(spec_.table_t.size() >= 2, "kernel.table: need at least 2 samples");
      require_config(spec_.table_t.size() == spec_.table_q.size(), "kernel.table: ragged");
      require_config(std::isfinite(spec_.beta) && spec_.beta > spec_.dim,
                     "kernel.beta: finite beta > dim required for a radial table");
      double prev = -1;
      bool any_pos = false;
      for (size_t i = 0; i < spec_.table_t.size(); ++i) {
        require_config(spec_.table_t[i] > prev, "kernel.table: radii must increase");
        require_config(spec_.table_q[i] >= 0, "kernel.table: profile must be nonnegative");
        prev = spec_.table_t[i];
        any_pos = any_pos || spec_.table_q[i] > 0;
      }
      require_config(spec_.table_t.front() >= 0, "kernel.table: radii must be >= 0");
      require_config(any_pos, "kernel.table: profile is identically zero");
      break;
    }
    case KernelFamily::RandomPlaneWave:
      require_config(!std::isfinite(r_),
                     "kernel: random_plane_wave does not support truncation "
                     "(no compactly supported convolution representation)");
      break;
  }
  const double s0 = first_positive_radius(spec_);
  rq_ = std::isfinite(s0) ? std::max(1.0, 2.0 * s0) + 1.0 : kInf;
  base_support_ = solve_base_support(spec_);
  if (std::isfinite(r_)) {
    require_config(r_ >= rq_, "kernel: invalid truncation, r < r_q (r_q = " +
                                  std::to_string(rq_) + ")");
    support_ = std::min(r_ / 2.0, base_support_);
  } else {
    support_ = base_support_;
  }
}

double TruncatedKernel::base_profile(double t) const {
  switch (spec_.family) {
    case KernelFamily::BargmannFock: return bf_amp(spec_.dim) * std::exp(-t * t);
    case KernelFamily::CustomRadialTable:
      return table_eval(spec_.table_t, spec_.table_q, t);
    case KernelFamily::RandomPlaneWave:
      fail_config("plane-wave model has no convolution kernel profile");
  }
  return 0;
}

double TruncatedKernel::profile(double t) const {
  const double q = base_profile(t);
  return truncated() ? q * chi_r(t, r_) : q;
}

double TruncatedKernel::profile_d1(double t) const {
  require_config(spec_.family == KernelFamily::BargmannFock,
                 "kernel derivatives: smooth families only");
  const double q = bf_amp(spec_.dim) * std::exp(-t * t);
  const double dq = -2.0 * t * q;
  if (!truncated()) return dq;
  const double u = (r_ / 2.0 - t) * 4.0;
  const double c = smoothstep_c2(u);
  const double dc = -4.0 * smoothstep_c2_d1(u);
  return dq * c + q * dc;
}

double TruncatedKernel::profile_d2(double t) const {
  require_config(spec_.family == KernelFamily::BargmannFock,
                 "kernel derivatives: smooth families only");
  const double q = bf_amp(spec_.dim) * std::exp(-t * t);
  const double dq = -2.0 * t * q;
  const double d2q = (4.0 * t * t - 2.0) * q;
  if (!truncated()) return d2q;
  const double u = (r_ / 2.0 - t) * 4.0;
  const double c = smoothstep_c2(u);
  const double dc = -4.0 * smoothstep_c2_d1(u);
  const double d2c = 16.0 * smoothstep_c2_d2(u);
  return d2q * c + 2.0 * dq * dc + q * d2c;
}

json TruncatedKernel::to_json() const {
  json j = spec_.to_json();
  j["r"] = truncated() ? json(r_) : json();
  j["profile"] = "smoothstep_c2_quintic";
  return j;
}

TruncatedKernel make_kernel(const KernelSpec& spec, double r) {
  return TruncatedKernel(spec, r);
}

void gauss_legendre(int n, double a, double b, std::vector<double>& x,
                    std::vector<double>& w) {
  x.resize(n);
  w.resize(n);
  const int m = (n + 1) / 2;
  for (int i = 0; i < m; ++i) {
    double z = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    double pp = 0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = 0.0;
      for (int j = 0; j < n; ++j) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j + 1.0) * z * p1 - j * p2) / (j + 1.0);
      }
      pp = n * (z * p0 - p1) / (z * z - 1.0);
      const double dz = p0 / pp;
      z -= dz;
      if (std::abs(dz) < 1e-15) break;
    }
    const double xm = 0.5 * (b + a), xl = 0.5 * (b - a);
    x[i] = xm - xl * z;
    x[n - 1 - i] = xm + xl * z;
    w[i] = 2.0 * xl / ((1.0 - z * z) * pp * pp);
    w[n - 1 - i] = w[i];
  }
}

namespace {

// integrate f over [a,b] split at the cutoff kinks, 96-pt GL per piece
template <class F>
double integrate_radial(const TruncatedKernel& k, double a, double b, F&& f) {
  std::vector<double> cuts{a, b};
  if (k.truncated()) {
    for (double c : {k.r() / 2.0 - 0.25, k.r() / 2.0})
      if (c > a && c < b) cuts.push_back(c);
  }
  std::sort(cuts.begin(), cuts.end());
  double total = 0;
  std::vector<double> x, w;
  for (size_t p = 0; p + 1 < cuts.size(); ++p) {
    gauss_legendre(96, cuts[p], cuts[p + 1], x, w);
    for (size_t i = 0; i < x.size(); ++i) total += w[i] * f(x[i]);
  }
  return total;
}

}  // namespace

double covariance_quadrature(const TruncatedKernel& k, double lag) {
  require_config(lag >= 0, "covariance: lag must be >= 0");
  require_config(k.spec().family != KernelFamily::RandomPlaneWave,
                 "covariance quadrature: convolution families only");
  const double S = k.support_radius();
  std::vector<double> xa, wa;
  if (k.dim() == 2) {
    gauss_legendre(128, 0.0, M_PI, xa, wa);
    return integrate_radial(k, 0.0, S, [&](double s) {
      double inner = 0;
      for (size_t i = 0; i < xa.size(); ++i) {
        const double d = std::sqrt(std::max(
            0.0, s * s + lag * lag - 2.0 * s * lag * std::cos(xa[i])));
        inner += wa[i] * k.profile(d);
      }
      return 2.0 * s * k.profile(s) * inner;
    });
  }
  gauss_legendre(128, -1.0, 1.0, xa, wa);
  return integrate_radial(k, 0.0, S, [&](double s) {
    double inner = 0;
    for (size_t i = 0; i < xa.size(); ++i) {
      const double d =
          std::sqrt(std::max(0.0, s * s + lag * lag - 2.0 * s * lag * xa[i]));
      inner += wa[i] * k.profile(d);
    }
    return 2.0 * M_PI * s * s * k.profile(s) * inner;
  });
}

double covariance(const TruncatedKernel& k, double lag) {
  require_config(lag >= 0, "covariance: lag must be >= 0");
  if (k.spec().family == KernelFamily::RandomPlaneWave) {
    if (k.dim() == 2) return std::cyl_bessel_j(0.0, lag);
    return lag == 0 ? 1.0 : std::sin(lag) / lag;
  }
  if (k.spec().family == KernelFamily::BargmannFock && !k.truncated())
    return std::exp(-lag * lag / 2.0);
  return covariance_quadrature(k, lag);
}

double l2_gap_sq(const TruncatedKernel& k) {
  require_config(k.spec().family != KernelFamily::RandomPlaneWave,
                 "l2 gap: convolution families only");
  if (!k.truncated()) return 0.0;
  const double lo = std::max(0.0, k.r() / 2.0 - 0.25);
  const double hi = k.base_support_radius();
  if (hi <= lo) return 0.0;
  const double sphere = k.dim() == 2 ? 2.0 * M_PI : 4.0 * M_PI;
  std::vector<double> x, w;
  gauss_legendre(256, lo, hi, x, w);
  double total = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    const double diff = k.base_profile(x[i]) - k.profile(x[i]);
    const double jac = k.dim() == 2 ? x[i] : x[i] * x[i];
    total += w[i] * diff * diff * sphere * jac;
  }
  return total;
}

SpectralMoments spectral_moments_2d(const TruncatedKernel& k) {
  require_config(k.dim() == 2, "spectral moments: d=2 only");
  const double S = k.support_radius();
  SpectralMoments m;
  m.lambda2 = integrate_radial(k, 1e-12, S, [&](double t) {
    const double g1 = k.profile_d1(t);
    return M_PI * g1 * g1 * t;
  });
  m.lambda4 = integrate_radial(k, 1e-12, S, [&](double t) {
    const double g1 = k.profile_d1(t);
    const double g2 = k.profile_d2(t);
    const double a = g1 / t;
    return t * (0.75 * M_PI * g2 * g2 + 0.5 * M_PI * g2 * a + 0.75 * M_PI * a * a);
  });
  return m;
}

double kac_rice_component_bound(const SpectralMoments& m) {
  return 2.0 * std::sqrt((m.lambda4 + m.lambda2) / m.lambda2) +
         2.0 * m.lambda4 / (3.0 * std::sqrt(3.0) * m.lambda2);
}

}  // namespace gfp
