#include "gfperc.h"

#include <cstdlib>
#include <cstring>
#include <string>

#include "core/engine.hpp"
#include "core/kernel.hpp"

namespace {

thread_local std::string g_last_error;

gfp_status set_error(const gfp::Error& e) {
  g_last_error = e.what();
  switch (e.kind) {
    case gfp::ErrorKind::Config: return GFP_E_CONFIG;
    case gfp::ErrorKind::Resource: return GFP_E_RESOURCE;
    case gfp::ErrorKind::Gate: return GFP_E_GATE;
    default: return GFP_E_RUNTIME;
  }
}

template <typename Fn>
gfp_status guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return GFP_OK;
  } catch (const gfp::Error& e) {
    return set_error(e);
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return GFP_E_RUNTIME;
  } catch (...) {
    g_last_error = "unknown error";
    return GFP_E_RUNTIME;
  }
}

gfp_status bad_arg(const char* msg) {
  g_last_error = msg;
  return GFP_E_CONFIG;
}

gfp::json parse_json_arg(const char* s, const char* what) {
  if (!s) gfp::fail_config(std::string(what) + ": null pointer");
  gfp::json j = gfp::json::parse(s, nullptr, false);
  if (j.is_discarded())
    gfp::fail_config(std::string(what) + ": malformed JSON");
  return j;
}

char* dup_string(const std::string& s) {
  char* out = (char*)std::malloc(s.size() + 1);
  if (out) std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

}  // namespace

struct gfp_kernel {
  gfp::TruncatedKernel k;
};

struct gfp_field {
  gfp::FieldSample f;
};

extern "C" {

const char* gfp_version(void) { return "0.1.0"; }

const char* gfp_last_error(void) { return g_last_error.c_str(); }

gfp_status gfp_kernel_create(const char* spec_json, gfp_kernel** out) {
  if (!out) return bad_arg("gfp_kernel_create: out is null");
  *out = nullptr;
  return guarded([&] {
    const gfp::json j = parse_json_arg(spec_json, "kernel spec");
    const gfp::KernelSpec spec = gfp::KernelSpec::from_json(j);
    double r = gfp::kInf;
    if (j.contains("r") && !j.at("r").is_null()) r = j.at("r").get<double>();
    *out = new gfp_kernel{gfp::TruncatedKernel(spec, r)};
  });
}

void gfp_kernel_free(gfp_kernel* k) { delete k; }

gfp_status gfp_kernel_profile(const gfp_kernel* k, double radius, double* out) {
  if (!k || !out) return bad_arg("gfp_kernel_profile: null argument");
  return guarded([&] { *out = k->k.profile(radius); });
}

gfp_status gfp_kernel_covariance(const gfp_kernel* k, double lag, double* out) {
  if (!k || !out) return bad_arg("gfp_kernel_covariance: null argument");
  return guarded([&] { *out = gfp::covariance(k->k, lag); });
}

gfp_status gfp_kernel_support(const gfp_kernel* k, double* out) {
  if (!k || !out) return bad_arg("gfp_kernel_support: null argument");
  return guarded([&] { *out = k->k.support_radius(); });
}

gfp_status gfp_sample(const char* sampler_json, uint64_t master_seed,
                      uint64_t replicate, gfp_field** out) {
  if (!out) return bad_arg("gfp_sample: out is null");
  *out = nullptr;
  return guarded([&] {
    const gfp::json j = parse_json_arg(sampler_json, "sampler config");
    const gfp::SamplerConfig sc = gfp::SamplerConfig::parse(j);
    *out = new gfp_field{sc.sample(master_seed, (int64_t)replicate)};
  });
}

void gfp_field_free(gfp_field* f) { delete f; }

gfp_status gfp_field_save(const gfp_field* f, const char* path) {
  if (!f || !path) return bad_arg("gfp_field_save: null argument");
  return guarded([&] { gfp::save_fgrid(path, f->f); });
}

gfp_status gfp_field_load(const char* path, gfp_field** out) {
  if (!path || !out) return bad_arg("gfp_field_load: null argument");
  *out = nullptr;
  return guarded([&] { *out = new gfp_field{gfp::load_fgrid(path)}; });
}

gfp_status gfp_field_dim(const gfp_field* f, int* out) {
  if (!f || !out) return bad_arg("gfp_field_dim: null argument");
  *out = f->f.grid.dim;
  return GFP_OK;
}

gfp_status gfp_field_num_nodes(const gfp_field* f, int64_t* out) {
  if (!f || !out) return bad_arg("gfp_field_num_nodes: null argument");
  *out = f->f.grid.num_nodes();
  return GFP_OK;
}

gfp_status gfp_field_values(const gfp_field* f, const double** data,
                            int64_t* count) {
  if (!f || !data || !count) return bad_arg("gfp_field_values: null argument");
  *data = f->f.values.data();
  *count = (int64_t)f->f.values.size();
  return GFP_OK;
}

gfp_status gfp_field_coupled(const gfp_field* f, const double** data,
                             int64_t* count) {
  if (!f || !data || !count) return bad_arg("gfp_field_coupled: null argument");
  if (!f->f.has_coupled())
    return bad_arg("gfp_field_coupled: sample has no coupled partner");
  *data = f->f.coupled.data();
  *count = (int64_t)f->f.coupled.size();
  return GFP_OK;
}

gfp_status gfp_detector_eval(const char* detector_json, const gfp_field* f,
                             double* out) {
  if (!f || !out) return bad_arg("gfp_detector_eval: null argument");
  return guarded([&] {
    const gfp::json j = parse_json_arg(detector_json, "detector config");
    const auto det = gfp::make_detector(j);
    *out = det->evaluate(f->f);
  });
}

gfp_status gfp_run(const char* config_json, char** summary_json) {
  if (summary_json) *summary_json = nullptr;
  gfp::json cfg;
  try {
    cfg = parse_json_arg(config_json, "run config");
  } catch (const gfp::Error& e) {
    return set_error(e);
  }
  gfp::json summary;
  const int code = gfp::run_config_catching(cfg, &summary);
  if (summary_json) *summary_json = dup_string(summary.dump(2));
  if (code == 0) {
    g_last_error.clear();
    return GFP_OK;
  }
  g_last_error = summary.value("error", std::string("gate failed"));
  switch (code) {
    case 2: return GFP_E_CONFIG;
    case 3: return GFP_E_RESOURCE;
    case 4: return GFP_E_GATE;
    default: return GFP_E_RUNTIME;
  }
}

void gfp_free_string(char* s) { std::free(s); }

}  // extern "C"
