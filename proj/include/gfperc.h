/* gfperc: Gaussian-field percolation laboratory, C API.
 *
 * All functions return a gfp_status; every non-OK status leaves a
 * human-readable message in gfp_last_error() (thread-local).  JSON strings
 * configure kernels, samplers, detectors and whole runs; the schemas match
 * the CLI configuration format documented in the README.
 */
#ifndef GFPERC_H
#define GFPERC_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define GFP_API __declspec(dllexport)
#else
#define GFP_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum gfp_status {
  GFP_OK = 0,
  GFP_E_CONFIG = 2,   /* invalid configuration / arguments */
  GFP_E_RESOURCE = 3, /* memory budget or size limits exceeded */
  GFP_E_GATE = 4,     /* a validation gate failed */
  GFP_E_RUNTIME = 5   /* internal error */
} gfp_status;

typedef struct gfp_kernel gfp_kernel;
typedef struct gfp_field gfp_field;

GFP_API const char* gfp_version(void);

/* Message for the most recent failure on this thread ("" if none). */
GFP_API const char* gfp_last_error(void);

/* ---- kernels ----------------------------------------------------------- */

/* spec_json: {"family":"bargmann_fock","dim":2} with optional "beta",
 * "table" (custom radial families) and "r" (truncation radius; omit or null
 * for the untruncated kernel). */
GFP_API gfp_status gfp_kernel_create(const char* spec_json, gfp_kernel** out);
GFP_API void gfp_kernel_free(gfp_kernel* k);

/* q_r(|x| = radius) */
GFP_API gfp_status gfp_kernel_profile(const gfp_kernel* k, double radius,
                                      double* out);
/* (q_r * q_r)(lag e1) */
GFP_API gfp_status gfp_kernel_covariance(const gfp_kernel* k, double lag,
                                         double* out);
/* support radius of q_r (effective radius for untruncated kernels) */
GFP_API gfp_status gfp_kernel_support(const gfp_kernel* k, double* out);

/* ---- field samples ------------------------------------------------------ */

/* sampler_json as in the CLI ("kind","kernel","box","h","r","coupled",...);
 * the replicate field is a pure function of (config, master_seed, replicate). */
GFP_API gfp_status gfp_sample(const char* sampler_json, uint64_t master_seed,
                              uint64_t replicate, gfp_field** out);
GFP_API void gfp_field_free(gfp_field* f);

GFP_API gfp_status gfp_field_save(const gfp_field* f, const char* path);
GFP_API gfp_status gfp_field_load(const char* path, gfp_field** out);

GFP_API gfp_status gfp_field_dim(const gfp_field* f, int* out);
GFP_API gfp_status gfp_field_num_nodes(const gfp_field* f, int64_t* out);
/* borrowed pointer, valid until gfp_field_free */
GFP_API gfp_status gfp_field_values(const gfp_field* f, const double** data,
                                    int64_t* count);
/* untruncated partner of a coupled sample; GFP_E_CONFIG if absent */
GFP_API gfp_status gfp_field_coupled(const gfp_field* f, const double** data,
                                     int64_t* count);

/* ---- detectors ---------------------------------------------------------- */

/* detector_json: {"name":"crossing","level":0,"R":10,...}; the result is the
 * detector value on this sample (0/1 for events, a count for counters). */
GFP_API gfp_status gfp_detector_eval(const char* detector_json,
                                     const gfp_field* f, double* out);

/* ---- whole runs ---------------------------------------------------------- */

/* Executes one command config (sample/estimate/sweep/bisect/validate/
 * renorm/resume).  *summary_json receives a malloc'd JSON summary (free with
 * gfp_free_string); it is written for gate failures too.  The status mirrors
 * the CLI exit code. */
GFP_API gfp_status gfp_run(const char* config_json, char** summary_json);

GFP_API void gfp_free_string(char* s);

#ifdef __cplusplus
}
#endif

#endif /* GFPERC_H */
