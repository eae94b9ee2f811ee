#pragma once

#include <string>

#include "estimate.hpp"
#include "renorm.hpp"

namespace gfp {

// Hash of the semantic config content (workers/output paths excluded, so a
// resumed run may change them without invalidating the record).
std::string config_hash_hex(json cfg);

// Executes one command config and returns its summary object.  Commands:
// sample, estimate, sweep, bisect, validate, renorm, resume.  Throws Error
// on config/resource/runtime problems; gate outcomes are returned in the
// summary under "gate_pass".
json run_config(const json& cfg);

// Error-catching wrapper mapping to process exit codes: 0 ok, 2 config,
// 3 resource, 4 gate failure, 5 internal.
int run_config_catching(const json& cfg, json* summary);

// CSV plumbing (shared with tests)
extern const char* kEstimateCsvHeader;
std::string csv_quote(const std::string& s);
std::string csv_number(const json& v);
std::string estimate_csv_row(const json& detector_cfg, const json& sampler_cfg,
                             const Estimate& e);

json load_json_file(const std::string& path);

}  // namespace gfp
