#pragma once

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

#include <json.hpp>

namespace gfp {

using json = nlohmann::json;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Error taxonomy mirrors the process exit codes: config=2, resource=3, gate=4.
enum class ErrorKind { Config = 2, Resource = 3, Gate = 4, Runtime = 5 };

struct Error : std::runtime_error {
  ErrorKind kind;
  Error(ErrorKind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
};

[[noreturn]] inline void fail_config(const std::string& msg) {
  throw Error(ErrorKind::Config, msg);
}
[[noreturn]] inline void fail_resource(const std::string& msg) {
  throw Error(ErrorKind::Resource, msg);
}
[[noreturn]] inline void fail_gate(const std::string& msg) {
  throw Error(ErrorKind::Gate, msg);
}
[[noreturn]] inline void fail_runtime(const std::string& msg) {
  throw Error(ErrorKind::Runtime, msg);
}

inline void require_config(bool ok, const std::string& msg) {
  if (!ok) fail_config(msg);
}

}  // namespace gfp
