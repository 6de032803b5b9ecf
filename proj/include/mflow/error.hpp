#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace mflow {

/// Library error with a stable machine-readable code (used by the CLI to
/// emit error JSON) and an optional field name for config errors.
class Error : public std::runtime_error {
public:
  Error(std::string code, const std::string& what, std::string field = "")
      : std::runtime_error(what), code_(std::move(code)), field_(std::move(field)) {}

  const std::string& code() const { return code_; }
  const std::string& field() const { return field_; }

private:
  std::string code_;
  std::string field_;
};

namespace errc {
inline constexpr const char* config_missing = "CONFIG_MISSING";
inline constexpr const char* config_invalid = "CONFIG_INVALID";
inline constexpr const char* bad_magic = "BAD_MAGIC";
inline constexpr const char* not_psd = "NOT_PSD";
inline constexpr const char* not_skew = "NOT_SKEW";
inline constexpr const char* not_symmetric = "NOT_SYMMETRIC";
inline constexpr const char* domain = "DOMAIN";
inline constexpr const char* dimension = "DIMENSION";
inline constexpr const char* underflow = "UNDERFLOW";
inline constexpr const char* assumption = "ASSUMPTION_VIOLATION";
inline constexpr const char* nonfinite = "NONFINITE";
inline constexpr const char* io = "IO";
inline constexpr const char* unknown_time = "UNKNOWN_TIME";
inline constexpr const char* unsupported = "UNSUPPORTED";
}  // namespace errc

}  // namespace mflow
