#pragma once

#include <stdexcept>
#include <string>

namespace gasrotor {

// Every failure surfaced to callers carries a stable machine-readable code and,
// where it applies, a field path into the offending document ("elements[2].L_m").
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message, std::string path = {})
      : std::runtime_error(message), code_(std::move(code)), path_(std::move(path)) {}

  const std::string& code() const noexcept { return code_; }
  const std::string& path() const noexcept { return path_; }

 private:
  std::string code_;
  std::string path_;
};

namespace errc {
inline constexpr const char* parse_error = "parse_error";
inline constexpr const char* invalid_rotor = "invalid_rotor";
inline constexpr const char* unknown_material = "unknown_material";
inline constexpr const char* unknown_fluid = "unknown_fluid";
inline constexpr const char* out_of_range = "out_of_range";
inline constexpr const char* invalid_argument = "invalid_argument";
inline constexpr const char* nonconvergence = "nonconvergence";
inline constexpr const char* singular_system = "singular_system";
inline constexpr const char* eigen_failure = "eigen_failure";
inline constexpr const char* mode_tracking = "mode_tracking";
inline constexpr const char* divergence = "divergence";
inline constexpr const char* model_version = "model_version";
inline constexpr const char* model_digest = "model_digest";
inline constexpr const char* model_truncated = "model_truncated";
inline constexpr const char* no_model = "no_model";
inline constexpr const char* timeout = "timeout";
inline constexpr const char* io_error = "io_error";
}  // namespace errc

}  // namespace gasrotor
