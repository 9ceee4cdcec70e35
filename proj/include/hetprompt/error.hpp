#pragma once

#include <iostream>
#include <stdexcept>
#include <string>
#include <string_view>

namespace hetprompt {

enum class ErrorCode {
  io = 1,
  missing_artifact = 2,
  validation = 3,
  shape = 4,
  config = 5,
  numeric = 6,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::io: return "io";
    case ErrorCode::missing_artifact: return "missing_artifact";
    case ErrorCode::validation: return "validation";
    case ErrorCode::shape: return "shape";
    case ErrorCode::config: return "config";
    case ErrorCode::numeric: return "numeric";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

namespace detail {

inline bool& warnings_enabled() {
  static bool enabled = true;
  return enabled;
}

}  // namespace detail

inline void set_warnings_enabled(bool enabled) { detail::warnings_enabled() = enabled; }

inline void warn(std::string_view message) {
  if (detail::warnings_enabled()) std::cerr << "warning: " << message << '\n';
}

}  // namespace hetprompt
