#pragma once

#include <stdexcept>
#include <string>

namespace opinf {

enum class ErrorKind {
  kValidation,  // bad input, bad config, shape mismatch
  kNumerical,   // divergence, rank deficiency, integrator failure
  kIo,          // missing file, malformed text
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail_validation(const std::string& msg) {
  throw Error(ErrorKind::kValidation, msg);
}
[[noreturn]] inline void fail_numerical(const std::string& msg) {
  throw Error(ErrorKind::kNumerical, msg);
}
[[noreturn]] inline void fail_io(const std::string& msg) { throw Error(ErrorKind::kIo, msg); }

inline void require(bool cond, const std::string& msg) {
  if (!cond) fail_validation(msg);
}

}  // namespace opinf
