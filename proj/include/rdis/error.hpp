#pragma once

#include <stdexcept>
#include <string>

namespace rdis {

/// Base for every error the toolchain raises. `code()` is a short stable
/// identifier (e.g. "division-by-zero") that tests and the bridge protocol
/// match on; `what()` is for humans.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

}  // namespace rdis
