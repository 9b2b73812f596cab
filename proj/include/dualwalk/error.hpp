#pragma once

#include <stdexcept>
#include <string>

namespace dualwalk {

// Exit codes shared by the command-line tool.
enum class ExitCode : int {
  kOk = 0,
  kConfig = 2,
  kArtifact = 3,
  kNumeric = 4,
};

class Error : public std::runtime_error {
 public:
  Error(ExitCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ExitCode code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

/// Bad configuration keys/values or invalid user-supplied arguments.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ExitCode::kConfig, what) {}
};

/// Missing, malformed or mismatched files.
class ArtifactError : public Error {
 public:
  explicit ArtifactError(const std::string& what) : Error(ExitCode::kArtifact, what) {}
};

/// NaN/Inf during training or shape mismatches inside the numeric core.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(ExitCode::kNumeric, what) {}
};

[[noreturn]] void throw_shape_error(const char* op, const std::string& detail);

}  // namespace dualwalk
