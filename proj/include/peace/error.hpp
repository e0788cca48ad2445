#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace peace {

enum class ErrorCode {
  UndecodableFile,
  UnknownFunction,
  ScorerUnavailable,
  EmbedderUnavailable,
  NotARepo,
  RevisionNotFound,
  EmptyRange,
  ModelFailure,
  MalformedToolCall,
  ScriptExhausted,
  UnparseableCandidate,
  NoTests,
  SchemaViolation,
  EnvSetupFailure,
  PatchApplyFailure,
  Timeout,
  EmptySet,
  ZeroBaseline,
  ZeroMethodCount,
  MissingBaseline,
  BackendMismatch,
  ConfigInvalid,
  CommandNotFound,
  Io,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace peace
