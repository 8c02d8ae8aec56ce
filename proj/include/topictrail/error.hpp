#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace topictrail {

enum class ErrorCode {
  InvalidArgument,
  Io,
  Parse,
  EmptyCorpus,
  DuplicateId,
  ShapeMismatch,
  NotADistribution,
  VocabMismatch,
  IndexOutOfRange,
  UnknownTerm,
  UndefinedTerm,
  ProviderError,
  EmptyResponse,
  ContextOverflow,
  StartupValidation,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Failure talking to an LLM provider. `status` is the HTTP status, or 0 for
// transport failures. `kind` is a stable machine code such as "llm_timeout".
class ProviderError : public Error {
 public:
  ProviderError(int status, std::string kind, const std::string& message)
      : Error(ErrorCode::ProviderError, message), status_(status), kind_(std::move(kind)) {}

  int status() const noexcept { return status_; }
  const std::string& kind() const noexcept { return kind_; }

 private:
  int status_;
  std::string kind_;
};

}  // namespace topictrail
