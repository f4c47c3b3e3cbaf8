#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace repogen {

enum class ErrorKind {
  UnsupportedFormat,
  EmptyInput,
  GatewayError,
  ProviderError,
  ReplayMismatch,
  BudgetExceeded,
  SchemaParseError,
  BlueprintValidationError,
  EmptyGeneration,
  DuplicateFile,
  CyclicDependency,
  DependencyViolation,
  EmptyRepo,
  NoTuple,
  RangeOutOfBounds,
  OverlappingEdits,
  SetupFailed,
  SandboxUnavailable,
  SandboxViolation,
  ConfigError,
  DigestMismatch,
  WorkspaceLocked,
  IoError,
};

std::string_view to_string(ErrorKind kind);

/// Every failure raised by the library carries a kind so callers and tests
/// can branch on it without parsing messages.
class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& message);

  ErrorKind kind() const noexcept { return kind_; }

private:
  ErrorKind kind_;
};

/// Replay divergence; `position` is the 0-based record index that failed.
class ReplayMismatchError : public Error {
public:
  ReplayMismatchError(std::string session, std::size_t position, const std::string& detail);

  const std::string& session() const noexcept { return session_; }
  std::size_t position() const noexcept { return position_; }

private:
  std::string session_;
  std::size_t position_;
};

class BlueprintValidationFailure : public Error {
public:
  explicit BlueprintValidationFailure(std::vector<std::string> violations);

  const std::vector<std::string>& violations() const noexcept { return violations_; }

private:
  std::vector<std::string> violations_;
};

class SchemaParseFailure : public Error {
public:
  SchemaParseFailure(std::string schema_id, int attempts, const std::string& last_error);

  const std::string& schema_id() const noexcept { return schema_id_; }
  int attempts() const noexcept { return attempts_; }

private:
  std::string schema_id_;
  int attempts_;
};

}  // namespace repogen
