#include "repogen/error.hpp"

namespace repogen {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::UnsupportedFormat: return "UnsupportedFormat";
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::GatewayError: return "GatewayError";
    case ErrorKind::ProviderError: return "ProviderError";
    case ErrorKind::ReplayMismatch: return "ReplayMismatch";
    case ErrorKind::BudgetExceeded: return "BudgetExceeded";
    case ErrorKind::SchemaParseError: return "SchemaParseError";
    case ErrorKind::BlueprintValidationError: return "BlueprintValidationError";
    case ErrorKind::EmptyGeneration: return "EmptyGeneration";
    case ErrorKind::DuplicateFile: return "DuplicateFile";
    case ErrorKind::CyclicDependency: return "CyclicDependency";
    case ErrorKind::DependencyViolation: return "DependencyViolation";
    case ErrorKind::EmptyRepo: return "EmptyRepo";
    case ErrorKind::NoTuple: return "NoTuple";
    case ErrorKind::RangeOutOfBounds: return "RangeOutOfBounds";
    case ErrorKind::OverlappingEdits: return "OverlappingEdits";
    case ErrorKind::SetupFailed: return "SetupFailed";
    case ErrorKind::SandboxUnavailable: return "SandboxUnavailable";
    case ErrorKind::SandboxViolation: return "SandboxViolation";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::DigestMismatch: return "DigestMismatch";
    case ErrorKind::WorkspaceLocked: return "WorkspaceLocked";
    case ErrorKind::IoError: return "IoError";
  }
  return "Unknown";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

ReplayMismatchError::ReplayMismatchError(std::string session, std::size_t position,
                                         const std::string& detail)
    : Error(ErrorKind::ReplayMismatch,
            "session '" + session + "' diverged at record " + std::to_string(position) + ": " + detail),
      session_(std::move(session)),
      position_(position) {}

namespace {
std::string join_violations(const std::vector<std::string>& v) {
  std::string out = std::to_string(v.size()) + " violation(s)";
  for (const auto& s : v) out += "\n  - " + s;
  return out;
}
}  // namespace

BlueprintValidationFailure::BlueprintValidationFailure(std::vector<std::string> violations)
    : Error(ErrorKind::BlueprintValidationError, join_violations(violations)),
      violations_(std::move(violations)) {}

SchemaParseFailure::SchemaParseFailure(std::string schema_id, int attempts, const std::string& last_error)
    : Error(ErrorKind::SchemaParseError,
            "reply for schema '" + schema_id + "' invalid after " + std::to_string(attempts) +
                " attempt(s): " + last_error),
      schema_id_(std::move(schema_id)),
      attempts_(attempts) {}

}  // namespace repogen
