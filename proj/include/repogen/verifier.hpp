#pragma once

#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "repogen/blueprint.hpp"
#include "repogen/llm_gateway.hpp"
#include "repogen/prompts.hpp"
#include "repogen/sandbox.hpp"

namespace repogen {

inline constexpr const char* kStructural = "structural-discrepancy";
inline constexpr const char* kQuality = "quality-deficiency";

struct Issue {
  std::string id;  // S1.. for structural, Q1.. for quality
  std::string category;
  std::string file;
  int start_line = 0;  // 0 when the issue concerns the whole file
  int end_line = 0;
  std::string description;
  std::string instruction;

  std::string location() const;
  nlohmann::json to_json() const;
};

struct StaticReport {
  std::vector<Issue> issues;
  std::map<std::string, double> quality_scores;
  std::vector<std::string> warnings;

  std::size_t count(std::string_view category) const;
  nlohmann::json to_json() const;
};

/// Missing and zero-byte planned files; never calls the model.
StaticReport structural_analysis(Sandbox& sandbox, const fs::path& repo_dir, const Blueprint& blueprint);

struct LineEdit {
  int start_line = 1;  // 1-based, inclusive
  int end_line = 1;    // end_line == start_line - 1 inserts before start_line
  std::string text;    // replacement lines; empty deletes the range
};

struct PatchInstruction {
  std::string file;
  std::vector<LineEdit> edits;
  std::string rationale;

  nlohmann::json to_json() const;
};

/// Applies the edits bottom-up. Lines outside every range are untouched.
/// RangeOutOfBounds or OverlappingEdits when the instruction is invalid.
std::string apply_patch(std::string_view text, const PatchInstruction& instruction);

/// Called with the file text before and after every applied patch.
using PatchObserver = std::function<void(const PatchInstruction&, const std::string& before, const std::string& after)>;

struct ErrorPattern {
  std::string regex;  // groups: 1 file, 2 line (may match empty), 3 message
};

/// file:line patterns tried after Python tracebacks.
const std::vector<ErrorPattern>& default_error_patterns();

struct VerifierOptions {
  int max_iter = 5;
  std::chrono::milliseconds timeout{60000};
  std::optional<std::string> entry;  // overrides entry discovery
  std::string manifest = "requirements.txt";
  std::string install_command;       // run in the repo directory; empty skips installation
  std::vector<ErrorPattern> error_patterns = default_error_patterns();
  std::map<std::string, std::string> env;
  int max_retries = 2;
  bool quality_pass = true;
  std::shared_ptr<const PromptTemplates> templates;
  PatchObserver on_patch;
};

/// Structural pass plus a per-file quality review through the gateway.
StaticReport static_analyze(Sandbox& sandbox, const fs::path& repo_dir, const Blueprint& blueprint, Gateway& gateway,
                            const VerifierOptions& options = {});

struct IssueOutcome {
  std::string id;
  std::string status;  // fixed | unfixable
  std::string note;
};

struct StaticRefineResult {
  std::vector<IssueOutcome> outcomes;
  std::vector<PatchInstruction> patches;
  StaticReport rescan;  // structural analysis after the fixes

  nlohmann::json to_json() const;
};

/// Visits every issue once: missing files are synthesized, quality issues
/// patched. An issue whose fix is rejected twice is marked unfixable.
StaticRefineResult refine_static(Sandbox& sandbox, const fs::path& repo_dir, const StaticReport& report,
                                 const Blueprint& blueprint, Gateway& gateway, const VerifierOptions& options = {});

struct SetupResult {
  std::vector<std::string> added_dependencies;
  std::string command;
  int exit_code = 0;
  std::string stdout_text;
  std::string stderr_text;

  nlohmann::json to_json() const;
};

/// Reconciles the manifest with the blueprint's dependencies, then runs the
/// install command. SetupFailed carrying the command's stderr.
SetupResult setup_environment(Sandbox& sandbox, const fs::path& repo_dir, const Blueprint& blueprint,
                              const VerifierOptions& options = {});

struct ErrorRecord {
  std::string file;  // repository-relative; empty when unattributed
  int line = 0;
  std::string message;

  friend bool operator==(const ErrorRecord&, const ErrorRecord&) = default;
};

struct ExecutionTrace {
  std::string command;
  std::string stdout_text;
  std::string stderr_text;  // with workspace paths made relative
  int exit_code = 0;
  double duration_s = 0.0;
  bool timed_out = false;
  std::vector<ErrorRecord> error_records;

  bool clean() const { return exit_code == 0 && error_records.empty(); }
  std::string digest() const;
};

/// Error records from a failing run's stderr: Python tracebacks first, then
/// `patterns`, else one unattributed record.
std::vector<ErrorRecord> parse_error_records(std::string_view stderr_text, int exit_code,
                                             const std::vector<ErrorPattern>& patterns);

/// `bash reproduce.sh` when present, else the staged-plan checks joined by &&.
std::string discover_entry(Sandbox& sandbox, const fs::path& repo_dir, const Blueprint& blueprint);

/// SandboxUnavailable when no shell can be spawned.
ExecutionTrace execute(Sandbox& sandbox, const fs::path& repo_dir, const std::string& entry,
                       std::chrono::milliseconds timeout, const VerifierOptions& options = {});

enum class VerifyStatus { Clean, MaxIterations, SetupFailed };
std::string_view to_string(VerifyStatus s);

struct IterationLog {
  int iteration = 0;
  std::string command;
  int exit_code = 0;
  bool timed_out = false;
  std::string trace_digest;
  std::vector<ErrorRecord> error_records;
  std::vector<std::string> localized_files;
  std::vector<PatchInstruction> patches;
  bool setup_rerun = false;
  std::vector<std::string> warnings;
  double duration_s = 0.0;  // kept out of to_json

  nlohmann::json to_json() const;
};

struct RefineResult {
  VerifyStatus status = VerifyStatus::MaxIterations;
  std::optional<SetupResult> setup;
  std::string setup_error;
  std::vector<IterationLog> iterations;
  int executions = 0;

  nlohmann::json to_json() const;
};

/// Execute, diagnose and patch until a clean run or `max_iter` executions.
/// The repository is not modified after the last execution.
RefineResult refine_loop(Sandbox& sandbox, const fs::path& repo_dir, const Blueprint& blueprint, Gateway& gateway,
                         const VerifierOptions& options = {});

struct VerificationResult {
  StaticReport report;
  StaticRefineResult static_refine;
  RefineResult refine;

  nlohmann::json to_json() const;
};

/// Structural and quality repair, then the sandbox loop.
VerificationResult run_verification(Sandbox& sandbox, const fs::path& repo_dir, const Blueprint& blueprint,
                                    Gateway& gateway, const VerifierOptions& options = {});

}  // namespace repogen
