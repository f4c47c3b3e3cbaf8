#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "repogen/blueprint.hpp"
#include "repogen/codemem.hpp"
#include "repogen/coderag.hpp"
#include "repogen/llm_gateway.hpp"
#include "repogen/pipeline.hpp"
#include "repogen/verifier.hpp"

// End-to-end scenarios shared by the acceptance binary and the integration
// tests. Each returns raw measurements; callers decide pass or fail.
namespace scenarios {

namespace fs = std::filesystem;

/// Toy blueprint as planned in the fixture script, catalog included.
repogen::Blueprint toy_blueprint();

// -- replay ------------------------------------------------------------------

struct ReplayRun {
  repogen::RunOutcome outcome;
  std::map<std::string, std::string> repo;    // generated tree
  std::map<std::string, std::string> golden;  // expected tree
  double seconds = 0.0;
  std::string report_digest;  // sha256 of report.json
};

ReplayRun replay_toy(const fs::path& workspace);

// -- segmentation ------------------------------------------------------------

struct SegmentationResult {
  std::size_t documents = 0;
  std::size_t roundtrip_ok = 0;
  std::size_t tiling_ok = 0;
  std::size_t queries = 0;
  std::size_t queries_ok = 0;
  std::vector<std::string> failures;
};

SegmentationResult check_segmentation();

// -- synthetic project -------------------------------------------------------

struct SyntheticProject {
  std::size_t files = 50;
  std::size_t budget = 16000;
  std::size_t source_chars = 0;  // per generated file, calibrated
  repogen::Blueprint blueprint;
  std::vector<std::string> paths;

  std::string source(std::size_t i) const;
  std::vector<std::size_t> deps(std::size_t i) const;
  /// Blueprint-plus-all-prior-sources prompt for file i (0-based).
  std::string naive_context(std::size_t i) const;
};

/// Calibrates file size so the naive baseline first overflows at file 8.
SyntheticProject make_synthetic_project(std::size_t files = 50, std::size_t budget = 16000);

/// Deterministic coder and summarizer for a synthetic project.
std::shared_ptr<repogen::Provider> synthetic_provider(const SyntheticProject& project);

struct SyntheticRun {
  repogen::GenerationRun run;
  std::vector<repogen::TranscriptRecord> records;
  std::map<std::string, std::string> tree;  // repo/ and memory/ contents
};

SyntheticRun run_synthetic(const SyntheticProject& project, const fs::path& workspace,
                           const repogen::RetrievalHook& hook = nullptr);

struct CompressionResult {
  std::size_t contexts = 0;
  std::size_t max_context_tokens = 0;
  std::size_t over_budget = 0;
  std::size_t leaked_ngrams = 0;          // 12-token raw-source n-grams found in contexts
  std::optional<std::size_t> first_naive_overflow;  // 1-based file number
  bool naive_overflows_from_then_on = false;
  std::vector<std::string> failures;
};

CompressionResult check_compression(const SyntheticProject& project, const SyntheticRun& run);

struct DependencyResult {
  std::size_t files = 0;
  std::size_t steps = 0;
  std::size_t unsound_steps = 0;  // independent oracle over the generation order
  bool reported_sound = false;
  bool cyclic_aborts = false;
  std::string cyclic_message;
};

DependencyResult check_dependencies(const SyntheticProject& project, const SyntheticRun& run,
                                    const fs::path& scratch);

// -- retrieval ---------------------------------------------------------------

struct RagResult {
  std::size_t tuples = 0;
  std::size_t targets = 0;
  std::size_t unordered_targets = 0;
  std::size_t retrieve_not_max = 0;
  std::size_t random_indexes = 0;
  std::size_t random_failures = 0;
  bool empty_index_identical = false;
  bool populated_index_differs = false;  // control: the hook is live
  std::string detail;
};

RagResult check_rag(const SyntheticProject& project, const fs::path& scratch);

/// Builds the toy reference index through the fixture script.
repogen::RagIndex build_toy_rag(const fs::path& workspace);

// -- verification ------------------------------------------------------------

struct FaultRun {
  std::string name;
  std::string expect;
  repogen::RefineResult result;
  std::size_t patches_seen = 0;
  std::size_t locality_violations = 0;
  std::vector<std::string> locality_notes;
  std::map<std::string, std::string> final_repo;
};

const std::vector<std::string>& fault_fixture_names();
FaultRun run_fault_fixture(const std::string& name, const fs::path& workspace, int max_iter = 5);

/// Independent locality check: every changed line of `before` lies inside an
/// edited range, and lines between edits survive verbatim.
std::optional<std::string> locality_violation(const repogen::PatchInstruction& patch, const std::string& before,
                                              const std::string& after);

// -- sandbox -----------------------------------------------------------------

struct AuditTotals {
  std::size_t logs = 0;
  std::size_t records = 0;
  std::size_t outside_root = 0;  // performed operations whose path leaves the root
  std::size_t denied = 0;
};

/// Re-reads every sandbox_audit.jsonl under `root` without the library.
AuditTotals scan_audit_logs(const fs::path& root);

// -- determinism -------------------------------------------------------------

struct ResumeResult {
  std::vector<std::string> boundaries;
  std::vector<std::string> mismatches;
  std::string reference_digest;
};

ResumeResult check_kill_and_resume(const fs::path& scratch, const ReplayRun& reference);

}  // namespace scenarios
