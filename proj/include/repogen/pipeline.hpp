#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "repogen/doc_index.hpp"
#include "repogen/llm_gateway.hpp"
#include "repogen/sandbox.hpp"

namespace repogen {

struct RagRepoConfig {
  std::string name;
  fs::path path;
  std::string license;
};

/// Run configuration, loaded from JSON. Relative paths are taken from the
/// directory of the config file.
struct PipelineConfig {
  fs::path input;
  DocFormat format = DocFormat::Markdown;
  fs::path workspace;

  GatewayMode mode = GatewayMode::Replay;
  fs::path transcripts;              // replay source: <session>.jsonl per phase
  std::optional<fs::path> script;    // scripted provider for record mode
  HttpProviderOptions http;          // live and record modes without a script
  RoleBudgets budgets;
  std::size_t context_budget = 16000;

  bool retrieval = true;
  std::vector<RagRepoConfig> rag_repos;
  std::vector<std::string> blacklist;

  int max_iter = 5;
  double timeout_s = 60.0;
  std::vector<std::string> concept_keywords;
  std::vector<std::string> algorithm_keywords;
  double scale = 1.0;
  int max_retries = 2;

  std::optional<fs::path> templates_dir;
  std::optional<fs::path> provision_dir;  // copied into <workspace>/env
  std::string install_command;
  std::optional<std::string> entry;
  SandboxBackend backend = SandboxBackend::Process;
  std::string container_image = "python:3.11-slim";

  /// ConfigError on invalid values.
  static PipelineConfig from_json(const nlohmann::json& j, const fs::path& base_dir);
  static PipelineConfig load(const fs::path& path);
  /// Absolute-path form stored in the workspace for resume.
  nlohmann::json to_json() const;
  void validate() const;
};

enum class Phase { None, Indexed, Blueprinted, RagIndexed, Generated, Verified };
std::string_view to_string(Phase p);
Phase parse_phase(std::string_view name);
const std::vector<Phase>& pipeline_phases();

/// Checkpoint record persisted as state.json.
struct RunState {
  Phase phase = Phase::None;
  std::map<std::string, std::string> digests;  // workspace-relative artifact -> sha256
  nlohmann::json sections = nlohmann::json::object();  // per-phase report fragments
  bool resumable = true;

  nlohmann::json to_json() const;
  static RunState from_json(const nlohmann::json& j);
};

struct RunControl {
  std::optional<Phase> stop_after;  // simulates an interruption at a phase boundary
};

struct RunOutcome {
  Phase phase = Phase::None;
  std::string status;  // clean | max-iterations | setup-failed | incomplete
  nlohmann::json report;
  fs::path repo;
};

/// Fresh run into cfg.workspace. The workspace must be empty or a previous
/// run's workspace, which is then cleared.
RunOutcome run_pipeline(const PipelineConfig& cfg, const RunControl& control = {});

/// Continues from the last completed phase. DigestMismatch when a completed
/// phase's artifacts were modified.
RunOutcome resume(const fs::path& workspace, const RunControl& control = {});

/// The stored report; for unfinished runs, a partial one built from state.
nlohmann::json read_report(const fs::path& workspace);

/// 0 clean, 2 max-iterations, 3 setup-failed, 1 otherwise.
int exit_code_for(std::string_view status);

/// sha256 over sorted (path, content digest) pairs of every file under `dir`.
std::string tree_digest(const fs::path& dir);

}  // namespace repogen
