#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace repogen {

namespace fs = std::filesystem;

struct ExecResult {
  int exit_code = 0;
  std::string stdout_text;
  std::string stderr_text;
  double duration_s = 0.0;
  bool timed_out = false;
};

enum class SandboxBackend { Process, Container };

struct SandboxOptions {
  fs::path root;                          // workspace root; everything stays under it
  std::optional<fs::path> audit_log;      // default: <root>/sandbox_audit.jsonl
  SandboxBackend backend = SandboxBackend::Process;
  std::string container_cli = "docker";
  std::string container_image = "python:3.11-slim";
  std::map<std::string, std::string> env;  // extra variables for every command
};

/// Workspace-confined file I/O and command execution. Every operation is
/// appended to the audit log with its path relative to the root; attempts to
/// leave the root are logged as denied and raise SandboxViolation.
class Sandbox {
public:
  explicit Sandbox(SandboxOptions options);
  Sandbox(const Sandbox&) = delete;
  Sandbox& operator=(const Sandbox&) = delete;

  const fs::path& root() const noexcept { return root_; }
  void set_phase(std::string phase);

  /// Absolute path for `p` (relative paths are taken from the root).
  fs::path resolve(const fs::path& p);
  bool contains(const fs::path& p) const;

  void write_file(const fs::path& p, std::string_view content);
  std::string read_file(const fs::path& p);
  bool exists(const fs::path& p);
  std::uintmax_t file_size(const fs::path& p);
  void remove(const fs::path& p);
  void remove_all(const fs::path& p);
  void create_directories(const fs::path& p);
  /// Regular files under `dir`, relative to it, sorted.
  std::vector<std::string> list_files(const fs::path& dir);
  /// Copies a host directory into the sandbox (provisioning).
  void import_tree(const fs::path& host_source, const fs::path& dest);
  void copy_tree(const fs::path& source, const fs::path& dest);

  /// Runs `command` through /bin/sh in `cwd`. A timeout kills the whole
  /// process group and sets timed_out. SandboxUnavailable when no shell can
  /// be spawned.
  ExecResult run(const std::string& command, const fs::path& cwd, std::chrono::milliseconds timeout,
                 const std::map<std::string, std::string>& extra_env = {});

  /// The argv actually executed for `command` under the configured backend.
  std::vector<std::string> command_line(const std::string& command, const fs::path& cwd) const;

  static bool available();

private:
  void audit(nlohmann::json record);
  std::string rel(const fs::path& abs) const;

  SandboxOptions options_;
  fs::path root_;
  std::mutex mu_;
  std::ofstream audit_;
  std::size_t seq_ = 0;
  std::string phase_ = "setup";
};

struct AuditSummary {
  std::size_t records = 0;
  std::size_t denied = 0;
  std::size_t outside_root = 0;  // non-denied records whose path or copy source escapes the root
};

/// Re-reads an audit log and counts confinement breaches.
AuditSummary check_audit_log(const fs::path& audit_log);

}  // namespace repogen
