#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "repogen/text.hpp"

namespace repogen {

/// Agent identities allowed to talk to a model.
enum class Role { Concept, Algorithm, Planner, Coder, Summarizer, Rag, Verifier };

std::string_view to_string(Role role);
Role parse_role(std::string_view name);
const std::vector<Role>& all_roles();

struct PromptRequest {
  Role role = Role::Coder;
  std::string template_id;
  std::string rendered_text;
  std::size_t token_estimate = 0;
  std::string schema_id;  // expected reply schema; validated by the caller
};

PromptRequest make_request(Role role, std::string template_id, std::string rendered_text,
                           std::string schema_id, const Tokenizer& tokenizer = default_tokenizer());

/// SHA-256 over (role, template id, rendered text). Timing never enters it.
std::string request_digest(const PromptRequest& req);

struct TranscriptRecord {
  std::size_t seq = 0;
  Role role = Role::Coder;
  std::string template_id;
  std::string digest;
  std::string prompt;
  std::string reply;
  double latency_ms = 0.0;
  std::size_t prompt_tokens = 0;
  std::size_t completion_tokens = 0;

  nlohmann::json to_json() const;
  static TranscriptRecord from_json(const nlohmann::json& j);
};

std::vector<TranscriptRecord> load_transcript(const std::filesystem::path& path);

enum class GatewayMode { Record, Replay, Live };
std::string_view to_string(GatewayMode mode);
GatewayMode parse_gateway_mode(std::string_view name);

class Provider {
public:
  virtual ~Provider() = default;
  virtual std::string complete(const PromptRequest& req) = 0;
};

struct RoleBudgets {
  std::size_t default_budget = 16000;
  std::map<Role, std::size_t> per_role;

  std::size_t for_role(Role role) const {
    auto it = per_role.find(role);
    return it == per_role.end() ? default_budget : it->second;
  }
};

struct RoleUsage {
  std::size_t calls = 0;
  std::size_t prompt_tokens = 0;
  std::size_t completion_tokens = 0;
  std::size_t total() const { return prompt_tokens + completion_tokens; }
};

struct UsageReport {
  std::map<Role, RoleUsage> per_role;  // every role present, zeros included

  RoleUsage totals() const;
  UsageReport& operator+=(const UsageReport& other);
  nlohmann::json to_json() const;
  static UsageReport from_json(const nlohmann::json& j);
};

UsageReport usage_from_records(const std::vector<TranscriptRecord>& records);

struct GatewayOptions {
  std::string session = "default";
  GatewayMode mode = GatewayMode::Live;
  std::shared_ptr<Provider> provider;              // record and live modes
  std::vector<TranscriptRecord> replay_records;    // replay mode
  std::optional<std::filesystem::path> transcript_out;  // record mode, jsonl
  RoleBudgets budgets;
  const Tokenizer* tokenizer = &default_tokenizer();
};

/// Single choke point for model traffic. One instance is one session with its
/// own ordered transcript. Record/live calls may come from several threads;
/// replay is strictly sequential.
class Gateway {
public:
  explicit Gateway(GatewayOptions options);
  Gateway(const Gateway&) = delete;
  Gateway& operator=(const Gateway&) = delete;

  std::string complete(const PromptRequest& req);

  UsageReport usage_report() const;
  std::vector<TranscriptRecord> records() const;

  GatewayMode mode() const noexcept { return options_.mode; }
  const std::string& session() const noexcept { return options_.session; }
  const Tokenizer& tokenizer() const noexcept { return *options_.tokenizer; }
  const RoleBudgets& budgets() const noexcept { return options_.budgets; }

  /// Replay only: true when every stored record has been consumed.
  bool replay_exhausted() const;

private:
  std::string complete_replay(const PromptRequest& req, const std::string& digest);

  GatewayOptions options_;
  mutable std::mutex mu_;
  std::vector<TranscriptRecord> records_;
  std::size_t cursor_ = 0;
  std::atomic<bool> replay_busy_{false};
  std::ofstream out_;
};

/// Rule-driven provider for fixtures: the first rule whose role, template and
/// substrings all match (and that has uses left) supplies the reply.
class ScriptedProvider final : public Provider {
public:
  struct Rule {
    std::optional<Role> role;
    std::string template_id;                // empty matches any
    std::vector<std::string> must_contain;  // all must appear in the prompt
    std::vector<std::string> must_not_contain;
    std::string reply;
    int times = -1;  // -1 = unlimited
  };

  ScriptedProvider() = default;
  explicit ScriptedProvider(std::vector<Rule> rules) : rules_(std::move(rules)) {}

  /// {"rules": [{"role","template","match","exclude","reply" | "reply_file","times"}]};
  /// reply_file is resolved against the script's directory.
  static std::shared_ptr<ScriptedProvider> from_file(const std::filesystem::path& path);

  void add(Rule rule);
  std::string complete(const PromptRequest& req) override;
  std::size_t calls() const;

private:
  mutable std::mutex mu_;
  std::vector<Rule> rules_;
  std::size_t calls_ = 0;
};

struct HttpProviderOptions {
  std::string base_url;  // e.g. https://api.example.com
  std::string path = "/v1/chat/completions";
  std::string model;
  std::string api_key_env = "REPOGEN_API_KEY";
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{500};
  std::chrono::seconds timeout{120};
};

/// OpenAI-compatible chat-completions client with exponential backoff.
class HttpProvider final : public Provider {
public:
  explicit HttpProvider(HttpProviderOptions options);
  std::string complete(const PromptRequest& req) override;

private:
  HttpProviderOptions options_;
};

}  // namespace repogen
