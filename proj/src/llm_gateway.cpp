#include "repogen/llm_gateway.hpp"

#include <nlohmann/json.hpp>

#include "repogen/error.hpp"

namespace repogen {

using nlohmann::json;

std::string_view to_string(Role role) {
  switch (role) {
    case Role::Concept: return "concept";
    case Role::Algorithm: return "algorithm";
    case Role::Planner: return "planner";
    case Role::Coder: return "coder";
    case Role::Summarizer: return "summarizer";
    case Role::Rag: return "rag";
    case Role::Verifier: return "verifier";
  }
  return "coder";
}

const std::vector<Role>& all_roles() {
  static const std::vector<Role> roles = {Role::Concept, Role::Algorithm,  Role::Planner, Role::Coder,
                                          Role::Summarizer, Role::Rag, Role::Verifier};
  return roles;
}

Role parse_role(std::string_view name) {
  for (Role r : all_roles()) {
    if (to_string(r) == name) return r;
  }
  throw Error(ErrorKind::ConfigError, "unknown agent role '" + std::string(name) + "'");
}

std::string_view to_string(GatewayMode mode) {
  switch (mode) {
    case GatewayMode::Record: return "record";
    case GatewayMode::Replay: return "replay";
    case GatewayMode::Live: return "live";
  }
  return "live";
}

GatewayMode parse_gateway_mode(std::string_view name) {
  if (name == "record") return GatewayMode::Record;
  if (name == "replay") return GatewayMode::Replay;
  if (name == "live") return GatewayMode::Live;
  throw Error(ErrorKind::ConfigError, "unknown gateway mode '" + std::string(name) + "'");
}

PromptRequest make_request(Role role, std::string template_id, std::string rendered_text,
                           std::string schema_id, const Tokenizer& tokenizer) {
  PromptRequest req;
  req.role = role;
  req.template_id = std::move(template_id);
  req.token_estimate = tokenizer.count(rendered_text);
  req.rendered_text = std::move(rendered_text);
  req.schema_id = std::move(schema_id);
  return req;
}

std::string request_digest(const PromptRequest& req) {
  std::string material;
  material.reserve(req.rendered_text.size() + 64);
  material += to_string(req.role);
  material += '\x1f';
  material += req.template_id;
  material += '\x1f';
  material += req.rendered_text;
  return sha256_hex(material);
}

json TranscriptRecord::to_json() const {
  return {{"seq", seq},
          {"role", to_string(role)},
          {"template_id", template_id},
          {"digest", digest},
          {"prompt", prompt},
          {"reply", reply},
          {"latency_ms", latency_ms},
          {"prompt_tokens", prompt_tokens},
          {"completion_tokens", completion_tokens}};
}

TranscriptRecord TranscriptRecord::from_json(const json& j) {
  TranscriptRecord r;
  r.seq = j.at("seq").get<std::size_t>();
  r.role = parse_role(j.at("role").get<std::string>());
  r.template_id = j.at("template_id").get<std::string>();
  r.digest = j.at("digest").get<std::string>();
  r.prompt = j.value("prompt", std::string());
  r.reply = j.at("reply").get<std::string>();
  r.latency_ms = j.value("latency_ms", 0.0);
  r.prompt_tokens = j.value("prompt_tokens", std::size_t{0});
  r.completion_tokens = j.value("completion_tokens", std::size_t{0});
  return r;
}

std::vector<TranscriptRecord> load_transcript(const std::filesystem::path& path) {
  std::vector<TranscriptRecord> out;
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot open transcript " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      out.push_back(TranscriptRecord::from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw Error(ErrorKind::IoError,
                  path.string() + ":" + std::to_string(lineno) + ": bad transcript record: " + e.what());
    }
  }
  return out;
}

RoleUsage UsageReport::totals() const {
  RoleUsage t;
  for (const auto& [role, u] : per_role) {
    t.calls += u.calls;
    t.prompt_tokens += u.prompt_tokens;
    t.completion_tokens += u.completion_tokens;
  }
  return t;
}

UsageReport& UsageReport::operator+=(const UsageReport& other) {
  for (const auto& [role, u] : other.per_role) {
    auto& mine = per_role[role];
    mine.calls += u.calls;
    mine.prompt_tokens += u.prompt_tokens;
    mine.completion_tokens += u.completion_tokens;
  }
  return *this;
}

json UsageReport::to_json() const {
  json roles = json::object();
  for (Role r : all_roles()) {
    auto it = per_role.find(r);
    const RoleUsage u = it == per_role.end() ? RoleUsage{} : it->second;
    roles[std::string(to_string(r))] = {{"calls", u.calls},
                                        {"prompt_tokens", u.prompt_tokens},
                                        {"completion_tokens", u.completion_tokens},
                                        {"total_tokens", u.total()}};
  }
  const RoleUsage t = totals();
  return {{"roles", roles},
          {"total", {{"calls", t.calls},
                     {"prompt_tokens", t.prompt_tokens},
                     {"completion_tokens", t.completion_tokens},
                     {"total_tokens", t.total()}}}};
}

UsageReport UsageReport::from_json(const json& j) {
  UsageReport u;
  for (Role r : all_roles()) u.per_role[r] = {};
  for (const auto& [name, v] : j.at("roles").items()) {
    auto& ru = u.per_role[parse_role(name)];
    ru.calls = v.at("calls").get<std::size_t>();
    ru.prompt_tokens = v.at("prompt_tokens").get<std::size_t>();
    ru.completion_tokens = v.at("completion_tokens").get<std::size_t>();
  }
  return u;
}

UsageReport usage_from_records(const std::vector<TranscriptRecord>& records) {
  UsageReport u;
  for (Role r : all_roles()) u.per_role[r] = {};
  for (const auto& rec : records) {
    auto& ru = u.per_role[rec.role];
    ++ru.calls;
    ru.prompt_tokens += rec.prompt_tokens;
    ru.completion_tokens += rec.completion_tokens;
  }
  return u;
}

Gateway::Gateway(GatewayOptions options) : options_(std::move(options)) {
  if (options_.tokenizer == nullptr) options_.tokenizer = &default_tokenizer();
  if (options_.mode != GatewayMode::Replay && !options_.provider) {
    throw Error(ErrorKind::ConfigError, "gateway session '" + options_.session + "' has no provider");
  }
  if (options_.mode == GatewayMode::Record && options_.transcript_out) {
    if (options_.transcript_out->has_parent_path()) {
      std::filesystem::create_directories(options_.transcript_out->parent_path());
    }
    out_.open(*options_.transcript_out, std::ios::binary | std::ios::trunc);
    if (!out_) throw Error(ErrorKind::IoError, "cannot open " + options_.transcript_out->string());
  }
}

std::string Gateway::complete(const PromptRequest& req) {
  const std::size_t budget = options_.budgets.for_role(req.role);
  if (req.token_estimate > budget) {
    throw Error(ErrorKind::BudgetExceeded, "request for role '" + std::string(to_string(req.role)) + "' (" +
                                               req.template_id + ") estimates " +
                                               std::to_string(req.token_estimate) + " tokens; budget is " +
                                               std::to_string(budget));
  }
  const std::string digest = request_digest(req);
  if (options_.mode == GatewayMode::Replay) return complete_replay(req, digest);

  const auto start = std::chrono::steady_clock::now();
  std::string reply = options_.provider->complete(req);
  const auto stop = std::chrono::steady_clock::now();

  TranscriptRecord rec;
  rec.role = req.role;
  rec.template_id = req.template_id;
  rec.digest = digest;
  rec.prompt = req.rendered_text;
  rec.reply = reply;
  rec.latency_ms = std::chrono::duration<double, std::milli>(stop - start).count();
  rec.prompt_tokens = req.token_estimate;
  rec.completion_tokens = options_.tokenizer->count(reply);

  std::lock_guard lock(mu_);
  rec.seq = records_.size();
  if (out_.is_open()) {
    out_ << rec.to_json().dump() << '\n';
    out_.flush();
  }
  records_.push_back(std::move(rec));
  return reply;
}

std::string Gateway::complete_replay(const PromptRequest& req, const std::string& digest) {
  bool expected = false;
  if (!replay_busy_.compare_exchange_strong(expected, true)) {
    throw Error(ErrorKind::GatewayError, "concurrent use of replay session '" + options_.session + "'");
  }
  struct Release {
    std::atomic<bool>& flag;
    ~Release() { flag = false; }
  } release{replay_busy_};

  std::lock_guard lock(mu_);
  const std::size_t pos = cursor_;
  if (pos >= options_.replay_records.size()) {
    throw ReplayMismatchError(options_.session, pos,
                              "transcript exhausted (" + std::to_string(options_.replay_records.size()) +
                                  " records) at " + std::string(to_string(req.role)) + "/" + req.template_id);
  }
  const TranscriptRecord& stored = options_.replay_records[pos];
  if (stored.digest != digest) {
    throw ReplayMismatchError(options_.session, pos,
                              "expected " + std::string(to_string(stored.role)) + "/" + stored.template_id +
                                  " digest " + stored.digest.substr(0, 12) + ", got " +
                                  std::string(to_string(req.role)) + "/" + req.template_id + " digest " +
                                  digest.substr(0, 12));
  }
  ++cursor_;
  records_.push_back(stored);
  return stored.reply;
}

bool Gateway::replay_exhausted() const {
  std::lock_guard lock(mu_);
  return cursor_ >= options_.replay_records.size();
}

UsageReport Gateway::usage_report() const {
  std::lock_guard lock(mu_);
  return usage_from_records(records_);
}

std::vector<TranscriptRecord> Gateway::records() const {
  std::lock_guard lock(mu_);
  return records_;
}

}  // namespace repogen
