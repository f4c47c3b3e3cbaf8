#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <cstdlib>
#include <thread>

#include <nlohmann/json.hpp>

#include "repogen/error.hpp"
#include "repogen/llm_gateway.hpp"

namespace repogen {

using nlohmann::json;

namespace {

std::vector<std::string> string_list(const json& j, const char* key) {
  std::vector<std::string> out;
  if (!j.contains(key)) return out;
  const auto& v = j.at(key);
  if (v.is_string()) {
    out.push_back(v.get<std::string>());
  } else {
    for (const auto& s : v) out.push_back(s.get<std::string>());
  }
  return out;
}

}  // namespace

std::shared_ptr<ScriptedProvider> ScriptedProvider::from_file(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ConfigError, "bad script " + path.string() + ": " + e.what());
  }
  auto provider = std::make_shared<ScriptedProvider>();
  const auto base = path.parent_path();
  for (const auto& jr : j.at("rules")) {
    Rule r;
    if (jr.contains("role")) r.role = parse_role(jr.at("role").get<std::string>());
    r.template_id = jr.value("template", std::string());
    r.must_contain = string_list(jr, "match");
    r.must_not_contain = string_list(jr, "exclude");
    if (jr.contains("reply_file")) {
      r.reply = read_text_file(base / jr.at("reply_file").get<std::string>());
    } else {
      r.reply = jr.at("reply").get<std::string>();
    }
    r.times = jr.value("times", -1);
    provider->add(std::move(r));
  }
  return provider;
}

void ScriptedProvider::add(Rule rule) {
  std::lock_guard lock(mu_);
  rules_.push_back(std::move(rule));
}

std::size_t ScriptedProvider::calls() const {
  std::lock_guard lock(mu_);
  return calls_;
}

std::string ScriptedProvider::complete(const PromptRequest& req) {
  std::lock_guard lock(mu_);
  ++calls_;
  for (auto& rule : rules_) {
    if (rule.times == 0) continue;
    if (rule.role && *rule.role != req.role) continue;
    if (!rule.template_id.empty() && rule.template_id != req.template_id) continue;
    bool ok = true;
    for (const auto& s : rule.must_contain) {
      if (req.rendered_text.find(s) == std::string::npos) {
        ok = false;
        break;
      }
    }
    for (const auto& s : rule.must_not_contain) {
      if (ok && req.rendered_text.find(s) != std::string::npos) ok = false;
    }
    if (!ok) continue;
    if (rule.times > 0) --rule.times;
    return rule.reply;
  }
  throw Error(ErrorKind::ProviderError, "no scripted reply for " + std::string(to_string(req.role)) + "/" +
                                            req.template_id);
}

HttpProvider::HttpProvider(HttpProviderOptions options) : options_(std::move(options)) {
  if (options_.base_url.empty()) throw Error(ErrorKind::ConfigError, "http provider needs a base_url");
  if (options_.max_attempts < 1) options_.max_attempts = 1;
}

std::string HttpProvider::complete(const PromptRequest& req) {
  httplib::Client client(options_.base_url);
  client.set_connection_timeout(std::chrono::seconds(10));
  client.set_read_timeout(options_.timeout);

  httplib::Headers headers;
  if (const char* key = std::getenv(options_.api_key_env.c_str()); key && *key) {
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }
  const json body = {{"model", options_.model},
                     {"temperature", 0},
                     {"messages", json::array({{{"role", "user"}, {"content", req.rendered_text}}})}};
  const std::string payload = body.dump();

  std::string last_error;
  auto backoff = options_.initial_backoff;
  for (int attempt = 1; attempt <= options_.max_attempts; ++attempt) {
    auto res = client.Post(options_.path, headers, payload, "application/json");
    if (res && res->status == 200) {
      try {
        const json j = json::parse(res->body);
        return j.at("choices").at(0).at("message").at("content").get<std::string>();
      } catch (const json::exception& e) {
        last_error = std::string("malformed provider response: ") + e.what();
      }
    } else if (res) {
      last_error = "HTTP " + std::to_string(res->status);
      // Client errors other than rate limiting will not improve on retry.
      if (res->status >= 400 && res->status < 500 && res->status != 429) break;
    } else {
      last_error = "transport error: " + httplib::to_string(res.error());
    }
    if (attempt < options_.max_attempts) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
  }
  throw Error(ErrorKind::ProviderError, "provider request failed after retries: " + last_error);
}

}  // namespace repogen
