#include "repogen/agent_reply.hpp"

#include "repogen/text.hpp"

namespace repogen {

using nlohmann::json;

std::optional<std::string> extract_fenced_block(std::string_view reply) {
  const auto lines = split_lines_keep(reply);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string t = trim(lines[i]);
    if (!starts_with(t, "```") && !starts_with(t, "~~~")) continue;
    const char ch = t[0];
    std::size_t n = 0;
    while (n < t.size() && t[n] == ch) ++n;
    std::string body;
    for (std::size_t j = i + 1; j < lines.size(); ++j) {
      const std::string tj = trim(lines[j]);
      std::size_t m = 0;
      while (m < tj.size() && tj[m] == ch) ++m;
      if (m >= n && m == tj.size()) return body;
      body += lines[j];
      if (body.back() != '\n') body.push_back('\n');
    }
    return body;  // unterminated fence runs to the end
  }
  return std::nullopt;
}

json extract_json(std::string_view reply) {
  std::string candidate;
  if (auto fenced = extract_fenced_block(reply)) {
    candidate = *fenced;
  } else {
    const auto open = reply.find('{');
    const auto close = reply.rfind('}');
    if (open == std::string_view::npos || close == std::string_view::npos || close < open) {
      throw ReplyInvalid("reply contains no JSON object");
    }
    candidate = std::string(reply.substr(open, close - open + 1));
  }
  try {
    json j = json::parse(candidate);
    if (!j.is_object()) throw ReplyInvalid("reply JSON is not an object");
    return j;
  } catch (const json::parse_error& e) {
    throw ReplyInvalid(std::string("reply is not valid JSON: ") + e.what());
  }
}

std::string extract_code(std::string_view reply) {
  std::string code = extract_fenced_block(reply).value_or(std::string(reply));
  if (trim(code).empty()) return {};
  if (code.back() != '\n') code.push_back('\n');
  return code;
}

std::string retry_prompt(const std::string& prompt, const std::string& error) {
  return prompt + "\n\nYour previous reply was rejected: " + error +
         "\nReply again, following the requested format exactly.\n";
}

Validated<std::string> call_for_code(Gateway& gateway, Role role, const std::string& template_id,
                                     const std::string& prompt, int max_retries) {
  std::string text = prompt;
  for (int attempt = 0; attempt <= max_retries; ++attempt) {
    const std::string reply = gateway.complete(make_request(role, template_id, text, "code", gateway.tokenizer()));
    std::string code = extract_code(reply);
    if (!code.empty()) return {std::move(code), attempt};
    text = retry_prompt(prompt, "the reply contained no code");
  }
  throw Error(ErrorKind::EmptyGeneration, template_id + ": no code payload after " +
                                              std::to_string(max_retries + 1) + " attempt(s)");
}

std::string req_string(const json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_string()) throw ReplyInvalid(std::string("field '") + key + "' must be a string");
  return j.at(key).get<std::string>();
}

std::string opt_string(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return {};
  if (!j.at(key).is_string()) throw ReplyInvalid(std::string("field '") + key + "' must be a string");
  return j.at(key).get<std::string>();
}

const json& req_array(const json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_array()) throw ReplyInvalid(std::string("field '") + key + "' must be an array");
  return j.at(key);
}

double req_number(const json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_number()) throw ReplyInvalid(std::string("field '") + key + "' must be a number");
  return j.at(key).get<double>();
}

long long req_int(const json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_number_integer()) {
    throw ReplyInvalid(std::string("field '") + key + "' must be an integer");
  }
  return j.at(key).get<long long>();
}

}  // namespace repogen
