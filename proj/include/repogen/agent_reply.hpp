#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "repogen/error.hpp"
#include "repogen/llm_gateway.hpp"

namespace repogen {

/// Thrown by reply parsers when a reply violates its schema.
class ReplyInvalid : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Content of the first fenced code block, if any.
std::optional<std::string> extract_fenced_block(std::string_view reply);

/// JSON object from a reply: a fenced block when present, otherwise the span
/// from the first '{' to the last '}'. Throws ReplyInvalid.
nlohmann::json extract_json(std::string_view reply);

/// Code payload: the first fenced block, or the whole reply when it has no
/// fence. Empty when the reply carries nothing but whitespace.
std::string extract_code(std::string_view reply);

std::string retry_prompt(const std::string& prompt, const std::string& error);

template <typename T>
struct Validated {
  T value;
  int retries = 0;
};

/// Issues `prompt` and parses the reply with `parse(json)`. Invalid replies are
/// re-requested with the validation error appended, at most `max_retries`
/// times; then SchemaParseFailure. Gateway errors propagate untouched.
template <typename Parse>
auto call_structured(Gateway& gateway, Role role, const std::string& template_id, const std::string& prompt,
                     const std::string& schema_id, int max_retries, Parse&& parse)
    -> Validated<decltype(parse(std::declval<const nlohmann::json&>()))> {
  std::string text = prompt;
  std::string last_error;
  for (int attempt = 0; attempt <= max_retries; ++attempt) {
    const std::string reply =
        gateway.complete(make_request(role, template_id, text, schema_id, gateway.tokenizer()));
    try {
      return {parse(extract_json(reply)), attempt};
    } catch (const ReplyInvalid& e) {
      last_error = e.what();
    } catch (const nlohmann::json::exception& e) {
      last_error = e.what();
    }
    text = retry_prompt(prompt, last_error);
  }
  throw SchemaParseFailure(schema_id, max_retries + 1, last_error);
}

/// Code-producing variant; EmptyGeneration after the retry budget.
Validated<std::string> call_for_code(Gateway& gateway, Role role, const std::string& template_id,
                                     const std::string& prompt, int max_retries);

// Small typed accessors that turn json type errors into ReplyInvalid.
std::string req_string(const nlohmann::json& j, const char* key);
std::string opt_string(const nlohmann::json& j, const char* key);
const nlohmann::json& req_array(const nlohmann::json& j, const char* key);
double req_number(const nlohmann::json& j, const char* key);
long long req_int(const nlohmann::json& j, const char* key);

}  // namespace repogen
