#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace repogen {

// CRLF and lone CR become LF.
std::string normalize_line_endings(std::string_view text);

/// Splits into lines, each keeping its trailing '\n' (the last one may not).
std::vector<std::string_view> split_lines_keep(std::string_view text);

/// Splits into lines without terminators; a trailing newline does not
/// produce an empty final line.
std::vector<std::string> split_lines(std::string_view text);

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);
bool starts_with(std::string_view s, std::string_view prefix);
bool ends_with(std::string_view s, std::string_view suffix);
bool contains_ci(std::string_view haystack, std::string_view needle);

// Collapse runs of whitespace to one space and trim.
std::string collapse_whitespace(std::string_view s);

/// Lowercased alphanumeric word tokens with common English stop words removed.
std::vector<std::string> content_tokens(std::string_view s);

/// Whitespace-delimited tokens, unmodified.
std::vector<std::string> whitespace_tokens(std::string_view s);

std::string sha256_hex(std::string_view data);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view content);

/// Renders lines with 1-based numbers ("   3| text"), used in repair prompts.
std::string number_lines(std::string_view text);

/// Pluggable token counter for context budgets.
class Tokenizer {
public:
  virtual ~Tokenizer() = default;
  virtual std::size_t count(std::string_view text) const = 0;
};

/// ceil(characters / quotient); the fallback when no model tokenizer is wired in.
class CharQuotientTokenizer final : public Tokenizer {
public:
  explicit CharQuotientTokenizer(double chars_per_token = 4.0) : quotient_(chars_per_token) {}
  std::size_t count(std::string_view text) const override;

private:
  double quotient_;
};

const Tokenizer& default_tokenizer();

}  // namespace repogen
