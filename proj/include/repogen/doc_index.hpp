#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace repogen {

enum class DocFormat { Markdown, Plain };

/// Accepts "markdown"/"md" and "plain"/"text"/"txt"; anything else is UnsupportedFormat.
DocFormat parse_doc_format(std::string_view name);
std::string_view to_string(DocFormat format);

enum class BlockKind { Text, Equation, Table, FigureCaption, Pseudocode };
std::string_view to_string(BlockKind kind);

struct Heading {
  int depth = 1;
  std::string text;   // heading line without markdown hashes
  std::string title;  // text without a leading "3.1." style number
};

struct Block {
  BlockKind kind = BlockKind::Text;
  std::string raw;                 // exact source text, line endings normalized
  std::optional<Heading> heading;  // set when the block opens a section
};

struct SourceDocument {
  std::vector<Block> blocks;
  std::string origin;
  DocFormat format = DocFormat::Markdown;

  /// Concatenation of every block's raw text.
  std::string text() const;
};

/// Splits `raw` into typed blocks. Fenced code is pseudocode; $$, \[ and
/// \begin{equation}-style regions are equations; pipe-table runs are tables;
/// "Figure N:" and image lines are figure captions. Headings always open a
/// new text block.
SourceDocument parse_document(std::string_view raw, DocFormat format, std::string origin = {});

inline constexpr std::string_view kFrontmatterHeading = "frontmatter";

struct Chunk {
  std::string heading;  // full heading text ("3.1. Model Architecture")
  std::string title;    // heading without numbering ("Model Architecture")
  int depth = 1;
  std::size_t span_begin = 0;  // block offsets, half-open [begin, end)
  std::size_t span_end = 0;
  std::string content;  // raw text of the spanned blocks, heading line included
  std::optional<std::size_t> parent;
  std::vector<std::size_t> children;
  bool synthetic = false;  // the "frontmatter" preamble chunk
};

enum class MatchRule { ExactHeading, HeadingSubstring, ContentSubstring, TokenOverlap };
std::string_view to_string(MatchRule rule);

struct QueryHit {
  std::size_t chunk = 0;
  double score = 0.0;
  MatchRule rule = MatchRule::TokenOverlap;
};

/// Heading-keyed chunk store over a parsed document. Immutable once built.
class ContentIndex {
public:
  ContentIndex() = default;
  explicit ContentIndex(std::vector<Chunk> chunks, std::size_t block_count);

  const std::vector<Chunk>& chunks() const noexcept { return chunks_; }
  const Chunk& chunk(std::size_t k) const { return chunks_.at(k); }
  std::size_t size() const noexcept { return chunks_.size(); }
  bool empty() const noexcept { return chunks_.empty(); }
  std::size_t block_count() const noexcept { return block_count_; }

  /// Lexical ranking: exact heading (3.0) > heading substring (2.0) >
  /// content substring (1.0) > token-overlap Jaccard in (0, 1). Equal scores
  /// keep document order. Throws std::invalid_argument when limit is 0.
  std::vector<QueryHit> query(std::string_view keyword, std::size_t limit) const;

  nlohmann::json to_json() const;
  static ContentIndex from_json(const nlohmann::json& j);

private:
  std::vector<Chunk> chunks_;
  std::size_t block_count_ = 0;
};

ContentIndex build_index(const SourceDocument& doc);

inline std::vector<QueryHit> query_index(const ContentIndex& index, std::string_view keyword,
                                         std::size_t limit) {
  return index.query(keyword, limit);
}

}  // namespace repogen
