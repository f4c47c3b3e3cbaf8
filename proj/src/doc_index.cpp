#include "repogen/doc_index.hpp"

#include <algorithm>
#include <cctype>
#include <regex>
#include <set>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "repogen/error.hpp"
#include "repogen/text.hpp"

namespace repogen {

using nlohmann::json;

DocFormat parse_doc_format(std::string_view name) {
  const std::string n = to_lower(name);
  if (n == "markdown" || n == "md") return DocFormat::Markdown;
  if (n == "plain" || n == "text" || n == "txt") return DocFormat::Plain;
  throw Error(ErrorKind::UnsupportedFormat, "unknown document format '" + std::string(name) + "'");
}

std::string_view to_string(DocFormat format) {
  return format == DocFormat::Markdown ? "markdown" : "plain";
}

std::string_view to_string(BlockKind kind) {
  switch (kind) {
    case BlockKind::Text: return "text";
    case BlockKind::Equation: return "equation";
    case BlockKind::Table: return "table";
    case BlockKind::FigureCaption: return "figure-caption";
    case BlockKind::Pseudocode: return "pseudocode";
  }
  return "text";
}

std::string_view to_string(MatchRule rule) {
  switch (rule) {
    case MatchRule::ExactHeading: return "exact-heading";
    case MatchRule::HeadingSubstring: return "heading-substring";
    case MatchRule::ContentSubstring: return "content-substring";
    case MatchRule::TokenOverlap: return "token-overlap";
  }
  return "token-overlap";
}

std::string SourceDocument::text() const {
  std::string out;
  for (const auto& b : blocks) out += b.raw;
  return out;
}

namespace {

std::string strip_eol(std::string_view line) {
  while (!line.empty() && line.back() == '\n') line.remove_suffix(1);
  return std::string(line);
}

bool is_blank(std::string_view line) { return trim(line).empty(); }

// Leading indentation of at most three spaces, as in CommonMark.
std::string_view unindent3(std::string_view line) {
  std::size_t i = 0;
  while (i < 3 && i < line.size() && line[i] == ' ') ++i;
  return line.substr(i);
}

const std::regex& numbering_re() {
  static const std::regex re(R"(^(\d{1,3}(?:\.\d{1,3}){0,3})\.?\s+(\S.*)$)");
  return re;
}

std::string strip_numbering(const std::string& text) {
  std::smatch m;
  if (std::regex_match(text, m, numbering_re())) return trim(m[2].str());
  return text;
}

std::optional<Heading> hash_heading(std::string_view line) {
  std::string_view s = unindent3(line);
  std::size_t hashes = 0;
  while (hashes < s.size() && s[hashes] == '#') ++hashes;
  if (hashes == 0 || hashes > 6) return std::nullopt;
  if (hashes < s.size() && s[hashes] != ' ' && s[hashes] != '\t' && s[hashes] != '\n') return std::nullopt;
  std::string text = trim(s.substr(hashes));
  while (!text.empty() && text.back() == '#') text.pop_back();
  text = trim(text);
  if (text.empty()) return std::nullopt;
  return Heading{static_cast<int>(hashes), text, strip_numbering(text)};
}

// "3. Methodology" / "3.1. Model Architecture" on a line of its own,
// separated by blank lines from surrounding text.
std::optional<Heading> numeric_heading(const std::vector<std::string_view>& lines, std::size_t i) {
  const std::string text = trim(lines[i]);
  if (text.empty() || text.size() > 80) return std::nullopt;
  if (i > 0 && !is_blank(lines[i - 1])) return std::nullopt;
  if (i + 1 < lines.size() && !is_blank(lines[i + 1])) return std::nullopt;
  std::smatch m;
  if (!std::regex_match(text, m, numbering_re())) return std::nullopt;
  const std::string title = trim(m[2].str());
  if (title.empty() || !std::isupper(static_cast<unsigned char>(title.front()))) return std::nullopt;
  const char last = title.back();
  if (last == '.' || last == ':' || last == ',' || last == ';') return std::nullopt;
  const std::string number = m[1].str();
  const int depth = 1 + static_cast<int>(std::count(number.begin(), number.end(), '.'));
  return Heading{depth, text, title};
}

struct FenceOpen {
  char ch;
  std::size_t len;
};

std::optional<FenceOpen> fence_open(std::string_view line) {
  std::string_view s = unindent3(line);
  if (s.empty() || (s[0] != '`' && s[0] != '~')) return std::nullopt;
  const char ch = s[0];
  std::size_t n = 0;
  while (n < s.size() && s[n] == ch) ++n;
  if (n < 3) return std::nullopt;
  return FenceOpen{ch, n};
}

bool fence_closes(std::string_view line, const FenceOpen& open) {
  std::string_view s = unindent3(line);
  std::size_t n = 0;
  while (n < s.size() && s[n] == open.ch) ++n;
  return n >= open.len && trim(s.substr(n)).empty();
}

const std::regex& math_env_re() {
  static const std::regex re(R"(^\\begin\{(equation|align|gather|multline|eqnarray)(\*?)\})");
  return re;
}

const std::regex& figure_re() {
  static const std::regex re(R"(^(Figure|Fig\.)\s*\d+[:.])");
  return re;
}

const std::regex& algorithm_re() {
  static const std::regex re(R"(^Algorithm\s+\d+\b)");
  return re;
}

class Parser {
public:
  Parser(std::string_view text, DocFormat format) : lines_(split_lines_keep(text)), format_(format) {}

  std::vector<Block> run() {
    std::size_t i = 0;
    while (i < lines_.size()) {
      i = step(i);
    }
    flush_text();
    return std::move(blocks_);
  }

private:
  std::size_t step(std::size_t i) {
    const std::string_view line = lines_[i];
    const std::string t = trim(line);

    if (format_ == DocFormat::Markdown) {
      if (auto h = hash_heading(strip_eol(line))) {
        start_text(line, *h);
        return i + 1;
      }
      if (auto fence = fence_open(line)) {
        std::size_t j = i + 1;
        while (j < lines_.size() && !fence_closes(lines_[j], *fence)) ++j;
        return emit_range(BlockKind::Pseudocode, i, std::min(j + 1, lines_.size()));
      }
      if (starts_with(t, "$$")) {
        const bool one_line = t.size() >= 4 && t.find("$$", 2) != std::string::npos;
        std::size_t j = i;
        if (!one_line) {
          j = i + 1;
          while (j < lines_.size() && trim(lines_[j]).find("$$") == std::string::npos) ++j;
        }
        return emit_range(BlockKind::Equation, i, std::min(j + 1, lines_.size()));
      }
      if (starts_with(t, "\\[")) {
        std::size_t j = i;
        while (j < lines_.size() && trim(lines_[j]).find("\\]") == std::string::npos) ++j;
        return emit_range(BlockKind::Equation, i, std::min(j + 1, lines_.size()));
      }
      std::smatch env;
      if (std::regex_search(t, env, math_env_re())) {
        const std::string end_tag = "\\end{" + env[1].str() + env[2].str() + "}";
        std::size_t j = i;
        while (j < lines_.size() && std::string(lines_[j]).find(end_tag) == std::string::npos) ++j;
        return emit_range(BlockKind::Equation, i, std::min(j + 1, lines_.size()));
      }
      if (starts_with(t, "|")) {
        std::size_t j = i;
        while (j < lines_.size() && starts_with(trim(lines_[j]), "|")) ++j;
        return emit_range(BlockKind::Table, i, j);
      }
      if (starts_with(t, "![")) {
        return emit_paragraph(BlockKind::FigureCaption, i);
      }
    } else {
      if (std::regex_search(t, algorithm_re())) {
        return emit_paragraph(BlockKind::Pseudocode, i);
      }
    }

    if (std::regex_search(t, figure_re())) {
      return emit_paragraph(BlockKind::FigureCaption, i);
    }
    if (auto h = numeric_heading(lines_, i)) {
      start_text(line, *h);
      return i + 1;
    }
    if (!text_open_) {
      text_open_ = true;
      text_ = Block{};
    }
    text_.raw += line;
    return i + 1;
  }

  void start_text(std::string_view line, Heading h) {
    flush_text();
    text_open_ = true;
    text_ = Block{};
    text_.heading = std::move(h);
    text_.raw += line;
  }

  void flush_text() {
    if (text_open_) blocks_.push_back(std::move(text_));
    text_open_ = false;
    text_ = Block{};
  }

  std::size_t emit_range(BlockKind kind, std::size_t begin, std::size_t end) {
    flush_text();
    Block b;
    b.kind = kind;
    for (std::size_t k = begin; k < end; ++k) b.raw += lines_[k];
    blocks_.push_back(std::move(b));
    return end;
  }

  // A non-blank run of lines starting at `begin`.
  std::size_t emit_paragraph(BlockKind kind, std::size_t begin) {
    std::size_t j = begin + 1;
    while (j < lines_.size() && !is_blank(lines_[j]) && !hash_heading(strip_eol(lines_[j]))) ++j;
    return emit_range(kind, begin, j);
  }

  std::vector<std::string_view> lines_;
  DocFormat format_;
  std::vector<Block> blocks_;
  Block text_;
  bool text_open_ = false;
};

double jaccard(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::set<std::string> sa(a.begin(), a.end()), sb(b.begin(), b.end());
  if (sa.empty() || sb.empty()) return 0.0;
  std::size_t inter = 0;
  for (const auto& t : sa) inter += sb.count(t);
  const std::size_t uni = sa.size() + sb.size() - inter;
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace

SourceDocument parse_document(std::string_view raw, DocFormat format, std::string origin) {
  if (raw.empty()) throw Error(ErrorKind::EmptyInput, "zero-length document" +
                                                          (origin.empty() ? std::string() : " " + origin));
  const std::string text = normalize_line_endings(raw);
  SourceDocument doc;
  doc.origin = std::move(origin);
  doc.format = format;
  doc.blocks = Parser(text, format).run();
  return doc;
}

ContentIndex::ContentIndex(std::vector<Chunk> chunks, std::size_t block_count)
    : chunks_(std::move(chunks)), block_count_(block_count) {}

ContentIndex build_index(const SourceDocument& doc) {
  std::vector<Chunk> chunks;
  const auto& blocks = doc.blocks;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const bool opens = blocks[i].heading.has_value();
    if (opens || chunks.empty()) {
      Chunk c;
      if (opens) {
        c.heading = blocks[i].heading->text;
        c.title = blocks[i].heading->title;
        c.depth = blocks[i].heading->depth;
      } else {
        c.heading = std::string(kFrontmatterHeading);
        c.title = c.heading;
        c.depth = 1;
        c.synthetic = true;
      }
      c.span_begin = i;
      c.span_end = i;
      chunks.push_back(std::move(c));
    }
    Chunk& cur = chunks.back();
    cur.span_end = i + 1;
    cur.content += blocks[i].raw;
  }

  // Parent = nearest preceding real heading with a smaller depth.
  std::vector<std::size_t> stack;
  for (std::size_t k = 0; k < chunks.size(); ++k) {
    if (chunks[k].synthetic) continue;
    while (!stack.empty() && chunks[stack.back()].depth >= chunks[k].depth) stack.pop_back();
    if (!stack.empty()) {
      chunks[k].parent = stack.back();
      chunks[stack.back()].children.push_back(k);
    }
    stack.push_back(k);
  }
  return ContentIndex(std::move(chunks), blocks.size());
}

std::vector<QueryHit> ContentIndex::query(std::string_view keyword, std::size_t limit) const {
  if (limit == 0) throw std::invalid_argument("query limit must be >= 1");
  const std::string key = to_lower(collapse_whitespace(keyword));
  std::vector<QueryHit> hits;
  if (key.empty()) return hits;
  const auto key_tokens = content_tokens(key);

  for (std::size_t k = 0; k < chunks_.size(); ++k) {
    const Chunk& c = chunks_[k];
    const std::string title = to_lower(collapse_whitespace(c.title));
    const std::string heading = to_lower(collapse_whitespace(c.heading));
    if (key == title || key == heading) {
      hits.push_back({k, 3.0, MatchRule::ExactHeading});
    } else if (heading.find(key) != std::string::npos) {
      hits.push_back({k, 2.0, MatchRule::HeadingSubstring});
    } else if (to_lower(c.content).find(key) != std::string::npos) {
      hits.push_back({k, 1.0, MatchRule::ContentSubstring});
    } else {
      const double j = jaccard(key_tokens, content_tokens(c.heading + "\n" + c.content));
      if (j > 0.0) hits.push_back({k, j, MatchRule::TokenOverlap});
    }
  }
  std::stable_sort(hits.begin(), hits.end(),
                   [](const QueryHit& a, const QueryHit& b) { return a.score > b.score; });
  if (hits.size() > limit) hits.resize(limit);
  return hits;
}

json ContentIndex::to_json() const {
  json chunks = json::array();
  for (const auto& c : chunks_) {
    json jc = {{"heading", c.heading},
               {"title", c.title},
               {"depth", c.depth},
               {"span", {c.span_begin, c.span_end}},
               {"content", c.content},
               {"synthetic", c.synthetic}};
    jc["parent"] = c.parent ? json(*c.parent) : json(nullptr);
    chunks.push_back(std::move(jc));
  }
  return {{"schema", "content_index.v1"}, {"block_count", block_count_}, {"chunks", chunks}};
}

ContentIndex ContentIndex::from_json(const json& j) {
  std::vector<Chunk> chunks;
  for (const auto& jc : j.at("chunks")) {
    Chunk c;
    c.heading = jc.at("heading").get<std::string>();
    c.title = jc.at("title").get<std::string>();
    c.depth = jc.at("depth").get<int>();
    c.span_begin = jc.at("span").at(0).get<std::size_t>();
    c.span_end = jc.at("span").at(1).get<std::size_t>();
    c.content = jc.at("content").get<std::string>();
    c.synthetic = jc.value("synthetic", false);
    if (!jc.at("parent").is_null()) c.parent = jc.at("parent").get<std::size_t>();
    chunks.push_back(std::move(c));
  }
  for (std::size_t k = 0; k < chunks.size(); ++k) {
    if (chunks[k].parent) chunks.at(*chunks[k].parent).children.push_back(k);
  }
  return ContentIndex(std::move(chunks), j.at("block_count").get<std::size_t>());
}

}  // namespace repogen
