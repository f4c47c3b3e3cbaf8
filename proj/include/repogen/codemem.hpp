#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "repogen/blueprint.hpp"
#include "repogen/llm_gateway.hpp"
#include "repogen/prompts.hpp"
#include "repogen/sandbox.hpp"

namespace repogen {

struct InterfaceSymbol {
  std::string kind;
  std::string name;
  std::string signature;
  std::string purpose;
};

struct AfferentImport {
  std::string module;
  std::vector<std::string> symbols;
  std::string resolved_path;  // planned file, empty for external packages
};

/// Compressed state of one implemented file.
struct MemoryEntry {
  std::string file;
  std::string purpose;
  std::vector<InterfaceSymbol> public_interface;
  std::vector<AfferentImport> afferent;
  std::vector<std::string> efferent_predicted;

  std::vector<std::string> internal_afferent_paths() const;
  nlohmann::json to_json() const;
  static MemoryEntry from_json(const nlohmann::json& j);
  /// Compact rendering placed in generation prompts.
  std::string render() const;
};

/// Append-only repository memory.
class CodeMemory {
public:
  bool contains(std::string_view file) const;
  const MemoryEntry& at(std::string_view file) const;
  std::size_t size() const noexcept { return order_.size(); }
  bool empty() const noexcept { return order_.empty(); }
  const std::vector<std::string>& generation_order() const noexcept { return order_; }
  const std::map<std::string, MemoryEntry, std::less<>>& entries() const noexcept { return entries_; }

  nlohmann::json to_json() const;
  static CodeMemory from_json(const nlohmann::json& j);

private:
  friend CodeMemory update_memory(const CodeMemory&, MemoryEntry);
  std::map<std::string, MemoryEntry, std::less<>> entries_;
  std::vector<std::string> order_;
};

/// Returns a new memory with `entry` appended. DuplicateFile when present.
CodeMemory update_memory(const CodeMemory& memory, MemoryEntry entry);

/// Import statements found lexically (Python, JS/TS, C/C++ includes).
struct LexicalImport {
  std::string module;
  std::vector<std::string> symbols;
};
std::vector<LexicalImport> extract_imports(std::string_view path, std::string_view text);

/// Maps an import to a planned file, or "" when it is external.
std::string resolve_import(std::string_view importer, std::string_view module, const Blueprint& blueprint);

/// Snippet of reference code injected into a generation context.
struct SnippetSpan {
  std::string path;
  int start_line = 1;
  int end_line = 1;
  std::string text;
};

struct Augmentation {
  std::string source_repo;
  std::string source_file;
  std::string relation_type;
  double confidence = 0.0;
  std::vector<SnippetSpan> snippets;
  std::string usage_notes;

  std::string render() const;
  nlohmann::json to_json() const;
};

struct MemorySelection {
  std::vector<MemoryEntry> entries;
  bool truncated = false;
};

/// Entries the target depends on (blueprint imports) first, then entries that
/// predict the target as a consumer; hierarchy order within each group. The
/// ranked list is cut at the first entry that no longer fits `budget_tokens`.
MemorySelection select_relevant_memory(const CodeMemory& memory, std::string_view target, const Blueprint& blueprint,
                                       std::size_t budget_tokens = SIZE_MAX,
                                       const Tokenizer& tokenizer = default_tokenizer());

struct ContextOptions {
  std::size_t budget_tokens = 16000;
  const Tokenizer* tokenizer = &default_tokenizer();
  std::shared_ptr<const PromptTemplates> templates;
};

struct GenerationContext {
  std::string target;
  std::optional<std::string> next_target_hint;
  std::vector<MemoryEntry> selected_summaries;
  bool truncated = false;
  std::optional<Augmentation> retrieval;
  std::string rendered;  // the prompt sent to the coder
  std::size_t tokens = 0;
};

/// BudgetExceeded when the blueprint alone (plus retrieval) overflows.
GenerationContext formulate_context(const Blueprint& blueprint, const CodeMemory& memory, std::string_view target,
                                     const std::optional<Augmentation>& retrieval = std::nullopt,
                                     const std::optional<std::string>& next_target_hint = std::nullopt,
                                     const ContextOptions& options = {});

struct GeneratedFile {
  std::string text;
  int retries = 0;
};

/// Asks the coder for the target file and writes it to `repo_dir/target`.
GeneratedFile generate_file(const GenerationContext& ctx, Gateway& gateway, Sandbox& sandbox,
                            const fs::path& repo_dir, int max_retries = 2);

struct FileSummary {
  MemoryEntry entry;
  std::optional<std::string> next_target;  // model suggestion, kept out of memory
  int retries = 0;
};

/// Summarizer call. Claimed imports must exist lexically; lexical imports the
/// model omitted are added. SchemaParseFailure after the retry budget.
FileSummary summarize_file(std::string_view file, std::string_view text, Gateway& gateway, const Blueprint& blueprint,
                           int max_retries = 2, std::shared_ptr<const PromptTemplates> templates = nullptr);

struct NextTarget {
  std::optional<std::string> path;  // nullopt when every file is implemented
  bool suggestion_overridden = false;
};

/// Picks an unimplemented file whose planned dependencies are all implemented.
/// A valid suggestion wins; otherwise (stage, priority, hierarchy order).
/// CyclicDependency when files remain but none is eligible.
NextTarget select_next_target(const CodeMemory& memory, const Blueprint& blueprint,
                              const std::optional<std::string>& suggestion = std::nullopt);

/// Same rule over an explicit set of implemented paths.
NextTarget select_next_target(const std::set<std::string>& implemented, const Blueprint& blueprint,
                              const std::optional<std::string>& suggestion = std::nullopt);

/// Hook used by the loop to ask for retrieval; returns nothing to skip.
using RetrievalHook = std::function<std::optional<Augmentation>(const GenerationContext&, const std::string& target)>;

struct GenerationOptions {
  ContextOptions context;
  int max_retries = 2;
  fs::path repo_dir = "repo";
  std::optional<fs::path> memory_dir = fs::path("memory");
  RetrievalHook retrieval;
};

struct GenerationStep {
  std::size_t step = 0;
  std::string target;
  std::optional<std::string> next_target_hint;
  std::optional<std::string> suggestion;
  bool suggestion_overridden = false;
  std::vector<std::string> selected;
  bool truncated = false;
  std::size_t context_tokens = 0;
  std::optional<std::string> retrieved_from;
  bool dependencies_in_memory = true;
  std::vector<std::string> warnings;

  nlohmann::json to_json() const;
};

struct GenerationRun {
  CodeMemory memory;
  std::vector<GenerationStep> steps;
};

/// Runs the generate / summarize / update loop until every planned file is
/// implemented: exactly N steps for N files, or CyclicDependency.
GenerationRun run_generation(const Blueprint& blueprint, Gateway& gateway, Sandbox& sandbox,
                             const GenerationOptions& options = {});

}  // namespace repogen
