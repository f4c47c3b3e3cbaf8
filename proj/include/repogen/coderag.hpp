#pragma once

#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "repogen/blueprint.hpp"
#include "repogen/codemem.hpp"
#include "repogen/llm_gateway.hpp"
#include "repogen/prompts.hpp"
#include "repogen/sandbox.hpp"

namespace repogen {

/// The four accepted relation types.
const std::vector<std::string>& relation_types();

/// Link from a reference-repository file to a planned blueprint file.
struct RelationshipTuple {
  std::string source_repo;
  std::string source_file;
  std::string target_file;
  std::string relation_type;
  double confidence = 0.0;  // within [0, 1]
  std::vector<SnippetSpan> snippets;
  std::string usage_notes;

  Augmentation augmentation() const;
  nlohmann::json to_json() const;
  static RelationshipTuple from_json(const nlohmann::json& j);
};

/// Structured summary of one reference file, mirroring a memory entry.
struct SourceSummary {
  std::string path;
  std::string purpose;
  std::vector<std::string> concepts;
  std::vector<InterfaceSymbol> public_interface;
  std::size_t line_count = 0;
  int retries = 0;

  std::string render() const;
};

struct IndexedRepo {
  std::string name;
  std::vector<std::string> files;  // files kept by the filter stage
  bool failed = false;
};

/// Immutable index. `per_target` regroups `tuples` by target, ordered by
/// confidence descending, then source path.
class RagIndex {
public:
  RagIndex() = default;
  RagIndex(std::vector<RelationshipTuple> tuples, std::vector<IndexedRepo> manifest,
           std::vector<std::string> warnings = {});

  const std::vector<RelationshipTuple>& tuples() const noexcept { return tuples_; }
  const std::vector<IndexedRepo>& repo_manifest() const noexcept { return manifest_; }
  const std::vector<std::string>& warnings() const noexcept { return warnings_; }
  /// Tuples for `target` in retrieval order; empty when none.
  const std::vector<RelationshipTuple>& for_target(std::string_view target) const;
  const std::map<std::string, std::vector<RelationshipTuple>, std::less<>>& per_target() const noexcept {
    return per_target_;
  }
  bool empty() const noexcept { return tuples_.empty(); }

  nlohmann::json to_json() const;
  static RagIndex from_json(const nlohmann::json& j);

private:
  std::vector<RelationshipTuple> tuples_;
  std::vector<IndexedRepo> manifest_;
  std::vector<std::string> warnings_;
  std::map<std::string, std::vector<RelationshipTuple>, std::less<>> per_target_;
};

struct RagOptions {
  std::vector<std::string> blacklist;  // denied repo names/paths or file path prefixes
  int max_retries = 2;
  std::shared_ptr<const PromptTemplates> templates;
};

struct FilterResult {
  std::vector<std::string> files;
  std::vector<std::string> warnings;
};

/// True for paths the static rules exclude before any listing is shown.
bool statically_excluded(std::string_view relative_path, std::string_view head_bytes);

/// Static exclusion, then a model pick from the remaining listing. Picks that
/// are not in the listing are dropped with a warning. EmptyRepo when nothing
/// survives the static rules.
FilterResult filter_relevant_files(Sandbox& sandbox, const fs::path& repo_dir, std::string_view repo_name,
                                   const Blueprint& blueprint, Gateway& gateway, const RagOptions& options = {});

/// SchemaParseFailure after the retry budget.
SourceSummary understand_source(std::string_view path, std::string_view text, Gateway& gateway,
                                const RagOptions& options = {});

struct MappingResult {
  std::vector<RelationshipTuple> tuples;
  std::vector<std::string> warnings;
};

/// Tuples for one summarized file. Unknown targets or types are dropped,
/// confidences clamped to [0, 1], snippet text cut from `text` by line span.
MappingResult map_relationships(const SourceSummary& summary, std::string_view text, std::string_view repo_name,
                                const Blueprint& blueprint, Gateway& gateway, const RagOptions& options = {});

struct ReferenceRepo {
  std::string name;
  fs::path dir;  // inside the sandbox
};

/// filter, understand and map per repository. A repository that fails is
/// recorded in the manifest; the build fails only when every repository does.
RagIndex build_index(const std::vector<ReferenceRepo>& repos, const Blueprint& blueprint, Gateway& gateway,
                     Sandbox& sandbox, const RagOptions& options = {});

struct RetrievalPolicy {
  double detail_threshold = 0.5;
  std::size_t complexity_threshold = 3;
};

/// Mean over symbols of 0.5 for a signature plus 0.5 for a description; 0
/// without symbols.
double detail_score(const ComponentSpec* spec);

/// Number of linked catalog items that are equations or pseudocode.
std::size_t linked_complexity(const Blueprint& blueprint, std::string_view target);

bool decide_retrieval(const GenerationContext& ctx, const Blueprint& blueprint, const RagIndex& index,
                      const RetrievalPolicy& policy = {});

/// Context of the highest-confidence tuple for `target`. NoTuple when none.
Augmentation retrieve(const RagIndex& index, std::string_view target);

/// Generation hook applying decide_retrieval then retrieve.
RetrievalHook make_retrieval_hook(std::shared_ptr<const RagIndex> index, const Blueprint& blueprint,
                                  RetrievalPolicy policy = {});

}  // namespace repogen
