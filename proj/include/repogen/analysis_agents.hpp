#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "repogen/blueprint.hpp"
#include "repogen/doc_index.hpp"
#include "repogen/llm_gateway.hpp"
#include "repogen/prompts.hpp"

namespace repogen {

struct SectionSummary {
  std::string section;
  std::string summary;
};

struct MethodComponent {
  std::string name;
  std::string responsibility;
};

struct ImplementationItem {
  std::string claim;
  std::string code_requirement;
  std::vector<std::string> components;
};

struct ConceptSchema {
  std::vector<SectionSummary> structure_map;
  std::vector<MethodComponent> method_components;
  std::vector<ImplementationItem> implementation_map;
  std::vector<std::string> reproduction_roadmap;

  nlohmann::json to_json() const;
  /// Parses and validates against `index`; throws ReplyInvalid.
  static ConceptSchema from_json(const nlohmann::json& j, const ContentIndex& index);
};

struct PseudocodeItem {
  std::string label;
  std::string text;
  std::size_t source = 0;  // chunk number in the content index
};

struct EquationItem {
  std::string id;
  std::string expression;
  std::vector<std::string> variables;
  std::size_t source = 0;
};

struct ArchitectureItem {
  std::string name;
  std::string description;
  std::size_t source = 0;
};

struct Hyperparameter {
  std::string name;
  std::string value;
  std::size_t source = 0;
};

struct AlgorithmSchema {
  std::vector<PseudocodeItem> pseudocode;
  std::vector<EquationItem> equations;
  std::vector<ArchitectureItem> architectures;
  std::vector<Hyperparameter> hyperparameters;

  nlohmann::json to_json() const;
  /// Every item must cite an existing chunk; pseudocode text and
  /// hyperparameter values must occur in the cited chunk; names are unique.
  static AlgorithmSchema from_json(const nlohmann::json& j, const ContentIndex& index);
};

struct SearchResult {
  std::string title;
  std::string url;
  std::string snippet;
};

/// Optional online search used by the algorithm agent. Failures degrade the
/// agent to offline mode.
class WebSearch {
public:
  virtual ~WebSearch() = default;
  virtual std::vector<SearchResult> search(const std::string& query) = 0;
};

struct AnalysisOptions {
  std::vector<std::string> concept_keywords = {"introduction", "overview", "method", "approach",
                                               "experiment", "evaluation", "conclusion"};
  std::vector<std::string> algorithm_keywords = {"algorithm", "equation", "architecture", "training",
                                                 "hyperparameter", "implementation"};
  std::size_t query_budget = 16;
  std::size_t hits_per_query = 3;
  int max_retries = 2;
  std::size_t requery_rounds = 2;  // planner repair rounds on blueprint violations
  std::size_t search_limit = 2;
  std::shared_ptr<const PromptTemplates> templates;
};

/// What an agent did, for the run report and for tests.
struct AgentTrace {
  std::vector<std::string> queries;
  std::vector<std::size_t> fetched_chunks;
  bool fallback_document_order = false;
  int retries = 0;
  std::size_t requeries = 0;
  bool offline = true;
  std::vector<std::string> warnings;
};

template <typename T>
struct AgentResult {
  T value;
  AgentTrace trace;
};

AgentResult<ConceptSchema> run_concept_agent(const ContentIndex& index, Gateway& gateway,
                                             const AnalysisOptions& options = {});

AgentResult<AlgorithmSchema> run_algorithm_agent(const ContentIndex& index, Gateway& gateway,
                                                 WebSearch* search = nullptr,
                                                 const AnalysisOptions& options = {});

/// Builds the catalog section of a blueprint from the algorithmic analysis.
std::vector<CatalogItem> catalog_from(const AlgorithmSchema& algo);

/// Throws BlueprintValidationFailure when violations survive the repair rounds.
AgentResult<Blueprint> synthesize_blueprint(const ConceptSchema& concept_schema, const AlgorithmSchema& algo,
                                            const ContentIndex& index, Gateway& gateway,
                                            const AnalysisOptions& options = {});

}  // namespace repogen
