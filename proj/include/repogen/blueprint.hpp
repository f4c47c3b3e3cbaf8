#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace repogen {

struct PlannedFile {
  std::string path;
  int priority = 1;  // 1 is most urgent
  std::string description;
};

struct SymbolSpec {
  std::string kind;  // function | class | constant | ...
  std::string name;
  std::string signature;
  std::string description;
};

struct ComponentSpec {
  std::string purpose;
  std::vector<SymbolSpec> symbols;
  std::vector<std::string> links;    // algorithm catalog ids
  std::vector<std::string> imports;  // internal planned paths this file depends on
};

struct VerificationProtocol {
  std::string setup;
  std::vector<std::string> metrics;
  std::vector<std::string> success_criteria;
};

struct Dependency {
  std::string name;
  std::string version;  // may be empty

  friend bool operator==(const Dependency&, const Dependency&) = default;
};

struct ExecutionEnvironment {
  std::vector<Dependency> dependencies;
  std::string hardware;
};

struct Stage {
  std::string name;
  std::vector<std::string> files;
  std::string check;
};

/// Equations, pseudocode and hyperparameters copied from the algorithmic
/// analysis so that generation never needs the source document.
struct CatalogItem {
  std::string id;
  std::string kind;  // equation | pseudocode | hyperparameter
  std::string text;
};

struct Blueprint {
  std::vector<PlannedFile> file_hierarchy;
  std::map<std::string, ComponentSpec> component_specs;
  VerificationProtocol verification_protocol;
  ExecutionEnvironment execution_environment;
  std::vector<Stage> staged_plan;
  std::vector<CatalogItem> algorithm_catalog;

  bool has_file(std::string_view path) const;
  std::optional<std::size_t> file_order(std::string_view path) const;
  std::vector<std::string> files() const;
  const ComponentSpec* spec(std::string_view path) const;
  const PlannedFile* planned(std::string_view path) const;
  std::optional<std::size_t> stage_of(std::string_view path) const;
  /// Internal planned files `path` depends on, per its component spec.
  std::vector<std::string> internal_deps(std::string_view path) const;
  const CatalogItem* catalog_item(std::string_view id) const;

  nlohmann::json to_json() const;
  static Blueprint from_json(const nlohmann::json& j);

  /// Deterministic plain-text rendering used inside prompts.
  std::string render() const;
};

struct ValidationReport {
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
};

/// Checks every blueprint invariant: unique, safe relative paths; spec keys,
/// imports and stage files drawn from the hierarchy; catalog links resolve;
/// stages partition the file set.
ValidationReport validate_blueprint(const Blueprint& b);

/// Relative, non-empty, no "..", not absolute.
bool is_safe_relative_path(std::string_view path);

}  // namespace repogen
