#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>

namespace repogen {

using TemplateVars = std::map<std::string, std::string, std::less<>>;

/// Prompt templates keyed by id. Built-in defaults can be overridden by
/// `<id>.txt` files in a config directory. Placeholders are `{{name}}`.
class PromptTemplates {
public:
  PromptTemplates();

  /// Loads every `<id>.txt` in `dir`, replacing same-id defaults.
  void load_overrides(const std::filesystem::path& dir);

  const std::string& get(std::string_view id) const;
  bool has(std::string_view id) const;

  /// Throws ConfigError for unknown ids or placeholders without a value.
  std::string render(std::string_view id, const TemplateVars& vars) const;

private:
  std::map<std::string, std::string, std::less<>> templates_;
};

const PromptTemplates& default_templates();

std::string render_template(std::string_view tmpl, const TemplateVars& vars);

}  // namespace repogen
