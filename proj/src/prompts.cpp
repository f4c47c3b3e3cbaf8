#include "repogen/prompts.hpp"

#include "repogen/error.hpp"
#include "repogen/text.hpp"

namespace repogen {

namespace {

const std::map<std::string, std::string, std::less<>>& builtin() {
  static const std::map<std::string, std::string, std::less<>> t = {
      {"concept_analysis",
       R"(You are the concept analysis agent. Build a high-level map of the document below.
Only the listed sections are available; do not assume content that is not shown.

Sections fetched for keywords: {{keywords}}
{{chunks}}
Reply with one JSON object:
{"structure_map": [{"section": "<exact section heading>", "summary": "..."}],
 "method_components": [{"name": "...", "responsibility": "..."}],
 "implementation_map": [{"claim": "...", "code_requirement": "...", "components": ["<component name>"]}],
 "reproduction_roadmap": ["<success criterion>"]}
)"},
      {"algorithm_analysis",
       R"(You are the algorithm analysis agent. Extract every technical detail needed for an exact implementation
from the sections below: pseudocode (verbatim), equations with their variables, architectures layer by layer,
and every hyperparameter. Cite each item with the number of the chunk it came from.

Sections fetched for keywords: {{keywords}}
{{chunks}}{{references}}
Reply with one JSON object:
{"pseudocode": [{"label": "...", "text": "<verbatim>", "source": <chunk number>}],
 "equations": [{"id": "E1", "expression": "...", "variables": ["..."], "source": <chunk number>}],
 "architectures": [{"name": "...", "description": "...", "source": <chunk number>}],
 "hyperparameters": [{"name": "...", "value": "<as written>", "source": <chunk number>}]}
)"},
      {"blueprint_synthesis",
       R"(You are the code planning agent. Merge the conceptual and algorithmic analyses into one implementation
blueprint. When the two disagree on a technical detail, the algorithmic analysis is authoritative.

Conceptual analysis:
{{concept}}

Algorithmic analysis:
{{algorithm}}
{{extra}}
Reply with one JSON object:
{"file_hierarchy": [{"path": "...", "priority": 1, "description": "..."}],
 "component_specs": {"<path>": {"purpose": "...", "symbols": [{"kind": "function|class|constant", "name": "...",
   "signature": "...", "description": "..."}], "links": ["<equation id or pseudocode label>"], "imports": ["<path>"]}},
 "verification_protocol": {"setup": "...", "metrics": ["..."], "success_criteria": ["..."]},
 "execution_environment": {"dependencies": [{"name": "...", "version": "..."}], "hardware": "..."},
 "staged_plan": [{"name": "...", "files": ["<path>"], "check": "<command or description>"}]}
)"},
      {"generate_file",
       R"(You are the code generation agent. Write the complete contents of exactly one file.

Target file: {{target}}

Implementation blueprint:
{{blueprint}}

Implemented files relevant to this target (summaries only):
{{memory}}
{{next_hint}}{{reference}}
Reply with the file contents in a single fenced code block.
)"},
      {"summarize_file",
       R"(You are the code summarization agent. Describe the structural essence of the file below so other files
can use it without reading its source.

File: {{path}}
Planned files in the repository: {{planned}}

{{code}}
Reply with one JSON object:
{"purpose": "...",
 "public_interface": [{"kind": "function|class|constant", "name": "...", "signature": "...", "purpose": "..."}],
 "afferent": [{"module": "<imported module>", "symbols": ["..."]}],
 "efferent_predicted": ["<planned path expected to use this file>"],
 "next_target": "<planned path to implement next>"}
)"},
      {"rag_filter",
       R"(You are the code reference mining agent. Select the reference files most useful for implementing the
planned project.

Planned project files:
{{planned}}

Reference repository {{repo}} contains:
{{listing}}
Reply with one JSON object: {"files": ["<path from the listing>"]}
)"},
      {"rag_understand",
       R"(You are the code indexing agent. Summarize the reference file below.

File: {{path}}
{{code}}
Reply with one JSON object:
{"purpose": "...", "concepts": ["..."],
 "public_interface": [{"kind": "...", "name": "...", "signature": "...", "purpose": "..."}]}
)"},
      {"rag_map",
       R"(You are the code indexing agent. Map the summarized reference file onto the planned project files it can
help implement.

Reference file: {{path}} ({{line_count}} lines)
Summary:
{{summary}}

Planned project files:
{{planned}}
Reply with one JSON object:
{"relationships": [{"target": "<planned path>",
  "type": "direct-implementation|partial-pattern|utility|conceptual", "confidence": 0.0,
  "snippets": [{"start_line": 1, "end_line": 1}], "notes": "..."}]}
)"},
      {"quality_review",
       R"(You are the static analysis agent. Assess the quality of the file below and flag sections with poor style,
complexity or maintainability.

File: {{path}}
{{code}}
Reply with one JSON object:
{"score": 0.0, "issues": [{"start_line": 1, "end_line": 1, "description": "...", "instruction": "..."}]}
)"},
      {"quality_fix",
       R"(You are the modification agent. Fix the issue below with line-level edits only.

Issue {{issue_id}} in {{path}} (lines {{location}}): {{description}}
Instruction: {{instruction}}

{{code}}
Reply with one JSON object:
{"patches": [{"file": "{{path}}", "edits": [{"start_line": 1, "end_line": 1, "text": "..."}], "rationale": "..."}]}
)"},
      {"synthesize_missing",
       R"(You are the code generation agent. A planned file is missing or empty; write its complete contents.

Target file: {{target}}
Issue: {{description}}

Implementation blueprint:
{{blueprint}}

Reply with the file contents in a single fenced code block.
)"},
      {"fault_localize",
       R"(You are the sandbox agent. The command below failed and its errors could not be attributed to files.

Command: {{command}}
Exit code: {{exit_code}}
Stderr:
{{stderr}}
Repository files:
{{files}}
Reply with one JSON object: {"files": ["<repository path likely at fault>"]}
)"},
      {"runtime_fix",
       R"(You are the sandbox agent. Running the repository failed. Patch the code with line-level edits so the
command succeeds.

Command: {{command}}
Exit code: {{exit_code}}
Errors:
{{errors}}
Stderr:
{{stderr}}
{{files}}
Reply with one JSON object:
{"patches": [{"file": "<path>", "edits": [{"start_line": 1, "end_line": 1, "text": "..."}], "rationale": "..."}]}
)"},
  };
  return t;
}

}  // namespace

std::string render_template(std::string_view tmpl, const TemplateVars& vars) {
  std::string out;
  out.reserve(tmpl.size() * 2);
  std::size_t pos = 0;
  while (pos < tmpl.size()) {
    const std::size_t open = tmpl.find("{{", pos);
    if (open == std::string_view::npos) {
      out.append(tmpl.substr(pos));
      break;
    }
    const std::size_t close = tmpl.find("}}", open + 2);
    if (close == std::string_view::npos) {
      out.append(tmpl.substr(pos));
      break;
    }
    const std::string_view name = tmpl.substr(open + 2, close - open - 2);
    auto it = vars.find(name);
    if (it == vars.end()) {
      throw Error(ErrorKind::ConfigError, "template placeholder '" + std::string(name) + "' has no value");
    }
    out.append(tmpl.substr(pos, open - pos));
    out.append(it->second);
    pos = close + 2;
  }
  return out;
}

PromptTemplates::PromptTemplates() : templates_(builtin()) {}

void PromptTemplates::load_overrides(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw Error(ErrorKind::ConfigError, "prompt directory " + dir.string() + " does not exist");
  }
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".txt") {
      templates_[entry.path().stem().string()] = read_text_file(entry.path());
    }
  }
}

bool PromptTemplates::has(std::string_view id) const { return templates_.find(id) != templates_.end(); }

const std::string& PromptTemplates::get(std::string_view id) const {
  auto it = templates_.find(id);
  if (it == templates_.end()) throw Error(ErrorKind::ConfigError, "unknown prompt template '" + std::string(id) + "'");
  return it->second;
}

std::string PromptTemplates::render(std::string_view id, const TemplateVars& vars) const {
  return render_template(get(id), vars);
}

const PromptTemplates& default_templates() {
  static const PromptTemplates t;
  return t;
}

}  // namespace repogen
