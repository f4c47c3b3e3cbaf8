#include "repogen/analysis_agents.hpp"

#include <algorithm>
#include <regex>
#include <set>

#include <nlohmann/json.hpp>

#include "repogen/agent_reply.hpp"
#include "repogen/error.hpp"
#include "repogen/text.hpp"

namespace repogen {

using nlohmann::json;

namespace {

const PromptTemplates& templates_of(const AnalysisOptions& o) {
  return o.templates ? *o.templates : default_templates();
}

std::vector<std::string> string_array(const json& j, const char* key) {
  std::vector<std::string> out;
  for (const auto& s : req_array(j, key)) {
    if (!s.is_string()) throw ReplyInvalid(std::string("entries of '") + key + "' must be strings");
    out.push_back(s.get<std::string>());
  }
  return out;
}

std::size_t source_of(const json& item, const ContentIndex& index, const std::string& what) {
  const long long src = req_int(item, "source");
  if (src < 0 || static_cast<std::size_t>(src) >= index.size()) {
    throw ReplyInvalid(what + " cites chunk " + std::to_string(src) + " which does not exist (index has " +
                       std::to_string(index.size()) + " chunks)");
  }
  return static_cast<std::size_t>(src);
}

bool occurs_in_chunk(const ContentIndex& index, std::size_t k, const std::string& text) {
  return to_lower(collapse_whitespace(index.chunk(k).content)).find(to_lower(collapse_whitespace(text))) !=
         std::string::npos;
}

std::string render_chunk(const ContentIndex& index, std::size_t k) {
  const Chunk& c = index.chunk(k);
  std::string out = "### [chunk " + std::to_string(k) + "] " + c.heading + "\n";
  out += c.content;
  if (out.back() != '\n') out.push_back('\n');
  return out;
}

std::string join(const std::vector<std::string>& v, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += sep;
    out += v[i];
  }
  return out;
}

// Issues keyword queries within the budget and collects distinct chunk ids.
void fetch_chunks(const ContentIndex& index, const std::vector<std::string>& keywords,
                  const AnalysisOptions& options, AgentTrace& trace) {
  std::set<std::size_t> seen;
  for (const auto& kw : keywords) {
    if (trace.queries.size() >= options.query_budget) break;
    trace.queries.push_back(kw);
    for (const auto& hit : index.query(kw, std::max<std::size_t>(1, options.hits_per_query))) {
      if (seen.insert(hit.chunk).second) trace.fetched_chunks.push_back(hit.chunk);
    }
  }
  if (trace.fetched_chunks.empty()) {
    trace.fallback_document_order = true;
    for (std::size_t k = 0; k < index.size(); ++k) trace.fetched_chunks.push_back(k);
  }
}

// Renders the prompt with as many fetched chunks as the role budget allows.
// Chunks that do not fit are dropped and recorded.
std::string build_chunk_prompt(const PromptTemplates& tpl, const std::string& template_id, TemplateVars vars,
                               const ContentIndex& index, Gateway& gateway, Role role, AgentTrace& trace) {
  const std::size_t budget = gateway.budgets().for_role(role);
  // Room for one retry feedback paragraph.
  const std::size_t reserve = 256;
  const std::size_t limit = budget > reserve ? budget - reserve : budget;
  std::string chunks;
  std::vector<std::size_t> kept;
  for (std::size_t k : trace.fetched_chunks) {
    std::string candidate = chunks + render_chunk(index, k) + "\n";
    vars["chunks"] = candidate;
    if (gateway.tokenizer().count(tpl.render(template_id, vars)) > limit) {
      trace.warnings.push_back("chunk " + std::to_string(k) + " dropped: context budget");
      continue;
    }
    chunks = std::move(candidate);
    kept.push_back(k);
  }
  trace.fetched_chunks = kept;
  vars["chunks"] = chunks;
  return tpl.render(template_id, vars);
}

}  // namespace

json ConceptSchema::to_json() const {
  json sm = json::array(), mc = json::array(), im = json::array();
  for (const auto& s : structure_map) sm.push_back({{"section", s.section}, {"summary", s.summary}});
  for (const auto& m : method_components) mc.push_back({{"name", m.name}, {"responsibility", m.responsibility}});
  for (const auto& i : implementation_map) {
    im.push_back({{"claim", i.claim}, {"code_requirement", i.code_requirement}, {"components", i.components}});
  }
  return {{"schema", "concept_schema.v1"},
          {"structure_map", sm},
          {"method_components", mc},
          {"implementation_map", im},
          {"reproduction_roadmap", reproduction_roadmap}};
}

ConceptSchema ConceptSchema::from_json(const json& j, const ContentIndex& index) {
  ConceptSchema s;
  std::set<std::string> sections;
  for (const auto& e : req_array(j, "structure_map")) {
    SectionSummary ss{req_string(e, "section"), opt_string(e, "summary")};
    const std::string key = to_lower(collapse_whitespace(ss.section));
    const bool known = std::any_of(index.chunks().begin(), index.chunks().end(), [&](const Chunk& c) {
      return to_lower(collapse_whitespace(c.heading)) == key || to_lower(collapse_whitespace(c.title)) == key;
    });
    if (!known) throw ReplyInvalid("structure_map section '" + ss.section + "' is not a heading of the document");
    if (!sections.insert(key).second) throw ReplyInvalid("structure_map lists '" + ss.section + "' twice");
    s.structure_map.push_back(std::move(ss));
  }
  std::set<std::string> names;
  for (const auto& e : req_array(j, "method_components")) {
    MethodComponent m{req_string(e, "name"), opt_string(e, "responsibility")};
    if (!names.insert(m.name).second) throw ReplyInvalid("method component '" + m.name + "' listed twice");
    s.method_components.push_back(std::move(m));
  }
  std::set<std::string> referenced;
  for (const auto& e : req_array(j, "implementation_map")) {
    ImplementationItem item{req_string(e, "claim"), req_string(e, "code_requirement"),
                            e.contains("components") ? string_array(e, "components") : std::vector<std::string>{}};
    for (const auto& c : item.components) {
      if (!names.count(c)) throw ReplyInvalid("implementation_map references unknown component '" + c + "'");
      referenced.insert(c);
    }
    s.implementation_map.push_back(std::move(item));
  }
  s.reproduction_roadmap = string_array(j, "reproduction_roadmap");

  if (!index.empty()) {
    if (s.structure_map.empty()) throw ReplyInvalid("structure_map is empty");
    if (s.method_components.empty()) throw ReplyInvalid("method_components is empty");
    if (s.implementation_map.empty()) throw ReplyInvalid("implementation_map is empty");
    if (s.reproduction_roadmap.empty()) throw ReplyInvalid("reproduction_roadmap is empty");
  }
  for (const auto& m : s.method_components) {
    if (!referenced.count(m.name)) {
      throw ReplyInvalid("method component '" + m.name + "' is not referenced by any implementation_map entry");
    }
  }
  return s;
}

json AlgorithmSchema::to_json() const {
  json pc = json::array(), eq = json::array(), ar = json::array(), hp = json::array();
  for (const auto& p : pseudocode) pc.push_back({{"label", p.label}, {"text", p.text}, {"source", p.source}});
  for (const auto& e : equations) {
    eq.push_back({{"id", e.id}, {"expression", e.expression}, {"variables", e.variables}, {"source", e.source}});
  }
  for (const auto& a : architectures) {
    ar.push_back({{"name", a.name}, {"description", a.description}, {"source", a.source}});
  }
  for (const auto& h : hyperparameters) hp.push_back({{"name", h.name}, {"value", h.value}, {"source", h.source}});
  return {{"schema", "algorithm_schema.v1"},
          {"pseudocode", pc},
          {"equations", eq},
          {"architectures", ar},
          {"hyperparameters", hp}};
}

AlgorithmSchema AlgorithmSchema::from_json(const json& j, const ContentIndex& index) {
  AlgorithmSchema s;
  std::set<std::string> ids;
  auto fresh_id = [&](const std::string& id, const std::string& what) {
    if (id.empty()) throw ReplyInvalid(what + " has an empty identifier");
    if (!ids.insert(id).second) throw ReplyInvalid("identifier '" + id + "' is used twice");
  };
  for (const auto& e : req_array(j, "pseudocode")) {
    PseudocodeItem p{req_string(e, "label"), req_string(e, "text"), 0};
    p.source = source_of(e, index, "pseudocode '" + p.label + "'");
    fresh_id(p.label, "pseudocode");
    if (!occurs_in_chunk(index, p.source, p.text)) {
      throw ReplyInvalid("pseudocode '" + p.label + "' is not verbatim text of chunk " + std::to_string(p.source));
    }
    s.pseudocode.push_back(std::move(p));
  }
  for (const auto& e : req_array(j, "equations")) {
    EquationItem q{req_string(e, "id"), req_string(e, "expression"),
                   e.contains("variables") ? string_array(e, "variables") : std::vector<std::string>{}, 0};
    q.source = source_of(e, index, "equation '" + q.id + "'");
    fresh_id(q.id, "equation");
    s.equations.push_back(std::move(q));
  }
  for (const auto& e : req_array(j, "architectures")) {
    ArchitectureItem a{req_string(e, "name"), opt_string(e, "description"), 0};
    a.source = source_of(e, index, "architecture '" + a.name + "'");
    s.architectures.push_back(std::move(a));
  }
  std::set<std::string> hp_names;
  for (const auto& e : req_array(j, "hyperparameters")) {
    Hyperparameter h{req_string(e, "name"), req_string(e, "value"), 0};
    h.source = source_of(e, index, "hyperparameter '" + h.name + "'");
    if (!hp_names.insert(h.name).second) throw ReplyInvalid("hyperparameter '" + h.name + "' listed twice");
    if (!occurs_in_chunk(index, h.source, h.value)) {
      throw ReplyInvalid("hyperparameter '" + h.name + "' value '" + h.value + "' does not occur in chunk " +
                         std::to_string(h.source));
    }
    s.hyperparameters.push_back(std::move(h));
  }
  return s;
}

AgentResult<ConceptSchema> run_concept_agent(const ContentIndex& index, Gateway& gateway,
                                             const AnalysisOptions& options) {
  if (index.empty()) throw Error(ErrorKind::EmptyInput, "content index is empty");
  AgentResult<ConceptSchema> result;
  AgentTrace& trace = result.trace;
  fetch_chunks(index, options.concept_keywords, options, trace);

  const auto& tpl = templates_of(options);
  TemplateVars vars{{"keywords", join(trace.queries, ", ")}, {"chunks", ""}};
  const std::string prompt =
      build_chunk_prompt(tpl, "concept_analysis", vars, index, gateway, Role::Concept, trace);

  auto parsed = call_structured(gateway, Role::Concept, "concept_analysis", prompt, "concept_schema.v1",
                                options.max_retries,
                                [&](const json& j) { return ConceptSchema::from_json(j, index); });
  result.value = std::move(parsed.value);
  trace.retries = parsed.retries;
  return result;
}

AgentResult<AlgorithmSchema> run_algorithm_agent(const ContentIndex& index, Gateway& gateway, WebSearch* search,
                                                 const AnalysisOptions& options) {
  if (index.empty()) throw Error(ErrorKind::EmptyInput, "content index is empty");
  AgentResult<AlgorithmSchema> result;
  AgentTrace& trace = result.trace;
  fetch_chunks(index, options.algorithm_keywords, options, trace);

  std::string references;
  if (search != nullptr) {
    trace.offline = false;
    std::vector<SearchResult> found;
    try {
      for (std::size_t i = 0; i < trace.fetched_chunks.size() && i < options.search_limit; ++i) {
        const auto results = search->search(index.chunk(trace.fetched_chunks[i]).title + " reference implementation");
        found.insert(found.end(), results.begin(), results.end());
      }
    } catch (const std::exception& e) {
      trace.offline = true;
      found.clear();
      trace.warnings.push_back(std::string("web search failed, continuing offline: ") + e.what());
    }
    if (!found.empty()) {
      references = "\nReference material from web search:\n";
      for (const auto& r : found) references += "- " + r.title + " (" + r.url + "): " + r.snippet + "\n";
    }
  }

  const auto& tpl = templates_of(options);
  TemplateVars vars{{"keywords", join(trace.queries, ", ")}, {"chunks", ""}, {"references", references}};
  const std::string prompt =
      build_chunk_prompt(tpl, "algorithm_analysis", vars, index, gateway, Role::Algorithm, trace);

  auto parsed = call_structured(gateway, Role::Algorithm, "algorithm_analysis", prompt, "algorithm_schema.v1",
                                options.max_retries,
                                [&](const json& j) { return AlgorithmSchema::from_json(j, index); });
  result.value = std::move(parsed.value);
  trace.retries = parsed.retries;
  return result;
}

std::vector<CatalogItem> catalog_from(const AlgorithmSchema& algo) {
  std::vector<CatalogItem> out;
  for (const auto& e : algo.equations) {
    std::string text = e.expression;
    if (!e.variables.empty()) text += " (variables: " + join(e.variables, ", ") + ")";
    out.push_back({e.id, "equation", text});
  }
  for (const auto& p : algo.pseudocode) out.push_back({p.label, "pseudocode", p.text});
  for (const auto& h : algo.hyperparameters) out.push_back({h.name, "hyperparameter", h.value});
  return out;
}

namespace {

// Quoted identifiers inside violation messages become re-query keywords.
std::vector<std::string> requery_keywords(const std::vector<std::string>& violations) {
  static const std::regex quoted("'([^']+)'");
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& v : violations) {
    for (std::sregex_iterator it(v.begin(), v.end(), quoted), end; it != end; ++it) {
      std::string kw = (*it)[1].str();
      // File paths are matched by their stem ("optim.py" -> "optim").
      const auto dot = kw.rfind('.');
      const auto slash = kw.rfind('/');
      if (dot != std::string::npos && (slash == std::string::npos || dot > slash)) kw = kw.substr(0, dot);
      if (slash != std::string::npos && slash < kw.size()) kw = kw.substr(slash + 1);
      if (!kw.empty() && seen.insert(kw).second) out.push_back(kw);
    }
  }
  return out;
}

}  // namespace

AgentResult<Blueprint> synthesize_blueprint(const ConceptSchema& concept_schema, const AlgorithmSchema& algo,
                                            const ContentIndex& index, Gateway& gateway,
                                            const AnalysisOptions& options) {
  AgentResult<Blueprint> result;
  AgentTrace& trace = result.trace;
  const auto& tpl = templates_of(options);
  const auto catalog = catalog_from(algo);

  TemplateVars vars{{"concept", concept_schema.to_json().dump(1)},
                    {"algorithm", algo.to_json().dump(1)},
                    {"extra", ""}};
  ValidationReport report;
  for (std::size_t round = 0;; ++round) {
    const std::string prompt = tpl.render("blueprint_synthesis", vars);
    auto parsed = call_structured(gateway, Role::Planner, "blueprint_synthesis", prompt, "blueprint.v1",
                                  options.max_retries, [](const json& j) { return Blueprint::from_json(j); });
    trace.retries += parsed.retries;
    Blueprint bp = std::move(parsed.value);
    // The catalog always comes from the algorithmic analysis, never the planner.
    bp.algorithm_catalog = catalog;
    report = validate_blueprint(bp);
    if (report.ok()) {
      result.value = std::move(bp);
      return result;
    }
    if (round >= options.requery_rounds) break;

    std::string extra = "\nThe previous blueprint was inconsistent:\n";
    for (const auto& v : report.violations) extra += "- " + v + "\n";
    std::set<std::size_t> fetched;
    std::string context;
    for (const auto& kw : requery_keywords(report.violations)) {
      if (trace.requeries >= options.query_budget) break;
      ++trace.requeries;
      trace.queries.push_back(kw);
      for (const auto& hit : index.query(kw, 1)) {
        if (fetched.insert(hit.chunk).second) {
          context += render_chunk(index, hit.chunk) + "\n";
          trace.fetched_chunks.push_back(hit.chunk);
        }
      }
    }
    if (!context.empty()) extra += "\nRelevant document sections:\n" + context;
    extra += "Produce a corrected blueprint that resolves every listed inconsistency.\n";
    vars["extra"] = extra;
  }
  throw BlueprintValidationFailure(report.violations);
}

}  // namespace repogen
