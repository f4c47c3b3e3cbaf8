#include "repogen/codemem.hpp"

#include <algorithm>
#include <cstdio>
#include <regex>

#include <nlohmann/json.hpp>

#include "repogen/agent_reply.hpp"
#include "repogen/error.hpp"
#include "repogen/text.hpp"

namespace repogen {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Memory types

std::vector<std::string> MemoryEntry::internal_afferent_paths() const {
  std::vector<std::string> out;
  for (const auto& a : afferent) {
    if (!a.resolved_path.empty() && std::find(out.begin(), out.end(), a.resolved_path) == out.end()) {
      out.push_back(a.resolved_path);
    }
  }
  return out;
}

json MemoryEntry::to_json() const {
  json iface = json::array();
  for (const auto& s : public_interface) {
    iface.push_back({{"kind", s.kind}, {"name", s.name}, {"signature", s.signature}, {"purpose", s.purpose}});
  }
  json aff = json::array();
  for (const auto& a : afferent) {
    aff.push_back({{"module", a.module}, {"symbols", a.symbols}, {"resolved_path", a.resolved_path}});
  }
  return {{"file", file},
          {"purpose", purpose},
          {"public_interface", iface},
          {"dependency_edges", {{"afferent", aff}, {"efferent_predicted", efferent_predicted}}}};
}

MemoryEntry MemoryEntry::from_json(const json& j) {
  MemoryEntry e;
  e.file = j.at("file").get<std::string>();
  e.purpose = j.at("purpose").get<std::string>();
  for (const auto& s : j.at("public_interface")) {
    e.public_interface.push_back({s.at("kind").get<std::string>(), s.at("name").get<std::string>(),
                                  s.at("signature").get<std::string>(), s.at("purpose").get<std::string>()});
  }
  const auto& edges = j.at("dependency_edges");
  for (const auto& a : edges.at("afferent")) {
    e.afferent.push_back({a.at("module").get<std::string>(), a.at("symbols").get<std::vector<std::string>>(),
                          a.value("resolved_path", std::string())});
  }
  e.efferent_predicted = edges.at("efferent_predicted").get<std::vector<std::string>>();
  return e;
}

std::string MemoryEntry::render() const {
  std::string out = "### " + file + "\npurpose: " + purpose + "\n";
  if (!public_interface.empty()) {
    out += "interface:\n";
    for (const auto& s : public_interface) {
      out += "- " + s.kind + " " + (s.signature.empty() ? s.name : s.signature);
      if (!s.purpose.empty()) out += " -- " + s.purpose;
      out += "\n";
    }
  }
  if (!afferent.empty()) {
    out += "depends on:";
    for (std::size_t i = 0; i < afferent.size(); ++i) {
      out += (i ? ", " : " ") + afferent[i].module;
      if (!afferent[i].symbols.empty()) {
        out += " [";
        for (std::size_t k = 0; k < afferent[i].symbols.size(); ++k) out += (k ? " " : "") + afferent[i].symbols[k];
        out += "]";
      }
    }
    out += "\n";
  }
  if (!efferent_predicted.empty()) {
    out += "used by:";
    for (const auto& p : efferent_predicted) out += " " + p;
    out += "\n";
  }
  return out;
}

bool CodeMemory::contains(std::string_view file) const { return entries_.find(file) != entries_.end(); }

const MemoryEntry& CodeMemory::at(std::string_view file) const {
  auto it = entries_.find(file);
  if (it == entries_.end()) throw std::out_of_range("no memory entry for " + std::string(file));
  return it->second;
}

json CodeMemory::to_json() const {
  json entries = json::array();
  for (const auto& f : order_) entries.push_back(entries_.find(f)->second.to_json());
  return {{"schema", "code_memory.v1"}, {"generation_order", order_}, {"entries", entries}};
}

CodeMemory CodeMemory::from_json(const json& j) {
  CodeMemory m;
  for (const auto& e : j.at("entries")) m = update_memory(m, MemoryEntry::from_json(e));
  return m;
}

CodeMemory update_memory(const CodeMemory& memory, MemoryEntry entry) {
  if (memory.contains(entry.file)) {
    throw Error(ErrorKind::DuplicateFile, "memory already has an entry for '" + entry.file + "'");
  }
  CodeMemory next = memory;
  next.order_.push_back(entry.file);
  const std::string key = entry.file;
  next.entries_.emplace(key, std::move(entry));
  return next;
}

// ---------------------------------------------------------------------------
// Lexical imports

namespace {

enum class Lang { Python, Script, CFamily, Other };

Lang language_of(std::string_view path) {
  const std::string ext = fs::path(std::string(path)).extension().string();
  if (ext == ".py") return Lang::Python;
  if (ext == ".js" || ext == ".ts" || ext == ".jsx" || ext == ".tsx" || ext == ".mjs") return Lang::Script;
  if (ext == ".c" || ext == ".cc" || ext == ".cpp" || ext == ".cxx" || ext == ".h" || ext == ".hpp" || ext == ".hh") {
    return Lang::CFamily;
  }
  return Lang::Other;
}

std::vector<std::string> split_names(const std::string& s) {
  std::vector<std::string> out;
  std::string cleaned;
  for (char c : s) {
    if (c != '(' && c != ')' && c != '\\') cleaned.push_back(c);
  }
  std::size_t start = 0;
  while (start <= cleaned.size()) {
    std::size_t comma = cleaned.find(',', start);
    if (comma == std::string::npos) comma = cleaned.size();
    std::string part = trim(std::string_view(cleaned).substr(start, comma - start));
    const auto as = part.find(" as ");
    if (as != std::string::npos) part = trim(part.substr(0, as));
    const auto hash = part.find('#');
    if (hash != std::string::npos) part = trim(part.substr(0, hash));
    if (!part.empty()) out.push_back(part);
    start = comma + 1;
  }
  return out;
}

std::string normalize_rel(const fs::path& p) {
  std::string s = p.lexically_normal().generic_string();
  while (starts_with(s, "./")) s = s.substr(2);
  return s;
}

std::string first_planned(const std::vector<fs::path>& candidates, const Blueprint& bp) {
  for (const auto& c : candidates) {
    const std::string s = normalize_rel(c);
    if (bp.has_file(s)) return s;
  }
  return {};
}

}  // namespace

std::vector<LexicalImport> extract_imports(std::string_view path, std::string_view text) {
  std::vector<LexicalImport> out;
  const auto lines = split_lines(text);
  switch (language_of(path)) {
    case Lang::Python: {
      static const std::regex import_re(R"(^\s*import\s+([\w.]+(?:\s+as\s+\w+)?(?:\s*,\s*[\w.]+(?:\s+as\s+\w+)?)*)\s*(#.*)?$)");
      static const std::regex from_re(R"(^\s*from\s+(\.*[\w.]*)\s+import\s+(.+)$)");
      for (std::size_t i = 0; i < lines.size(); ++i) {
        std::smatch m;
        if (std::regex_match(lines[i], m, import_re)) {
          for (const auto& name : split_names(m[1].str())) out.push_back({name, {}});
        } else if (std::regex_match(lines[i], m, from_re)) {
          std::string names = m[2].str();
          if (names.find('(') != std::string::npos && names.find(')') == std::string::npos) {
            while (++i < lines.size()) {
              names += "," + lines[i];
              if (lines[i].find(')') != std::string::npos) break;
            }
          }
          out.push_back({m[1].str(), split_names(names)});
        }
      }
      break;
    }
    case Lang::Script: {
      static const std::regex import_re(R"(import\s+(?:[^'";]*?\s+from\s+)?['"]([^'"]+)['"])");
      static const std::regex require_re(R"(require\(\s*['"]([^'"]+)['"]\s*\))");
      for (const auto& line : lines) {
        std::smatch m;
        if (std::regex_search(line, m, import_re) || std::regex_search(line, m, require_re)) {
          out.push_back({m[1].str(), {}});
        }
      }
      break;
    }
    case Lang::CFamily: {
      static const std::regex include_re(R"re(^\s*#\s*include\s+"([^"]+)")re");
      for (const auto& line : lines) {
        std::smatch m;
        if (std::regex_search(line, m, include_re)) out.push_back({m[1].str(), {}});
      }
      break;
    }
    case Lang::Other:
      break;
  }
  return out;
}

std::string resolve_import(std::string_view importer, std::string_view module, const Blueprint& blueprint) {
  const fs::path dir = fs::path(std::string(importer)).parent_path();
  const std::string mod(module);
  switch (language_of(importer)) {
    case Lang::Python: {
      std::size_t level = 0;
      while (level < mod.size() && mod[level] == '.') ++level;
      std::string rest = mod.substr(level);
      std::replace(rest.begin(), rest.end(), '.', '/');
      if (level > 0) {
        fs::path base = dir;
        for (std::size_t k = 1; k < level; ++k) base = base.parent_path();
        if (rest.empty()) return first_planned({base / "__init__.py"}, blueprint);
        return first_planned({base / (rest + ".py"), base / rest / "__init__.py"}, blueprint);
      }
      return first_planned({fs::path(rest + ".py"), fs::path(rest) / "__init__.py", dir / (rest + ".py"),
                            dir / rest / "__init__.py"},
                           blueprint);
    }
    case Lang::Script: {
      if (!starts_with(mod, ".")) return {};
      const fs::path p = dir / mod;
      return first_planned({p, fs::path(p.string() + ".js"), fs::path(p.string() + ".ts"),
                            fs::path(p.string() + ".jsx"), fs::path(p.string() + ".tsx"), p / "index.js",
                            p / "index.ts"},
                           blueprint);
    }
    case Lang::CFamily:
      return first_planned({dir / mod, fs::path(mod), fs::path("include") / mod, fs::path("src") / mod}, blueprint);
    case Lang::Other:
      break;
  }
  return {};
}

// ---------------------------------------------------------------------------
// Augmentation

std::string Augmentation::render() const {
  char conf[32];
  std::snprintf(conf, sizeof conf, "%.2f", confidence);
  std::string out = "Reference implementation (" + source_repo + ":" + source_file + ", " + relation_type +
                    ", confidence " + conf + "):\n";
  if (!usage_notes.empty()) out += usage_notes + "\n";
  for (const auto& s : snippets) {
    out += "--- " + s.path + ":" + std::to_string(s.start_line) + "-" + std::to_string(s.end_line) + "\n";
    out += s.text;
    if (!s.text.empty() && s.text.back() != '\n') out += "\n";
  }
  return out;
}

json Augmentation::to_json() const {
  json snips = json::array();
  for (const auto& s : snippets) {
    snips.push_back({{"path", s.path}, {"start_line", s.start_line}, {"end_line", s.end_line}, {"text", s.text}});
  }
  return {{"source_repo", source_repo},
          {"source_file", source_file},
          {"relation_type", relation_type},
          {"confidence", confidence},
          {"snippets", snips},
          {"usage_notes", usage_notes}};
}

// ---------------------------------------------------------------------------
// Context formulation

MemorySelection select_relevant_memory(const CodeMemory& memory, std::string_view target, const Blueprint& blueprint,
                                       std::size_t budget_tokens, const Tokenizer& tokenizer) {
  std::vector<std::string> ranked;
  auto by_order = [&](std::vector<std::string>& v) {
    std::sort(v.begin(), v.end(), [&](const std::string& a, const std::string& b) {
      return blueprint.file_order(a).value_or(SIZE_MAX) < blueprint.file_order(b).value_or(SIZE_MAX);
    });
  };
  std::vector<std::string> deps;
  for (const auto& d : blueprint.internal_deps(target)) {
    if (memory.contains(d)) deps.push_back(d);
  }
  by_order(deps);
  std::vector<std::string> consumers;
  for (const auto& f : memory.generation_order()) {
    if (std::find(deps.begin(), deps.end(), f) != deps.end()) continue;
    const auto& eff = memory.at(f).efferent_predicted;
    if (std::find(eff.begin(), eff.end(), target) != eff.end()) consumers.push_back(f);
  }
  by_order(consumers);
  ranked = deps;
  ranked.insert(ranked.end(), consumers.begin(), consumers.end());

  MemorySelection sel;
  std::size_t used = 0;
  for (const auto& f : ranked) {
    const MemoryEntry& e = memory.at(f);
    const std::size_t cost = tokenizer.count(e.render() + "\n");
    if (used + cost > budget_tokens) {
      sel.truncated = true;
      break;
    }
    used += cost;
    sel.entries.push_back(e);
  }
  return sel;
}

namespace {

std::string render_context(const PromptTemplates& tpl, const Blueprint& blueprint, std::string_view target,
                           const std::vector<MemoryEntry>& entries, const std::optional<Augmentation>& retrieval,
                           const std::optional<std::string>& hint) {
  std::string memory_text;
  for (const auto& e : entries) memory_text += e.render() + "\n";
  if (memory_text.empty()) memory_text = "(none)\n";
  TemplateVars vars{{"target", std::string(target)},
                    {"blueprint", blueprint.render()},
                    {"memory", memory_text},
                    {"next_hint", hint ? "Planned next file after this one: " + *hint + "\n" : std::string()},
                    {"reference", retrieval ? "\n" + retrieval->render() : std::string()}};
  return tpl.render("generate_file", vars);
}

}  // namespace

GenerationContext formulate_context(const Blueprint& blueprint, const CodeMemory& memory, std::string_view target,
                                     const std::optional<Augmentation>& retrieval,
                                     const std::optional<std::string>& next_target_hint,
                                     const ContextOptions& options) {
  if (!blueprint.has_file(target)) {
    throw std::invalid_argument("target '" + std::string(target) + "' is not in the blueprint");
  }
  if (memory.contains(target)) {
    throw std::invalid_argument("target '" + std::string(target) + "' is already implemented");
  }
  const PromptTemplates& tpl = options.templates ? *options.templates : default_templates();
  const Tokenizer& tok = options.tokenizer ? *options.tokenizer : default_tokenizer();

  const std::string base = render_context(tpl, blueprint, target, {}, retrieval, next_target_hint);
  const std::size_t base_tokens = tok.count(base);
  if (base_tokens > options.budget_tokens) {
    throw Error(ErrorKind::BudgetExceeded, "context for '" + std::string(target) + "' needs " +
                                               std::to_string(base_tokens) + " tokens before any memory; budget is " +
                                               std::to_string(options.budget_tokens));
  }

  GenerationContext ctx;
  ctx.target = std::string(target);
  ctx.next_target_hint = next_target_hint;
  ctx.retrieval = retrieval;
  auto sel = select_relevant_memory(memory, target, blueprint, options.budget_tokens - base_tokens, tok);
  ctx.truncated = sel.truncated;
  ctx.selected_summaries = std::move(sel.entries);
  ctx.rendered = render_context(tpl, blueprint, target, ctx.selected_summaries, retrieval, next_target_hint);
  ctx.tokens = tok.count(ctx.rendered);
  // Rounding in the tokenizer can push the total over by a token or two.
  while (ctx.tokens > options.budget_tokens && !ctx.selected_summaries.empty()) {
    ctx.selected_summaries.pop_back();
    ctx.truncated = true;
    ctx.rendered = render_context(tpl, blueprint, target, ctx.selected_summaries, retrieval, next_target_hint);
    ctx.tokens = tok.count(ctx.rendered);
  }
  return ctx;
}

GeneratedFile generate_file(const GenerationContext& ctx, Gateway& gateway, Sandbox& sandbox,
                            const fs::path& repo_dir, int max_retries) {
  auto code = call_for_code(gateway, Role::Coder, "generate_file", ctx.rendered, max_retries);
  sandbox.write_file(repo_dir / ctx.target, code.value);
  return {std::move(code.value), code.retries};
}

// ---------------------------------------------------------------------------
// Summarization

FileSummary summarize_file(std::string_view file, std::string_view text, Gateway& gateway, const Blueprint& blueprint,
                           int max_retries, std::shared_ptr<const PromptTemplates> templates) {
  if (trim(text).empty()) throw std::invalid_argument("cannot summarize empty file " + std::string(file));
  const PromptTemplates& tpl = templates ? *templates : default_templates();
  std::string planned;
  for (const auto& f : blueprint.file_hierarchy) planned += (planned.empty() ? "" : ", ") + f.path;
  const std::string prompt = tpl.render(
      "summarize_file", {{"path", std::string(file)}, {"planned", planned}, {"code", number_lines(text)}});

  const auto lexical = extract_imports(file, text);
  auto parse = [&](const json& j) {
    FileSummary s;
    MemoryEntry& e = s.entry;
    e.file = std::string(file);
    e.purpose = req_string(j, "purpose");
    if (trim(e.purpose).empty()) throw ReplyInvalid("purpose is empty");
    std::set<std::string> names;
    for (const auto& sym : req_array(j, "public_interface")) {
      InterfaceSymbol is{opt_string(sym, "kind"), req_string(sym, "name"), opt_string(sym, "signature"),
                         opt_string(sym, "purpose")};
      if (!names.insert(is.name).second) throw ReplyInvalid("public_interface lists '" + is.name + "' twice");
      e.public_interface.push_back(std::move(is));
    }
    std::set<std::string> claimed;
    for (const auto& a : req_array(j, "afferent")) {
      AfferentImport imp;
      imp.module = req_string(a, "module");
      if (a.contains("symbols")) {
        for (const auto& sym : req_array(a, "symbols")) imp.symbols.push_back(sym.get<std::string>());
      }
      const bool present = std::any_of(lexical.begin(), lexical.end(),
                                       [&](const LexicalImport& l) { return l.module == imp.module; });
      if (!present) throw ReplyInvalid("afferent import '" + imp.module + "' does not appear in the file's imports");
      if (!claimed.insert(imp.module).second) continue;
      e.afferent.push_back(std::move(imp));
    }
    // Imports the model left out are recovered lexically.
    for (const auto& l : lexical) {
      if (claimed.insert(l.module).second) e.afferent.push_back({l.module, l.symbols, {}});
    }
    for (auto& a : e.afferent) a.resolved_path = resolve_import(file, a.module, blueprint);

    for (const auto& p : req_array(j, "efferent_predicted")) {
      if (!p.is_string()) throw ReplyInvalid("efferent_predicted entries must be paths");
      const std::string path = p.get<std::string>();
      if (!blueprint.has_file(path)) throw ReplyInvalid("efferent_predicted path '" + path + "' is not planned");
      if (path != e.file && std::find(e.efferent_predicted.begin(), e.efferent_predicted.end(), path) ==
                                e.efferent_predicted.end()) {
        e.efferent_predicted.push_back(path);
      }
    }
    const std::string next = opt_string(j, "next_target");
    if (!next.empty()) s.next_target = next;
    return s;
  };
  auto result = call_structured(gateway, Role::Summarizer, "summarize_file", prompt, "memory_entry.v1",
                                max_retries, parse);
  result.value.retries = result.retries;
  return std::move(result.value);
}

// ---------------------------------------------------------------------------
// Target selection

NextTarget select_next_target(const std::set<std::string>& implemented, const Blueprint& blueprint,
                              const std::optional<std::string>& suggestion) {
  std::vector<std::string> eligible;
  std::vector<std::string> remaining;
  for (const auto& f : blueprint.file_hierarchy) {
    if (implemented.count(f.path)) continue;
    remaining.push_back(f.path);
    const auto deps = blueprint.internal_deps(f.path);
    if (std::all_of(deps.begin(), deps.end(), [&](const std::string& d) { return implemented.count(d) > 0; })) {
      eligible.push_back(f.path);
    }
  }
  NextTarget out;
  if (remaining.empty()) return out;
  if (eligible.empty()) {
    std::string list;
    for (const auto& r : remaining) list += " " + r;
    throw Error(ErrorKind::CyclicDependency, "no remaining file has all dependencies implemented:" + list);
  }
  if (suggestion && std::find(eligible.begin(), eligible.end(), *suggestion) != eligible.end()) {
    out.path = *suggestion;
    return out;
  }
  auto key = [&](const std::string& p) {
    const PlannedFile* pf = blueprint.planned(p);
    return std::make_tuple(blueprint.stage_of(p).value_or(SIZE_MAX), pf ? pf->priority : 0,
                           blueprint.file_order(p).value_or(SIZE_MAX));
  };
  out.path = *std::min_element(eligible.begin(), eligible.end(),
                               [&](const std::string& a, const std::string& b) { return key(a) < key(b); });
  out.suggestion_overridden = suggestion.has_value();
  return out;
}

NextTarget select_next_target(const CodeMemory& memory, const Blueprint& blueprint,
                              const std::optional<std::string>& suggestion) {
  const std::set<std::string> implemented(memory.generation_order().begin(), memory.generation_order().end());
  return select_next_target(implemented, blueprint, suggestion);
}

// ---------------------------------------------------------------------------
// Loop

json GenerationStep::to_json() const {
  json j = {{"step", step},
            {"target", target},
            {"selected", selected},
            {"truncated", truncated},
            {"context_tokens", context_tokens},
            {"suggestion_overridden", suggestion_overridden},
            {"dependencies_in_memory", dependencies_in_memory},
            {"warnings", warnings}};
  j["next_target_hint"] = next_target_hint ? json(*next_target_hint) : json(nullptr);
  j["suggestion"] = suggestion ? json(*suggestion) : json(nullptr);
  j["retrieved_from"] = retrieved_from ? json(*retrieved_from) : json(nullptr);
  return j;
}

GenerationRun run_generation(const Blueprint& blueprint, Gateway& gateway, Sandbox& sandbox,
                             const GenerationOptions& options) {
  GenerationRun run;
  std::optional<std::string> suggestion;
  const std::size_t total = blueprint.file_hierarchy.size();

  for (std::size_t step = 1;; ++step) {
    const NextTarget next = select_next_target(run.memory, blueprint, suggestion);
    if (!next.path) break;
    if (step > total) throw Error(ErrorKind::CyclicDependency, "generation did not converge");
    const std::string target = *next.path;

    GenerationStep rec;
    rec.step = step;
    rec.target = target;
    rec.suggestion = suggestion;
    rec.suggestion_overridden = next.suggestion_overridden;

    std::set<std::string> after(run.memory.generation_order().begin(), run.memory.generation_order().end());
    after.insert(target);
    try {
      rec.next_target_hint = select_next_target(after, blueprint).path;
    } catch (const Error&) {
      rec.next_target_hint.reset();
    }

    GenerationContext ctx =
        formulate_context(blueprint, run.memory, target, std::nullopt, rec.next_target_hint, options.context);
    if (options.retrieval) {
      if (auto aug = options.retrieval(ctx, target)) {
        try {
          ctx = formulate_context(blueprint, run.memory, target, aug, rec.next_target_hint, options.context);
          rec.retrieved_from = aug->source_repo + ":" + aug->source_file;
        } catch (const Error& e) {
          if (e.kind() != ErrorKind::BudgetExceeded) throw;
          rec.warnings.push_back("retrieval dropped: context budget");
        }
      }
    }
    rec.selected.reserve(ctx.selected_summaries.size());
    for (const auto& e : ctx.selected_summaries) rec.selected.push_back(e.file);
    rec.truncated = ctx.truncated;
    rec.context_tokens = ctx.tokens;

    // Generated code may only import planned files that already exist.
    GenerationContext attempt_ctx = ctx;
    GeneratedFile gen;
    for (int attempt = 0;; ++attempt) {
      gen = generate_file(attempt_ctx, gateway, sandbox, options.repo_dir, options.max_retries);
      std::vector<std::string> premature;
      for (const auto& imp : extract_imports(target, gen.text)) {
        const std::string p = resolve_import(target, imp.module, blueprint);
        if (!p.empty() && p != target && !run.memory.contains(p)) premature.push_back(p);
      }
      if (premature.empty()) break;
      std::string list;
      for (const auto& p : premature) list += (list.empty() ? "" : ", ") + p;
      if (attempt >= options.max_retries) {
        throw Error(ErrorKind::DependencyViolation, target + " imports unimplemented file(s): " + list);
      }
      rec.warnings.push_back("regenerated: imported unimplemented " + list);
      attempt_ctx.rendered = retry_prompt(ctx.rendered, "the file imports " + list +
                                                            " which is not implemented yet; use only implemented "
                                                            "files and external packages");
    }

    FileSummary summary = summarize_file(target, gen.text, gateway, blueprint, options.max_retries,
                                         options.context.templates);
    for (const auto& p : summary.entry.internal_afferent_paths()) {
      if (p != target && !run.memory.contains(p)) rec.dependencies_in_memory = false;
    }
    run.memory = update_memory(run.memory, std::move(summary.entry));
    suggestion = summary.next_target;

    if (options.memory_dir) {
      char name[32];
      std::snprintf(name, sizeof name, "%04zu.json", step);
      json snapshot = {{"step", step}, {"memory", run.memory.to_json()}};
      sandbox.write_file(*options.memory_dir / name, snapshot.dump(2) + "\n");
    }
    run.steps.push_back(std::move(rec));
  }
  return run;
}

}  // namespace repogen
