#include "repogen/coderag.hpp"

#include <algorithm>
#include <set>

#include <nlohmann/json.hpp>

#include "repogen/agent_reply.hpp"
#include "repogen/error.hpp"
#include "repogen/text.hpp"

namespace repogen {

using nlohmann::json;

const std::vector<std::string>& relation_types() {
  static const std::vector<std::string> t = {"direct-implementation", "partial-pattern", "utility", "conceptual"};
  return t;
}

// ---------------------------------------------------------------------------
// Tuples and index

Augmentation RelationshipTuple::augmentation() const {
  return {source_repo, source_file, relation_type, confidence, snippets, usage_notes};
}

json RelationshipTuple::to_json() const {
  json j = augmentation().to_json();
  j["target_file"] = target_file;
  return j;
}

RelationshipTuple RelationshipTuple::from_json(const json& j) {
  RelationshipTuple t;
  t.source_repo = j.at("source_repo").get<std::string>();
  t.source_file = j.at("source_file").get<std::string>();
  t.target_file = j.at("target_file").get<std::string>();
  t.relation_type = j.at("relation_type").get<std::string>();
  t.confidence = j.at("confidence").get<double>();
  t.usage_notes = j.value("usage_notes", std::string());
  for (const auto& s : j.at("snippets")) {
    t.snippets.push_back({s.at("path").get<std::string>(), s.at("start_line").get<int>(),
                          s.at("end_line").get<int>(), s.at("text").get<std::string>()});
  }
  return t;
}

std::string SourceSummary::render() const {
  std::string out = "purpose: " + purpose + "\n";
  if (!concepts.empty()) {
    out += "concepts:";
    for (const auto& c : concepts) out += " " + c + ";";
    out += "\n";
  }
  for (const auto& s : public_interface) {
    out += "- " + s.kind + " " + (s.signature.empty() ? s.name : s.signature);
    if (!s.purpose.empty()) out += " -- " + s.purpose;
    out += "\n";
  }
  return out;
}

RagIndex::RagIndex(std::vector<RelationshipTuple> tuples, std::vector<IndexedRepo> manifest,
                   std::vector<std::string> warnings)
    : tuples_(std::move(tuples)), manifest_(std::move(manifest)), warnings_(std::move(warnings)) {
  for (const auto& t : tuples_) per_target_[t.target_file].push_back(t);
  for (auto& [target, list] : per_target_) {
    std::stable_sort(list.begin(), list.end(), [](const RelationshipTuple& a, const RelationshipTuple& b) {
      if (a.confidence != b.confidence) return a.confidence > b.confidence;
      if (a.source_file != b.source_file) return a.source_file < b.source_file;
      return a.source_repo < b.source_repo;
    });
  }
}

const std::vector<RelationshipTuple>& RagIndex::for_target(std::string_view target) const {
  static const std::vector<RelationshipTuple> none;
  auto it = per_target_.find(target);
  return it == per_target_.end() ? none : it->second;
}

json RagIndex::to_json() const {
  json repos = json::array();
  for (const auto& r : manifest_) repos.push_back({{"name", r.name}, {"files", r.files}, {"failed", r.failed}});
  json tuples = json::array();
  for (const auto& t : tuples_) tuples.push_back(t.to_json());
  json per_target = json::object();
  for (const auto& [target, list] : per_target_) {
    json ids = json::array();
    for (const auto& t : list) ids.push_back(t.source_repo + ":" + t.source_file);
    per_target[target] = ids;
  }
  return {{"schema", "rag_index.v1"},
          {"repo_manifest", repos},
          {"tuples", tuples},
          {"per_target", per_target},
          {"warnings", warnings_}};
}

RagIndex RagIndex::from_json(const json& j) {
  std::vector<RelationshipTuple> tuples;
  for (const auto& t : j.at("tuples")) tuples.push_back(RelationshipTuple::from_json(t));
  std::vector<IndexedRepo> repos;
  for (const auto& r : j.at("repo_manifest")) {
    repos.push_back({r.at("name").get<std::string>(), r.at("files").get<std::vector<std::string>>(),
                     r.value("failed", false)});
  }
  return RagIndex(std::move(tuples), std::move(repos), j.value("warnings", std::vector<std::string>{}));
}

// ---------------------------------------------------------------------------
// Filtering

namespace {

bool blacklisted(const std::vector<std::string>& blacklist, std::string_view value) {
  for (const auto& b : blacklist) {
    if (b.empty()) continue;
    if (value == b || (starts_with(value, b) && (b.back() == '/' || value.substr(b.size(), 1) == "/"))) {
      return true;
    }
  }
  return false;
}

std::string planned_listing(const Blueprint& bp) {
  std::string out;
  for (const auto& f : bp.file_hierarchy) out += "- " + f.path + ": " + f.description + "\n";
  return out;
}

const PromptTemplates& templates_of(const RagOptions& o) { return o.templates ? *o.templates : default_templates(); }

}  // namespace

bool statically_excluded(std::string_view relative_path, std::string_view head_bytes) {
  static const std::set<std::string, std::less<>> vendored = {
      "vendor", "vendors", "third_party", "thirdparty", "node_modules", ".git", "build", "dist", "site-packages",
      "__pycache__", ".venv", "venv"};
  static const std::set<std::string, std::less<>> binary_ext = {
      ".png", ".jpg", ".jpeg", ".gif", ".bmp", ".ico", ".pdf", ".zip", ".gz",  ".tar", ".tgz", ".bz2", ".xz",
      ".whl", ".egg", ".so",  ".o",   ".a",   ".dll", ".exe", ".bin", ".pt",  ".pth", ".ckpt", ".npy", ".npz",
      ".pkl", ".h5",  ".onnx", ".class", ".jar", ".pyc", ".mp4", ".wav", ".ttf", ".woff"};
  const fs::path p{std::string(relative_path)};
  for (auto it = p.begin(); it != p.end(); ++it) {
    if (std::next(it) != p.end() && vendored.count(it->string())) return true;
  }
  if (binary_ext.count(to_lower(p.extension().string()))) return true;
  return head_bytes.find('\0') != std::string_view::npos;
}

FilterResult filter_relevant_files(Sandbox& sandbox, const fs::path& repo_dir, std::string_view repo_name,
                                   const Blueprint& blueprint, Gateway& gateway, const RagOptions& options) {
  std::vector<std::string> candidates;
  std::string listing;
  for (const auto& rel : sandbox.list_files(repo_dir)) {
    if (blacklisted(options.blacklist, rel)) continue;
    const std::string text = sandbox.read_file(repo_dir / rel);
    if (statically_excluded(rel, std::string_view(text).substr(0, 8192))) continue;
    candidates.push_back(rel);
    listing += "- " + rel + " (" + std::to_string(split_lines(text).size()) + " lines)\n";
  }
  if (candidates.empty()) {
    throw Error(ErrorKind::EmptyRepo, "reference repository '" + std::string(repo_name) + "' has no source files");
  }
  const std::string prompt = templates_of(options).render(
      "rag_filter", {{"planned", planned_listing(blueprint)}, {"repo", std::string(repo_name)}, {"listing", listing}});

  auto parse = [&](const json& j) {
    FilterResult r;
    for (const auto& f : req_array(j, "files")) {
      if (!f.is_string()) throw ReplyInvalid("files must be strings");
      std::string path = f.get<std::string>();
      while (starts_with(path, "./")) path = path.substr(2);
      if (std::find(candidates.begin(), candidates.end(), path) == candidates.end()) {
        r.warnings.push_back(std::string(repo_name) + ": dropped selection '" + path + "' (not in listing)");
        continue;
      }
      if (std::find(r.files.begin(), r.files.end(), path) == r.files.end()) r.files.push_back(path);
    }
    return r;
  };
  return call_structured(gateway, Role::Rag, "rag_filter", prompt, "rag_filter.v1", options.max_retries, parse)
      .value;
}

// ---------------------------------------------------------------------------
// Understanding and mapping

SourceSummary understand_source(std::string_view path, std::string_view text, Gateway& gateway,
                                const RagOptions& options) {
  if (trim(text).empty()) throw std::invalid_argument("cannot summarize empty file " + std::string(path));
  const std::string prompt =
      templates_of(options).render("rag_understand", {{"path", std::string(path)}, {"code", number_lines(text)}});
  const std::size_t lines = split_lines(text).size();
  auto parse = [&](const json& j) {
    SourceSummary s;
    s.path = std::string(path);
    s.line_count = lines;
    s.purpose = req_string(j, "purpose");
    if (trim(s.purpose).empty()) throw ReplyInvalid("purpose is empty");
    if (j.contains("concepts")) {
      for (const auto& c : req_array(j, "concepts")) {
        if (!c.is_string()) throw ReplyInvalid("concepts must be strings");
        s.concepts.push_back(c.get<std::string>());
      }
    }
    for (const auto& sym : req_array(j, "public_interface")) {
      s.public_interface.push_back({opt_string(sym, "kind"), req_string(sym, "name"), opt_string(sym, "signature"),
                                    opt_string(sym, "purpose")});
    }
    return s;
  };
  auto r = call_structured(gateway, Role::Rag, "rag_understand", prompt, "source_summary.v1", options.max_retries,
                           parse);
  r.value.retries = r.retries;
  return std::move(r.value);
}

MappingResult map_relationships(const SourceSummary& summary, std::string_view text, std::string_view repo_name,
                                const Blueprint& blueprint, Gateway& gateway, const RagOptions& options) {
  const auto lines = split_lines_keep(text);
  const std::string prompt = templates_of(options).render(
      "rag_map", {{"path", summary.path},
                  {"line_count", std::to_string(lines.size())},
                  {"summary", summary.render()},
                  {"planned", planned_listing(blueprint)}});
  const auto& types = relation_types();
  const std::string where = std::string(repo_name) + ":" + summary.path;

  auto parse = [&](const json& j) {
    MappingResult r;
    for (const auto& rel : req_array(j, "relationships")) {
      RelationshipTuple t;
      t.source_repo = std::string(repo_name);
      t.source_file = summary.path;
      t.target_file = req_string(rel, "target");
      t.relation_type = req_string(rel, "type");
      t.confidence = req_number(rel, "confidence");
      t.usage_notes = opt_string(rel, "notes");
      if (!blueprint.has_file(t.target_file)) {
        r.warnings.push_back(where + ": dropped tuple for unplanned target '" + t.target_file + "'");
        continue;
      }
      if (std::find(types.begin(), types.end(), t.relation_type) == types.end()) {
        r.warnings.push_back(where + ": dropped tuple with unknown type '" + t.relation_type + "'");
        continue;
      }
      if (t.confidence < 0.0 || t.confidence > 1.0) {
        const double clamped = std::clamp(t.confidence, 0.0, 1.0);
        r.warnings.push_back(where + ": confidence " + json(t.confidence).dump() + " clamped to " +
                             json(clamped).dump());
        t.confidence = clamped;
      }
      if (rel.contains("snippets")) {
        for (const auto& s : req_array(rel, "snippets")) {
          const long long a = req_int(s, "start_line");
          const long long b = req_int(s, "end_line");
          if (a < 1 || b < a || b > static_cast<long long>(lines.size())) {
            r.warnings.push_back(where + ": dropped snippet " + std::to_string(a) + "-" + std::to_string(b) +
                                 " outside the file");
            continue;
          }
          SnippetSpan span{summary.path, static_cast<int>(a), static_cast<int>(b), {}};
          for (long long k = a; k <= b; ++k) span.text += lines[static_cast<std::size_t>(k - 1)];
          t.snippets.push_back(std::move(span));
        }
      }
      r.tuples.push_back(std::move(t));
    }
    return r;
  };
  return call_structured(gateway, Role::Rag, "rag_map", prompt, "relationships.v1", options.max_retries, parse)
      .value;
}

RagIndex build_index(const std::vector<ReferenceRepo>& repos, const Blueprint& blueprint, Gateway& gateway,
                     Sandbox& sandbox, const RagOptions& options) {
  std::vector<RelationshipTuple> tuples;
  std::vector<IndexedRepo> manifest;
  std::vector<std::string> warnings;
  std::size_t failures = 0;
  std::string last_failure;

  for (const auto& repo : repos) {
    IndexedRepo entry{repo.name, {}, false};
    if (blacklisted(options.blacklist, repo.name) || blacklisted(options.blacklist, repo.dir.generic_string())) {
      warnings.push_back(repo.name + ": skipped (blacklisted)");
      entry.failed = true;
      manifest.push_back(std::move(entry));
      continue;
    }
    std::vector<RelationshipTuple> repo_tuples;
    std::vector<std::string> repo_warnings;
    try {
      auto filtered = filter_relevant_files(sandbox, repo.dir, repo.name, blueprint, gateway, options);
      repo_warnings = std::move(filtered.warnings);
      entry.files = std::move(filtered.files);
      for (const auto& file : entry.files) {
        const std::string text = sandbox.read_file(repo.dir / file);
        if (trim(text).empty()) {
          repo_warnings.push_back(repo.name + ":" + file + ": skipped (empty)");
          continue;
        }
        const SourceSummary summary = understand_source(file, text, gateway, options);
        auto mapped = map_relationships(summary, text, repo.name, blueprint, gateway, options);
        repo_warnings.insert(repo_warnings.end(), mapped.warnings.begin(), mapped.warnings.end());
        repo_tuples.insert(repo_tuples.end(), mapped.tuples.begin(), mapped.tuples.end());
      }
    } catch (const ReplayMismatchError&) {
      throw;
    } catch (const Error& e) {
      ++failures;
      last_failure = e.what();
      warnings.push_back(repo.name + ": failed: " + e.what());
      entry.failed = true;
      entry.files.clear();
      manifest.push_back(std::move(entry));
      continue;
    }
    warnings.insert(warnings.end(), repo_warnings.begin(), repo_warnings.end());
    tuples.insert(tuples.end(), repo_tuples.begin(), repo_tuples.end());
    manifest.push_back(std::move(entry));
  }
  if (!repos.empty() && failures == repos.size()) {
    throw Error(ErrorKind::EmptyRepo, "every reference repository failed to index; last: " + last_failure);
  }
  return RagIndex(std::move(tuples), std::move(manifest), std::move(warnings));
}

// ---------------------------------------------------------------------------
// Retrieval

double detail_score(const ComponentSpec* spec) {
  if (!spec || spec->symbols.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& s : spec->symbols) {
    sum += (trim(s.signature).empty() ? 0.0 : 0.5) + (trim(s.description).empty() ? 0.0 : 0.5);
  }
  return sum / static_cast<double>(spec->symbols.size());
}

std::size_t linked_complexity(const Blueprint& blueprint, std::string_view target) {
  const ComponentSpec* spec = blueprint.spec(target);
  if (!spec) return 0;
  std::size_t n = 0;
  for (const auto& id : spec->links) {
    const CatalogItem* item = blueprint.catalog_item(id);
    if (item && (item->kind == "equation" || item->kind == "pseudocode")) ++n;
  }
  return n;
}

bool decide_retrieval(const GenerationContext& ctx, const Blueprint& blueprint, const RagIndex& index,
                      const RetrievalPolicy& policy) {
  if (index.for_target(ctx.target).empty()) return false;
  return detail_score(blueprint.spec(ctx.target)) < policy.detail_threshold ||
         linked_complexity(blueprint, ctx.target) >= policy.complexity_threshold;
}

Augmentation retrieve(const RagIndex& index, std::string_view target) {
  const auto& list = index.for_target(target);
  if (list.empty()) throw Error(ErrorKind::NoTuple, "no relationship tuple for '" + std::string(target) + "'");
  return list.front().augmentation();
}

RetrievalHook make_retrieval_hook(std::shared_ptr<const RagIndex> index, const Blueprint& blueprint,
                                  RetrievalPolicy policy) {
  return [index = std::move(index), bp = blueprint, policy](const GenerationContext& ctx,
                                                           const std::string& target) -> std::optional<Augmentation> {
    if (!index || !decide_retrieval(ctx, bp, *index, policy)) return std::nullopt;
    return retrieve(*index, target);
  };
}

}  // namespace repogen
