#include "repogen/blueprint.hpp"

#include <algorithm>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "repogen/agent_reply.hpp"

namespace repogen {

using nlohmann::json;

bool Blueprint::has_file(std::string_view path) const { return file_order(path).has_value(); }

std::optional<std::size_t> Blueprint::file_order(std::string_view path) const {
  for (std::size_t i = 0; i < file_hierarchy.size(); ++i) {
    if (file_hierarchy[i].path == path) return i;
  }
  return std::nullopt;
}

std::vector<std::string> Blueprint::files() const {
  std::vector<std::string> out;
  out.reserve(file_hierarchy.size());
  for (const auto& f : file_hierarchy) out.push_back(f.path);
  return out;
}

const ComponentSpec* Blueprint::spec(std::string_view path) const {
  auto it = component_specs.find(std::string(path));
  return it == component_specs.end() ? nullptr : &it->second;
}

const PlannedFile* Blueprint::planned(std::string_view path) const {
  auto idx = file_order(path);
  return idx ? &file_hierarchy[*idx] : nullptr;
}

std::optional<std::size_t> Blueprint::stage_of(std::string_view path) const {
  for (std::size_t s = 0; s < staged_plan.size(); ++s) {
    const auto& f = staged_plan[s].files;
    if (std::find(f.begin(), f.end(), path) != f.end()) return s;
  }
  return std::nullopt;
}

std::vector<std::string> Blueprint::internal_deps(std::string_view path) const {
  std::vector<std::string> out;
  if (const auto* s = spec(path)) {
    for (const auto& imp : s->imports) {
      if (has_file(imp) && imp != path) out.push_back(imp);
    }
  }
  return out;
}

const CatalogItem* Blueprint::catalog_item(std::string_view id) const {
  for (const auto& c : algorithm_catalog) {
    if (c.id == id) return &c;
  }
  return nullptr;
}

namespace {

std::vector<std::string> strings(const json& j, const char* key) {
  std::vector<std::string> out;
  if (!j.contains(key) || j.at(key).is_null()) return out;
  const auto& arr = req_array(j, key);
  for (const auto& s : arr) {
    if (!s.is_string()) throw ReplyInvalid(std::string("entries of '") + key + "' must be strings");
    out.push_back(s.get<std::string>());
  }
  return out;
}

}  // namespace

json Blueprint::to_json() const {
  json files = json::array();
  for (const auto& f : file_hierarchy) {
    files.push_back({{"path", f.path}, {"priority", f.priority}, {"description", f.description}});
  }
  json specs = json::object();
  for (const auto& [path, s] : component_specs) {
    json syms = json::array();
    for (const auto& sym : s.symbols) {
      syms.push_back({{"kind", sym.kind},
                      {"name", sym.name},
                      {"signature", sym.signature},
                      {"description", sym.description}});
    }
    specs[path] = {{"purpose", s.purpose}, {"symbols", syms}, {"links", s.links}, {"imports", s.imports}};
  }
  json deps = json::array();
  for (const auto& d : execution_environment.dependencies) deps.push_back({{"name", d.name}, {"version", d.version}});
  json stages = json::array();
  for (const auto& st : staged_plan) stages.push_back({{"name", st.name}, {"files", st.files}, {"check", st.check}});
  json catalog = json::array();
  for (const auto& c : algorithm_catalog) catalog.push_back({{"id", c.id}, {"kind", c.kind}, {"text", c.text}});
  return {{"schema", "blueprint.v1"},
          {"file_hierarchy", files},
          {"component_specs", specs},
          {"verification_protocol",
           {{"setup", verification_protocol.setup},
            {"metrics", verification_protocol.metrics},
            {"success_criteria", verification_protocol.success_criteria}}},
          {"execution_environment", {{"dependencies", deps}, {"hardware", execution_environment.hardware}}},
          {"staged_plan", stages},
          {"algorithm_catalog", catalog}};
}

// Strict: shape errors raise ReplyInvalid so planner replies can be retried.
Blueprint Blueprint::from_json(const json& j) {
  if (!j.is_object()) throw ReplyInvalid("blueprint must be a JSON object");
  Blueprint b;
  for (const auto& f : req_array(j, "file_hierarchy")) {
    PlannedFile pf;
    pf.path = req_string(f, "path");
    pf.priority = f.contains("priority") ? static_cast<int>(req_int(f, "priority")) : 1;
    pf.description = opt_string(f, "description");
    b.file_hierarchy.push_back(std::move(pf));
  }
  if (!j.contains("component_specs") || !j.at("component_specs").is_object()) {
    throw ReplyInvalid("field 'component_specs' must be an object");
  }
  for (const auto& [path, s] : j.at("component_specs").items()) {
    if (!s.is_object()) throw ReplyInvalid("component spec for '" + path + "' must be an object");
    ComponentSpec cs;
    cs.purpose = opt_string(s, "purpose");
    if (s.contains("symbols")) {
      for (const auto& sym : req_array(s, "symbols")) {
        cs.symbols.push_back({opt_string(sym, "kind"), req_string(sym, "name"), opt_string(sym, "signature"),
                              opt_string(sym, "description")});
      }
    }
    cs.links = strings(s, "links");
    cs.imports = strings(s, "imports");
    b.component_specs.emplace(path, std::move(cs));
  }
  if (j.contains("verification_protocol")) {
    const auto& v = j.at("verification_protocol");
    b.verification_protocol.setup = opt_string(v, "setup");
    b.verification_protocol.metrics = strings(v, "metrics");
    b.verification_protocol.success_criteria = strings(v, "success_criteria");
  }
  if (j.contains("execution_environment")) {
    const auto& e = j.at("execution_environment");
    if (e.contains("dependencies")) {
      for (const auto& d : req_array(e, "dependencies")) {
        b.execution_environment.dependencies.push_back({req_string(d, "name"), opt_string(d, "version")});
      }
    }
    b.execution_environment.hardware = opt_string(e, "hardware");
  }
  for (const auto& st : req_array(j, "staged_plan")) {
    b.staged_plan.push_back({opt_string(st, "name"), strings(st, "files"), opt_string(st, "check")});
  }
  if (j.contains("algorithm_catalog")) {
    for (const auto& c : req_array(j, "algorithm_catalog")) {
      b.algorithm_catalog.push_back({req_string(c, "id"), opt_string(c, "kind"), opt_string(c, "text")});
    }
  }
  return b;
}

std::string Blueprint::render() const {
  std::ostringstream out;
  out << "## Project file hierarchy\n";
  for (const auto& f : file_hierarchy) {
    out << "- " << f.path << " [priority " << f.priority << "]";
    if (!f.description.empty()) out << ": " << f.description;
    out << '\n';
  }
  out << "## Component specifications\n";
  for (const auto& f : file_hierarchy) {
    const auto* s = spec(f.path);
    if (!s) continue;
    out << "### " << f.path << '\n';
    if (!s->purpose.empty()) out << "purpose: " << s->purpose << '\n';
    if (!s->imports.empty()) {
      out << "imports:";
      for (const auto& i : s->imports) out << ' ' << i;
      out << '\n';
    }
    if (!s->links.empty()) {
      out << "implements:";
      for (const auto& l : s->links) out << ' ' << l;
      out << '\n';
    }
    for (const auto& sym : s->symbols) {
      out << "- " << sym.kind << ' ' << (sym.signature.empty() ? sym.name : sym.signature);
      if (!sym.description.empty()) out << " -- " << sym.description;
      out << '\n';
    }
  }
  if (!algorithm_catalog.empty()) {
    out << "## Algorithm catalog\n";
    for (const auto& c : algorithm_catalog) out << "- [" << c.id << "] " << c.kind << ": " << c.text << '\n';
  }
  out << "## Verification protocol\n";
  if (!verification_protocol.setup.empty()) out << "setup: " << verification_protocol.setup << '\n';
  for (const auto& m : verification_protocol.metrics) out << "metric: " << m << '\n';
  for (const auto& c : verification_protocol.success_criteria) out << "success: " << c << '\n';
  out << "## Execution environment\n";
  for (const auto& d : execution_environment.dependencies) {
    out << "- " << d.name << (d.version.empty() ? "" : "==" + d.version) << '\n';
  }
  if (!execution_environment.hardware.empty()) out << "hardware: " << execution_environment.hardware << '\n';
  out << "## Staged development plan\n";
  for (std::size_t i = 0; i < staged_plan.size(); ++i) {
    const auto& st = staged_plan[i];
    out << i + 1 << ". " << st.name << ':';
    for (const auto& f : st.files) out << ' ' << f;
    if (!st.check.empty()) out << " (check: " << st.check << ')';
    out << '\n';
  }
  return out.str();
}

bool is_safe_relative_path(std::string_view path) {
  if (path.empty()) return false;
  const std::filesystem::path p{std::string(path)};
  if (p.is_absolute() || path.front() == '/' || path.front() == '~') return false;
  for (const auto& part : p) {
    if (part == "..") return false;
  }
  return true;
}

ValidationReport validate_blueprint(const Blueprint& b) {
  ValidationReport r;
  auto add = [&](std::string v) { r.violations.push_back(std::move(v)); };

  if (b.file_hierarchy.empty()) add("file_hierarchy is empty");
  std::set<std::string> seen;
  for (const auto& f : b.file_hierarchy) {
    if (!is_safe_relative_path(f.path)) add("file_hierarchy path '" + f.path + "' is not a safe relative path");
    if (!seen.insert(f.path).second) add("file_hierarchy lists '" + f.path + "' more than once");
  }

  for (const auto& [path, s] : b.component_specs) {
    if (!b.has_file(path)) add("component_spec key '" + path + "' is not in file_hierarchy");
    for (const auto& imp : s.imports) {
      if (imp == path) {
        add("component_spec '" + path + "' imports itself");
      } else if (!b.has_file(imp)) {
        add("component_spec '" + path + "' imports '" + imp + "' which is not in file_hierarchy");
      }
    }
    for (const auto& link : s.links) {
      const auto* item = b.catalog_item(link);
      if (!item) {
        add("component_spec '" + path + "' links '" + link + "' which is not in the algorithm catalog");
      } else if (item->kind != "equation" && item->kind != "pseudocode") {
        add("component_spec '" + path + "' links '" + link + "' which is a " + item->kind +
            ", not an equation or pseudocode item");
      }
    }
  }

  std::set<std::string> catalog_ids;
  for (const auto& c : b.algorithm_catalog) {
    if (!catalog_ids.insert(c.id).second) add("algorithm catalog id '" + c.id + "' is duplicated");
  }

  std::map<std::string, std::string> owner;
  for (const auto& st : b.staged_plan) {
    for (const auto& f : st.files) {
      if (!b.has_file(f)) add("stage '" + st.name + "' lists '" + f + "' which is not in file_hierarchy");
      auto [it, inserted] = owner.emplace(f, st.name);
      if (!inserted) add("file '" + f + "' appears in stages '" + it->second + "' and '" + st.name + "'");
    }
  }
  for (const auto& f : b.file_hierarchy) {
    if (!owner.count(f.path)) add("file '" + f.path + "' is not assigned to any stage");
  }
  return r;
}

}  // namespace repogen
