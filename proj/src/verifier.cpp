#include "repogen/verifier.hpp"

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

const PromptTemplates& templates_of(const VerifierOptions& o) {
  return o.templates ? *o.templates : default_templates();
}

std::string lines_label(int a, int b) {
  return a == b ? std::to_string(a) : std::to_string(a) + "-" + std::to_string(b);
}

}  // namespace

// ---------------------------------------------------------------------------
// Static analysis

std::string Issue::location() const { return start_line == 0 ? std::string("whole file") : lines_label(start_line, end_line); }

json Issue::to_json() const {
  return {{"id", id},
          {"category", category},
          {"file", file},
          {"location", location()},
          {"description", description},
          {"instruction", instruction}};
}

std::size_t StaticReport::count(std::string_view category) const {
  return static_cast<std::size_t>(
      std::count_if(issues.begin(), issues.end(), [&](const Issue& i) { return i.category == category; }));
}

json StaticReport::to_json() const {
  json issues_j = json::array();
  for (const auto& i : issues) issues_j.push_back(i.to_json());
  json scores = json::object();
  for (const auto& [f, s] : quality_scores) scores[f] = s;
  return {{"issues", issues_j}, {"quality_scores", scores}, {"warnings", warnings}};
}

StaticReport structural_analysis(Sandbox& sandbox, const fs::path& repo_dir, const Blueprint& blueprint) {
  StaticReport r;
  int n = 0;
  for (const auto& f : blueprint.file_hierarchy) {
    const fs::path p = repo_dir / f.path;
    if (!sandbox.exists(p)) {
      r.issues.push_back({"S" + std::to_string(++n), kStructural, f.path, 0, 0, "planned file is missing",
                          "create " + f.path + ": " + f.description});
    } else if (sandbox.file_size(p) == 0) {
      r.issues.push_back({"S" + std::to_string(++n), kStructural, f.path, 0, 0, "planned file is empty (zero bytes)",
                          "write the contents of " + f.path + ": " + f.description});
    }
  }
  return r;
}

StaticReport static_analyze(Sandbox& sandbox, const fs::path& repo_dir, const Blueprint& blueprint, Gateway& gateway,
                            const VerifierOptions& options) {
  StaticReport r = structural_analysis(sandbox, repo_dir, blueprint);
  if (!options.quality_pass) return r;
  int n = 0;
  for (const auto& f : blueprint.file_hierarchy) {
    const fs::path p = repo_dir / f.path;
    if (!sandbox.exists(p) || sandbox.file_size(p) == 0) continue;
    const std::string text = sandbox.read_file(p);
    const int line_count = static_cast<int>(split_lines(text).size());
    const std::string prompt =
        templates_of(options).render("quality_review", {{"path", f.path}, {"code", number_lines(text)}});
    auto parse = [&](const json& j) {
      std::pair<double, std::vector<Issue>> out;
      out.first = std::clamp(req_number(j, "score"), 0.0, 1.0);
      for (const auto& is : req_array(j, "issues")) {
        Issue issue;
        issue.category = kQuality;
        issue.file = f.path;
        issue.start_line = static_cast<int>(req_int(is, "start_line"));
        issue.end_line = static_cast<int>(req_int(is, "end_line"));
        issue.description = req_string(is, "description");
        issue.instruction = opt_string(is, "instruction");
        out.second.push_back(std::move(issue));
      }
      return out;
    };
    auto reviewed = call_structured(gateway, Role::Verifier, "quality_review", prompt, "quality_review.v1",
                                    options.max_retries, parse);
    r.quality_scores[f.path] = reviewed.value.first;
    for (auto& issue : reviewed.value.second) {
      if (issue.start_line < 1 || issue.end_line < issue.start_line || issue.end_line > line_count) {
        r.warnings.push_back(f.path + ": dropped quality issue at lines " +
                             lines_label(issue.start_line, issue.end_line) + " outside the file");
        continue;
      }
      issue.id = "Q" + std::to_string(++n);
      r.issues.push_back(std::move(issue));
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Patching

json PatchInstruction::to_json() const {
  json edits_j = json::array();
  for (const auto& e : edits) edits_j.push_back({{"start_line", e.start_line}, {"end_line", e.end_line}, {"text", e.text}});
  return {{"file", file}, {"edits", edits_j}, {"rationale", rationale}};
}

std::string apply_patch(std::string_view text, const PatchInstruction& instruction) {
  std::vector<std::string> lines;
  for (auto l : split_lines_keep(text)) lines.emplace_back(l);
  const int n = static_cast<int>(lines.size());
  std::vector<LineEdit> edits = instruction.edits;
  for (const auto& e : edits) {
    if (e.start_line < 1 || e.start_line > n + 1 || e.end_line < e.start_line - 1 || e.end_line > n) {
      throw Error(ErrorKind::RangeOutOfBounds, instruction.file + ": edit " + lines_label(e.start_line, e.end_line) +
                                                   " is outside a " + std::to_string(n) + "-line file");
    }
  }
  std::sort(edits.begin(), edits.end(), [](const LineEdit& a, const LineEdit& b) {
    return std::tie(a.start_line, a.end_line) < std::tie(b.start_line, b.end_line);
  });
  for (std::size_t i = 1; i < edits.size(); ++i) {
    if (edits[i].start_line <= edits[i - 1].end_line || edits[i].start_line == edits[i - 1].start_line) {
      throw Error(ErrorKind::OverlappingEdits, instruction.file + ": edits " +
                                                   lines_label(edits[i - 1].start_line, edits[i - 1].end_line) +
                                                   " and " + lines_label(edits[i].start_line, edits[i].end_line) +
                                                   " overlap");
    }
  }
  // An insertion after a final line without a newline needs one first.
  if (!edits.empty() && edits.back().start_line == n + 1 && n > 0 && !ends_with(lines.back(), "\n")) {
    lines.back() += "\n";
  }
  for (auto it = edits.rbegin(); it != edits.rend(); ++it) {
    std::vector<std::string> replacement;
    for (auto l : split_lines_keep(it->text)) replacement.emplace_back(l);
    if (!replacement.empty() && !ends_with(replacement.back(), "\n")) replacement.back() += "\n";
    const auto first = lines.begin() + (it->start_line - 1);
    const auto last = lines.begin() + it->end_line;
    lines.erase(first, last);
    lines.insert(lines.begin() + (it->start_line - 1), replacement.begin(), replacement.end());
  }
  std::string out;
  for (const auto& l : lines) out += l;
  return out;
}

namespace {

std::vector<LineEdit> parse_edits(const json& patch) {
  std::vector<LineEdit> edits;
  for (const auto& e : req_array(patch, "edits")) {
    edits.push_back({static_cast<int>(req_int(e, "start_line")), static_cast<int>(req_int(e, "end_line")),
                     opt_string(e, "text")});
  }
  if (edits.empty()) throw ReplyInvalid("patch has no edits");
  return edits;
}

// Validates patches against the current files; nothing is written here.
struct CheckedPatch {
  PatchInstruction instruction;
  std::string before;
  std::string after;
};

std::vector<CheckedPatch> check_patches(const json& reply, Sandbox& sandbox, const fs::path& repo_dir,
                                        const std::set<std::string>& allowed) {
  std::vector<CheckedPatch> out;
  std::map<std::string, std::string> current;
  for (const auto& p : req_array(reply, "patches")) {
    PatchInstruction ins{req_string(p, "file"), parse_edits(p), opt_string(p, "rationale")};
    if (!is_safe_relative_path(ins.file) || !allowed.count(ins.file)) {
      throw ReplyInvalid("patch targets '" + ins.file + "' which is not a repository file");
    }
    if (!current.count(ins.file)) current[ins.file] = sandbox.read_file(repo_dir / ins.file);
    std::string before = current[ins.file];
    std::string after;
    try {
      after = apply_patch(before, ins);
    } catch (const Error& e) {
      throw ReplyInvalid(e.what());
    }
    current[ins.file] = after;
    out.push_back({std::move(ins), std::move(before), std::move(after)});
  }
  return out;
}

void commit_patches(const std::vector<CheckedPatch>& patches, Sandbox& sandbox, const fs::path& repo_dir,
                    const VerifierOptions& options) {
  for (const auto& p : patches) {
    sandbox.write_file(repo_dir / p.instruction.file, p.after);
    if (options.on_patch) options.on_patch(p.instruction, p.before, p.after);
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Static refinement

json StaticRefineResult::to_json() const {
  json outcomes_j = json::array();
  for (const auto& o : outcomes) outcomes_j.push_back({{"id", o.id}, {"status", o.status}, {"note", o.note}});
  json patches_j = json::array();
  for (const auto& p : patches) patches_j.push_back(p.to_json());
  return {{"outcomes", outcomes_j}, {"patches", patches_j}, {"rescan", rescan.to_json()}};
}

StaticRefineResult refine_static(Sandbox& sandbox, const fs::path& repo_dir, const StaticReport& report,
                                 const Blueprint& blueprint, Gateway& gateway, const VerifierOptions& options) {
  StaticRefineResult result;
  const PromptTemplates& tpl = templates_of(options);

  std::vector<const Issue*> order;
  std::map<std::string, std::size_t> file_rank;
  for (const auto& i : report.issues) {
    order.push_back(&i);
    file_rank.emplace(i.file, file_rank.size());
  }
  // Quality fixes run bottom-up within a file so earlier line numbers stay valid.
  std::stable_sort(order.begin(), order.end(), [&](const Issue* a, const Issue* b) {
    if (a->category != b->category) return a->category == kStructural;
    if (a->file != b->file) return file_rank.at(a->file) < file_rank.at(b->file);
    return a->start_line > b->start_line;
  });

  for (const Issue* issue : order) {
    if (issue->category == kStructural) {
      const std::string prompt =
          tpl.render("synthesize_missing",
                     {{"target", issue->file}, {"description", issue->description}, {"blueprint", blueprint.render()}});
      try {
        auto code = call_for_code(gateway, Role::Coder, "synthesize_missing", prompt, 1);
        sandbox.write_file(repo_dir / issue->file, code.value);
        result.outcomes.push_back({issue->id, "fixed", "synthesized " + issue->file});
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::EmptyGeneration) throw;
        result.outcomes.push_back({issue->id, "unfixable", e.what()});
      }
      continue;
    }
    if (!sandbox.exists(repo_dir / issue->file)) {
      result.outcomes.push_back({issue->id, "unfixable", "file no longer exists"});
      continue;
    }
    const std::string text = sandbox.read_file(repo_dir / issue->file);
    const std::string prompt = tpl.render("quality_fix", {{"issue_id", issue->id},
                                                          {"path", issue->file},
                                                          {"location", issue->location()},
                                                          {"description", issue->description},
                                                          {"instruction", issue->instruction},
                                                          {"code", number_lines(text)}});
    const std::set<std::string> allowed = {issue->file};
    try {
      auto checked = call_structured(gateway, Role::Verifier, "quality_fix", prompt, "patches.v1", 1,
                                     [&](const json& j) { return check_patches(j, sandbox, repo_dir, allowed); });
      commit_patches(checked.value, sandbox, repo_dir, options);
      for (const auto& c : checked.value) result.patches.push_back(c.instruction);
      result.outcomes.push_back({issue->id, "fixed", ""});
    } catch (const SchemaParseFailure& e) {
      result.outcomes.push_back({issue->id, "unfixable", e.what()});
    }
  }
  result.rescan = structural_analysis(sandbox, repo_dir, blueprint);
  return result;
}

// ---------------------------------------------------------------------------
// Environment setup

namespace {

std::string normalize_package(std::string_view name) {
  std::string out;
  for (char c : name) out.push_back(c == '_' || c == '.' ? '-' : static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  return out;
}

std::string requirement_name(std::string_view line) {
  const std::string t = trim(line);
  if (t.empty() || t[0] == '#' || t[0] == '-') return {};
  const auto end = t.find_first_of("=<>~!;[ @");
  return normalize_package(t.substr(0, end));
}

}  // namespace

json SetupResult::to_json() const {
  return {{"added_dependencies", added_dependencies},
          {"command", command},
          {"exit_code", exit_code},
          {"stdout", stdout_text},
          {"stderr", stderr_text}};
}

SetupResult setup_environment(Sandbox& sandbox, const fs::path& repo_dir, const Blueprint& blueprint,
                              const VerifierOptions& options) {
  SetupResult result;
  const fs::path manifest = repo_dir / options.manifest;
  std::string text = sandbox.exists(manifest) ? sandbox.read_file(manifest) : std::string();
  std::set<std::string> declared;
  for (const auto& line : split_lines(text)) {
    const std::string name = requirement_name(line);
    if (!name.empty()) declared.insert(name);
  }
  std::string additions;
  for (const auto& dep : blueprint.execution_environment.dependencies) {
    if (declared.count(normalize_package(dep.name))) continue;
    declared.insert(normalize_package(dep.name));
    std::string spec = dep.name;
    if (!dep.version.empty()) {
      spec += std::string(dep.version.find_first_of("=<>~!") == std::string::npos ? "==" : "") + dep.version;
    }
    additions += spec + "\n";
    result.added_dependencies.push_back(spec);
  }
  if (!additions.empty()) {
    if (!text.empty() && text.back() != '\n') text += "\n";
    sandbox.write_file(manifest, text + additions);
  }
  if (options.install_command.empty()) return result;

  result.command = options.install_command;
  const ExecResult r = sandbox.run(options.install_command, repo_dir, options.timeout, options.env);
  result.exit_code = r.exit_code;
  result.stdout_text = r.stdout_text;
  result.stderr_text = r.stderr_text;
  if (r.exit_code != 0 || r.timed_out) {
    throw Error(ErrorKind::SetupFailed, "'" + options.install_command + "' exited with " +
                                            std::to_string(r.exit_code) + ": " + trim(r.stderr_text));
  }
  return result;
}

// ---------------------------------------------------------------------------
// Execution

const std::vector<ErrorPattern>& default_error_patterns() {
  static const std::vector<ErrorPattern> p = {
      {R"(^([^\s:"']+\.[A-Za-z]+):(\d+):(?:\d+:)?\s*(.*)$)"},
      {R"(^([^\s:"']+\.[A-Za-z]+)():\s*error:\s*(.*)$)"},
      {R"(^([^\s:"']+\.sh)(?::\s*line\s*(\d+))?:\s*(.*)$)"},
  };
  return p;
}

std::vector<ErrorRecord> parse_error_records(std::string_view stderr_text, int exit_code,
                                             const std::vector<ErrorPattern>& patterns) {
  std::vector<ErrorRecord> records;
  if (exit_code == 0) return records;
  const auto lines = split_lines(stderr_text);
  auto attributable = [](const std::string& f) {
    return !f.empty() && f[0] != '/' && f[0] != '<' && !starts_with(f, "..") && is_safe_relative_path(f);
  };
  auto add = [&](ErrorRecord r) {
    if (std::find(records.begin(), records.end(), r) == records.end()) records.push_back(std::move(r));
  };

  static const std::regex frame_re(R"re(^\s*File "([^"]+)", line (\d+))re");
  std::vector<bool> consumed(lines.size(), false);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (!starts_with(lines[i], "Traceback (most recent call last)")) continue;
    consumed[i] = true;
    std::optional<ErrorRecord> frame;
    std::size_t k = i + 1;
    for (; k < lines.size(); ++k) {
      std::smatch m;
      if (std::regex_search(lines[k], m, frame_re)) {
        consumed[k] = true;
        if (attributable(m[1].str())) frame = ErrorRecord{m[1].str(), std::stoi(m[2].str()), {}};
        continue;
      }
      if (starts_with(lines[k], " ") || starts_with(lines[k], "\t")) {
        consumed[k] = true;
        continue;
      }
      break;
    }
    std::string message = k < lines.size() ? trim(lines[k]) : std::string("uncaught exception");
    if (k < lines.size()) consumed[k] = true;
    ErrorRecord r = frame.value_or(ErrorRecord{});
    r.message = message;
    add(std::move(r));
    i = k;
  }
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (consumed[i]) continue;
    for (const auto& p : patterns) {
      std::smatch m;
      const std::regex re(p.regex);
      if (std::regex_search(lines[i], m, re) && attributable(m[1].str())) {
        const std::string line_s = m.size() > 2 ? m[2].str() : std::string();
        add({m[1].str(), line_s.empty() ? 0 : std::stoi(line_s), m.size() > 3 ? trim(m[3].str()) : std::string()});
        break;
      }
    }
  }
  if (records.empty()) {
    std::string last;
    for (const auto& l : lines) {
      if (!trim(l).empty()) last = trim(l);
    }
    records.push_back({"", 0, last.empty() ? "exited with code " + std::to_string(exit_code) : last});
  }
  return records;
}

std::string ExecutionTrace::digest() const {
  return sha256_hex(command + '\x1f' + std::to_string(exit_code) + '\x1f' + (timed_out ? "1" : "0") + '\x1f' +
                    stdout_text + '\x1f' + stderr_text);
}

std::string discover_entry(Sandbox& sandbox, const fs::path& repo_dir, const Blueprint& blueprint) {
  if (sandbox.exists(repo_dir / "reproduce.sh")) return "bash reproduce.sh";
  std::string cmd;
  for (const auto& s : blueprint.staged_plan) {
    if (trim(s.check).empty()) continue;
    cmd += (cmd.empty() ? "" : " && ") + trim(s.check);
  }
  return cmd.empty() ? std::string("true") : cmd;
}

namespace {

std::string replace_all(std::string s, const std::string& from, const std::string& to) {
  if (from.empty()) return s;
  for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
    s.replace(pos, from.size(), to);
  }
  return s;
}

}  // namespace

ExecutionTrace execute(Sandbox& sandbox, const fs::path& repo_dir, const std::string& entry,
                       std::chrono::milliseconds timeout, const VerifierOptions& options) {
  const ExecResult r = sandbox.run(entry, repo_dir, timeout, options.env);
  const std::string repo_abs = sandbox.resolve(repo_dir).string();
  const std::string root_abs = sandbox.root().string();
  auto normalize = [&](std::string s) {
    s = replace_all(std::move(s), repo_abs + "/", "");
    s = replace_all(std::move(s), repo_abs, ".");
    return replace_all(std::move(s), root_abs + "/", "../");
  };
  ExecutionTrace t;
  t.command = entry;
  t.stdout_text = normalize(r.stdout_text);
  t.stderr_text = normalize(r.stderr_text);
  t.exit_code = r.exit_code;
  t.duration_s = r.duration_s;
  t.timed_out = r.timed_out;
  if (r.timed_out) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "timed out after %.1f s", static_cast<double>(timeout.count()) / 1000.0);
    t.error_records.push_back({"", 0, buf});
  } else {
    t.error_records = parse_error_records(t.stderr_text, t.exit_code, options.error_patterns);
  }
  return t;
}

// ---------------------------------------------------------------------------
// Refinement loop

std::string_view to_string(VerifyStatus s) {
  switch (s) {
    case VerifyStatus::Clean:
      return "clean";
    case VerifyStatus::MaxIterations:
      return "max-iterations";
    case VerifyStatus::SetupFailed:
      return "setup-failed";
  }
  return "unknown";
}

json IterationLog::to_json() const {
  json records = json::array();
  for (const auto& r : error_records) records.push_back({{"file", r.file}, {"line", r.line}, {"message", r.message}});
  json patches_j = json::array();
  for (const auto& p : patches) patches_j.push_back(p.to_json());
  return {{"iteration", iteration},     {"command", command},          {"exit_code", exit_code},
          {"timed_out", timed_out},     {"trace_digest", trace_digest}, {"error_records", records},
          {"localized_files", localized_files}, {"patches", patches_j}, {"setup_rerun", setup_rerun},
          {"warnings", warnings}};
}

json RefineResult::to_json() const {
  json its = json::array();
  for (const auto& i : iterations) its.push_back(i.to_json());
  json j = {{"status", to_string(status)}, {"executions", executions}, {"iterations", its}};
  j["setup"] = setup ? setup->to_json() : json(nullptr);
  if (!setup_error.empty()) j["setup_error"] = setup_error;
  return j;
}

json VerificationResult::to_json() const {
  return {{"schema", "verify_log.v1"},
          {"static_report", report.to_json()},
          {"static_refine", static_refine.to_json()},
          {"refine", refine.to_json()}};
}

namespace {

std::string render_files(Sandbox& sandbox, const fs::path& repo_dir, const std::vector<std::string>& files) {
  std::string out;
  for (const auto& f : files) out += "=== " + f + " ===\n" + number_lines(sandbox.read_file(repo_dir / f)) + "\n";
  return out;
}

std::string render_records(const std::vector<ErrorRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    out += "- " + (r.file.empty() ? std::string("(unattributed)") : r.file + ":" + std::to_string(r.line)) + ": " +
           r.message + "\n";
  }
  return out;
}

bool patch_touches_manifest(const std::vector<PatchInstruction>& patches, const std::string& manifest) {
  return std::any_of(patches.begin(), patches.end(), [&](const PatchInstruction& p) { return p.file == manifest; });
}

}  // namespace

RefineResult refine_loop(Sandbox& sandbox, const fs::path& repo_dir, const Blueprint& blueprint, Gateway& gateway,
                         const VerifierOptions& options) {
  if (options.max_iter < 1) throw std::invalid_argument("max_iter must be at least 1");
  RefineResult result;
  try {
    result.setup = setup_environment(sandbox, repo_dir, blueprint, options);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::SetupFailed) throw;
    result.status = VerifyStatus::SetupFailed;
    result.setup_error = e.what();
    return result;
  }
  const std::string entry = options.entry ? *options.entry : discover_entry(sandbox, repo_dir, blueprint);
  const PromptTemplates& tpl = templates_of(options);

  for (int j = 0; j < options.max_iter; ++j) {
    const ExecutionTrace trace = execute(sandbox, repo_dir, entry, options.timeout, options);
    ++result.executions;
    IterationLog log;
    log.iteration = j;
    log.command = trace.command;
    log.exit_code = trace.exit_code;
    log.timed_out = trace.timed_out;
    log.trace_digest = trace.digest();
    log.error_records = trace.error_records;
    log.duration_s = trace.duration_s;

    if (trace.clean()) {
      result.status = VerifyStatus::Clean;
      result.iterations.push_back(std::move(log));
      return result;
    }
    if (j + 1 == options.max_iter) {
      result.iterations.push_back(std::move(log));
      break;
    }

    const std::vector<std::string> repo_files = sandbox.list_files(repo_dir);
    const std::set<std::string> allowed(repo_files.begin(), repo_files.end());
    std::vector<std::string> files;
    auto add_file = [&](const std::string& f) {
      if (allowed.count(f) && std::find(files.begin(), files.end(), f) == files.end()) files.push_back(f);
    };
    for (const auto& r : trace.error_records) add_file(r.file);
    if (files.empty()) {
      std::string listing;
      for (const auto& f : repo_files) listing += "- " + f + "\n";
      const std::string prompt = tpl.render("fault_localize", {{"command", trace.command},
                                                               {"exit_code", std::to_string(trace.exit_code)},
                                                               {"stderr", trace.stderr_text},
                                                               {"files", listing}});
      try {
        auto located = call_structured(gateway, Role::Verifier, "fault_localize", prompt, "fault_localize.v1",
                                       options.max_retries, [&](const json& reply) {
                                         std::vector<std::string> out;
                                         for (const auto& f : req_array(reply, "files")) {
                                           if (!f.is_string()) throw ReplyInvalid("files must be strings");
                                           out.push_back(f.get<std::string>());
                                         }
                                         return out;
                                       });
        for (const auto& f : located.value) {
          if (allowed.count(f)) {
            add_file(f);
          } else {
            log.warnings.push_back("fault localization named unknown file '" + f + "'");
          }
        }
      } catch (const SchemaParseFailure& e) {
        log.warnings.push_back(e.what());
      }
    }
    if (entry == "bash reproduce.sh") add_file("reproduce.sh");
    add_file(options.manifest);
    log.localized_files = files;

    const std::string prompt = tpl.render("runtime_fix", {{"command", trace.command},
                                                          {"exit_code", std::to_string(trace.exit_code)},
                                                          {"errors", render_records(trace.error_records)},
                                                          {"stderr", trace.stderr_text},
                                                          {"files", render_files(sandbox, repo_dir, files)}});
    try {
      auto checked = call_structured(gateway, Role::Verifier, "runtime_fix", prompt, "patches.v1",
                                     options.max_retries,
                                     [&](const json& reply) { return check_patches(reply, sandbox, repo_dir, allowed); });
      commit_patches(checked.value, sandbox, repo_dir, options);
      for (const auto& c : checked.value) log.patches.push_back(c.instruction);
    } catch (const SchemaParseFailure& e) {
      log.warnings.push_back(e.what());
    }

    if (patch_touches_manifest(log.patches, options.manifest)) {
      log.setup_rerun = true;
      try {
        result.setup = setup_environment(sandbox, repo_dir, blueprint, options);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::SetupFailed) throw;
        result.status = VerifyStatus::SetupFailed;
        result.setup_error = e.what();
        result.iterations.push_back(std::move(log));
        return result;
      }
    }
    result.iterations.push_back(std::move(log));
  }
  result.status = VerifyStatus::MaxIterations;
  return result;
}

VerificationResult run_verification(Sandbox& sandbox, const fs::path& repo_dir, const Blueprint& blueprint,
                                    Gateway& gateway, const VerifierOptions& options) {
  VerificationResult v;
  v.report = static_analyze(sandbox, repo_dir, blueprint, gateway, options);
  v.static_refine = refine_static(sandbox, repo_dir, v.report, blueprint, gateway, options);
  v.refine = refine_loop(sandbox, repo_dir, blueprint, gateway, options);
  return v;
}

}  // namespace repogen
