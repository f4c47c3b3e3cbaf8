#include "repogen/pipeline.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>

#include "repogen/analysis_agents.hpp"
#include "repogen/coderag.hpp"
#include "repogen/codemem.hpp"
#include "repogen/error.hpp"
#include "repogen/prompts.hpp"
#include "repogen/text.hpp"
#include "repogen/verifier.hpp"

namespace repogen {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Configuration

namespace {

[[noreturn]] void config_error(const std::string& msg) { throw Error(ErrorKind::ConfigError, msg); }

fs::path resolve_path(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return (path.is_absolute() ? path : base / path).lexically_normal();
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    config_error(std::string("config key '") + key + "': " + e.what());
  }
}

}  // namespace

PipelineConfig PipelineConfig::from_json(const json& j, const fs::path& base_dir) {
  if (!j.is_object()) config_error("config must be a JSON object");
  static const std::set<std::string> known = {
      "input",   "format",        "workspace",     "gateway",     "budgets",     "context_budget",
      "rag",     "max_iter",      "timeout_s",     "keywords",    "scale",       "max_retries",
      "templates_dir", "provision_dir", "install_command", "entry", "sandbox"};
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) config_error("unknown config key '" + key + "'");
  }
  PipelineConfig c;
  const std::string input = get_or<std::string>(j, "input", "");
  const std::string workspace = get_or<std::string>(j, "workspace", "");
  if (input.empty()) config_error("config needs 'input'");
  if (workspace.empty()) config_error("config needs 'workspace'");
  c.input = resolve_path(base_dir, input);
  c.workspace = resolve_path(base_dir, workspace);
  try {
    c.format = parse_doc_format(get_or<std::string>(j, "format", "markdown"));
  } catch (const Error& e) {
    config_error(e.what());
  }

  const json gw = j.value("gateway", json::object());
  try {
    c.mode = parse_gateway_mode(get_or<std::string>(gw, "mode", "replay"));
  } catch (const Error& e) {
    config_error(e.what());
  }
  if (gw.contains("transcripts")) c.transcripts = resolve_path(base_dir, gw.at("transcripts").get<std::string>());
  if (gw.contains("script")) c.script = resolve_path(base_dir, gw.at("script").get<std::string>());
  if (gw.contains("http")) {
    const json& h = gw.at("http");
    c.http.base_url = get_or<std::string>(h, "base_url", "");
    c.http.path = get_or<std::string>(h, "path", c.http.path);
    c.http.model = get_or<std::string>(h, "model", "");
    c.http.api_key_env = get_or<std::string>(h, "api_key_env", c.http.api_key_env);
    c.http.max_attempts = get_or<int>(h, "max_attempts", c.http.max_attempts);
  }

  const json budgets = j.value("budgets", json::object());
  for (const auto& [key, value] : budgets.items()) {
    if (!value.is_number_integer() || value.get<long long>() <= 0) config_error("budget '" + key + "' must be > 0");
    const auto v = static_cast<std::size_t>(value.get<long long>());
    if (key == "default") {
      c.budgets.default_budget = v;
    } else {
      try {
        c.budgets.per_role[parse_role(key)] = v;
      } catch (const Error& e) {
        config_error(e.what());
      }
    }
  }
  const long long ctx = get_or<long long>(j, "context_budget", 16000);
  if (ctx <= 0) config_error("context_budget must be > 0");
  c.context_budget = static_cast<std::size_t>(ctx);
  // Coder requests carry retry feedback on top of the context.
  if (!c.budgets.per_role.count(Role::Coder)) {
    c.budgets.per_role[Role::Coder] = std::max(c.budgets.default_budget, c.context_budget + 1024);
  }

  const json rag = j.value("rag", json::object());
  c.retrieval = get_or<bool>(rag, "enabled", true);
  c.blacklist = get_or<std::vector<std::string>>(rag, "blacklist", {});
  for (const auto& r : rag.value("repos", json::array())) {
    RagRepoConfig rc;
    rc.name = get_or<std::string>(r, "name", "");
    rc.path = resolve_path(base_dir, get_or<std::string>(r, "path", ""));
    rc.license = get_or<std::string>(r, "license", "");
    if (rc.name.empty()) rc.name = rc.path.filename().string();
    c.rag_repos.push_back(std::move(rc));
  }

  c.max_iter = get_or<int>(j, "max_iter", 5);
  c.timeout_s = get_or<double>(j, "timeout_s", 60.0);
  const json kw = j.value("keywords", json::object());
  c.concept_keywords = get_or<std::vector<std::string>>(kw, "concept", {});
  c.algorithm_keywords = get_or<std::vector<std::string>>(kw, "algorithm", {});
  c.scale = get_or<double>(j, "scale", 1.0);
  c.max_retries = get_or<int>(j, "max_retries", 2);
  if (j.contains("templates_dir")) c.templates_dir = resolve_path(base_dir, j.at("templates_dir").get<std::string>());
  if (j.contains("provision_dir")) c.provision_dir = resolve_path(base_dir, j.at("provision_dir").get<std::string>());
  c.install_command = get_or<std::string>(j, "install_command", "");
  if (j.contains("entry")) c.entry = j.at("entry").get<std::string>();
  const json sb = j.value("sandbox", json::object());
  const std::string backend = get_or<std::string>(sb, "backend", "process");
  if (backend == "process") {
    c.backend = SandboxBackend::Process;
  } else if (backend == "container") {
    c.backend = SandboxBackend::Container;
  } else {
    config_error("unknown sandbox backend '" + backend + "'");
  }
  c.container_image = get_or<std::string>(sb, "image", c.container_image);
  c.validate();
  return c;
}

PipelineConfig PipelineConfig::load(const fs::path& path) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const std::exception& e) {
    config_error("cannot read config " + path.string() + ": " + e.what());
  }
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    config_error("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return from_json(j, fs::absolute(path).parent_path());
}

json PipelineConfig::to_json() const {
  json budgets = {{"default", this->budgets.default_budget}};
  for (const auto& [role, v] : this->budgets.per_role) budgets[std::string(to_string(role))] = v;
  json repos = json::array();
  for (const auto& r : rag_repos) repos.push_back({{"name", r.name}, {"path", r.path.string()}, {"license", r.license}});
  json gw = {{"mode", to_string(mode)}, {"transcripts", transcripts.string()}};
  if (script) gw["script"] = script->string();
  if (!http.base_url.empty()) {
    gw["http"] = {{"base_url", http.base_url},
                  {"path", http.path},
                  {"model", http.model},
                  {"api_key_env", http.api_key_env},
                  {"max_attempts", http.max_attempts}};
  }
  json j = {{"input", input.string()},
            {"format", to_string(format)},
            {"workspace", workspace.string()},
            {"gateway", gw},
            {"budgets", budgets},
            {"context_budget", context_budget},
            {"rag", {{"enabled", retrieval}, {"repos", repos}, {"blacklist", blacklist}}},
            {"max_iter", max_iter},
            {"timeout_s", timeout_s},
            {"keywords", {{"concept", concept_keywords}, {"algorithm", algorithm_keywords}}},
            {"scale", scale},
            {"max_retries", max_retries},
            {"install_command", install_command},
            {"sandbox",
             {{"backend", backend == SandboxBackend::Process ? "process" : "container"}, {"image", container_image}}}};
  if (templates_dir) j["templates_dir"] = templates_dir->string();
  if (provision_dir) j["provision_dir"] = provision_dir->string();
  if (entry) j["entry"] = *entry;
  return j;
}

void PipelineConfig::validate() const {
  if (max_iter < 1) config_error("max_iter must be at least 1");
  if (!(timeout_s > 0.0)) config_error("timeout_s must be > 0");
  if (!(scale > 0.0)) config_error("scale must be > 0");
  if (max_retries < 0) config_error("max_retries must be >= 0");
  if (budgets.default_budget == 0 || context_budget == 0) config_error("budgets must be > 0");
  if (!fs::is_regular_file(input)) config_error("input document not found: " + input.string());
  if (mode == GatewayMode::Replay && !fs::is_directory(transcripts)) {
    config_error("replay mode needs a 'transcripts' directory");
  }
  if (mode != GatewayMode::Replay && !script && http.base_url.empty()) {
    config_error("record and live modes need a 'script' or an 'http' provider");
  }
  if (script && !fs::is_regular_file(*script)) config_error("script not found: " + script->string());
  for (const auto& r : rag_repos) {
    if (!fs::is_directory(r.path)) config_error("reference repository not found: " + r.path.string());
  }
  if (templates_dir && !fs::is_directory(*templates_dir)) config_error("templates_dir not found");
  if (provision_dir && !fs::is_directory(*provision_dir)) config_error("provision_dir not found");
}

// ---------------------------------------------------------------------------
// State

std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::None:
      return "none";
    case Phase::Indexed:
      return "indexed";
    case Phase::Blueprinted:
      return "blueprinted";
    case Phase::RagIndexed:
      return "rag_indexed";
    case Phase::Generated:
      return "generated";
    case Phase::Verified:
      return "verified";
  }
  return "none";
}

Phase parse_phase(std::string_view name) {
  for (Phase p : {Phase::None, Phase::Indexed, Phase::Blueprinted, Phase::RagIndexed, Phase::Generated,
                  Phase::Verified}) {
    if (to_string(p) == name) return p;
  }
  throw Error(ErrorKind::ConfigError, "unknown phase '" + std::string(name) + "'");
}

const std::vector<Phase>& pipeline_phases() {
  static const std::vector<Phase> p = {Phase::Indexed, Phase::Blueprinted, Phase::RagIndexed, Phase::Generated,
                                       Phase::Verified};
  return p;
}

json RunState::to_json() const {
  return {{"schema", "run_state.v1"},
          {"phase", to_string(phase)},
          {"digests", digests},
          {"sections", sections},
          {"resumable", resumable}};
}

RunState RunState::from_json(const json& j) {
  RunState s;
  s.phase = parse_phase(j.at("phase").get<std::string>());
  s.digests = j.at("digests").get<std::map<std::string, std::string>>();
  s.sections = j.value("sections", json::object());
  s.resumable = j.value("resumable", true);
  return s;
}

int exit_code_for(std::string_view status) {
  if (status == "clean") return 0;
  if (status == "max-iterations") return 2;
  if (status == "setup-failed") return 3;
  return 1;
}

std::string tree_digest(const fs::path& dir) {
  std::vector<std::string> files;
  if (fs::is_directory(dir)) {
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
      if (e.is_regular_file()) files.push_back(e.path().lexically_relative(dir).generic_string());
    }
  }
  std::sort(files.begin(), files.end());
  std::string acc;
  for (const auto& f : files) acc += f + '\0' + sha256_hex(read_text_file(dir / f)) + '\n';
  return sha256_hex(acc);
}

// ---------------------------------------------------------------------------
// Runner

namespace {

constexpr const char* kStateFile = "state.json";
constexpr const char* kConfigFile = "config.json";

class WorkspaceLock {
public:
  explicit WorkspaceLock(const fs::path& ws) {
    const fs::path p = ws / "lock";
    fd_ = ::open(p.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
    if (fd_ < 0) throw Error(ErrorKind::IoError, "cannot open " + p.string());
    if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
      ::close(fd_);
      throw Error(ErrorKind::WorkspaceLocked, "another run holds " + p.string());
    }
  }
  ~WorkspaceLock() {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
  WorkspaceLock(const WorkspaceLock&) = delete;
  WorkspaceLock& operator=(const WorkspaceLock&) = delete;

private:
  int fd_ = -1;
};

std::string digest_artifact(const fs::path& ws, const std::string& rel) {
  if (ends_with(rel, "/")) return tree_digest(ws / rel);
  return sha256_hex(read_text_file(ws / rel));
}

json trace_json(const AgentTrace& t) {
  return {{"queries", t.queries},
          {"fetched_chunks", t.fetched_chunks},
          {"fallback_document_order", t.fallback_document_order},
          {"retries", t.retries},
          {"requeries", t.requeries},
          {"offline", t.offline},
          {"warnings", t.warnings}};
}

std::string format_scale(double s) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", s);
  return buf;
}

class Runner {
public:
  Runner(PipelineConfig cfg, RunState state, RunControl control)
      : cfg_(std::move(cfg)), state_(std::move(state)), control_(control), sandbox_(sandbox_options(cfg_)) {
    if (cfg_.templates_dir) {
      auto t = std::make_shared<PromptTemplates>();
      t->load_overrides(*cfg_.templates_dir);
      templates_ = t;
    }
    if (fs::exists(cfg_.workspace / "timings.json")) {
      timings_ = json::parse(read_text_file(cfg_.workspace / "timings.json"));
    }
  }

  RunOutcome run() {
    for (Phase p : pipeline_phases()) {
      if (p <= state_.phase) continue;
      sandbox_.set_phase(std::string(to_string(p)));
      const auto start = std::chrono::steady_clock::now();
      try {
        run_phase(p);
      } catch (const ReplayMismatchError& e) {
        throw;
      } catch (const Error& e) {
        throw Error(e.kind(), "phase '" + std::string(to_string(p)) + "' failed (checkpoint: " +
                                  std::string(to_string(state_.phase)) + "): " + e.what());
      }
      timings_["phases"][std::string(to_string(p))] =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      sandbox_.write_file("timings.json", timings_.dump(2) + "\n");
      if (control_.stop_after && *control_.stop_after == p) break;
    }
    RunOutcome out;
    out.phase = state_.phase;
    out.repo = cfg_.workspace / "repo";
    if (state_.phase == Phase::Verified) {
      out.report = json::parse(sandbox_.read_file("report.json"));
      out.status = out.report.at("status").get<std::string>();
    } else {
      out.report = build_report("incomplete");
      out.status = "incomplete";
    }
    return out;
  }

  Sandbox& sandbox() { return sandbox_; }

private:
  static SandboxOptions sandbox_options(const PipelineConfig& cfg) {
    SandboxOptions o;
    o.root = cfg.workspace;
    o.backend = cfg.backend;
    o.container_image = cfg.container_image;
    o.env["PYTHONPATH"] = (fs::absolute(cfg.workspace) / "env" / "site").string();
    o.env["REPOGEN_SCALE"] = format_scale(cfg.scale);
    return o;
  }

  void run_phase(Phase p) {
    switch (p) {
      case Phase::Indexed:
        return phase_index();
      case Phase::Blueprinted:
        return phase_blueprint();
      case Phase::RagIndexed:
        return phase_rag();
      case Phase::Generated:
        return phase_generate();
      case Phase::Verified:
        return phase_verify();
      case Phase::None:
        return;
    }
  }

  // -- gateways ------------------------------------------------------------

  std::unique_ptr<Gateway> make_gateway(const std::string& session) {
    GatewayOptions o;
    o.session = session;
    o.mode = cfg_.mode;
    o.budgets = cfg_.budgets;
    const fs::path out = cfg_.workspace / "transcripts" / (session + ".jsonl");
    switch (cfg_.mode) {
      case GatewayMode::Replay: {
        const fs::path src = cfg_.transcripts / (session + ".jsonl");
        if (fs::exists(src)) o.replay_records = load_transcript(src);
        break;
      }
      case GatewayMode::Record:
        o.provider = provider();
        o.transcript_out = out;
        break;
      case GatewayMode::Live:
        o.provider = provider();
        break;
    }
    return std::make_unique<Gateway>(std::move(o));
  }

  std::shared_ptr<Provider> provider() {
    if (!provider_) {
      if (cfg_.script) {
        provider_ = ScriptedProvider::from_file(*cfg_.script);
      } else {
        provider_ = std::make_shared<HttpProvider>(cfg_.http);
      }
    }
    return provider_;
  }

  void finish_session(const Gateway& g) {
    const auto records = g.records();
    if (g.mode() == GatewayMode::Replay && !g.replay_exhausted()) {
      throw ReplayMismatchError(g.session(), records.size(), "transcript has unconsumed records");
    }
    if (g.mode() != GatewayMode::Record) {
      std::string text;
      for (const auto& r : records) text += r.to_json().dump() + "\n";
      sandbox_.write_file(fs::path("transcripts") / (g.session() + ".jsonl"), text);
    }
    state_.sections["usage"][g.session()] = g.usage_report().to_json();
  }

  // -- checkpoints ---------------------------------------------------------

  void complete(Phase p, const std::vector<std::string>& artifacts) {
    state_.phase = p;
    for (const auto& a : artifacts) state_.digests[a] = digest_artifact(cfg_.workspace, a);
    sandbox_.write_file(kStateFile, state_.to_json().dump(2) + "\n");
  }

  void write_json(const fs::path& rel, const json& j) { sandbox_.write_file(rel, j.dump(2) + "\n"); }
  json read_json(const fs::path& rel) { return json::parse(sandbox_.read_file(rel)); }

  AnalysisOptions analysis_options() const {
    AnalysisOptions ao;
    if (!cfg_.concept_keywords.empty()) ao.concept_keywords = cfg_.concept_keywords;
    if (!cfg_.algorithm_keywords.empty()) ao.algorithm_keywords = cfg_.algorithm_keywords;
    ao.max_retries = cfg_.max_retries;
    ao.templates = templates_;
    return ao;
  }

  // -- phases --------------------------------------------------------------

  void phase_index() {
    const std::string name = cfg_.input.filename().string();
    const fs::path copy = fs::path("input") / name;
    sandbox_.write_file(copy, read_text_file(cfg_.input));
    const SourceDocument doc = parse_document(sandbox_.read_file(copy), cfg_.format, name);
    const ContentIndex index = build_index(doc);
    write_json("index/content_index.json", index.to_json());
    state_.sections["index"] = {{"document", name}, {"blocks", index.block_count()}, {"chunks", index.size()}};
    complete(Phase::Indexed, {copy.generic_string(), "index/content_index.json"});
  }

  void phase_blueprint() {
    const ContentIndex index = ContentIndex::from_json(read_json("index/content_index.json"));
    const AnalysisOptions ao = analysis_options();

    auto gc = make_gateway("concept");
    auto concept_result = run_concept_agent(index, *gc, ao);
    finish_session(*gc);
    auto ga = make_gateway("algorithm");
    auto algo = run_algorithm_agent(index, *ga, nullptr, ao);
    finish_session(*ga);
    auto gp = make_gateway("planner");
    auto bp = synthesize_blueprint(concept_result.value, algo.value, index, *gp, ao);
    finish_session(*gp);

    write_json("analysis/concept_schema.json", concept_result.value.to_json());
    write_json("analysis/algorithm_schema.json", algo.value.to_json());
    write_json("blueprint.json", bp.value.to_json());
    state_.sections["analysis"] = {{"concept", trace_json(concept_result.trace)},
                                   {"algorithm", trace_json(algo.trace)},
                                   {"planner", trace_json(bp.trace)},
                                   {"planned_files", bp.value.file_hierarchy.size()},
                                   {"catalog_items", bp.value.algorithm_catalog.size()},
                                   {"blueprint_violations", validate_blueprint(bp.value).violations.size()}};
    complete(Phase::Blueprinted,
             {"analysis/concept_schema.json", "analysis/algorithm_schema.json", "blueprint.json"});
  }

  void phase_rag() {
    const Blueprint bp = Blueprint::from_json(read_json("blueprint.json"));
    RagIndex index;
    if (cfg_.retrieval && !cfg_.rag_repos.empty()) {
      std::vector<ReferenceRepo> repos;
      for (const auto& r : cfg_.rag_repos) {
        const fs::path dest = fs::path("refs") / r.name;
        if (sandbox_.exists(dest)) sandbox_.remove_all(dest);
        sandbox_.import_tree(r.path, dest);
        repos.push_back({r.name, dest});
      }
      RagOptions ro;
      ro.blacklist = cfg_.blacklist;
      ro.max_retries = cfg_.max_retries;
      ro.templates = templates_;
      auto g = make_gateway("rag");
      index = build_index(repos, bp, *g, sandbox_, ro);
      finish_session(*g);
    }
    write_json("rag_index.json", index.to_json());
    json per_target = json::object();
    for (const auto& [target, list] : index.per_target()) per_target[target] = list.size();
    state_.sections["rag"] = {{"enabled", cfg_.retrieval},
                              {"repos", cfg_.rag_repos.size()},
                              {"tuples", index.tuples().size()},
                              {"per_target", per_target},
                              {"warnings", index.warnings()}};
    complete(Phase::RagIndexed, {"rag_index.json"});
  }

  void phase_generate() {
    const Blueprint bp = Blueprint::from_json(read_json("blueprint.json"));
    auto rag = std::make_shared<const RagIndex>(RagIndex::from_json(read_json("rag_index.json")));
    for (const char* dir : {"repo", "memory", "checkpoints/generated"}) {
      if (sandbox_.exists(dir)) sandbox_.remove_all(dir);
    }
    GenerationOptions go;
    go.context.budget_tokens = cfg_.context_budget;
    go.context.templates = templates_;
    go.max_retries = cfg_.max_retries;
    if (cfg_.retrieval && !rag->empty()) go.retrieval = make_retrieval_hook(rag, bp);

    auto g = make_gateway("generate");
    const GenerationRun run = run_generation(bp, *g, sandbox_, go);
    finish_session(*g);
    write_json("memory/final.json", run.memory.to_json());
    sandbox_.copy_tree("repo", "checkpoints/generated");

    json steps = json::array();
    std::size_t max_tokens = 0;
    bool sound = true;
    for (const auto& s : run.steps) {
      steps.push_back(s.to_json());
      max_tokens = std::max(max_tokens, s.context_tokens);
      sound = sound && s.dependencies_in_memory;
    }
    state_.sections["generation"] = {{"steps", steps},
                                     {"planned_files", bp.file_hierarchy.size()},
                                     {"generation_order", run.memory.generation_order()},
                                     {"max_context_tokens", max_tokens},
                                     {"context_budget", cfg_.context_budget},
                                     {"dependencies_sound", sound}};
    complete(Phase::Generated, {"memory/", "checkpoints/generated/"});
  }

  void phase_verify() {
    const Blueprint bp = Blueprint::from_json(read_json("blueprint.json"));
    if (cfg_.provision_dir) sandbox_.import_tree(*cfg_.provision_dir, "env");
    if (sandbox_.exists("repo")) sandbox_.remove_all("repo");
    sandbox_.copy_tree("checkpoints/generated", "repo");

    VerifierOptions vo;
    vo.max_iter = cfg_.max_iter;
    vo.timeout = std::chrono::milliseconds(static_cast<long long>(std::llround(cfg_.timeout_s * 1000.0)));
    vo.entry = cfg_.entry;
    vo.install_command = cfg_.install_command;
    vo.max_retries = cfg_.max_retries;
    vo.templates = templates_;

    auto g = make_gateway("verify");
    const VerificationResult v = run_verification(sandbox_, "repo", bp, *g, vo);
    finish_session(*g);
    write_json("verify_log.json", v.to_json());

    json durations = json::array();
    for (const auto& it : v.refine.iterations) durations.push_back(it.duration_s);
    timings_["executions"] = durations;

    std::size_t unfixable = 0;
    for (const auto& o : v.static_refine.outcomes) unfixable += o.status == "unfixable";
    std::size_t patches = v.static_refine.patches.size();
    for (const auto& it : v.refine.iterations) patches += it.patches.size();
    state_.sections["verification"] = {{"status", to_string(v.refine.status)},
                                       {"executions", v.refine.executions},
                                       {"structural_issues", v.report.count(kStructural)},
                                       {"quality_issues", v.report.count(kQuality)},
                                       {"structural_after_refine", v.static_refine.rescan.count(kStructural)},
                                       {"unfixable", unfixable},
                                       {"patches_applied", patches}};
    const std::string status(to_string(v.refine.status));
    state_.phase = Phase::Verified;
    write_json("report.json", build_report(status));
    complete(Phase::Verified, {"verify_log.json", "repo/", "report.json"});
  }

  // -- report --------------------------------------------------------------

  json build_report(const std::string& status) {
    json tree = json::array();
    if (sandbox_.exists("repo")) {
      for (const auto& f : sandbox_.list_files("repo")) {
        tree.push_back({{"path", f}, {"sha256", sha256_hex(read_text_file(cfg_.workspace / "repo" / f))}});
      }
    }
    UsageReport total;
    if (state_.sections.contains("usage")) {
      for (const auto& [session, u] : state_.sections["usage"].items()) total += UsageReport::from_json(u);
    }
    const AuditSummary audit = check_audit_log(cfg_.workspace / "sandbox_audit.jsonl");
    json r = {{"schema", "run_report.v1"},
              {"status", status},
              {"phase", to_string(state_.phase)},
              {"repo_tree", tree},
              {"repo_digest", tree_digest(cfg_.workspace / "repo")},
              {"usage_totals", total.to_json()},
              {"sandbox", {{"denied", audit.denied}, {"outside_root", audit.outside_root}}}};
    for (const auto& [k, v] : state_.sections.items()) r[k] = v;
    json inv = json::object();
    if (state_.sections.contains("analysis")) inv["blueprint_violations"] = state_.sections["analysis"]["blueprint_violations"];
    if (state_.sections.contains("generation")) {
      const json& g = state_.sections["generation"];
      inv["dependencies_sound"] = g["dependencies_sound"];
      inv["steps_equal_files"] = g["steps"].size() == g["planned_files"].get<std::size_t>();
      inv["contexts_within_budget"] = g["max_context_tokens"].get<std::size_t>() <= g["context_budget"].get<std::size_t>();
    }
    if (state_.sections.contains("verification")) {
      inv["structural_after_refine"] = state_.sections["verification"]["structural_after_refine"];
    }
    inv["sandbox_breaches"] = audit.denied + audit.outside_root;
    r["invariants"] = inv;
    return r;
  }

  PipelineConfig cfg_;
  RunState state_;
  RunControl control_;
  Sandbox sandbox_;
  std::shared_ptr<const PromptTemplates> templates_;
  std::shared_ptr<Provider> provider_;
  json timings_ = json::object();
};

void prepare_workspace(const fs::path& ws) {
  std::error_code ec;
  if (fs::exists(ws, ec)) {
    if (!fs::is_directory(ws, ec)) config_error("workspace is not a directory: " + ws.string());
    const bool empty = fs::is_empty(ws, ec);
    if (!empty && !fs::exists(ws / kStateFile)) {
      config_error("workspace is not empty and holds no previous run: " + ws.string());
    }
  } else if (!fs::create_directories(ws, ec) || ec) {
    config_error("cannot create workspace " + ws.string() + ": " + ec.message());
  }
  const fs::path probe = ws / ".write_probe";
  {
    std::ofstream out(probe);
    if (!out) config_error("workspace is not writable: " + ws.string());
  }
  fs::remove(probe, ec);
}

}  // namespace

RunOutcome run_pipeline(const PipelineConfig& cfg_in, const RunControl& control) {
  PipelineConfig cfg = cfg_in;
  cfg.workspace = fs::absolute(cfg.workspace).lexically_normal();
  cfg.validate();
  prepare_workspace(cfg.workspace);
  WorkspaceLock lock(cfg.workspace);
  for (const auto& e : fs::directory_iterator(cfg.workspace)) {
    if (e.path().filename() != "lock") fs::remove_all(e.path());
  }
  write_text_file(cfg.workspace / kConfigFile, cfg.to_json().dump(2) + "\n");
  Runner runner(cfg, RunState{}, control);
  runner.sandbox().write_file(kStateFile, RunState{}.to_json().dump(2) + "\n");
  return runner.run();
}

RunOutcome resume(const fs::path& workspace_in, const RunControl& control) {
  const fs::path ws = fs::absolute(workspace_in).lexically_normal();
  if (!fs::is_regular_file(ws / kStateFile) || !fs::is_regular_file(ws / kConfigFile)) {
    config_error("not a workspace: " + ws.string());
  }
  WorkspaceLock lock(ws);
  PipelineConfig cfg = PipelineConfig::from_json(json::parse(read_text_file(ws / kConfigFile)), ws);
  cfg.workspace = ws;
  RunState state = RunState::from_json(json::parse(read_text_file(ws / kStateFile)));
  if (!state.resumable) config_error("workspace is not resumable");
  for (const auto& [artifact, digest] : state.digests) {
    if (!fs::exists(ws / artifact) || digest_artifact(ws, artifact) != digest) {
      throw Error(ErrorKind::DigestMismatch, "artifact '" + artifact + "' does not match its checkpoint digest");
    }
  }
  Runner runner(cfg, std::move(state), control);
  return runner.run();
}

json read_report(const fs::path& workspace) {
  const fs::path ws = fs::absolute(workspace);
  if (fs::is_regular_file(ws / "report.json")) return json::parse(read_text_file(ws / "report.json"));
  if (!fs::is_regular_file(ws / kStateFile)) config_error("not a workspace: " + ws.string());
  const RunState state = RunState::from_json(json::parse(read_text_file(ws / kStateFile)));
  json r = {{"schema", "run_report.v1"}, {"status", "incomplete"}, {"phase", to_string(state.phase)}};
  for (const auto& [k, v] : state.sections.items()) r[k] = v;
  return r;
}

}  // namespace repogen
