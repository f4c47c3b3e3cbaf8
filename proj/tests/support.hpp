#pragma once

#include <cstdlib>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "repogen/blueprint.hpp"
#include "repogen/llm_gateway.hpp"
#include "repogen/text.hpp"

namespace testsupport {

namespace fs = std::filesystem;

inline fs::path fixtures() { return fs::path(REPOGEN_FIXTURE_DIR); }
inline fs::path toy() { return fixtures() / "toy"; }

/// Fresh directory removed on destruction.
class TempDir {
public:
  explicit TempDir(const std::string& tag = "repogen") {
    std::string tmpl = (fs::temp_directory_path() / (tag + "-XXXXXX")).string();
    if (!mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const fs::path& p) const { return path_ / p; }

private:
  fs::path path_;
};

/// Relative path -> content for every regular file under `dir`.
inline std::map<std::string, std::string> read_tree(const fs::path& dir) {
  std::map<std::string, std::string> out;
  if (!fs::exists(dir)) return out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).generic_string()] = repogen::read_text_file(e.path());
  }
  return out;
}

inline void copy_tree(const fs::path& from, const fs::path& to) {
  fs::create_directories(to);
  fs::copy(from, to, fs::copy_options::recursive | fs::copy_options::overwrite_existing);
}

/// Toy run configuration as JSON with absolute paths.
inline nlohmann::json toy_config(const fs::path& workspace, const std::string& mode = "replay") {
  nlohmann::json gw = {{"mode", mode}};
  if (mode == "replay") {
    gw["transcripts"] = (toy() / "transcripts").string();
  } else {
    gw["script"] = (toy() / "script.json").string();
  }
  return {
      {"input", (toy() / "paper.md").string()},
      {"workspace", workspace.string()},
      {"gateway", gw},
      {"rag",
       {{"repos",
         {{{"name", "sgd-reference"}, {"path", (toy() / "refs" / "sgd-reference").string()}, {"license", "MIT"}},
          {{"name", "data-tools"}, {"path", (toy() / "refs" / "data-tools").string()}, {"license", "MIT"}}}}}},
      {"scale", 0.25},
      {"timeout_s", 30},
      {"provision_dir", (toy() / "provision").string()},
      {"install_command", "python3 ../env/stub_install.py requirements.txt"},
  };
}

inline std::unique_ptr<repogen::Gateway> live_gateway(std::shared_ptr<repogen::Provider> provider,
                                                      const std::string& session = "test") {
  repogen::GatewayOptions o;
  o.session = session;
  o.mode = repogen::GatewayMode::Live;
  o.provider = std::move(provider);
  return std::make_unique<repogen::Gateway>(std::move(o));
}

inline repogen::ScriptedProvider::Rule rule(std::string template_id, std::vector<std::string> match,
                                            std::string reply, int times = -1) {
  repogen::ScriptedProvider::Rule r;
  r.template_id = std::move(template_id);
  r.must_contain = std::move(match);
  r.reply = std::move(reply);
  r.times = times;
  return r;
}

struct FilePlan {
  std::string path;
  std::vector<std::string> imports = {};
  std::vector<std::string> links = {};
  int priority = 1;
  std::vector<repogen::SymbolSpec> symbols = {};
};

/// Valid blueprint with every file in one stage, hierarchy in the given order.
inline repogen::Blueprint blueprint_of(const std::vector<FilePlan>& files,
                                       std::vector<repogen::CatalogItem> catalog = {}) {
  repogen::Blueprint b;
  repogen::Stage stage{"all", {}, "true"};
  for (const auto& f : files) {
    b.file_hierarchy.push_back({f.path, f.priority, "file " + f.path});
    repogen::ComponentSpec spec;
    spec.purpose = "implements " + f.path;
    spec.imports = f.imports;
    spec.links = f.links;
    spec.symbols = f.symbols;
    b.component_specs[f.path] = spec;
    stage.files.push_back(f.path);
  }
  b.staged_plan.push_back(stage);
  b.algorithm_catalog = std::move(catalog);
  return b;
}

}  // namespace testsupport
