#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "repogen/error.hpp"
#include "repogen/pipeline.hpp"

namespace {

constexpr int kConfigErrorExit = 4;
constexpr int kFailureExit = 1;

int finish(const repogen::RunOutcome& out) {
  std::cout << "phase: " << repogen::to_string(out.phase) << "\n"
            << "status: " << out.status << "\n"
            << "repository: " << out.repo.string() << "\n";
  if (out.status == "incomplete") return 0;
  return repogen::exit_code_for(out.status);
}

std::optional<repogen::Phase> stop_phase(const std::string& name) {
  if (name.empty()) return std::nullopt;
  return repogen::parse_phase(name);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Turn a technical document into a verified code repository"};
  app.require_subcommand(1);

  std::string config_path;
  std::string workspace;
  std::string stop_after;

  auto* run = app.add_subcommand("run", "Run every phase from a config file");
  run->add_option("--config", config_path, "JSON config file")->required();
  run->add_option("--stop-after", stop_after, "Stop after the named phase");

  auto* resume = app.add_subcommand("resume", "Continue a workspace from its last checkpoint");
  resume->add_option("workspace", workspace, "Workspace directory")->required();
  resume->add_option("--stop-after", stop_after, "Stop after the named phase");

  auto* report = app.add_subcommand("report", "Print the run report of a workspace");
  report->add_option("workspace", workspace, "Workspace directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigErrorExit;
  }

  try {
    if (*run) {
      const auto cfg = repogen::PipelineConfig::load(config_path);
      return finish(repogen::run_pipeline(cfg, {stop_phase(stop_after)}));
    }
    if (*resume) return finish(repogen::resume(workspace, {stop_phase(stop_after)}));
    if (*report) {
      std::cout << repogen::read_report(workspace).dump(2) << "\n";
      return 0;
    }
  } catch (const repogen::Error& e) {
    std::cerr << "repogen: " << e.what() << "\n";
    return e.kind() == repogen::ErrorKind::ConfigError ? kConfigErrorExit : kFailureExit;
  } catch (const std::exception& e) {
    std::cerr << "repogen: " << e.what() << "\n";
    return kFailureExit;
  }
  return kFailureExit;
}
