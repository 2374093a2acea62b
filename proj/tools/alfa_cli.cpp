#include <iostream>

#include <CLI11.hpp>

#include "alfa/error.hpp"
#include "alfa/pipeline.hpp"

namespace fs = std::filesystem;
using namespace alfa;

int main(int argc, char** argv) {
  CLI::App app{"ALFA pipeline: stages of attribute-aligned question synthesis, filtering and evaluation"};
  app.require_subcommand(1);

  struct StageCmd {
    pipeline::Stage stage;
    CLI::App* cmd = nullptr;
    std::string config;
    bool dry_run = false;
  };
  std::vector<StageCmd> cmds;
  cmds.reserve(pipeline::kStages.size());
  std::vector<std::string> report_dirs;
  std::string report_json;

  for (auto stage : pipeline::kStages) {
    std::string name(pipeline::to_string(stage));
    for (auto& c : name) c = c == '_' ? '-' : c;
    cmds.push_back({stage});
    auto& sc = cmds.back();
    sc.cmd = app.add_subcommand(name, "run the " + std::string(pipeline::to_string(stage)) + " stage");
    sc.cmd->add_option("-c,--config", sc.config, "run config (JSON)")->check(CLI::ExistingFile);
    sc.cmd->add_flag("--dry-run", sc.dry_run, "print planned LLM call counts and exit");
    if (stage == pipeline::Stage::report) {
      sc.cmd->add_option("runs", report_dirs, "run directories to report on (without --config)");
      sc.cmd->add_option("--json", report_json, "also write the machine-readable report here");
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : pipeline::kConfigError;
  }

  for (auto& sc : cmds) {
    if (!sc.cmd->parsed()) continue;
    try {
      if (sc.stage == pipeline::Stage::report && sc.config.empty()) {
        std::vector<fs::path> dirs(report_dirs.begin(), report_dirs.end());
        auto rep = pipeline::build_report(dirs);
        std::cout << rep.text;
        if (!report_json.empty()) write_file_atomic(report_json, rep.data.dump(2) + "\n");
        return pipeline::kSuccess;
      }
      if (sc.config.empty()) {
        std::cerr << "--config is required\n";
        return pipeline::kConfigError;
      }
      auto cfg = pipeline::RunConfig::load(sc.config);
      pipeline::StageOptions opts;
      opts.dry_run = sc.dry_run;
      opts.log = sc.dry_run ? &std::cout : &std::cerr;
      return pipeline::run_stage(cfg, sc.stage, opts);
    } catch (const ConfigError& e) {
      std::cerr << "config error: " << e.what() << "\n";
      return pipeline::kConfigError;
    } catch (const ValidationError& e) {
      std::cerr << "error: " << e.what() << "\n";
      return pipeline::kConfigError;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return pipeline::kStageFailure;
    }
  }
  return pipeline::kSuccess;
}
