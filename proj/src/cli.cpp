#include "storypipe/cli.hpp"

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "storypipe/config.hpp"
#include "storypipe/errors.hpp"
#include "storypipe/guidelines.hpp"
#include "storypipe/orchestrator.hpp"
#include "storypipe/providers.hpp"
#include "storypipe/schema.hpp"
#include "storypipe/util.hpp"

namespace storypipe::cli {
namespace {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

struct RunArgs {
  std::string prompt_text;
  std::string prompt_file;
  int shots = 3;
  double clip_seconds = 5.0;
  std::string config_path;
  std::string backend;
  std::string scenario_path;
  uint64_t seed = 0;
  bool seed_given = false;
  bool backend_given = false;
  std::string out_dir;
  std::vector<std::string> disable;
  bool json = false;
};

struct LintArgs {
  std::string script_path;
  bool json = false;
};

struct ResumeArgs {
  std::string run_dir;
  bool allow_config_change = false;
  bool json = false;
};

struct ReportArgs {
  std::string run_dir;
  bool json = false;
};

struct AblateArgs {
  std::string config_path;
  std::string scenario_path;
  uint64_t seed = 0;
  bool seed_given = false;
  std::vector<std::string> disable;
  int trials = 100;
  std::string out_file;
  bool json = false;
};

config::RunConfig load_config(const std::string& path) {
  if (path.empty()) return config::RunConfig::defaults();
  return config::RunConfig::load(path);
}

providers::MockScenario load_scenario(const std::string& path) {
  if (path.empty()) return providers::MockScenario{};
  std::error_code ec;
  if (!fs::exists(path, ec)) throw ConfigError("scenario file not found: " + path);
  return providers::MockScenario::load(path);
}

ojson summary_json(const orchestrator::RunResult& result, const fs::path& run_dir) {
  ojson doc;
  doc["run_id"] = result.state.run_id;
  doc["cursor"] = result.state.cursor;
  doc["shots"] = result.state.target_shot_count;
  doc["stages"] = ojson::object();
  for (const std::string& name : orchestrator::stage_order()) {
    auto it = result.state.stage_status.find(name);
    doc["stages"][name] = it == result.state.stage_status.end() ? "pending" : it->second;
  }
  doc["warnings"] = result.state.warnings;
  doc["run_dir"] = run_dir.string();
  doc["timeline"] = (run_dir / "timeline.json").string();
  doc["report"] = (run_dir / "report.json").string();
  return doc;
}

void print_summary(const orchestrator::RunResult& result, const fs::path& run_dir) {
  const orchestrator::RunState& state = result.state;
  std::printf("run %s: %s\n", state.run_id.c_str(), state.cursor.c_str());
  std::printf("  prompt: %s\n", state.prompt_text.c_str());
  std::printf("  shots: %d, clip seconds: %.2f, seed: %llu\n", state.target_shot_count,
              state.target_clip_seconds, static_cast<unsigned long long>(state.seed));
  std::printf("  stages:\n");
  for (const std::string& name : orchestrator::stage_order()) {
    auto it = state.stage_status.find(name);
    std::printf("    %-12s %s\n", name.c_str(),
                it == state.stage_status.end() ? "pending" : it->second.c_str());
  }
  if (state.warnings.empty()) {
    std::printf("  warnings: none\n");
  } else {
    std::printf("  warnings:\n");
    for (const std::string& warning : state.warnings) std::printf("    %s\n", warning.c_str());
  }
  std::printf("  timeline: %s\n", (run_dir / "timeline.json").string().c_str());
  std::printf("  report: %s\n", (run_dir / "report.json").string().c_str());
}

int cmd_run(const RunArgs& args) {
  if (args.prompt_text.empty() == args.prompt_file.empty()) {
    throw ConfigError("provide exactly one of --prompt or --prompt-file");
  }
  std::string text = args.prompt_text;
  if (!args.prompt_file.empty()) {
    std::error_code ec;
    if (!fs::exists(args.prompt_file, ec)) {
      throw ConfigError("prompt file not found: " + args.prompt_file);
    }
    text = util::trim(util::read_file(args.prompt_file));
  }

  config::RunConfig cfg = load_config(args.config_path);
  if (args.backend_given) cfg.backend = args.backend;
  if (args.seed_given) cfg.seed = args.seed;
  for (const std::string& token : args.disable) cfg.disable(token);
  cfg.validate();

  providers::MockScenario scenario = load_scenario(args.scenario_path);
  UserPrompt prompt{text, args.shots, args.clip_seconds};
  orchestrator::RunResult result = orchestrator::run_pipeline(cfg, prompt, scenario, args.out_dir);
  if (args.json) {
    std::cout << summary_json(result, args.out_dir).dump(2) << "\n";
  } else {
    print_summary(result, args.out_dir);
  }
  return 0;
}

int cmd_lint(const LintArgs& args) {
  std::error_code ec;
  if (!fs::exists(args.script_path, ec)) {
    throw ConfigError("script file not found: " + args.script_path);
  }
  Script script = parse_script(util::read_file(args.script_path));

  guidelines::CheckConfig check_cfg = guidelines::default_check_config();
  std::vector<Finding> findings = guidelines::check_structure(script);
  std::vector<Finding> content = guidelines::check_content(script, check_cfg);
  std::vector<Finding> style =
      guidelines::check_style(script, static_cast<int>(script.shots.size()));
  findings.insert(findings.end(), content.begin(), content.end());
  findings.insert(findings.end(), style.begin(), style.end());
  guidelines::sort_findings(findings);

  ojson doc;
  doc["schema_version"] = 1;
  doc["script"] = args.script_path;
  doc["findings"] = ojson::array();
  for (const Finding& finding : findings) {
    ojson node;
    node["rule_id"] = finding.rule_id;
    node["shot_index"] = finding.shot_index ? ojson(*finding.shot_index) : ojson(nullptr);
    node["message"] = finding.message;
    doc["findings"].push_back(std::move(node));
  }
  util::write_file_atomic(args.script_path + ".lint.json", doc.dump(2) + "\n");

  if (args.json) {
    std::cout << doc.dump(2) << "\n";
  } else {
    for (const Finding& finding : findings) {
      std::printf("%s shot=%d %s\n", finding.rule_id.c_str(), finding.shot_index.value_or(0),
                  finding.message.c_str());
    }
  }
  return findings.empty() ? 0 : 1;
}

int cmd_resume(const ResumeArgs& args) {
  std::error_code ec;
  if (!fs::exists(args.run_dir, ec)) throw ConfigError("run directory not found: " + args.run_dir);
  orchestrator::RunOptions options;
  options.allow_config_change = args.allow_config_change;
  orchestrator::RunResult result = orchestrator::resume(args.run_dir, options);
  if (args.json) {
    std::cout << summary_json(result, args.run_dir).dump(2) << "\n";
  } else {
    print_summary(result, args.run_dir);
  }
  return 0;
}

int cmd_report(const ReportArgs& args) {
  fs::path report_path = fs::path(args.run_dir) / "report.json";
  std::error_code ec;
  if (!fs::exists(report_path, ec)) {
    throw ConfigError("no report.json under '" + args.run_dir + "'; the run has not finished");
  }
  std::string text = util::read_file(report_path);
  if (args.json) {
    std::cout << text;
    return 0;
  }

  ojson doc = ojson::parse(text);
  std::printf("run %s\n", doc.at("run_id").get<std::string>().c_str());

  std::printf("\ncompliance\n");
  std::printf("  %-14s %8s %8s %8s\n", "check", "passed", "total", "rate");
  for (const auto& [family, node] : doc.at("compliance").items()) {
    std::printf("  %-14s %8d %8d %8.1f\n", family.c_str(), node.at("passed").get<int>(),
                node.at("total").get<int>(), node.at("rate").get<double>());
  }

  std::printf("\nrefinement loops\n");
  std::printf("  %-14s %8s %12s %6s %11s %10s\n", "family", "loops", "iterations", "max",
              "exhausted", "residual");
  for (const auto& [family, node] : doc.at("loops").items()) {
    std::printf("  %-14s %8d %12lld %6d %11d %10lld\n", family.c_str(),
                node.at("count").get<int>(), node.at("iterations").get<long long>(),
                node.at("max_iterations").get<int>(), node.at("budget_exhausted").get<int>(),
                node.at("residual_findings").get<long long>());
  }

  std::printf("\nstage seconds\n");
  for (const auto& [stage, seconds] : doc.at("stage_seconds").items()) {
    std::printf("  %-14s %8.3f\n", stage.c_str(), seconds.get<double>());
  }

  const ojson& warnings = doc.at("warnings");
  std::printf("\nwarnings: %s\n", warnings.empty() ? "none" : "");
  for (const ojson& warning : warnings) {
    std::printf("  %s\n", warning.get<std::string>().c_str());
  }
  return 0;
}

int cmd_ablate(const AblateArgs& args) {
  config::RunConfig cfg = load_config(args.config_path);
  if (args.seed_given) cfg.seed = args.seed;
  cfg.validate();
  providers::MockScenario scenario = load_scenario(args.scenario_path);
  std::set<std::string> disabled(args.disable.begin(), args.disable.end());
  orchestrator::AblationReport report =
      orchestrator::run_ablation(cfg, disabled, args.trials, scenario);
  if (!args.out_file.empty()) util::write_file_atomic(args.out_file, report.to_json());
  std::cout << (args.json ? report.to_json() : report.to_table());
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"storypipe: turn one prompt into a planned video story"};
  app.require_subcommand(1);

  RunArgs run_args;
  CLI::App* run = app.add_subcommand("run", "Execute the full pipeline into an output directory");
  run->add_option("--prompt", run_args.prompt_text, "Story premise text");
  run->add_option("--prompt-file", run_args.prompt_file, "File holding the story premise");
  run->add_option("--shots", run_args.shots, "Number of shots to plan")->default_val(3);
  run->add_option("--clip-seconds", run_args.clip_seconds, "Target duration of each clip")
      ->default_val(5.0);
  run->add_option("--config", run_args.config_path, "Run configuration file");
  CLI::Option* run_backend = run->add_option("--backend", run_args.backend, "Provider backend")
                                 ->check(CLI::IsMember({"mock", "http"}));
  run->add_option("--scenario", run_args.scenario_path, "Mock scenario file");
  CLI::Option* run_seed = run->add_option("--seed", run_args.seed, "Run seed");
  run->add_option("--out", run_args.out_dir, "Run output directory")->required();
  run->add_option("--disable", run_args.disable, "Disable an agent or loop (repeatable)");
  run->add_flag("--json", run_args.json, "Machine-readable summary on stdout");

  LintArgs lint_args;
  CLI::App* lint = app.add_subcommand("lint", "Check a script document against the writing rules");
  lint->add_option("script", lint_args.script_path, "Script JSON file")->required();
  lint->add_flag("--json", lint_args.json, "Machine-readable findings on stdout");

  ResumeArgs resume_args;
  CLI::App* resume = app.add_subcommand("resume", "Continue a persisted run");
  resume->add_option("run_dir", resume_args.run_dir, "Run directory")->required();
  resume->add_flag("--allow-config-change", resume_args.allow_config_change,
                   "Accept a changed config digest");
  resume->add_flag("--json", resume_args.json, "Machine-readable summary on stdout");

  ReportArgs report_args;
  CLI::App* report = app.add_subcommand("report", "Pretty-print a finished run's report");
  report->add_option("run_dir", report_args.run_dir, "Run directory")->required();
  report->add_flag("--json", report_args.json, "Raw report.json on stdout");

  AblateArgs ablate_args;
  CLI::App* ablate = app.add_subcommand("ablate", "Paired trials with agents disabled");
  ablate->add_option("--config", ablate_args.config_path, "Run configuration file");
  ablate->add_option("--scenario", ablate_args.scenario_path, "Defect-model scenario file");
  CLI::Option* ablate_seed = ablate->add_option("--seed", ablate_args.seed, "Base seed");
  ablate->add_option("--disable", ablate_args.disable, "Agent or loop to ablate (repeatable)")
      ->required();
  ablate->add_option("--trials", ablate_args.trials, "Paired trials per arm")->default_val(100);
  ablate->add_option("--out", ablate_args.out_file, "Write the JSON report to this file");
  ablate->add_flag("--json", ablate_args.json, "JSON report on stdout");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  run_args.backend_given = run_backend->count() > 0;
  run_args.seed_given = run_seed->count() > 0;
  ablate_args.seed_given = ablate_seed->count() > 0;

  try {
    if (run->parsed()) return cmd_run(run_args);
    if (lint->parsed()) return cmd_lint(lint_args);
    if (resume->parsed()) return cmd_resume(resume_args);
    if (report->parsed()) return cmd_report(report_args);
    if (ablate->parsed()) return cmd_ablate(ablate_args);
  } catch (const ConfigDigestMismatch& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const SyntaxError& e) {
    std::cerr << "error: line " << e.line() << ", column " << e.column() << ": " << e.what()
              << "\n";
    return 2;
  } catch (const SchemaError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace storypipe::cli
