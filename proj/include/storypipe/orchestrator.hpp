#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "storypipe/config.hpp"
#include "storypipe/providers.hpp"
#include "storypipe/schema.hpp"
#include "storypipe/store.hpp"

namespace storypipe::orchestrator {

// The six stages in execution order.
const std::vector<std::string>& stage_order();

// Durable run snapshot, checkpointed to run.json at every stage boundary.
struct RunState {
  std::string run_id;
  uint64_t seed = 0;
  std::string config_digest;
  std::string prompt_text;
  int target_shot_count = 0;
  double target_clip_seconds = 0.0;
  std::string cursor;  // next stage to execute, or "done"
  std::map<std::string, std::string> stage_status;  // pending|running|complete|failed
  std::map<std::string, std::string> manifest;      // artifact path -> sha256 digest
  std::vector<std::string> warnings;

  std::string serialize() const;
  static RunState parse(std::string_view text);
};

struct RunOptions {
  // Stop cleanly after this stage completes; used to exercise resume.
  std::optional<std::string> halt_after;
  bool allow_config_change = false;
};

struct RunResult {
  RunState state;
  std::optional<StoryOutput> output;  // present once the run reaches "done"
};

// Executes the pipeline into run_dir: persists config.json, scenario.json,
// run.json checkpoints, every stage artifact, calls.log, and (on
// completion) report.json. Holds run.lock for the duration.
RunResult run_pipeline(const config::RunConfig& cfg, const UserPrompt& prompt,
                       const providers::MockScenario& scenario,
                       const std::filesystem::path& run_dir, const RunOptions& options = {});

// Continues a persisted run from its first non-complete stage after
// verifying the manifest and the config digest. Completed runs are a
// no-op that returns the existing output.
RunResult resume(const std::filesystem::path& run_dir, const RunOptions& options = {});

// 100 * passed / total, rounded half-up to one decimal. EmptyInput on [].
double compliance_rate(const std::vector<bool>& results);

struct UnitCounts {
  int passed = 0;
  int total = 0;
};

// Per-family pass/fail units recomputed from a run's stored artifacts:
// shot_design (per shot), voice_plan (per run), audio_fit (per shot), and
// naturalness (per keyframe, final selected candidate vs threshold).
std::map<std::string, UnitCounts> family_units(const config::RunConfig& cfg,
                                               const std::map<std::string, std::string>& manifest,
                                               const store::ArtifactStore& store);

// report.json content for a finished (or partial) run.
std::string build_report(const config::RunConfig& cfg, const RunState& state,
                         const store::ArtifactStore& store,
                         const std::map<std::string, double>& stage_seconds);

struct TrialMetrics {
  std::map<std::string, UnitCounts> families;
};

// One fully in-memory pipeline run; the workhorse of ablation arms.
TrialMetrics run_trial(const config::RunConfig& cfg, const UserPrompt& prompt,
                       const providers::MockScenario& scenario);

struct FamilyComparison {
  std::string family;
  double baseline_rate = 0.0;
  double ablated_rate = 0.0;
  // One-sided sign test over paired per-trial pass fractions
  // (baseline > ablated); 1.0 when no trial differs.
  double p_value = 1.0;
};

struct AblationReport {
  int trials = 0;
  std::vector<std::string> disabled;
  std::vector<FamilyComparison> families;

  std::string to_json() const;
  std::string to_table() const;
};

// Paired comparison: `trials` seeded in-memory runs per arm, the same trial
// seed on both sides, baseline with cfg's toggles vs the arm with `disabled`
// additionally switched off. Mock backends only.
AblationReport run_ablation(const config::RunConfig& cfg, const std::set<std::string>& disabled,
                            int trials, const providers::MockScenario& defect_model);

}  // namespace storypipe::orchestrator
