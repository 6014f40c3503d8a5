#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <json.hpp>

#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "storypipe/config.hpp"
#include "storypipe/errors.hpp"
#include "storypipe/orchestrator.hpp"
#include "storypipe/providers.hpp"
#include "storypipe/schema.hpp"
#include "storypipe/store.hpp"
#include "storypipe/util.hpp"

using namespace storypipe;
namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

// Fresh directory under the system temp root, removed when the test ends.
struct ScratchDir {
  fs::path path;
  explicit ScratchDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
  }
  ~ScratchDir() { fs::remove_all(path); }
  fs::path operator/(const std::string& leaf) const { return path / leaf; }
};

UserPrompt test_prompt() { return {"a ferry pilot guides a lost whale home", 3, 5.0}; }

ojson read_json(const fs::path& file) {
  ojson doc = ojson::parse(util::read_file(file), nullptr, false);
  REQUIRE(!doc.is_discarded());
  return doc;
}

}  // namespace

TEST_CASE("compliance rates round half-up over unit outcomes") {
  CHECK(orchestrator::compliance_rate({true, true, false, true}) == 75.0);
  CHECK(orchestrator::compliance_rate({true, true, true}) == 100.0);
  CHECK(orchestrator::compliance_rate({false}) == 0.0);
  // 113 of 200 is 56.5 exactly; the .05 boundary rounds up.
  std::vector<bool> units(200, false);
  for (int i = 0; i < 113; ++i) units[static_cast<size_t>(i)] = true;
  CHECK(orchestrator::compliance_rate(units) == 56.5);
  CHECK_THROWS_AS((void)orchestrator::compliance_rate({}), EmptyInput);
}

TEST_CASE("a clean run completes every stage and files its records") {
  ScratchDir dir("storypipe-orch-clean");
  config::RunConfig cfg = config::RunConfig::defaults();
  providers::MockScenario scenario;

  orchestrator::RunResult result =
      orchestrator::run_pipeline(cfg, test_prompt(), scenario, dir.path);
  CHECK(result.state.cursor == "done");
  for (const std::string& name : orchestrator::stage_order()) {
    CHECK(result.state.stage_status.at(name) == "complete");
  }
  REQUIRE(result.output.has_value());
  CHECK(result.output->pairs.size() == 3);

  for (const char* file : {"run.json", "config.json", "scenario.json", "calls.log",
                           "report.json", "timeline.json"}) {
    CHECK(fs::exists(dir / file));
  }
  CHECK(!fs::exists(dir / "run.lock"));

  // Every manifest entry names a file whose bytes hash to its digest.
  store::DiskStore store(dir.path);
  for (const auto& [rel_path, digest] : result.state.manifest) {
    CHECK(digest == "sha256:" + util::sha256_hex(store.get(rel_path)));
  }

  // The persisted state equals the returned one.
  orchestrator::RunState reread =
      orchestrator::RunState::parse(util::read_file(dir / "run.json"));
  CHECK(reread.run_id == result.state.run_id);
  CHECK(reread.cursor == "done");
  CHECK(reread.manifest == result.state.manifest);
  CHECK(reread.warnings == result.state.warnings);

  ojson report = read_json(dir / "report.json");
  CHECK(report["run_id"] == result.state.run_id);
  CHECK(report["compliance"]["shot_design"]["rate"] == 100.0);
  CHECK(report["compliance"]["audio_fit"]["rate"] == 100.0);
  CHECK(report["stage_seconds"].size() == orchestrator::stage_order().size());
}

TEST_CASE("identical inputs replay to identical runs") {
  ScratchDir a("storypipe-orch-replay-a");
  ScratchDir b("storypipe-orch-replay-b");
  config::RunConfig cfg = config::RunConfig::defaults();
  cfg.seed = 42;
  providers::MockScenario scenario;
  scenario.defects.oversized_subtitle = 0.3;

  orchestrator::RunResult first = orchestrator::run_pipeline(cfg, test_prompt(), scenario, a.path);
  orchestrator::RunResult second =
      orchestrator::run_pipeline(cfg, test_prompt(), scenario, b.path);
  CHECK(first.state.run_id == second.state.run_id);
  CHECK(first.state.manifest == second.state.manifest);
  CHECK(first.state.warnings == second.state.warnings);

  ScratchDir c("storypipe-orch-replay-c");
  cfg.seed = 43;
  orchestrator::RunResult reseeded =
      orchestrator::run_pipeline(cfg, test_prompt(), scenario, c.path);
  CHECK(reseeded.state.run_id != first.state.run_id);
  CHECK(reseeded.state.manifest != first.state.manifest);
}

TEST_CASE("a run interrupted after any stage resumes to the uninterrupted result") {
  ScratchDir whole("storypipe-orch-whole");
  config::RunConfig cfg = config::RunConfig::defaults();
  providers::MockScenario scenario;
  scenario.defects.shot_element_omission = 0.5;
  orchestrator::RunResult uninterrupted =
      orchestrator::run_pipeline(cfg, test_prompt(), scenario, whole.path);

  for (const std::string& stage : orchestrator::stage_order()) {
    ScratchDir dir("storypipe-orch-halt-" + stage);
    orchestrator::RunOptions halt;
    halt.halt_after = stage;
    orchestrator::RunResult partial =
        orchestrator::run_pipeline(cfg, test_prompt(), scenario, dir.path, halt);
    if (stage == "audio") {
      // Halting after the final stage is already completion.
      CHECK(partial.state.cursor == "done");
    } else {
      CHECK(partial.state.cursor != "done");
      CHECK(partial.state.stage_status.at(partial.state.cursor) == "pending");
    }

    orchestrator::RunResult resumed = orchestrator::resume(dir.path);
    CHECK(resumed.state.cursor == "done");
    CHECK(resumed.state.run_id == uninterrupted.state.run_id);
    CHECK(resumed.state.manifest == uninterrupted.state.manifest);
    CHECK(resumed.state.warnings == uninterrupted.state.warnings);
    REQUIRE(resumed.output.has_value());
    CHECK(serialize_story_output(*resumed.output) ==
          serialize_story_output(*uninterrupted.output));
  }
}

TEST_CASE("a completed run resumes as a verified no-op") {
  ScratchDir dir("storypipe-orch-noop");
  config::RunConfig cfg = config::RunConfig::defaults();
  providers::MockScenario scenario;
  orchestrator::RunResult first =
      orchestrator::run_pipeline(cfg, test_prompt(), scenario, dir.path);

  orchestrator::RunResult again = orchestrator::resume(dir.path);
  CHECK(again.state.manifest == first.state.manifest);
  REQUIRE(again.output.has_value());

  // A missing report is rebuilt on the way out.
  fs::remove(dir / "report.json");
  (void)orchestrator::resume(dir.path);
  CHECK(fs::exists(dir / "report.json"));
}

TEST_CASE("starting over an existing run directory is refused") {
  ScratchDir dir("storypipe-orch-rerun");
  config::RunConfig cfg = config::RunConfig::defaults();
  providers::MockScenario scenario;
  (void)orchestrator::run_pipeline(cfg, test_prompt(), scenario, dir.path);
  CHECK_THROWS_AS((void)orchestrator::run_pipeline(cfg, test_prompt(), scenario, dir.path),
                  ConfigError);
  CHECK_THROWS_AS((void)orchestrator::resume(dir / "missing"), ConfigError);
}

TEST_CASE("resume verifies artifacts against the manifest") {
  ScratchDir dir("storypipe-orch-corrupt");
  config::RunConfig cfg = config::RunConfig::defaults();
  providers::MockScenario scenario;
  orchestrator::RunOptions halt;
  halt.halt_after = "shot_design";
  (void)orchestrator::run_pipeline(cfg, test_prompt(), scenario, dir.path, halt);

  util::write_file_atomic(dir / "script.final.json", "tampered bytes\n");
  CHECK_THROWS_AS((void)orchestrator::resume(dir.path), ManifestMismatch);

  fs::remove(dir / "script.final.json");
  CHECK_THROWS_AS((void)orchestrator::resume(dir.path), ManifestMismatch);
}

TEST_CASE("resume refuses a changed configuration unless explicitly allowed") {
  ScratchDir dir("storypipe-orch-digest");
  config::RunConfig cfg = config::RunConfig::defaults();
  providers::MockScenario scenario;
  orchestrator::RunOptions halt;
  halt.halt_after = "script";
  (void)orchestrator::run_pipeline(cfg, test_prompt(), scenario, dir.path, halt);

  config::RunConfig changed = cfg;
  changed.budgets.shot = 2;
  util::write_file_atomic(dir / "config.json", changed.to_json());
  CHECK_THROWS_AS((void)orchestrator::resume(dir.path), ConfigDigestMismatch);

  orchestrator::RunOptions allow;
  allow.allow_config_change = true;
  orchestrator::RunResult result = orchestrator::resume(dir.path, allow);
  CHECK(result.state.cursor == "done");
  REQUIRE(result.output.has_value());
}

TEST_CASE("budget exhaustion is visible in the report") {
  ScratchDir dir("storypipe-orch-budget");
  config::RunConfig cfg = config::RunConfig::defaults();
  cfg.budgets.script = 2;
  providers::MockScenario scenario;
  scenario.defects.script_defect_rule = "STR-1";
  scenario.cooperative = false;

  orchestrator::RunResult result =
      orchestrator::run_pipeline(cfg, test_prompt(), scenario, dir.path);
  CHECK(result.state.cursor == "done");

  ojson report = read_json(dir / "report.json");
  CHECK(report["loops"]["script"]["iterations"] == 2);
  CHECK(report["loops"]["script"]["max_iterations"] == 2);
  CHECK(report["loops"]["script"]["budget_exhausted"] == 1);
  CHECK(report["loops"]["script"]["residual_findings"] >= 1);
}

TEST_CASE("family units recompute pass and fail counts from stored artifacts") {
  config::RunConfig cfg = config::RunConfig::defaults();
  providers::MockScenario scenario;
  SUBCASE("a clean run passes every unit") {
    orchestrator::TrialMetrics metrics =
        orchestrator::run_trial(cfg, test_prompt(), scenario);
    REQUIRE(metrics.families.count("shot_design") == 1);
    CHECK(metrics.families["shot_design"].total == 3);
    CHECK(metrics.families["shot_design"].passed == 3);
    CHECK(metrics.families["voice_plan"].total == 1);
    CHECK(metrics.families["voice_plan"].passed == 1);
    CHECK(metrics.families["audio_fit"].total == 3);
    CHECK(metrics.families["audio_fit"].passed == 3);
    CHECK(metrics.families["naturalness"].total == 3);
    CHECK(metrics.families["naturalness"].passed == 3);
  }
  SUBCASE("unreviewed defects surface as failed units") {
    scenario.defects.shot_element_omission = 1.0;
    scenario.defects.voice_plan_defect = 1.0;
    cfg.toggles.shot_reviewer = false;
    cfg.toggles.voice_reviewer = false;
    orchestrator::TrialMetrics metrics =
        orchestrator::run_trial(cfg, test_prompt(), scenario);
    CHECK(metrics.families["shot_design"].passed == 0);
    CHECK(metrics.families["shot_design"].total == 3);
    CHECK(metrics.families["voice_plan"].passed == 0);
  }
}

TEST_CASE("ablation pairs trials and scores the difference") {
  config::RunConfig cfg = config::RunConfig::defaults();
  cfg.seed = 11;
  providers::MockScenario defects;
  defects.defects.oversized_subtitle = 0.4;

  orchestrator::AblationReport report =
      orchestrator::run_ablation(cfg, {"subtitle_refiner"}, 40, defects);
  CHECK(report.trials == 40);
  REQUIRE(report.disabled == std::vector<std::string>{"subtitle_refiner"});

  const orchestrator::FamilyComparison* audio_fit = nullptr;
  for (const orchestrator::FamilyComparison& family : report.families) {
    if (family.family == "audio_fit") audio_fit = &family;
  }
  REQUIRE(audio_fit != nullptr);
  CHECK(audio_fit->baseline_rate == 100.0);
  CHECK(audio_fit->ablated_rate < audio_fit->baseline_rate);
  CHECK(audio_fit->p_value < 0.01);

  ojson doc = ojson::parse(report.to_json());
  CHECK(doc["trials"] == 40);
  CHECK(doc["families"].size() == report.families.size());
  CHECK(report.to_table().find("audio_fit") != std::string::npos);

  SUBCASE("non-mock configurations are rejected") {
    config::RunConfig remote = cfg;
    remote.backend = "http";
    CHECK_THROWS_AS((void)orchestrator::run_ablation(remote, {"subtitle_refiner"}, 4, defects),
                    ConfigError);
    CHECK_THROWS_AS((void)orchestrator::run_ablation(cfg, {"subtitle_refiner"}, 0, defects),
                    ConfigError);
    CHECK_THROWS_AS((void)orchestrator::run_ablation(cfg, {"no-such-agent"}, 4, defects),
                    ConfigError);
  }
}

TEST_CASE("run state serializes round-trip and rejects unknown keys") {
  orchestrator::RunState state;
  state.run_id = "run-00ff";
  state.seed = 7;
  state.config_digest = "sha256:abc";
  state.prompt_text = "a story";
  state.target_shot_count = 4;
  state.target_clip_seconds = 6.5;
  state.cursor = "characters";
  state.stage_status["script"] = "complete";
  state.stage_status["shot_design"] = "complete";
  state.manifest["script.final.json"] = "sha256:def";
  state.warnings = {"script: something mild"};

  orchestrator::RunState reread = orchestrator::RunState::parse(state.serialize());
  CHECK(reread.run_id == state.run_id);
  CHECK(reread.seed == state.seed);
  CHECK(reread.config_digest == state.config_digest);
  CHECK(reread.prompt_text == state.prompt_text);
  CHECK(reread.target_shot_count == state.target_shot_count);
  CHECK(reread.target_clip_seconds == state.target_clip_seconds);
  CHECK(reread.cursor == state.cursor);
  CHECK(reread.stage_status.at("script") == "complete");
  // Unlisted stages come back pending.
  CHECK(reread.stage_status.at("audio") == "pending");
  CHECK(reread.manifest == state.manifest);
  CHECK(reread.warnings == state.warnings);

  ojson doc = ojson::parse(state.serialize());
  doc["surprise"] = 1;
  CHECK_THROWS_AS((void)orchestrator::RunState::parse(doc.dump()), SchemaError);
  CHECK_THROWS_AS((void)orchestrator::RunState::parse("not json"), SchemaError);
}
