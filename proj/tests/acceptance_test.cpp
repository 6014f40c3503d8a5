// End-to-end acceptance checks for the pipeline. Each criterion prints one
// PASS/FAIL line; the process exits nonzero when any criterion fails.

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "storypipe/config.hpp"
#include "storypipe/errors.hpp"
#include "storypipe/guidelines.hpp"
#include "storypipe/orchestrator.hpp"
#include "storypipe/providers.hpp"
#include "storypipe/schema.hpp"
#include "storypipe/stages.hpp"
#include "storypipe/store.hpp"
#include "storypipe/util.hpp"

using namespace storypipe;
namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

struct ScratchDir {
  fs::path path;
  explicit ScratchDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
  }
  ~ScratchDir() { fs::remove_all(path); }
  fs::path operator/(const std::string& leaf) const { return path / leaf; }
};

// Stage-level fixture over an in-memory store and mock providers.
struct StageHarness {
  config::RunConfig cfg = config::RunConfig::defaults();
  providers::MockScenario scenario;
  UserPrompt prompt{"an acceptance probe story", 3, 5.0};
  store::MemStore store;
  providers::CallLog log;
  std::map<std::string, std::string> manifest;
  std::vector<std::string> warnings;
  std::unique_ptr<providers::ProviderHub> hub;

  void start() {
    providers::MockWorldConfig world;
    world.run_seed = cfg.seed;
    world.prompt_text = prompt.text;
    world.shot_count = prompt.target_shot_count;
    world.clip_seconds = prompt.target_clip_seconds;
    world.speech_rate_wpm = cfg.speech_rate_wpm;
    world.slack_seconds = cfg.slack_seconds;
    world.music_catalog = cfg.music_catalog;
    world.emotion_vocab = cfg.emotion_vocab;
    world.caption_template = cfg.caption_template;
    hub = std::make_unique<providers::ProviderHub>(cfg.providers, scenario, world, &log);
  }

  stages::StageContext ctx() {
    return {&cfg, hub.get(), &store, &manifest, &warnings};
  }
};

bool report(int number, const std::string& name, bool ok, const std::string& detail) {
  std::printf("%s criterion %d: %s (%s)\n", ok ? "PASS" : "FAIL", number, name.c_str(),
              detail.c_str());
  std::fflush(stdout);
  return ok;
}

std::string format_secs(double seconds) {
  char buffer[32];
  std::snprintf(buffer, sizeof(buffer), "%.2f s", seconds);
  return buffer;
}

// ---------------------------------------------------------------------------
// Criterion 1: budget conformance on a clean mock run. Recorded iteration
// counts stay within the configured ceilings, the image-to-video step is a
// single full fan-out, and subtitles never need more than five refinements.

bool criterion_budgets() {
  auto start = std::chrono::steady_clock::now();
  ScratchDir dir("storypipe-accept-budgets");
  config::RunConfig cfg = config::RunConfig::defaults();
  providers::MockScenario scenario;
  UserPrompt prompt{"a shepherd maps the night sky", 3, 5.0};
  orchestrator::RunResult result = orchestrator::run_pipeline(cfg, prompt, scenario, dir.path);

  std::vector<std::string> problems;
  if (result.state.cursor != "done") problems.push_back("run did not finish");

  // Iteration ceilings per loop family, measured from the stored traces.
  const std::map<std::string, int> ceilings = {
      {"script", cfg.budgets.script},   {"shot_design", cfg.budgets.shot},
      {"voice", cfg.budgets.voice},     {"portraits", cfg.budgets.t2i},
      {"keyframes", cfg.budgets.t2i},   {"turnarounds", cfg.budgets.i2v},
      {"clips", cfg.budgets.i2v}};
  store::DiskStore store(dir.path);
  int i2v_traces = 0;
  for (const auto& [rel_path, digest] : result.state.manifest) {
    if (rel_path.rfind("traces/", 0) != 0) continue;
    std::string family = rel_path.substr(7, rel_path.find('/', 7) - 7);
    ojson trace = ojson::parse(store.get(rel_path));
    if (family == "audio_fit") {
      int refinements = trace.at("refinements").get<int>();
      if (refinements > cfg.budgets.subtitle) {
        problems.push_back(rel_path + ": " + std::to_string(refinements) + " refinements");
      }
      if (!trace.at("fits").get<bool>()) problems.push_back(rel_path + ": does not fit");
      continue;
    }
    int iterations = static_cast<int>(trace.at("iterations").size());
    auto ceiling = ceilings.find(family);
    if (ceiling == ceilings.end()) {
      problems.push_back(rel_path + ": unexpected trace family");
      continue;
    }
    if (iterations > ceiling->second) {
      problems.push_back(rel_path + ": " + std::to_string(iterations) + " iterations > " +
                         std::to_string(ceiling->second));
    }
    if (family == "turnarounds" || family == "clips") {
      i2v_traces += 1;
      // Exactly one fan-out that every pool member answered.
      if (iterations != 1) problems.push_back(rel_path + ": more than one fan-out");
      size_t candidates = trace.at("iterations").at(0).at("candidates").size();
      if (candidates != 3) {
        problems.push_back(rel_path + ": " + std::to_string(candidates) + " of 3 pool answers");
      }
    }
  }
  if (i2v_traces == 0) problems.push_back("no image-to-video traces recorded");

  double elapsed = seconds_since(start);
  if (elapsed >= 10.0) problems.push_back("took " + format_secs(elapsed));
  std::string detail = problems.empty()
                           ? "script<=4 shot<=4 voice<=4 t2i<=2 i2v=1 subtitle<=5; " +
                                 format_secs(elapsed)
                           : util::join(problems, "; ");
  return report(1, "budget conformance", problems.empty(), detail);
}

// ---------------------------------------------------------------------------
// Criterion 2: the structure checker agrees with an independently written
// consecutive-pair enumeration across an exhaustive script family.

std::vector<std::pair<int, std::string>> brute_force_structure(const Script& script) {
  std::vector<std::pair<int, std::string>> out;
  auto declared_adjacent = [&script](const std::string& x, const std::string& y) {
    for (const LocationPair& pair : script.location_adjacency) {
      if ((pair.a == x && pair.b == y) || (pair.a == y && pair.b == x)) return true;
    }
    return false;
  };
  for (size_t i = 1; i < script.shots.size(); ++i) {
    const Shot& prev = script.shots[i - 1];
    const Shot& cur = script.shots[i];
    if (prev.location_id == cur.location_id) {
      out.push_back({cur.index, "STR-1"});
    } else if (declared_adjacent(prev.location_id, cur.location_id)) {
      out.push_back({cur.index, "STR-2"});
    }
    bool shared = false;
    for (const std::string& a : prev.character_ids) {
      for (const std::string& b : cur.character_ids) {
        if (a == b) shared = true;
      }
    }
    if (shared && !cur.continuity_required) out.push_back({cur.index, "STR-3"});
  }
  std::sort(out.begin(), out.end());
  return out;
}

bool structure_matches_oracle(const Script& script) {
  std::vector<std::pair<int, std::string>> got;
  for (const Finding& finding : guidelines::check_structure(script)) {
    got.push_back({finding.shot_index.value_or(0), finding.rule_id});
  }
  std::sort(got.begin(), got.end());
  return got == brute_force_structure(script);
}

bool criterion_structure_oracle() {
  auto start = std::chrono::steady_clock::now();
  const std::vector<std::string> locations = {"loc-a", "loc-b", "loc-c"};
  const std::vector<std::vector<std::string>> casts = {
      {}, {"char-1"}, {"char-2"}, {"char-3"},
      {"char-1", "char-2"}, {"char-1", "char-3"}, {"char-2", "char-3"}};
  const int variants = static_cast<int>(locations.size() * casts.size() * 2);
  const std::vector<std::vector<LocationPair>> adjacency_options = {
      {}, {{"loc-a", "loc-b"}}};

  auto shot_variant = [&](int code, int index) {
    Shot shot;
    shot.index = index;
    shot.location_id = locations[static_cast<size_t>(code) % locations.size()];
    code /= static_cast<int>(locations.size());
    shot.character_ids = casts[static_cast<size_t>(code) % casts.size()];
    code /= static_cast<int>(casts.size());
    shot.continuity_required = code % 2 == 1;
    shot.content = "beat";
    shot.subtitle = "line";
    return shot;
  };
  auto base_script = [] {
    Script script;
    script.title = "Oracle Family";
    script.characters = {{"char-1", "A", "a", {}}, {"char-2", "B", "b", {}},
                         {"char-3", "C", "c", {}}};
    return script;
  };

  long long instances = 0;
  long long mismatches = 0;
  // Exhaustive sweep over every 1..3-shot script drawn from the variant
  // grid, under both adjacency declarations.
  for (int n = 1; n <= 3; ++n) {
    long long combos = 1;
    for (int j = 0; j < n; ++j) combos *= variants;
    for (const std::vector<LocationPair>& adjacency : adjacency_options) {
      for (long long code = 0; code < combos; ++code) {
        Script script = base_script();
        script.location_adjacency = adjacency;
        long long rest = code;
        for (int j = 0; j < n; ++j) {
          script.shots.push_back(shot_variant(static_cast<int>(rest % variants), j + 1));
          rest /= variants;
        }
        instances += 1;
        if (!structure_matches_oracle(script)) mismatches += 1;
      }
    }
  }
  // Randomized extension up to the eight-shot cap of the family.
  util::Rng rng(20260816);
  for (int t = 0; t < 2000; ++t) {
    Script script = base_script();
    if (rng.next_int(0, 1) == 1) script.location_adjacency = {{"loc-a", "loc-b"}};
    if (rng.next_int(0, 1) == 1) script.location_adjacency.push_back({"loc-b", "loc-c"});
    int n = rng.next_int(4, 8);
    for (int j = 1; j <= n; ++j) {
      script.shots.push_back(shot_variant(rng.next_int(0, variants - 1), j));
    }
    instances += 1;
    if (!structure_matches_oracle(script)) mismatches += 1;
  }

  double elapsed = seconds_since(start);
  bool ok = mismatches == 0 && instances >= 10000 && elapsed < 60.0;
  std::string detail = std::to_string(instances) + " scripts, " + std::to_string(mismatches) +
                       " mismatches; " + format_secs(elapsed);
  return report(2, "structure checker matches brute force", ok, detail);
}

// ---------------------------------------------------------------------------
// Criterion 3: with defects injected at 15% / 8% / 40%, runs without the
// matching reviewer or refiner land near the implied compliance levels, and
// runs with them recover to exactly 100.0.

std::map<std::string, orchestrator::UnitCounts> aggregate_trials(
    const config::RunConfig& base, const providers::MockScenario& defects, int trials) {
  UserPrompt prompt{"a compliance probe story", 3, 5.0};
  std::map<std::string, orchestrator::UnitCounts> units;
  for (int t = 0; t < trials; ++t) {
    config::RunConfig cfg = base;
    cfg.seed = util::derive_seed(base.seed, {"trial", std::to_string(t)});
    orchestrator::TrialMetrics metrics = orchestrator::run_trial(cfg, prompt, defects);
    for (const auto& [family, counts] : metrics.families) {
      units[family].passed += counts.passed;
      units[family].total += counts.total;
    }
  }
  return units;
}

double rate_of(const std::map<std::string, orchestrator::UnitCounts>& units,
               const std::string& family) {
  const orchestrator::UnitCounts& counts = units.at(family);
  std::vector<bool> results;
  results.insert(results.end(), counts.passed, true);
  results.insert(results.end(), counts.total - counts.passed, false);
  return orchestrator::compliance_rate(results);
}

bool criterion_compliance_restoration() {
  auto start = std::chrono::steady_clock::now();
  const int trials = 400;
  providers::MockScenario defects;
  defects.defects.shot_element_omission = 0.15;
  defects.defects.voice_plan_defect = 0.08;
  defects.defects.oversized_subtitle = 0.40;

  config::RunConfig without = config::RunConfig::defaults();
  without.seed = 101;
  without.toggles.shot_reviewer = false;
  without.toggles.voice_reviewer = false;
  without.toggles.subtitle_refiner = false;
  std::map<std::string, orchestrator::UnitCounts> bare =
      aggregate_trials(without, defects, trials);

  config::RunConfig with = config::RunConfig::defaults();
  with.seed = 101;
  std::map<std::string, orchestrator::UnitCounts> guarded =
      aggregate_trials(with, defects, trials);

  struct Expectation {
    std::string family;
    double target;
  };
  const std::vector<Expectation> expectations = {
      {"shot_design", 85.0}, {"voice_plan", 92.0}, {"audio_fit", 60.0}};
  std::vector<std::string> problems;
  std::string measured;
  for (const Expectation& expectation : expectations) {
    double unguarded_rate = rate_of(bare, expectation.family);
    double guarded_rate = rate_of(guarded, expectation.family);
    measured += expectation.family + " " + std::to_string(unguarded_rate).substr(0, 4) + "->" +
                std::to_string(guarded_rate).substr(0, 5) + " ";
    if (std::abs(unguarded_rate - expectation.target) > 5.0) {
      problems.push_back(expectation.family + " unguarded " + std::to_string(unguarded_rate) +
                         " not within 5 of " + std::to_string(expectation.target));
    }
    if (guarded_rate != 100.0) {
      problems.push_back(expectation.family + " guarded " + std::to_string(guarded_rate) +
                         " != 100.0");
    }
  }
  double elapsed = seconds_since(start);
  std::string detail = problems.empty() ? measured + "over " + std::to_string(trials) +
                                              " trials; " + format_secs(elapsed)
                                        : util::join(problems, "; ");
  return report(3, "reviewers restore compliance", problems.empty(), detail);
}

// ---------------------------------------------------------------------------
// Criterion 4: turning the image refinement loop off under naturalness
// defects strictly lowers the naturalness pass rate, with sign-test support.

bool criterion_loop_ablation_direction() {
  auto start = std::chrono::steady_clock::now();
  config::RunConfig cfg = config::RunConfig::defaults();
  cfg.seed = 2026;
  providers::MockScenario defects;
  defects.defects.naturalness_defect = 0.25;

  orchestrator::AblationReport ablation =
      orchestrator::run_ablation(cfg, {"t2i_loop"}, 400, defects);
  const orchestrator::FamilyComparison* naturalness = nullptr;
  for (const orchestrator::FamilyComparison& family : ablation.families) {
    if (family.family == "naturalness") naturalness = &family;
  }

  std::vector<std::string> problems;
  if (naturalness == nullptr) {
    problems.push_back("no naturalness family in the ablation report");
  } else {
    if (!(naturalness->ablated_rate < naturalness->baseline_rate)) {
      problems.push_back("ablated rate " + std::to_string(naturalness->ablated_rate) +
                         " is not below baseline " + std::to_string(naturalness->baseline_rate));
    }
    if (!(naturalness->p_value < 0.01)) {
      problems.push_back("sign test p " + std::to_string(naturalness->p_value) + " >= 0.01");
    }
  }
  double elapsed = seconds_since(start);
  std::string detail;
  if (problems.empty()) {
    char buffer[128];
    std::snprintf(buffer, sizeof(buffer), "naturalness %.1f -> %.1f, p=%.3g, 400 trials; %s",
                  naturalness->baseline_rate, naturalness->ablated_rate, naturalness->p_value,
                  format_secs(elapsed).c_str());
    detail = buffer;
  } else {
    detail = util::join(problems, "; ");
  }
  return report(4, "refinement loop ablation lowers naturalness", problems.empty(), detail);
}

// ---------------------------------------------------------------------------
// Criterion 5: narration always fits within five refinements or the failure
// is reported, never silently violated; the truncation refiner fits whenever
// an empty subtitle would.

bool criterion_fit_guarantee() {
  auto start = std::chrono::steady_clock::now();
  util::Rng rng(555);
  int violations = 0;
  int over_budget = 0;
  int truncation_misses = 0;
  int failures_reported = 0;

  for (int t = 0; t < 1000; ++t) {
    int word_count = rng.next_int(0, 40);
    double clip_seconds = 0.5 + rng.next_unit() * 11.5;
    std::string subtitle =
        util::join(std::vector<std::string>(static_cast<size_t>(word_count), "word"), " ");
    std::string item = std::to_string(t + 1);

    // Truncation arm: must always converge inside the budget.
    StageHarness trunc;
    trunc.cfg.seed = 9000 + static_cast<uint64_t>(t);
    trunc.cfg.on_budget_exhausted = "fail";
    trunc.start();
    auto trunc_ctx = trunc.ctx();
    bool empty_fits = false;
    bool truncation_fits = false;
    try {
      stages::FitOutcome empty = stages::fit_subtitle("", clip_seconds, item, trunc_ctx);
      empty_fits = empty.fits;
      stages::FitOutcome fitted = stages::fit_subtitle(subtitle, clip_seconds, item, trunc_ctx);
      truncation_fits = fitted.fits;
      if (!fitted.fits) violations += 1;
      if (fitted.refinements > trunc.cfg.budgets.subtitle) over_budget += 1;
      if (fitted.fits && fitted.audio.duration_seconds &&
          *fitted.audio.duration_seconds > clip_seconds + trunc.cfg.slack_seconds + 1e-9) {
        violations += 1;
      }
    } catch (const FitFailure&) {
      truncation_fits = false;
      empty_fits = true;
      truncation_misses += 1;  // the truncation refiner must never fail
      continue;
    }
    if (empty_fits && !truncation_fits) truncation_misses += 1;

    // Stubborn arm: an overrun either fits untouched or raises FitFailure.
    StageHarness stubborn;
    stubborn.cfg.seed = 9000 + static_cast<uint64_t>(t);
    stubborn.cfg.on_budget_exhausted = "fail";
    stubborn.scenario.subtitle_refiner_policy = "stubborn";
    stubborn.start();
    auto stubborn_ctx = stubborn.ctx();
    try {
      stages::FitOutcome outcome = stages::fit_subtitle(subtitle, clip_seconds, item,
                                                        stubborn_ctx);
      if (!outcome.fits) violations += 1;
    } catch (const FitFailure&) {
      failures_reported += 1;
    }
  }

  double elapsed = seconds_since(start);
  bool ok = violations == 0 && over_budget == 0 && truncation_misses == 0 && elapsed < 30.0;
  std::string detail = "1000 pairs, " + std::to_string(violations) + " violations, " +
                       std::to_string(failures_reported) + " reported failures; " +
                       format_secs(elapsed);
  if (truncation_misses > 0) {
    detail += "; " + std::to_string(truncation_misses) + " truncation misses";
  }
  return report(5, "fit guarantee", ok, detail);
}

// ---------------------------------------------------------------------------
// Criterion 6: identical inputs replay byte-identically, and interrupting
// after every stage boundary resumes to the uninterrupted manifest.

bool criterion_replay_and_resume() {
  auto start = std::chrono::steady_clock::now();
  config::RunConfig cfg = config::RunConfig::defaults();
  cfg.seed = 77;
  providers::MockScenario scenario;
  scenario.defects.oversized_subtitle = 0.3;
  UserPrompt prompt{"a beacon keeper signals the fleet", 3, 5.0};

  std::vector<std::string> problems;
  ScratchDir first_dir("storypipe-accept-replay-a");
  ScratchDir second_dir("storypipe-accept-replay-b");
  orchestrator::RunResult first =
      orchestrator::run_pipeline(cfg, prompt, scenario, first_dir.path);
  orchestrator::RunResult second =
      orchestrator::run_pipeline(cfg, prompt, scenario, second_dir.path);
  if (first.state.manifest != second.state.manifest) {
    problems.push_back("replay produced a different manifest");
  }
  if (first.state.run_id != second.state.run_id) {
    problems.push_back("replay produced a different run id");
  }

  for (const std::string& stage : orchestrator::stage_order()) {
    ScratchDir dir("storypipe-accept-halt-" + stage);
    orchestrator::RunOptions halt;
    halt.halt_after = stage;
    (void)orchestrator::run_pipeline(cfg, prompt, scenario, dir.path, halt);
    orchestrator::RunResult resumed = orchestrator::resume(dir.path);
    if (resumed.state.cursor != "done") {
      problems.push_back("resume after " + stage + " did not finish");
    }
    if (resumed.state.manifest != first.state.manifest) {
      problems.push_back("resume after " + stage + " diverged from the uninterrupted manifest");
    }
  }

  double elapsed = seconds_since(start);
  if (elapsed >= 60.0) problems.push_back("took " + format_secs(elapsed));
  std::string detail = problems.empty()
                           ? "replay equal, 6 interruption points equal; " + format_secs(elapsed)
                           : util::join(problems, "; ");
  return report(6, "replay and resume", problems.empty(), detail);
}

// ---------------------------------------------------------------------------
// Criterion 7: the prompt templates partition the design elements; pose and
// camera position drive stills, action and camera movement drive animation.

bool criterion_element_partition() {
  Shot shot;
  shot.index = 1;
  shot.location_id = "loc-a";
  shot.content = "beat";
  shot.subtitle = "line";
  ShotDesign design;
  design.shot_index = 1;
  design.background = "BG-TOKEN";
  design.character_pose = "POSE-TOKEN";
  design.character_action = "ACTION-TOKEN";
  design.prop_description = "PROP-TOKEN";
  design.camera_position = "CAMPOS-TOKEN";
  design.camera_movement = "CAMMOVE-TOKEN";
  design.lighting_design = "LIGHT-TOKEN";
  std::vector<CharacterDef> cast = {{"char-1", "A", "a", {}}};
  AssetRef keyframe{"sha256:00", "image", "keyframes/shot-1.ppm", {}};

  PromptSpec still = stages::build_keyframe_prompt(shot, design, cast);
  PromptSpec motion = stages::build_animation_prompt(shot, design, cast, keyframe);

  std::vector<std::string> problems;
  auto require = [&problems](const std::string& body, const std::string& token, bool expected,
                             const std::string& label) {
    bool present = body.find(token) != std::string::npos;
    if (present != expected) {
      problems.push_back(label + (expected ? " lacks " : " leaks ") + token);
    }
  };
  require(still.body, "POSE-TOKEN", true, "still prompt");
  require(still.body, "CAMPOS-TOKEN", true, "still prompt");
  require(still.body, "ACTION-TOKEN", false, "still prompt");
  require(still.body, "CAMMOVE-TOKEN", false, "still prompt");
  require(still.body, "BG-TOKEN", true, "still prompt");
  require(still.body, "PROP-TOKEN", true, "still prompt");
  require(still.body, "LIGHT-TOKEN", true, "still prompt");
  require(motion.body, "ACTION-TOKEN", true, "animation prompt");
  require(motion.body, "CAMMOVE-TOKEN", true, "animation prompt");
  require(motion.body, "POSE-TOKEN", false, "animation prompt");
  require(motion.body, "CAMPOS-TOKEN", false, "animation prompt");
  require(motion.body, "BG-TOKEN", true, "animation prompt");
  require(motion.body, "PROP-TOKEN", true, "animation prompt");
  require(motion.body, "LIGHT-TOKEN", true, "animation prompt");
  if (motion.attachments.size() != 1 || motion.attachments.front() != keyframe) {
    problems.push_back("animation prompt does not attach its keyframe");
  }
  if (!still.attachments.empty()) problems.push_back("still prompt carries attachments");

  std::string detail = problems.empty() ? "pose/camera-position stills only, "
                                          "action/camera-movement animation only"
                                        : util::join(problems, "; ");
  return report(7, "prompt element partition", problems.empty(), detail);
}

// ---------------------------------------------------------------------------
// Criterion 8: for one, three, and eight shots, the finished output carries
// exactly one clip/audio pair per shot and passes output validation.

bool criterion_output_contract() {
  std::vector<std::string> problems;
  for (int n : {1, 3, 8}) {
    ScratchDir dir("storypipe-accept-output-" + std::to_string(n));
    config::RunConfig cfg = config::RunConfig::defaults();
    providers::MockScenario scenario;
    UserPrompt prompt{"a courier rides through the storm", n, 5.0};
    orchestrator::RunResult result = orchestrator::run_pipeline(cfg, prompt, scenario, dir.path);
    if (!result.output.has_value()) {
      problems.push_back("n=" + std::to_string(n) + ": no output");
      continue;
    }
    if (static_cast<int>(result.output->pairs.size()) != n) {
      problems.push_back("n=" + std::to_string(n) + ": " +
                         std::to_string(result.output->pairs.size()) + " pairs");
    }
    store::DiskStore store(dir.path);
    Script script = parse_script(store.get("script.final.json"));
    std::vector<std::string> violations =
        validate_story_output(*result.output, script, cfg.slack_seconds);
    if (!violations.empty()) {
      problems.push_back("n=" + std::to_string(n) + ": " + util::join(violations, "; "));
    }
  }
  std::string detail =
      problems.empty() ? "pair counts 1/3/8, zero violations" : util::join(problems, "; ");
  return report(8, "output contract", problems.empty(), detail);
}

}  // namespace

int main() {
  int failed = 0;
  if (!criterion_budgets()) failed += 1;
  if (!criterion_structure_oracle()) failed += 1;
  if (!criterion_compliance_restoration()) failed += 1;
  if (!criterion_loop_ablation_direction()) failed += 1;
  if (!criterion_fit_guarantee()) failed += 1;
  if (!criterion_replay_and_resume()) failed += 1;
  if (!criterion_element_partition()) failed += 1;
  if (!criterion_output_contract()) failed += 1;
  if (failed != 0) std::printf("%d of 8 criteria failed\n", failed);
  return failed == 0 ? 0 : 1;
}
