#include "storypipe/orchestrator.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>

#include "storypipe/errors.hpp"
#include "storypipe/guidelines.hpp"
#include "storypipe/stages.hpp"
#include "storypipe/util.hpp"

namespace storypipe::orchestrator {

using ojson = nlohmann::ordered_json;

const std::vector<std::string>& stage_order() {
  static const std::vector<std::string> order = {"script", "shot_design", "characters",
                                                 "keyframes", "clips",    "audio"};
  return order;
}

namespace {

std::string hex_u64(uint64_t value) {
  char buffer[20];
  std::snprintf(buffer, sizeof(buffer), "%016llx", static_cast<unsigned long long>(value));
  return buffer;
}

std::string next_stage_after(const std::string& name) {
  const auto& order = stage_order();
  for (size_t i = 0; i + 1 < order.size(); ++i) {
    if (order[i] == name) return order[i + 1];
  }
  return "done";
}

// Removes run.lock when the owning scope ends, including on exceptions.
class LockGuard {
 public:
  explicit LockGuard(std::filesystem::path lock_path) : path_(std::move(lock_path)) {
    if (std::filesystem::exists(path_)) {
      throw ConfigError("run directory is locked (" + path_.string() +
                        " exists); remove it if no other process owns the run");
    }
    util::write_file_atomic(path_, "locked\n");
  }
  ~LockGuard() {
    std::error_code ec;
    std::filesystem::remove(path_, ec);
  }
  LockGuard(const LockGuard&) = delete;
  LockGuard& operator=(const LockGuard&) = delete;

 private:
  std::filesystem::path path_;
};

providers::MockWorldConfig world_from(const config::RunConfig& cfg, const UserPrompt& prompt) {
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
  return world;
}

// Drives the six stages over one store, loading completed stages' outputs
// instead of re-running them.
struct Engine {
  const config::RunConfig& cfg;
  const providers::MockScenario& scenario;
  store::ArtifactStore& store;
  RunState& state;
  providers::ProviderHub hub;
  std::map<std::string, double> stage_seconds;
  std::function<void()> persist;  // checkpoints run.json; may be empty

  std::optional<Script> script;
  std::vector<ShotDesign> designs;
  std::map<std::string, stages::CharacterAssets> characters;
  std::vector<AssetRef> keyframes;
  std::vector<AssetRef> clips;
  std::optional<StoryOutput> output;

  Engine(const config::RunConfig& cfg_in, const providers::MockScenario& scenario_in,
         store::ArtifactStore& store_in, RunState& state_in, providers::CallLog* log)
      : cfg(cfg_in),
        scenario(scenario_in),
        store(store_in),
        state(state_in),
        hub(cfg_in.providers, scenario_in,
            world_from(cfg_in, UserPrompt{state_in.prompt_text, state_in.target_shot_count,
                                          state_in.target_clip_seconds}),
            log) {}

  UserPrompt prompt() const {
    return {state.prompt_text, state.target_shot_count, state.target_clip_seconds};
  }

  void checkpoint() {
    if (persist) persist();
  }

  void load_completed(const std::string& name) {
    if (name == "script") {
      script = parse_script(store.get("script.final.json"));
    } else if (name == "shot_design") {
      designs = parse_shot_designs(store.get("designs/designs.json"));
    } else if (name == "characters") {
      characters = stages::parse_character_assets(store.get("characters/index.json"));
    } else if (name == "keyframes") {
      keyframes = parse_asset_list(store.get("keyframes/index.json"));
    } else if (name == "clips") {
      clips = parse_asset_list(store.get("clips/index.json"));
    } else if (name == "audio") {
      output = parse_story_output(store.get("timeline.json"));
    }
  }

  void run_stage(const std::string& name, stages::StageContext& sc) {
    if (name == "script") {
      script = stages::run_script_stage(prompt(), sc);
    } else if (name == "shot_design") {
      designs = stages::run_shot_stage(*script, sc);
    } else if (name == "characters") {
      characters = stages::run_character_stage(*script, sc);
    } else if (name == "keyframes") {
      keyframes = stages::run_keyframe_stage(*script, designs, characters, sc);
    } else if (name == "clips") {
      clips = stages::run_animation_stage(*script, designs, keyframes, sc);
    } else if (name == "audio") {
      output = stages::run_audio_stage(*script, clips, sc).output;
    }
  }

  // Returns true when the run reached "done"; false on a clean halt.
  bool run(const std::optional<std::string>& halt_after) {
    stages::StageContext sc;
    sc.cfg = &cfg;
    sc.hub = &hub;
    sc.store = &store;
    sc.manifest = &state.manifest;
    sc.warnings = &state.warnings;

    for (const std::string& name : stage_order()) {
      if (state.stage_status[name] == "complete") {
        load_completed(name);
        continue;
      }
      state.cursor = name;
      state.stage_status[name] = "running";
      checkpoint();
      auto start = std::chrono::steady_clock::now();
      try {
        run_stage(name, sc);
      } catch (const StageFailure&) {
        state.stage_status[name] = "failed";
        checkpoint();
        throw;
      } catch (const std::exception& e) {
        state.stage_status[name] = "failed";
        checkpoint();
        throw StageFailure(name, e.what());
      }
      stage_seconds[name] =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      state.stage_status[name] = "complete";
      state.cursor = next_stage_after(name);
      checkpoint();
      // A halt after the final stage is indistinguishable from completion.
      if (halt_after && *halt_after == name && state.cursor != "done") return false;
    }
    return true;
  }
};

void verify_manifest(const RunState& state, const store::ArtifactStore& store) {
  for (const auto& [rel_path, digest] : state.manifest) {
    std::string bytes;
    try {
      bytes = store.get(rel_path);
    } catch (const Error&) {
      throw ManifestMismatch("artifact '" + rel_path + "' is missing from the run directory");
    }
    if ("sha256:" + util::sha256_hex(bytes) != digest) {
      throw ManifestMismatch("artifact '" + rel_path + "' does not match its manifest digest");
    }
  }
}

}  // namespace

std::string RunState::serialize() const {
  ojson doc;
  doc["schema_version"] = 1;
  doc["run_id"] = run_id;
  doc["seed"] = seed;
  doc["config_digest"] = config_digest;
  ojson prompt_node;
  prompt_node["text"] = prompt_text;
  prompt_node["target_shot_count"] = target_shot_count;
  prompt_node["target_clip_seconds"] = target_clip_seconds;
  doc["prompt"] = std::move(prompt_node);
  doc["cursor"] = cursor;
  ojson stages_node = ojson::object();
  for (const std::string& name : stage_order()) {
    auto it = stage_status.find(name);
    stages_node[name] = it == stage_status.end() ? "pending" : it->second;
  }
  doc["stages"] = std::move(stages_node);
  ojson manifest_node = ojson::object();
  for (const auto& [rel_path, digest] : manifest) manifest_node[rel_path] = digest;
  doc["manifest"] = std::move(manifest_node);
  doc["warnings"] = warnings;
  return doc.dump(2) + "\n";
}

RunState RunState::parse(std::string_view text) {
  ojson doc = ojson::parse(text, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) throw SchemaError("run state is not valid JSON");
  RunState state;
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    const std::string& key = it.key();
    if (key == "schema_version") {
      if (!it->is_number_integer() || it->get<int>() != 1) {
        throw SchemaError("run state has unsupported schema_version");
      }
    } else if (key == "run_id") {
      state.run_id = it->get<std::string>();
    } else if (key == "seed") {
      state.seed = it->get<uint64_t>();
    } else if (key == "config_digest") {
      state.config_digest = it->get<std::string>();
    } else if (key == "prompt") {
      state.prompt_text = it->at("text").get<std::string>();
      state.target_shot_count = it->at("target_shot_count").get<int>();
      state.target_clip_seconds = it->at("target_clip_seconds").get<double>();
    } else if (key == "cursor") {
      state.cursor = it->get<std::string>();
    } else if (key == "stages") {
      for (auto s = it->begin(); s != it->end(); ++s) {
        state.stage_status[s.key()] = s->get<std::string>();
      }
    } else if (key == "manifest") {
      for (auto m = it->begin(); m != it->end(); ++m) {
        state.manifest[m.key()] = m->get<std::string>();
      }
    } else if (key == "warnings") {
      state.warnings = it->get<std::vector<std::string>>();
    } else {
      throw SchemaError("run state has unknown key '" + key + "'");
    }
  }
  for (const std::string& name : stage_order()) {
    if (!state.stage_status.count(name)) state.stage_status[name] = "pending";
  }
  return state;
}

RunResult run_pipeline(const config::RunConfig& cfg, const UserPrompt& prompt,
                       const providers::MockScenario& scenario,
                       const std::filesystem::path& run_dir, const RunOptions& options) {
  cfg.validate();
  validate_prompt(prompt);
  if (std::filesystem::exists(run_dir / "run.json")) {
    throw ConfigError("run directory '" + run_dir.string() +
                      "' already holds a run; use resume");
  }
  std::filesystem::create_directories(run_dir);
  LockGuard lock(run_dir / "run.lock");

  std::string scenario_bytes = scenario.serialize();
  util::write_file_atomic(run_dir / "config.json", cfg.to_json());
  util::write_file_atomic(run_dir / "scenario.json", scenario_bytes);

  RunState state;
  state.run_id = "run-" + hex_u64(util::derive_seed(cfg.seed, {"run", prompt.text}));
  state.seed = cfg.seed;
  state.config_digest = cfg.digest(scenario_bytes);
  state.prompt_text = prompt.text;
  state.target_shot_count = prompt.target_shot_count;
  state.target_clip_seconds = prompt.target_clip_seconds;
  state.cursor = stage_order().front();
  for (const std::string& name : stage_order()) state.stage_status[name] = "pending";

  store::DiskStore store(run_dir);
  providers::CallLog log(run_dir / "calls.log");
  Engine engine(cfg, scenario, store, state, &log);
  engine.persist = [&]() { util::write_file_atomic(run_dir / "run.json", state.serialize()); };
  engine.checkpoint();

  bool done = engine.run(options.halt_after);
  if (done) {
    state.cursor = "done";
    engine.checkpoint();
    util::write_file_atomic(run_dir / "report.json",
                            build_report(cfg, state, store, engine.stage_seconds));
  }
  return {state, engine.output};
}

RunResult resume(const std::filesystem::path& run_dir, const RunOptions& options) {
  if (!std::filesystem::exists(run_dir / "run.json")) {
    throw ConfigError("no run state at '" + run_dir.string() + "'");
  }
  RunState state = RunState::parse(util::read_file(run_dir / "run.json"));
  config::RunConfig cfg = config::RunConfig::from_json(util::read_file(run_dir / "config.json"));
  std::string scenario_bytes = util::read_file(run_dir / "scenario.json");
  providers::MockScenario scenario = providers::MockScenario::parse(scenario_bytes);

  std::string digest = cfg.digest(scenario_bytes);
  if (digest != state.config_digest) {
    if (!options.allow_config_change) {
      throw ConfigDigestMismatch(
          "run was started under a different config/scenario; pass --allow-config-change to "
          "override");
    }
    state.config_digest = digest;
  }

  store::DiskStore store(run_dir);
  verify_manifest(state, store);

  if (state.cursor == "done") {
    RunResult result{state, std::nullopt};
    if (store.exists("timeline.json")) {
      result.output = parse_story_output(store.get("timeline.json"));
    }
    // Covers a run killed between its last checkpoint and the report write.
    if (!std::filesystem::exists(run_dir / "report.json")) {
      util::write_file_atomic(run_dir / "report.json", build_report(cfg, state, store, {}));
    }
    return result;
  }

  LockGuard lock(run_dir / "run.lock");
  providers::CallLog log(run_dir / "calls.log");
  Engine engine(cfg, scenario, store, state, &log);
  engine.persist = [&]() { util::write_file_atomic(run_dir / "run.json", state.serialize()); };

  bool done = engine.run(options.halt_after);
  if (done) {
    state.cursor = "done";
    engine.checkpoint();
    util::write_file_atomic(run_dir / "report.json",
                            build_report(cfg, state, store, engine.stage_seconds));
  }
  return {state, engine.output};
}

double compliance_rate(const std::vector<bool>& results) {
  if (results.empty()) throw EmptyInput("compliance rate over zero results");
  int passed = 0;
  for (bool r : results) passed += r ? 1 : 0;
  return util::round_half_up_1dp(100.0 * passed / static_cast<double>(results.size()));
}

std::map<std::string, UnitCounts> family_units(const config::RunConfig& cfg,
                                               const std::map<std::string, std::string>& manifest,
                                               const store::ArtifactStore& store) {
  std::map<std::string, UnitCounts> out;
  auto tally = [&out](const std::string& family, bool passed) {
    UnitCounts& counts = out[family];
    counts.total += 1;
    if (passed) counts.passed += 1;
  };

  if (manifest.count("designs/designs.json")) {
    for (const ShotDesign& design : parse_shot_designs(store.get("designs/designs.json"))) {
      tally("shot_design", guidelines::check_shot_design(design).empty());
    }
  }
  if (manifest.count("audio/voice_plan.json")) {
    VoicePlan plan = parse_voice_plan(store.get("audio/voice_plan.json"));
    std::set<std::string> catalog(cfg.music_catalog.begin(), cfg.music_catalog.end());
    std::set<std::string> vocab(cfg.emotion_vocab.begin(), cfg.emotion_vocab.end());
    tally("voice_plan", guidelines::check_voice_plan(plan, catalog, vocab).empty());
  }
  for (const auto& [rel_path, digest] : manifest) {
    if (rel_path.rfind("traces/audio_fit/", 0) == 0) {
      ojson doc = ojson::parse(store.get(rel_path));
      tally("audio_fit", doc.at("fits").get<bool>());
    } else if (rel_path.rfind("traces/keyframes/", 0) == 0) {
      ojson doc = ojson::parse(store.get(rel_path));
      const ojson& iterations = doc.at("iterations");
      const ojson& last = iterations.back();
      int selected = last.at("selected_index").get<int>();
      const ojson& scores = last.at("feedback").at(selected).at("scores");
      double naturalness = scores.value("naturalness", 0.0);
      tally("naturalness", naturalness >= cfg.early_exit_threshold);
    }
  }
  return out;
}

std::string build_report(const config::RunConfig& cfg, const RunState& state,
                         const store::ArtifactStore& store,
                         const std::map<std::string, double>& stage_seconds) {
  ojson doc;
  doc["schema_version"] = 1;
  doc["run_id"] = state.run_id;

  doc["compliance"] = ojson::object();
  for (const auto& [family, counts] : family_units(cfg, state.manifest, store)) {
    std::vector<bool> units;
    units.insert(units.end(), counts.passed, true);
    units.insert(units.end(), counts.total - counts.passed, false);
    ojson node;
    node["passed"] = counts.passed;
    node["total"] = counts.total;
    node["rate"] = compliance_rate(units);
    doc["compliance"][family] = std::move(node);
  }

  struct LoopStats {
    int count = 0;
    long long iterations = 0;
    int max_iterations = 0;
    int budget_exhausted = 0;
    long long residual_findings = 0;
  };
  std::map<std::string, LoopStats> loops;
  for (const auto& [rel_path, digest] : state.manifest) {
    if (rel_path.rfind("traces/", 0) != 0) continue;
    std::string family = rel_path.substr(7, rel_path.find('/', 7) - 7);
    LoopStats& stats = loops[family];
    ojson doc_trace = ojson::parse(store.get(rel_path));
    if (family == "audio_fit") {
      int attempts = static_cast<int>(doc_trace.at("attempts").size());
      stats.count += 1;
      stats.iterations += attempts;
      stats.max_iterations = std::max(stats.max_iterations, attempts);
      if (!doc_trace.at("fits").get<bool>()) stats.budget_exhausted += 1;
      continue;
    }
    int iterations = static_cast<int>(doc_trace.at("iterations").size());
    stats.count += 1;
    stats.iterations += iterations;
    stats.max_iterations = std::max(stats.max_iterations, iterations);
    if (doc_trace.at("outcome").get<std::string>() != "consensus") {
      stats.budget_exhausted += 1;
      const ojson& last = doc_trace.at("iterations").back();
      for (const ojson& feedback : last.at("feedback")) {
        stats.residual_findings += static_cast<long long>(feedback.at("findings").size());
      }
    }
  }
  doc["loops"] = ojson::object();
  for (const auto& [family, stats] : loops) {
    ojson node;
    node["count"] = stats.count;
    node["iterations"] = stats.iterations;
    node["max_iterations"] = stats.max_iterations;
    node["budget_exhausted"] = stats.budget_exhausted;
    node["residual_findings"] = stats.residual_findings;
    doc["loops"][family] = std::move(node);
  }

  doc["stage_seconds"] = ojson::object();
  for (const auto& [stage, seconds] : stage_seconds) doc["stage_seconds"][stage] = seconds;
  doc["warnings"] = state.warnings;
  return doc.dump(2) + "\n";
}

TrialMetrics run_trial(const config::RunConfig& cfg, const UserPrompt& prompt,
                       const providers::MockScenario& scenario) {
  store::MemStore store;
  RunState state;
  state.run_id = "trial";
  state.seed = cfg.seed;
  state.prompt_text = prompt.text;
  state.target_shot_count = prompt.target_shot_count;
  state.target_clip_seconds = prompt.target_clip_seconds;
  for (const std::string& name : stage_order()) state.stage_status[name] = "pending";
  Engine engine(cfg, scenario, store, state, nullptr);
  engine.run(std::nullopt);
  TrialMetrics metrics;
  metrics.families = family_units(cfg, state.manifest, store);
  return metrics;
}

namespace {

// P(X >= k) for X ~ Binomial(n, 1/2).
double binomial_tail(int n, int k) {
  if (k <= 0) return 1.0;
  if (k > n) return 0.0;
  double log_half_n = -static_cast<double>(n) * std::log(2.0);
  double sum = 0.0;
  for (int i = k; i <= n; ++i) {
    double log_choose = std::lgamma(n + 1.0) - std::lgamma(i + 1.0) - std::lgamma(n - i + 1.0);
    sum += std::exp(log_choose + log_half_n);
  }
  return std::min(1.0, sum);
}

double fraction(const UnitCounts& counts) {
  return counts.total == 0 ? 1.0 : static_cast<double>(counts.passed) / counts.total;
}

}  // namespace

AblationReport run_ablation(const config::RunConfig& cfg, const std::set<std::string>& disabled,
                            int trials, const providers::MockScenario& defect_model) {
  if (cfg.backend != "mock") {
    throw ConfigError("ablations require the mock backend (statistics over injected defects)");
  }
  for (const auto& d : cfg.providers) {
    if (d.backend != "mock") {
      throw ConfigError("ablations require mock providers; '" + d.id + "' is " + d.backend);
    }
  }
  if (trials < 1) throw ConfigError("trials must be at least 1");
  for (const std::string& token : disabled) {
    config::RunConfig probe = cfg;
    probe.disable(token);  // validates the token
  }

  UserPrompt prompt{"a brief story probe for paired trials", 2, 5.0};

  struct Arm {
    std::map<std::string, UnitCounts> units;
    std::vector<std::map<std::string, double>> per_trial;
  };
  Arm baseline;
  Arm ablated;

  for (int t = 0; t < trials; ++t) {
    uint64_t trial_seed = util::derive_seed(cfg.seed, {"trial", std::to_string(t)});
    for (Arm* arm : {&baseline, &ablated}) {
      config::RunConfig trial_cfg = cfg;
      trial_cfg.seed = trial_seed;
      if (arm == &ablated) {
        for (const std::string& token : disabled) trial_cfg.disable(token);
      }
      TrialMetrics metrics = run_trial(trial_cfg, prompt, defect_model);
      std::map<std::string, double> fractions;
      for (const auto& [family, counts] : metrics.families) {
        UnitCounts& agg = arm->units[family];
        agg.passed += counts.passed;
        agg.total += counts.total;
        fractions[family] = fraction(counts);
      }
      arm->per_trial.push_back(std::move(fractions));
    }
  }

  AblationReport report;
  report.trials = trials;
  report.disabled.assign(disabled.begin(), disabled.end());
  for (const auto& [family, counts] : baseline.units) {
    FamilyComparison comparison;
    comparison.family = family;
    std::vector<bool> base_units;
    base_units.insert(base_units.end(), counts.passed, true);
    base_units.insert(base_units.end(), counts.total - counts.passed, false);
    comparison.baseline_rate = compliance_rate(base_units);
    const UnitCounts& ab = ablated.units[family];
    std::vector<bool> ab_units;
    ab_units.insert(ab_units.end(), ab.passed, true);
    ab_units.insert(ab_units.end(), ab.total - ab.passed, false);
    comparison.ablated_rate = ab_units.empty() ? 0.0 : compliance_rate(ab_units);
    int positive = 0;
    int negative = 0;
    for (int t = 0; t < trials; ++t) {
      double base = baseline.per_trial[t].count(family) ? baseline.per_trial[t].at(family) : 1.0;
      double abl = ablated.per_trial[t].count(family) ? ablated.per_trial[t].at(family) : 1.0;
      if (base > abl) positive += 1;
      if (abl > base) negative += 1;
    }
    comparison.p_value = binomial_tail(positive + negative, positive);
    report.families.push_back(std::move(comparison));
  }
  return report;
}

std::string AblationReport::to_json() const {
  ojson doc;
  doc["schema_version"] = 1;
  doc["trials"] = trials;
  doc["disabled"] = disabled;
  doc["families"] = ojson::array();
  for (const FamilyComparison& comparison : families) {
    ojson node;
    node["family"] = comparison.family;
    node["baseline_rate"] = comparison.baseline_rate;
    node["ablated_rate"] = comparison.ablated_rate;
    node["p_value"] = comparison.p_value;
    doc["families"].push_back(std::move(node));
  }
  return doc.dump(2) + "\n";
}

std::string AblationReport::to_table() const {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof(line), "%-14s %14s %14s %12s\n", "family", "baseline", "ablated",
                "p-value");
  out += line;
  out += std::string(56, '-') + "\n";
  for (const FamilyComparison& comparison : families) {
    std::snprintf(line, sizeof(line), "%-14s %14.1f %14.1f %12.3g\n", comparison.family.c_str(),
                  comparison.baseline_rate, comparison.ablated_rate, comparison.p_value);
    out += line;
  }
  return out;
}

}  // namespace storypipe::orchestrator
