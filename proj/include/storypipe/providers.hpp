#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "storypipe/schema.hpp"

namespace storypipe::providers {

// One configured generative capability: a text model, a pool member of the
// image or video pools, a speech synthesizer, or an adapter trainer.
struct ProviderDescriptor {
  std::string id;
  std::string capability;  // text | t2i | i2v | t2a | adapter-train
  std::string backend;     // mock | http
  std::map<std::string, std::string> config;  // endpoint, timeout_ms, auth_env, ...
  int pool_order = 0;
};

// Routing coordinates a request travels under. Stages stamp these into the
// prompt metadata (underscore keys) so backends can resolve scenario
// entries and derive seeds without any hidden state.
struct RequestContext {
  std::string stage;    // e.g. "script", "keyframes"
  std::string role;     // generator | refiner | evaluator | examiner-<guide>
  std::string item;     // shot index or character id; empty for run-level work
  int iteration = 1;
  int candidate = 0;    // pool index for fan-outs

  std::string key() const;  // "<stage>[<item>]/<role>/<iteration>/<candidate>"
};

RequestContext context_from(const PromptSpec& request);
void stamp_context(PromptSpec& request, const RequestContext& ctx);

// One scripted reply in a mock scenario.
struct ScenarioEntry {
  std::optional<std::string> text;
  std::optional<std::string> asset_id;    // explicit id override
  std::optional<std::string> asset_kind;  // image | video | audio
  std::optional<double> duration_seconds;
  std::optional<std::string> defect;      // rule id the payload should violate
  std::map<std::string, double> scores;   // scripted evaluator axes
  std::optional<std::string> verdict;     // "approve" | "revise"
  std::optional<std::string> fail;        // timeout | malformed-response | refused
};

// Defect injection rates for ablation studies. Coins are flipped from the
// run seed and the unit's coordinates, never from loop progress, so the
// same trial seed meets the same defects whichever agents are enabled.
struct DefectRates {
  double shot_element_omission = 0.0;
  double voice_plan_defect = 0.0;
  double oversized_subtitle = 0.0;
  double naturalness_defect = 0.0;
  std::optional<std::string> script_defect_rule;  // e.g. "STR-1"
};

// Scripted world for offline runs. Keys follow
// "<stage>[<item>]/<role>/<iteration>/<candidate>"; the "[<item>]"
// qualifier is optional and a bare-stage key matches any item. In loose
// mode unmatched keys fall through to the built-in seeded generator; in
// strict mode they raise MissingScenarioEntry.
struct MockScenario {
  std::string mode = "loose";  // loose | strict
  bool cooperative = true;     // defects clear once a fix directive arrives
  std::string subtitle_refiner_policy = "truncate-to-fit";  // halve | stubborn
  int default_character_count = 2;
  DefectRates defects;
  std::map<std::string, ScenarioEntry> entries;

  static MockScenario parse(std::string_view json_text);
  static MockScenario load(const std::filesystem::path& path);
  std::string serialize() const;

  // Item-qualified key first, then the bare stage key; nullptr on miss.
  const ScenarioEntry* find(const RequestContext& ctx) const;
};

struct CallRecord {
  std::string id;
  std::string key;
  std::string request_digest;
  std::string response_digest;
  double latency_ms = 0.0;
};

// Append-only journal of every provider call in a run. Thread-safe; each
// record is flushed as one JSON line when a file is attached.
class CallLog {
 public:
  CallLog() = default;
  explicit CallLog(std::filesystem::path file) : path_(std::move(file)) {}
  void append(CallRecord record);
  std::vector<CallRecord> records() const;

 private:
  mutable std::mutex mutex_;
  std::vector<CallRecord> records_;
  std::optional<std::filesystem::path> path_;
  uint64_t counter_ = 0;
};

// Everything the built-in mock generators need to synthesize coherent
// content: the run seed, the requested story shape, and the catalogs.
struct MockWorldConfig {
  uint64_t run_seed = 0;
  std::string prompt_text;
  int shot_count = 1;
  double clip_seconds = 5.0;
  double speech_rate_wpm = 150.0;
  double slack_seconds = 0.25;
  std::vector<std::string> music_catalog;
  std::vector<std::string> emotion_vocab;
  std::string caption_template = "a photo of {name}, {appearance}, {view}";
};

// Routes requests to the configured backend, logs every call, and owns the
// scenario plus mock-world settings. Safe for concurrent use.
class ProviderHub {
 public:
  ProviderHub(std::vector<ProviderDescriptor> descriptors, MockScenario scenario,
              MockWorldConfig world, CallLog* log);

  const ProviderDescriptor& descriptor(const std::string& id) const;
  // Pool members for a capability, ordered by pool_order.
  std::vector<ProviderDescriptor> pool(const std::string& capability) const;
  const MockScenario& scenario() const { return scenario_; }
  const MockWorldConfig& world() const { return world_; }

  // Dispatches one request and journals it. Mock responses are pure
  // functions of (scenario, request key, seed).
  ProviderResponse call(const std::string& provider_id, const PromptSpec& request,
                        uint64_t seed);

  // Adapter training front-end; mock backends return a stub asset that
  // records the content hashes of its inputs.
  AssetRef train_adapter(const std::string& provider_id, const std::vector<AssetRef>& images,
                         const std::vector<std::string>& captions,
                         const std::vector<std::string>& image_payloads, uint64_t seed,
                         std::string* adapter_payload_out);

 private:
  std::vector<ProviderDescriptor> descriptors_;
  MockScenario scenario_;
  MockWorldConfig world_;
  CallLog* log_;
};

// Single-call dispatch without journaling; exposed for contract tests.
ProviderResponse invoke(const ProviderDescriptor& descriptor, const MockScenario& scenario,
                        const MockWorldConfig& world, const PromptSpec& request, uint64_t seed);

// Supplementary knobs the rule-backed examiner needs beyond the artifact.
struct ExaminerEnv {
  int n_expected = 0;
  std::set<std::string> music_catalog;
  std::set<std::string> emotion_vocab;
  std::vector<std::string> conjunction_markers;
  std::vector<std::string> fine_detail_denylist;
};

// Deterministic examiner: scripted entries are returned verbatim; otherwise
// the artifact is parsed and run through the corresponding guideline checks
// (the examiner IS the linter in offline mode).
Feedback mock_examiner(const MockScenario& scenario, const RequestContext& ctx,
                       const ProviderResponse& artifact, const GuidelineSet& guide,
                       const ExaminerEnv& env);

}  // namespace storypipe::providers
