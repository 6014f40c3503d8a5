#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace storypipe {

// What the user asked for: a story premise, how many shots to plan, and the
// duration target for each rendered clip.
struct UserPrompt {
  std::string text;
  int target_shot_count = 0;
  double target_clip_seconds = 0.0;
};

// Throws ConfigError unless text is non-empty, the shot count is positive,
// and the clip duration is positive.
void validate_prompt(const UserPrompt& prompt);

struct CharacterDef {
  std::string id;
  std::string name;
  std::string appearance;
  std::optional<std::string> lora_ref;  // handle of a trained identity adapter

  bool operator==(const CharacterDef&) const = default;
};

struct Shot {
  int index = 0;  // 1-based, contiguous
  std::vector<std::string> character_ids;
  std::string location_id;
  std::string content;
  std::optional<std::string> action;
  std::string subtitle;
  bool continuity_required = false;  // sanctions reusing a character across the cut
  bool silent = false;               // permits an empty subtitle

  bool operator==(const Shot&) const = default;
};

// Unordered location pair, stored canonically with a <= b.
struct LocationPair {
  std::string a;
  std::string b;

  bool operator==(const LocationPair&) const = default;
  auto operator<=>(const LocationPair&) const = default;
};

struct Script {
  std::string title;
  std::vector<CharacterDef> characters;
  std::vector<LocationPair> location_adjacency;  // canonical: sorted, unique
  std::vector<Shot> shots;

  bool operator==(const Script&) const = default;
  const CharacterDef* find_character(std::string_view id) const;
};

// Parses canonical script text. Throws SyntaxError for malformed text and
// SchemaError for well-formed text that breaks the schema (unknown keys,
// missing fields, non-contiguous indices, dangling references).
Script parse_script(std::string_view text);

// Canonical rendering: fixed key order, two-space indent, adjacency pairs
// normalized and sorted, defaulted optionals omitted, trailing newline.
// Structurally equal scripts serialize to identical bytes.
std::string serialize_script(const Script& script);

// The seven planning elements a shot design must fill in.
struct ShotDesign {
  int shot_index = 0;
  std::string background;
  std::string character_pose;
  std::string character_action;
  std::string prop_description;
  std::string camera_position;
  std::string camera_movement;
  std::string lighting_design;

  bool operator==(const ShotDesign&) const = default;
};

// Canonical element order used in documents, findings, and prompts.
const std::vector<std::string>& shot_design_elements();

std::string get_design_element(const ShotDesign& design, std::string_view element);
void set_design_element(ShotDesign& design, std::string_view element, std::string value);

// Names a guide (structure, content, style, shot, voice, image, video) and
// the registered rule ids it enforces.
struct GuidelineSet {
  std::string id;
  std::vector<std::string> rule_ids;
};

// One issue raised by a rule check: which rule, where, and why.
struct Finding {
  std::string rule_id;
  std::optional<int> shot_index;
  std::string message;

  bool operator==(const Finding&) const = default;
};

// A reviewer's reply about one candidate.
struct Feedback {
  std::string reviewer_id;
  bool approve = false;
  std::vector<Finding> findings;        // must be empty when approve is true
  std::map<std::string, double> scores; // axis name -> [0, 1]
};

// Throws SchemaError when an approval carries findings or a score leaves
// [0, 1].
void validate_feedback(const Feedback& feedback);

// Content-addressed handle to a produced asset.
struct AssetRef {
  std::string id;   // "sha256:<hex>" over the payload bytes
  std::string kind; // image | video | audio | model-adapter
  std::string uri;  // store-relative path once materialized, else empty
  std::optional<double> duration_seconds;  // present iff kind is video or audio

  bool operator==(const AssetRef&) const = default;
};

// A provider request: what to make, from what text, with which inputs.
struct PromptSpec {
  std::string kind;  // text | t2i | i2v | t2a
  std::string body;
  std::vector<AssetRef> attachments;
  std::map<std::string, std::string> metadata;
};

// Throws SchemaError when the body is empty or an i2v request does not
// carry exactly one image attachment.
void validate_prompt_spec(const PromptSpec& spec);

// Uniform provider reply: text or an asset payload, plus free-form metadata.
struct ProviderResponse {
  std::string text;
  std::optional<AssetRef> asset;
  std::string asset_bytes;  // payload backing `asset`, empty otherwise
  std::map<std::string, std::string> metadata;
};

struct VoiceCue {
  int shot_index = 0;
  std::string voice_id;
  std::string emotion;

  bool operator==(const VoiceCue&) const = default;
};

struct VoicePlan {
  std::string background_music_id;
  std::vector<VoiceCue> per_shot;  // one cue per shot, in shot order

  bool operator==(const VoicePlan&) const = default;
};

struct TimelineCue {
  int shot_index = 0;
  double start_seconds = 0.0;
  std::string clip_asset_id;
  std::string audio_asset_id;
};

struct StoryPair {
  AssetRef clip;
  AssetRef audio;
};

// Final deliverable: per-shot clip/audio pairs plus an ordered cue list.
struct StoryOutput {
  std::vector<StoryPair> pairs;
  std::vector<TimelineCue> timeline;
};

// Checks the output against its script: pair count matches the shot count,
// kinds and durations are present, narration fits each clip within the
// slack, and cue offsets increase strictly. Returns human-readable
// violations instead of throwing.
std::vector<std::string> validate_story_output(const StoryOutput& output,
                                               const Script& script,
                                               double slack_seconds);

// JSON helpers used by stage indices, traces, and run state. Each parse_*
// throws SchemaError on malformed input.
std::string serialize_shot_designs(const std::vector<ShotDesign>& designs);
std::vector<ShotDesign> parse_shot_designs(std::string_view text);
std::string serialize_voice_plan(const VoicePlan& plan);
VoicePlan parse_voice_plan(std::string_view text);
std::string serialize_asset_ref(const AssetRef& ref);
std::string serialize_asset_list(const std::vector<AssetRef>& refs);
std::vector<AssetRef> parse_asset_list(std::string_view text);
std::string serialize_story_output(const StoryOutput& output);
StoryOutput parse_story_output(std::string_view text);

}  // namespace storypipe
