#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "storypipe/config.hpp"
#include "storypipe/providers.hpp"
#include "storypipe/refine_loop.hpp"
#include "storypipe/schema.hpp"
#include "storypipe/store.hpp"

namespace storypipe::stages {

// Everything a stage needs from the surrounding run: knobs, providers, the
// artifact sink, the run manifest being accumulated, and the warning list.
// Stages append to `manifest` for every artifact they put.
struct StageContext {
  const config::RunConfig* cfg = nullptr;
  providers::ProviderHub* hub = nullptr;
  store::ArtifactStore* store = nullptr;
  std::map<std::string, std::string>* manifest = nullptr;
  std::vector<std::string>* warnings = nullptr;
};

// Stores bytes, records the digest in the run manifest, and returns a
// content-addressed ref of the given kind with its uri filled in.
AssetRef put_artifact(StageContext& ctx, const std::string& rel_path, std::string_view bytes,
                      const std::string& kind, std::optional<double> duration = std::nullopt);

// Draft scripts are reviewed by the structure, content, and style agents
// until all approve or the budget runs out. The returned script always
// parses and carries exactly prompt.target_shot_count shots.
Script run_script_stage(const UserPrompt& prompt, StageContext& ctx);

// One complete seven-element design per shot, reviewed for completeness.
std::vector<ShotDesign> run_shot_stage(const Script& script, StageContext& ctx);

struct CharacterAssets {
  AssetRef portrait;
  AssetRef turnaround;
  std::optional<AssetRef> adapter;

  bool operator==(const CharacterAssets&) const = default;
};

// Portrait, turnaround video, sampled frames with captions, and optionally
// a trained identity adapter for every character in the script.
std::map<std::string, CharacterAssets> run_character_stage(const Script& script,
                                                           StageContext& ctx);

std::string serialize_character_assets(const std::map<std::string, CharacterAssets>& assets);
std::map<std::string, CharacterAssets> parse_character_assets(std::string_view text);

// Deterministic prompt templates. The image prompt carries background,
// pose, props, camera position, and lighting; the animation prompt swaps
// pose for action and camera position for movement, and attaches the
// keyframe it animates. Both throw IncompleteDesign on empty elements.
PromptSpec build_keyframe_prompt(const Shot& shot, const ShotDesign& design,
                                 const std::vector<CharacterDef>& characters);
PromptSpec build_animation_prompt(const Shot& shot, const ShotDesign& design,
                                  const std::vector<CharacterDef>& characters,
                                  const AssetRef& keyframe);

// One keyframe image per shot via the t2i pool, best-of-pool selection.
std::vector<AssetRef> run_keyframe_stage(const Script& script,
                                         const std::vector<ShotDesign>& designs,
                                         const std::map<std::string, CharacterAssets>& characters,
                                         StageContext& ctx);

// One clip per shot via the i2v pool, animating that shot's keyframe.
std::vector<AssetRef> run_animation_stage(const Script& script,
                                          const std::vector<ShotDesign>& designs,
                                          const std::vector<AssetRef>& keyframes,
                                          StageContext& ctx);

// Outcome of fitting one shot's narration into its clip window.
struct FitOutcome {
  AssetRef audio;
  std::string audio_bytes;
  std::string final_subtitle;
  int refinements = 0;
  bool fits = false;
  std::string trace_json;
};

// Synthesizes narration and, while it overruns clip + slack, asks the
// subtitle refiner to shorten it, up to the configured refinement budget.
// Exhaustion either throws FitFailure (fail mode) or returns the last
// attempt with fits=false (emit-best mode). Empty subtitles become a
// zero-length silent track without a synthesis call.
FitOutcome fit_subtitle(const std::string& subtitle, double clip_seconds, const std::string& item,
                        StageContext& ctx);

struct AudioStageResult {
  VoicePlan plan;
  std::vector<AssetRef> audios;
  StoryOutput output;
};

// Voice plan (reviewed), per-shot narration fitted to each clip, and the
// final paired timeline.
AudioStageResult run_audio_stage(const Script& script, const std::vector<AssetRef>& clips,
                                 StageContext& ctx);

}  // namespace storypipe::stages
