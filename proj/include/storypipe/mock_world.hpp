#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "storypipe/providers.hpp"
#include "storypipe/schema.hpp"

// Deterministic content synthesis backing the mock provider backend. Every
// function is a pure function of the world config, the request coordinates,
// and the fix directives carried by the refined prompt; nothing depends on
// call order, so replay and resume reproduce identical bytes.
namespace storypipe::mockworld {

// Fix directives accumulate in prompt metadata under "fixes" as a sorted
// comma-joined token list (rule ids and score axes).
std::set<std::string> parse_fixes(const PromptSpec& request);
std::string merge_fixes(const std::string& existing, const std::vector<std::string>& added);
bool has_fix(const std::set<std::string>& fixes, std::string_view token_prefix);

// Whether the defect coin for (family, item) comes up heads at the given
// rate. Flipped from the run seed and coordinates only.
bool defect_roll(const providers::MockWorldConfig& world, std::string_view family,
                 std::string_view item, double rate);

std::string make_script_text(const providers::MockWorldConfig& world,
                             const providers::MockScenario& scenario,
                             const std::set<std::string>& fixes);

std::string make_designs_text(const providers::MockWorldConfig& world,
                              const providers::MockScenario& scenario,
                              const std::set<std::string>& fixes);

std::string make_voice_plan_text(const providers::MockWorldConfig& world,
                                 const providers::MockScenario& scenario,
                                 const std::set<std::string>& fixes);

// Rewritten request body for the refiner role: the original body plus a
// revision note listing what to address.
std::string make_refined_body(const PromptSpec& request, int iteration);

// Placeholder payloads. Images are solid-color PPMs, videos a tagged
// binary stub carrying its duration, audio a real PCM WAV of the declared
// duration at a deliberately low sample rate.
std::string make_image_bytes(uint64_t seed);
std::string make_video_bytes(uint64_t seed, double duration_seconds);
std::string make_audio_bytes(uint64_t seed, double duration_seconds);

// Axis scores for one candidate: comfortably above the approval threshold
// unless the candidate carries a quality defect flag, which drags the
// matching axis well below it.
std::map<std::string, double> evaluate_scores(const providers::MockWorldConfig& world,
                                              const providers::RequestContext& ctx,
                                              const std::vector<std::string>& axes,
                                              std::string_view quality_flag);

// Offline subtitle shortening. "truncate-to-fit" drops trailing words to
// the largest count that fits the clip window, snapping back to a sentence
// boundary when one exists; "halve" keeps the first half; "stubborn"
// returns the text unchanged (used to exercise the failure path).
std::string shorten_subtitle(std::string_view policy, std::string_view text,
                             double clip_seconds, double slack_seconds, double rate_wpm);

// View angles cycled by the caption generator for turnaround frames.
const std::vector<std::string>& view_angles();

std::string render_caption(std::string_view caption_template, std::string_view name,
                           std::string_view appearance, std::string_view view);

}  // namespace storypipe::mockworld
