#pragma once

#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "storypipe/schema.hpp"

namespace storypipe::guidelines {

// Closed rule registry. Every finding anywhere in the system references one
// of these ids.
//   STR-1 same-location-adjacent    STR-2 adjacent-location-jump
//   STR-3 same-character-adjacent   CON-1 multi-action-shot
//   CON-2 fine-detail-content       STY-1 missing-title
//   STY-2 missing-characters        STY-3 shot-field-missing
//   STY-4 subtitle-misaligned       SHOT-1 element-missing
//   VOI-1 music-unavailable         VOI-2 emotion-invalid
const std::vector<std::string>& rule_registry();
bool is_registered_rule(std::string_view rule_id);

// Tunable knobs for the content checks; defaults ship with the library.
struct CheckConfig {
  std::vector<std::string> conjunction_markers;
  std::vector<std::string> fine_detail_denylist;
};
CheckConfig default_check_config();

// Score axes used when judging generated images and videos. The video set
// extends the image set by subject consistency and dynamics.
const std::vector<std::string>& image_axes();
const std::vector<std::string>& video_axes();

// Flags consecutive shot pairs that cut poorly: same location (STR-1),
// declared-adjacent locations (STR-2), or a shared character without the
// continuity flag on the later shot (STR-3). Findings point at the later
// shot of the pair and come back sorted by shot index, then rule id.
std::vector<Finding> check_structure(const Script& script);

// Builds a shot that can be inserted immediately before finding.shot_index
// to break up the offending cut. Cycles through four templates (close-up of
// another character, partial view of another character, environment detail,
// prop detail) keyed by the finding's shot index; character templates fall
// back to environment detail when no unused character exists. The result
// uses a fresh location token and characters disjoint from both neighbors,
// so the repair never introduces a new structure finding.
Shot suggest_transitional_shot(const Script& script, const Finding& finding);

// Returns a copy of the script with `shot` inserted before the existing
// shot at position `before_index` (1-based); indices are renumbered.
Script insert_shot(const Script& script, int before_index, Shot shot);

// CON-1 for actions that chain several beats together (conjunction markers);
// CON-2 for content that asks for un-renderable fine detail (denylist).
std::vector<Finding> check_content(const Script& script, const CheckConfig& config);

// STY-1 empty title; STY-2 shots name characters but the cast list is
// empty; STY-3 empty content, an empty subtitle on a non-silent shot, or a
// shot-count mismatch against n_expected. Subtitle/content semantic
// alignment is a provider concern and not checked here.
std::vector<Finding> check_style(const Script& script, int n_expected);

// SHOT-1 per empty element among the seven design elements.
std::vector<Finding> check_shot_design(const ShotDesign& design);

// VOI-1 when the music id is not in the catalog; VOI-2 per cue whose
// emotion is outside the vocabulary.
std::vector<Finding> check_voice_plan(const VoicePlan& plan,
                                      const std::set<std::string>& music_catalog,
                                      const std::set<std::string>& emotion_vocab);

// Narration length model: words / (rate_wpm / 60). Empty text is 0 seconds.
double estimate_speech_seconds(std::string_view subtitle, double rate_wpm);

// Canonical finding order: by shot index (script-level findings first),
// then rule id, then message.
void sort_findings(std::vector<Finding>& findings);

}  // namespace storypipe::guidelines
