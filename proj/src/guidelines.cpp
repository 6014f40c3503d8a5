#include "storypipe/guidelines.hpp"

#include <algorithm>
#include <tuple>

#include "storypipe/errors.hpp"
#include "storypipe/util.hpp"

namespace storypipe::guidelines {

const std::vector<std::string>& rule_registry() {
  static const std::vector<std::string> kRules = {
      "STR-1", "STR-2", "STR-3", "CON-1", "CON-2", "STY-1",
      "STY-2", "STY-3", "STY-4", "SHOT-1", "VOI-1", "VOI-2"};
  return kRules;
}

bool is_registered_rule(std::string_view rule_id) {
  const auto& rules = rule_registry();
  return std::find(rules.begin(), rules.end(), rule_id) != rules.end();
}

CheckConfig default_check_config() {
  CheckConfig config;
  config.conjunction_markers = {"then", "followed by", ";", "and then", "after that"};
  config.fine_detail_denylist = {"phone screen",  "screen shows",   "screen displays",
                                 "on the screen", "on-screen text", "text message",
                                 "small pattern", "inscription",    "fine print",
                                 "tiny text"};
  return config;
}

const std::vector<std::string>& image_axes() {
  static const std::vector<std::string> kAxes = {"visual_quality", "naturalness",
                                                 "prompt_consistency"};
  return kAxes;
}

const std::vector<std::string>& video_axes() {
  static const std::vector<std::string> kAxes = {"visual_quality", "naturalness",
                                                 "prompt_consistency", "subject_consistency",
                                                 "dynamics"};
  return kAxes;
}

void sort_findings(std::vector<Finding>& findings) {
  std::sort(findings.begin(), findings.end(), [](const Finding& a, const Finding& b) {
    int ai = a.shot_index.value_or(0);
    int bi = b.shot_index.value_or(0);
    return std::tie(ai, a.rule_id, a.message) < std::tie(bi, b.rule_id, b.message);
  });
}

namespace {

bool adjacency_contains(const Script& script, const std::string& a, const std::string& b) {
  for (const LocationPair& pair : script.location_adjacency) {
    if ((pair.a == a && pair.b == b) || (pair.a == b && pair.b == a)) return true;
  }
  return false;
}

std::vector<std::string> shared_characters(const Shot& a, const Shot& b) {
  std::vector<std::string> shared;
  for (const std::string& id : a.character_ids) {
    if (std::find(b.character_ids.begin(), b.character_ids.end(), id) !=
        b.character_ids.end()) {
      shared.push_back(id);
    }
  }
  return shared;
}

}  // namespace

std::vector<Finding> check_structure(const Script& script) {
  std::vector<Finding> findings;
  for (size_t i = 1; i < script.shots.size(); ++i) {
    const Shot& prev = script.shots[i - 1];
    const Shot& cur = script.shots[i];
    if (prev.location_id == cur.location_id) {
      findings.push_back({"STR-1", cur.index,
                          "shots " + std::to_string(prev.index) + " and " +
                              std::to_string(cur.index) + " both play at '" +
                              cur.location_id + "'"});
    } else if (adjacency_contains(script, prev.location_id, cur.location_id)) {
      findings.push_back({"STR-2", cur.index,
                          "cut from '" + prev.location_id + "' to tightly connected '" +
                              cur.location_id + "'"});
    }
    std::vector<std::string> shared = shared_characters(prev, cur);
    if (!shared.empty() && !cur.continuity_required) {
      findings.push_back({"STR-3", cur.index,
                          "character '" + shared.front() + "' appears in shots " +
                              std::to_string(prev.index) + " and " +
                              std::to_string(cur.index) +
                              " without a continuity flag"});
    }
  }
  sort_findings(findings);
  return findings;
}

namespace {

// Smallest unused "transition-k" token, checked against both shot locations
// and the adjacency declarations so the insert can never trip STR-1/STR-2.
std::string fresh_location_token(const Script& script) {
  std::set<std::string> used;
  for (const Shot& shot : script.shots) used.insert(shot.location_id);
  for (const LocationPair& pair : script.location_adjacency) {
    used.insert(pair.a);
    used.insert(pair.b);
  }
  for (int k = 1;; ++k) {
    std::string token = "transition-" + std::to_string(k);
    if (!used.count(token)) return token;
  }
}

// A character that appears in neither neighbor of the insertion point.
const CharacterDef* unused_character(const Script& script, const Shot& prev, const Shot& next) {
  for (const CharacterDef& def : script.characters) {
    bool in_prev = std::find(prev.character_ids.begin(), prev.character_ids.end(), def.id) !=
                   prev.character_ids.end();
    bool in_next = std::find(next.character_ids.begin(), next.character_ids.end(), def.id) !=
                   next.character_ids.end();
    if (!in_prev && !in_next) return &def;
  }
  return nullptr;
}

}  // namespace

Shot suggest_transitional_shot(const Script& script, const Finding& finding) {
  if (!finding.shot_index) {
    throw Error("transitional suggestion needs a finding anchored to a shot");
  }
  int later = *finding.shot_index;
  const Shot* prev = nullptr;
  const Shot* next = nullptr;
  for (const Shot& shot : script.shots) {
    if (shot.index == later - 1) prev = &shot;
    if (shot.index == later) next = &shot;
  }
  if (!prev || !next) {
    throw Error("finding points at shot " + std::to_string(later) +
                " which has no preceding pair in the script");
  }

  Shot bridge;
  bridge.index = later;  // slot it will occupy once inserted
  bridge.location_id = fresh_location_token(script);
  bridge.subtitle = "";
  bridge.silent = true;
  bridge.action = "lingers briefly";

  const CharacterDef* other = unused_character(script, *prev, *next);
  // Four templates, cycled by where the finding sits; the two character
  // templates step aside when every character already flanks the cut.
  int choice = later % 4;
  if ((choice == 0 || choice == 1) && other == nullptr) choice = 2;
  switch (choice) {
    case 0:
      bridge.character_ids = {other->id};
      bridge.content = "Close-up of " + other->name + "'s face, caught mid-thought.";
      break;
    case 1:
      bridge.character_ids = {other->id};
      bridge.content = "Partial view of " + other->name + ": hands working, face unseen.";
      break;
    case 2:
      bridge.content = "Environment detail near '" + prev->location_id +
                       "': textures, weather, and light between scenes.";
      break;
    default:
      bridge.content = "Close-up of an important prop carried over from the previous scene.";
      break;
  }
  return bridge;
}

Script insert_shot(const Script& script, int before_index, Shot shot) {
  Script patched = script;
  patched.shots.clear();
  bool inserted = false;
  for (const Shot& existing : script.shots) {
    if (existing.index == before_index && !inserted) {
      patched.shots.push_back(shot);
      inserted = true;
    }
    patched.shots.push_back(existing);
  }
  if (!inserted) patched.shots.push_back(std::move(shot));
  for (size_t i = 0; i < patched.shots.size(); ++i) {
    patched.shots[i].index = static_cast<int>(i) + 1;
  }
  return patched;
}

std::vector<Finding> check_content(const Script& script, const CheckConfig& config) {
  std::vector<Finding> findings;
  for (const Shot& shot : script.shots) {
    if (shot.action) {
      for (const std::string& marker : config.conjunction_markers) {
        if (util::contains_phrase(*shot.action, marker)) {
          findings.push_back({"CON-1", shot.index,
                              "action chains multiple beats (marker '" + marker + "')"});
          break;
        }
      }
    }
    for (const std::string& phrase : config.fine_detail_denylist) {
      if (util::contains_phrase(shot.content, phrase)) {
        findings.push_back({"CON-2", shot.index,
                            "content asks for un-renderable fine detail ('" + phrase + "')"});
        break;
      }
    }
  }
  sort_findings(findings);
  return findings;
}

std::vector<Finding> check_style(const Script& script, int n_expected) {
  std::vector<Finding> findings;
  if (util::trim(script.title).empty()) {
    findings.push_back({"STY-1", std::nullopt, "script has no title"});
  }
  bool any_named = false;
  for (const Shot& shot : script.shots) {
    if (!shot.character_ids.empty()) any_named = true;
  }
  if (any_named && script.characters.empty()) {
    findings.push_back({"STY-2", std::nullopt,
                        "shots name characters but the cast list is empty"});
  }
  if (static_cast<int>(script.shots.size()) != n_expected) {
    findings.push_back({"STY-3", std::nullopt,
                        "script has " + std::to_string(script.shots.size()) +
                            " shots where " + std::to_string(n_expected) + " were requested"});
  }
  for (const Shot& shot : script.shots) {
    if (util::trim(shot.content).empty()) {
      findings.push_back({"STY-3", shot.index, "shot has no content"});
    }
    if (util::trim(shot.subtitle).empty() && !shot.silent) {
      findings.push_back({"STY-3", shot.index,
                          "shot has an empty subtitle but is not flagged silent"});
    }
  }
  sort_findings(findings);
  return findings;
}

std::vector<Finding> check_shot_design(const ShotDesign& design) {
  std::vector<Finding> findings;
  for (const std::string& element : shot_design_elements()) {
    if (util::trim(get_design_element(design, element)).empty()) {
      findings.push_back({"SHOT-1", design.shot_index, "element '" + element + "' is empty"});
    }
  }
  return findings;
}

std::vector<Finding> check_voice_plan(const VoicePlan& plan,
                                      const std::set<std::string>& music_catalog,
                                      const std::set<std::string>& emotion_vocab) {
  std::vector<Finding> findings;
  if (!music_catalog.count(plan.background_music_id)) {
    findings.push_back({"VOI-1", std::nullopt,
                        "background music '" + plan.background_music_id +
                            "' is not in the catalog"});
  }
  for (const VoiceCue& cue : plan.per_shot) {
    if (!emotion_vocab.count(cue.emotion)) {
      findings.push_back({"VOI-2", cue.shot_index,
                          "emotion '" + cue.emotion + "' is not in the vocabulary"});
    }
  }
  sort_findings(findings);
  return findings;
}

double estimate_speech_seconds(std::string_view subtitle, double rate_wpm) {
  if (rate_wpm <= 0.0) throw ConfigError("speech rate must be positive");
  size_t words = util::split_words(subtitle).size();
  return static_cast<double>(words) / (rate_wpm / 60.0);
}

}  // namespace storypipe::guidelines
