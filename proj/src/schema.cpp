#include "storypipe/schema.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <set>

#include "storypipe/errors.hpp"
#include "storypipe/util.hpp"

namespace storypipe {

using ojson = nlohmann::ordered_json;

namespace {

constexpr int kSchemaVersion = 1;

// Translates a byte offset from the JSON parser into 1-based line/column.
std::pair<int, int> line_column_at(std::string_view text, size_t byte) {
  int line = 1;
  int column = 1;
  for (size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      column = 1;
    } else {
      ++column;
    }
  }
  return {line, column};
}

ojson parse_json_or_throw(std::string_view text) {
  try {
    return ojson::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    size_t byte = e.byte > 0 ? e.byte - 1 : 0;
    auto [line, column] = line_column_at(text, byte);
    throw SyntaxError("malformed document at line " + std::to_string(line) +
                          ", column " + std::to_string(column) + ": " + e.what(),
                      line, column);
  }
}

void require_object(const ojson& node, const std::string& where) {
  if (!node.is_object()) throw SchemaError(where + " must be an object");
}

const ojson& require_field(const ojson& node, const std::string& key, const std::string& where) {
  auto it = node.find(key);
  if (it == node.end()) throw SchemaError(where + " is missing field '" + key + "'");
  return *it;
}

std::string require_string(const ojson& node, const std::string& key, const std::string& where) {
  const ojson& value = require_field(node, key, where);
  if (!value.is_string()) throw SchemaError(where + " field '" + key + "' must be a string");
  return value.get<std::string>();
}

int require_int(const ojson& node, const std::string& key, const std::string& where) {
  const ojson& value = require_field(node, key, where);
  if (!value.is_number_integer()) {
    throw SchemaError(where + " field '" + key + "' must be an integer");
  }
  return value.get<int>();
}

double require_number(const ojson& node, const std::string& key, const std::string& where) {
  const ojson& value = require_field(node, key, where);
  if (!value.is_number()) throw SchemaError(where + " field '" + key + "' must be a number");
  return value.get<double>();
}

void reject_unknown_keys(const ojson& node, const std::set<std::string>& allowed,
                         const std::string& where) {
  for (auto it = node.begin(); it != node.end(); ++it) {
    if (!allowed.count(it.key())) {
      throw SchemaError(where + " has unknown key '" + it.key() + "'");
    }
  }
}

void check_version(const ojson& doc, const std::string& where) {
  int version = require_int(doc, "schema_version", where);
  if (version != kSchemaVersion) {
    throw SchemaError(where + " has unsupported schema_version " + std::to_string(version));
  }
}

LocationPair normalize_pair(std::string a, std::string b) {
  if (b < a) std::swap(a, b);
  return LocationPair{std::move(a), std::move(b)};
}

}  // namespace

void validate_prompt(const UserPrompt& prompt) {
  if (util::trim(prompt.text).empty()) throw ConfigError("prompt text is empty");
  if (prompt.target_shot_count < 1) throw ConfigError("target_shot_count must be >= 1");
  if (!(prompt.target_clip_seconds > 0.0)) {
    throw ConfigError("target_clip_seconds must be > 0");
  }
}

const CharacterDef* Script::find_character(std::string_view id) const {
  for (const CharacterDef& c : characters) {
    if (c.id == id) return &c;
  }
  return nullptr;
}

Script parse_script(std::string_view text) {
  ojson doc = parse_json_or_throw(text);
  require_object(doc, "script document");
  reject_unknown_keys(doc, {"schema_version", "title", "characters", "location_adjacency", "shots"},
                      "script document");
  check_version(doc, "script document");

  Script script;
  script.title = require_string(doc, "title", "script document");

  std::set<std::string> character_ids;
  if (auto it = doc.find("characters"); it != doc.end()) {
    if (!it->is_array()) throw SchemaError("'characters' must be an array");
    for (const ojson& node : *it) {
      require_object(node, "character entry");
      reject_unknown_keys(node, {"id", "name", "appearance", "lora_ref"}, "character entry");
      CharacterDef def;
      def.id = require_string(node, "id", "character entry");
      def.name = require_string(node, "name", "character entry");
      def.appearance = require_string(node, "appearance", "character entry");
      if (auto lr = node.find("lora_ref"); lr != node.end()) {
        if (!lr->is_string()) throw SchemaError("character 'lora_ref' must be a string");
        def.lora_ref = lr->get<std::string>();
      }
      if (def.id.empty()) throw SchemaError("character id must be non-empty");
      if (def.appearance.empty()) {
        throw SchemaError("character '" + def.id + "' has empty appearance");
      }
      if (!character_ids.insert(def.id).second) {
        throw SchemaError("duplicate character id '" + def.id + "'");
      }
      script.characters.push_back(std::move(def));
    }
  }

  const ojson& shots = require_field(doc, "shots", "script document");
  if (!shots.is_array()) throw SchemaError("'shots' must be an array");
  std::set<std::string> shot_locations;
  int expected_index = 1;
  for (const ojson& node : shots) {
    require_object(node, "shot entry");
    reject_unknown_keys(node,
                        {"index", "characters", "location", "content", "action", "subtitle",
                         "continuity_required", "silent"},
                        "shot entry");
    Shot shot;
    shot.index = require_int(node, "index", "shot entry");
    if (shot.index != expected_index) {
      throw SchemaError("shot indices must be contiguous from 1; found " +
                        std::to_string(shot.index) + " where " +
                        std::to_string(expected_index) + " was expected");
    }
    ++expected_index;
    const std::string where = "shot " + std::to_string(shot.index);
    const ojson& chars = require_field(node, "characters", where);
    if (!chars.is_array()) throw SchemaError(where + " field 'characters' must be an array");
    for (const ojson& id : chars) {
      if (!id.is_string()) throw SchemaError(where + " character ids must be strings");
      std::string ref = id.get<std::string>();
      if (!character_ids.count(ref)) {
        throw SchemaError(where + " references unknown character '" + ref + "'");
      }
      shot.character_ids.push_back(std::move(ref));
    }
    shot.location_id = require_string(node, "location", where);
    shot.content = require_string(node, "content", where);
    if (auto a = node.find("action"); a != node.end()) {
      if (!a->is_string()) throw SchemaError(where + " field 'action' must be a string");
      shot.action = a->get<std::string>();
    }
    shot.subtitle = require_string(node, "subtitle", where);
    if (auto c = node.find("continuity_required"); c != node.end()) {
      if (!c->is_boolean()) {
        throw SchemaError(where + " field 'continuity_required' must be a boolean");
      }
      shot.continuity_required = c->get<bool>();
    }
    if (auto s = node.find("silent"); s != node.end()) {
      if (!s->is_boolean()) throw SchemaError(where + " field 'silent' must be a boolean");
      shot.silent = s->get<bool>();
    }
    shot_locations.insert(shot.location_id);
    script.shots.push_back(std::move(shot));
  }

  if (auto it = doc.find("location_adjacency"); it != doc.end()) {
    if (!it->is_array()) throw SchemaError("'location_adjacency' must be an array");
    std::set<LocationPair> pairs;
    for (const ojson& node : *it) {
      if (!node.is_array() || node.size() != 2 || !node[0].is_string() || !node[1].is_string()) {
        throw SchemaError("adjacency entries must be pairs of location ids");
      }
      std::string a = node[0].get<std::string>();
      std::string b = node[1].get<std::string>();
      if (a == b) throw SchemaError("adjacency pair joins '" + a + "' with itself");
      for (const std::string& loc : {a, b}) {
        if (!shot_locations.count(loc)) {
          throw SchemaError("adjacency references location '" + loc +
                            "' that appears in no shot");
        }
      }
      pairs.insert(normalize_pair(std::move(a), std::move(b)));
    }
    script.location_adjacency.assign(pairs.begin(), pairs.end());
  }

  return script;
}

std::string serialize_script(const Script& script) {
  ojson doc;
  doc["schema_version"] = kSchemaVersion;
  doc["title"] = script.title;
  doc["characters"] = ojson::array();
  for (const CharacterDef& def : script.characters) {
    ojson node;
    node["id"] = def.id;
    node["name"] = def.name;
    node["appearance"] = def.appearance;
    if (def.lora_ref) node["lora_ref"] = *def.lora_ref;
    doc["characters"].push_back(std::move(node));
  }
  std::set<LocationPair> pairs;
  for (const LocationPair& pair : script.location_adjacency) {
    pairs.insert(normalize_pair(pair.a, pair.b));
  }
  doc["location_adjacency"] = ojson::array();
  for (const LocationPair& pair : pairs) {
    doc["location_adjacency"].push_back(ojson::array({pair.a, pair.b}));
  }
  doc["shots"] = ojson::array();
  for (const Shot& shot : script.shots) {
    ojson node;
    node["index"] = shot.index;
    node["characters"] = shot.character_ids;
    node["location"] = shot.location_id;
    node["content"] = shot.content;
    if (shot.action) node["action"] = *shot.action;
    node["subtitle"] = shot.subtitle;
    if (shot.continuity_required) node["continuity_required"] = true;
    if (shot.silent) node["silent"] = true;
    doc["shots"].push_back(std::move(node));
  }
  return doc.dump(2) + "\n";
}

const std::vector<std::string>& shot_design_elements() {
  static const std::vector<std::string> kElements = {
      "background",      "character_pose", "character_action", "prop_description",
      "camera_position", "camera_movement", "lighting_design"};
  return kElements;
}

std::string get_design_element(const ShotDesign& design, std::string_view element) {
  if (element == "background") return design.background;
  if (element == "character_pose") return design.character_pose;
  if (element == "character_action") return design.character_action;
  if (element == "prop_description") return design.prop_description;
  if (element == "camera_position") return design.camera_position;
  if (element == "camera_movement") return design.camera_movement;
  if (element == "lighting_design") return design.lighting_design;
  throw Error("unknown design element: " + std::string(element));
}

void set_design_element(ShotDesign& design, std::string_view element, std::string value) {
  if (element == "background") design.background = std::move(value);
  else if (element == "character_pose") design.character_pose = std::move(value);
  else if (element == "character_action") design.character_action = std::move(value);
  else if (element == "prop_description") design.prop_description = std::move(value);
  else if (element == "camera_position") design.camera_position = std::move(value);
  else if (element == "camera_movement") design.camera_movement = std::move(value);
  else if (element == "lighting_design") design.lighting_design = std::move(value);
  else throw Error("unknown design element: " + std::string(element));
}

void validate_feedback(const Feedback& feedback) {
  if (feedback.approve && !feedback.findings.empty()) {
    throw SchemaError("approving feedback from '" + feedback.reviewer_id +
                      "' must not carry findings");
  }
  for (const auto& [axis, value] : feedback.scores) {
    if (!(value >= 0.0 && value <= 1.0)) {
      throw SchemaError("score for axis '" + axis + "' is outside [0, 1]");
    }
  }
}

void validate_prompt_spec(const PromptSpec& spec) {
  if (spec.body.empty()) throw SchemaError("prompt body is empty");
  if (spec.kind == "i2v") {
    int images = 0;
    for (const AssetRef& ref : spec.attachments) {
      if (ref.kind == "image") ++images;
    }
    if (images != 1) {
      throw SchemaError("i2v prompt must carry exactly one image attachment, found " +
                        std::to_string(images));
    }
  }
}

std::vector<std::string> validate_story_output(const StoryOutput& output, const Script& script,
                                               double slack_seconds) {
  std::vector<std::string> violations;
  const size_t n = script.shots.size();
  if (output.pairs.size() != n) {
    violations.push_back("output has " + std::to_string(output.pairs.size()) +
                         " pairs but the script has " + std::to_string(n) + " shots");
  }
  for (size_t i = 0; i < output.pairs.size(); ++i) {
    const std::string where = "pair " + std::to_string(i + 1);
    const StoryPair& pair = output.pairs[i];
    if (pair.clip.kind != "video") violations.push_back(where + ": clip asset is not a video");
    if (pair.audio.kind != "audio") violations.push_back(where + ": audio asset is not audio");
    if (!pair.clip.duration_seconds) {
      violations.push_back(where + ": clip is missing a duration");
    }
    if (!pair.audio.duration_seconds) {
      violations.push_back(where + ": audio is missing a duration");
    }
    if (pair.clip.duration_seconds && pair.audio.duration_seconds) {
      double budget = *pair.clip.duration_seconds + slack_seconds;
      if (*pair.audio.duration_seconds > budget + 1e-9) {
        violations.push_back(where + ": narration runs " +
                             std::to_string(*pair.audio.duration_seconds) +
                             "s against a clip window of " + std::to_string(budget) + "s");
      }
    }
  }
  if (output.timeline.size() != output.pairs.size()) {
    violations.push_back("timeline has " + std::to_string(output.timeline.size()) +
                         " cues for " + std::to_string(output.pairs.size()) + " pairs");
  }
  for (size_t i = 1; i < output.timeline.size(); ++i) {
    if (!(output.timeline[i].start_seconds > output.timeline[i - 1].start_seconds)) {
      violations.push_back("timeline cue " + std::to_string(i + 1) +
                           " does not start after its predecessor");
    }
  }
  return violations;
}

namespace {

ojson asset_to_json(const AssetRef& ref) {
  ojson node;
  node["id"] = ref.id;
  node["kind"] = ref.kind;
  node["uri"] = ref.uri;
  if (ref.duration_seconds) node["duration_seconds"] = *ref.duration_seconds;
  return node;
}

AssetRef asset_from_json(const ojson& node, const std::string& where) {
  require_object(node, where);
  reject_unknown_keys(node, {"id", "kind", "uri", "duration_seconds"}, where);
  AssetRef ref;
  ref.id = require_string(node, "id", where);
  ref.kind = require_string(node, "kind", where);
  ref.uri = require_string(node, "uri", where);
  if (auto d = node.find("duration_seconds"); d != node.end()) {
    if (!d->is_number()) throw SchemaError(where + " duration must be a number");
    ref.duration_seconds = d->get<double>();
  }
  return ref;
}

}  // namespace

std::string serialize_shot_designs(const std::vector<ShotDesign>& designs) {
  ojson doc;
  doc["schema_version"] = kSchemaVersion;
  doc["designs"] = ojson::array();
  for (const ShotDesign& d : designs) {
    ojson node;
    node["shot_index"] = d.shot_index;
    for (const std::string& element : shot_design_elements()) {
      node[element] = get_design_element(d, element);
    }
    doc["designs"].push_back(std::move(node));
  }
  return doc.dump(2) + "\n";
}

std::vector<ShotDesign> parse_shot_designs(std::string_view text) {
  ojson doc = parse_json_or_throw(text);
  require_object(doc, "design document");
  reject_unknown_keys(doc, {"schema_version", "designs"}, "design document");
  check_version(doc, "design document");
  const ojson& list = require_field(doc, "designs", "design document");
  if (!list.is_array()) throw SchemaError("'designs' must be an array");
  std::vector<ShotDesign> designs;
  for (const ojson& node : list) {
    require_object(node, "design entry");
    std::set<std::string> allowed(shot_design_elements().begin(), shot_design_elements().end());
    allowed.insert("shot_index");
    reject_unknown_keys(node, allowed, "design entry");
    ShotDesign d;
    d.shot_index = require_int(node, "shot_index", "design entry");
    const std::string where = "design for shot " + std::to_string(d.shot_index);
    for (const std::string& element : shot_design_elements()) {
      set_design_element(d, element, require_string(node, element, where));
    }
    designs.push_back(std::move(d));
  }
  return designs;
}

std::string serialize_voice_plan(const VoicePlan& plan) {
  ojson doc;
  doc["schema_version"] = kSchemaVersion;
  doc["background_music_id"] = plan.background_music_id;
  doc["per_shot"] = ojson::array();
  for (const VoiceCue& cue : plan.per_shot) {
    ojson node;
    node["shot_index"] = cue.shot_index;
    node["voice_id"] = cue.voice_id;
    node["emotion"] = cue.emotion;
    doc["per_shot"].push_back(std::move(node));
  }
  return doc.dump(2) + "\n";
}

VoicePlan parse_voice_plan(std::string_view text) {
  ojson doc = parse_json_or_throw(text);
  require_object(doc, "voice plan");
  reject_unknown_keys(doc, {"schema_version", "background_music_id", "per_shot"}, "voice plan");
  check_version(doc, "voice plan");
  VoicePlan plan;
  plan.background_music_id = require_string(doc, "background_music_id", "voice plan");
  const ojson& list = require_field(doc, "per_shot", "voice plan");
  if (!list.is_array()) throw SchemaError("'per_shot' must be an array");
  for (const ojson& node : list) {
    require_object(node, "voice cue");
    reject_unknown_keys(node, {"shot_index", "voice_id", "emotion"}, "voice cue");
    VoiceCue cue;
    cue.shot_index = require_int(node, "shot_index", "voice cue");
    cue.voice_id = require_string(node, "voice_id", "voice cue");
    cue.emotion = require_string(node, "emotion", "voice cue");
    plan.per_shot.push_back(std::move(cue));
  }
  return plan;
}

std::string serialize_asset_ref(const AssetRef& ref) { return asset_to_json(ref).dump(2) + "\n"; }

std::string serialize_asset_list(const std::vector<AssetRef>& refs) {
  ojson doc;
  doc["schema_version"] = kSchemaVersion;
  doc["assets"] = ojson::array();
  for (const AssetRef& ref : refs) doc["assets"].push_back(asset_to_json(ref));
  return doc.dump(2) + "\n";
}

std::vector<AssetRef> parse_asset_list(std::string_view text) {
  ojson doc = parse_json_or_throw(text);
  require_object(doc, "asset list");
  reject_unknown_keys(doc, {"schema_version", "assets"}, "asset list");
  check_version(doc, "asset list");
  const ojson& list = require_field(doc, "assets", "asset list");
  if (!list.is_array()) throw SchemaError("'assets' must be an array");
  std::vector<AssetRef> refs;
  for (const ojson& node : list) refs.push_back(asset_from_json(node, "asset entry"));
  return refs;
}

std::string serialize_story_output(const StoryOutput& output) {
  ojson doc;
  doc["schema_version"] = kSchemaVersion;
  doc["pairs"] = ojson::array();
  for (const StoryPair& pair : output.pairs) {
    ojson node;
    node["clip"] = asset_to_json(pair.clip);
    node["audio"] = asset_to_json(pair.audio);
    doc["pairs"].push_back(std::move(node));
  }
  doc["timeline"] = ojson::array();
  for (const TimelineCue& cue : output.timeline) {
    ojson node;
    node["shot_index"] = cue.shot_index;
    node["start_seconds"] = cue.start_seconds;
    node["clip_asset_id"] = cue.clip_asset_id;
    node["audio_asset_id"] = cue.audio_asset_id;
    doc["timeline"].push_back(std::move(node));
  }
  return doc.dump(2) + "\n";
}

StoryOutput parse_story_output(std::string_view text) {
  ojson doc = parse_json_or_throw(text);
  require_object(doc, "story output");
  reject_unknown_keys(doc, {"schema_version", "pairs", "timeline"}, "story output");
  check_version(doc, "story output");
  StoryOutput output;
  const ojson& pairs = require_field(doc, "pairs", "story output");
  if (!pairs.is_array()) throw SchemaError("'pairs' must be an array");
  for (const ojson& node : pairs) {
    require_object(node, "output pair");
    reject_unknown_keys(node, {"clip", "audio"}, "output pair");
    StoryPair pair;
    pair.clip = asset_from_json(require_field(node, "clip", "output pair"), "clip asset");
    pair.audio = asset_from_json(require_field(node, "audio", "output pair"), "audio asset");
    output.pairs.push_back(std::move(pair));
  }
  const ojson& cues = require_field(doc, "timeline", "story output");
  if (!cues.is_array()) throw SchemaError("'timeline' must be an array");
  for (const ojson& node : cues) {
    require_object(node, "timeline cue");
    reject_unknown_keys(node, {"shot_index", "start_seconds", "clip_asset_id", "audio_asset_id"},
                        "timeline cue");
    TimelineCue cue;
    cue.shot_index = require_int(node, "shot_index", "timeline cue");
    cue.start_seconds = require_number(node, "start_seconds", "timeline cue");
    cue.clip_asset_id = require_string(node, "clip_asset_id", "timeline cue");
    cue.audio_asset_id = require_string(node, "audio_asset_id", "timeline cue");
    output.timeline.push_back(std::move(cue));
  }
  return output;
}

}  // namespace storypipe
