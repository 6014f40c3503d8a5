#include "storypipe/mock_world.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>

#include "storypipe/errors.hpp"
#include "storypipe/guidelines.hpp"
#include "storypipe/util.hpp"

namespace storypipe::mockworld {

using providers::MockScenario;
using providers::MockWorldConfig;
using providers::RequestContext;
using ojson = nlohmann::ordered_json;

std::set<std::string> parse_fixes(const PromptSpec& request) {
  std::set<std::string> fixes;
  auto it = request.metadata.find("fixes");
  if (it == request.metadata.end()) return fixes;
  size_t start = 0;
  const std::string& joined = it->second;
  while (start <= joined.size()) {
    size_t comma = joined.find(',', start);
    std::string token = joined.substr(start, comma == std::string::npos ? comma : comma - start);
    if (!token.empty()) fixes.insert(token);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return fixes;
}

std::string merge_fixes(const std::string& existing, const std::vector<std::string>& added) {
  std::set<std::string> tokens;
  PromptSpec probe;
  probe.metadata["fixes"] = existing;
  tokens = parse_fixes(probe);
  for (const std::string& token : added) {
    if (!token.empty()) tokens.insert(token);
  }
  std::vector<std::string> sorted(tokens.begin(), tokens.end());
  return util::join(sorted, ",");
}

bool has_fix(const std::set<std::string>& fixes, std::string_view token_prefix) {
  for (const std::string& token : fixes) {
    if (token.rfind(token_prefix, 0) == 0) return true;
  }
  return false;
}

bool defect_roll(const MockWorldConfig& world, std::string_view family, std::string_view item,
                 double rate) {
  if (rate <= 0.0) return false;
  uint64_t coin = util::derive_seed(world.run_seed, {"defect", family, item});
  return util::unit_interval(coin) < rate;
}

namespace {

const std::vector<std::string>& name_bank() {
  static const std::vector<std::string> kNames = {"Mara",  "Theo", "Ivy",  "Sol",
                                                  "Nadia", "Kenji", "Rhea", "Owen"};
  return kNames;
}

const std::vector<std::string>& appearance_bank() {
  static const std::vector<std::string> kLooks = {
      "short silver hair, a gray wool coat, slight build",
      "curly dark hair, a patched yellow raincoat, tall frame",
      "a braided ponytail, round glasses, a canvas satchel",
      "a weathered cap, rolled sleeves, broad shoulders",
      "cropped red hair, a navy scarf, quick eyes",
      "a long green overcoat, leather gloves, calm posture"};
  return kLooks;
}

struct LocationInfo {
  std::string id;
  std::string phrase;
};

const std::vector<LocationInfo>& location_bank() {
  static const std::vector<LocationInfo> kPlaces = {
      {"loc-harbor", "the fog-wrapped harbor"},
      {"loc-lantern-room", "the lantern room at the tower's top"},
      {"loc-cliff-path", "the windswept cliff path"},
      {"loc-village-square", "the quiet village square"},
      {"loc-boathouse", "the creaking boathouse"}};
  return kPlaces;
}

const std::vector<std::string>& subtitle_bank() {
  static const std::vector<std::string> kWords = {
      "the",   "light", "holds",   "through", "every",   "storm", "we",      "keep",
      "watch", "while", "tide",    "turns",   "slowly",  "toward", "home",   "again",
      "and",   "night", "carries", "quiet",   "promise", "of",     "morning", "calm"};
  return kWords;
}

std::string title_from_prompt(const std::string& prompt_text) {
  std::vector<std::string> words = util::split_words(prompt_text);
  if (words.empty()) return "An Untitled Story";
  std::string title;
  size_t count = std::min<size_t>(words.size(), 6);
  for (size_t i = 0; i < count; ++i) {
    std::string word = words[i];
    if (!word.empty()) word[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(word[0])));
    if (i) title += ' ';
    title += word;
  }
  return title;
}

int words_that_fit(const MockWorldConfig& world) {
  double window = world.clip_seconds + world.slack_seconds;
  return static_cast<int>(std::floor(window * world.speech_rate_wpm / 60.0));
}

std::string build_subtitle(const MockWorldConfig& world, int shot_index, int word_count) {
  if (word_count <= 0) return "";
  util::Rng rng(util::derive_seed(world.run_seed, {"subtitle", std::to_string(shot_index)}));
  std::vector<std::string> words;
  words.reserve(static_cast<size_t>(word_count));
  const std::vector<std::string>& bank = subtitle_bank();
  for (int i = 0; i < word_count; ++i) {
    words.push_back(bank[static_cast<size_t>(rng.next_int(0, static_cast<int>(bank.size()) - 1))]);
  }
  words.back() += ".";
  return util::join(words, " ");
}

}  // namespace

std::string make_script_text(const MockWorldConfig& world, const MockScenario& scenario,
                             const std::set<std::string>& fixes) {
  const int n = world.shot_count;
  util::Rng rng(util::derive_seed(world.run_seed, {"story"}));

  Script script;
  script.title = title_from_prompt(world.prompt_text);

  int cast_size = std::clamp(scenario.default_character_count, 0, 4);
  for (int i = 0; i < cast_size; ++i) {
    CharacterDef def;
    def.id = "char-" + std::to_string(i + 1);
    def.name = name_bank()[static_cast<size_t>((rng.next_int(0, 7) + i) % 8)];
    def.appearance = appearance_bank()[static_cast<size_t>(i % appearance_bank().size())];
    script.characters.push_back(std::move(def));
  }

  const auto& places = location_bank();
  int location_count = n == 1 ? 1 : std::min<int>(static_cast<int>(places.size()), 3);
  int fit = words_that_fit(world);

  for (int j = 1; j <= n; ++j) {
    Shot shot;
    shot.index = j;
    const LocationInfo& place = places[static_cast<size_t>((j - 1) % location_count)];
    shot.location_id = place.id;
    std::string actor_name;
    if (cast_size >= 2) {
      const CharacterDef& actor = script.characters[static_cast<size_t>((j - 1) % cast_size)];
      shot.character_ids = {actor.id};
      actor_name = actor.name;
    } else if (cast_size == 1 && j % 2 == 1) {
      shot.character_ids = {script.characters[0].id};
      actor_name = script.characters[0].name;
    }
    if (actor_name.empty()) {
      shot.content = "A slow look across " + place.phrase + ", empty of people.";
      shot.action = "the wind stirs loose canvas";
    } else {
      shot.content = actor_name + " pauses at " + place.phrase + " and takes in the scene.";
      shot.action = "walks toward the far edge";
    }

    int target_words = std::min(9, std::max(0, fit));
    if (target_words > 4) target_words = 4 + ((j * 3) % (target_words - 4 + 1));
    bool oversized = defect_roll(world, "subtitle", std::to_string(j),
                                 scenario.defects.oversized_subtitle);
    if (oversized) {
      // Oversized narration the script reviewers have no rule against; the
      // audio stage is the only place this can be caught.
      target_words = std::max(20, fit * 2 + 4);
    }
    shot.subtitle = build_subtitle(world, j, target_words);
    if (shot.subtitle.empty()) shot.silent = true;
    script.shots.push_back(std::move(shot));
  }

  // Scripted structural defect, kept until the refined prompt says the
  // matching rule was addressed (or forever when uncooperative).
  if (scenario.defects.script_defect_rule) {
    const std::string& rule = *scenario.defects.script_defect_rule;
    bool healed = scenario.cooperative && has_fix(fixes, rule);
    if (!healed) {
      if (rule == "STR-1" && n >= 2) {
        script.shots[1].location_id = script.shots[0].location_id;
      } else if (rule == "STR-2" && n >= 2) {
        script.location_adjacency.push_back(
            {script.shots[0].location_id, script.shots[1].location_id});
      } else if (rule == "STR-3" && n >= 2 && cast_size >= 1) {
        script.shots[0].character_ids = {script.characters[0].id};
        script.shots[1].character_ids = {script.characters[0].id};
        script.shots[1].continuity_required = false;
      } else if (rule == "CON-1") {
        script.shots[0].action = "stands up, then waves, then turns away";
      } else if (rule == "CON-2") {
        script.shots[0].content += " The phone screen shows an unread message.";
      } else if (rule == "STY-1") {
        script.title = "";
      } else if (rule == "STY-3") {
        script.shots[0].content = "";
      } else {
        throw ConfigError("scenario requests unsupported script defect rule '" + rule + "'");
      }
    }
  }

  return serialize_script(script);
}

std::string make_designs_text(const MockWorldConfig& world, const MockScenario& scenario,
                              const std::set<std::string>& fixes) {
  const int n = world.shot_count;
  std::vector<ShotDesign> designs;
  for (int j = 1; j <= n; ++j) {
    util::Rng rng(util::derive_seed(world.run_seed, {"design", std::to_string(j)}));
    ShotDesign d;
    d.shot_index = j;
    d.background = "layered depth around the scene of shot " + std::to_string(j) +
                   ", horizon line kept low";
    d.character_pose = "relaxed stance, weight on the back foot, gaze off-frame";
    d.character_action = "a single unhurried movement across the frame";
    d.prop_description = "a brass spyglass resting on a coiled rope";
    d.camera_position = "eye level, three-quarter view from frame left";
    d.camera_movement = "slow push-in over the full clip";
    d.lighting_design = "low warm key with soft rim light from the window";

    bool omit = defect_roll(world, "shot", std::to_string(j),
                            scenario.defects.shot_element_omission);
    bool healed = scenario.cooperative && has_fix(fixes, "SHOT-1");
    if (omit && !healed) {
      const auto& elements = shot_design_elements();
      const std::string& victim =
          elements[static_cast<size_t>(rng.next_int(0, static_cast<int>(elements.size()) - 1))];
      set_design_element(d, victim, "");
    }
    designs.push_back(std::move(d));
  }
  return serialize_shot_designs(designs);
}

std::string make_voice_plan_text(const MockWorldConfig& world, const MockScenario& scenario,
                                 const std::set<std::string>& fixes) {
  const int n = world.shot_count;
  util::Rng rng(util::derive_seed(world.run_seed, {"voice"}));
  VoicePlan plan;
  plan.background_music_id = world.music_catalog.empty()
                                 ? "mx-000"
                                 : world.music_catalog[static_cast<size_t>(
                                       rng.next_int(0, static_cast<int>(world.music_catalog.size()) - 1))];
  for (int j = 1; j <= n; ++j) {
    VoiceCue cue;
    cue.shot_index = j;
    cue.voice_id = "voice-" + std::to_string(1 + (j % 2));
    cue.emotion = world.emotion_vocab.empty()
                      ? "neutral"
                      : world.emotion_vocab[static_cast<size_t>(
                            (j + rng.next_int(0, 2)) % static_cast<int>(world.emotion_vocab.size()))];
    plan.per_shot.push_back(std::move(cue));
  }

  bool defective = defect_roll(world, "voice", "", scenario.defects.voice_plan_defect);
  bool healed = scenario.cooperative && (has_fix(fixes, "VOI-1") || has_fix(fixes, "VOI-2"));
  if (defective && !healed) {
    uint64_t pick = util::derive_seed(world.run_seed, {"voice-defect-kind"});
    if (pick % 2 == 0) {
      plan.background_music_id = "mx-999";
    } else {
      size_t victim = static_cast<size_t>(pick % static_cast<uint64_t>(n));
      plan.per_shot[victim].emotion = "zzz-unlisted";
    }
  }
  return serialize_voice_plan(plan);
}

std::string make_refined_body(const PromptSpec& request, int iteration) {
  std::string body = request.body;
  auto it = request.metadata.find("_feedback");
  std::string summary = it == request.metadata.end() ? "reviewer notes" : it->second;
  body += "\n[revision " + std::to_string(iteration) + "] address: " + summary;
  return body;
}

std::string make_image_bytes(uint64_t seed) {
  const int w = 16, h = 16;
  unsigned char r = static_cast<unsigned char>(seed & 0xff);
  unsigned char g = static_cast<unsigned char>((seed >> 8) & 0xff);
  unsigned char b = static_cast<unsigned char>((seed >> 16) & 0xff);
  std::string out = "P6\n16 16\n255\n";
  out.reserve(out.size() + static_cast<size_t>(w * h * 3));
  for (int i = 0; i < w * h; ++i) {
    out.push_back(static_cast<char>(r));
    out.push_back(static_cast<char>(g));
    out.push_back(static_cast<char>(b));
  }
  return out;
}

std::string make_video_bytes(uint64_t seed, double duration_seconds) {
  ojson meta;
  meta["duration_seconds"] = duration_seconds;
  meta["tone"] = static_cast<int>(seed % 997);
  return "SPCLIP01" + meta.dump();
}

std::string make_audio_bytes(uint64_t seed, double duration_seconds) {
  // Minimal PCM WAV: mono, 8-bit, 800 Hz sample rate, a fixed tone whose
  // pitch comes from the seed. Low sample rate keeps placeholder files tiny
  // while the header still carries a true duration.
  const uint32_t sample_rate = 800;
  const uint32_t samples =
      static_cast<uint32_t>(std::llround(std::max(0.0, duration_seconds) * sample_rate));
  std::string data;
  data.reserve(samples);
  double step = 2.0 * 3.14159265358979323846 * (80.0 + static_cast<double>(seed % 40)) /
                static_cast<double>(sample_rate);
  for (uint32_t i = 0; i < samples; ++i) {
    double v = std::sin(step * static_cast<double>(i));
    data.push_back(static_cast<char>(128 + static_cast<int>(v * 100.0)));
  }
  auto put_u32 = [](std::string& out, uint32_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 24) & 0xff));
  };
  auto put_u16 = [](std::string& out, uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
  };
  std::string wav = "RIFF";
  put_u32(wav, 36 + samples);
  wav += "WAVEfmt ";
  put_u32(wav, 16);
  put_u16(wav, 1);  // PCM
  put_u16(wav, 1);  // mono
  put_u32(wav, sample_rate);
  put_u32(wav, sample_rate);  // byte rate (8-bit mono)
  put_u16(wav, 1);            // block align
  put_u16(wav, 8);            // bits per sample
  wav += "data";
  put_u32(wav, samples);
  wav += data;
  return wav;
}

std::map<std::string, double> evaluate_scores(const MockWorldConfig& world,
                                              const RequestContext& ctx,
                                              const std::vector<std::string>& axes,
                                              std::string_view quality_flag) {
  uint64_t base = util::derive_seed(
      world.run_seed, {"eval", ctx.stage, ctx.item, std::to_string(ctx.iteration),
                       std::to_string(ctx.candidate)});
  std::map<std::string, double> scores;
  for (const std::string& axis : axes) {
    double unit = util::unit_interval(util::derive_seed(base, {axis}));
    double value = 0.91 + 0.08 * unit;
    if (quality_flag == "low-naturalness" && axis == "naturalness") {
      value = 0.40 + 0.15 * unit;
    }
    scores[axis] = value;
  }
  return scores;
}

std::string shorten_subtitle(std::string_view policy, std::string_view text,
                             double clip_seconds, double slack_seconds, double rate_wpm) {
  std::vector<std::string> words = util::split_words(text);
  if (policy == "stubborn") return std::string(text);
  if (policy == "halve") {
    words.resize(words.size() / 2);
    return util::join(words, " ");
  }
  // truncate-to-fit: the largest word count whose estimated duration fits
  // the clip window, preferring the last sentence boundary inside it.
  double window = clip_seconds + slack_seconds;
  int max_words = static_cast<int>(std::floor(window * rate_wpm / 60.0));
  if (max_words < 0) max_words = 0;
  if (static_cast<int>(words.size()) <= max_words) return std::string(text);
  int cut = max_words;
  for (int i = max_words; i >= 1; --i) {
    char last = words[static_cast<size_t>(i - 1)].back();
    if (last == '.' || last == '!' || last == '?') {
      cut = i;
      break;
    }
  }
  words.resize(static_cast<size_t>(cut));
  return util::join(words, " ");
}

const std::vector<std::string>& view_angles() {
  static const std::vector<std::string> kViews = {
      "front view",          "three-quarter left view", "left profile",
      "back view",           "right profile",           "three-quarter right view",
      "slight high angle",   "slight low angle"};
  return kViews;
}

std::string render_caption(std::string_view caption_template, std::string_view name,
                           std::string_view appearance, std::string_view view) {
  std::string out(caption_template);
  auto replace_all = [&out](std::string_view token, std::string_view value) {
    size_t pos;
    while ((pos = out.find(token)) != std::string::npos) {
      out.replace(pos, token.size(), value);
    }
  };
  replace_all("{name}", name);
  replace_all("{appearance}", appearance);
  replace_all("{view}", view);
  return out;
}

}  // namespace storypipe::mockworld
