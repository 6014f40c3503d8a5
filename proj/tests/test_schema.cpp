#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <string>
#include <vector>

#include "storypipe/errors.hpp"
#include "storypipe/schema.hpp"
#include "storypipe/util.hpp"

using namespace storypipe;

namespace {

Script sample_script() {
  Script script;
  script.title = "Harbor Lights";
  script.characters = {
      {"char-1", "Mara", "red scarf, weathered coat", std::nullopt},
      {"char-2", "Tomas", "round glasses, canvas jacket", std::string("lora-7")},
  };
  Shot s1;
  s1.index = 1;
  s1.character_ids = {"char-1"};
  s1.location_id = "loc-pier";
  s1.content = "Mara studies the tide tables.";
  s1.action = "traces a line with one finger";
  s1.subtitle = "The tide turns before dawn.";
  Shot s2;
  s2.index = 2;
  s2.character_ids = {"char-2"};
  s2.location_id = "loc-market";
  s2.content = "Tomas closes his stall.";
  s2.subtitle = "Last crates, then home.";
  Shot s3;
  s3.index = 3;
  s3.character_ids = {"char-1", "char-2"};
  s3.location_id = "loc-lighthouse";
  s3.content = "They meet at the lamp room.";
  s3.subtitle = "";
  s3.silent = true;
  s3.continuity_required = true;
  script.shots = {s1, s2, s3};
  script.location_adjacency = {{"loc-market", "loc-pier"}};
  return script;
}

AssetRef make_ref(const std::string& payload, const std::string& kind, const std::string& uri,
                  std::optional<double> duration) {
  return AssetRef{"sha256:" + util::sha256_hex(payload), kind, uri, duration};
}

}  // namespace

TEST_CASE("script serialization round-trips structurally") {
  Script script = sample_script();
  std::string text = serialize_script(script);
  Script parsed = parse_script(text);
  CHECK(parsed == script);
  // Canonical form is a fixpoint.
  CHECK(serialize_script(parsed) == text);
}

TEST_CASE("adjacency pairs are stored canonically") {
  Script a = sample_script();
  Script b = sample_script();
  // The same pair written in the opposite orientation parses to equal bytes.
  std::string text_a = serialize_script(a);
  std::string swapped = text_a;
  size_t pos = swapped.find("\"loc-market\",");
  REQUIRE(pos != std::string::npos);
  b.location_adjacency = {{"loc-pier", "loc-market"}};
  CHECK(serialize_script(b) == text_a);
  CHECK(parse_script(serialize_script(b)) == a);
}

TEST_CASE("parse_script rejects unknown keys") {
  std::string text = serialize_script(sample_script());
  std::string with_extra = text;
  with_extra.insert(with_extra.find("\"title\""), "\"surprise\": 1,\n  ");
  CHECK_THROWS_AS(parse_script(with_extra), SchemaError);
}

TEST_CASE("parse_script rejects non-contiguous shot indices") {
  std::string text = serialize_script(sample_script());
  std::string broken = text;
  size_t pos = broken.find("\"index\": 2");
  REQUIRE(pos != std::string::npos);
  broken.replace(pos, 10, "\"index\": 5");
  CHECK_THROWS_AS(parse_script(broken), SchemaError);
}

TEST_CASE("parse_script rejects dangling references") {
  SUBCASE("shot names an unknown character") {
    std::string text = serialize_script(sample_script());
    size_t pos = text.find("char-2");
    REQUIRE(pos != std::string::npos);
    // Replace the cast-list id so the shots point at a ghost.
    text.replace(pos, 6, "char-9");
    CHECK_THROWS_AS(parse_script(text), SchemaError);
  }
  SUBCASE("adjacency names an unused location") {
    Script script = sample_script();
    script.location_adjacency = {{"loc-pier", "loc-nowhere"}};
    CHECK_THROWS_AS(parse_script(serialize_script(script)), SchemaError);
  }
  SUBCASE("adjacency pair joins a location with itself") {
    std::string text = serialize_script(sample_script());
    size_t pos = text.find("\"loc-market\",");
    REQUIRE(pos != std::string::npos);
    std::string broken = text;
    broken.replace(pos, 13, "\"loc-pier\",");
    CHECK_THROWS_AS(parse_script(broken), SchemaError);
  }
}

TEST_CASE("malformed text reports line and column") {
  try {
    parse_script("{\n  \"title\": }");
    FAIL("expected SyntaxError");
  } catch (const SyntaxError& e) {
    CHECK(e.line() == 2);
    CHECK(e.column() > 0);
  }
}

TEST_CASE("single-byte mutations never break the parser invariants") {
  std::string text = serialize_script(sample_script());
  util::Rng rng(2024);
  const std::string alphabet = "{}[]\",:0123456789abcxyz \n";
  int parsed_ok = 0;
  for (int trial = 0; trial < 400; ++trial) {
    std::string mutated = text;
    size_t pos = static_cast<size_t>(rng.next_int(0, static_cast<int>(text.size()) - 1));
    mutated[pos] = alphabet[static_cast<size_t>(
        rng.next_int(0, static_cast<int>(alphabet.size()) - 1))];
    try {
      Script script = parse_script(mutated);
      // Accepted documents must round-trip through the canonical form.
      CHECK(parse_script(serialize_script(script)) == script);
      ++parsed_ok;
    } catch (const SyntaxError&) {
    } catch (const SchemaError&) {
    }
  }
  // Some mutations are harmless (e.g. inside free text), so a few must pass.
  CHECK(parsed_ok > 0);
}

TEST_CASE("validate_prompt rejects degenerate requests") {
  CHECK_NOTHROW(validate_prompt({"a story", 3, 5.0}));
  CHECK_THROWS_AS(validate_prompt({"", 3, 5.0}), ConfigError);
  CHECK_THROWS_AS(validate_prompt({"a story", 0, 5.0}), ConfigError);
  CHECK_THROWS_AS(validate_prompt({"a story", 3, 0.0}), ConfigError);
}

TEST_CASE("validate_feedback enforces the approval contract") {
  Feedback ok;
  ok.reviewer_id = "structure-reviewer";
  ok.approve = true;
  CHECK_NOTHROW(validate_feedback(ok));

  Feedback contradictory = ok;
  contradictory.findings.push_back({"STR-1", 2, "same location"});
  CHECK_THROWS_AS(validate_feedback(contradictory), SchemaError);

  Feedback out_of_range;
  out_of_range.reviewer_id = "image-guide";
  out_of_range.scores["visual_quality"] = 1.2;
  CHECK_THROWS_AS(validate_feedback(out_of_range), SchemaError);
}

TEST_CASE("validate_prompt_spec pins the i2v attachment rule") {
  PromptSpec text_spec{"text", "write a script", {}, {}};
  CHECK_NOTHROW(validate_prompt_spec(text_spec));

  PromptSpec empty{"text", "", {}, {}};
  CHECK_THROWS_AS(validate_prompt_spec(empty), SchemaError);

  AssetRef image = make_ref("img", "image", "keyframes/shot-1.ppm", std::nullopt);
  PromptSpec i2v{"i2v", "animate", {image}, {}};
  CHECK_NOTHROW(validate_prompt_spec(i2v));

  PromptSpec i2v_bare{"i2v", "animate", {}, {}};
  CHECK_THROWS_AS(validate_prompt_spec(i2v_bare), SchemaError);

  PromptSpec i2v_double{"i2v", "animate", {image, image}, {}};
  CHECK_THROWS_AS(validate_prompt_spec(i2v_double), SchemaError);
}

TEST_CASE("shot designs round-trip and expose elements by name") {
  ShotDesign design;
  design.shot_index = 1;
  design.background = "a stone pier under fog";
  design.character_pose = "leaning on the rail";
  design.character_action = "turns toward the light";
  design.prop_description = "a brass spyglass";
  design.camera_position = "low three-quarter view";
  design.camera_movement = "slow push in";
  design.lighting_design = "cold dawn with a warm lamp";

  CHECK(shot_design_elements().size() == 7);
  for (const std::string& element : shot_design_elements()) {
    CHECK_FALSE(get_design_element(design, element).empty());
  }
  ShotDesign edited = design;
  set_design_element(edited, "prop_description", "a coiled rope");
  CHECK(get_design_element(edited, "prop_description") == "a coiled rope");

  std::string text = serialize_shot_designs({design, edited});
  std::vector<ShotDesign> parsed = parse_shot_designs(text);
  REQUIRE(parsed.size() == 2);
  CHECK(parsed[0] == design);
  CHECK(parsed[1] == edited);
  CHECK(serialize_shot_designs(parsed) == text);
}

TEST_CASE("voice plans round-trip") {
  VoicePlan plan;
  plan.background_music_id = "mx-ambient-01";
  plan.per_shot = {{1, "voice-a", "calm"}, {2, "voice-b", "tense"}};
  VoicePlan parsed = parse_voice_plan(serialize_voice_plan(plan));
  CHECK(parsed == plan);
  CHECK_THROWS_AS(parse_voice_plan("{}"), SchemaError);
}

TEST_CASE("asset lists round-trip") {
  std::vector<AssetRef> refs = {
      make_ref("a", "image", "keyframes/shot-1.ppm", std::nullopt),
      make_ref("b", "video", "clips/shot-1.clip", 5.0),
  };
  std::vector<AssetRef> parsed = parse_asset_list(serialize_asset_list(refs));
  REQUIRE(parsed.size() == 2);
  CHECK(parsed[0] == refs[0]);
  CHECK(parsed[1] == refs[1]);
}

TEST_CASE("story outputs round-trip and validate against the script") {
  Script script = sample_script();
  StoryOutput output;
  double offset = 0.0;
  for (int i = 1; i <= 3; ++i) {
    AssetRef clip = make_ref("clip" + std::to_string(i), "video",
                             "clips/shot-" + std::to_string(i) + ".clip", 5.0);
    AssetRef audio = make_ref("audio" + std::to_string(i), "audio",
                              "audio/shot-" + std::to_string(i) + ".wav", 2.0);
    output.pairs.push_back({clip, audio});
    output.timeline.push_back({i, offset, clip.id, audio.id});
    offset += 5.0;
  }
  StoryOutput parsed = parse_story_output(serialize_story_output(output));
  CHECK(serialize_story_output(parsed) == serialize_story_output(output));
  CHECK(validate_story_output(output, script, 0.25).empty());

  SUBCASE("pair count mismatch is reported") {
    StoryOutput short_output = output;
    short_output.pairs.pop_back();
    short_output.timeline.pop_back();
    auto violations = validate_story_output(short_output, script, 0.25);
    CHECK_FALSE(violations.empty());
  }
  SUBCASE("narration overrun is reported") {
    StoryOutput loud = output;
    loud.pairs[1].audio.duration_seconds = 5.6;
    auto violations = validate_story_output(loud, script, 0.25);
    REQUIRE(violations.size() == 1);
    CHECK(violations[0].find("pair 2") != std::string::npos);
  }
  SUBCASE("narration exactly at clip plus slack is allowed") {
    StoryOutput snug = output;
    snug.pairs[0].audio.duration_seconds = 5.25;
    CHECK(validate_story_output(snug, script, 0.25).empty());
  }
  SUBCASE("missing durations are reported") {
    StoryOutput bare = output;
    bare.pairs[0].clip.duration_seconds = std::nullopt;
    auto violations = validate_story_output(bare, script, 0.25);
    REQUIRE(violations.size() == 1);
    CHECK(violations[0].find("duration") != std::string::npos);
  }
  SUBCASE("non-increasing cue offsets are reported") {
    StoryOutput stalled = output;
    stalled.timeline[2].start_seconds = stalled.timeline[1].start_seconds;
    auto violations = validate_story_output(stalled, script, 0.25);
    CHECK_FALSE(violations.empty());
  }
  SUBCASE("wrong asset kinds are reported") {
    StoryOutput swapped = output;
    swapped.pairs[0].clip.kind = "image";
    auto violations = validate_story_output(swapped, script, 0.25);
    CHECK_FALSE(violations.empty());
  }
}
