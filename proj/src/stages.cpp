#include "storypipe/stages.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <mutex>
#include <set>
#include <thread>

#include "storypipe/errors.hpp"
#include "storypipe/guidelines.hpp"
#include "storypipe/mock_world.hpp"
#include "storypipe/util.hpp"

namespace storypipe::stages {

using ojson = nlohmann::ordered_json;

namespace {

double json_number(const std::string& text) {
  ojson value = ojson::parse(text, nullptr, false);
  if (value.is_discarded() || !value.is_number()) {
    throw SchemaError("expected a numeric string, got '" + text + "'");
  }
  return value.get<double>();
}

std::string format_seconds(double value) {
  char buffer[32];
  std::snprintf(buffer, sizeof(buffer), "%.2f", value);
  return buffer;
}

std::string provider_for(const StageContext& ctx, const std::string& capability) {
  auto members = ctx.hub->pool(capability);
  if (members.empty()) {
    throw ConfigError("no provider configured for capability '" + capability + "'");
  }
  return members.front().id;
}

uint64_t call_seed(const StageContext& ctx, const providers::RequestContext& rc) {
  return util::derive_seed(ctx.cfg->seed, {"call", rc.key()});
}

GuidelineSet guide_for(const std::string& id) {
  if (id == "structure") return {"structure", {"STR-1", "STR-2", "STR-3"}};
  if (id == "content") return {"content", {"CON-1", "CON-2"}};
  if (id == "style") return {"style", {"STY-1", "STY-2", "STY-3", "STY-4"}};
  if (id == "shot") return {"shot", {"SHOT-1"}};
  if (id == "voice") return {"voice", {"VOI-1", "VOI-2"}};
  throw ConfigError("no guideline set named '" + id + "'");
}

providers::ExaminerEnv examiner_env(const StageContext& ctx, int n_expected) {
  providers::ExaminerEnv env;
  env.n_expected = n_expected;
  env.music_catalog.insert(ctx.cfg->music_catalog.begin(), ctx.cfg->music_catalog.end());
  env.emotion_vocab.insert(ctx.cfg->emotion_vocab.begin(), ctx.cfg->emotion_vocab.end());
  env.conjunction_markers = ctx.cfg->conjunction_markers;
  env.fine_detail_denylist = ctx.cfg->fine_detail_denylist;
  return env;
}

Feedback feedback_from_response(const ProviderResponse& response, std::string reviewer_id) {
  Feedback feedback;
  feedback.reviewer_id = std::move(reviewer_id);
  for (const auto& [key, value] : response.metadata) {
    if (key.rfind("score:", 0) == 0) feedback.scores[key.substr(6)] = json_number(value);
  }
  auto verdict = response.metadata.find("verdict");
  feedback.approve = verdict != response.metadata.end() && verdict->second == "approve";
  validate_feedback(feedback);
  return feedback;
}

// One reviewer agent. Offline it delegates to the guideline checks (the
// scenario can still script a verdict); against an http text provider the
// artifact is sent out and the verdict read back.
loop::Examiner rule_examiner(StageContext& ctx, std::string stage, std::string item,
                             GuidelineSet guide, providers::ExaminerEnv env) {
  return [&ctx, stage = std::move(stage), item = std::move(item), guide = std::move(guide),
          env = std::move(env)](const ProviderResponse& artifact, int iteration) {
    providers::RequestContext rc{stage, "examiner-" + guide.id, item, iteration, 0};
    const providers::ProviderDescriptor& text = ctx.hub->pool("text").front();
    if (text.backend == "http") {
      PromptSpec req;
      req.kind = "text";
      req.body = artifact.text;
      providers::stamp_context(req, rc);
      ProviderResponse response = ctx.hub->call(text.id, req, call_seed(ctx, rc));
      return feedback_from_response(response, guide.id + "-reviewer");
    }
    return providers::mock_examiner(ctx.hub->scenario(), rc, artifact, guide, env);
  };
}

loop::Examiner approve_all(std::string reviewer_id) {
  return [reviewer_id = std::move(reviewer_id)](const ProviderResponse&, int) {
    Feedback feedback;
    feedback.reviewer_id = reviewer_id;
    feedback.approve = true;
    return feedback;
  };
}

loop::Generator text_generator(StageContext& ctx, std::string stage, std::string item) {
  return [&ctx, stage = std::move(stage), item = std::move(item)](const PromptSpec& prompt,
                                                                  int iteration) {
    PromptSpec req = prompt;
    providers::RequestContext rc{stage, "generator", item, iteration, 0};
    providers::stamp_context(req, rc);
    return ctx.hub->call(provider_for(ctx, "text"), req, call_seed(ctx, rc));
  };
}

// Folds the round's findings and weak axes into the prompt as fix
// directives, then lets the text provider rewrite the body.
loop::Refiner fix_merging_refiner(StageContext& ctx, std::string stage, std::string item) {
  return [&ctx, stage = std::move(stage), item = std::move(item)](
             const PromptSpec& prompt, const std::vector<Feedback>& feedback, int iteration) {
    std::set<std::string> tokens;
    for (const Feedback& f : feedback) {
      for (const Finding& finding : f.findings) tokens.insert(finding.rule_id);
      for (const auto& [axis, value] : f.scores) {
        if (value < ctx.cfg->early_exit_threshold) tokens.insert(axis);
      }
    }
    std::vector<std::string> added(tokens.begin(), tokens.end());
    PromptSpec next = prompt;
    auto existing = prompt.metadata.find("fixes");
    next.metadata["fixes"] = mockworld::merge_fixes(
        existing == prompt.metadata.end() ? "" : existing->second, added);
    next.metadata["_feedback"] = util::join(added, ", ");

    PromptSpec req = next;
    req.kind = "text";
    providers::RequestContext rc{stage, "refiner", item, iteration, 0};
    providers::stamp_context(req, rc);
    ProviderResponse response = ctx.hub->call(provider_for(ctx, "text"), req, call_seed(ctx, rc));
    next.body = response.text;
    return next;
  };
}

// Scores every surviving pool candidate on the configured axes through the
// text provider's evaluator role.
loop::PoolEvaluator score_evaluator(StageContext& ctx, std::string stage, std::string item,
                                    std::vector<std::string> axes) {
  return [&ctx, stage = std::move(stage), item = std::move(item), axes = std::move(axes)](
             const std::vector<loop::CandidateRecord>& candidates, int iteration) {
    std::vector<Feedback> out;
    out.reserve(candidates.size());
    for (const loop::CandidateRecord& candidate : candidates) {
      providers::RequestContext rc{stage, "evaluator", item, iteration, candidate.pool_index};
      PromptSpec req;
      req.kind = "text";
      req.body = "Score this " + stage + " candidate on each axis.";
      req.metadata["_axes"] = util::join(axes, ",");
      auto quality = candidate.response.metadata.find("quality");
      if (quality != candidate.response.metadata.end()) {
        req.metadata["_quality"] = quality->second;
      }
      providers::stamp_context(req, rc);
      ProviderResponse response = ctx.hub->call(provider_for(ctx, "text"), req, call_seed(ctx, rc));
      out.push_back(feedback_from_response(response, stage + "-evaluator"));
    }
    return out;
  };
}

std::vector<loop::Generator> pool_generators(StageContext& ctx, const std::string& capability,
                                             std::string stage, std::string item) {
  std::vector<loop::Generator> generators;
  for (const providers::ProviderDescriptor& member : ctx.hub->pool(capability)) {
    int pool_index = static_cast<int>(generators.size());
    generators.push_back([&ctx, id = member.id, stage, item, pool_index](const PromptSpec& prompt,
                                                                         int iteration) {
      PromptSpec req = prompt;
      providers::RequestContext rc{stage, "generator", item, iteration, pool_index};
      providers::stamp_context(req, rc);
      return ctx.hub->call(id, req, call_seed(ctx, rc));
    });
  }
  return generators;
}

void put_doc(StageContext& ctx, const std::string& rel_path, std::string_view bytes) {
  std::string digest = ctx.store->put(rel_path, bytes);
  (*ctx.manifest)[rel_path] = digest;
}

void append_loop_warnings(StageContext& ctx, const std::string& label,
                          const loop::LoopTrace& trace) {
  for (const std::string& warning : trace.warnings) {
    ctx.warnings->push_back(label + ": " + warning);
  }
}

// Runs fn(0..count-1), possibly across worker threads. The first exception
// wins and is rethrown after every worker has stopped, so callers can
// commit results (or nothing) in deterministic item order.
template <typename Fn>
void for_each_item(int count, int width, Fn&& fn) {
  if (width <= 1 || count <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::mutex error_mutex;
  std::exception_ptr first_error;
  auto worker = [&]() {
    for (;;) {
      int i = next.fetch_add(1);
      if (i >= count) return;
      {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (first_error) return;
      }
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> workers;
  int threads = std::min(width, count);
  workers.reserve(threads);
  for (int t = 0; t < threads; ++t) workers.emplace_back(worker);
  for (std::thread& t : workers) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

std::vector<CharacterDef> shot_characters(const Script& script, const Shot& shot) {
  std::vector<CharacterDef> out;
  for (const std::string& id : shot.character_ids) {
    const CharacterDef* def = script.find_character(id);
    if (def != nullptr) out.push_back(*def);
  }
  return out;
}

void require_elements(const ShotDesign& design, const std::vector<std::string>& elements) {
  for (const std::string& element : elements) {
    if (util::trim(get_design_element(design, element)).empty()) {
      throw IncompleteDesign("shot " + std::to_string(design.shot_index) + ": element '" +
                             element + "' is empty");
    }
  }
}

// Stand-in for designs that reach the rendering stages with empty elements
// (possible when the shot reviewer is disabled). The stages prompt with
// placeholders and record a warning instead of failing the run, so the
// shortfall shows up in the compliance report.
ShotDesign fill_blank_elements(const ShotDesign& design) {
  ShotDesign filled = design;
  for (const std::string& element : shot_design_elements()) {
    if (util::trim(get_design_element(filled, element)).empty()) {
      set_design_element(filled, element, "unspecified");
    }
  }
  return filled;
}

std::string character_line(const std::vector<CharacterDef>& characters) {
  if (characters.empty()) return "None";
  std::vector<std::string> parts;
  parts.reserve(characters.size());
  for (const CharacterDef& c : characters) parts.push_back(c.name + " (" + c.appearance + ")");
  return util::join(parts, "; ");
}

}  // namespace

AssetRef put_artifact(StageContext& ctx, const std::string& rel_path, std::string_view bytes,
                      const std::string& kind, std::optional<double> duration) {
  std::string digest = ctx.store->put(rel_path, bytes);
  (*ctx.manifest)[rel_path] = digest;
  AssetRef ref;
  ref.id = digest;
  ref.kind = kind;
  ref.uri = rel_path;
  ref.duration_seconds = duration;
  return ref;
}

Script run_script_stage(const UserPrompt& prompt, StageContext& ctx) {
  validate_prompt(prompt);
  const config::RunConfig& cfg = *ctx.cfg;

  loop::LoopConfig lc;
  lc.max_iterations = cfg.budgets.script;
  lc.stage = "script";
  lc.loop_id = "script";
  lc.guideline_id = "script";
  lc.emit_best_on_exhaustion = cfg.on_budget_exhausted != "fail";

  providers::ExaminerEnv env = examiner_env(ctx, prompt.target_shot_count);
  std::vector<loop::Examiner> examiners;
  if (cfg.toggles.structure_reviewer) {
    examiners.push_back(rule_examiner(ctx, "script", "", guide_for("structure"), env));
  }
  if (cfg.toggles.content_reviewer) {
    examiners.push_back(rule_examiner(ctx, "script", "", guide_for("content"), env));
  }
  if (cfg.toggles.style_reviewer) {
    examiners.push_back(rule_examiner(ctx, "script", "", guide_for("style"), env));
    if (ctx.hub->pool("text").front().backend == "mock") {
      ctx.warnings->push_back(
          "script: STY-4 aesthetic check is provider-delegated and was skipped offline");
    }
  }
  if (examiners.empty()) examiners.push_back(approve_all("script-autopass"));

  PromptSpec p1;
  p1.kind = "text";
  p1.body = "Write a screenplay for: " + prompt.text + ". Plan " +
            std::to_string(prompt.target_shot_count) +
            " numbered shots with locations, characters, and subtitles.";

  loop::LoopTrace trace = loop::run_loop(text_generator(ctx, "script", ""), examiners,
                                         fix_merging_refiner(ctx, "script", ""), p1, lc);

  for (const loop::IterationRecord& record : trace.records) {
    put_doc(ctx, "script.v" + std::to_string(record.iteration) + ".json",
            record.candidates.front().response.text);
  }

  Script script = parse_script(trace.final.text);
  if (static_cast<int>(script.shots.size()) != prompt.target_shot_count) {
    throw StageFailure("script", "expected " + std::to_string(prompt.target_shot_count) +
                                     " shots, the final script has " +
                                     std::to_string(script.shots.size()));
  }
  put_doc(ctx, "script.final.json", serialize_script(script));
  put_doc(ctx, "traces/script/script.trace", trace.serialize());
  append_loop_warnings(ctx, "script", trace);
  return script;
}

std::vector<ShotDesign> run_shot_stage(const Script& script, StageContext& ctx) {
  const config::RunConfig& cfg = *ctx.cfg;
  int n = static_cast<int>(script.shots.size());
  if (n < 1) throw StageFailure("shot_design", "script has no shots");

  loop::LoopConfig lc;
  lc.max_iterations = cfg.budgets.shot;
  lc.stage = "shot_design";
  lc.loop_id = "shot_design";
  lc.guideline_id = "shot";
  lc.emit_best_on_exhaustion = cfg.on_budget_exhausted != "fail";

  providers::ExaminerEnv env = examiner_env(ctx, n);
  std::vector<loop::Examiner> examiners;
  if (cfg.toggles.shot_reviewer) {
    examiners.push_back(rule_examiner(ctx, "shot_design", "", guide_for("shot"), env));
  } else {
    examiners.push_back(approve_all("shot-autopass"));
  }

  PromptSpec p1;
  p1.kind = "text";
  p1.body = "Design the seven planning elements for each of the " + std::to_string(n) +
            " shots of '" + script.title + "'.";

  loop::LoopTrace trace = loop::run_loop(text_generator(ctx, "shot_design", ""), examiners,
                                         fix_merging_refiner(ctx, "shot_design", ""), p1, lc);

  std::vector<ShotDesign> designs = parse_shot_designs(trace.final.text);
  if (static_cast<int>(designs.size()) != n) {
    throw StageFailure("shot_design", "expected " + std::to_string(n) + " designs, got " +
                                          std::to_string(designs.size()));
  }
  for (int j = 0; j < n; ++j) {
    if (designs[j].shot_index != j + 1) {
      throw StageFailure("shot_design", "design " + std::to_string(j + 1) +
                                            " is labeled for shot " +
                                            std::to_string(designs[j].shot_index));
    }
  }
  put_doc(ctx, "designs/designs.json", serialize_shot_designs(designs));
  put_doc(ctx, "traces/shot_design/shot_design.trace", trace.serialize());
  append_loop_warnings(ctx, "shot_design", trace);
  return designs;
}

std::string serialize_character_assets(const std::map<std::string, CharacterAssets>& assets) {
  ojson doc;
  doc["schema_version"] = 1;
  doc["characters"] = ojson::object();
  auto asset_node = [](const AssetRef& ref) {
    ojson node;
    node["id"] = ref.id;
    node["kind"] = ref.kind;
    node["uri"] = ref.uri;
    if (ref.duration_seconds) node["duration_seconds"] = *ref.duration_seconds;
    return node;
  };
  for (const auto& [id, bundle] : assets) {
    ojson node;
    node["portrait"] = asset_node(bundle.portrait);
    node["turnaround"] = asset_node(bundle.turnaround);
    if (bundle.adapter) node["adapter"] = asset_node(*bundle.adapter);
    doc["characters"][id] = std::move(node);
  }
  return doc.dump(2) + "\n";
}

std::map<std::string, CharacterAssets> parse_character_assets(std::string_view text) {
  ojson doc = ojson::parse(text, nullptr, false);
  if (doc.is_discarded() || !doc.is_object() || !doc.contains("characters")) {
    throw SchemaError("character index is malformed");
  }
  auto asset_from = [](const ojson& node) {
    AssetRef ref;
    ref.id = node.at("id").get<std::string>();
    ref.kind = node.at("kind").get<std::string>();
    ref.uri = node.at("uri").get<std::string>();
    if (node.contains("duration_seconds")) {
      ref.duration_seconds = node["duration_seconds"].get<double>();
    }
    return ref;
  };
  std::map<std::string, CharacterAssets> out;
  for (auto it = doc["characters"].begin(); it != doc["characters"].end(); ++it) {
    CharacterAssets bundle;
    bundle.portrait = asset_from(it->at("portrait"));
    bundle.turnaround = asset_from(it->at("turnaround"));
    if (it->contains("adapter")) bundle.adapter = asset_from((*it)["adapter"]);
    out[it.key()] = std::move(bundle);
  }
  return out;
}

std::map<std::string, CharacterAssets> run_character_stage(const Script& script,
                                                           StageContext& ctx) {
  const config::RunConfig& cfg = *ctx.cfg;
  std::map<std::string, CharacterAssets> out;
  if (script.characters.empty()) {
    put_doc(ctx, "characters/index.json", serialize_character_assets(out));
    ctx.warnings->push_back("characters: script lists no characters; stage skipped");
    return out;
  }

  for (const CharacterDef& character : script.characters) {
    CharacterAssets bundle;

    // Portrait prompt from the text model.
    PromptSpec prompt_req;
    prompt_req.kind = "text";
    prompt_req.body = "Portrait prompt for " + character.name + ": " + character.appearance +
                      ", frontal, naturally posed, plain background.";
    providers::RequestContext prompt_rc{"characters", "generator", character.id, 1, 0};
    providers::stamp_context(prompt_req, prompt_rc);
    ProviderResponse prompt_resp =
        ctx.hub->call(provider_for(ctx, "text"), prompt_req, call_seed(ctx, prompt_rc));

    // Portrait via the t2i pool.
    loop::LoopConfig portrait_lc;
    portrait_lc.max_iterations = cfg.toggles.t2i_loop ? cfg.budgets.t2i : 1;
    portrait_lc.stage = "portraits[" + character.id + "]";
    portrait_lc.loop_id = character.id;
    portrait_lc.guideline_id = "image";
    portrait_lc.axes = guidelines::image_axes();
    portrait_lc.early_exit_threshold = cfg.early_exit_threshold;
    portrait_lc.emit_best_on_exhaustion = cfg.on_budget_exhausted != "fail";
    PromptSpec portrait_p1;
    portrait_p1.kind = "t2i";
    portrait_p1.body = prompt_resp.text;
    loop::LoopTrace portrait_trace = loop::run_pooled_loop(
        pool_generators(ctx, "t2i", "portraits", character.id),
        score_evaluator(ctx, "portraits", character.id, guidelines::image_axes()),
        fix_merging_refiner(ctx, "portraits", character.id), portrait_p1, portrait_lc);
    if (!portrait_trace.final.asset) {
      throw StageFailure("characters", character.id + ": no portrait image was produced");
    }
    bundle.portrait = put_artifact(ctx, "characters/" + character.id + "/portrait.ppm",
                                   portrait_trace.final.asset_bytes, "image");
    put_doc(ctx, "traces/portraits/" + character.id + ".trace", portrait_trace.serialize());
    append_loop_warnings(ctx, "portraits[" + character.id + "]", portrait_trace);

    // Turnaround clip via the i2v pool, animating the portrait.
    loop::LoopConfig turn_lc;
    turn_lc.max_iterations = cfg.toggles.i2v_loop ? cfg.budgets.i2v : 1;
    turn_lc.stage = "turnarounds[" + character.id + "]";
    turn_lc.loop_id = character.id;
    turn_lc.guideline_id = "video";
    turn_lc.axes = guidelines::video_axes();
    turn_lc.early_exit_threshold = cfg.early_exit_threshold;
    turn_lc.emit_best_on_exhaustion = cfg.on_budget_exhausted != "fail";
    PromptSpec turn_p1;
    turn_p1.kind = "i2v";
    turn_p1.body = "Turnaround of " + character.name +
                   ", slow full rotation, consistent identity, multiple view angles.";
    turn_p1.attachments.push_back(bundle.portrait);
    loop::LoopTrace turn_trace = loop::run_pooled_loop(
        pool_generators(ctx, "i2v", "turnarounds", character.id),
        score_evaluator(ctx, "turnarounds", character.id, guidelines::video_axes()),
        fix_merging_refiner(ctx, "turnarounds", character.id), turn_p1, turn_lc);
    if (!turn_trace.final.asset || !turn_trace.final.asset->duration_seconds) {
      throw StageFailure("characters", character.id + ": turnaround clip carries no duration");
    }
    double duration = *turn_trace.final.asset->duration_seconds;
    bundle.turnaround = put_artifact(ctx, "characters/" + character.id + "/turnaround.clip",
                                     turn_trace.final.asset_bytes, "video", duration);
    put_doc(ctx, "traces/turnarounds/" + character.id + ".trace", turn_trace.serialize());
    append_loop_warnings(ctx, "turnarounds[" + character.id + "]", turn_trace);

    // Multi-view frames sampled at a uniform stride, first and last always
    // included, with one caption per frame.
    int count = cfg.adapter_frame_count;
    std::vector<AssetRef> frames;
    std::vector<std::string> frame_payloads;
    std::vector<std::string> caption_lines;
    ojson frames_doc;
    frames_doc["schema_version"] = 1;
    frames_doc["frames"] = ojson::array();
    for (int k = 0; k < count; ++k) {
      double timestamp = duration * k / (count - 1);
      std::string bytes = mockworld::make_image_bytes(util::derive_seed(
          util::fnv1a64(bundle.turnaround.id), {"frame", std::to_string(k)}));
      AssetRef frame = put_artifact(
          ctx, "characters/" + character.id + "/frame-" + util::zero_pad(k + 1, 2) + ".ppm",
          bytes, "image");
      ojson node;
      node["index"] = k + 1;
      node["timestamp_seconds"] = timestamp;
      node["asset_id"] = frame.id;
      frames_doc["frames"].push_back(std::move(node));
      frames.push_back(std::move(frame));
      frame_payloads.push_back(std::move(bytes));
      caption_lines.push_back(mockworld::render_caption(
          cfg.caption_template, character.name, character.appearance,
          mockworld::view_angles()[k % mockworld::view_angles().size()]));
    }

    PromptSpec caption_req;
    caption_req.kind = "text";
    caption_req.body = util::join(caption_lines, "\n");
    providers::RequestContext caption_rc{"captions", "generator", character.id, 1, 0};
    providers::stamp_context(caption_req, caption_rc);
    ProviderResponse caption_resp =
        ctx.hub->call(provider_for(ctx, "text"), caption_req, call_seed(ctx, caption_rc));
    std::vector<std::string> captions;
    {
      std::string line;
      for (char c : caption_resp.text + "\n") {
        if (c == '\n') {
          if (!util::trim(line).empty()) captions.push_back(line);
          line.clear();
        } else {
          line += c;
        }
      }
    }
    if (static_cast<int>(captions.size()) != count) {
      throw StageFailure("characters", character.id + ": caption generator returned " +
                                           std::to_string(captions.size()) + " captions for " +
                                           std::to_string(count) + " frames");
    }
    frames_doc["captions"] = captions;
    put_doc(ctx, "characters/" + character.id + "/frames.json", frames_doc.dump(2) + "\n");

    if (cfg.train_adapters) {
      auto trainers = ctx.hub->pool("adapter-train");
      if (trainers.empty()) {
        throw ConfigError("train_adapters is on but no adapter-train provider is configured");
      }
      std::string payload;
      ctx.hub->train_adapter(trainers.front().id, frames, captions, frame_payloads,
                             util::derive_seed(cfg.seed, {"adapter", character.id}), &payload);
      bundle.adapter = put_artifact(ctx, "characters/" + character.id + "/adapter.json", payload,
                                    "model-adapter");
    }
    out[character.id] = std::move(bundle);
  }
  put_doc(ctx, "characters/index.json", serialize_character_assets(out));
  return out;
}

PromptSpec build_keyframe_prompt(const Shot& shot, const ShotDesign& design,
                                 const std::vector<CharacterDef>& characters) {
  require_elements(design, {"background", "character_pose", "prop_description", "camera_position",
                            "lighting_design"});
  PromptSpec prompt;
  prompt.kind = "t2i";
  prompt.body = "Character: " + character_line(characters) + "\n" +
                "Background: " + design.background + "\n" +
                "Character Pose: " + design.character_pose + "\n" +
                "Prop Description: " + design.prop_description + "\n" +
                "Camera Position: " + design.camera_position + "\n" +
                "Lighting Design: " + design.lighting_design + "\n";
  (void)shot;
  return prompt;
}

PromptSpec build_animation_prompt(const Shot& shot, const ShotDesign& design,
                                  const std::vector<CharacterDef>& characters,
                                  const AssetRef& keyframe) {
  require_elements(design, {"background", "character_action", "prop_description",
                            "camera_movement", "lighting_design"});
  if (keyframe.id.empty() || keyframe.kind != "image") {
    throw MissingKeyframe("shot " + std::to_string(shot.index) +
                          ": no keyframe image to animate");
  }
  PromptSpec prompt;
  prompt.kind = "i2v";
  prompt.body = "Character: " + character_line(characters) + "\n" +
                "Background: " + design.background + "\n" +
                "Character Action: " + design.character_action + "\n" +
                "Prop Description: " + design.prop_description + "\n" +
                "Camera Movement: " + design.camera_movement + "\n" +
                "Lighting Design: " + design.lighting_design + "\n";
  prompt.attachments.push_back(keyframe);
  return prompt;
}

std::vector<AssetRef> run_keyframe_stage(const Script& script,
                                         const std::vector<ShotDesign>& designs,
                                         const std::map<std::string, CharacterAssets>& characters,
                                         StageContext& ctx) {
  const config::RunConfig& cfg = *ctx.cfg;
  int n = static_cast<int>(script.shots.size());
  if (static_cast<int>(designs.size()) != n) {
    throw StageFailure("keyframes", "have " + std::to_string(designs.size()) + " designs for " +
                                        std::to_string(n) + " shots");
  }

  struct ItemResult {
    std::string bytes;
    std::string trace_json;
    std::vector<std::string> warnings;
  };
  std::vector<ItemResult> results(n);

  for_each_item(n, cfg.concurrency_width, [&](int idx) {
    const Shot& shot = script.shots[idx];
    std::string item = std::to_string(shot.index);
    PromptSpec p1;
    std::vector<std::string> early_warnings;
    try {
      p1 = build_keyframe_prompt(shot, designs[idx], shot_characters(script, shot));
    } catch (const IncompleteDesign& e) {
      p1 = build_keyframe_prompt(shot, fill_blank_elements(designs[idx]),
                                 shot_characters(script, shot));
      early_warnings.push_back("keyframes[" + item + "]: " + e.what() +
                               "; prompted with a placeholder");
    }
    std::vector<std::string> adapter_ids;
    for (const std::string& id : shot.character_ids) {
      auto it = characters.find(id);
      if (it != characters.end() && it->second.adapter) {
        adapter_ids.push_back(it->second.adapter->id);
      }
    }
    if (!adapter_ids.empty()) p1.metadata["adapters"] = util::join(adapter_ids, ",");

    loop::LoopConfig lc;
    lc.max_iterations = cfg.toggles.t2i_loop ? cfg.budgets.t2i : 1;
    lc.stage = "keyframes[" + item + "]";
    lc.loop_id = "shot-" + item;
    lc.guideline_id = "image";
    lc.axes = guidelines::image_axes();
    lc.early_exit_threshold = cfg.early_exit_threshold;
    lc.emit_best_on_exhaustion = cfg.on_budget_exhausted != "fail";

    loop::LoopTrace trace = loop::run_pooled_loop(
        pool_generators(ctx, "t2i", "keyframes", item),
        score_evaluator(ctx, "keyframes", item, guidelines::image_axes()),
        fix_merging_refiner(ctx, "keyframes", item), p1, lc);
    if (!trace.final.asset) {
      throw StageFailure("keyframes", "shot " + item + ": provider returned no image");
    }
    ItemResult result;
    result.warnings = std::move(early_warnings);
    result.bytes = trace.final.asset_bytes;
    result.trace_json = trace.serialize();
    for (const std::string& warning : trace.warnings) {
      result.warnings.push_back("keyframes[" + item + "]: " + warning);
    }
    results[idx] = std::move(result);
  });

  std::vector<AssetRef> refs;
  refs.reserve(n);
  for (int idx = 0; idx < n; ++idx) {
    std::string item = std::to_string(idx + 1);
    refs.push_back(put_artifact(ctx, "keyframes/shot-" + item + ".ppm", results[idx].bytes,
                                "image"));
    put_doc(ctx, "traces/keyframes/shot-" + item + ".trace", results[idx].trace_json);
    for (std::string& warning : results[idx].warnings) {
      ctx.warnings->push_back(std::move(warning));
    }
  }
  put_doc(ctx, "keyframes/index.json", serialize_asset_list(refs));
  return refs;
}

std::vector<AssetRef> run_animation_stage(const Script& script,
                                          const std::vector<ShotDesign>& designs,
                                          const std::vector<AssetRef>& keyframes,
                                          StageContext& ctx) {
  const config::RunConfig& cfg = *ctx.cfg;
  int n = static_cast<int>(script.shots.size());
  if (static_cast<int>(keyframes.size()) != n || static_cast<int>(designs.size()) != n) {
    throw StageFailure("clips", "designs/keyframes do not cover all " + std::to_string(n) +
                                    " shots");
  }

  struct ItemResult {
    std::string bytes;
    double duration = 0.0;
    std::string trace_json;
    std::vector<std::string> warnings;
  };
  std::vector<ItemResult> results(n);

  for_each_item(n, cfg.concurrency_width, [&](int idx) {
    const Shot& shot = script.shots[idx];
    std::string item = std::to_string(shot.index);
    PromptSpec p1;
    std::vector<std::string> early_warnings;
    try {
      p1 = build_animation_prompt(shot, designs[idx], shot_characters(script, shot),
                                  keyframes[idx]);
    } catch (const IncompleteDesign& e) {
      p1 = build_animation_prompt(shot, fill_blank_elements(designs[idx]),
                                  shot_characters(script, shot), keyframes[idx]);
      early_warnings.push_back("clips[" + item + "]: " + e.what() +
                               "; prompted with a placeholder");
    }

    loop::LoopConfig lc;
    lc.max_iterations = cfg.toggles.i2v_loop ? cfg.budgets.i2v : 1;
    lc.stage = "clips[" + item + "]";
    lc.loop_id = "shot-" + item;
    lc.guideline_id = "video";
    lc.axes = guidelines::video_axes();
    lc.early_exit_threshold = cfg.early_exit_threshold;
    lc.emit_best_on_exhaustion = cfg.on_budget_exhausted != "fail";

    loop::LoopTrace trace = loop::run_pooled_loop(
        pool_generators(ctx, "i2v", "clips", item),
        score_evaluator(ctx, "clips", item, guidelines::video_axes()),
        fix_merging_refiner(ctx, "clips", item), p1, lc);
    if (!trace.final.asset || !trace.final.asset->duration_seconds) {
      throw StageFailure("clips", "shot " + item + ": clip carries no duration");
    }
    ItemResult result;
    result.warnings = std::move(early_warnings);
    result.bytes = trace.final.asset_bytes;
    result.duration = *trace.final.asset->duration_seconds;
    result.trace_json = trace.serialize();
    for (const std::string& warning : trace.warnings) {
      result.warnings.push_back("clips[" + item + "]: " + warning);
    }
    results[idx] = std::move(result);
  });

  std::vector<AssetRef> refs;
  refs.reserve(n);
  for (int idx = 0; idx < n; ++idx) {
    std::string item = std::to_string(idx + 1);
    refs.push_back(put_artifact(ctx, "clips/shot-" + item + ".clip", results[idx].bytes, "video",
                                results[idx].duration));
    put_doc(ctx, "traces/clips/shot-" + item + ".trace", results[idx].trace_json);
    for (std::string& warning : results[idx].warnings) {
      ctx.warnings->push_back(std::move(warning));
    }
  }
  put_doc(ctx, "clips/index.json", serialize_asset_list(refs));
  return refs;
}

FitOutcome fit_subtitle(const std::string& subtitle, double clip_seconds, const std::string& item,
                        StageContext& ctx) {
  const config::RunConfig& cfg = *ctx.cfg;
  FitOutcome out;
  std::string current = subtitle;
  int refinements = 0;
  ojson attempts = ojson::array();

  for (;;) {
    double duration = 0.0;
    if (util::trim(current).empty()) {
      out.audio_bytes =
          mockworld::make_audio_bytes(util::derive_seed(cfg.seed, {"silence", item}), 0.0);
      AssetRef silent;
      silent.id = "sha256:" + util::sha256_hex(out.audio_bytes);
      silent.kind = "audio";
      silent.duration_seconds = 0.0;
      out.audio = silent;
    } else {
      PromptSpec req;
      req.kind = "t2a";
      req.body = current;
      providers::RequestContext rc{"audio_fit", "generator", item, refinements + 1, 0};
      providers::stamp_context(req, rc);
      ProviderResponse resp = ctx.hub->call(provider_for(ctx, "t2a"), req, call_seed(ctx, rc));
      if (!resp.asset || !resp.asset->duration_seconds) {
        throw StageFailure("audio", "shot " + item + ": synthesizer returned no duration");
      }
      duration = *resp.asset->duration_seconds;
      out.audio_bytes = resp.asset_bytes;
      out.audio = *resp.asset;
    }
    bool fits = duration <= clip_seconds + cfg.slack_seconds + 1e-9;
    ojson attempt;
    attempt["subtitle"] = current;
    attempt["duration_seconds"] = duration;
    attempt["fits"] = fits;
    attempts.push_back(std::move(attempt));
    out.final_subtitle = current;
    out.fits = fits;
    if (fits) break;

    bool may_refine = cfg.toggles.subtitle_refiner && refinements < cfg.budgets.subtitle;
    if (!may_refine) {
      if (cfg.on_budget_exhausted == "fail") {
        throw FitFailure("shot " + item + ": narration " + format_seconds(duration) +
                         " s exceeds clip " + format_seconds(clip_seconds) + " s + slack after " +
                         std::to_string(refinements) + " refinements");
      }
      break;
    }

    PromptSpec refine_req;
    refine_req.kind = "text";
    refine_req.body = current;
    refine_req.metadata["_clip_seconds"] = ojson(clip_seconds).dump();
    providers::RequestContext rc{"audio_fit", "refiner", item, refinements + 1, 0};
    providers::stamp_context(refine_req, rc);
    ProviderResponse refined =
        ctx.hub->call(provider_for(ctx, "text"), refine_req, call_seed(ctx, rc));
    current = refined.text;
    refinements += 1;
  }

  out.refinements = refinements;
  ojson doc;
  doc["schema_version"] = 1;
  doc["item"] = item;
  doc["attempts"] = std::move(attempts);
  doc["refinements"] = refinements;
  doc["fits"] = out.fits;
  out.trace_json = doc.dump(2) + "\n";
  return out;
}

AudioStageResult run_audio_stage(const Script& script, const std::vector<AssetRef>& clips,
                                 StageContext& ctx) {
  const config::RunConfig& cfg = *ctx.cfg;
  int n = static_cast<int>(script.shots.size());
  if (static_cast<int>(clips.size()) != n) {
    throw StageFailure("audio", "have " + std::to_string(clips.size()) + " clips for " +
                                    std::to_string(n) + " shots");
  }
  for (const AssetRef& clip : clips) {
    if (!clip.duration_seconds) {
      throw StageFailure("audio", "clip " + clip.uri + " carries no duration");
    }
  }

  loop::LoopConfig lc;
  lc.max_iterations = cfg.budgets.voice;
  lc.stage = "voice";
  lc.loop_id = "voice";
  lc.guideline_id = "voice";
  lc.emit_best_on_exhaustion = cfg.on_budget_exhausted != "fail";

  providers::ExaminerEnv env = examiner_env(ctx, n);
  std::vector<loop::Examiner> examiners;
  if (cfg.toggles.voice_reviewer) {
    examiners.push_back(rule_examiner(ctx, "voice", "", guide_for("voice"), env));
  } else {
    examiners.push_back(approve_all("voice-autopass"));
  }

  PromptSpec p1;
  p1.kind = "text";
  p1.body = "Configure background music and per-shot voices for '" + script.title + "'.";

  loop::LoopTrace voice_trace = loop::run_loop(text_generator(ctx, "voice", ""), examiners,
                                               fix_merging_refiner(ctx, "voice", ""), p1, lc);
  AudioStageResult result;
  result.plan = parse_voice_plan(voice_trace.final.text);
  if (static_cast<int>(result.plan.per_shot.size()) != n) {
    throw StageFailure("audio", "voice plan covers " +
                                    std::to_string(result.plan.per_shot.size()) + " of " +
                                    std::to_string(n) + " shots");
  }
  for (int j = 0; j < n; ++j) {
    if (result.plan.per_shot[j].shot_index != j + 1) {
      throw StageFailure("audio", "voice cue " + std::to_string(j + 1) + " is labeled for shot " +
                                      std::to_string(result.plan.per_shot[j].shot_index));
    }
  }
  put_doc(ctx, "audio/voice_plan.json", serialize_voice_plan(result.plan));
  put_doc(ctx, "traces/voice/voice.trace", voice_trace.serialize());
  append_loop_warnings(ctx, "voice", voice_trace);

  std::vector<FitOutcome> outcomes(n);
  for_each_item(n, cfg.concurrency_width, [&](int idx) {
    outcomes[idx] = fit_subtitle(script.shots[idx].subtitle, *clips[idx].duration_seconds,
                                 std::to_string(idx + 1), ctx);
  });

  double offset = 0.0;
  for (int idx = 0; idx < n; ++idx) {
    std::string item = std::to_string(idx + 1);
    AssetRef audio = put_artifact(ctx, "audio/shot-" + item + ".wav", outcomes[idx].audio_bytes,
                                  "audio", outcomes[idx].audio.duration_seconds);
    put_doc(ctx, "traces/audio_fit/shot-" + item + ".trace", outcomes[idx].trace_json);
    if (!outcomes[idx].fits) {
      ctx.warnings->push_back("audio_fit[" + item + "]: narration still exceeds the clip after " +
                              std::to_string(outcomes[idx].refinements) + " refinements");
    }
    result.audios.push_back(audio);
    StoryPair pair;
    pair.clip = clips[idx];
    pair.audio = audio;
    result.output.pairs.push_back(pair);
    TimelineCue cue;
    cue.shot_index = idx + 1;
    cue.start_seconds = offset;
    cue.clip_asset_id = clips[idx].id;
    cue.audio_asset_id = audio.id;
    result.output.timeline.push_back(cue);
    offset += *clips[idx].duration_seconds;
  }

  std::vector<std::string> violations =
      validate_story_output(result.output, script, cfg.slack_seconds);
  if (!violations.empty()) {
    if (cfg.on_budget_exhausted == "fail") {
      throw StageFailure("audio", "output validation failed: " + util::join(violations, "; "));
    }
    for (const std::string& violation : violations) {
      ctx.warnings->push_back("audio: " + violation);
    }
  }
  put_doc(ctx, "timeline.json", serialize_story_output(result.output));
  return result;
}

}  // namespace storypipe::stages
