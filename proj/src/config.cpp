#include "storypipe/config.hpp"

#include <json.hpp>

#include "storypipe/errors.hpp"
#include "storypipe/guidelines.hpp"
#include "storypipe/util.hpp"

namespace storypipe::config {

using ojson = nlohmann::ordered_json;

const std::vector<std::string>& toggle_tokens() {
  static const std::vector<std::string> tokens = {
      "structure_reviewer", "content_reviewer", "style_reviewer", "shot_reviewer",
      "voice_reviewer",     "subtitle_refiner", "t2i_loop",       "i2v_loop"};
  return tokens;
}

namespace {

bool* toggle_field(Toggles& toggles, std::string_view token) {
  if (token == "structure_reviewer") return &toggles.structure_reviewer;
  if (token == "content_reviewer") return &toggles.content_reviewer;
  if (token == "style_reviewer") return &toggles.style_reviewer;
  if (token == "shot_reviewer") return &toggles.shot_reviewer;
  if (token == "voice_reviewer") return &toggles.voice_reviewer;
  if (token == "subtitle_refiner") return &toggles.subtitle_refiner;
  if (token == "t2i_loop") return &toggles.t2i_loop;
  if (token == "i2v_loop") return &toggles.i2v_loop;
  return nullptr;
}

std::vector<providers::ProviderDescriptor> default_providers() {
  std::vector<providers::ProviderDescriptor> set;
  set.push_back({"mock-writer", "text", "mock", {}, 0});
  set.push_back({"mock-paint-a", "t2i", "mock", {}, 0});
  set.push_back({"mock-paint-b", "t2i", "mock", {}, 1});
  set.push_back({"mock-paint-c", "t2i", "mock", {}, 2});
  set.push_back({"mock-motion-a", "i2v", "mock", {}, 0});
  set.push_back({"mock-motion-b", "i2v", "mock", {}, 1});
  set.push_back({"mock-motion-c", "i2v", "mock", {}, 2});
  set.push_back({"mock-voice", "t2a", "mock", {}, 0});
  set.push_back({"mock-tuner", "adapter-train", "mock", {}, 0});
  return set;
}

}  // namespace

RunConfig RunConfig::defaults() {
  RunConfig cfg;
  cfg.music_catalog = {"mx-ambient-01", "mx-strings-02", "mx-piano-03", "mx-pulse-04"};
  cfg.emotion_vocab = {"calm", "tense", "joyful", "melancholy", "neutral"};
  guidelines::CheckConfig checks = guidelines::default_check_config();
  cfg.conjunction_markers = checks.conjunction_markers;
  cfg.fine_detail_denylist = checks.fine_detail_denylist;
  cfg.providers = default_providers();
  return cfg;
}

RunConfig RunConfig::from_json(std::string_view text) {
  ojson doc = ojson::parse(text, nullptr, false);
  if (doc.is_discarded()) throw ConfigError("config file is not valid JSON");
  if (!doc.is_object()) throw ConfigError("config document must be an object");
  RunConfig cfg = defaults();
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    const std::string& key = it.key();
    if (key == "schema_version") {
      if (!it->is_number_integer() || it->get<int>() != 1) {
        throw ConfigError("config has unsupported schema_version");
      }
    } else if (key == "seed") {
      cfg.seed = it->get<uint64_t>();
    } else if (key == "backend") {
      cfg.backend = it->get<std::string>();
    } else if (key == "budgets") {
      for (auto b = it->begin(); b != it->end(); ++b) {
        const std::string& name = b.key();
        int value = b->get<int>();
        if (name == "script") cfg.budgets.script = value;
        else if (name == "shot") cfg.budgets.shot = value;
        else if (name == "voice") cfg.budgets.voice = value;
        else if (name == "t2i") cfg.budgets.t2i = value;
        else if (name == "i2v") cfg.budgets.i2v = value;
        else if (name == "subtitle") cfg.budgets.subtitle = value;
        else throw ConfigError("unknown budget '" + name + "'");
      }
    } else if (key == "disable") {
      for (const auto& token : *it) cfg.disable(token.get<std::string>());
    } else if (key == "on_budget_exhausted") {
      cfg.on_budget_exhausted = it->get<std::string>();
    } else if (key == "early_exit_threshold") {
      cfg.early_exit_threshold = it->get<double>();
    } else if (key == "slack_seconds") {
      cfg.slack_seconds = it->get<double>();
    } else if (key == "speech_rate_wpm") {
      cfg.speech_rate_wpm = it->get<double>();
    } else if (key == "concurrency_width") {
      cfg.concurrency_width = it->get<int>();
    } else if (key == "train_adapters") {
      cfg.train_adapters = it->get<bool>();
    } else if (key == "adapter_frame_count") {
      cfg.adapter_frame_count = it->get<int>();
    } else if (key == "caption_template") {
      cfg.caption_template = it->get<std::string>();
    } else if (key == "music_catalog") {
      cfg.music_catalog = it->get<std::vector<std::string>>();
    } else if (key == "emotion_vocab") {
      cfg.emotion_vocab = it->get<std::vector<std::string>>();
    } else if (key == "conjunction_markers") {
      cfg.conjunction_markers = it->get<std::vector<std::string>>();
    } else if (key == "fine_detail_denylist") {
      cfg.fine_detail_denylist = it->get<std::vector<std::string>>();
    } else if (key == "providers") {
      cfg.providers.clear();
      for (const auto& node : *it) {
        providers::ProviderDescriptor d;
        for (auto f = node.begin(); f != node.end(); ++f) {
          const std::string& field = f.key();
          if (field == "id") d.id = f->get<std::string>();
          else if (field == "capability") d.capability = f->get<std::string>();
          else if (field == "backend") d.backend = f->get<std::string>();
          else if (field == "pool_order") d.pool_order = f->get<int>();
          else if (field == "config") {
            for (auto c = f->begin(); c != f->end(); ++c) d.config[c.key()] = c->get<std::string>();
          } else {
            throw ConfigError("provider block has unknown field '" + field + "'");
          }
        }
        cfg.providers.push_back(std::move(d));
      }
    } else {
      throw ConfigError("config document has unknown key '" + key + "'");
    }
  }
  cfg.validate();
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::error_code ec;
  if (!std::filesystem::exists(path, ec)) {
    throw ConfigError("config file not found: " + path.string());
  }
  return from_json(util::read_file(path));
}

std::string RunConfig::to_json() const {
  ojson doc;
  doc["schema_version"] = 1;
  doc["seed"] = seed;
  doc["backend"] = backend;
  ojson budgets_node;
  budgets_node["script"] = budgets.script;
  budgets_node["shot"] = budgets.shot;
  budgets_node["voice"] = budgets.voice;
  budgets_node["t2i"] = budgets.t2i;
  budgets_node["i2v"] = budgets.i2v;
  budgets_node["subtitle"] = budgets.subtitle;
  doc["budgets"] = std::move(budgets_node);
  ojson disabled = ojson::array();
  for (const std::string& token : toggle_tokens()) {
    if (!enabled(token)) disabled.push_back(token);
  }
  doc["disable"] = std::move(disabled);
  doc["on_budget_exhausted"] = on_budget_exhausted;
  doc["early_exit_threshold"] = early_exit_threshold;
  doc["slack_seconds"] = slack_seconds;
  doc["speech_rate_wpm"] = speech_rate_wpm;
  doc["concurrency_width"] = concurrency_width;
  doc["train_adapters"] = train_adapters;
  doc["adapter_frame_count"] = adapter_frame_count;
  doc["caption_template"] = caption_template;
  doc["music_catalog"] = music_catalog;
  doc["emotion_vocab"] = emotion_vocab;
  doc["conjunction_markers"] = conjunction_markers;
  doc["fine_detail_denylist"] = fine_detail_denylist;
  doc["providers"] = ojson::array();
  for (const auto& d : providers) {
    ojson node;
    node["id"] = d.id;
    node["capability"] = d.capability;
    node["backend"] = d.backend;
    node["pool_order"] = d.pool_order;
    if (!d.config.empty()) {
      ojson config_node = ojson::object();
      for (const auto& [k, v] : d.config) config_node[k] = v;
      node["config"] = std::move(config_node);
    }
    doc["providers"].push_back(std::move(node));
  }
  return doc.dump(2) + "\n";
}

std::string RunConfig::digest(std::string_view scenario_bytes) const {
  std::string folded = to_json();
  folded += "\x1e";
  folded += scenario_bytes;
  return "sha256:" + util::sha256_hex(folded);
}

void RunConfig::validate() const {
  if (backend != "mock" && backend != "http") {
    throw ConfigError("backend must be 'mock' or 'http', got '" + backend + "'");
  }
  if (on_budget_exhausted != "emit-best" && on_budget_exhausted != "fail") {
    throw ConfigError("on_budget_exhausted must be 'emit-best' or 'fail'");
  }
  auto positive = [](int value, const char* name) {
    if (value < 1) throw ConfigError(std::string("budget '") + name + "' must be at least 1");
  };
  positive(budgets.script, "script");
  positive(budgets.shot, "shot");
  positive(budgets.voice, "voice");
  positive(budgets.t2i, "t2i");
  positive(budgets.i2v, "i2v");
  if (budgets.subtitle < 0) throw ConfigError("budget 'subtitle' must be non-negative");
  if (early_exit_threshold <= 0.0 || early_exit_threshold > 1.0) {
    throw ConfigError("early_exit_threshold must lie in (0, 1]");
  }
  if (slack_seconds < 0.0) throw ConfigError("slack_seconds must be non-negative");
  if (speech_rate_wpm <= 0.0) throw ConfigError("speech_rate_wpm must be positive");
  if (concurrency_width < 1) throw ConfigError("concurrency_width must be at least 1");
  if (adapter_frame_count < 2) throw ConfigError("adapter_frame_count must be at least 2");
  if (music_catalog.empty()) throw ConfigError("music_catalog must list at least one track");
  if (emotion_vocab.empty()) throw ConfigError("emotion_vocab must list at least one emotion");
  for (const char* capability : {"text", "t2i", "i2v", "t2a"}) {
    bool found = false;
    for (const auto& d : providers) found = found || d.capability == capability;
    if (!found) throw ConfigError(std::string("no provider configured for capability '") +
                                  capability + "'");
  }
  for (const auto& d : providers) {
    if (d.id.empty()) throw ConfigError("provider id must be non-empty");
    if (d.backend != "mock" && d.backend != "http") {
      throw ConfigError("provider '" + d.id + "' has unknown backend '" + d.backend + "'");
    }
  }
}

void RunConfig::disable(std::string_view token) {
  bool* field = toggle_field(toggles, token);
  if (field == nullptr) {
    throw ConfigError("unknown agent token '" + std::string(token) + "'; valid tokens: " +
                      util::join(toggle_tokens(), ", "));
  }
  *field = false;
}

bool RunConfig::enabled(std::string_view token) const {
  bool* field = toggle_field(const_cast<Toggles&>(toggles), token);
  if (field == nullptr) {
    throw ConfigError("unknown agent token '" + std::string(token) + "'");
  }
  return *field;
}

}  // namespace storypipe::config
