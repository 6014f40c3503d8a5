#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "storypipe/providers.hpp"

namespace storypipe::config {

// Per-loop iteration ceilings. The i2v budget of 1 means a single fan-out
// with no refinement round; the subtitle budget counts refinements, not
// synthesis attempts.
struct Budgets {
  int script = 4;
  int shot = 4;
  int voice = 4;
  int t2i = 2;
  int i2v = 1;
  int subtitle = 5;
};

// Every agent that can be switched off for an ablation arm. Disabling a
// reviewer drops it from its loop's examiner list; disabling a loop forces
// a single iteration with no refiner.
struct Toggles {
  bool structure_reviewer = true;
  bool content_reviewer = true;
  bool style_reviewer = true;
  bool shot_reviewer = true;
  bool voice_reviewer = true;
  bool subtitle_refiner = true;
  bool t2i_loop = true;
  bool i2v_loop = true;
};

// The valid tokens for --disable and ablation arms.
const std::vector<std::string>& toggle_tokens();

struct RunConfig {
  uint64_t seed = 1;
  std::string backend = "mock";  // mock | http
  Budgets budgets;
  Toggles toggles;
  std::string on_budget_exhausted = "emit-best";  // emit-best | fail
  double early_exit_threshold = 0.9;
  double slack_seconds = 0.25;
  double speech_rate_wpm = 150.0;
  int concurrency_width = 1;
  bool train_adapters = false;
  int adapter_frame_count = 8;
  std::string caption_template = "a photo of {name}, {appearance}, {view}";
  std::vector<std::string> music_catalog;
  std::vector<std::string> emotion_vocab;
  std::vector<std::string> conjunction_markers;
  std::vector<std::string> fine_detail_denylist;
  std::vector<providers::ProviderDescriptor> providers;

  // Ships the mock provider set (one text model, pools of three for t2i
  // and i2v, one speech synthesizer, one adapter trainer) and the default
  // catalogs.
  static RunConfig defaults();
  static RunConfig from_json(std::string_view text);
  static RunConfig load(const std::filesystem::path& path);
  std::string to_json() const;

  // Digest covering the config and the scenario bytes; resume refuses to
  // continue under a different digest unless explicitly allowed.
  std::string digest(std::string_view scenario_bytes) const;

  // Throws ConfigError on out-of-range knobs or a malformed provider set.
  void validate() const;

  // Applies one --disable token; throws ConfigError on unknown tokens.
  void disable(std::string_view token);
  bool enabled(std::string_view token) const;
};

}  // namespace storypipe::config
