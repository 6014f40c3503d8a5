#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <json.hpp>

#include <fcntl.h>
#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "storypipe/cli.hpp"
#include "storypipe/config.hpp"
#include "storypipe/orchestrator.hpp"
#include "storypipe/providers.hpp"
#include "storypipe/schema.hpp"
#include "storypipe/util.hpp"

using namespace storypipe;
namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

// Fresh directory under the system temp root, removed when the test ends.
struct ScratchDir {
  fs::path path;
  explicit ScratchDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~ScratchDir() { fs::remove_all(path); }
  fs::path operator/(const std::string& leaf) const { return path / leaf; }
};

// Redirects fd 1 into a file for the lifetime of one cli call; finish()
// restores the terminal and returns what the command printed.
struct CaptureStdout {
  int saved_fd = -1;
  fs::path file;
  explicit CaptureStdout(fs::path f) : file(std::move(f)) {
    std::cout.flush();
    std::fflush(stdout);
    saved_fd = ::dup(1);
    int fd = ::open(file.string().c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    ::dup2(fd, 1);
    ::close(fd);
  }
  std::string finish() {
    std::cout.flush();
    std::fflush(stdout);
    ::dup2(saved_fd, 1);
    ::close(saved_fd);
    saved_fd = -1;
    return util::read_file(file);
  }
  ~CaptureStdout() {
    if (saved_fd >= 0) finish();
  }
};

int run(std::vector<std::string> args) { return cli::run_cli(args); }

Script clean_script() {
  Script script;
  script.title = "Harbor Lights";
  script.characters = {{"char-1", "Mara", "a weathered ferry pilot", {}},
                       {"char-2", "Theo", "a young market vendor", {}}};
  Shot first;
  first.index = 1;
  first.character_ids = {"char-1"};
  first.location_id = "loc-harbor";
  first.content = "Mara unties the skiff at dawn.";
  first.subtitle = "Time to go.";
  Shot second;
  second.index = 2;
  second.character_ids = {"char-2"};
  second.location_id = "loc-market";
  second.content = "Theo waves from the stalls.";
  second.subtitle = "Safe travels out there.";
  script.shots = {first, second};
  return script;
}

}  // namespace

TEST_CASE("usage errors and help exit with the documented codes") {
  CHECK(run({"--help"}) == 0);
  CHECK(run({}) == 2);                            // a subcommand is required
  CHECK(run({"conjure"}) == 2);                   // unknown subcommand
  CHECK(run({"run", "--prompt", "x"}) == 2);      // --out is required
  CHECK(run({"lint"}) == 2);                      // script positional is required
  CHECK(run({"ablate", "--trials", "4"}) == 2);   // --disable is required
  CHECK(run({"run", "--prompt", "x", "--out", "d", "--backend", "carrier-pigeon"}) == 2);
}

TEST_CASE("run validates its inputs before any work") {
  ScratchDir dir("storypipe-cli-validate");
  std::string out = (dir / "run").string();
  // Exactly one prompt source.
  CHECK(run({"run", "--out", out}) == 2);
  util::write_file_atomic(dir / "premise.txt", "a story\n");
  CHECK(run({"run", "--prompt", "x", "--prompt-file", (dir / "premise.txt").string(), "--out",
             out}) == 2);
  // Referenced files must exist.
  CHECK(run({"run", "--prompt-file", (dir / "absent.txt").string(), "--out", out}) == 2);
  CHECK(run({"run", "--prompt", "x", "--config", (dir / "absent.json").string(), "--out", out}) ==
        2);
  CHECK(run({"run", "--prompt", "x", "--scenario", (dir / "absent.mock").string(), "--out",
             out}) == 2);
  // Toggle tokens are validated.
  CHECK(run({"run", "--prompt", "x", "--disable", "no-such-agent", "--out", out}) == 2);
  // Nothing above left a run behind.
  CHECK(!fs::exists(dir / "run"));
}

TEST_CASE("run, resume, and report chain over one directory") {
  ScratchDir dir("storypipe-cli-chain");
  std::string out = (dir / "run").string();

  CaptureStdout capture_run(dir / "run.out");
  REQUIRE(run({"run", "--prompt", "a diver befriends an octopus", "--shots", "2", "--seed", "9",
               "--out", out}) == 0);
  std::string run_text = capture_run.finish();
  CHECK(run_text.find("done") != std::string::npos);
  CHECK(run_text.find("script") != std::string::npos);
  CHECK(run_text.find("audio") != std::string::npos);

  // The seed override reached the run state.
  orchestrator::RunState state =
      orchestrator::RunState::parse(util::read_file(dir / "run/run.json"));
  CHECK(state.seed == 9);
  CHECK(state.target_shot_count == 2);

  // Rerunning over a used directory is refused; resume is the way back in.
  CHECK(run({"run", "--prompt", "a diver befriends an octopus", "--out", out}) == 2);
  CaptureStdout capture_resume(dir / "resume.out");
  CHECK(run({"resume", out, "--json"}) == 0);
  ojson resume_doc = ojson::parse(capture_resume.finish());
  CHECK(resume_doc["run_id"] == state.run_id);
  CHECK(resume_doc["cursor"] == "done");
  for (const std::string& name : orchestrator::stage_order()) {
    CHECK(resume_doc["stages"][name] == "complete");
  }

  CaptureStdout capture_report(dir / "report.out");
  CHECK(run({"report", out}) == 0);
  std::string report_text = capture_report.finish();
  CHECK(report_text.find("compliance") != std::string::npos);
  CHECK(report_text.find("shot_design") != std::string::npos);

  CaptureStdout capture_json(dir / "report-json.out");
  CHECK(run({"report", out, "--json"}) == 0);
  ojson report_doc = ojson::parse(capture_json.finish());
  CHECK(report_doc["run_id"] == state.run_id);
  CHECK(report_doc["compliance"]["audio_fit"]["rate"] == 100.0);

  CHECK(run({"resume", (dir / "nowhere").string()}) == 2);
  CHECK(run({"report", dir.path.string()}) == 2);  // no report.json here
}

TEST_CASE("resume enforces the config digest from the command line") {
  ScratchDir dir("storypipe-cli-digest");
  std::string out = (dir / "run").string();
  REQUIRE(run({"run", "--prompt", "a night train crosses the tundra", "--out", out}) == 0);

  config::RunConfig changed = config::RunConfig::defaults();
  changed.budgets.script = 3;
  util::write_file_atomic(dir / "run/config.json", changed.to_json());
  CHECK(run({"resume", out}) == 2);
  CHECK(run({"resume", out, "--allow-config-change"}) == 0);
}

TEST_CASE("pipeline failures exit one with the stage named") {
  ScratchDir dir("storypipe-cli-fail");
  config::RunConfig cfg = config::RunConfig::defaults();
  cfg.on_budget_exhausted = "fail";
  util::write_file_atomic(dir / "fail.json", cfg.to_json());
  providers::MockScenario scenario;
  scenario.subtitle_refiner_policy = "stubborn";
  scenario.defects.oversized_subtitle = 1.0;
  util::write_file_atomic(dir / "defects.mock", scenario.serialize());

  CHECK(run({"run", "--prompt", "an unfittable narration", "--config",
             (dir / "fail.json").string(), "--scenario", (dir / "defects.mock").string(), "--out",
             (dir / "run").string()}) == 1);
}

TEST_CASE("lint prints findings and writes the machine document") {
  ScratchDir dir("storypipe-cli-lint");

  SUBCASE("a clean script exits zero") {
    fs::path file = dir / "clean.json";
    util::write_file_atomic(file, serialize_script(clean_script()));
    CaptureStdout capture(dir / "lint.out");
    CHECK(run({"lint", file.string()}) == 0);
    CHECK(capture.finish().empty());
    ojson doc = ojson::parse(util::read_file(file.string() + ".lint.json"));
    CHECK(doc["script"] == file.string());
    CHECK(doc["findings"].empty());
  }
  SUBCASE("a structural finding names its shot") {
    Script script = clean_script();
    script.shots[1].location_id = script.shots[0].location_id;
    fs::path file = dir / "str1.json";
    util::write_file_atomic(file, serialize_script(script));
    CaptureStdout capture(dir / "lint.out");
    CHECK(run({"lint", file.string()}) == 1);
    std::string text = capture.finish();
    CHECK(text.find("STR-1 shot=2 ") == 0);
    ojson doc = ojson::parse(util::read_file(file.string() + ".lint.json"));
    REQUIRE(doc["findings"].size() == 1);
    CHECK(doc["findings"][0]["rule_id"] == "STR-1");
    CHECK(doc["findings"][0]["shot_index"] == 2);
  }
  SUBCASE("a run-level finding prints shot zero and stores null") {
    Script script = clean_script();
    script.title = "";
    fs::path file = dir / "sty1.json";
    util::write_file_atomic(file, serialize_script(script));
    CaptureStdout capture(dir / "lint.out");
    CHECK(run({"lint", file.string()}) == 1);
    CHECK(capture.finish().find("STY-1 shot=0 ") == 0);
    ojson doc = ojson::parse(util::read_file(file.string() + ".lint.json"));
    CHECK(doc["findings"][0]["shot_index"].is_null());
  }
  SUBCASE("malformed documents exit two") {
    fs::path file = dir / "broken.json";
    util::write_file_atomic(file, "only vaguely a script {");
    CHECK(run({"lint", file.string()}) == 2);
    CHECK(run({"lint", (dir / "absent.json").string()}) == 2);
  }
}

TEST_CASE("ablate reports the paired comparison and writes the file") {
  ScratchDir dir("storypipe-cli-ablate");
  providers::MockScenario defects;
  defects.defects.oversized_subtitle = 0.4;
  util::write_file_atomic(dir / "defects.mock", defects.serialize());

  CaptureStdout capture(dir / "ablate.out");
  CHECK(run({"ablate", "--disable", "subtitle_refiner", "--trials", "6", "--seed", "11",
             "--scenario", (dir / "defects.mock").string(), "--out",
             (dir / "out.json").string()}) == 0);
  std::string table = capture.finish();
  CHECK(table.find("family") != std::string::npos);
  CHECK(table.find("audio_fit") != std::string::npos);

  ojson doc = ojson::parse(util::read_file(dir / "out.json"));
  CHECK(doc["trials"] == 6);
  CHECK(doc["disabled"] == ojson::array({"subtitle_refiner"}));
  CHECK(!doc["families"].empty());

  CaptureStdout capture_json(dir / "ablate-json.out");
  CHECK(run({"ablate", "--disable", "t2i_loop", "--trials", "2", "--json"}) == 0);
  ojson json_doc = ojson::parse(capture_json.finish());
  CHECK(json_doc["trials"] == 2);
}
