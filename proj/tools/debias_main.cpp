// debias: corpus preparation, prompt tuning, evaluation, projection, reports.
//
// Exit codes: 0 ok, 1 unexpected failure, 2 config error, 3 empty corpus,
// 4 non-finite loss, 5 dataset parse failure, 6 insufficient occurrences.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "debias/config.hpp"
#include "debias/error.hpp"

namespace fs = std::filesystem;
using namespace debias;

int main(int argc, char** argv) {
  CLI::App app{"Prompt-tuned debiasing of a frozen text encoder"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::vector<std::string> overrides;
  app.add_option("--config", config_path, "key = value config file")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "root seed (overrides the config)");
  app.add_option("--out-dir", out_dir, "output directory (overrides the config)");
  app.add_option("--set", overrides, "extra key=value override, repeatable");

  auto* prepare = app.add_subcommand("prepare", "collect and filter corpus slices");
  std::optional<std::size_t> threshold;
  std::optional<bool> equalize;
  std::string cap;
  prepare->add_option("--reliability-threshold", threshold, "minimum sentences per bucket; 0 disables");
  prepare->add_flag("--equalize,!--no-equalize", equalize, "equalize bucket sizes across attributes");
  prepare->add_option("--cap", cap, "per-attribute sentence cap, or inf");

  auto* tune = app.add_subcommand("tune", "train the prompt");
  std::string resume;
  tune->add_option("--resume", resume, "checkpoint (.bin or .state) to resume from");

  auto* eval = app.add_subcommand("eval", "score SEAT, CrowS-Pairs and StereoSet");
  std::string eval_checkpoint;
  bool tuned = false;
  eval->add_option("--checkpoint", eval_checkpoint, "prompt checkpoint for every benchmark");
  eval->add_flag("--tuned", tuned, "early checkpoint for CrowS/StereoSet, final for SEAT");

  auto* project = app.add_subcommand("project", "2-D projection of word prototypes");
  std::vector<std::string> words;
  std::string project_checkpoint;
  project->add_option("--words", words, "words to project")->delimiter(',')->required();
  project->add_option("--checkpoint", project_checkpoint, "prompt checkpoint");

  auto* report = app.add_subcommand("report", "summarize every report into one CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  RunConfig config;
  try {
    KeyValueConfig kv = config_path.empty() ? KeyValueConfig() : KeyValueConfig::load(config_path);
    const fs::path cwd = fs::current_path();
    for (const auto& o : overrides) {
      const auto eq = o.find('=');
      if (eq == std::string::npos) throw InvalidConfig("--set expects key=value: " + o);
      kv.set(o.substr(0, eq), o.substr(eq + 1), cwd);
    }
    if (seed) kv.set("seed", std::to_string(*seed), cwd);
    if (!out_dir.empty()) kv.set("out_dir", out_dir, cwd);
    if (threshold) kv.set("prepare.reliability_threshold", std::to_string(*threshold), cwd);
    if (equalize) kv.set("prepare.equalize", *equalize ? "true" : "false", cwd);
    if (!cap.empty()) kv.set("prepare.cap", cap, cwd);
    config = RunConfig::from(kv);
  } catch (const Error& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  }

  auto opt_path = [](const std::string& s) {
    return s.empty() ? std::nullopt : std::optional<fs::path>(s);
  };
  if (*prepare) return cmd_prepare(config, std::cout, std::cerr);
  if (*tune) return cmd_tune(config, opt_path(resume), std::cout, std::cerr);
  if (*eval) {
    return cmd_eval(config, EvalTarget{opt_path(eval_checkpoint), tuned}, std::cout, std::cerr);
  }
  if (*project) return cmd_project(config, words, opt_path(project_checkpoint), std::cout, std::cerr);
  if (*report) return cmd_report(config, std::cout, std::cerr);
  return kExitFailure;
}
