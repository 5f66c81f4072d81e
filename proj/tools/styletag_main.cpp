// styletag: style transfer pipeline CLI. Subcommands mirror the
// pipeline stages; gen-toy emits a synthetic corpus so `all` can run
// without external data.

#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "styletag/kernels.hpp"
#include "styletag/pipeline.hpp"
#include "styletag/toy.hpp"

using namespace styletag;

int main(int argc, char** argv) {
  CLI::App app{"styletag: tag-based text style transfer pipeline"};
  app.require_subcommand(1);

  std::string config_path;
  std::string preset_override;
  std::string seed_override;
  bool json_output = false;

  const std::vector<std::string> stage_names = {
      "preprocess", "classify",        "markers",  "tagdata", "train-tagger",
      "train-generator", "transfer", "evaluate", "ablate",  "all"};

  std::vector<CLI::App*> stage_cmds;
  for (const auto& name : stage_names) {
    CLI::App* cmd = app.add_subcommand(name, "run the " + name + " stage");
    cmd->add_option("--config", config_path, "pipeline config file")->required();
    cmd->add_option("--seed", seed_override, "override the config seed");
    cmd->add_option("--preset", preset_override, "override the model preset (paper|desk)");
    cmd->add_flag("--json", json_output, "machine-readable stage summary on stdout");
    stage_cmds.push_back(cmd);
  }

  CLI::App* gen = app.add_subcommand("gen-toy", "write a synthetic style corpus");
  std::string toy_out = "toy";
  std::string toy_mode = "neutral";
  std::size_t toy_size = 2000;
  uint64_t toy_seed = 42;
  double toy_leak = 0.05, toy_summary = 0.05;
  gen->add_option("--out", toy_out, "output directory")->required();
  gen->add_option("--mode", toy_mode, "neutral or polar")
      ->check(CLI::IsMember({"neutral", "polar"}));
  gen->add_option("--size", toy_size, "sentences per style");
  gen->add_option("--seed", toy_seed, "generator seed");
  gen->add_option("--leak", toy_leak, "cross-style marker leak rate");
  gen->add_option("--summary-rate", toy_summary, "polar summary-clause rate");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      ToyConfig cfg;
      cfg.mode = toy_mode_from_name(toy_mode);
      cfg.size = toy_size;
      cfg.seed = toy_seed;
      cfg.leak_rate = toy_leak;
      cfg.summary_rate = toy_summary;
      write_toy_corpus(cfg, toy_out);
      std::fprintf(stderr, "wrote %s/style0.txt and style1.txt (%zu sentences each, %s)\n",
                   toy_out.c_str(), cfg.size, toy_mode.c_str());
      return 0;
    }

    for (std::size_t i = 0; i < stage_cmds.size(); ++i) {
      if (!stage_cmds[i]->parsed()) continue;
      RunConfig cfg = RunConfig::from_file(config_path);
      if (!preset_override.empty()) cfg.apply_preset(preset_override);
      if (!seed_override.empty()) cfg.seed = std::stoull(seed_override);
      Stage stage = stage_from_name(stage_names[i]);

      std::fprintf(stderr, "styletag %s: work_dir=%s preset=%s seed=%llu kernels=%s\n",
                   stage_names[i].c_str(), cfg.work_dir.c_str(), cfg.preset.c_str(),
                   static_cast<unsigned long long>(cfg.seed),
                   kernels::backend_name(kernels::active_backend()));
      run_pipeline(cfg, stage);

      if (stage == Stage::evaluate || stage == Stage::all) {
        std::string report = artifact_path(cfg, Stage::evaluate, json_output ? "report.json"
                                                                             : "report.txt");
        std::fputs(read_text_file(report).c_str(), stdout);
      } else if (stage == Stage::ablate) {
        std::fputs(read_text_file(artifact_path(cfg, Stage::ablate, "ablation.json")).c_str(),
                   stdout);
      } else if (json_output) {
        nlohmann::json j;
        j["stage"] = stage_names[i];
        j["status"] = "ok";
        std::fputs((j.dump() + "\n").c_str(), stdout);
      }
      return 0;
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
