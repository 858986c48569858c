// Command-line front end: gen-data, pretrain, adapt, eval, pipeline.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "cds/commands.hpp"

namespace {

void configure_logging() {
  auto logger = spdlog::stderr_color_mt("cds");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%H:%M:%S.%e] [%l] %v");
  const char* env = std::getenv("CDS_LOG");
  const std::string level = env ? env : "info";
  if (level == "error") {
    spdlog::set_level(spdlog::level::err);
  } else if (level == "debug") {
    spdlog::set_level(spdlog::level::debug);
  } else {
    spdlog::set_level(spdlog::level::info);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cross-domain self-supervised pre-training and few-label domain adaptation"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed_override;
  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "Experiment JSON")->required();
    cmd->add_option("--out", out_dir, "Output directory (overrides output_dir)");
    cmd->add_option("--seed-override", seed_override, "Replace every seed in the config");
  };
  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic two-domain dataset");
  auto* pre = app.add_subcommand("pretrain", "Stage 1: cross-domain self-supervised pre-training");
  auto* ada = app.add_subcommand("adapt", "Stage 2: classifier training with few source labels");
  auto* evl = app.add_subcommand("eval", "Feature-quality report for a model or feature CSVs");
  auto* pip = app.add_subcommand("pipeline", "All ablation arms over the seed list");
  for (auto* cmd : {gen, pre, ada, evl, pip}) add_common(cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // --help and --version exit 0; malformed command lines count as config errors.
    return app.exit(e) == 0 ? 0 : 2;
  }
  configure_logging();

  try {
    auto cfg = cds::load_config(config_path);
    if (seed_override) {
      cfg.apply_seed(*seed_override);
      cfg.seeds = {*seed_override};
    }
    const std::filesystem::path out = out_dir.empty() ? cfg.output_dir : std::filesystem::path(out_dir);
    if (gen->parsed()) cds::cli::cmd_gen_data(cfg, out);
    if (pre->parsed()) cds::cli::cmd_pretrain(cfg, out);
    if (ada->parsed()) cds::cli::cmd_adapt(cfg, out);
    if (evl->parsed()) cds::cli::cmd_eval(cfg, out);
    if (pip->parsed()) cds::cli::cmd_pipeline(cfg, out);
  } catch (const cds::Error& e) {
    spdlog::error("{}", e.what());
    return cds::cli::exit_code_for(e.code());
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 4;
  }
  return 0;
}
