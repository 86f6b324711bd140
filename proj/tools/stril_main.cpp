#include <CLI11.hpp>

#include <iostream>
#include <map>
#include <string>

#include "stril/pipeline.hpp"

namespace {

struct StageArgs {
  std::string config_path;
  std::map<std::string, std::string> overrides;
};

void add_config_options(CLI::App* cmd, StageArgs& args) {
  cmd->add_option("--config", args.config_path,
                  "configuration file ([section] headers, key = value lines)");
  for (const auto& key : stril::known_config_keys()) {
    cmd->add_option_function<std::string>(
        "--" + key,
        [&args, key](const std::string& value) { args.overrides[key] = value; },
        "override config key " + key);
  }
}

stril::PipelineConfig resolve_config(const StageArgs& args) {
  stril::KvMap kv;
  if (!args.config_path.empty()) kv = stril::load_config_file(args.config_path);
  for (const auto& [key, value] : args.overrides) kv[key] = value;  // flags win
  return stril::make_pipeline_config(kv);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"strategy-representation trajectory filtering pipeline"};
  app.require_subcommand(1);

  StageArgs args;
  bool bc_unfiltered = false;

  auto* gen = app.add_subcommand("gen-data", "generate the offline trajectory dataset");
  auto* train_pvrnn =
      app.add_subcommand("train-pvrnn", "learn per-trajectory strategy representations");
  auto* indicators =
      app.add_subcommand("indicators", "score every trajectory (randomness / exploited level)");
  auto* filter = app.add_subcommand("filter", "keep trajectories below the indicator percentile");
  auto* train_bc = app.add_subcommand("train-bc", "behavior-clone the kept trajectories");
  train_bc->add_flag("--unfiltered", bc_unfiltered, "train on the full dataset instead");
  auto* evaluate =
      app.add_subcommand("evaluate", "worst-case score of the cloned policies vs the roster");
  auto* verify_toy =
      app.add_subcommand("verify-toy", "numerical checks of the matrix-game exploited-level geometry");
  auto* plot = app.add_subcommand("plot", "PCA scatter plots of the learned representations");
  auto* pipeline = app.add_subcommand("pipeline", "run every stage in order");

  for (CLI::App* cmd : {gen, train_pvrnn, indicators, filter, train_bc, evaluate,
                        verify_toy, plot, pipeline})
    add_config_options(cmd, args);

  CLI11_PARSE(app, argc, argv);

  try {
    const stril::PipelineConfig cfg = resolve_config(args);
    if (gen->parsed()) stril::run_gen_data(cfg);
    else if (train_pvrnn->parsed()) stril::run_train_pvrnn(cfg);
    else if (indicators->parsed()) stril::run_indicators(cfg);
    else if (filter->parsed()) stril::run_filter(cfg);
    else if (train_bc->parsed()) stril::run_train_bc(cfg, !bc_unfiltered);
    else if (evaluate->parsed()) stril::run_evaluate(cfg);
    else if (verify_toy->parsed()) return stril::run_verify_toy(cfg) ? 0 : 1;
    else if (plot->parsed()) stril::run_plot(cfg);
    else if (pipeline->parsed()) stril::run_pipeline(cfg);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
