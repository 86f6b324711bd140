#pragma once

#include <map>
#include <string>
#include <vector>

#include "stril/dataset.hpp"
#include "stril/imitation.hpp"
#include "stril/indicators.hpp"
#include "stril/pvrnn.hpp"

namespace stril {

// Flat key-value configuration ("section.key" -> text value). Loaded from a
// TOML-style file with [section] headers; every key can be overridden by a
// CLI flag of the same name.
using KvMap = std::map<std::string, std::string>;

KvMap parse_config_text(const std::string& text);
KvMap load_config_file(const std::string& path);
const std::vector<std::string>& known_config_keys();
// Canonical "key=value" lines in sorted order; hashed into the manifests.
std::string canonical_config_string(const KvMap& kv);

struct PipelineConfig {
  std::string game = "rps";
  int rps_rounds = 100;
  std::vector<std::string> roster;  // empty = default roster for the game
  int games_per_pair = 20;
  double label_fraction = 0.05;
  PVRNNConfig pvrnn;
  IndicatorConfig indicators;
  std::string filter_field = "el";
  double filter_p = 0.25;
  BCConfig bc;
  int eval_games = 500;
  std::uint64_t seed = 7;
  std::string out_dir = "out";

  std::string config_hash;  // sha256 of the canonical key-value text

  GameSpec game_spec() const;
  std::vector<PolicySpec> demonstrators() const;
};

// Validates the key set (unknown keys are named) and parses typed values.
PipelineConfig make_pipeline_config(const KvMap& kv);

// Stage entry points. Each reads its inputs from and writes its outputs to
// the configured output directory, plus a manifest recording the config
// hash, the seed, and the content hash of every input and output artifact.
void run_gen_data(const PipelineConfig& cfg);
void run_train_pvrnn(const PipelineConfig& cfg);
void run_indicators(const PipelineConfig& cfg);
void run_filter(const PipelineConfig& cfg);
void run_train_bc(const PipelineConfig& cfg, bool filtered);
void run_evaluate(const PipelineConfig& cfg);
bool run_verify_toy(const PipelineConfig& cfg);  // true when all checks pass
void run_plot(const PipelineConfig& cfg);
void run_pipeline(const PipelineConfig& cfg);

// Artifact names within the output directory.
namespace artifact {
inline constexpr const char* kDataset = "dataset.jsonl";
inline constexpr const char* kPvrnnCkpt = "pvrnn.ckpt";
inline constexpr const char* kPvrnnLoss = "pvrnn_loss.csv";
inline constexpr const char* kIndicators = "indicators.csv";
inline constexpr const char* kKeptIds = "kept_ids.txt";
inline constexpr const char* kBcFiltered = "bc_filtered.ckpt";
inline constexpr const char* kBcFilteredLoss = "bc_filtered_loss.csv";
inline constexpr const char* kBcUnfiltered = "bc_unfiltered.ckpt";
inline constexpr const char* kBcUnfilteredLoss = "bc_unfiltered_loss.csv";
inline constexpr const char* kEval = "eval.csv";
inline constexpr const char* kToyReport = "toy_report.csv";
}  // namespace artifact

std::uint64_t derive_seed(std::uint64_t seed, const std::string& tag);

}  // namespace stril
