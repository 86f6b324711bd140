#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "stril/dataset.hpp"
#include "stril/pvrnn.hpp"

namespace stril {

struct IndicatorRecord {
  std::string traj_id;
  double ri = 0.0;
  std::optional<double> el_delta;
  std::optional<double> el_estimate;
  std::optional<double> reward;
};

// Cumulative entropy of the trained decoder's action distribution along a
// teacher-forced pass of the trajectory. Deterministic: the latent noise
// stream is derived from the trajectory id.
double randomness_indicator(const ParamStore& params, const PVRNNConfig& cfg,
                            const TrainingSeq& seq, const Tensor& l);

// Mean of (-reward)^+ over labeled representations within Euclidean
// distance delta of target_l, divided by the count of neighbors with
// reward <= 0. Absent when no neighbor has reward <= 0.
struct LabeledPoint {
  std::vector<double> l;
  double reward = 0.0;
};

std::optional<double> el_delta(const std::vector<double>& target_l,
                               const std::vector<LabeledPoint>& labeled, double delta);

// Smallest delta (over a grid of pairwise distances) whose average labeled
// neighbor count reaches min_neighbors.
double auto_delta(const std::vector<std::vector<double>>& targets,
                  const std::vector<LabeledPoint>& labeled, int min_neighbors);

// Small feed-forward regressor from representation space to the exploited
// level, fit on the losing labeled trajectories.
struct ELEstimator {
  ParamStore params;
  int l_dim = 0;
};

struct ELEstimatorConfig {
  int hidden = 32;
  int steps = 500;
  double lr = 0.001;
  std::uint64_t seed = 0;
  int min_losing = 10;  // refuse to fit on fewer losing labels
};

ELEstimator train_el_estimator(const std::vector<LabeledPoint>& labeled,
                               const ELEstimatorConfig& cfg);
// Raw regressor output clamped at zero from below.
double estimate_el(const ELEstimator& estimator, const std::vector<double>& l);

// Keeps ids whose field value lies strictly below the empirical p-quantile
// (linear interpolation). p = 1 keeps everything; p = 0 keeps nothing.
enum class IndicatorField { kRi, kEl, kElDelta };
std::set<std::string> percentile_filter(const std::vector<IndicatorRecord>& records,
                                        IndicatorField field, double p);

IndicatorField parse_indicator_field(const std::string& name);

// Full indicator table for a dataset against a trained model.
struct IndicatorConfig {
  double delta = 0.0;      // 0 = derive via auto_delta
  int min_neighbors = 20;  // auto_delta target
  ELEstimatorConfig estimator;
  int min_losing_labeled = 10;
};

std::vector<IndicatorRecord> compute_indicators(const Dataset& dataset,
                                                const ParamStore& params,
                                                const PVRNNConfig& cfg,
                                                const RepTable& reps,
                                                const IndicatorConfig& icfg);

std::string indicators_csv(const std::vector<IndicatorRecord>& records);
std::vector<IndicatorRecord> parse_indicators_csv(const std::string& text);

}  // namespace stril
