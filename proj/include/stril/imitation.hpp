#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "stril/dataset.hpp"
#include "stril/optim.hpp"
#include "stril/policies.hpp"

namespace stril {

// Feed-forward action policy trained by behavior cloning.
struct BCPolicy {
  ParamStore params;
  int obs_dim = 0;
  int action_count = 0;
};

struct BCConfig {
  int hidden = 256;        // two hidden layers of this width
  int epochs = 500;
  int minibatches = 50;    // updates per epoch
  int batch_size = 128;    // state-action pairs per update
  double lr = 0.0001;
  std::uint64_t seed = 0;
};

struct BCTrainResult {
  BCPolicy policy;
  std::vector<double> loss_history;  // per-epoch mean minibatch NLL
};

// Minimizes mean action NLL over the kept trajectories only. Minibatches
// cycle through a per-epoch shuffle of the kept state-action pairs, so
// keeping everything is bit-identical to training on the raw dataset.
BCTrainResult bc_train(const std::vector<TrainingSeq>& data,
                       const std::set<std::string>& kept_ids, int obs_dim,
                       int action_count, const BCConfig& cfg);

std::vector<double> bc_logits(const BCPolicy& policy, const std::vector<double>& obs);
// Sampled action with illegal entries masked out of the distribution.
int bc_act(const BCPolicy& policy, const std::vector<double>& obs,
           const std::vector<int>& legal_mask, Rng& rng);
std::vector<double> bc_action_distribution(const BCPolicy& policy,
                                           const std::vector<double>& obs,
                                           const std::vector<int>& legal_mask);

struct EvalReport {
  std::map<std::string, double> per_opponent;  // demo name -> mean episode score
  double worst_score = 0.0;
  int n_games = 0;
};

// Plays n_games episodes against each demonstrator. Episode score is
// (wins - losses) / games: the sign of the trajectory reward for the
// repeated matrix game, the terminal result for the board game. The worst
// score is the minimum over opponents.
EvalReport worst_score(const BCPolicy& policy, const std::vector<PolicySpec>& demonstrators,
                       const GameSpec& spec, int n_games, Rng& rng);

std::string eval_report_csv(const EvalReport& report);

}  // namespace stril
