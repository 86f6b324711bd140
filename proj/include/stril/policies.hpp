#pragma once

#include <string>
#include <vector>

#include "stril/games.hpp"

namespace stril {

// Scripted demonstrators of graded skill. Every policy exposes its exact
// per-state action distribution, which the entropy oracle and the sampling
// path share.
struct PolicySpec {
  enum class Kind { kUniform, kConstant, kMixed, kCounterLast, kEpsilonMinimax };

  Kind kind = Kind::kUniform;
  std::string name;
  int constant_action = 0;            // kConstant
  std::vector<double> mix;            // kMixed, on the simplex
  int depth = 1;                      // kEpsilonMinimax
  double epsilon = 0.0;               // kEpsilonMinimax / kCounterLast noise

  static PolicySpec uniform(std::string name = "uniform");
  static PolicySpec constant(int action, std::string name);
  static PolicySpec mixed(std::vector<double> probs, std::string name);
  // plays the counter of the opponent's previous action; with probability
  // epsilon it acts uniformly instead
  static PolicySpec counter_last(std::string name = "counterlast", double epsilon = 0.0);
  static PolicySpec epsilon_minimax(int depth, double epsilon, std::string name);
};

// Exact action distribution of the policy at one state. Probabilities are
// zero on illegal actions and sum to 1.
std::vector<double> action_distribution(const PolicySpec& policy, const GameSpec& spec,
                                        const std::vector<double>& obs,
                                        const std::vector<int>& legal_mask);

// Samples an action; always legal under the mask.
int act(const PolicySpec& policy, const GameSpec& spec, const std::vector<double>& obs,
        const std::vector<int>& legal_mask, Rng& rng);

PolicyFn to_policy_fn(const PolicySpec& policy, const GameSpec& spec);

// Depth-limited minimax value search for the board game, exposed for tests.
// Returns the preferred column (ties to the lowest index).
int c4_minimax_action(const C4State& state, int depth);

struct CrossEvalMatrix {
  std::vector<std::string> names;
  Tensor scores;  // N x N; scores[i][j] = mean normalized reward of i vs j
  int n_games = 0;
};

// Every ordered pair (including self-pairs) plays n_games episodes; entries
// are mean trajectory rewards of the row policy divided by the game's
// reward scale.
CrossEvalMatrix cross_evaluate(const std::vector<PolicySpec>& policies,
                               const GameSpec& spec, int n_games, Rng& rng);

std::string cross_eval_csv(const CrossEvalMatrix& m);

// Mean per-step action entropy over sampled trajectories, using the
// policy's exact per-state distribution. States are visited by playing
// against a uniform-random opponent.
double strategy_entropy(const PolicySpec& policy, const GameSpec& spec,
                        int n_trajectories, Rng& rng);

// Default demonstrator rosters used by the fixtures and the CLI.
std::vector<PolicySpec> default_roster(const GameSpec& spec);
// Parses "uniform", "counterlast", "constant:rock", "mixed:0.5,0.3,0.2",
// "minimax:2,0.3" and the named roster aliases.
PolicySpec parse_policy(const std::string& text, const GameSpec& spec);

}  // namespace stril
