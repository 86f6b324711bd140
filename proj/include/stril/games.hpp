#pragma once

#include <array>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "stril/rng.hpp"
#include "stril/tensor.hpp"
#include "stril/trajectory.hpp"

namespace stril {

struct GameSpec {
  std::string name;
  int obs_dim = 0;
  int action_count = 0;
  int max_steps = 0;  // rounds for the repeated matrix game; plies for the board game
  // Largest attainable |trajectory reward|; normalizes cross-eval scores.
  double reward_scale = 1.0;
};

GameSpec rps_spec(int rounds = 100);
GameSpec connect4_spec();

// ---------------------------------------------------------------------------
// Repeated rock-paper-scissors. Each player observes the opponent's previous
// action as a one-hot vector (zeros on the first round).
// ---------------------------------------------------------------------------

inline constexpr int kRock = 0;
inline constexpr int kPaper = 1;
inline constexpr int kScissors = 2;

struct RPSState {
  std::optional<int> last_action_p1;
  std::optional<int> last_action_p2;
  int round = 0;
};

// Reward for player 1 of a single simultaneous round.
double rps_round_reward(int a1, int a2);
// Advances the state; returns player 1's reward. Throws past round T.
double rps_step(RPSState& state, int a1, int a2, int max_rounds);
std::vector<double> rps_observation(const std::optional<int>& opp_last_action);

// ---------------------------------------------------------------------------
// Connect Four on the standard 6x7 grid. Cells are 0 empty, 1/2 players.
// Observation is ego-normalized: 42 own-token cells then 42 opponent cells.
// ---------------------------------------------------------------------------

inline constexpr int kC4Rows = 6;
inline constexpr int kC4Cols = 7;

struct C4State {
  std::array<std::array<int, kC4Cols>, kC4Rows> grid{};  // row 0 = bottom
  int to_move = 1;
  std::optional<int> winner;  // set on win; unset on draw/terminal-by-fill
  int moves = 0;

  bool terminal() const { return winner.has_value() || moves == kC4Rows * kC4Cols; }
};

struct C4StepResult {
  bool terminal = false;
  double reward_mover = 0.0;
};

bool c4_column_legal(const C4State& state, int column);
std::vector<int> c4_legal_columns(const C4State& state);
// Drops the mover's token; detects wins and draws. Throws on a full column
// or a move after the game has ended.
C4StepResult c4_step(C4State& state, int column);
std::vector<double> c4_observation(const C4State& state, int player);
// Win scan restricted to lines through the last move; the test suite pins
// it against an exhaustive all-lines oracle.
bool c4_wins_at(const C4State& state, int row, int col, int player);

// ---------------------------------------------------------------------------
// Episode harness. Policies map (observation, legal mask) to an action.
// ---------------------------------------------------------------------------

using PolicyFn =
    std::function<int(const std::vector<double>& obs, const std::vector<int>& legal_mask, Rng& rng)>;

// Plays one episode and returns (ego trajectory, opponent trajectory).
// Trajectory rewards always sum to zero. For the board game the ego player
// moves first; each trajectory records only that player's decision points.
std::pair<Trajectory, Trajectory> play_episode(const GameSpec& spec,
                                               const PolicyFn& policy_ego,
                                               const PolicyFn& policy_opp, Rng& rng);

// ---------------------------------------------------------------------------
// Matrix-game analysis for symmetric zero-sum games.
// ---------------------------------------------------------------------------

struct MatrixGame {
  Tensor payoff;  // n x n, payoff[i][j] = row player's reward for (xi_i, xi_j)

  int size() const { return payoff.dim(0); }
};

MatrixGame rps_matrix();
bool is_antisymmetric(const MatrixGame& game, double tol = 1e-12);

// Expected reward of mixed strategy `sigma` against opponent mix `pi`.
double game_value(const MatrixGame& game, const std::vector<double>& sigma,
                  const std::vector<double>& pi);

struct BestResponse {
  int index = 0;
  double value = 0.0;
};

// Best pure response against `sigma` (argmax of payoff * sigma, ties to the
// lowest index). `sigma` must lie on the simplex.
BestResponse best_response(const MatrixGame& game, const std::vector<double>& sigma);
// Best-response value; >= 0 for antisymmetric games, 0 exactly at Nash.
double exploitability(const MatrixGame& game, const std::vector<double>& sigma);

void check_simplex(const std::vector<double>& sigma, double tol = 1e-9);

}  // namespace stril
