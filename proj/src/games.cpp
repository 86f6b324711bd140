#include "stril/games.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace stril {

GameSpec rps_spec(int rounds) {
  if (rounds < 1) throw std::invalid_argument("rps_spec: rounds must be >= 1");
  GameSpec spec;
  spec.name = "rps";
  spec.obs_dim = 3;
  spec.action_count = 3;
  spec.max_steps = rounds;
  spec.reward_scale = double(rounds);
  return spec;
}

GameSpec connect4_spec() {
  GameSpec spec;
  spec.name = "connect4";
  spec.obs_dim = 2 * kC4Rows * kC4Cols;
  spec.action_count = kC4Cols;
  spec.max_steps = (kC4Rows * kC4Cols + 1) / 2;  // per-player decision points
  spec.reward_scale = 1.0;
  return spec;
}

double rps_round_reward(int a1, int a2) {
  if (a1 == a2) return 0.0;
  return ((a1 - a2 + 3) % 3 == 1) ? 1.0 : -1.0;
}

double rps_step(RPSState& state, int a1, int a2, int max_rounds) {
  if (state.round >= max_rounds)
    throw std::runtime_error("rps_step: episode already finished");
  if (a1 < 0 || a1 > 2 || a2 < 0 || a2 > 2)
    throw std::invalid_argument("rps_step: action out of range");
  state.last_action_p1 = a1;
  state.last_action_p2 = a2;
  state.round += 1;
  return rps_round_reward(a1, a2);
}

std::vector<double> rps_observation(const std::optional<int>& opp_last_action) {
  std::vector<double> obs(3, 0.0);
  if (opp_last_action.has_value()) obs[std::size_t(*opp_last_action)] = 1.0;
  return obs;
}

bool c4_column_legal(const C4State& state, int column) {
  return column >= 0 && column < kC4Cols &&
         state.grid[kC4Rows - 1][std::size_t(column)] == 0;
}

std::vector<int> c4_legal_columns(const C4State& state) {
  std::vector<int> cols;
  for (int c = 0; c < kC4Cols; ++c)
    if (c4_column_legal(state, c)) cols.push_back(c);
  return cols;
}

bool c4_wins_at(const C4State& state, int row, int col, int player) {
  static constexpr int kDirs[4][2] = {{0, 1}, {1, 0}, {1, 1}, {1, -1}};
  for (const auto& d : kDirs) {
    int count = 1;
    for (int sign : {1, -1}) {
      int r = row + sign * d[0], c = col + sign * d[1];
      while (r >= 0 && r < kC4Rows && c >= 0 && c < kC4Cols &&
             state.grid[std::size_t(r)][std::size_t(c)] == player) {
        ++count;
        r += sign * d[0];
        c += sign * d[1];
      }
    }
    if (count >= 4) return true;
  }
  return false;
}

C4StepResult c4_step(C4State& state, int column) {
  if (state.terminal()) throw std::runtime_error("c4_step: game already over");
  if (!c4_column_legal(state, column))
    throw std::invalid_argument("c4_step: column is full or out of range");
  int row = 0;
  while (state.grid[std::size_t(row)][std::size_t(column)] != 0) ++row;
  const int mover = state.to_move;
  state.grid[std::size_t(row)][std::size_t(column)] = mover;
  state.moves += 1;
  state.to_move = 3 - mover;
  C4StepResult result;
  if (c4_wins_at(state, row, column, mover)) {
    state.winner = mover;
    result.terminal = true;
    result.reward_mover = 1.0;
  } else if (state.moves == kC4Rows * kC4Cols) {
    result.terminal = true;
    result.reward_mover = 0.0;
  }
  return result;
}

std::vector<double> c4_observation(const C4State& state, int player) {
  std::vector<double> obs(std::size_t(2 * kC4Rows * kC4Cols), 0.0);
  const int opp = 3 - player;
  for (int r = 0; r < kC4Rows; ++r)
    for (int c = 0; c < kC4Cols; ++c) {
      const int cell = state.grid[std::size_t(r)][std::size_t(c)];
      const std::size_t idx = std::size_t(r * kC4Cols + c);
      if (cell == player) obs[idx] = 1.0;
      else if (cell == opp) obs[idx + std::size_t(kC4Rows * kC4Cols)] = 1.0;
    }
  return obs;
}

namespace {

std::pair<Trajectory, Trajectory> play_rps_episode(const GameSpec& spec,
                                                   const PolicyFn& policy_ego,
                                                   const PolicyFn& policy_opp,
                                                   Rng& rng) {
  Trajectory ego, opp;
  RPSState state;
  const std::vector<int> all_legal(3, 1);
  double reward_ego = 0.0;
  Rng rng_ego = rng.derive("p1");
  Rng rng_opp = rng.derive("p2");
  for (int t = 0; t < spec.max_steps; ++t) {
    const auto obs_ego = rps_observation(state.last_action_p2);
    const auto obs_opp = rps_observation(state.last_action_p1);
    const int a1 = policy_ego(obs_ego, all_legal, rng_ego);
    const int a2 = policy_opp(obs_opp, all_legal, rng_opp);
    if (a1 < 0 || a1 > 2)
      throw std::runtime_error("play_episode: ego emitted an illegal action");
    if (a2 < 0 || a2 > 2)
      throw std::runtime_error("play_episode: opponent emitted an illegal action");
    ego.observations.push_back(obs_ego);
    ego.actions.push_back(a1);
    opp.observations.push_back(obs_opp);
    opp.actions.push_back(a2);
    reward_ego += rps_step(state, a1, a2, spec.max_steps);
  }
  ego.reward = reward_ego;
  opp.reward = -reward_ego;
  return {std::move(ego), std::move(opp)};
}

std::pair<Trajectory, Trajectory> play_c4_episode(const PolicyFn& policy_ego,
                                                  const PolicyFn& policy_opp,
                                                  Rng& rng) {
  Trajectory ego, opp;
  C4State state;
  Rng rng_ego = rng.derive("p1");
  Rng rng_opp = rng.derive("p2");
  double reward_p1 = 0.0;
  while (!state.terminal()) {
    const int player = state.to_move;
    const bool is_ego = player == 1;
    const auto obs = c4_observation(state, player);
    std::vector<int> mask(kC4Cols, 0);
    for (int c : c4_legal_columns(state)) mask[std::size_t(c)] = 1;
    const int action =
        is_ego ? policy_ego(obs, mask, rng_ego) : policy_opp(obs, mask, rng_opp);
    if (action < 0 || action >= kC4Cols || mask[std::size_t(action)] == 0)
      throw std::runtime_error("play_episode: policy emitted an illegal column");
    Trajectory& traj = is_ego ? ego : opp;
    traj.observations.push_back(obs);
    traj.actions.push_back(action);
    const auto result = c4_step(state, action);
    if (result.terminal && result.reward_mover != 0.0)
      reward_p1 = is_ego ? result.reward_mover : -result.reward_mover;
  }
  ego.reward = reward_p1;
  opp.reward = -reward_p1;
  return {std::move(ego), std::move(opp)};
}

}  // namespace

std::pair<Trajectory, Trajectory> play_episode(const GameSpec& spec,
                                               const PolicyFn& policy_ego,
                                               const PolicyFn& policy_opp, Rng& rng) {
  if (spec.name == "rps") return play_rps_episode(spec, policy_ego, policy_opp, rng);
  if (spec.name == "connect4") return play_c4_episode(policy_ego, policy_opp, rng);
  throw std::invalid_argument("play_episode: unknown game '" + spec.name + "'");
}

MatrixGame rps_matrix() {
  Tensor payoff({3, 3});
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) payoff.at(i, j) = rps_round_reward(i, j);
  return MatrixGame{std::move(payoff)};
}

bool is_antisymmetric(const MatrixGame& game, double tol) {
  const int n = game.size();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (std::abs(game.payoff.at(i, j) + game.payoff.at(j, i)) > tol) return false;
  return true;
}

void check_simplex(const std::vector<double>& sigma, double tol) {
  double sum = 0.0;
  for (double p : sigma) {
    if (p < -tol) throw std::invalid_argument("strategy has a negative weight");
    sum += p;
  }
  if (std::abs(sum - 1.0) > tol)
    throw std::invalid_argument("strategy weights do not sum to 1");
}

double game_value(const MatrixGame& game, const std::vector<double>& sigma,
                  const std::vector<double>& pi) {
  const int n = game.size();
  if (int(sigma.size()) != n || int(pi.size()) != n)
    throw std::invalid_argument("game_value: strategy length mismatch");
  double v = 0.0;
  for (int i = 0; i < n; ++i) {
    if (sigma[std::size_t(i)] == 0.0) continue;
    double row = 0.0;
    for (int j = 0; j < n; ++j) row += game.payoff.at(i, j) * pi[std::size_t(j)];
    v += sigma[std::size_t(i)] * row;
  }
  return v;
}

BestResponse best_response(const MatrixGame& game, const std::vector<double>& sigma) {
  const int n = game.size();
  if (int(sigma.size()) != n)
    throw std::invalid_argument("best_response: strategy length mismatch");
  check_simplex(sigma);
  BestResponse br;
  br.value = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) {
    double v = 0.0;
    for (int j = 0; j < n; ++j) v += game.payoff.at(i, j) * sigma[std::size_t(j)];
    if (v > br.value) {
      br.value = v;
      br.index = i;
    }
  }
  return br;
}

double exploitability(const MatrixGame& game, const std::vector<double>& sigma) {
  return best_response(game, sigma).value;
}

}  // namespace stril
