#include "stril/policies.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "stril/stats.hpp"

namespace stril {

PolicySpec PolicySpec::uniform(std::string name) {
  PolicySpec p;
  p.kind = Kind::kUniform;
  p.name = std::move(name);
  return p;
}

PolicySpec PolicySpec::constant(int action, std::string name) {
  PolicySpec p;
  p.kind = Kind::kConstant;
  p.constant_action = action;
  p.name = std::move(name);
  return p;
}

PolicySpec PolicySpec::mixed(std::vector<double> probs, std::string name) {
  check_simplex(probs);
  PolicySpec p;
  p.kind = Kind::kMixed;
  p.mix = std::move(probs);
  p.name = std::move(name);
  return p;
}

PolicySpec PolicySpec::counter_last(std::string name, double epsilon) {
  if (epsilon < 0.0 || epsilon > 1.0)
    throw std::invalid_argument("counter_last: epsilon outside [0, 1]");
  PolicySpec p;
  p.kind = Kind::kCounterLast;
  p.name = std::move(name);
  p.epsilon = epsilon;
  return p;
}

PolicySpec PolicySpec::epsilon_minimax(int depth, double epsilon, std::string name) {
  if (depth < 1) throw std::invalid_argument("epsilon_minimax: depth must be >= 1");
  if (epsilon < 0.0 || epsilon > 1.0)
    throw std::invalid_argument("epsilon_minimax: epsilon outside [0, 1]");
  PolicySpec p;
  p.kind = Kind::kEpsilonMinimax;
  p.depth = depth;
  p.epsilon = epsilon;
  p.name = std::move(name);
  return p;
}

namespace {

constexpr double kWinScore = 1e6;

C4State c4_state_from_observation(const std::vector<double>& obs) {
  if (int(obs.size()) != 2 * kC4Rows * kC4Cols)
    throw std::invalid_argument("c4 policy: unexpected observation size");
  C4State state;
  int own = 0, opp = 0;
  for (int r = 0; r < kC4Rows; ++r)
    for (int c = 0; c < kC4Cols; ++c) {
      const std::size_t idx = std::size_t(r * kC4Cols + c);
      if (obs[idx] > 0.5) {
        state.grid[std::size_t(r)][std::size_t(c)] = 1;
        ++own;
      } else if (obs[idx + std::size_t(kC4Rows * kC4Cols)] > 0.5) {
        state.grid[std::size_t(r)][std::size_t(c)] = 2;
        ++opp;
      }
    }
  state.to_move = 1;  // ego perspective: it is always our turn
  state.moves = own + opp;
  return state;
}

// (#own windows with 3 tokens + 1 empty) - (#opponent ditto)
double c4_heuristic(const C4State& state, int player) {
  static constexpr int kDirs[4][2] = {{0, 1}, {1, 0}, {1, 1}, {1, -1}};
  const int opp = 3 - player;
  int own_open = 0, opp_open = 0;
  for (int r = 0; r < kC4Rows; ++r)
    for (int c = 0; c < kC4Cols; ++c)
      for (const auto& d : kDirs) {
        const int er = r + 3 * d[0], ec = c + 3 * d[1];
        if (er < 0 || er >= kC4Rows || ec < 0 || ec >= kC4Cols) continue;
        int mine = 0, theirs = 0, empty = 0;
        for (int k = 0; k < 4; ++k) {
          const int cell = state.grid[std::size_t(r + k * d[0])][std::size_t(c + k * d[1])];
          if (cell == player) ++mine;
          else if (cell == opp) ++theirs;
          else ++empty;
        }
        if (mine == 3 && empty == 1) ++own_open;
        if (theirs == 3 && empty == 1) ++opp_open;
      }
  return double(own_open - opp_open);
}

double c4_minimax_value(const C4State& state, int depth, int ego, double alpha,
                        double beta) {
  if (state.winner.has_value())
    return *state.winner == ego ? kWinScore : -kWinScore;
  if (state.moves == kC4Rows * kC4Cols) return 0.0;
  if (depth == 0) return c4_heuristic(state, ego);
  const bool maximizing = state.to_move == ego;
  double best = maximizing ? -kWinScore * 2 : kWinScore * 2;
  for (int c = 0; c < kC4Cols; ++c) {
    if (!c4_column_legal(state, c)) continue;
    C4State child = state;
    c4_step(child, c);
    const double v = c4_minimax_value(child, depth - 1, ego, alpha, beta);
    if (maximizing) {
      best = std::max(best, v);
      alpha = std::max(alpha, v);
    } else {
      best = std::min(best, v);
      beta = std::min(beta, v);
    }
    if (beta <= alpha) break;
  }
  return best;
}

int counter_of(int action) { return (action + 1) % 3; }

int one_hot_index(const std::vector<double>& obs) {
  for (std::size_t i = 0; i < obs.size(); ++i)
    if (obs[i] > 0.5) return int(i);
  return -1;
}

std::vector<double> masked_uniform(const std::vector<int>& legal_mask) {
  std::vector<double> dist(legal_mask.size(), 0.0);
  int n_legal = 0;
  for (int m : legal_mask) n_legal += m ? 1 : 0;
  if (n_legal == 0) throw std::invalid_argument("policy: no legal action");
  for (std::size_t i = 0; i < legal_mask.size(); ++i)
    if (legal_mask[i]) dist[i] = 1.0 / n_legal;
  return dist;
}

std::vector<double> point_mass_on_legal(int action, const std::vector<int>& legal_mask) {
  std::vector<double> dist(legal_mask.size(), 0.0);
  if (action >= 0 && action < int(legal_mask.size()) && legal_mask[std::size_t(action)]) {
    dist[std::size_t(action)] = 1.0;
    return dist;
  }
  // preferred action unavailable: lowest-index legal fallback
  for (std::size_t i = 0; i < legal_mask.size(); ++i)
    if (legal_mask[i]) {
      dist[i] = 1.0;
      return dist;
    }
  throw std::invalid_argument("policy: no legal action");
}

}  // namespace

int c4_minimax_action(const C4State& state, int depth) {
  const int ego = state.to_move;
  int best_col = -1;
  double best_val = -kWinScore * 4;
  for (int c = 0; c < kC4Cols; ++c) {
    if (!c4_column_legal(state, c)) continue;
    C4State child = state;
    c4_step(child, c);
    const double v = c4_minimax_value(child, depth - 1, ego, -kWinScore * 4, kWinScore * 4);
    if (v > best_val) {
      best_val = v;
      best_col = c;
    }
  }
  if (best_col < 0) throw std::runtime_error("c4_minimax_action: no legal column");
  return best_col;
}

std::vector<double> action_distribution(const PolicySpec& policy, const GameSpec& spec,
                                        const std::vector<double>& obs,
                                        const std::vector<int>& legal_mask) {
  if (int(legal_mask.size()) != spec.action_count)
    throw std::invalid_argument("action_distribution: mask size mismatch");
  switch (policy.kind) {
    case PolicySpec::Kind::kUniform:
      return masked_uniform(legal_mask);
    case PolicySpec::Kind::kConstant:
      return point_mass_on_legal(policy.constant_action, legal_mask);
    case PolicySpec::Kind::kMixed: {
      if (int(policy.mix.size()) != spec.action_count)
        throw std::invalid_argument("mixed policy: weight count mismatch");
      std::vector<double> dist(policy.mix);
      double mass = 0.0;
      for (std::size_t i = 0; i < dist.size(); ++i) {
        if (!legal_mask[i]) dist[i] = 0.0;
        mass += dist[i];
      }
      if (mass <= 0.0) return masked_uniform(legal_mask);
      for (double& p : dist) p /= mass;
      return dist;
    }
    case PolicySpec::Kind::kCounterLast: {
      if (spec.action_count != 3)
        throw std::invalid_argument("counterlast policy requires a 3-action game");
      const int last = one_hot_index(obs);
      // opening move (no observation yet) is fixed so the epsilon = 0
      // policy stays fully deterministic
      const int action = last < 0 ? kRock : counter_of(last);
      auto dist = point_mass_on_legal(action, legal_mask);
      if (policy.epsilon > 0.0) {
        const auto noise = masked_uniform(legal_mask);
        for (std::size_t i = 0; i < dist.size(); ++i)
          dist[i] = (1.0 - policy.epsilon) * dist[i] + policy.epsilon * noise[i];
      }
      return dist;
    }
    case PolicySpec::Kind::kEpsilonMinimax: {
      if (spec.name != "connect4")
        throw std::invalid_argument("epsilon-minimax policy requires the board game");
      const C4State state = c4_state_from_observation(obs);
      const int best = c4_minimax_action(state, policy.depth);
      std::vector<double> dist = masked_uniform(legal_mask);
      for (double& p : dist) p *= policy.epsilon;
      dist[std::size_t(best)] += 1.0 - policy.epsilon;
      return dist;
    }
  }
  throw std::logic_error("action_distribution: unhandled policy kind");
}

int act(const PolicySpec& policy, const GameSpec& spec, const std::vector<double>& obs,
        const std::vector<int>& legal_mask, Rng& rng) {
  const auto dist = action_distribution(policy, spec, obs, legal_mask);
  const int action = rng.categorical(dist);
  if (!legal_mask[std::size_t(action)]) {
    for (std::size_t i = 0; i < dist.size(); ++i)
      if (legal_mask[i] && dist[i] > 0.0) return int(i);
  }
  return action;
}

PolicyFn to_policy_fn(const PolicySpec& policy, const GameSpec& spec) {
  return [policy, spec](const std::vector<double>& obs, const std::vector<int>& mask,
                        Rng& rng) { return act(policy, spec, obs, mask, rng); };
}

CrossEvalMatrix cross_evaluate(const std::vector<PolicySpec>& policies,
                               const GameSpec& spec, int n_games, Rng& rng) {
  if (policies.size() < 2)
    throw std::invalid_argument("cross_evaluate: need at least two policies");
  const int n = int(policies.size());
  CrossEvalMatrix m;
  m.scores = Tensor({n, n});
  m.n_games = n_games;
  for (const auto& p : policies) m.names.push_back(p.name);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const PolicyFn row = to_policy_fn(policies[std::size_t(i)], spec);
      const PolicyFn col = to_policy_fn(policies[std::size_t(j)], spec);
      double total = 0.0;
      for (int g = 0; g < n_games; ++g) {
        Rng ep = rng.derive(std::uint64_t(i * n + j), std::uint64_t(g));
        const auto [ego, opp] = play_episode(spec, row, col, ep);
        total += *ego.reward;
      }
      m.scores.at(i, j) = total / (n_games * spec.reward_scale);
    }
  }
  return m;
}

std::string cross_eval_csv(const CrossEvalMatrix& m) {
  std::ostringstream os;
  os << "policy";
  for (const auto& n : m.names) os << ',' << n;
  os << '\n';
  for (std::size_t i = 0; i < m.names.size(); ++i) {
    os << m.names[i];
    for (std::size_t j = 0; j < m.names.size(); ++j) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.6f", m.scores.at(int(i), int(j)));
      os << ',' << buf;
    }
    os << '\n';
  }
  return os.str();
}

double strategy_entropy(const PolicySpec& policy, const GameSpec& spec,
                        int n_trajectories, Rng& rng) {
  if (n_trajectories < 1)
    throw std::invalid_argument("strategy_entropy: need at least one trajectory");
  const PolicyFn self = to_policy_fn(policy, spec);
  const PolicyFn opp = to_policy_fn(PolicySpec::uniform("entropy-opponent"), spec);
  double total = 0.0;
  for (int t = 0; t < n_trajectories; ++t) {
    Rng ep = rng.derive("entropy", std::uint64_t(t));
    const auto [ego, other] = play_episode(spec, self, opp, ep);
    double traj_entropy = 0.0;
    for (std::size_t s = 0; s < ego.length(); ++s) {
      // recover the legal mask the policy saw at this decision point
      std::vector<int> mask(std::size_t(spec.action_count), 1);
      if (spec.name == "connect4") {
        const C4State st = c4_state_from_observation(ego.observations[s]);
        for (int c = 0; c < spec.action_count; ++c)
          mask[std::size_t(c)] = c4_column_legal(st, c) ? 1 : 0;
      }
      traj_entropy += entropy_of(action_distribution(policy, spec, ego.observations[s], mask));
    }
    total += traj_entropy / double(ego.length());
  }
  return total / double(n_trajectories);
}

std::vector<PolicySpec> default_roster(const GameSpec& spec) {
  if (spec.name == "rps") {
    return {
        PolicySpec::uniform("uniform"),
        PolicySpec::mixed({0.0, 2.0 / 3.0, 1.0 / 3.0}, "paperlean"),
        PolicySpec::mixed({0.75, 0.125, 0.125}, "rockbias"),
        PolicySpec::counter_last("counterlast"),
        PolicySpec::counter_last("noisycounter", 0.2),
    };
  }
  if (spec.name == "connect4") {
    return {
        PolicySpec::uniform("uniform"),
        PolicySpec::epsilon_minimax(1, 0.5, "minimax1e50"),
        PolicySpec::epsilon_minimax(2, 0.3, "minimax2e30"),
        PolicySpec::epsilon_minimax(3, 0.1, "minimax3e10"),
        PolicySpec::epsilon_minimax(4, 0.02, "minimax4e02"),
    };
  }
  throw std::invalid_argument("default_roster: unknown game '" + spec.name + "'");
}

PolicySpec parse_policy(const std::string& text, const GameSpec& spec) {
  if (text == "uniform") return PolicySpec::uniform("uniform");
  if (text == "counterlast") return PolicySpec::counter_last("counterlast");
  if (text == "noisycounter") return PolicySpec::counter_last("noisycounter", 0.2);
  if (text == "paperlean") return PolicySpec::mixed({0.0, 2.0 / 3.0, 1.0 / 3.0}, "paperlean");
  if (text == "rockbias") return PolicySpec::mixed({0.75, 0.125, 0.125}, "rockbias");
  if (text == "rockheavy") return PolicySpec::mixed({0.97, 0.015, 0.015}, "rockheavy");
  if (text == "mix532") return PolicySpec::mixed({0.5, 0.3, 0.2}, "mix532");
  const auto colon = text.find(':');
  if (colon != std::string::npos) {
    const std::string head = text.substr(0, colon);
    const std::string args = text.substr(colon + 1);
    if (head == "constant") {
      int action = -1;
      if (args == "rock") action = kRock;
      else if (args == "paper") action = kPaper;
      else if (args == "scissors") action = kScissors;
      else action = std::stoi(args);
      return PolicySpec::constant(action, text);
    }
    if (head == "mixed") {
      std::vector<double> probs;
      std::istringstream is(args);
      std::string tok;
      while (std::getline(is, tok, ',')) probs.push_back(std::stod(tok));
      return PolicySpec::mixed(std::move(probs), text);
    }
    if (head == "counterlast") {
      return PolicySpec::counter_last(text, std::stod(args));
    }
    if (head == "minimax") {
      const auto comma = args.find(',');
      if (comma == std::string::npos)
        throw std::invalid_argument("parse_policy: minimax wants depth,epsilon");
      const int depth = std::stoi(args.substr(0, comma));
      const double eps = std::stod(args.substr(comma + 1));
      return PolicySpec::epsilon_minimax(depth, eps, text);
    }
  }
  (void)spec;
  throw std::invalid_argument("parse_policy: unknown policy '" + text + "'");
}

}  // namespace stril
