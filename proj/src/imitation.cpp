#include "stril/imitation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>

#include "stril/autodiff.hpp"
#include "stril/stats.hpp"

namespace stril {

namespace {

ParamStore init_bc_params(int obs_dim, int action_count, const BCConfig& cfg, Rng rng) {
  ParamStore p;
  auto weight = [&](std::vector<int> shape, int fan_in) {
    return Tensor::uniform_init(std::move(shape), 1.0 / std::sqrt(double(fan_in)), rng);
  };
  p.emplace("l1/w", weight({cfg.hidden, obs_dim}, obs_dim));
  p.emplace("l1/b", Tensor::zeros({cfg.hidden}));
  p.emplace("l2/w", weight({cfg.hidden, cfg.hidden}, cfg.hidden));
  p.emplace("l2/b", Tensor::zeros({cfg.hidden}));
  p.emplace("out/w", weight({action_count, cfg.hidden}, cfg.hidden));
  p.emplace("out/b", Tensor::zeros({action_count}));
  return p;
}

// Plain batched forward pass used by evaluation; no gradients involved.
Tensor bc_forward_batch(const BCPolicy& policy, const Tensor& x) {
  const int batch = x.dim(0);
  const Tensor& w1 = policy.params.at("l1/w");
  const Tensor& b1 = policy.params.at("l1/b");
  const Tensor& w2 = policy.params.at("l2/w");
  const Tensor& b2 = policy.params.at("l2/b");
  const Tensor& w3 = policy.params.at("out/w");
  const Tensor& b3 = policy.params.at("out/b");
  const int h = w1.dim(0);
  const int a = w3.dim(0);
  Tensor h1({batch, h}), h2({batch, h}), out({batch, a});
  for (int bi = 0; bi < batch; ++bi) {
    for (int i = 0; i < h; ++i) {
      double s = b1[std::size_t(i)];
      for (int j = 0; j < policy.obs_dim; ++j) s += w1.at(i, j) * x.at(bi, j);
      h1.at(bi, i) = std::tanh(s);
    }
    for (int i = 0; i < h; ++i) {
      double s = b2[std::size_t(i)];
      const double* w2row = w2.data() + std::size_t(i) * std::size_t(h);
      const double* h1row = h1.data() + std::size_t(bi) * std::size_t(h);
      for (int j = 0; j < h; ++j) s += w2row[j] * h1row[j];
      h2.at(bi, i) = std::tanh(s);
    }
    for (int i = 0; i < a; ++i) {
      double s = b3[std::size_t(i)];
      const double* w3row = w3.data() + std::size_t(i) * std::size_t(h);
      const double* h2row = h2.data() + std::size_t(bi) * std::size_t(h);
      for (int j = 0; j < h; ++j) s += w3row[j] * h2row[j];
      out.at(bi, i) = s;
    }
  }
  return out;
}

}  // namespace

BCTrainResult bc_train(const std::vector<TrainingSeq>& data,
                       const std::set<std::string>& kept_ids, int obs_dim,
                       int action_count, const BCConfig& cfg) {
  if (kept_ids.empty()) throw std::invalid_argument("bc_train: kept set is empty");
  // flatten kept state-action pairs in dataset order
  std::vector<const std::vector<double>*> obs;
  std::vector<int> acts;
  for (const auto& seq : data) {
    if (kept_ids.count(seq.id) == 0) continue;
    for (std::size_t t = 0; t < seq.length(); ++t) {
      obs.push_back(&(*seq.observations)[t]);
      acts.push_back((*seq.actions)[t]);
    }
  }
  if (obs.empty()) throw std::invalid_argument("bc_train: kept ids match no data");

  Rng root(cfg.seed);
  BCTrainResult result;
  result.policy.obs_dim = obs_dim;
  result.policy.action_count = action_count;
  result.policy.params = init_bc_params(obs_dim, action_count, cfg, root.derive("init"));
  AdamState adam = AdamState::create(result.policy.params, cfg.lr);

  std::vector<std::size_t> order(obs.size());
  std::iota(order.begin(), order.end(), std::size_t(0));
  Tape tape;
  const int batch = std::min<std::size_t>(std::size_t(cfg.batch_size), obs.size());
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng = root.derive("shuffle", std::uint64_t(epoch));
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[std::size_t(shuffle_rng.uniform_int(int(i)))]);
    std::size_t cursor = 0;
    double epoch_loss = 0.0;
    for (int mb = 0; mb < cfg.minibatches; ++mb) {
      Tensor x({batch, obs_dim});
      std::vector<int> targets(static_cast<std::size_t>(batch));
      for (int bi = 0; bi < batch; ++bi) {
        if (cursor >= order.size()) cursor = 0;
        const std::size_t idx = order[cursor++];
        const auto& row = *obs[idx];
        for (int j = 0; j < obs_dim; ++j) x.at(bi, j) = row[std::size_t(j)];
        targets[std::size_t(bi)] = acts[idx];
      }
      tape.clear();
      std::map<std::string, Var> vars;
      for (const auto& [name, t] : result.policy.params)
        vars.emplace(name, tape.leaf(name, t));
      Var h1 = tape.tanh(tape.linear_batch(vars.at("l1/w"), vars.at("l1/b"), tape.constant(x)));
      Var h2 = tape.tanh(tape.linear_batch(vars.at("l2/w"), vars.at("l2/b"), h1));
      Var logits = tape.linear_batch(vars.at("out/w"), vars.at("out/b"), h2);
      Var loss = tape.categorical_nll_batch(logits, targets);
      epoch_loss += tape.scalar_value(loss);
      auto grads = tape.forward_backward(loss);
      adam_step(result.policy.params, grads, adam);
    }
    result.loss_history.push_back(epoch_loss / double(cfg.minibatches));
  }
  return result;
}

std::vector<double> bc_logits(const BCPolicy& policy, const std::vector<double>& obs) {
  if (int(obs.size()) != policy.obs_dim)
    throw std::invalid_argument("bc_logits: observation size mismatch");
  Tensor x({1, policy.obs_dim});
  for (int j = 0; j < policy.obs_dim; ++j) x.at(0, j) = obs[std::size_t(j)];
  const Tensor out = bc_forward_batch(policy, x);
  std::vector<double> logits(static_cast<std::size_t>(policy.action_count));
  for (int i = 0; i < policy.action_count; ++i) logits[std::size_t(i)] = out.at(0, i);
  return logits;
}

std::vector<double> bc_action_distribution(const BCPolicy& policy,
                                           const std::vector<double>& obs,
                                           const std::vector<int>& legal_mask) {
  auto probs = softmax(bc_logits(policy, obs));
  double mass = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (!legal_mask[i]) probs[i] = 0.0;
    mass += probs[i];
  }
  if (mass <= 0.0) {
    int n_legal = 0;
    for (int m : legal_mask) n_legal += m ? 1 : 0;
    for (std::size_t i = 0; i < probs.size(); ++i)
      probs[i] = legal_mask[i] ? 1.0 / n_legal : 0.0;
    return probs;
  }
  for (double& p : probs) p /= mass;
  return probs;
}

int bc_act(const BCPolicy& policy, const std::vector<double>& obs,
           const std::vector<int>& legal_mask, Rng& rng) {
  const auto dist = bc_action_distribution(policy, obs, legal_mask);
  const int action = rng.categorical(dist);
  if (!legal_mask[std::size_t(action)]) {
    for (std::size_t i = 0; i < dist.size(); ++i)
      if (legal_mask[i] && dist[i] > 0.0) return int(i);
  }
  return action;
}

namespace {

// All episodes against one opponent advance in lockstep so the policy's
// forward passes can be batched.
double rps_episode_score_batch(const BCPolicy& policy, const PolicySpec& opponent,
                               const GameSpec& spec, int n_games, Rng& rng) {
  const int t_max = spec.max_steps;
  std::vector<std::optional<int>> our_last(static_cast<std::size_t>(n_games));
  std::vector<std::optional<int>> opp_last(static_cast<std::size_t>(n_games));
  std::vector<double> reward_sum(std::size_t(n_games), 0.0);
  const std::vector<int> all_legal(3, 1);
  Rng policy_rng = rng.derive("policy");
  Rng opp_rng = rng.derive("opponent");
  Tensor x({n_games, 3});
  for (int t = 0; t < t_max; ++t) {
    for (int g = 0; g < n_games; ++g) {
      const auto obs = rps_observation(opp_last[std::size_t(g)]);
      for (int j = 0; j < 3; ++j) x.at(g, j) = obs[std::size_t(j)];
    }
    const Tensor logits = bc_forward_batch(policy, x);
    for (int g = 0; g < n_games; ++g) {
      std::vector<double> row{logits.at(g, 0), logits.at(g, 1), logits.at(g, 2)};
      const int ours = policy_rng.categorical(softmax(row));
      const auto opp_obs = rps_observation(our_last[std::size_t(g)]);
      const int theirs = act(opponent, spec, opp_obs, all_legal, opp_rng);
      reward_sum[std::size_t(g)] += rps_round_reward(ours, theirs);
      our_last[std::size_t(g)] = ours;
      opp_last[std::size_t(g)] = theirs;
    }
  }
  long wins = 0, losses = 0;
  for (double r : reward_sum) {
    if (r > 0.0) ++wins;
    else if (r < 0.0) ++losses;
  }
  return double(wins - losses) / double(n_games);
}

double c4_episode_score(const BCPolicy& policy, const PolicySpec& opponent,
                        const GameSpec& spec, int n_games, Rng& rng) {
  long wins = 0, losses = 0;
  const PolicyFn opp_fn = to_policy_fn(opponent, spec);
  for (int g = 0; g < n_games; ++g) {
    Rng ep = rng.derive("game", std::uint64_t(g));
    const PolicyFn ego_fn = [&policy](const std::vector<double>& obs,
                                      const std::vector<int>& mask, Rng& r) {
      return bc_act(policy, obs, mask, r);
    };
    const auto [ego, opp] = play_episode(spec, ego_fn, opp_fn, ep);
    if (*ego.reward > 0.0) ++wins;
    else if (*ego.reward < 0.0) ++losses;
  }
  return double(wins - losses) / double(n_games);
}

}  // namespace

EvalReport worst_score(const BCPolicy& policy, const std::vector<PolicySpec>& demonstrators,
                       const GameSpec& spec, int n_games, Rng& rng) {
  if (n_games < 1) throw std::invalid_argument("worst_score: n_games must be >= 1");
  if (demonstrators.empty())
    throw std::invalid_argument("worst_score: empty demonstrator roster");
  EvalReport report;
  report.n_games = n_games;
  report.worst_score = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < demonstrators.size(); ++j) {
    Rng orng = rng.derive("worst-score", std::uint64_t(j));
    double score = 0.0;
    if (spec.name == "rps") {
      score = rps_episode_score_batch(policy, demonstrators[j], spec, n_games, orng);
    } else {
      score = c4_episode_score(policy, demonstrators[j], spec, n_games, orng);
    }
    report.per_opponent[demonstrators[j].name] = score;
    report.worst_score = std::min(report.worst_score, score);
  }
  return report;
}

std::string eval_report_csv(const EvalReport& report) {
  std::ostringstream os;
  os << "opponent,score\n";
  char buf[64];
  for (const auto& [name, score] : report.per_opponent) {
    std::snprintf(buf, sizeof(buf), "%.6f", score);
    os << name << ',' << buf << '\n';
  }
  std::snprintf(buf, sizeof(buf), "%.6f", report.worst_score);
  os << "worst_score," << buf << '\n';
  return os.str();
}

}  // namespace stril
