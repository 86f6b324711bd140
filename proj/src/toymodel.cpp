#include "stril/toymodel.hpp"

#include <cmath>
#include <stdexcept>

namespace stril {

SimplexSampler::SimplexSampler(int dimension, Rng rng)
    : dimension_(dimension), rng_(rng) {
  if (dimension < 2) throw std::invalid_argument("SimplexSampler: dimension must be >= 2");
}

std::vector<double> SimplexSampler::sample() {
  std::vector<double> x(static_cast<std::size_t>(dimension_));
  double sum = 0.0;
  for (auto& v : x) {
    double u = rng_.uniform();
    while (u <= 0.0) u = rng_.uniform();
    v = -std::log(u);
    sum += v;
  }
  for (auto& v : x) v /= sum;
  return x;
}

MonteCarloEl monte_carlo_el(const MatrixGame& game, const std::vector<double>& sigma,
                            long n_samples, Rng rng) {
  if (n_samples < 1000)
    throw std::invalid_argument("monte_carlo_el: need at least 1000 samples");
  check_simplex(sigma);
  SimplexSampler sampler(game.size(), rng);
  double sum = 0.0, sum_sq = 0.0;
  long losing = 0;
  for (long i = 0; i < n_samples; ++i) {
    const auto pi = sampler.sample();
    const double r = game_value(game, sigma, pi);
    if (r <= 0.0) {
      const double x = -r > 0.0 ? -r : 0.0;
      sum += x;
      sum_sq += x * x;
      ++losing;
    }
  }
  MonteCarloEl out;
  out.losing_samples = losing;
  if (losing == 0) return out;
  const double mean = sum / double(losing);
  out.value = mean;
  if (losing > 1) {
    const double var = std::max(0.0, sum_sq / double(losing) - mean * mean);
    out.standard_error = std::sqrt(var / double(losing));
  }
  return out;
}

IdentityCheck check_el_identity(const MatrixGame& game, const std::vector<double>& sigma,
                                long n_samples, Rng rng) {
  IdentityCheck out;
  const int n = game.size();
  // single-exploiter condition: exactly one pure row beats sigma
  int exploiters = 0;
  for (int i = 0; i < n; ++i) {
    double r_i = 0.0;  // sigma's reward against pure strategy i
    for (int j = 0; j < n; ++j) r_i += sigma[std::size_t(j)] * game.payoff.at(j, i);
    if (r_i < 0.0) ++exploiters;
  }
  out.precondition_ok = exploiters == 1;
  if (!out.precondition_ok) return out;
  const auto mc = monte_carlo_el(game, sigma, n_samples, rng);
  if (!mc.value.has_value()) return out;
  out.lhs = *mc.value;
  out.standard_error = mc.standard_error;
  out.rhs = exploitability(game, sigma) / double(n + 1);
  out.pass = std::abs(out.lhs - out.rhs) < 3.0 * mc.standard_error;
  return out;
}

Prop1Check check_prop1(const MatrixGame& game,
                       const std::vector<std::vector<double>>& strategies,
                       const std::vector<double>& weights) {
  if (strategies.size() != weights.size() || strategies.empty())
    throw std::invalid_argument("check_prop1: strategies/weights mismatch");
  check_simplex(weights);
  Prop1Check out;
  std::vector<double> mixture(std::size_t(game.size()), 0.0);
  for (std::size_t k = 0; k < strategies.size(); ++k) {
    check_simplex(strategies[k]);
    out.expected_exploitability += weights[k] * exploitability(game, strategies[k]);
    for (std::size_t j = 0; j < mixture.size(); ++j)
      mixture[j] += weights[k] * strategies[k][j];
  }
  out.mixture_exploitability = exploitability(game, mixture);
  out.pass = out.expected_exploitability >= out.mixture_exploitability - 1e-9;
  return out;
}

Prop2Check check_prop2(const MatrixGame& game, const std::vector<double>& near_nash_sigma,
                       const Prop2Params& params, long n_labeled, Rng rng) {
  Prop2Check out;
  out.bound = params.epsilon1 + params.alpha * params.delta * params.m_bound;
  // the slack must genuinely cover the strategy's exploitability
  if (exploitability(game, near_nash_sigma) > params.epsilon1 + 1e-12) {
    out.precondition_ok = false;
    return out;
  }
  out.precondition_ok = true;
  // synthetic labeled set: representation = the strategy itself (identity
  // map), one uniform-simplex opponent per sample
  SimplexSampler strategies(game.size(), rng.derive("strategies"));
  SimplexSampler opponents(game.size(), rng.derive("opponents"));
  std::vector<LabeledPoint> labeled;
  labeled.reserve(std::size_t(n_labeled));
  for (long i = 0; i < n_labeled; ++i) {
    LabeledPoint p;
    p.l = strategies.sample();
    p.reward = game_value(game, p.l, opponents.sample());
    labeled.push_back(std::move(p));
  }
  out.el_delta_value = el_delta(near_nash_sigma, labeled, params.delta);
  out.pass = out.el_delta_value.has_value() && *out.el_delta_value < out.bound;
  return out;
}

MatrixGame random_antisymmetric_game(int n, Rng& rng) {
  if (n < 2) throw std::invalid_argument("random_antisymmetric_game: n must be >= 2");
  Tensor payoff({n, n});
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      const double v = rng.uniform(-1.0, 1.0);
      payoff.at(i, j) = v;
      payoff.at(j, i) = -v;
    }
  return MatrixGame{std::move(payoff)};
}

}  // namespace stril
