#pragma once

#include <optional>
#include <vector>

#include "stril/games.hpp"
#include "stril/indicators.hpp"

namespace stril {

// Numerical checks of the exploited-level geometry on small symmetric
// zero-sum matrix games: the conditional-loss estimator, the pyramid
// identity EL = E / (n + 1) under the single-exploiter condition, the
// mixture-exploitability inequality, and the near-Nash EL_delta bound.

// Uniform sampling on the standard (n-1)-simplex via exponential spacings.
class SimplexSampler {
 public:
  SimplexSampler(int dimension, Rng rng);
  std::vector<double> sample();

 private:
  int dimension_;
  Rng rng_;
};

struct MonteCarloEl {
  std::optional<double> value;  // absent when no losing samples were seen
  double standard_error = 0.0;
  long losing_samples = 0;
};

// Samples opponents uniformly on the simplex; averages (-r)^+ over the
// samples with r <= 0. The standard error is the conditional-sample
// standard deviation over sqrt(count).
MonteCarloEl monte_carlo_el(const MatrixGame& game, const std::vector<double>& sigma,
                            long n_samples, Rng rng);

struct IdentityCheck {
  bool precondition_ok = false;  // exactly one pure strategy exploits sigma
  double lhs = 0.0;              // Monte Carlo exploited level
  double rhs = 0.0;              // exploitability / (n + 1)
  double standard_error = 0.0;
  bool pass = false;
};

IdentityCheck check_el_identity(const MatrixGame& game, const std::vector<double>& sigma,
                                long n_samples, Rng rng);

struct Prop1Check {
  double expected_exploitability = 0.0;  // sum_i w_i E(pi_i)
  double mixture_exploitability = 0.0;   // E(sum_i w_i pi_i)
  bool pass = false;
};

// Verifies sum_i w_i E(pi_i) >= E(sum_i w_i pi_i) - 1e-9.
Prop1Check check_prop1(const MatrixGame& game,
                       const std::vector<std::vector<double>>& strategies,
                       const std::vector<double>& weights);

struct Prop2Params {
  double epsilon1 = 0.0;  // near-Nash slack, verified against the oracle
  double alpha = 1.0;     // representation Lipschitz constant
  double m_bound = 1.0;   // max pure-vs-mixed exploitation
  double delta = 0.1;
};

struct Prop2Check {
  bool precondition_ok = false;
  std::optional<double> el_delta_value;
  double bound = 0.0;  // epsilon1 + alpha * delta * M
  bool pass = false;
};

// Builds labeled samples whose representations are the strategies
// themselves (identity map), rewards drawn against uniform-simplex
// opponents, and checks EL_delta(near_nash) < epsilon1 + alpha*delta*M.
Prop2Check check_prop2(const MatrixGame& game, const std::vector<double>& near_nash_sigma,
                       const Prop2Params& params, long n_labeled, Rng rng);

// Random antisymmetric payoff matrix with entries in [-1, 1].
MatrixGame random_antisymmetric_game(int n, Rng& rng);

}  // namespace stril
