#pragma once

#include <optional>
#include <vector>

#include "stril/rng.hpp"

namespace stril {

struct CategoricalStats {
  std::vector<double> probs;
  std::optional<double> nll;
  double entropy = 0.0;
};

double log_sum_exp(const std::vector<double>& x);
std::vector<double> softmax(const std::vector<double>& logits);

// Entropy of a probability vector with the 0*log(0) := 0 convention.
double entropy_of(const std::vector<double>& probs);

// probs = softmax(logits); nll = -log probs[target] (probabilities clamped
// at 1e-12 inside the log); entropy of the softmax distribution.
CategoricalStats categorical_stats(const std::vector<double>& logits,
                                   std::optional<int> target = std::nullopt);

// Exact KL(N(mu_q, diag sigma_q^2) || N(mu_p, diag sigma_p^2)).
double kl_diag_gaussian(const std::vector<double>& mu_q,
                        const std::vector<double>& sigma_q,
                        const std::vector<double>& mu_p,
                        const std::vector<double>& sigma_p);

struct ReparamSample {
  std::vector<double> sample;
  std::vector<double> noise;
};

// sample = mu + sigma * noise with noise ~ N(0, I).
ReparamSample gaussian_reparam(const std::vector<double>& mu,
                               const std::vector<double>& sigma, Rng& rng);

// Spearman rank correlation with midranks for ties.
double spearman(const std::vector<double>& a, const std::vector<double>& b);

// Empirical p-quantile with linear interpolation between order statistics.
double quantile(std::vector<double> values, double p);

// Percentile of each value within the list, midrank convention, in [0, 1].
std::vector<double> midrank_percentiles(const std::vector<double>& values);

}  // namespace stril
