#include "stril/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace stril {

double log_sum_exp(const std::vector<double>& x) {
  if (x.empty()) throw std::invalid_argument("log_sum_exp: empty input");
  const double m = *std::max_element(x.begin(), x.end());
  double s = 0.0;
  for (double v : x) s += std::exp(v - m);
  return m + std::log(s);
}

std::vector<double> softmax(const std::vector<double>& logits) {
  const double lse = log_sum_exp(logits);
  std::vector<double> p(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) p[i] = std::exp(logits[i] - lse);
  return p;
}

double entropy_of(const std::vector<double>& probs) {
  double h = 0.0;
  for (double p : probs)
    if (p > 0.0) h -= p * std::log(p);
  return h;
}

CategoricalStats categorical_stats(const std::vector<double>& logits,
                                   std::optional<int> target) {
  for (double v : logits)
    if (!std::isfinite(v)) throw std::invalid_argument("categorical_stats: non-finite logit");
  CategoricalStats out;
  out.probs = softmax(logits);
  out.entropy = entropy_of(out.probs);
  if (target.has_value()) {
    const int t = *target;
    if (t < 0 || t >= int(logits.size()))
      throw std::invalid_argument("categorical_stats: target out of range");
    out.nll = -std::log(std::max(out.probs[std::size_t(t)], 1e-12));
  }
  return out;
}

double kl_diag_gaussian(const std::vector<double>& mu_q,
                        const std::vector<double>& sigma_q,
                        const std::vector<double>& mu_p,
                        const std::vector<double>& sigma_p) {
  const std::size_t n = mu_q.size();
  if (sigma_q.size() != n || mu_p.size() != n || sigma_p.size() != n)
    throw std::invalid_argument("kl_diag_gaussian: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (sigma_q[i] <= 0.0 || sigma_p[i] <= 0.0)
      throw std::invalid_argument("kl_diag_gaussian: sigma must be positive");
    const double dm = mu_q[i] - mu_p[i];
    s += std::log(sigma_p[i] / sigma_q[i]) +
         (sigma_q[i] * sigma_q[i] + dm * dm) / (2.0 * sigma_p[i] * sigma_p[i]) - 0.5;
  }
  return s;
}

ReparamSample gaussian_reparam(const std::vector<double>& mu,
                               const std::vector<double>& sigma, Rng& rng) {
  if (mu.size() != sigma.size())
    throw std::invalid_argument("gaussian_reparam: length mismatch");
  ReparamSample out;
  out.noise = rng.normals(int(mu.size()));
  out.sample.resize(mu.size());
  for (std::size_t i = 0; i < mu.size(); ++i) {
    if (sigma[i] <= 0.0)
      throw std::invalid_argument("gaussian_reparam: sigma must be positive");
    out.sample[i] = mu[i] + sigma[i] * out.noise[i];
  }
  return out;
}

std::vector<double> midrank_percentiles(const std::vector<double>& values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t(0));
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> rank(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double mid = 0.5 * double(i + j) + 1.0;  // 1-based midrank
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = mid;
    i = j + 1;
  }
  std::vector<double> pct(n);
  for (std::size_t k = 0; k < n; ++k) pct[k] = n > 1 ? (rank[k] - 0.5) / double(n) : 0.5;
  return pct;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2)
    throw std::invalid_argument("spearman: need two lists of equal length >= 2");
  const std::vector<double> ra = midrank_percentiles(a);
  const std::vector<double> rb = midrank_percentiles(b);
  const std::size_t n = a.size();
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= double(n);
  mb /= double(n);
  double num = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    num += (ra[i] - ma) * (rb[i] - mb);
    va += (ra[i] - ma) * (ra[i] - ma);
    vb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (va == 0.0 || vb == 0.0) return 0.0;
  return num / std::sqrt(va * vb);
}

double quantile(std::vector<double> values, double p) {
  if (values.empty()) throw std::invalid_argument("quantile: empty input");
  if (p < 0.0 || p > 1.0) throw std::invalid_argument("quantile: p outside [0, 1]");
  std::sort(values.begin(), values.end());
  const double pos = p * double(values.size() - 1);
  const std::size_t lo = std::size_t(pos);
  const double frac = pos - double(lo);
  if (lo + 1 >= values.size()) return values.back();
  return values[lo] + frac * (values[lo + 1] - values[lo]);
}

}  // namespace stril
