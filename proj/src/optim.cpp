#include "stril/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace stril {

AdamState AdamState::create(const ParamStore& params, double lr) {
  AdamState s;
  s.lr = lr;
  for (const auto& [name, t] : params) {
    s.first_moment.emplace(name, Tensor::zeros(t.shape()));
    s.second_moment.emplace(name, Tensor::zeros(t.shape()));
  }
  return s;
}

void adam_step(ParamStore& params, const GradMap& grads, AdamState& state) {
  if (grads.size() != params.size())
    throw std::invalid_argument("adam_step: gradient keys do not match parameters");
  state.step_count += 1;
  const double corr1 = 1.0 - std::pow(state.beta1, double(state.step_count));
  const double corr2 = 1.0 - std::pow(state.beta2, double(state.step_count));
  auto git = grads.begin();
  for (auto& [name, p] : params) {
    if (git == grads.end() || git->first != name)
      throw std::invalid_argument("adam_step: missing gradient for '" + name + "'");
    const Tensor& g = git->second;
    ++git;
    if (!g.same_shape(p))
      throw std::invalid_argument("adam_step: gradient shape mismatch for '" + name + "'");
    Tensor& m = state.first_moment.at(name);
    Tensor& v = state.second_moment.at(name);
    for (std::size_t i = 0; i < p.numel(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double mhat = m[i] / corr1;
      const double vhat = v[i] / corr2;
      p[i] -= state.lr * mhat / (std::sqrt(vhat) + state.epsilon);
    }
  }
}

void accumulate_scaled(GradMap& acc, const GradMap& grads, double scale) {
  for (const auto& [name, g] : grads) {
    auto it = acc.find(name);
    if (it == acc.end()) {
      Tensor t = Tensor::zeros(g.shape());
      it = acc.emplace(name, std::move(t)).first;
    }
    Tensor& a = it->second;
    for (std::size_t i = 0; i < g.numel(); ++i) a[i] += scale * g[i];
  }
}

GradMap zeros_like(const ParamStore& params) {
  GradMap out;
  for (const auto& [name, t] : params) out.emplace(name, Tensor::zeros(t.shape()));
  return out;
}

}  // namespace stril
