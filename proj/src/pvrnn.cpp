#include "stril/pvrnn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "stril/stats.hpp"

namespace stril {

namespace {

// Binds the parameter store onto a tape, as leaves (trainable) or
// constants (frozen), and builds the per-step subgraph.
class Net {
 public:
  Net(Tape& tape, const ParamStore& params, const PVRNNConfig& cfg, bool trainable)
      : tape_(tape), cfg_(cfg) {
    for (const auto& [name, tensor] : params)
      vars_.emplace(name, trainable ? tape.leaf(name, tensor) : tape.constant(tensor));
    gru_ = GruWeights{v("rec/wr"), v("rec/ur"), v("rec/br"), v("rec/wu"), v("rec/uu"),
                      v("rec/bu"), v("rec/wc"), v("rec/uc"), v("rec/bc")};
  }

  Var v(const std::string& name) const {
    auto it = vars_.find(name);
    if (it == vars_.end())
      throw std::runtime_error("pvrnn: missing parameter '" + name + "'");
    return it->second;
  }

  struct StepNodes {
    Var mu_pri, sig_pri;
    Var mu_enc, sig_enc;  // valid iff teacher-forced
    Var z;
    Var logits;
    Var h_next;
    Var kl, nll;  // valid iff teacher-forced
    std::optional<int> sampled_action;
  };

  StepNodes step(Var h, const std::vector<double>& obs, std::optional<int> action,
                 Var l, Rng& rng) {
    StepNodes out;
    Tape& t = tape_;
    Var obs_c = t.constant(obs);
    Var ofeat = t.tanh(t.linear(v("psi_o/w1"), v("psi_o/b1"), obs_c));
    Var ph = t.tanh(t.linear(v("pri/w1"), v("pri/b1"), t.concat({h, ofeat, l})));
    out.mu_pri = t.linear(v("pri/mu_w"), v("pri/mu_b"), ph);
    out.sig_pri = t.softplus_floor(t.linear(v("pri/sig_w"), v("pri/sig_b"), ph),
                                   cfg_.sigma_floor);
    Var afeat;
    if (action.has_value()) {
      afeat = t.embed_row(v("psi_a/embed"), *action);
      Var eh = t.tanh(t.linear(v("enc/w1"), v("enc/b1"), t.concat({h, afeat, ofeat, l})));
      out.mu_enc = t.linear(v("enc/mu_w"), v("enc/mu_b"), eh);
      out.sig_enc = t.softplus_floor(t.linear(v("enc/sig_w"), v("enc/sig_b"), eh),
                                     cfg_.sigma_floor);
      out.z = t.reparam(out.mu_enc, out.sig_enc, rng.normals(cfg_.z_dim));
      out.kl = t.kl_diag_gaussian(out.mu_enc, out.sig_enc, out.mu_pri, out.sig_pri);
    } else {
      out.z = t.reparam(out.mu_pri, out.sig_pri, rng.normals(cfg_.z_dim));
    }
    Var dh = t.tanh(t.linear(v("dec/w1"), v("dec/b1"), t.concat({h, out.z, ofeat, l})));
    out.logits = t.linear(v("dec/out_w"), v("dec/out_b"), dh);
    if (action.has_value()) {
      out.nll = t.categorical_nll(out.logits, *action);
    } else {
      // generation: the recurrence consumes the action actually emitted
      const auto logits = t.value_tensor(out.logits);
      const auto probs = softmax(logits.values());
      out.sampled_action = rng.categorical(probs);
      afeat = t.embed_row(v("psi_a/embed"), *out.sampled_action);
    }
    out.h_next = t.gru_cell(gru_, h, t.concat({afeat, out.z, ofeat, l}));
    return out;
  }

  Var zero_state() const {
    return tape_.constant(std::vector<double>(std::size_t(cfg_.r_dim), 0.0));
  }

 private:
  Tape& tape_;
  PVRNNConfig cfg_;
  std::map<std::string, Var> vars_;
  GruWeights gru_;
};

struct ElboGraph {
  Var total;
  std::vector<Var> recon, reg;
};

ElboGraph build_elbo_graph(Tape& tape, Net& net, const PVRNNConfig& cfg,
                           const TrainingSeq& seq, Var l, Rng& noise_rng) {
  (void)cfg;
  const std::size_t steps = seq.length();
  if (steps == 0) throw std::invalid_argument("elbo: trajectory must have length >= 1");
  ElboGraph g;
  Var h = net.zero_state();
  std::vector<Var> terms;
  terms.reserve(2 * steps);
  for (std::size_t t = 0; t < steps; ++t) {
    const auto nodes =
        net.step(h, (*seq.observations)[t], (*seq.actions)[t], l, noise_rng);
    g.recon.push_back(nodes.nll);
    g.reg.push_back(nodes.kl);
    terms.push_back(nodes.nll);
    terms.push_back(nodes.kl);
    h = nodes.h_next;
  }
  g.total = tape.add_many(terms);
  return g;
}

ElboResult extract_elbo(const Tape& tape, const ElboGraph& g) {
  ElboResult res;
  res.total = tape.scalar_value(g.total);
  for (Var v : g.recon) res.recon_per_step.push_back(tape.scalar_value(v));
  for (Var v : g.reg) res.reg_per_step.push_back(tape.scalar_value(v));
  return res;
}

// Adam moments for one representation vector.
struct RepAdamState {
  Tensor m, v;
  long steps = 0;
};

void rep_adam_update(Tensor& l, const Tensor& grad, RepAdamState& st, double lr) {
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  if (st.steps == 0) {
    st.m = Tensor::zeros(l.shape());
    st.v = Tensor::zeros(l.shape());
  }
  st.steps += 1;
  const double c1 = 1.0 - std::pow(b1, double(st.steps));
  const double c2 = 1.0 - std::pow(b2, double(st.steps));
  for (std::size_t i = 0; i < l.numel(); ++i) {
    st.m[i] = b1 * st.m[i] + (1.0 - b1) * grad[i];
    st.v[i] = b2 * st.v[i] + (1.0 - b2) * grad[i] * grad[i];
    l[i] -= lr * (st.m[i] / c1) / (std::sqrt(st.v[i] / c2) + eps);
  }
}

void clip_global_norm(GradMap& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& [name, g] : grads)
    for (std::size_t i = 0; i < g.numel(); ++i) sq += g[i] * g[i];
  const double norm = std::sqrt(sq);
  if (norm <= max_norm || norm == 0.0) return;
  const double s = max_norm / norm;
  for (auto& [name, g] : grads)
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] *= s;
}

}  // namespace

ParamStore init_pvrnn_params(int obs_dim, int action_count, const PVRNNConfig& cfg,
                             Rng rng) {
  if (obs_dim < 1 || action_count < 2)
    throw std::invalid_argument("init_pvrnn_params: bad dimensions");
  ParamStore p;
  const int af = cfg.psi_a_dim, of = cfg.psi_o_dim;
  const int pri_in = cfg.r_dim + of + cfg.l_dim;
  const int enc_in = cfg.r_dim + af + of + cfg.l_dim;
  const int dec_in = cfg.r_dim + cfg.z_dim + of + cfg.l_dim;
  const int x_dim = af + cfg.z_dim + of + cfg.l_dim;
  auto weight = [&](std::vector<int> shape, int fan_in) {
    return Tensor::uniform_init(std::move(shape), 1.0 / std::sqrt(double(fan_in)), rng);
  };
  p.emplace("psi_o/w1", weight({of, obs_dim}, obs_dim));
  p.emplace("psi_o/b1", Tensor::zeros({of}));
  p.emplace("psi_a/embed", weight({action_count, af}, af));
  p.emplace("pri/w1", weight({cfg.h_dim, pri_in}, pri_in));
  p.emplace("pri/b1", Tensor::zeros({cfg.h_dim}));
  p.emplace("pri/mu_w", weight({cfg.z_dim, cfg.h_dim}, cfg.h_dim));
  p.emplace("pri/mu_b", Tensor::zeros({cfg.z_dim}));
  p.emplace("pri/sig_w", weight({cfg.z_dim, cfg.h_dim}, cfg.h_dim));
  p.emplace("pri/sig_b", Tensor::zeros({cfg.z_dim}));
  p.emplace("enc/w1", weight({cfg.h_dim, enc_in}, enc_in));
  p.emplace("enc/b1", Tensor::zeros({cfg.h_dim}));
  p.emplace("enc/mu_w", weight({cfg.z_dim, cfg.h_dim}, cfg.h_dim));
  p.emplace("enc/mu_b", Tensor::zeros({cfg.z_dim}));
  p.emplace("enc/sig_w", weight({cfg.z_dim, cfg.h_dim}, cfg.h_dim));
  p.emplace("enc/sig_b", Tensor::zeros({cfg.z_dim}));
  p.emplace("dec/w1", weight({cfg.h_dim, dec_in}, dec_in));
  p.emplace("dec/b1", Tensor::zeros({cfg.h_dim}));
  p.emplace("dec/out_w", weight({action_count, cfg.h_dim}, cfg.h_dim));
  p.emplace("dec/out_b", Tensor::zeros({action_count}));
  for (const char* g : {"r", "u", "c"}) {
    p.emplace(std::string("rec/w") + g, weight({cfg.r_dim, x_dim}, cfg.r_dim));
    p.emplace(std::string("rec/u") + g, weight({cfg.r_dim, cfg.r_dim}, cfg.r_dim));
    p.emplace(std::string("rec/b") + g, Tensor::zeros({cfg.r_dim}));
  }
  return p;
}

PvrnnStepResult pvrnn_step(const ParamStore& params, const PVRNNConfig& cfg,
                           const std::vector<double>& h_prev,
                           const std::vector<double>& obs,
                           std::optional<int> action, const Tensor& l, Rng& rng) {
  if (int(h_prev.size()) != cfg.r_dim)
    throw std::invalid_argument("pvrnn_step: recurrent state size mismatch");
  Tape tape;
  Net net(tape, params, cfg, /*trainable=*/false);
  Var h = tape.constant(h_prev);
  Var lv = tape.constant(l);
  auto nodes = net.step(h, obs, action, lv, rng);
  PvrnnStepResult out;
  auto copy = [&](Var v) {
    auto s = tape.value(v);
    return std::vector<double>(s.begin(), s.end());
  };
  out.prior_mu = copy(nodes.mu_pri);
  out.prior_sigma = copy(nodes.sig_pri);
  if (action.has_value()) {
    out.posterior_mu = copy(nodes.mu_enc);
    out.posterior_sigma = copy(nodes.sig_enc);
  }
  out.z = copy(nodes.z);
  out.decoder_logits = copy(nodes.logits);
  out.h_next = copy(nodes.h_next);
  out.sampled_action = nodes.sampled_action;
  return out;
}

ElboResult elbo_loss(const ParamStore& params, const PVRNNConfig& cfg,
                     const TrainingSeq& seq, const Tensor& l, Rng noise_rng) {
  Tape tape;
  Net net(tape, params, cfg, /*trainable=*/false);
  Var lv = tape.constant(l);
  const auto g = build_elbo_graph(tape, net, cfg, seq, lv, noise_rng);
  return extract_elbo(tape, g);
}

ElboGrads elbo_grads(const ParamStore& params, const PVRNNConfig& cfg,
                     const TrainingSeq& seq, const Tensor& l, Rng noise_rng) {
  Tape tape;
  Net net(tape, params, cfg, /*trainable=*/true);
  Var lv = tape.leaf("rep", l);
  const auto g = build_elbo_graph(tape, net, cfg, seq, lv, noise_rng);
  ElboGrads out;
  out.value = extract_elbo(tape, g);
  out.param_grads = tape.forward_backward(g.total);
  auto it = out.param_grads.find("rep");
  out.l_grad = it->second;
  out.param_grads.erase(it);
  return out;
}

TeacherForcedScore teacher_forced_score(const ParamStore& params, const PVRNNConfig& cfg,
                                        const std::vector<std::vector<double>>& observations,
                                        const std::vector<int>& actions, const Tensor& l,
                                        const std::vector<double>& h0, Rng& noise_rng) {
  if (observations.size() != actions.size() || actions.empty())
    throw std::invalid_argument("teacher_forced_score: bad trajectory");
  Tape tape;
  Net net(tape, params, cfg, /*trainable=*/false);
  Var lv = tape.constant(l);
  Var h = h0.empty() ? net.zero_state() : tape.constant(h0);
  TeacherForcedScore out;
  for (std::size_t t = 0; t < actions.size(); ++t) {
    const auto nodes = net.step(h, observations[t], actions[t], lv, noise_rng);
    const auto logits = tape.value(nodes.logits);
    const auto stats =
        categorical_stats(std::vector<double>(logits.begin(), logits.end()));
    out.step_entropy.push_back(stats.entropy);
    out.step_recon.push_back(tape.scalar_value(nodes.nll));
    out.step_reg.push_back(tape.scalar_value(nodes.kl));
    h = nodes.h_next;
  }
  const auto hf = tape.value(h);
  out.h_final.assign(hf.begin(), hf.end());
  return out;
}

PvrnnTrainResult train_pvrnn(const std::vector<TrainingSeq>& data, int obs_dim,
                             int action_count, const PVRNNConfig& cfg) {
  if (data.empty()) throw std::invalid_argument("train_pvrnn: dataset is empty");
  Rng root(cfg.seed);
  PvrnnTrainResult result;
  result.params = init_pvrnn_params(obs_dim, action_count, cfg, root.derive("init"));
  std::map<std::string, RepAdamState> rep_adam;
  for (const auto& seq : data) {
    Rng r = root.derive("rep-init", Rng::hash(seq.id));
    result.reps.emplace(seq.id, Tensor::normal_init({cfg.l_dim}, 0.01, r));
    rep_adam.emplace(seq.id, RepAdamState{});
  }
  AdamState net_adam = AdamState::create(result.params, cfg.lr);

  Tape tape;
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t(0));

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng = root.derive("shuffle", std::uint64_t(epoch));
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[std::size_t(shuffle_rng.uniform_int(int(i)))]);

    double epoch_loss = 0.0;
    std::size_t done = 0;
    while (done < order.size()) {
      const std::size_t batch_end =
          std::min(done + std::size_t(cfg.batch_size), order.size());
      const double inv_batch = 1.0 / double(batch_end - done);
      GradMap acc;
      std::vector<std::pair<const std::string*, Tensor>> rep_grads;
      for (std::size_t k = done; k < batch_end; ++k) {
        const TrainingSeq& seq = data[order[k]];
        Tensor& l = result.reps.at(seq.id);
        Rng noise = root.derive("noise", std::uint64_t(epoch)).derive(Rng::hash(seq.id));
        tape.clear();
        Net net(tape, result.params, cfg, /*trainable=*/true);
        Var lv = tape.leaf("rep", l);
        ElboGraph g;
        try {
          g = build_elbo_graph(tape, net, cfg, seq, lv, noise);
        } catch (const std::runtime_error& e) {
          throw std::runtime_error("pvrnn training diverged at epoch " +
                                   std::to_string(epoch) + " (" + seq.id + "): " + e.what());
        }
        const double total = tape.scalar_value(g.total);
        if (!std::isfinite(total))
          throw std::runtime_error("pvrnn training diverged at epoch " +
                                   std::to_string(epoch) + " (" + seq.id + ")");
        epoch_loss += total;
        auto grads = tape.forward_backward(g.total);
        auto rep_it = grads.find("rep");
        Tensor rep_grad = std::move(rep_it->second);
        grads.erase(rep_it);
        for (std::size_t gi = 0; gi < rep_grad.numel(); ++gi) rep_grad[gi] *= inv_batch;
        rep_grads.emplace_back(&seq.id, std::move(rep_grad));
        accumulate_scaled(acc, grads, inv_batch);
      }
      if (cfg.grad_clip > 0.0) clip_global_norm(acc, cfg.grad_clip);
      adam_step(result.params, acc, net_adam);
      for (auto& [id, grad] : rep_grads) {
        if (cfg.grad_clip > 0.0) {
          GradMap one{{"l", grad}};
          clip_global_norm(one, cfg.grad_clip);
          grad = one.at("l");
        }
        rep_adam_update(result.reps.at(*id), grad, rep_adam.at(*id), cfg.lr);
      }
      done = batch_end;
    }
    result.loss_history.push_back(epoch_loss / double(data.size()));
  }
  return result;
}

Tensor infer_representation(const ParamStore& params, const PVRNNConfig& cfg,
                            const TrainingSeq& seq) {
  Rng root = Rng(cfg.seed).derive("infer", Rng::hash(seq.id));
  Rng init_rng = root.derive("init");
  Tensor l = Tensor::normal_init({cfg.l_dim}, 0.01, init_rng);
  RepAdamState adam;
  Tensor best = l;
  double best_loss = std::numeric_limits<double>::infinity();
  Tape tape;
  for (int step = 0; step < 200; ++step) {
    Rng noise = root.derive("noise", std::uint64_t(step));
    tape.clear();
    Net net(tape, params, cfg, /*trainable=*/false);
    Var lv = tape.leaf("rep", l);
    const auto g = build_elbo_graph(tape, net, cfg, seq, lv, noise);
    const double total = tape.scalar_value(g.total);
    if (total < best_loss) {
      best_loss = total;
      best = l;
    }
    tape.backward(g.total);
    rep_adam_update(l, tape.grad_tensor(lv), adam, cfg.lr);
  }
  return best;
}

ParamStore merge_params_and_reps(const ParamStore& params, const RepTable& reps) {
  ParamStore merged = params;
  for (const auto& [id, l] : reps) merged.emplace("rep/" + id, l);
  return merged;
}

void split_params_and_reps(const ParamStore& merged, ParamStore& params, RepTable& reps) {
  params.clear();
  reps.clear();
  for (const auto& [name, t] : merged) {
    if (name.rfind("rep/", 0) == 0) reps.emplace(name.substr(4), t);
    else params.emplace(name, t);
  }
}

}  // namespace stril
