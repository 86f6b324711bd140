#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "stril/autodiff.hpp"
#include "stril/optim.hpp"
#include "stril/rng.hpp"
#include "stril/trajectory.hpp"

namespace stril {

// Variational recurrent sequence model conditioned on the observation
// stream plus a per-trajectory trainable representation vector. Per step:
// a prior and a posterior over a latent z, a categorical action decoder,
// and a gated recurrent state update. Training minimizes reconstruction
// NLL plus the posterior/prior KL, jointly over network weights and every
// trajectory's representation.
struct PVRNNConfig {
  int z_dim = 2;
  int l_dim = 2;
  int h_dim = 32;   // hidden width of the feed-forward blocks
  int r_dim = 32;   // recurrent state width
  double lr = 0.001;
  int epochs = 500;
  int batch_size = 128;
  std::uint64_t seed = 0;
  double grad_clip = 0.0;  // global norm; 0 disables
  double sigma_floor = 1e-6;
  int psi_a_dim = 8;   // action embedding width
  int psi_o_dim = 16;  // observation feature width
};

// Map trajectory id -> trainable representation vector (length l_dim).
using RepTable = std::map<std::string, Tensor>;

ParamStore init_pvrnn_params(int obs_dim, int action_count, const PVRNNConfig& cfg,
                             Rng rng);

struct PvrnnStepResult {
  std::vector<double> prior_mu, prior_sigma;
  std::vector<double> posterior_mu, posterior_sigma;  // filled iff action given
  std::vector<double> z;
  std::vector<double> decoder_logits;
  std::vector<double> h_next;
  std::optional<int> sampled_action;  // generation mode only
};

// One model step. With an action the latent is sampled from the posterior
// (training-style); without one it is sampled from the prior (generation).
PvrnnStepResult pvrnn_step(const ParamStore& params, const PVRNNConfig& cfg,
                           const std::vector<double>& h_prev,
                           const std::vector<double>& obs,
                           std::optional<int> action, const Tensor& l, Rng& rng);

struct ElboResult {
  double total = 0.0;
  std::vector<double> recon_per_step;
  std::vector<double> reg_per_step;
};

// Negative evidence lower bound of one trajectory under representation l:
// sum over steps of action NLL plus KL(posterior || prior), single latent
// sample per step. The rng supplies the reparameterization noise, so a
// copied rng reproduces the same stochastic estimate exactly.
ElboResult elbo_loss(const ParamStore& params, const PVRNNConfig& cfg,
                     const TrainingSeq& seq, const Tensor& l, Rng noise_rng);

struct ElboGrads {
  ElboResult value;
  GradMap param_grads;
  Tensor l_grad;
};

ElboGrads elbo_grads(const ParamStore& params, const PVRNNConfig& cfg,
                     const TrainingSeq& seq, const Tensor& l, Rng noise_rng);

// Teacher-forced scoring pass: posterior-sampled latents, per-step decoder
// entropies and losses, recurrent state carried through (and returned, so
// a trajectory can be scored in segments).
struct TeacherForcedScore {
  std::vector<double> step_entropy;
  std::vector<double> step_recon;
  std::vector<double> step_reg;
  std::vector<double> h_final;
};

TeacherForcedScore teacher_forced_score(const ParamStore& params, const PVRNNConfig& cfg,
                                        const std::vector<std::vector<double>>& observations,
                                        const std::vector<int>& actions, const Tensor& l,
                                        const std::vector<double>& h0, Rng& noise_rng);

struct PvrnnTrainResult {
  ParamStore params;
  RepTable reps;
  std::vector<double> loss_history;  // per-epoch mean trajectory loss
};

// Joint training of network weights and per-trajectory representations.
// Representations are initialized N(0, 0.01^2) per trajectory; each keeps
// its own Adam moments. Deterministic under (config.seed, single thread).
PvrnnTrainResult train_pvrnn(const std::vector<TrainingSeq>& data, int obs_dim,
                             int action_count, const PVRNNConfig& cfg);

// Representation for a trajectory the model was not trained on: fresh l,
// network weights frozen, 200 Adam steps at the training learning rate;
// returns the iterate with the lowest loss seen.
Tensor infer_representation(const ParamStore& params, const PVRNNConfig& cfg,
                            const TrainingSeq& seq);

// Checkpoint helpers: representations ride along as "rep/<trajectory id>".
ParamStore merge_params_and_reps(const ParamStore& params, const RepTable& reps);
void split_params_and_reps(const ParamStore& merged, ParamStore& params, RepTable& reps);

}  // namespace stril
