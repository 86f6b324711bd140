#pragma once

// Shared test oracle: random differentiable programs with a central
// finite-difference gradient check. Used by the unit suite and the
// acceptance suite.

#include <algorithm>
#include <cmath>
#include <vector>

#include "stril/autodiff.hpp"
#include "stril/rng.hpp"
#include "stril/tensor.hpp"

namespace stril::testsupport {

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

// ---------------------------------------------------------------------------
// Random differentiable programs. A program is generated once (seeded) and
// can be re-evaluated with perturbed leaf values, which is what the central
// finite-difference oracle needs.
// ---------------------------------------------------------------------------

struct ProgStep {
  enum Kind {
    kAdd, kSub, kMul, kTanh, kSigmoid, kSoftplus, kScale, kLinear, kConcat,
    kKl, kCatNll, kReparam,
  };
  Kind kind;
  int a = -1, b = -1, p = -1, q = -1;  // pool operand indices
  int w_leaf = -1, b_leaf = -1;        // linear weights (leaf indices)
  double c = 0.0;
  int target = 0;
  std::vector<double> noise;
};

struct Program {
  std::vector<Tensor> leaves;       // initial leaf values
  std::vector<ProgStep> steps;
};

Program random_program(Rng rng) {
  Program prog;
  const int n_inputs = 1 + rng.uniform_int(3);
  std::vector<int> pool_len;
  std::vector<int> pool_is_leaf;  // pool index -> leaf index (inputs only)
  for (int i = 0; i < n_inputs; ++i) {
    const int len = 1 + rng.uniform_int(16);
    prog.leaves.push_back(Tensor::uniform_init({len}, 1.5, rng));
    pool_len.push_back(len);
    pool_is_leaf.push_back(i);
  }
  const int depth = 2 + rng.uniform_int(5);
  for (int d = 0; d < depth; ++d) {
    ProgStep s;
    const int pick = rng.uniform_int(10);
    const int a = rng.uniform_int(int(pool_len.size()));
    s.a = a;
    if (pick <= 2) {  // elementwise binary; find a same-length partner
      int b = -1;
      for (int t = 0; t < int(pool_len.size()); ++t)
        if (pool_len[std::size_t(t)] == pool_len[std::size_t(a)]) b = t;
      if (b < 0) b = a;
      s.b = b;
      s.kind = pick == 0 ? ProgStep::kAdd : (pick == 1 ? ProgStep::kSub : ProgStep::kMul);
      pool_len.push_back(pool_len[std::size_t(a)]);
    } else if (pick == 3) {
      s.kind = ProgStep::kTanh;
      pool_len.push_back(pool_len[std::size_t(a)]);
    } else if (pick == 4) {
      s.kind = ProgStep::kSigmoid;
      pool_len.push_back(pool_len[std::size_t(a)]);
    } else if (pick == 5) {
      s.kind = ProgStep::kSoftplus;
      pool_len.push_back(pool_len[std::size_t(a)]);
    } else if (pick == 6) {
      s.kind = ProgStep::kScale;
      s.c = rng.uniform(-2.0, 2.0);
      pool_len.push_back(pool_len[std::size_t(a)]);
    } else if (pick == 7) {
      s.kind = ProgStep::kLinear;
      const int n = pool_len[std::size_t(a)];
      const int m = 1 + rng.uniform_int(12);
      s.w_leaf = int(prog.leaves.size());
      prog.leaves.push_back(Tensor::uniform_init({m, n}, 0.7, rng));
      s.b_leaf = int(prog.leaves.size());
      prog.leaves.push_back(Tensor::uniform_init({m}, 0.5, rng));
      pool_len.push_back(m);
    } else if (pick == 8) {
      s.kind = ProgStep::kConcat;
      s.b = rng.uniform_int(int(pool_len.size()));
      pool_len.push_back(pool_len[std::size_t(a)] + pool_len[std::size_t(s.b)]);
    } else {
      // KL between two diagonal Gaussians derived from two pool entries
      int b = -1;
      for (int t = int(pool_len.size()) - 1; t >= 0; --t)
        if (pool_len[std::size_t(t)] == pool_len[std::size_t(a)]) { b = t; break; }
      if (b < 0) b = a;
      s.kind = ProgStep::kKl;
      s.b = b;
      pool_len.push_back(1);
    }
    prog.steps.push_back(std::move(s));
  }
  // Occasionally end with a categorical NLL or a reparameterized sample.
  const int tail = rng.uniform_int(3);
  const int last = int(pool_len.size()) - 1;
  if (tail == 0 && pool_len[std::size_t(last)] >= 2) {
    ProgStep s;
    s.kind = ProgStep::kCatNll;
    s.a = last;
    s.target = rng.uniform_int(pool_len[std::size_t(last)]);
    prog.steps.push_back(std::move(s));
  } else if (tail == 1) {
    ProgStep s;
    s.kind = ProgStep::kReparam;
    s.a = last;
    s.noise = rng.normals(pool_len[std::size_t(last)]);
    prog.steps.push_back(std::move(s));
  }
  return prog;
}

// Runs the program on a tape; returns the scalar root and the leaf vars.
Var eval_program(const Program& prog, const std::vector<Tensor>& leaf_vals,
                 Tape& tape, std::vector<Var>& leaf_vars) {
  leaf_vars.clear();
  for (std::size_t i = 0; i < leaf_vals.size(); ++i)
    leaf_vars.push_back(tape.leaf("leaf" + std::to_string(i), leaf_vals[i]));
  std::vector<Var> pool;
  for (std::size_t i = 0; i < prog.leaves.size(); ++i) {
    // only rank-1 inputs enter the pool; linear weights are reached via steps
    if (leaf_vals[i].rank() == 1 && pool.size() < prog.leaves.size()) {}
  }
  // pool initially holds the rank-1 input leaves (they come first)
  for (std::size_t i = 0; i < leaf_vars.size(); ++i) {
    if (prog.leaves[i].rank() == 1) pool.push_back(leaf_vars[i]);
    else break;
  }
  for (const ProgStep& s : prog.steps) {
    switch (s.kind) {
      case ProgStep::kAdd: pool.push_back(tape.add(pool[std::size_t(s.a)], pool[std::size_t(s.b)])); break;
      case ProgStep::kSub: pool.push_back(tape.sub(pool[std::size_t(s.a)], pool[std::size_t(s.b)])); break;
      case ProgStep::kMul: pool.push_back(tape.mul(pool[std::size_t(s.a)], pool[std::size_t(s.b)])); break;
      case ProgStep::kTanh: pool.push_back(tape.tanh(pool[std::size_t(s.a)])); break;
      case ProgStep::kSigmoid: pool.push_back(tape.sigmoid(pool[std::size_t(s.a)])); break;
      case ProgStep::kSoftplus: pool.push_back(tape.softplus_floor(pool[std::size_t(s.a)], 0.01)); break;
      case ProgStep::kScale: pool.push_back(tape.scale(pool[std::size_t(s.a)], s.c)); break;
      case ProgStep::kLinear:
        pool.push_back(tape.linear(leaf_vars[std::size_t(s.w_leaf)],
                                   leaf_vars[std::size_t(s.b_leaf)],
                                   pool[std::size_t(s.a)]));
        break;
      case ProgStep::kConcat:
        pool.push_back(tape.concat({pool[std::size_t(s.a)], pool[std::size_t(s.b)]}));
        break;
      case ProgStep::kKl: {
        Var mu_q = pool[std::size_t(s.a)];
        Var mu_p = pool[std::size_t(s.b)];
        Var sq = tape.softplus_floor(pool[std::size_t(s.a)], 0.1);
        Var sp = tape.softplus_floor(pool[std::size_t(s.b)], 0.1);
        pool.push_back(tape.kl_diag_gaussian(mu_q, sq, mu_p, sp));
        break;
      }
      case ProgStep::kCatNll:
        pool.push_back(tape.categorical_nll(pool[std::size_t(s.a)], s.target));
        break;
      case ProgStep::kReparam: {
        Var mu = pool[std::size_t(s.a)];
        Var sg = tape.softplus_floor(pool[std::size_t(s.a)], 0.05);
        pool.push_back(tape.reparam(mu, sg, s.noise));
        break;
      }
    }
  }
  return tape.sum_all(pool.back());
}

// Central finite differences of the program root w.r.t. every leaf entry.
double max_fd_rel_err(const Program& prog) {
  Tape tape;
  std::vector<Var> leaf_vars;
  Var root = eval_program(prog, prog.leaves, tape, leaf_vars);
  tape.backward(root);
  std::vector<Tensor> grads;
  for (Var lv : leaf_vars) grads.push_back(tape.grad_tensor(lv));

  double worst = 0.0;
  const double h = 1e-6;
  std::vector<Tensor> vals = prog.leaves;
  for (std::size_t li = 0; li < vals.size(); ++li) {
    for (std::size_t i = 0; i < vals[li].numel(); ++i) {
      const double orig = vals[li][i];
      Tape t2;
      std::vector<Var> lv2;
      vals[li][i] = orig + h;
      const double fp = t2.scalar_value(eval_program(prog, vals, t2, lv2));
      t2.clear();
      vals[li][i] = orig - h;
      const double fm = t2.scalar_value(eval_program(prog, vals, t2, lv2));
      vals[li][i] = orig;
      const double fd = (fp - fm) / (2.0 * h);
      worst = std::max(worst, rel_err(grads[li][i], fd));
    }
  }
  return worst;
}

}  // namespace stril::testsupport
