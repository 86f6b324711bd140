#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "stril/tensor.hpp"

namespace stril {

class Tape;

// Handle to a node on a tape. Cheap to copy; valid until Tape::clear().
struct Var {
  Tape* tape = nullptr;
  int id = -1;
};

// Weights of one gated recurrent cell (reset / update / candidate gates).
struct GruWeights {
  Var wr, ur, br;
  Var wu, uu, bu;
  Var wc, uc, bc;
};

// Reverse-mode differentiation over a dynamically recorded computation
// graph. Nodes are appended in forward order, so the record itself is a
// topological order and the backward sweep is a single reverse pass.
// Node payloads live in pooled arenas; clear() keeps the capacity so a
// tape can be reused across many small graphs without reallocating.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // ---- graph inputs ----
  Var constant(const Tensor& t);
  Var constant(const std::vector<double>& v);
  Var scalar_const(double v);
  // Named differentiable input. Names are reported by forward_backward.
  Var leaf(const std::string& name, const Tensor& t);

  // ---- elementwise / small algebra ----
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double c);
  Var tanh(Var a);
  Var sigmoid(Var a);
  // softplus(x) + floor; keeps sigma outputs strictly positive.
  Var softplus_floor(Var a, double floor);
  Var sum_all(Var a);
  Var add_many(const std::vector<Var>& terms);
  Var concat(const std::vector<Var>& parts);

  // ---- linear maps ----
  // W: (m x n), b: (m), x: (n) -> (m)
  Var linear(Var w, Var b, Var x);
  // W: (m x n), b: (m), X: (B x n) -> (B x m)
  Var linear_batch(Var w, Var b, Var x);
  // E: (rows x width) -> row `row` as a (width) vector
  Var embed_row(Var table, int row);

  // ---- recurrent / stochastic / loss heads ----
  Var gru_cell(const GruWeights& w, Var h_prev, Var x);
  // mu + sigma * noise, differentiable in mu and sigma; noise is data.
  Var reparam(Var mu, Var sigma, const std::vector<double>& noise);
  // -log softmax(logits)[target]; scalar.
  Var categorical_nll(Var logits, int target);
  // logits: (B x A); mean of per-row NLL; scalar.
  Var categorical_nll_batch(Var logits, const std::vector<int>& targets);
  // pred: (B) or (B x 1); mean squared error against targets; scalar.
  Var mse_batch(Var pred, const std::vector<double>& targets);
  // KL(N(mu_q, diag sq^2) || N(mu_p, diag sp^2)); scalar.
  Var kl_diag_gaussian(Var mu_q, Var sigma_q, Var mu_p, Var sigma_p);

  // ---- access ----
  int length(Var v) const;
  std::span<const double> value(Var v) const;
  std::span<const double> grad(Var v) const;
  double scalar_value(Var v) const;
  Tensor value_tensor(Var v) const;
  Tensor grad_tensor(Var v) const;

  // ---- differentiation ----
  // Seeds d(root)/d(root) = 1 and sweeps the record in reverse. The root
  // must be scalar. Grad buffers accumulate; one backward per recording.
  void backward(Var root);
  // backward() plus collection of gradients for every named leaf. Leaves
  // that do not reach the root report zero gradients.
  std::map<std::string, Tensor> forward_backward(Var root);

  void clear();
  std::size_t node_count() const { return nodes_.size(); }

 private:
  enum class Op : std::uint8_t {
    kConst, kLeaf, kAdd, kSub, kMul, kScale, kTanh, kSigmoid, kSoftplusFloor,
    kSumAll, kAddMany, kConcat, kLinear, kLinearBatch, kEmbedRow, kGruCell,
    kReparam, kCatNll, kCatNllBatch, kMseBatch, kKlDiagGaussian,
  };

  struct Node {
    Op op;
    int rows = 0;   // rank-1: rows = len, cols = 0
    int cols = 0;
    std::size_t val = 0;   // offset into data_
    std::size_t grd = 0;
    std::uint32_t par = 0;  // offset into parents_
    std::uint32_t npar = 0;
    std::uint32_t aux_i = 0;
    std::uint32_t naux_i = 0;
    std::uint32_t aux_d = 0;
    std::uint32_t naux_d = 0;
    double c = 0.0;  // scalar payload (scale factor, softplus floor)
  };

  int len(const Node& n) const { return n.cols ? n.rows * n.cols : n.rows; }
  Node& node(Var v) { return nodes_[std::size_t(v.id)]; }
  const Node& node(Var v) const { return nodes_[std::size_t(v.id)]; }

  double* val_ptr(Node& n) { return data_.data() + n.val; }
  const double* val_ptr(const Node& n) const { return data_.data() + n.val; }
  double* grd_ptr(Node& n) { return data_.data() + n.grd; }
  const double* grd_ptr(const Node& n) const { return data_.data() + n.grd; }

  Var push(Op op, int rows, int cols, std::initializer_list<int> parents,
           std::initializer_list<int> aux_i = {}, std::size_t naux_d = 0);
  Var push(Op op, int rows, int cols, const std::vector<int>& parents,
           const std::vector<int>& aux_i, std::size_t naux_d);
  void check_same_len(Var a, Var b, const char* op) const;
  void check_finite(Var v);
  void backward_node(int id);
  [[noreturn]] static void fail(const std::string& msg);
  static const char* op_name(Op op);

  std::vector<Node> nodes_;
  std::vector<double> data_;       // values and grads
  std::vector<int> parents_;
  std::vector<int> aux_int_;
  std::vector<double> aux_dbl_;
  std::vector<std::pair<std::string, int>> leaves_;
  bool backward_done_ = false;
};

}  // namespace stril
