#include "stril/autodiff.hpp"

#include <cmath>
#include <stdexcept>

namespace stril {

namespace {

double stable_softplus(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

double stable_sigmoid(double x) {
  if (x >= 0.0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// log(sum(exp(logits))) with the max factored out.
double log_sum_exp_raw(const double* x, int n) {
  double m = x[0];
  for (int i = 1; i < n; ++i) m = std::max(m, x[i]);
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += std::exp(x[i] - m);
  return m + std::log(s);
}

}  // namespace

const char* Tape::op_name(Op op) {
  switch (op) {
    case Op::kConst: return "const";
    case Op::kLeaf: return "leaf";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kScale: return "scale";
    case Op::kTanh: return "tanh";
    case Op::kSigmoid: return "sigmoid";
    case Op::kSoftplusFloor: return "softplus_floor";
    case Op::kSumAll: return "sum_all";
    case Op::kAddMany: return "add_many";
    case Op::kConcat: return "concat";
    case Op::kLinear: return "linear";
    case Op::kLinearBatch: return "linear_batch";
    case Op::kEmbedRow: return "embed_row";
    case Op::kGruCell: return "gru_cell";
    case Op::kReparam: return "reparam";
    case Op::kCatNll: return "categorical_nll";
    case Op::kCatNllBatch: return "categorical_nll_batch";
    case Op::kMseBatch: return "mse_batch";
    case Op::kKlDiagGaussian: return "kl_diag_gaussian";
  }
  return "?";
}

void Tape::fail(const std::string& msg) { throw std::runtime_error(msg); }

Var Tape::push(Op op, int rows, int cols, std::initializer_list<int> parents,
               std::initializer_list<int> aux_i, std::size_t naux_d) {
  return push(op, rows, cols, std::vector<int>(parents), std::vector<int>(aux_i), naux_d);
}

Var Tape::push(Op op, int rows, int cols, const std::vector<int>& parents,
               const std::vector<int>& aux_i, std::size_t naux_d) {
  Node n;
  n.op = op;
  n.rows = rows;
  n.cols = cols;
  const std::size_t nel = std::size_t(cols ? rows * cols : rows);
  n.val = data_.size();
  data_.resize(data_.size() + nel);
  n.grd = data_.size();
  data_.resize(data_.size() + nel, 0.0);
  n.par = std::uint32_t(parents_.size());
  n.npar = std::uint32_t(parents.size());
  parents_.insert(parents_.end(), parents.begin(), parents.end());
  n.aux_i = std::uint32_t(aux_int_.size());
  n.naux_i = std::uint32_t(aux_i.size());
  aux_int_.insert(aux_int_.end(), aux_i.begin(), aux_i.end());
  n.aux_d = std::uint32_t(aux_dbl_.size());
  n.naux_d = std::uint32_t(naux_d);
  aux_dbl_.resize(aux_dbl_.size() + naux_d, 0.0);
  nodes_.push_back(n);
  return Var{this, int(nodes_.size()) - 1};
}

void Tape::check_same_len(Var a, Var b, const char* op) const {
  if (len(node(a)) != len(node(b)))
    fail(std::string(op) + ": length mismatch " + std::to_string(len(node(a))) +
         " vs " + std::to_string(len(node(b))));
}

void Tape::check_finite(Var v) {
  const Node& n = node(v);
  const double* p = val_ptr(node(v));
  for (int i = 0; i < len(n); ++i)
    if (!std::isfinite(p[i]))
      fail(std::string("non-finite value produced by op '") + op_name(n.op) + "'");
}

Var Tape::constant(const Tensor& t) {
  const int rows = t.rank() == 2 ? t.dim(0) : int(t.numel());
  const int cols = t.rank() == 2 ? t.dim(1) : 0;
  Var v = push(Op::kConst, rows, cols, {});
  std::copy(t.data(), t.data() + t.numel(), val_ptr(node(v)));
  return v;
}

Var Tape::constant(const std::vector<double>& v) {
  Var out = push(Op::kConst, int(v.size()), 0, {});
  std::copy(v.begin(), v.end(), val_ptr(node(out)));
  return out;
}

Var Tape::scalar_const(double v) {
  Var out = push(Op::kConst, 1, 0, {});
  val_ptr(node(out))[0] = v;
  return out;
}

Var Tape::leaf(const std::string& name, const Tensor& t) {
  const int rows = t.rank() == 2 ? t.dim(0) : int(t.numel());
  const int cols = t.rank() == 2 ? t.dim(1) : 0;
  Var v = push(Op::kLeaf, rows, cols, {});
  std::copy(t.data(), t.data() + t.numel(), val_ptr(node(v)));
  leaves_.emplace_back(name, v.id);
  return v;
}

Var Tape::add(Var a, Var b) {
  check_same_len(a, b, "add");
  const int rows = node(a).rows, cols = node(a).cols, n = len(node(a));
  Var out = push(Op::kAdd, rows, cols, {a.id, b.id});
  const double* pa = val_ptr(node(a));
  const double* pb = val_ptr(node(b));
  double* po = val_ptr(node(out));
  for (int i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
  check_finite(out);
  return out;
}

Var Tape::sub(Var a, Var b) {
  check_same_len(a, b, "sub");
  const int rows = node(a).rows, cols = node(a).cols, n = len(node(a));
  Var out = push(Op::kSub, rows, cols, {a.id, b.id});
  const double* pa = val_ptr(node(a));
  const double* pb = val_ptr(node(b));
  double* po = val_ptr(node(out));
  for (int i = 0; i < n; ++i) po[i] = pa[i] - pb[i];
  check_finite(out);
  return out;
}

Var Tape::mul(Var a, Var b) {
  check_same_len(a, b, "mul");
  const int rows = node(a).rows, cols = node(a).cols, n = len(node(a));
  Var out = push(Op::kMul, rows, cols, {a.id, b.id});
  const double* pa = val_ptr(node(a));
  const double* pb = val_ptr(node(b));
  double* po = val_ptr(node(out));
  for (int i = 0; i < n; ++i) po[i] = pa[i] * pb[i];
  check_finite(out);
  return out;
}

Var Tape::scale(Var a, double c) {
  const int rows = node(a).rows, cols = node(a).cols, n = len(node(a));
  Var out = push(Op::kScale, rows, cols, {a.id});
  node(out).c = c;
  const double* pa = val_ptr(node(a));
  double* po = val_ptr(node(out));
  for (int i = 0; i < n; ++i) po[i] = c * pa[i];
  check_finite(out);
  return out;
}

Var Tape::tanh(Var a) {
  const int rows = node(a).rows, cols = node(a).cols, n = len(node(a));
  Var out = push(Op::kTanh, rows, cols, {a.id});
  const double* pa = val_ptr(node(a));
  double* po = val_ptr(node(out));
  for (int i = 0; i < n; ++i) po[i] = std::tanh(pa[i]);
  check_finite(out);
  return out;
}

Var Tape::sigmoid(Var a) {
  const int rows = node(a).rows, cols = node(a).cols, n = len(node(a));
  Var out = push(Op::kSigmoid, rows, cols, {a.id});
  const double* pa = val_ptr(node(a));
  double* po = val_ptr(node(out));
  for (int i = 0; i < n; ++i) po[i] = stable_sigmoid(pa[i]);
  check_finite(out);
  return out;
}

Var Tape::softplus_floor(Var a, double floor) {
  const int rows = node(a).rows, cols = node(a).cols, n = len(node(a));
  Var out = push(Op::kSoftplusFloor, rows, cols, {a.id});
  node(out).c = floor;
  const double* pa = val_ptr(node(a));
  double* po = val_ptr(node(out));
  for (int i = 0; i < n; ++i) po[i] = stable_softplus(pa[i]) + floor;
  check_finite(out);
  return out;
}

Var Tape::sum_all(Var a) {
  const int n = len(node(a));
  Var out = push(Op::kSumAll, 1, 0, {a.id});
  const double* pa = val_ptr(node(a));
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += pa[i];
  val_ptr(node(out))[0] = s;
  check_finite(out);
  return out;
}

Var Tape::add_many(const std::vector<Var>& terms) {
  if (terms.empty()) fail("add_many: empty term list");
  std::vector<int> par;
  par.reserve(terms.size());
  const int n = len(node(terms.front()));
  for (Var t : terms) {
    if (len(node(t)) != n) fail("add_many: length mismatch");
    par.push_back(t.id);
  }
  const int rows0 = node(terms.front()).rows, cols0 = node(terms.front()).cols;
  Var out = push(Op::kAddMany, rows0, cols0, par, {}, 0);
  double* po = val_ptr(node(out));
  for (Var t : terms) {
    const double* pt = val_ptr(node(t));
    for (int i = 0; i < n; ++i) po[i] += pt[i];
  }
  check_finite(out);
  return out;
}

Var Tape::concat(const std::vector<Var>& parts) {
  if (parts.empty()) fail("concat: empty part list");
  std::vector<int> par;
  int total = 0;
  for (Var p : parts) {
    par.push_back(p.id);
    total += len(node(p));
  }
  Var out = push(Op::kConcat, total, 0, par, {}, 0);
  double* po = val_ptr(node(out));
  for (Var p : parts) {
    const double* pp = val_ptr(node(p));
    const int l = len(node(p));
    std::copy(pp, pp + l, po);
    po += l;
  }
  check_finite(out);
  return out;
}

Var Tape::linear(Var w, Var b, Var x) {
  const Node& nw = node(w);
  if (nw.cols == 0) fail("linear: weight must be a matrix");
  const int m = nw.rows, n = nw.cols;
  if (len(node(x)) != n || len(node(b)) != m) fail("linear: shape mismatch");
  Var out = push(Op::kLinear, m, 0, {w.id, b.id, x.id});
  const double* pw = val_ptr(node(w));
  const double* pb = val_ptr(node(b));
  const double* px = val_ptr(node(x));
  double* po = val_ptr(node(out));
  for (int i = 0; i < m; ++i) {
    const double* row = pw + std::size_t(i) * n;
    double s = pb[i];
    for (int j = 0; j < n; ++j) s += row[j] * px[j];
    po[i] = s;
  }
  check_finite(out);
  return out;
}

Var Tape::linear_batch(Var w, Var b, Var x) {
  const Node& nw = node(w);
  const Node& nx = node(x);
  if (nw.cols == 0 || nx.cols == 0) fail("linear_batch: matrix inputs required");
  const int m = nw.rows, n = nw.cols, batch = nx.rows;
  if (nx.cols != n || len(node(b)) != m) fail("linear_batch: shape mismatch");
  Var out = push(Op::kLinearBatch, batch, m, {w.id, b.id, x.id});
  const double* pw = val_ptr(node(w));
  const double* pb = val_ptr(node(b));
  const double* px = val_ptr(node(x));
  double* po = val_ptr(node(out));
  for (int bi = 0; bi < batch; ++bi) {
    const double* xr = px + std::size_t(bi) * n;
    double* orow = po + std::size_t(bi) * m;
    for (int i = 0; i < m; ++i) {
      const double* wrow = pw + std::size_t(i) * n;
      double s = pb[i];
      for (int j = 0; j < n; ++j) s += wrow[j] * xr[j];
      orow[i] = s;
    }
  }
  check_finite(out);
  return out;
}

Var Tape::embed_row(Var table, int row) {
  const int rows = node(table).rows, cols = node(table).cols;
  if (cols == 0) fail("embed_row: table must be a matrix");
  if (row < 0 || row >= rows) fail("embed_row: row index out of range");
  Var out = push(Op::kEmbedRow, cols, 0, {table.id}, {row});
  const double* pt = val_ptr(node(table)) + std::size_t(row) * cols;
  std::copy(pt, pt + cols, val_ptr(node(out)));
  return out;
}

Var Tape::gru_cell(const GruWeights& w, Var h_prev, Var x) {
  const int hd = len(node(h_prev));
  const int xd = len(node(x));
  auto check_gate = [&](Var wm, Var um, Var bv) {
    const Node& nw = node(wm);
    const Node& nu = node(um);
    if (nw.rows != hd || nw.cols != xd || nu.rows != hd || nu.cols != hd ||
        len(node(bv)) != hd)
      fail("gru_cell: shape mismatch");
  };
  check_gate(w.wr, w.ur, w.br);
  check_gate(w.wu, w.uu, w.bu);
  check_gate(w.wc, w.uc, w.bc);
  Var out = push(Op::kGruCell, hd, 0,
                 {h_prev.id, x.id, w.wr.id, w.ur.id, w.br.id, w.wu.id, w.uu.id,
                  w.bu.id, w.wc.id, w.uc.id, w.bc.id},
                 {}, std::size_t(3 * hd));
  Node& no = node(out);
  const double* ph = val_ptr(node(h_prev));
  const double* px = val_ptr(node(x));
  auto gate = [&](Var wm, Var um, Var bv, const double* hin, double* dst) {
    const double* pw = val_ptr(node(wm));
    const double* pu = val_ptr(node(um));
    const double* pb = val_ptr(node(bv));
    for (int i = 0; i < hd; ++i) {
      const double* wrow = pw + std::size_t(i) * xd;
      const double* urow = pu + std::size_t(i) * hd;
      double s = pb[i];
      for (int j = 0; j < xd; ++j) s += wrow[j] * px[j];
      for (int j = 0; j < hd; ++j) s += urow[j] * hin[j];
      dst[i] = s;
    }
  };
  double* r = aux_dbl_.data() + no.aux_d;
  double* u = r + hd;
  double* c = u + hd;
  gate(w.wr, w.ur, w.br, ph, r);
  gate(w.wu, w.uu, w.bu, ph, u);
  for (int i = 0; i < hd; ++i) {
    r[i] = stable_sigmoid(r[i]);
    u[i] = stable_sigmoid(u[i]);
  }
  std::vector<double> rh(static_cast<std::size_t>(hd));
  for (int i = 0; i < hd; ++i) rh[i] = r[i] * ph[i];
  gate(w.wc, w.uc, w.bc, rh.data(), c);
  double* po = val_ptr(no);
  for (int i = 0; i < hd; ++i) {
    c[i] = std::tanh(c[i]);
    po[i] = (1.0 - u[i]) * ph[i] + u[i] * c[i];
  }
  check_finite(out);
  return out;
}

Var Tape::reparam(Var mu, Var sigma, const std::vector<double>& noise) {
  check_same_len(mu, sigma, "reparam");
  const int n = len(node(mu));
  if (int(noise.size()) != n) fail("reparam: noise length mismatch");
  const double* ps = val_ptr(node(sigma));
  for (int i = 0; i < n; ++i)
    if (ps[i] <= 0.0) fail("reparam: sigma must be positive");
  Var out = push(Op::kReparam, n, 0, {mu.id, sigma.id}, {}, std::size_t(n));
  Node& no = node(out);
  std::copy(noise.begin(), noise.end(), aux_dbl_.begin() + no.aux_d);
  const double* pm = val_ptr(node(mu));
  ps = val_ptr(node(sigma));  // re-acquire: push() may reallocate data_
  double* po = val_ptr(no);
  for (int i = 0; i < n; ++i) po[i] = pm[i] + ps[i] * noise[std::size_t(i)];
  check_finite(out);
  return out;
}

Var Tape::categorical_nll(Var logits, int target) {
  const int n = len(node(logits));
  if (target < 0 || target >= n) fail("categorical_nll: target out of range");
  Var out = push(Op::kCatNll, 1, 0, {logits.id}, {target}, std::size_t(n));
  Node& no = node(out);
  const double* pl = val_ptr(node(logits));
  const double lse = log_sum_exp_raw(pl, n);
  double* probs = aux_dbl_.data() + no.aux_d;
  for (int i = 0; i < n; ++i) probs[i] = std::exp(pl[i] - lse);
  val_ptr(no)[0] = lse - pl[target];
  check_finite(out);
  return out;
}

Var Tape::categorical_nll_batch(Var logits, const std::vector<int>& targets) {
  const Node& nl = node(logits);
  if (nl.cols == 0) fail("categorical_nll_batch: logits must be a matrix");
  const int batch = nl.rows, n = nl.cols;
  if (int(targets.size()) != batch) fail("categorical_nll_batch: target count mismatch");
  std::vector<int> aux(targets);
  Var out = push(Op::kCatNllBatch, 1, 0, {logits.id}, aux, std::size_t(batch) * n);
  Node& no = node(out);
  const double* pl = val_ptr(node(logits));
  double* probs = aux_dbl_.data() + no.aux_d;
  double total = 0.0;
  for (int b = 0; b < batch; ++b) {
    const int t = targets[std::size_t(b)];
    if (t < 0 || t >= n) fail("categorical_nll_batch: target out of range");
    const double* row = pl + std::size_t(b) * n;
    const double lse = log_sum_exp_raw(row, n);
    double* prow = probs + std::size_t(b) * n;
    for (int i = 0; i < n; ++i) prow[i] = std::exp(row[i] - lse);
    total += lse - row[t];
  }
  val_ptr(no)[0] = total / batch;
  check_finite(out);
  return out;
}

Var Tape::mse_batch(Var pred, const std::vector<double>& targets) {
  const int n = len(node(pred));
  if (int(targets.size()) != n) fail("mse_batch: target count mismatch");
  Var out = push(Op::kMseBatch, 1, 0, {pred.id}, {}, std::size_t(n));
  Node& no = node(out);
  std::copy(targets.begin(), targets.end(), aux_dbl_.begin() + no.aux_d);
  const double* pp = val_ptr(node(pred));
  double s = 0.0;
  for (int i = 0; i < n; ++i) {
    const double d = pp[i] - targets[std::size_t(i)];
    s += d * d;
  }
  val_ptr(no)[0] = s / n;
  check_finite(out);
  return out;
}

Var Tape::kl_diag_gaussian(Var mu_q, Var sigma_q, Var mu_p, Var sigma_p) {
  check_same_len(mu_q, sigma_q, "kl_diag_gaussian");
  check_same_len(mu_q, mu_p, "kl_diag_gaussian");
  check_same_len(mu_q, sigma_p, "kl_diag_gaussian");
  const int n = len(node(mu_q));
  const double* sq = val_ptr(node(sigma_q));
  const double* sp = val_ptr(node(sigma_p));
  for (int i = 0; i < n; ++i)
    if (sq[i] <= 0.0 || sp[i] <= 0.0) fail("kl_diag_gaussian: sigma must be positive");
  Var out = push(Op::kKlDiagGaussian, 1, 0, {mu_q.id, sigma_q.id, mu_p.id, sigma_p.id});
  const double* mq = val_ptr(node(mu_q));
  const double* mp = val_ptr(node(mu_p));
  sq = val_ptr(node(sigma_q));  // re-acquire: push() may reallocate data_
  sp = val_ptr(node(sigma_p));
  double s = 0.0;
  for (int i = 0; i < n; ++i) {
    const double dm = mq[i] - mp[i];
    s += std::log(sp[i] / sq[i]) + (sq[i] * sq[i] + dm * dm) / (2.0 * sp[i] * sp[i]) - 0.5;
  }
  val_ptr(node(out))[0] = s;
  check_finite(out);
  return out;
}

int Tape::length(Var v) const { return len(node(v)); }

std::span<const double> Tape::value(Var v) const {
  const Node& n = node(v);
  return {val_ptr(n), std::size_t(len(n))};
}

std::span<const double> Tape::grad(Var v) const {
  const Node& n = node(v);
  return {grd_ptr(n), std::size_t(len(n))};
}

double Tape::scalar_value(Var v) const {
  if (len(node(v)) != 1) fail("scalar_value: node is not scalar");
  return val_ptr(node(v))[0];
}

Tensor Tape::value_tensor(Var v) const {
  const Node& n = node(v);
  std::vector<int> shape = n.cols ? std::vector<int>{n.rows, n.cols}
                                  : std::vector<int>{n.rows};
  return Tensor(std::move(shape),
                std::vector<double>(val_ptr(n), val_ptr(n) + len(n)));
}

Tensor Tape::grad_tensor(Var v) const {
  const Node& n = node(v);
  std::vector<int> shape = n.cols ? std::vector<int>{n.rows, n.cols}
                                  : std::vector<int>{n.rows};
  return Tensor(std::move(shape),
                std::vector<double>(grd_ptr(n), grd_ptr(n) + len(n)));
}

void Tape::backward(Var root) {
  if (root.tape != this || root.id < 0 || root.id >= int(nodes_.size()))
    fail("backward: root is not on this tape");
  if (len(node(root)) != 1) fail("backward: root must be scalar");
  if (backward_done_) fail("backward: tape already swept; clear() first");
  backward_done_ = true;
  grd_ptr(node(root))[0] = 1.0;
  for (int id = root.id; id >= 0; --id) backward_node(id);
}

void Tape::backward_node(int id) {
  Node& n = nodes_[std::size_t(id)];
  const double* g = grd_ptr(n);
  const int* par = parents_.data() + n.par;
  auto pgrad = [&](int k) { return grd_ptr(nodes_[std::size_t(par[k])]); };
  auto pval = [&](int k) -> const double* {
    return val_ptr(nodes_[std::size_t(par[k])]);
  };
  auto plen = [&](int k) { return len(nodes_[std::size_t(par[k])]); };
  const int l = len(n);

  switch (n.op) {
    case Op::kConst:
    case Op::kLeaf:
      break;
    case Op::kAdd: {
      double* ga = pgrad(0);
      double* gb = pgrad(1);
      for (int i = 0; i < l; ++i) {
        ga[i] += g[i];
        gb[i] += g[i];
      }
      break;
    }
    case Op::kSub: {
      double* ga = pgrad(0);
      double* gb = pgrad(1);
      for (int i = 0; i < l; ++i) {
        ga[i] += g[i];
        gb[i] -= g[i];
      }
      break;
    }
    case Op::kMul: {
      double* ga = pgrad(0);
      double* gb = pgrad(1);
      const double* a = pval(0);
      const double* b = pval(1);
      for (int i = 0; i < l; ++i) {
        ga[i] += g[i] * b[i];
        gb[i] += g[i] * a[i];
      }
      break;
    }
    case Op::kScale: {
      double* ga = pgrad(0);
      for (int i = 0; i < l; ++i) ga[i] += n.c * g[i];
      break;
    }
    case Op::kTanh: {
      double* ga = pgrad(0);
      const double* y = val_ptr(n);
      for (int i = 0; i < l; ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
      break;
    }
    case Op::kSigmoid: {
      double* ga = pgrad(0);
      const double* y = val_ptr(n);
      for (int i = 0; i < l; ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
      break;
    }
    case Op::kSoftplusFloor: {
      double* ga = pgrad(0);
      const double* x = pval(0);
      for (int i = 0; i < l; ++i) ga[i] += g[i] * stable_sigmoid(x[i]);
      break;
    }
    case Op::kSumAll: {
      double* ga = pgrad(0);
      const int pl = plen(0);
      for (int i = 0; i < pl; ++i) ga[i] += g[0];
      break;
    }
    case Op::kAddMany: {
      for (std::uint32_t k = 0; k < n.npar; ++k) {
        double* gp = pgrad(int(k));
        for (int i = 0; i < l; ++i) gp[i] += g[i];
      }
      break;
    }
    case Op::kConcat: {
      int off = 0;
      for (std::uint32_t k = 0; k < n.npar; ++k) {
        double* gp = pgrad(int(k));
        const int pl = plen(int(k));
        for (int i = 0; i < pl; ++i) gp[i] += g[off + i];
        off += pl;
      }
      break;
    }
    case Op::kLinear: {
      const int m = l;
      const int nn = plen(2);
      double* gw = pgrad(0);
      double* gb = pgrad(1);
      double* gx = pgrad(2);
      const double* w = pval(0);
      const double* x = pval(2);
      for (int i = 0; i < m; ++i) {
        const double gi = g[i];
        if (gi == 0.0) continue;
        double* gwrow = gw + std::size_t(i) * nn;
        const double* wrow = w + std::size_t(i) * nn;
        gb[i] += gi;
        for (int j = 0; j < nn; ++j) {
          gwrow[j] += gi * x[j];
          gx[j] += gi * wrow[j];
        }
      }
      break;
    }
    case Op::kLinearBatch: {
      const int batch = n.rows, m = n.cols;
      const int nn = nodes_[std::size_t(par[0])].cols;
      double* gw = pgrad(0);
      double* gb = pgrad(1);
      double* gx = pgrad(2);
      const double* w = pval(0);
      const double* x = pval(2);
      for (int b = 0; b < batch; ++b) {
        const double* grow = g + std::size_t(b) * m;
        const double* xrow = x + std::size_t(b) * nn;
        double* gxrow = gx + std::size_t(b) * nn;
        for (int i = 0; i < m; ++i) {
          const double gi = grow[i];
          if (gi == 0.0) continue;
          gb[i] += gi;
          double* gwrow = gw + std::size_t(i) * nn;
          const double* wrow = w + std::size_t(i) * nn;
          for (int j = 0; j < nn; ++j) {
            gwrow[j] += gi * xrow[j];
            gxrow[j] += gi * wrow[j];
          }
        }
      }
      break;
    }
    case Op::kEmbedRow: {
      const int row = aux_int_[n.aux_i];
      double* gt = pgrad(0) + std::size_t(row) * l;
      for (int i = 0; i < l; ++i) gt[i] += g[i];
      break;
    }
    case Op::kGruCell: {
      const int hd = l;
      const int xd = plen(1);
      const double* h = pval(0);
      const double* x = pval(1);
      const double* r = aux_dbl_.data() + n.aux_d;
      const double* u = r + hd;
      const double* c = u + hd;
      double* gh = pgrad(0);
      double* gx = pgrad(1);
      // gate weight order: wr ur br wu uu bu wc uc bc -> parents 2..10
      double* gwr = pgrad(2);
      double* gur = pgrad(3);
      double* gbr = pgrad(4);
      double* gwu = pgrad(5);
      double* guu = pgrad(6);
      double* gbu = pgrad(7);
      double* gwc = pgrad(8);
      double* guc = pgrad(9);
      double* gbc = pgrad(10);
      const double* wr = pval(2);
      const double* ur = pval(3);
      const double* wu = pval(5);
      const double* uu = pval(6);
      const double* wc = pval(8);
      const double* uc = pval(9);
      std::vector<double> gr(std::size_t(hd), 0.0);
      // h' = (1-u) h + u c
      for (int i = 0; i < hd; ++i) gh[i] += g[i] * (1.0 - u[i]);
      // candidate branch
      for (int i = 0; i < hd; ++i) {
        const double gc_pre = g[i] * u[i] * (1.0 - c[i] * c[i]);
        if (gc_pre == 0.0) continue;
        gbc[i] += gc_pre;
        double* gwrow = gwc + std::size_t(i) * xd;
        const double* ucrow = uc + std::size_t(i) * hd;
        double* gucrow = guc + std::size_t(i) * hd;
        const double* wcrow = wc + std::size_t(i) * xd;
        for (int j = 0; j < xd; ++j) {
          gwrow[j] += gc_pre * x[j];
          gx[j] += gc_pre * wcrow[j];
        }
        for (int j = 0; j < hd; ++j) {
          gucrow[j] += gc_pre * r[j] * h[j];
          const double grh = gc_pre * ucrow[j];
          gr[std::size_t(j)] += grh * h[j];
          gh[j] += grh * r[j];
        }
      }
      // update gate branch
      for (int i = 0; i < hd; ++i) {
        const double gu_pre = g[i] * (c[i] - h[i]) * u[i] * (1.0 - u[i]);
        if (gu_pre == 0.0) continue;
        gbu[i] += gu_pre;
        double* gwrow = gwu + std::size_t(i) * xd;
        double* gurow = guu + std::size_t(i) * hd;
        const double* wurow = wu + std::size_t(i) * xd;
        const double* uurow = uu + std::size_t(i) * hd;
        for (int j = 0; j < xd; ++j) {
          gwrow[j] += gu_pre * x[j];
          gx[j] += gu_pre * wurow[j];
        }
        for (int j = 0; j < hd; ++j) {
          gurow[j] += gu_pre * h[j];
          gh[j] += gu_pre * uurow[j];
        }
      }
      // reset gate branch
      for (int i = 0; i < hd; ++i) {
        const double gr_pre = gr[std::size_t(i)] * r[i] * (1.0 - r[i]);
        if (gr_pre == 0.0) continue;
        gbr[i] += gr_pre;
        double* gwrow = gwr + std::size_t(i) * xd;
        double* gurow = gur + std::size_t(i) * hd;
        const double* wrrow = wr + std::size_t(i) * xd;
        const double* urrow = ur + std::size_t(i) * hd;
        for (int j = 0; j < xd; ++j) {
          gwrow[j] += gr_pre * x[j];
          gx[j] += gr_pre * wrrow[j];
        }
        for (int j = 0; j < hd; ++j) {
          gurow[j] += gr_pre * h[j];
          gh[j] += gr_pre * urrow[j];
        }
      }
      break;
    }
    case Op::kReparam: {
      double* gm = pgrad(0);
      double* gs = pgrad(1);
      const double* noise = aux_dbl_.data() + n.aux_d;
      for (int i = 0; i < l; ++i) {
        gm[i] += g[i];
        gs[i] += g[i] * noise[i];
      }
      break;
    }
    case Op::kCatNll: {
      const int target = aux_int_[n.aux_i];
      const int nn = plen(0);
      double* gl = pgrad(0);
      const double* probs = aux_dbl_.data() + n.aux_d;
      for (int i = 0; i < nn; ++i)
        gl[i] += g[0] * (probs[i] - (i == target ? 1.0 : 0.0));
      break;
    }
    case Op::kCatNllBatch: {
      const Node& nl = nodes_[std::size_t(par[0])];
      const int batch = nl.rows, nn = nl.cols;
      double* gl = pgrad(0);
      const double* probs = aux_dbl_.data() + n.aux_d;
      const int* targets = aux_int_.data() + n.aux_i;
      const double s = g[0] / batch;
      for (int b = 0; b < batch; ++b) {
        double* grow = gl + std::size_t(b) * nn;
        const double* prow = probs + std::size_t(b) * nn;
        const int t = targets[b];
        for (int i = 0; i < nn; ++i)
          grow[i] += s * (prow[i] - (i == t ? 1.0 : 0.0));
      }
      break;
    }
    case Op::kMseBatch: {
      const int nn = plen(0);
      double* gp = pgrad(0);
      const double* pr = pval(0);
      const double* t = aux_dbl_.data() + n.aux_d;
      const double s = 2.0 * g[0] / nn;
      for (int i = 0; i < nn; ++i) gp[i] += s * (pr[i] - t[i]);
      break;
    }
    case Op::kKlDiagGaussian: {
      const int nn = plen(0);
      double* gmq = pgrad(0);
      double* gsq = pgrad(1);
      double* gmp = pgrad(2);
      double* gsp = pgrad(3);
      const double* mq = pval(0);
      const double* sq = pval(1);
      const double* mp = pval(2);
      const double* sp = pval(3);
      for (int i = 0; i < nn; ++i) {
        const double dm = mq[i] - mp[i];
        const double sp2 = sp[i] * sp[i];
        gmq[i] += g[0] * dm / sp2;
        gmp[i] -= g[0] * dm / sp2;
        gsq[i] += g[0] * (-1.0 / sq[i] + sq[i] / sp2);
        gsp[i] += g[0] * (1.0 / sp[i] - (sq[i] * sq[i] + dm * dm) / (sp2 * sp[i]));
      }
      break;
    }
  }
}

std::map<std::string, Tensor> Tape::forward_backward(Var root) {
  backward(root);
  std::map<std::string, Tensor> grads;
  for (const auto& [name, id] : leaves_)
    grads[name] = grad_tensor(Var{this, id});
  return grads;
}

void Tape::clear() {
  nodes_.clear();
  data_.clear();
  parents_.clear();
  aux_int_.clear();
  aux_dbl_.clear();
  leaves_.clear();
  backward_done_ = false;
}

}  // namespace stril
