#include "stril/indicators.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "stril/stats.hpp"

namespace stril {

double randomness_indicator(const ParamStore& params, const PVRNNConfig& cfg,
                            const TrainingSeq& seq, const Tensor& l) {
  Rng noise = Rng(cfg.seed).derive("ri", Rng::hash(seq.id));
  const auto score = teacher_forced_score(params, cfg, *seq.observations,
                                          *seq.actions, l, {}, noise);
  double ri = 0.0;
  for (double h : score.step_entropy) ri += h;
  return ri;
}

namespace {

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

}  // namespace

std::optional<double> el_delta(const std::vector<double>& target_l,
                               const std::vector<LabeledPoint>& labeled, double delta) {
  if (delta <= 0.0) throw std::invalid_argument("el_delta: delta must be positive");
  const double d2 = delta * delta;
  double numerator = 0.0;
  long denominator = 0;
  for (const auto& point : labeled) {
    if (point.l.size() != target_l.size())
      throw std::invalid_argument("el_delta: representation size mismatch");
    if (sq_dist(point.l, target_l) >= d2) continue;
    if (point.reward <= 0.0) {
      numerator += std::max(-point.reward, 0.0);
      denominator += 1;
    }
  }
  if (denominator == 0) return std::nullopt;
  return numerator / double(denominator);
}

double auto_delta(const std::vector<std::vector<double>>& targets,
                  const std::vector<LabeledPoint>& labeled, int min_neighbors) {
  if (targets.empty() || labeled.empty())
    throw std::invalid_argument("auto_delta: empty inputs");
  // candidate deltas: the sorted target-to-labeled distances
  std::vector<double> dists;
  dists.reserve(targets.size() * labeled.size());
  for (const auto& t : targets)
    for (const auto& p : labeled) dists.push_back(std::sqrt(sq_dist(t, p.l)));
  std::sort(dists.begin(), dists.end());
  const double want = double(min_neighbors) * double(targets.size());
  // average neighbor count at delta = #distances strictly below delta / #targets
  const std::size_t idx =
      std::min(std::size_t(std::max(want - 1.0, 0.0)), dists.size() - 1);
  return dists[idx] * (1.0 + 1e-12) + 1e-12;
}

namespace {

Tensor to_row_matrix(const std::vector<std::vector<double>>& rows) {
  const int n = int(rows.size());
  const int d = int(rows.front().size());
  Tensor m({n, d});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) m.at(i, j) = rows[std::size_t(i)][std::size_t(j)];
  return m;
}

}  // namespace

ELEstimator train_el_estimator(const std::vector<LabeledPoint>& labeled,
                               const ELEstimatorConfig& cfg) {
  if (int(labeled.size()) < cfg.min_losing)
    throw std::invalid_argument("train_el_estimator: need at least " +
                                std::to_string(cfg.min_losing) + " labeled trajectories");
  std::vector<std::vector<double>> inputs;
  std::vector<double> targets;
  for (const auto& p : labeled) {
    if (p.reward <= 0.0) {
      inputs.push_back(p.l);
      targets.push_back(std::max(-p.reward, 0.0));
    }
  }
  if (int(inputs.size()) < cfg.min_losing)
    throw std::invalid_argument(
        "train_el_estimator: fewer than " + std::to_string(cfg.min_losing) +
        " losing labeled trajectories; the estimator would be unreliable");
  const int l_dim = int(inputs.front().size());
  // standardized regression targets keep the fit scale-free; the affine
  // un-scaling lives in the estimator parameters
  double mean = 0.0;
  for (double t : targets) mean += t;
  mean /= double(targets.size());
  double var = 0.0;
  for (double t : targets) var += (t - mean) * (t - mean);
  const double stddev = std::sqrt(std::max(var / double(targets.size()), 1e-12));
  std::vector<double> scaled(targets);
  for (double& t : scaled) t = (t - mean) / stddev;
  Rng rng(cfg.seed);
  Rng init = rng.derive("el-init");
  ELEstimator est;
  est.l_dim = l_dim;
  est.params.emplace("l1/w", Tensor::uniform_init({cfg.hidden, l_dim},
                                                  1.0 / std::sqrt(double(l_dim)), init));
  est.params.emplace("l1/b", Tensor::zeros({cfg.hidden}));
  est.params.emplace("out/w", Tensor::uniform_init({1, cfg.hidden},
                                                   1.0 / std::sqrt(double(cfg.hidden)), init));
  est.params.emplace("out/b", Tensor::zeros({1}));
  est.params.emplace("norm/mean", Tensor::scalar(mean));
  est.params.emplace("norm/std", Tensor::scalar(stddev));
  ParamStore trainable;
  for (const auto& [name, t] : est.params)
    if (name.rfind("norm/", 0) != 0) trainable.emplace(name, t);
  AdamState adam = AdamState::create(trainable, cfg.lr);
  const Tensor x = to_row_matrix(inputs);
  Tape tape;
  for (int step = 0; step < cfg.steps; ++step) {
    tape.clear();
    std::map<std::string, Var> vars;
    for (const auto& [name, t] : trainable) vars.emplace(name, tape.leaf(name, t));
    Var hid = tape.tanh(tape.linear_batch(vars.at("l1/w"), vars.at("l1/b"), tape.constant(x)));
    Var pred = tape.linear_batch(vars.at("out/w"), vars.at("out/b"), hid);
    Var loss = tape.mse_batch(pred, scaled);
    auto grads = tape.forward_backward(loss);
    adam_step(trainable, grads, adam);
  }
  for (const auto& [name, t] : trainable) est.params.at(name) = t;
  return est;
}

double estimate_el(const ELEstimator& estimator, const std::vector<double>& l) {
  if (int(l.size()) != estimator.l_dim)
    throw std::invalid_argument("estimate_el: representation size mismatch");
  const Tensor& w1 = estimator.params.at("l1/w");
  const Tensor& b1 = estimator.params.at("l1/b");
  const Tensor& w2 = estimator.params.at("out/w");
  const Tensor& b2 = estimator.params.at("out/b");
  const int hidden = w1.dim(0);
  double out = b2[0];
  for (int i = 0; i < hidden; ++i) {
    double s = b1[std::size_t(i)];
    for (int j = 0; j < estimator.l_dim; ++j) s += w1.at(i, j) * l[std::size_t(j)];
    out += w2.at(0, i) * std::tanh(s);
  }
  if (estimator.params.count("norm/std"))
    out = out * estimator.params.at("norm/std")[0] + estimator.params.at("norm/mean")[0];
  return std::max(out, 0.0);
}

std::set<std::string> percentile_filter(const std::vector<IndicatorRecord>& records,
                                        IndicatorField field, double p) {
  if (p < 0.0 || p > 1.0)
    throw std::invalid_argument("percentile_filter: p outside [0, 1]");
  auto value_of = [&](const IndicatorRecord& r) -> double {
    switch (field) {
      case IndicatorField::kRi: return r.ri;
      case IndicatorField::kEl:
        if (!r.el_estimate.has_value())
          throw std::invalid_argument("percentile_filter: record '" + r.traj_id +
                                      "' has no el estimate");
        return *r.el_estimate;
      case IndicatorField::kElDelta:
        if (!r.el_delta.has_value())
          throw std::invalid_argument("percentile_filter: record '" + r.traj_id +
                                      "' has no el_delta value");
        return *r.el_delta;
    }
    throw std::logic_error("percentile_filter: unhandled field");
  };
  std::set<std::string> kept;
  if (records.empty()) return kept;
  if (p == 1.0) {  // filters none of the data
    for (const auto& r : records) kept.insert(r.traj_id);
    return kept;
  }
  std::vector<double> values;
  values.reserve(records.size());
  for (const auto& r : records) values.push_back(value_of(r));
  const double threshold = quantile(values, p);
  for (const auto& r : records)
    if (value_of(r) < threshold) kept.insert(r.traj_id);
  return kept;
}

IndicatorField parse_indicator_field(const std::string& name) {
  if (name == "ri") return IndicatorField::kRi;
  if (name == "el") return IndicatorField::kEl;
  if (name == "el_delta") return IndicatorField::kElDelta;
  throw std::invalid_argument("unknown indicator field '" + name + "' (want ri|el|el_delta)");
}

std::vector<IndicatorRecord> compute_indicators(const Dataset& dataset,
                                                const ParamStore& params,
                                                const PVRNNConfig& cfg,
                                                const RepTable& reps,
                                                const IndicatorConfig& icfg) {
  std::vector<IndicatorRecord> records;
  std::vector<LabeledPoint> labeled;
  std::vector<std::vector<double>> all_reps;
  for (const auto& traj : dataset.trajectories) {
    auto it = reps.find(traj.id);
    if (it == reps.end())
      throw std::runtime_error("compute_indicators: no representation for '" + traj.id + "'");
    all_reps.push_back(it->second.values());
    if (traj.reward.has_value())
      labeled.push_back(LabeledPoint{it->second.values(), *traj.reward});
  }

  std::optional<ELEstimator> estimator;
  if (int(labeled.size()) >= icfg.min_losing_labeled) {
    long losing = 0;
    for (const auto& p : labeled) losing += p.reward <= 0.0 ? 1 : 0;
    if (losing >= icfg.min_losing_labeled) {
      ELEstimatorConfig est_cfg = icfg.estimator;
      est_cfg.min_losing = icfg.min_losing_labeled;
      estimator = train_el_estimator(labeled, est_cfg);
    }
  }
  const double delta = icfg.delta > 0.0
                           ? icfg.delta
                           : (labeled.empty() ? 1.0
                                              : auto_delta(all_reps, labeled,
                                                           icfg.min_neighbors));

  std::size_t idx = 0;
  for (const auto& traj : dataset.trajectories) {
    IndicatorRecord rec;
    rec.traj_id = traj.id;
    TrainingSeq seq;
    seq.id = traj.id;
    seq.observations = &traj.observations;
    seq.actions = &traj.actions;
    rec.ri = randomness_indicator(params, cfg, seq, reps.at(traj.id));
    if (!labeled.empty())
      rec.el_delta = el_delta(all_reps[idx], labeled, delta);
    if (estimator.has_value())
      rec.el_estimate = estimate_el(*estimator, all_reps[idx]);
    rec.reward = traj.reward;
    records.push_back(std::move(rec));
    ++idx;
  }
  return records;
}

std::string indicators_csv(const std::vector<IndicatorRecord>& records) {
  std::ostringstream os;
  os << "traj_id,ri,el_delta,el_estimate,reward,labeled\n";
  char buf[64];
  for (const auto& r : records) {
    os << r.traj_id << ',';
    std::snprintf(buf, sizeof(buf), "%.17g", r.ri);
    os << buf << ',';
    if (r.el_delta.has_value()) {
      std::snprintf(buf, sizeof(buf), "%.17g", *r.el_delta);
      os << buf;
    }
    os << ',';
    if (r.el_estimate.has_value()) {
      std::snprintf(buf, sizeof(buf), "%.17g", *r.el_estimate);
      os << buf;
    }
    os << ',';
    if (r.reward.has_value()) {
      std::snprintf(buf, sizeof(buf), "%.17g", *r.reward);
      os << buf;
    }
    os << ',' << (r.reward.has_value() ? 1 : 0) << '\n';
  }
  return os.str();
}

std::vector<IndicatorRecord> parse_indicators_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  std::vector<IndicatorRecord> records;
  bool header = true;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (header) {
      header = false;
      continue;
    }
    std::istringstream ls(line);
    std::string field;
    IndicatorRecord rec;
    std::getline(ls, rec.traj_id, ',');
    std::getline(ls, field, ',');
    rec.ri = std::stod(field);
    std::getline(ls, field, ',');
    if (!field.empty()) rec.el_delta = std::stod(field);
    std::getline(ls, field, ',');
    if (!field.empty()) rec.el_estimate = std::stod(field);
    std::getline(ls, field, ',');
    if (!field.empty()) rec.reward = std::stod(field);
    records.push_back(std::move(rec));
  }
  return records;
}

}  // namespace stril
