#include "stril/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "stril/checkpoint.hpp"
#include "stril/plot.hpp"
#include "stril/sha256.hpp"
#include "stril/toymodel.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace stril {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string read_text_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open '" + path + "'");
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write '" + path + "'");
  os << text;
}

}  // namespace

KvMap parse_config_text(const std::string& text) {
  KvMap kv;
  std::istringstream is(text);
  std::string line, section;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (t.front() == '[' && t.back() == ']') {
      section = trim(t.substr(1, t.size() - 2));
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config line " + std::to_string(line_no) +
                               ": expected 'key = value'");
    std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (!section.empty()) key = section + "." + key;
    kv[key] = value;
  }
  return kv;
}

KvMap load_config_file(const std::string& path) {
  return parse_config_text(read_text_file(path));
}

const std::vector<std::string>& known_config_keys() {
  static const std::vector<std::string> keys = {
      "game.name", "game.rounds",
      "demonstrators.roster",
      "dataset.games_per_pair", "dataset.label_fraction",
      "pvrnn.z_dim", "pvrnn.l_dim", "pvrnn.h_dim", "pvrnn.r_dim", "pvrnn.lr",
      "pvrnn.epochs", "pvrnn.batch_size", "pvrnn.grad_clip",
      "indicators.delta", "indicators.min_neighbors", "indicators.estimator_hidden",
      "indicators.estimator_steps", "indicators.estimator_lr",
      "indicators.min_losing_labeled",
      "filter.field", "filter.p",
      "bc.hidden", "bc.epochs", "bc.minibatches", "bc.batch_size", "bc.lr",
      "eval.n_games",
      "run.seed", "run.out_dir",
  };
  return keys;
}

std::string canonical_config_string(const KvMap& kv) {
  std::ostringstream os;
  for (const auto& [k, v] : kv) os << k << '=' << v << '\n';
  return os.str();
}

std::uint64_t derive_seed(std::uint64_t seed, const std::string& tag) {
  return Rng(seed).derive(tag).next_u64();
}

GameSpec PipelineConfig::game_spec() const {
  if (game == "rps") return rps_spec(rps_rounds);
  if (game == "connect4") return connect4_spec();
  throw std::runtime_error("config key 'game.name': unknown game '" + game + "'");
}

std::vector<PolicySpec> PipelineConfig::demonstrators() const {
  const GameSpec spec = game_spec();
  if (roster.empty()) return default_roster(spec);
  std::vector<PolicySpec> out;
  for (const auto& name : roster) out.push_back(parse_policy(name, spec));
  return out;
}

PipelineConfig make_pipeline_config(const KvMap& kv) {
  const auto& known = known_config_keys();
  for (const auto& [key, value] : kv) {
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw std::runtime_error("config validation: unknown key '" + key + "'");
  }
  PipelineConfig cfg;
  auto get = [&](const char* key) -> const std::string* {
    auto it = kv.find(key);
    return it == kv.end() ? nullptr : &it->second;
  };
  auto get_int = [&](const char* key, int& dst) {
    if (const auto* v = get(key)) {
      try {
        dst = std::stoi(*v);
      } catch (const std::exception&) {
        throw std::runtime_error(std::string("config key '") + key + "': bad integer '" + *v + "'");
      }
    }
  };
  auto get_double = [&](const char* key, double& dst) {
    if (const auto* v = get(key)) {
      try {
        dst = std::stod(*v);
      } catch (const std::exception&) {
        throw std::runtime_error(std::string("config key '") + key + "': bad number '" + *v + "'");
      }
    }
  };
  if (const auto* v = get("game.name")) cfg.game = *v;
  get_int("game.rounds", cfg.rps_rounds);
  if (const auto* v = get("demonstrators.roster")) {
    std::istringstream is(*v);
    std::string tok;
    while (std::getline(is, tok, ',')) {
      tok = trim(tok);
      if (!tok.empty()) cfg.roster.push_back(tok);
    }
  }
  get_int("dataset.games_per_pair", cfg.games_per_pair);
  get_double("dataset.label_fraction", cfg.label_fraction);
  get_int("pvrnn.z_dim", cfg.pvrnn.z_dim);
  get_int("pvrnn.l_dim", cfg.pvrnn.l_dim);
  get_int("pvrnn.h_dim", cfg.pvrnn.h_dim);
  get_int("pvrnn.r_dim", cfg.pvrnn.r_dim);
  get_double("pvrnn.lr", cfg.pvrnn.lr);
  get_int("pvrnn.epochs", cfg.pvrnn.epochs);
  get_int("pvrnn.batch_size", cfg.pvrnn.batch_size);
  get_double("pvrnn.grad_clip", cfg.pvrnn.grad_clip);
  get_double("indicators.delta", cfg.indicators.delta);
  get_int("indicators.min_neighbors", cfg.indicators.min_neighbors);
  get_int("indicators.estimator_hidden", cfg.indicators.estimator.hidden);
  get_int("indicators.estimator_steps", cfg.indicators.estimator.steps);
  get_double("indicators.estimator_lr", cfg.indicators.estimator.lr);
  get_int("indicators.min_losing_labeled", cfg.indicators.min_losing_labeled);
  if (const auto* v = get("filter.field")) cfg.filter_field = *v;
  get_double("filter.p", cfg.filter_p);
  get_int("bc.hidden", cfg.bc.hidden);
  get_int("bc.epochs", cfg.bc.epochs);
  get_int("bc.minibatches", cfg.bc.minibatches);
  get_int("bc.batch_size", cfg.bc.batch_size);
  get_double("bc.lr", cfg.bc.lr);
  get_int("eval.n_games", cfg.eval_games);
  if (const auto* v = get("run.seed")) {
    try {
      cfg.seed = std::stoull(*v);
    } catch (const std::exception&) {
      throw std::runtime_error("config key 'run.seed': bad integer '" + *v + "'");
    }
  }
  if (const auto* v = get("run.out_dir")) cfg.out_dir = *v;

  if (cfg.filter_p < 0.0 || cfg.filter_p > 1.0)
    throw std::runtime_error("config key 'filter.p': must lie in [0, 1]");
  parse_indicator_field(cfg.filter_field);  // validates the name
  cfg.game_spec();                          // validates the game name
  cfg.pvrnn.seed = cfg.seed;
  cfg.indicators.estimator.seed = derive_seed(cfg.seed, "el-estimator");
  cfg.bc.seed = derive_seed(cfg.seed, "bc");
  cfg.config_hash = sha256_hex(canonical_config_string(kv));
  return cfg;
}

namespace {

std::string out_path(const PipelineConfig& cfg, const std::string& name) {
  return (fs::path(cfg.out_dir) / name).string();
}

void require_artifact(const PipelineConfig& cfg, const std::string& name,
                      const std::string& producing_stage) {
  if (!fs::exists(out_path(cfg, name)))
    throw std::runtime_error("missing artifact '" + name + "': run '" +
                             producing_stage + "' first");
}

// Manifest: stage name, config hash, seed, content hash of every artifact
// consumed and produced. No timestamps, so reruns are byte-identical.
void write_manifest(const PipelineConfig& cfg, const std::string& stage,
                    const std::vector<std::string>& inputs,
                    const std::vector<std::string>& outputs) {
  json m;
  m["stage"] = stage;
  m["config_hash"] = cfg.config_hash;
  m["seed"] = cfg.seed;
  json in = json::object(), out = json::object();
  for (const auto& name : inputs) in[name] = sha256_file(out_path(cfg, name));
  for (const auto& name : outputs) out[name] = sha256_file(out_path(cfg, name));
  m["inputs"] = std::move(in);
  m["outputs"] = std::move(out);
  write_text_file(out_path(cfg, "manifest_" + stage + ".json"), m.dump(2) + "\n");
}

std::string loss_csv(const std::vector<double>& history) {
  std::ostringstream os;
  os << "epoch,loss\n";
  char buf[64];
  for (std::size_t i = 0; i < history.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g", history[i]);
    os << i << ',' << buf << '\n';
  }
  return os.str();
}

Dataset load_dataset(const PipelineConfig& cfg) {
  require_artifact(cfg, artifact::kDataset, "gen-data");
  return read_jsonl(out_path(cfg, artifact::kDataset));
}

void load_model(const PipelineConfig& cfg, ParamStore& params, RepTable& reps) {
  require_artifact(cfg, artifact::kPvrnnCkpt, "train-pvrnn");
  split_params_and_reps(load_checkpoint(out_path(cfg, artifact::kPvrnnCkpt)), params, reps);
}

BCPolicy load_bc(const PipelineConfig& cfg, const std::string& name,
                 const std::string& stage) {
  require_artifact(cfg, name, stage);
  const GameSpec spec = cfg.game_spec();
  BCPolicy policy;
  policy.params = load_checkpoint(out_path(cfg, name));
  policy.obs_dim = spec.obs_dim;
  policy.action_count = spec.action_count;
  return policy;
}

}  // namespace

void run_gen_data(const PipelineConfig& cfg) {
  fs::create_directories(cfg.out_dir);
  const GameSpec spec = cfg.game_spec();
  Dataset ds = generate_dataset(cfg.demonstrators(), spec, cfg.games_per_pair, cfg.seed);
  ds = label_rewards(std::move(ds), cfg.label_fraction, derive_seed(cfg.seed, "labels"));
  write_jsonl(ds, out_path(cfg, artifact::kDataset));
  write_manifest(cfg, "gen-data", {}, {artifact::kDataset});
}

void run_train_pvrnn(const PipelineConfig& cfg) {
  fs::create_directories(cfg.out_dir);
  const Dataset ds = load_dataset(cfg);
  const auto view = training_view(ds);
  const auto result = train_pvrnn(view, ds.spec.obs_dim, ds.spec.action_count, cfg.pvrnn);
  save_checkpoint(out_path(cfg, artifact::kPvrnnCkpt),
                  merge_params_and_reps(result.params, result.reps));
  write_text_file(out_path(cfg, artifact::kPvrnnLoss), loss_csv(result.loss_history));
  write_manifest(cfg, "train-pvrnn", {artifact::kDataset},
                 {artifact::kPvrnnCkpt, artifact::kPvrnnLoss});
}

void run_indicators(const PipelineConfig& cfg) {
  fs::create_directories(cfg.out_dir);
  const Dataset ds = load_dataset(cfg);
  ParamStore params;
  RepTable reps;
  load_model(cfg, params, reps);
  const auto records = compute_indicators(ds, params, cfg.pvrnn, reps, cfg.indicators);
  write_text_file(out_path(cfg, artifact::kIndicators), indicators_csv(records));
  write_manifest(cfg, "indicators", {artifact::kDataset, artifact::kPvrnnCkpt},
                 {artifact::kIndicators});
}

void run_filter(const PipelineConfig& cfg) {
  fs::create_directories(cfg.out_dir);
  require_artifact(cfg, artifact::kIndicators, "indicators");
  const auto records =
      parse_indicators_csv(read_text_file(out_path(cfg, artifact::kIndicators)));
  const auto kept =
      percentile_filter(records, parse_indicator_field(cfg.filter_field), cfg.filter_p);
  std::ostringstream os;
  for (const auto& id : kept) os << id << '\n';
  write_text_file(out_path(cfg, artifact::kKeptIds), os.str());
  write_manifest(cfg, "filter", {artifact::kIndicators}, {artifact::kKeptIds});
}

void run_train_bc(const PipelineConfig& cfg, bool filtered) {
  fs::create_directories(cfg.out_dir);
  const Dataset ds = load_dataset(cfg);
  const auto view = training_view(ds);
  std::set<std::string> kept;
  if (filtered) {
    require_artifact(cfg, artifact::kKeptIds, "filter");
    std::istringstream is(read_text_file(out_path(cfg, artifact::kKeptIds)));
    std::string line;
    while (std::getline(is, line))
      if (!line.empty()) kept.insert(line);
  } else {
    for (const auto& seq : view) kept.insert(seq.id);
  }
  BCConfig bc = cfg.bc;
  bc.seed = derive_seed(cfg.seed, filtered ? "bc-filtered" : "bc-unfiltered");
  const auto result = bc_train(view, kept, ds.spec.obs_dim, ds.spec.action_count, bc);
  const char* ckpt = filtered ? artifact::kBcFiltered : artifact::kBcUnfiltered;
  const char* loss = filtered ? artifact::kBcFilteredLoss : artifact::kBcUnfilteredLoss;
  save_checkpoint(out_path(cfg, ckpt), result.policy.params);
  write_text_file(out_path(cfg, loss), loss_csv(result.loss_history));
  const std::vector<std::string> inputs =
      filtered ? std::vector<std::string>{artifact::kDataset, artifact::kKeptIds}
               : std::vector<std::string>{artifact::kDataset};
  write_manifest(cfg, filtered ? "train-bc" : "train-bc-unfiltered", inputs, {ckpt, loss});
}

void run_evaluate(const PipelineConfig& cfg) {
  fs::create_directories(cfg.out_dir);
  const GameSpec spec = cfg.game_spec();
  const auto roster = cfg.demonstrators();
  const BCPolicy filtered = load_bc(cfg, artifact::kBcFiltered, "train-bc");
  const BCPolicy unfiltered = load_bc(cfg, artifact::kBcUnfiltered, "train-bc");
  Rng rng_f(derive_seed(cfg.seed, "eval-filtered"));
  Rng rng_u(derive_seed(cfg.seed, "eval-unfiltered"));
  const EvalReport rep_f = worst_score(filtered, roster, spec, cfg.eval_games, rng_f);
  const EvalReport rep_u = worst_score(unfiltered, roster, spec, cfg.eval_games, rng_u);
  std::ostringstream os;
  os << "policy,opponent,score\n";
  char buf[64];
  auto emit = [&](const char* tag, const EvalReport& rep) {
    for (const auto& [name, score] : rep.per_opponent) {
      std::snprintf(buf, sizeof(buf), "%.6f", score);
      os << tag << ',' << name << ',' << buf << '\n';
    }
    std::snprintf(buf, sizeof(buf), "%.6f", rep.worst_score);
    os << tag << ",worst_score," << buf << '\n';
  };
  emit("filtered", rep_f);
  emit("unfiltered", rep_u);
  write_text_file(out_path(cfg, artifact::kEval), os.str());
  write_manifest(cfg, "evaluate",
                 {artifact::kBcFiltered, artifact::kBcUnfiltered}, {artifact::kEval});

  std::cout << "worst score (" << cfg.filter_field << "-filtered, p=" << cfg.filter_p
            << "): " << rep_f.worst_score << "\n";
  std::cout << "worst score (unfiltered):            " << rep_u.worst_score << "\n";
  for (const auto& [name, score] : rep_f.per_opponent)
    std::cout << "  filtered vs " << name << ": " << score << "\n";
  for (const auto& [name, score] : rep_u.per_opponent)
    std::cout << "  unfiltered vs " << name << ": " << score << "\n";
}

bool run_verify_toy(const PipelineConfig& cfg) {
  fs::create_directories(cfg.out_dir);
  const MatrixGame rps = rps_matrix();
  Rng rng(derive_seed(cfg.seed, "toy"));
  std::ostringstream os;
  os << "check,detail,value,reference,pass\n";
  bool all_pass = true;
  char buf[64];
  auto row = [&](const std::string& check, const std::string& detail, double value,
                 double reference, bool pass) {
    std::snprintf(buf, sizeof(buf), "%.6f", value);
    os << check << ',' << detail << ',' << buf << ',';
    std::snprintf(buf, sizeof(buf), "%.6f", reference);
    os << buf << ',' << (pass ? 1 : 0) << '\n';
    all_pass = all_pass && pass;
  };

  const std::vector<double> worked{0.0, 2.0 / 3.0, 1.0 / 3.0};
  const auto id_check = check_el_identity(rps, worked, 1000000, rng.derive("identity"));
  row("el_identity", "lhs_vs_E_over_nplus1", id_check.lhs, id_check.rhs, id_check.pass);
  // the same estimate against the mean-over-the-losing-face closed form E/n
  const double e_over_n = exploitability(rps, worked) / 3.0;
  row("el_identity", "lhs_vs_E_over_n", id_check.lhs, e_over_n,
      std::abs(id_check.lhs - e_over_n) < 3.0 * id_check.standard_error);

  Rng prop1_rng = rng.derive("prop1");
  bool prop1_ok = true;
  for (int i = 0; i < 100; ++i) {
    const MatrixGame g = random_antisymmetric_game(4, prop1_rng);
    SimplexSampler weights(3, prop1_rng.derive("w", std::uint64_t(i)));
    SimplexSampler strategies(4, prop1_rng.derive("s", std::uint64_t(i)));
    std::vector<std::vector<double>> supports{strategies.sample(), strategies.sample(),
                                              strategies.sample()};
    const auto res = check_prop1(g, supports, weights.sample());
    prop1_ok = prop1_ok && res.pass;
  }
  row("prop1", "random_antisymmetric_games", prop1_ok ? 1.0 : 0.0, 1.0, prop1_ok);

  const std::vector<double> near_nash{0.35, 0.35, 0.30};
  Prop2Params p2;
  p2.epsilon1 = 0.05;
  p2.alpha = 1.0;
  p2.m_bound = 1.0;
  bool prop2_ok = true;
  for (double delta : {0.2, 0.1, 0.05}) {
    p2.delta = delta;
    const auto res = check_prop2(rps, near_nash, p2, 200000, rng.derive("prop2"));
    row("prop2", "delta_" + std::to_string(delta),
        res.el_delta_value.value_or(-1.0), res.bound, res.pass);
    prop2_ok = prop2_ok && res.pass;
  }

  write_text_file(out_path(cfg, artifact::kToyReport), os.str());
  write_manifest(cfg, "verify-toy", {}, {artifact::kToyReport});
  std::cout << os.str();
  return all_pass;
}

void run_plot(const PipelineConfig& cfg) {
  fs::create_directories(cfg.out_dir);
  const Dataset ds = load_dataset(cfg);
  ParamStore params;
  RepTable reps;
  load_model(cfg, params, reps);
  require_artifact(cfg, artifact::kIndicators, "indicators");
  const auto records =
      parse_indicators_csv(read_text_file(out_path(cfg, artifact::kIndicators)));
  std::map<std::string, const IndicatorRecord*> by_id;
  for (const auto& r : records) by_id[r.traj_id] = &r;

  auto base_points = [&](const char* which) {
    std::vector<PlotPoint> pts;
    for (const auto& traj : ds.trajectories) {
      const auto rec = by_id.find(traj.id);
      if (rec == by_id.end()) continue;
      PlotPoint p;
      p.traj_id = traj.id;
      p.rep = reps.at(traj.id).values();
      if (std::string(which) == "demo") {
        p.label_text = traj.meta.demo_id.value_or("unknown");
      } else if (std::string(which) == "ri") {
        p.label_value = rec->second->ri;
      } else if (std::string(which) == "el") {
        if (!rec->second->el_estimate.has_value()) continue;
        p.label_value = *rec->second->el_estimate;
      } else {
        if (!rec->second->reward.has_value()) continue;
        p.label_value = *rec->second->reward;
      }
      pts.push_back(std::move(p));
    }
    return pts;
  };

  std::vector<std::string> outputs;
  const struct {
    const char* tag;
    bool categorical;
  } kinds[] = {{"demo", true}, {"ri", false}, {"el", false}, {"reward", false}};
  for (const auto& kind : kinds) {
    const auto pts = base_points(kind.tag);
    if (pts.size() < 2) continue;
    const auto plot = plot_representations(pts, kind.tag, kind.categorical);
    const std::string svg_name = std::string("plot_") + kind.tag + ".svg";
    const std::string csv_name = std::string("plot_") + kind.tag + ".csv";
    write_text_file(out_path(cfg, svg_name), plot.svg);
    write_text_file(out_path(cfg, csv_name), plot.csv);
    outputs.push_back(svg_name);
    outputs.push_back(csv_name);
  }
  write_manifest(cfg, "plot",
                 {artifact::kDataset, artifact::kPvrnnCkpt, artifact::kIndicators},
                 outputs);
}

void run_pipeline(const PipelineConfig& cfg) {
  run_gen_data(cfg);
  run_train_pvrnn(cfg);
  run_indicators(cfg);
  run_filter(cfg);
  run_train_bc(cfg, /*filtered=*/true);
  run_train_bc(cfg, /*filtered=*/false);
  run_evaluate(cfg);
  run_plot(cfg);
}

}  // namespace stril
