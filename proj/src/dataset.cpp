#include "stril/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

namespace stril {

using nlohmann::json;

const Trajectory* Dataset::find(const std::string& id) const {
  for (const auto& t : trajectories)
    if (t.id == id) return &t;
  return nullptr;
}

namespace {

std::string pad3(int v) {
  char buf[8];
  std::snprintf(buf, sizeof(buf), "%03d", v);
  return buf;
}

}  // namespace

Dataset generate_dataset(const std::vector<PolicySpec>& policies, const GameSpec& spec,
                         int games_per_ordered_pair, std::uint64_t seed) {
  if (policies.size() < 2)
    throw std::invalid_argument("generate_dataset: need at least two policies");
  if (games_per_ordered_pair < 1)
    throw std::invalid_argument("generate_dataset: games_per_ordered_pair must be >= 1");
  Dataset ds;
  ds.spec = spec;
  Rng root(seed);
  const int n = int(policies.size());
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const PolicyFn ego_fn = to_policy_fn(policies[std::size_t(i)], spec);
      const PolicyFn opp_fn = to_policy_fn(policies[std::size_t(j)], spec);
      for (int g = 0; g < games_per_ordered_pair; ++g) {
        Rng ep = root.derive(std::uint64_t(i * n + j), std::uint64_t(g));
        auto [ego, opp] = play_episode(spec, ego_fn, opp_fn, ep);
        const std::string stem =
            spec.name + "-d" + pad3(i) + "-o" + pad3(j) + "-g" + pad3(g);
        ego.id = stem + "-p1";
        ego.meta.demo_id = policies[std::size_t(i)].name;
        ego.meta.opp_id = policies[std::size_t(j)].name;
        ego.meta.seed = seed;
        opp.id = stem + "-p2";
        opp.meta.demo_id = policies[std::size_t(j)].name;
        opp.meta.opp_id = policies[std::size_t(i)].name;
        opp.meta.seed = seed;
        ds.labeled_ids.insert(ego.id);
        ds.labeled_ids.insert(opp.id);
        ds.trajectories.push_back(std::move(ego));
        ds.trajectories.push_back(std::move(opp));
      }
    }
  }
  return ds;
}

Dataset label_rewards(Dataset dataset, double fraction, std::uint64_t seed) {
  if (dataset.trajectories.empty())
    throw std::invalid_argument("label_rewards: dataset is empty");
  if (fraction <= 0.0 || fraction > 1.0)
    throw std::invalid_argument("label_rewards: fraction outside (0, 1]");
  const std::size_t n = dataset.trajectories.size();
  const std::size_t keep = std::size_t(std::llround(fraction * double(n)));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t(0));
  Rng rng = Rng(seed).derive("label");
  for (std::size_t i = n; i > 1; --i)
    std::swap(order[i - 1], order[std::size_t(rng.uniform_int(int(i)))]);
  dataset.labeled_ids.clear();
  for (std::size_t i = 0; i < keep && i < n; ++i)
    dataset.labeled_ids.insert(dataset.trajectories[order[i]].id);
  for (auto& traj : dataset.trajectories)
    if (dataset.labeled_ids.count(traj.id) == 0) traj.reward.reset();
  return dataset;
}

void write_jsonl(const Dataset& dataset, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("write_jsonl: cannot open '" + path + "'");
  json header;
  header["format_version"] = 1;
  header["game"] = {{"name", dataset.spec.name},
                    {"obs_dim", dataset.spec.obs_dim},
                    {"action_count", dataset.spec.action_count},
                    {"max_steps", dataset.spec.max_steps},
                    {"reward_scale", dataset.spec.reward_scale}};
  os << header.dump() << '\n';
  for (const auto& traj : dataset.trajectories) {
    json j;
    j["id"] = traj.id;
    j["obs"] = traj.observations;
    j["actions"] = traj.actions;
    if (traj.reward.has_value()) j["reward"] = *traj.reward;
    json meta;
    if (traj.meta.demo_id.has_value()) meta["demo_id"] = *traj.meta.demo_id;
    if (traj.meta.opp_id.has_value()) meta["opp_id"] = *traj.meta.opp_id;
    meta["seed"] = traj.meta.seed;
    j["meta"] = std::move(meta);
    os << j.dump() << '\n';
  }
  if (!os) throw std::runtime_error("write_jsonl: write to '" + path + "' failed");
}

Dataset read_jsonl(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("read_jsonl: cannot open '" + path + "'");
  Dataset ds;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw std::runtime_error("read_jsonl: malformed JSON at line " +
                               std::to_string(line_no) + " of '" + path + "': " + e.what());
    }
    if (line_no == 0) {
      const int version = j.value("format_version", -1);
      if (version != 1)
        throw std::runtime_error("read_jsonl: unsupported format_version in '" + path + "'");
      const json& g = j.at("game");
      ds.spec.name = g.at("name").get<std::string>();
      ds.spec.obs_dim = g.at("obs_dim").get<int>();
      ds.spec.action_count = g.at("action_count").get<int>();
      ds.spec.max_steps = g.at("max_steps").get<int>();
      ds.spec.reward_scale = g.at("reward_scale").get<double>();
    } else {
      try {
        Trajectory t;
        t.id = j.at("id").get<std::string>();
        t.observations = j.at("obs").get<std::vector<std::vector<double>>>();
        t.actions = j.at("actions").get<std::vector<int>>();
        if (j.contains("reward")) t.reward = j.at("reward").get<double>();
        const json& meta = j.at("meta");
        if (meta.contains("demo_id")) t.meta.demo_id = meta.at("demo_id").get<std::string>();
        if (meta.contains("opp_id")) t.meta.opp_id = meta.at("opp_id").get<std::string>();
        t.meta.seed = meta.value("seed", std::uint64_t(0));
        if (t.observations.size() != t.actions.size() || t.actions.empty())
          throw std::runtime_error("observation/action length mismatch");
        if (t.reward.has_value()) ds.labeled_ids.insert(t.id);
        ds.trajectories.push_back(std::move(t));
      } catch (const std::exception& e) {
        throw std::runtime_error("read_jsonl: bad trajectory at line " +
                                 std::to_string(line_no) + " of '" + path + "': " + e.what());
      }
    }
    ++line_no;
  }
  if (line_no == 0) throw std::runtime_error("read_jsonl: '" + path + "' is empty");
  return ds;
}

std::vector<TrainingSeq> training_view(const Dataset& dataset) {
  std::vector<TrainingSeq> view;
  view.reserve(dataset.trajectories.size());
  for (const auto& traj : dataset.trajectories) {
    TrainingSeq seq;
    seq.id = traj.id;
    seq.observations = &traj.observations;
    seq.actions = &traj.actions;
    view.push_back(std::move(seq));
  }
  return view;
}

}  // namespace stril
