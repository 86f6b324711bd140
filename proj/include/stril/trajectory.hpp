#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace stril {

struct TrajectoryMeta {
  std::optional<std::string> demo_id;  // evaluation-only; never seen by training
  std::optional<std::string> opp_id;
  std::uint64_t seed = 0;
};

// One player's side of one episode: that player's decision points only.
// Turns where the player had no choice are folded into the next observation.
struct Trajectory {
  std::string id;
  std::vector<std::vector<double>> observations;
  std::vector<int> actions;
  std::optional<double> reward;  // trajectory reward (sum of step rewards)
  TrajectoryMeta meta;

  std::size_t length() const { return actions.size(); }
};

// What the learners are allowed to see: observations and actions, keyed by
// id. Rewards and meta are stripped before anything trains on a trajectory.
struct TrainingSeq {
  std::string id;
  const std::vector<std::vector<double>>* observations = nullptr;
  const std::vector<int>* actions = nullptr;

  std::size_t length() const { return actions->size(); }
};

}  // namespace stril
