#pragma once

#include <set>
#include <string>
#include <vector>

#include "stril/games.hpp"
#include "stril/policies.hpp"
#include "stril/trajectory.hpp"

namespace stril {

// Offline trajectory collection for one game.
struct Dataset {
  GameSpec spec;
  std::vector<Trajectory> trajectories;
  std::set<std::string> labeled_ids;  // trajectories whose reward survives

  const Trajectory* find(const std::string& id) const;
};

// Plays games_per_ordered_pair episodes for every ordered demonstrator pair
// (self-pairs included) and keeps both players' trajectories. Deterministic
// under the seed. Every trajectory starts reward-labeled; label_rewards
// prunes the labels afterwards.
Dataset generate_dataset(const std::vector<PolicySpec>& policies, const GameSpec& spec,
                         int games_per_ordered_pair, std::uint64_t seed);

// Keeps the reward of a uniformly random subset of round(fraction * N)
// trajectories and erases every other reward. Deterministic under the seed.
Dataset label_rewards(Dataset dataset, double fraction, std::uint64_t seed);

// One JSON object per line; line 0 is a header carrying the format version
// and the game spec. Read-after-write reproduces the dataset exactly.
void write_jsonl(const Dataset& dataset, const std::string& path);
Dataset read_jsonl(const std::string& path);

// The reward- and meta-stripped view every training path consumes.
std::vector<TrainingSeq> training_view(const Dataset& dataset);

}  // namespace stril
