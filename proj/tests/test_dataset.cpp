#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "stril/dataset.hpp"

using namespace stril;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  REQUIRE(is.good());
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

std::vector<PolicySpec> small_roster(const GameSpec& spec) {
  (void)spec;
  return {PolicySpec::uniform(), PolicySpec::constant(kRock, "rock"),
          PolicySpec::counter_last()};
}

}  // namespace

TEST_CASE("dataset counting identity") {
  const GameSpec spec = rps_spec(20);
  const auto ds = generate_dataset(small_roster(spec), spec, 2, 11);
  // 3 policies -> 9 ordered pairs, 2 games each, both sides kept
  CHECK(ds.trajectories.size() == 36);
  CHECK(ds.labeled_ids.size() == 36);  // fully labeled until label_rewards prunes
  for (const auto& t : ds.trajectories) {
    CHECK(t.length() == 20);
    CHECK(t.reward.has_value());
    CHECK(t.meta.demo_id.has_value());
  }
}

TEST_CASE("same seed gives byte-identical serialized datasets") {
  const GameSpec spec = rps_spec(15);
  const auto a = generate_dataset(small_roster(spec), spec, 2, 5);
  const auto b = generate_dataset(small_roster(spec), spec, 2, 5);
  write_jsonl(a, "ds_a.jsonl");
  write_jsonl(b, "ds_b.jsonl");
  CHECK(slurp("ds_a.jsonl") == slurp("ds_b.jsonl"));
  std::remove("ds_a.jsonl");
  std::remove("ds_b.jsonl");
}

TEST_CASE("label pruning keeps the requested fraction") {
  const GameSpec spec = rps_spec(5);
  const auto roster = small_roster(spec);
  Dataset ds = generate_dataset(roster, spec, 14, 3);  // 9*14*2 = 252 trajectories
  REQUIRE(ds.trajectories.size() == 252);

  const Dataset five = label_rewards(ds, 0.05, 77);
  CHECK(five.labeled_ids.size() == 13);  // round(0.05 * 252)
  long with_reward = 0;
  for (const auto& t : five.trajectories) with_reward += t.reward.has_value() ? 1 : 0;
  CHECK(with_reward == 13);
  for (const auto& t : five.trajectories)
    CHECK(t.reward.has_value() == (five.labeled_ids.count(t.id) == 1));

  const Dataset all_labeled = label_rewards(ds, 1.0, 77);
  CHECK(all_labeled.labeled_ids.size() == 252);

  const Dataset other = label_rewards(ds, 0.05, 78);
  CHECK(other.labeled_ids.size() == 13);
  CHECK(other.labeled_ids != five.labeled_ids);

  CHECK_THROWS(label_rewards(Dataset{}, 0.5, 1));
}

TEST_CASE("jsonl round-trip is structurally exact") {
  const GameSpec spec = rps_spec(8);
  Dataset ds = generate_dataset(small_roster(spec), spec, 2, 9);
  ds = label_rewards(std::move(ds), 0.5, 4);
  write_jsonl(ds, "ds_rt.jsonl");
  const Dataset back = read_jsonl("ds_rt.jsonl");
  REQUIRE(back.trajectories.size() == ds.trajectories.size());
  CHECK(back.spec.name == ds.spec.name);
  CHECK(back.spec.max_steps == ds.spec.max_steps);
  CHECK(back.labeled_ids == ds.labeled_ids);
  for (std::size_t i = 0; i < ds.trajectories.size(); ++i) {
    const auto& x = ds.trajectories[i];
    const auto& y = back.trajectories[i];
    CHECK(x.id == y.id);
    CHECK(x.observations == y.observations);
    CHECK(x.actions == y.actions);
    CHECK(x.reward == y.reward);
    CHECK(x.meta.demo_id == y.meta.demo_id);
    CHECK(x.meta.opp_id == y.meta.opp_id);
  }
  // write-read-write reproduces the bytes
  write_jsonl(back, "ds_rt2.jsonl");
  CHECK(slurp("ds_rt.jsonl") == slurp("ds_rt2.jsonl"));
  std::remove("ds_rt.jsonl");
  std::remove("ds_rt2.jsonl");
}

TEST_CASE("reward key is omitted for unlabeled trajectories") {
  const GameSpec spec = rps_spec(4);
  Dataset ds = generate_dataset(small_roster(spec), spec, 1, 2);
  ds = label_rewards(std::move(ds), 0.5, 1);
  write_jsonl(ds, "ds_opt.jsonl");
  std::ifstream is("ds_opt.jsonl");
  std::string line;
  std::getline(is, line);  // header
  std::size_t with = 0, without = 0;
  while (std::getline(is, line)) {
    if (line.find("\"reward\"") != std::string::npos) ++with;
    else ++without;
  }
  CHECK(with == ds.labeled_ids.size());
  CHECK(without == ds.trajectories.size() - ds.labeled_ids.size());
  std::remove("ds_opt.jsonl");
}

TEST_CASE("corrupt lines are reported with their line number") {
  const GameSpec spec = rps_spec(4);
  const Dataset ds = generate_dataset(small_roster(spec), spec, 1, 2);
  write_jsonl(ds, "ds_bad.jsonl");
  // clobber line 7 (0-based line numbering includes the header line 0)
  std::ifstream is("ds_bad.jsonl");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(is, line)) lines.push_back(line);
  is.close();
  REQUIRE(lines.size() > 7);
  lines[7] = "{ this is not json";
  std::ofstream os("ds_bad.jsonl", std::ios::trunc);
  for (const auto& l : lines) os << l << '\n';
  os.close();
  try {
    read_jsonl("ds_bad.jsonl");
    FAIL("expected a parse error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("line 7") != std::string::npos);
  }
  std::remove("ds_bad.jsonl");
}

TEST_CASE("training view strips rewards and meta") {
  const GameSpec spec = rps_spec(6);
  Dataset ds = generate_dataset(small_roster(spec), spec, 1, 13);
  ds = label_rewards(std::move(ds), 0.5, 2);
  const auto view = training_view(ds);
  REQUIRE(view.size() == ds.trajectories.size());
  for (std::size_t i = 0; i < view.size(); ++i) {
    CHECK(view[i].id == ds.trajectories[i].id);
    CHECK(view[i].observations == &ds.trajectories[i].observations);
    CHECK(view[i].actions == &ds.trajectories[i].actions);
  }
  // TrainingSeq exposes nothing beyond id, observations, and actions
  static_assert(sizeof(TrainingSeq) == sizeof(std::string) + 2 * sizeof(void*));
}

TEST_CASE("per-pair rewards aggregate to the cross-eval entries") {
  const GameSpec spec = rps_spec(50);
  const auto roster = small_roster(spec);
  const int games = 40;
  const auto ds = generate_dataset(roster, spec, games, 123);
  Rng rng(456);
  const auto m = cross_evaluate(roster, spec, 200, rng);

  for (std::size_t i = 0; i < roster.size(); ++i) {
    for (std::size_t j = 0; j < roster.size(); ++j) {
      double total = 0.0;
      int count = 0;
      for (const auto& t : ds.trajectories) {
        if (t.id.back() != '1') continue;  // ego side of the pair
        if (*t.meta.demo_id == roster[i].name && *t.meta.opp_id == roster[j].name) {
          total += *t.reward / spec.reward_scale;
          ++count;
        }
      }
      REQUIRE(count == games);
      const double dataset_mean = total / count;
      // independent simulations agree within a loose Monte Carlo bound
      const double tol = 4.0 / std::sqrt(double(games));
      CHECK(std::abs(dataset_mean - m.scores.at(int(i), int(j))) < tol);
    }
  }
}
