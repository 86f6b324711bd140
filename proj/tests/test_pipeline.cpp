#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "stril/pipeline.hpp"
#include "stril/plot.hpp"
#include "stril/sha256.hpp"

using namespace stril;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  REQUIRE(is.good());
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

KvMap micro_config(const std::string& out_dir) {
  KvMap kv;
  kv["game.name"] = "rps";
  kv["game.rounds"] = "20";
  kv["demonstrators.roster"] = "uniform,rockheavy,counterlast";
  kv["dataset.games_per_pair"] = "3";
  kv["dataset.label_fraction"] = "0.3";
  kv["pvrnn.epochs"] = "4";
  kv["pvrnn.batch_size"] = "16";
  kv["pvrnn.h_dim"] = "12";
  kv["pvrnn.r_dim"] = "12";
  kv["indicators.min_neighbors"] = "4";
  kv["indicators.min_losing_labeled"] = "2";
  kv["indicators.estimator_steps"] = "120";
  kv["filter.field"] = "ri";
  kv["filter.p"] = "0.5";
  kv["bc.hidden"] = "24";
  kv["bc.epochs"] = "4";
  kv["bc.minibatches"] = "8";
  kv["bc.batch_size"] = "32";
  kv["eval.n_games"] = "20";
  kv["run.seed"] = "5";
  kv["run.out_dir"] = out_dir;
  return kv;
}

}  // namespace

TEST_CASE("config text parsing and validation") {
  const std::string text =
      "# pipeline settings\n"
      "[game]\n"
      "name = rps\n"
      "rounds = 50\n"
      "\n"
      "[filter]\n"
      "field = ri\n"
      "p = 0.4\n";
  const KvMap kv = parse_config_text(text);
  CHECK(kv.at("game.name") == "rps");
  CHECK(kv.at("game.rounds") == "50");
  CHECK(kv.at("filter.p") == "0.4");

  const PipelineConfig cfg = make_pipeline_config(kv);
  CHECK(cfg.rps_rounds == 50);
  CHECK(cfg.filter_field == "ri");
  CHECK(cfg.filter_p == 0.4);
  CHECK(cfg.pvrnn.epochs == 500);  // untouched defaults survive

  KvMap bad = kv;
  bad["game.nmae"] = "rps";
  try {
    make_pipeline_config(bad);
    FAIL("expected an unknown-key error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("game.nmae") != std::string::npos);
  }
  KvMap bad_value = kv;
  bad_value["filter.p"] = "1.5";
  CHECK_THROWS(make_pipeline_config(bad_value));
  bad_value["filter.p"] = "x";
  try {
    make_pipeline_config(bad_value);
    FAIL("expected a bad-number error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("filter.p") != std::string::npos);
  }
}

TEST_CASE("overrides beat config-file values") {
  KvMap kv = parse_config_text("[run]\nseed = 9\n");
  kv["run.seed"] = "11";  // the CLI applies flags on top of the file
  CHECK(make_pipeline_config(kv).seed == 11);
}

TEST_CASE("micro pipeline produces every artifact with chained manifests") {
  const std::string out = "pipe_micro_out";
  fs::remove_all(out);
  const PipelineConfig cfg = make_pipeline_config(micro_config(out));
  run_pipeline(cfg);

  for (const char* name :
       {artifact::kDataset, artifact::kPvrnnCkpt, artifact::kPvrnnLoss,
        artifact::kIndicators, artifact::kKeptIds, artifact::kBcFiltered,
        artifact::kBcUnfiltered, artifact::kEval})
    CHECK(fs::exists(fs::path(out) / name));
  CHECK(fs::exists(fs::path(out) / "plot_demo.svg"));
  CHECK(fs::exists(fs::path(out) / "plot_ri.csv"));

  // the evaluate artifact reports both policies
  const std::string eval_text = slurp(fs::path(out) / artifact::kEval);
  CHECK(eval_text.find("filtered,worst_score") != std::string::npos);
  CHECK(eval_text.find("unfiltered,worst_score") != std::string::npos);

  // manifests chain: the indicators stage consumed exactly the dataset and
  // checkpoint bytes on disk
  const auto manifest =
      nlohmann::json::parse(slurp(fs::path(out) / "manifest_indicators.json"));
  CHECK(manifest.at("stage") == "indicators");
  CHECK(manifest.at("config_hash") == cfg.config_hash);
  CHECK(manifest.at("inputs").at(artifact::kDataset) ==
        sha256_file((fs::path(out) / artifact::kDataset).string()));
  CHECK(manifest.at("inputs").at(artifact::kPvrnnCkpt) ==
        sha256_file((fs::path(out) / artifact::kPvrnnCkpt).string()));

  // rerunning a stage with the same config overwrites with identical bytes
  const std::string dataset_before = slurp(fs::path(out) / artifact::kDataset);
  const std::string manifest_before = slurp(fs::path(out) / "manifest_gen-data.json");
  run_gen_data(cfg);
  CHECK(slurp(fs::path(out) / artifact::kDataset) == dataset_before);
  CHECK(slurp(fs::path(out) / "manifest_gen-data.json") == manifest_before);

  // p = 1 keeps every trajectory in the kept-ids file
  PipelineConfig keep_all = cfg;
  keep_all.filter_p = 1.0;
  run_filter(keep_all);
  std::istringstream kept(slurp(fs::path(out) / artifact::kKeptIds));
  std::size_t lines = 0;
  std::string line;
  while (std::getline(kept, line))
    if (!line.empty()) ++lines;
  const Dataset ds = read_jsonl((fs::path(out) / artifact::kDataset).string());
  CHECK(lines == ds.trajectories.size());

  fs::remove_all(out);
}

TEST_CASE("missing upstream artifacts name the stage to run first") {
  const std::string out = "pipe_missing_out";
  fs::remove_all(out);
  const PipelineConfig cfg = make_pipeline_config(micro_config(out));
  try {
    run_train_pvrnn(cfg);
    FAIL("expected a missing-artifact error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("gen-data") != std::string::npos);
  }
  run_gen_data(cfg);
  try {
    run_indicators(cfg);
    FAIL("expected a missing-artifact error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("train-pvrnn") != std::string::npos);
  }
  fs::remove_all(out);
}

TEST_CASE("verify-toy writes its report") {
  const std::string out = "pipe_toy_out";
  fs::remove_all(out);
  PipelineConfig cfg = make_pipeline_config(micro_config(out));
  const bool all_pass = run_verify_toy(cfg);
  CHECK(fs::exists(fs::path(out) / artifact::kToyReport));
  const std::string report = slurp(fs::path(out) / artifact::kToyReport);
  CHECK(report.find("prop1,random_antisymmetric_games") != std::string::npos);
  CHECK(report.find("el_identity,lhs_vs_E_over_n,") != std::string::npos);
  // the pyramid identity row reports its own failure; the mean-over-face
  // row agrees, so the report as a whole is honest but not all-green
  CHECK_FALSE(all_pass);
  CHECK(report.find("el_identity,lhs_vs_E_over_nplus1") != std::string::npos);
  fs::remove_all(out);
}

TEST_CASE("two-dimensional input makes the scatter a rigid rotation") {
  std::vector<PlotPoint> points;
  Rng rng(6);
  for (int i = 0; i < 30; ++i) {
    PlotPoint p;
    p.traj_id = "t" + std::to_string(i);
    p.rep = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
    p.label_value = rng.uniform(0, 1);
    points.push_back(std::move(p));
  }
  const auto plot = plot_representations(points, "ri", /*categorical=*/false);
  // distances in the projected plane match the original representations
  std::istringstream csv(plot.csv);
  std::string line;
  std::getline(csv, line);  // header
  std::vector<std::pair<double, double>> xy;
  std::size_t rows = 0;
  while (std::getline(csv, line)) {
    ++rows;
    std::istringstream ls(line);
    std::string field;
    std::getline(ls, field, ',');
    std::getline(ls, field, ',');
    const double x = std::stod(field);
    std::getline(ls, field, ',');
    xy.emplace_back(x, std::stod(field));
  }
  REQUIRE(rows == points.size());
  for (std::size_t i = 0; i < points.size(); ++i)
    for (std::size_t j = i + 1; j < points.size(); ++j) {
      const double orig =
          std::hypot(points[i].rep[0] - points[j].rep[0], points[i].rep[1] - points[j].rep[1]);
      const double proj = std::hypot(xy[i].first - xy[j].first, xy[i].second - xy[j].second);
      CHECK(orig == doctest::Approx(proj).epsilon(1e-6));
    }
}

TEST_CASE("tied labels collapse to the midrank percentile") {
  std::vector<PlotPoint> points;
  for (int i = 0; i < 8; ++i) {
    PlotPoint p;
    p.traj_id = "t" + std::to_string(i);
    p.rep = {double(i), double(i % 3)};
    p.label_value = 2.5;
    points.push_back(std::move(p));
  }
  const auto plot = plot_representations(points, "reward", false);
  std::istringstream csv(plot.csv);
  std::string line;
  std::getline(csv, line);
  while (std::getline(csv, line)) {
    const auto last_comma = line.rfind(',');
    CHECK(std::stod(line.substr(last_comma + 1)) == doctest::Approx(0.5));
  }
  CHECK(plot.svg.find("<svg") == 0);
}

TEST_CASE("sha256 reference digests") {
  CHECK(sha256_hex("") ==
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex("abc") ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  std::string million(1000000, 'a');
  CHECK(sha256_hex(million) ==
        "cdc76e5c9914fb9281a1c7e284d73e67f1809a48a497200e046d39ccc7112cd0");
}
