#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "selb/error.hpp"
#include "selb/experiment.hpp"
#include "test_util.hpp"

using namespace selb;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json tiny_blobs_config(const std::string& strategy) {
  json j = {
      {"name", strategy},
      {"dataset",
       {{"kind", "blobs"},
        {"dim", 3},
        {"classes", 3},
        {"train_per_class", 30},
        {"test_per_class", 20},
        {"spread", 0.5},
        {"label_noise", 0.0}}},
      {"arch", "small-mlp"},
      {"split", 3},
      {"strategy", strategy},
      {"losses", json::array({"softmax"})},
      {"dropout_p", 0.2},
      {"epochs", 3},
      {"batch_size", 16},
      {"learning_rate", 1e-3},
      {"optimizer", "adam"},
      {"seed", 11},
      {"heads", 2},
  };
  if (strategy == "ours") j["losses"] = json::array({"softmax", "mse"});
  if (strategy == "dse") j["dse_head_epochs"] = 2;
  if (strategy == "swa") j["swa_snapshot_epochs"] = 2;
  return j;
}



}  // namespace

TEST_CASE("config json round trips through the canonical form") {
  ExperimentConfig cfg = config_from_json(tiny_blobs_config("ours"));
  json canon = config_to_json(cfg);
  ExperimentConfig again = config_from_json(canon);
  CHECK(config_to_json(again) == canon);
  CHECK(config_digest(cfg) == config_digest(again));

  ExperimentConfig other = cfg;
  other.train.seed += 1;
  CHECK(config_digest(other) != config_digest(cfg));
}

TEST_CASE("load_config reads a preset file") {
  ExperimentConfig cfg = load_config(std::string(SELB_SOURCE_DIR) + "/configs/paper-mini.json");
  CHECK(cfg.strategy == Strategy::ours);
  CHECK(cfg.loss_names.size() == 4);
  CHECK(cfg.train.num_heads == 4);
  CHECK_THROWS_AS(load_config("/nonexistent/nowhere.json"), Error);
}

TEST_CASE("strict parsing rejects unknown and malformed fields") {
  json base = tiny_blobs_config("ours");

  json j = base;
  j["bogus_key"] = 1;
  CHECK_THROWS_WITH_AS(config_from_json(j), doctest::Contains("bogus_key"), Error);

  j = base;
  j["dataset"]["mystery"] = true;
  CHECK_THROWS_WITH_AS(config_from_json(j), doctest::Contains("mystery"), Error);

  j = base;
  j["epochs"] = "ten";
  CHECK_THROWS_AS(config_from_json(j), Error);

  j = base;
  j["strategy"] = "bagging";
  CHECK_THROWS_AS(config_from_json(j), Error);

  j = base;
  j["losses"] = json::array({"softmax", "perceptron"});
  CHECK_THROWS_AS(config_from_json(j), Error);

  j = base;
  j["arch"] = "resnet";
  CHECK_THROWS_AS(config_from_json(j), Error);

  j = base;
  j["ece_bins"] = 0;
  CHECK_THROWS_AS(config_from_json(j), Error);

  j = base;
  j["eq4_mode"] = "fancy";
  CHECK_THROWS_AS(config_from_json(j), Error);
}

TEST_CASE("strategy-specific invariants are validated") {
  // ours: one loss per head
  json j = tiny_blobs_config("ours");
  j["heads"] = 3;  // but only two losses
  CHECK_THROWS_WITH_AS(config_from_json(j), doctest::Contains("losses"), Error);

  // single-loss strategies reject loss lists
  for (const char* s : {"dse", "de", "swa", "mc_dropout"}) {
    json k = tiny_blobs_config(s);
    k["losses"] = json::array({"softmax", "mse"});
    CHECK_THROWS_AS(config_from_json(k), Error);
  }

  // mc_dropout needs active dropout
  json m = tiny_blobs_config("mc_dropout");
  m["dropout_p"] = 0.0;
  CHECK_THROWS_WITH_AS(config_from_json(m), doctest::Contains("dropout"), Error);
}

TEST_CASE("execute_run produces a finite report for every strategy") {
  for (const char* s : {"ours", "dse", "de", "mc_dropout", "swa"}) {
    CAPTURE(s);
    ExperimentConfig cfg = config_from_json(tiny_blobs_config(s));
    RunOutputs out = execute_run(cfg);

    CHECK(out.report.n_samples == 60);
    CHECK(std::isfinite(out.report.accuracy));
    CHECK(out.report.accuracy >= 0.0);
    CHECK(out.report.accuracy <= 1.0);
    CHECK(std::isfinite(out.report.ece));
    CHECK(std::isfinite(out.report.brier));
    REQUIRE(out.predictor != nullptr);

    bool ensemble = std::string(s) != "swa";
    CHECK(out.report.separation.avg_entropy.mean_true.has_value());
    CHECK(out.report.separation.mean_entropy.mean_true.has_value() == ensemble);
    CHECK(out.report.separation.class_variance.mean_true.has_value() == ensemble);
  }
}

TEST_CASE("run_experiment writes the full artifact set") {
  fs::path dir = testutil::fresh_dir("exp-artifacts");
  ExperimentConfig cfg = config_from_json(tiny_blobs_config("ours"));
  RunOutputs out = run_experiment(cfg, dir.string());

  for (const char* f : {"report.json", "run.json", "report.csv", "train_log.jsonl",
                        "training_curves.svg", "checkpoint-0.selb", "checkpoint-0.json"}) {
    CAPTURE(f);
    CHECK(fs::exists(dir / f));
  }

  json report = json::parse(testutil::read_file((dir / "report.json").string()));
  CHECK(!report.contains("wall_seconds"));
  CHECK(report["config_digest"] == out.digest);
  CHECK(report["report"]["accuracy"].get<double>() == out.report.accuracy);

  json run = json::parse(testutil::read_file((dir / "run.json").string()));
  CHECK(run.contains("wall_seconds"));

  // one log line per epoch per head, each a valid JSON object
  std::string log = testutil::read_file((dir / "train_log.jsonl").string());
  std::size_t lines = 0;
  for (char c : log) lines += c == '\n';
  CHECK(lines == cfg.train.epochs * 2);

  std::string csv = testutil::read_file((dir / "report.csv").string());
  CHECK(csv.rfind(kComparisonCsvHeader, 0) == 0);
}

TEST_CASE("report json is byte-identical across reruns") {
  fs::path a = testutil::fresh_dir("exp-rerun-a");
  fs::path b = testutil::fresh_dir("exp-rerun-b");
  ExperimentConfig cfg = config_from_json(tiny_blobs_config("mc_dropout"));
  run_experiment(cfg, a.string());
  run_experiment(cfg, b.string());
  CHECK(testutil::read_file((a / "report.json").string()) ==
        testutil::read_file((b / "report.json").string()));
  CHECK(testutil::read_file((a / "training_curves.svg").string()) ==
        testutil::read_file((b / "training_curves.svg").string()));
}

TEST_CASE("compare_experiments writes one csv row per config") {
  fs::path dir = testutil::fresh_dir("exp-compare");
  std::vector<ExperimentConfig> configs = {
      config_from_json(tiny_blobs_config("ours")),
      config_from_json(tiny_blobs_config("swa")),
  };
  auto outs = compare_experiments(configs, dir.string());
  CHECK(outs.size() == 2);
  CHECK(fs::exists(dir / "compare.csv"));
  CHECK(fs::exists(dir / "ours" / "report.json"));
  CHECK(fs::exists(dir / "swa" / "report.json"));

  std::string csv = testutil::read_file((dir / "compare.csv").string());
  std::vector<std::string> rows;
  std::string cur;
  for (char c : csv) {
    if (c == '\n') {
      rows.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  REQUIRE(rows.size() == 3);
  CHECK(rows[0] == kComparisonCsvHeader);
  CHECK(rows[1].rfind("ours,", 0) == 0);
  CHECK(rows[2].rfind("swa,", 0) == 0);
  // swa carries NA for the ensemble-only measures (last four cells)
  CHECK(rows[2].find("NA,NA,NA,NA") != std::string::npos);
  CHECK(rows[1].find("NA") == std::string::npos);
}

TEST_CASE("compare_experiments validates names and dataset agreement") {
  fs::path dir = testutil::fresh_dir("exp-compare-bad");
  std::vector<ExperimentConfig> dup = {
      config_from_json(tiny_blobs_config("ours")),
      config_from_json(tiny_blobs_config("ours")),
  };
  CHECK_THROWS_WITH_AS(compare_experiments(dup, dir.string()), doctest::Contains("name"),
                       Error);

  std::vector<ExperimentConfig> mixed = {
      config_from_json(tiny_blobs_config("ours")),
      config_from_json(tiny_blobs_config("swa")),
  };
  mixed[1].dataset.blobs.spread = 0.9;
  CHECK_THROWS_WITH_AS(compare_experiments(mixed, dir.string()), doctest::Contains("dataset"),
                       Error);

  CHECK_THROWS_AS(compare_experiments({}, dir.string()), Error);
}

TEST_CASE("heads_sweep trims the loss list per point and aggregates seeds") {
  fs::path dir = testutil::fresh_dir("exp-sweep");
  json j = tiny_blobs_config("ours");
  j["losses"] = json::array({"softmax", "mse", "mae"});
  j["heads"] = 3;
  ExperimentConfig base = config_from_json(j);

  SweepResult res = heads_sweep(base, {1, 3}, 2, dir.string());
  REQUIRE(res.points.size() == 2);
  CHECK(res.seeds == std::vector<std::uint64_t>{11, 12});
  for (const auto& pt : res.points) {
    CHECK(pt.seed_accuracies.size() == 2);
    double mean = (pt.seed_accuracies[0] + pt.seed_accuracies[1]) / 2.0;
    CHECK(pt.mean == doctest::Approx(mean).epsilon(1e-12));
    double var = 0.0;
    for (double a : pt.seed_accuracies) var += (a - mean) * (a - mean);
    CHECK(pt.stddev == doctest::Approx(std::sqrt(var / 2.0)).epsilon(1e-9));
  }
  CHECK(fs::exists(dir / "sweep.csv"));
  CHECK(fs::exists(dir / "sweep.json"));
  CHECK(fs::exists(dir / "sweep.svg"));

  std::string csv = testutil::read_file((dir / "sweep.csv").string());
  CHECK(csv.rfind("heads,", 0) == 0);
}

TEST_CASE("heads_sweep validation") {
  fs::path dir = testutil::fresh_dir("exp-sweep-bad");
  ExperimentConfig ours = config_from_json(tiny_blobs_config("ours"));

  CHECK_THROWS_AS(heads_sweep(ours, {}, 2, dir.string()), Error);
  CHECK_THROWS_AS(heads_sweep(ours, {1, 2}, 0, dir.string()), Error);
  CHECK_THROWS_AS(heads_sweep(ours, {5}, 2, dir.string()), Error);  // > loss count

  ExperimentConfig swa = config_from_json(tiny_blobs_config("swa"));
  CHECK_THROWS_AS(heads_sweep(swa, {1}, 2, dir.string()), Error);
}
