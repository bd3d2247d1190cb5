#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "selb/data.hpp"
#include "selb/metrics.hpp"
#include "selb/train.hpp"

namespace selb {

// Where the data comes from. kind selects which of the remaining fields are
// read: "blobs" uses the synthetic-cluster params, "idx" the four file paths,
// "cifar10" the binary batch file lists.
struct DatasetSpec {
  std::string kind = "blobs";  // blobs | idx | cifar10
  BlobsConfig blobs;
  std::string train_images, train_labels, test_images, test_labels;
  std::vector<std::string> train_files, test_files;
  std::size_t classes = 10;  // idx label-space size
  std::size_t subsample_train = 0;  // 0 = keep everything (stratified otherwise)
  std::size_t subsample_test = 0;
};

struct ExperimentConfig {
  std::string name;  // report row label; defaults to the strategy name
  DatasetSpec dataset;
  std::string arch = "small-mlp";
  std::size_t split = 0;
  Strategy strategy = Strategy::ours;
  std::vector<std::string> loss_names;
  double dropout_p = 0.5;
  double evidential_anneal_epochs = 10.0;
  double ldmi_det_floor = 1e-8;
  TrainConfig train;
  std::size_t ece_bins = 15;
  Eq4Mode eq4_mode = Eq4Mode::population;
};

// Strict parse: unknown keys, wrong types, and violated invariants are
// config errors naming the offending field(s). Nothing trains before the
// whole config has been validated.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);

// Canonical JSON form (every field explicit, sorted keys); the digest is a
// 64-bit FNV-1a over its dump, so it changes iff some field changes.
nlohmann::json config_to_json(const ExperimentConfig& cfg);
std::string config_digest(const ExperimentConfig& cfg);

nlohmann::json report_to_json(const EvaluationReport& report);

struct RunOutputs {
  ExperimentConfig config;
  std::string digest;
  EvaluationReport report;
  std::shared_ptr<TrainedPredictor> predictor;
  std::size_t ldmi_floor_events = 0;
  double wall_seconds = 0.0;
};

// Builds the datasets, trains per strategy, evaluates on the test split.
// No files written.
RunOutputs execute_run(const ExperimentConfig& cfg);

// execute_run + artifacts in out_dir: report.json (deterministic), run.json
// (adds wall clock + paths), report.csv, train_log.jsonl, training_curves.svg,
// checkpoint-<i>.selb/.json. All writes are atomic.
RunOutputs run_experiment(const ExperimentConfig& cfg, const std::string& out_dir);

// Runs every config (each into out_dir/<name>/) and writes out_dir/compare.csv
// with one row per config. Configs must share the dataset spec and head
// count, and carry distinct names.
std::vector<RunOutputs> compare_experiments(const std::vector<ExperimentConfig>& configs,
                                            const std::string& out_dir);

struct SweepPoint {
  std::size_t heads = 0;
  std::vector<double> seed_accuracies;  // aligned with the swept seeds
  double mean = 0.0;
  double stddev = 0.0;  // population
};

struct SweepResult {
  std::vector<SweepPoint> points;
  std::vector<std::uint64_t> seeds;
};

// Head-count sweep for the multi-loss strategy: for each M, the first M
// losses of the base config train under each seed (base seed + 0..k-1); runs
// execute on a worker pool. Writes out_dir/sweep.csv, sweep.json, sweep.svg.
SweepResult heads_sweep(const ExperimentConfig& base, const std::vector<std::size_t>& head_counts,
                        std::size_t num_seeds, const std::string& out_dir);

}  // namespace selb
