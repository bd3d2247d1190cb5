#include "selb/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <thread>

#include "selb/error.hpp"
#include "selb/plot.hpp"
#include "selb/serialize.hpp"

namespace selb {

namespace {

// -------- config parsing ------------------------------------------------

void reject_unknown_keys(const nlohmann::json& j, const std::set<std::string>& known,
                         const std::string& scope) {
  for (const auto& item : j.items()) {
    if (!known.count(item.key())) {
      fail(ErrorCode::config, "unknown config field \"" + scope + item.key() + "\"");
    }
  }
}

template <typename T>
T get_field(const nlohmann::json& j, const std::string& key, const std::string& scope, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    fail(ErrorCode::config, "config field \"" + scope + key + "\" has the wrong type");
  }
}

template <typename T>
T require_field(const nlohmann::json& j, const std::string& key, const std::string& scope) {
  if (!j.contains(key)) {
    fail(ErrorCode::config, "missing config field \"" + scope + key + "\"");
  }
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    fail(ErrorCode::config, "config field \"" + scope + key + "\" has the wrong type");
  }
}

DatasetSpec dataset_from_json(const nlohmann::json& j) {
  if (!j.is_object()) fail(ErrorCode::config, "config field \"dataset\" must be an object");
  reject_unknown_keys(j,
                      {"kind", "classes", "dim", "train_per_class", "test_per_class", "spread",
                       "label_noise", "train_images", "train_labels", "test_images",
                       "test_labels", "train_files", "test_files", "subsample_train",
                       "subsample_test"},
                      "dataset.");
  DatasetSpec ds;
  ds.kind = require_field<std::string>(j, "kind", "dataset.");
  if (ds.kind == "blobs") {
    ds.blobs.num_classes = get_field<std::size_t>(j, "classes", "dataset.", 3);
    ds.blobs.dim = get_field<std::size_t>(j, "dim", "dataset.", ds.blobs.num_classes);
    ds.blobs.train_per_class = get_field<std::size_t>(j, "train_per_class", "dataset.", 200);
    ds.blobs.test_per_class = get_field<std::size_t>(j, "test_per_class", "dataset.", 100);
    ds.blobs.spread = get_field<double>(j, "spread", "dataset.", 0.5);
    ds.blobs.label_noise = get_field<double>(j, "label_noise", "dataset.", 0.0);
  } else if (ds.kind == "idx") {
    ds.train_images = require_field<std::string>(j, "train_images", "dataset.");
    ds.train_labels = require_field<std::string>(j, "train_labels", "dataset.");
    ds.test_images = require_field<std::string>(j, "test_images", "dataset.");
    ds.test_labels = require_field<std::string>(j, "test_labels", "dataset.");
    ds.classes = get_field<std::size_t>(j, "classes", "dataset.", 10);
  } else if (ds.kind == "cifar10") {
    ds.train_files = require_field<std::vector<std::string>>(j, "train_files", "dataset.");
    ds.test_files = require_field<std::vector<std::string>>(j, "test_files", "dataset.");
  } else {
    fail(ErrorCode::config,
         "config field \"dataset.kind\" must be blobs, idx or cifar10, got \"" + ds.kind + "\"");
  }
  ds.subsample_train = get_field<std::size_t>(j, "subsample_train", "dataset.", 0);
  ds.subsample_test = get_field<std::size_t>(j, "subsample_test", "dataset.", 0);
  return ds;
}

void validate_config(const ExperimentConfig& cfg) {
  if (cfg.arch != "small-mlp" && cfg.arch != "small-cnn") {
    fail(ErrorCode::config,
         "config field \"arch\" must be small-mlp or small-cnn, got \"" + cfg.arch + "\"");
  }
  switch (cfg.strategy) {
    case Strategy::ours:
      if (cfg.loss_names.size() != cfg.train.num_heads) {
        fail(ErrorCode::config, "strategy ours requires one loss per head: \"losses\" has " +
                                    std::to_string(cfg.loss_names.size()) +
                                    " entries, \"heads\" is " +
                                    std::to_string(cfg.train.num_heads));
      }
      break;
    case Strategy::dse:
      if (cfg.loss_names.size() != 1) {
        fail(ErrorCode::config,
             "strategy dse requires exactly one loss (shared by every head), \"losses\" has " +
                 std::to_string(cfg.loss_names.size()) + " entries");
      }
      break;
    case Strategy::de:
    case Strategy::swa:
      if (cfg.loss_names.size() != 1) {
        fail(ErrorCode::config, "strategy " + strategy_name(cfg.strategy) +
                                    " trains single-head models, \"losses\" must have exactly "
                                    "one entry, got " +
                                    std::to_string(cfg.loss_names.size()));
      }
      break;
    case Strategy::mc_dropout:
      if (cfg.loss_names.size() != 1) {
        fail(ErrorCode::config,
             "strategy mc_dropout trains a single-head model, \"losses\" must have exactly one "
             "entry, got " +
                 std::to_string(cfg.loss_names.size()));
      }
      if (!(cfg.dropout_p > 0.0)) {
        fail(ErrorCode::config, "strategy mc_dropout requires \"dropout_p\" > 0, got " +
                                    format_double(cfg.dropout_p));
      }
      break;
  }
  for (const auto& name : cfg.loss_names) parse_loss_name(name);
  if (cfg.ece_bins == 0) fail(ErrorCode::config, "config field \"ece_bins\" must be positive");
}

// -------- run internals ---------------------------------------------------

struct PreparedData {
  Dataset train;
  Dataset test;
};

PreparedData prepare_data(const ExperimentConfig& cfg) {
  PreparedData d;
  const DatasetSpec& ds = cfg.dataset;
  if (ds.kind == "blobs") {
    auto [train, test] = gen_gaussian_blobs(ds.blobs, cfg.train.seed);
    d.train = std::move(train);
    d.test = std::move(test);
  } else if (ds.kind == "idx") {
    d.train = load_idx_dataset(ds.train_images, ds.train_labels, ds.classes);
    d.test = load_idx_dataset(ds.test_images, ds.test_labels, ds.classes);
  } else if (ds.kind == "cifar10") {
    d.train = load_cifar10(ds.train_files);
    d.test = load_cifar10(ds.test_files);
  } else {
    fail(ErrorCode::config, "unknown dataset kind \"" + ds.kind + "\"");
  }
  if (ds.subsample_train > 0) {
    d.train = subsample(d.train, ds.subsample_train, true, cfg.train.seed);
  }
  if (ds.subsample_test > 0) {
    d.test = subsample(d.test, ds.subsample_test, true, cfg.train.seed + 1);
  }
  return d;
}

ModelSpec model_spec_for(const ExperimentConfig& cfg, const Dataset& train_data) {
  ModelSpec spec;
  spec.arch = cfg.arch;
  spec.input_shape = train_data.sample_shape;
  spec.split = cfg.split;
  spec.num_classes = train_data.num_classes;
  spec.dropout_p = cfg.dropout_p;

  auto to_spec = [&](const std::string& name) {
    LossSpec ls;
    ls.kind = parse_loss_name(name);
    ls.evidential_anneal_epochs = cfg.evidential_anneal_epochs;
    ls.ldmi_det_floor = cfg.ldmi_det_floor;
    return ls;
  };
  if (cfg.strategy == Strategy::dse) {
    // one shared loss cloned across all heads
    for (std::size_t h = 0; h < cfg.train.num_heads; ++h) {
      spec.losses.push_back(to_spec(cfg.loss_names.at(0)));
    }
  } else {
    for (const auto& name : cfg.loss_names) spec.losses.push_back(to_spec(name));
  }
  return spec;
}

TrainedPredictor train_with_strategy(const ExperimentConfig& cfg, const PreparedData& data) {
  ModelSpec spec = model_spec_for(cfg, data.train);
  switch (cfg.strategy) {
    case Strategy::ours:
      return train_multiloss(spec, data.train, data.test, cfg.train);
    case Strategy::dse:
      return train_dse(spec, data.train, data.test, cfg.train);
    case Strategy::de:
      return train_deep_ensembles(spec, data.train, data.test, cfg.train);
    case Strategy::mc_dropout:
      return train_mc_dropout(spec, data.train, data.test, cfg.train);
    case Strategy::swa:
      return train_swa(spec, data.train, data.test, cfg.train);
  }
  fail(ErrorCode::config, "unknown strategy");
}

nlohmann::json separation_row_json(const SeparationRow& row) {
  nlohmann::json j;
  j["true"] = row.mean_true ? nlohmann::json(*row.mean_true) : nlohmann::json();
  j["false"] = row.mean_false ? nlohmann::json(*row.mean_false) : nlohmann::json();
  return j;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorCode::io, "cannot create directory " + dir + ": " + ec.message());
}

std::string join_path(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

void write_training_log(const std::string& path, const std::vector<EpochRecord>& log) {
  std::string out;
  for (const auto& r : log) {
    nlohmann::json j;
    j["epoch"] = r.epoch;
    j["head"] = r.head;
    j["loss"] = r.loss;
    j["train_acc"] = r.train_acc;
    j["test_acc"] = r.test_acc;
    out += j.dump();
    out += '\n';
  }
  write_text_file(path, out);
}

void write_training_curves(const std::string& path, const TrainedPredictor& predictor) {
  // one test-accuracy series per head/member
  std::map<std::size_t, PlotSeries> by_head;
  for (const auto& r : predictor.log) {
    PlotSeries& s = by_head[r.head];
    s.x.push_back(static_cast<double>(r.epoch));
    s.y.push_back(r.test_acc);
  }
  PlotSpec spec;
  spec.title = "test accuracy per head (" + strategy_name(predictor.strategy) + ")";
  spec.x_label = "epoch";
  spec.y_label = "test accuracy";
  for (auto& [head, series] : by_head) {
    series.label = "head " + std::to_string(head);
    spec.series.push_back(std::move(series));
  }
  write_line_plot(path, spec);
}

double population_stddev(const std::vector<double>& xs) {
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(xs.size()));
}

}  // namespace

ExperimentConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) fail(ErrorCode::config, "config root must be a JSON object");
  reject_unknown_keys(
      j, {"name",           "dataset",        "arch",
          "split",          "strategy",       "heads",
          "losses",         "epochs",         "batch_size",
          "learning_rate",  "optimizer",      "dropout_p",
          "seed",           "select_best",    "swa_snapshot_epochs",
          "dse_head_epochs","ece_bins",       "eq4_mode",
          "evidential_anneal_epochs",         "ldmi_det_floor"},
      "");

  ExperimentConfig cfg;
  if (!j.contains("dataset")) fail(ErrorCode::config, "missing config field \"dataset\"");
  cfg.dataset = dataset_from_json(j.at("dataset"));
  cfg.arch = get_field<std::string>(j, "arch", "", "small-mlp");
  cfg.split = get_field<std::size_t>(j, "split", "", 0);
  cfg.strategy = parse_strategy(require_field<std::string>(j, "strategy", ""));
  cfg.name = get_field<std::string>(j, "name", "", strategy_name(cfg.strategy));
  cfg.loss_names = require_field<std::vector<std::string>>(j, "losses", "");
  cfg.dropout_p = get_field<double>(j, "dropout_p", "", 0.5);
  cfg.evidential_anneal_epochs = get_field<double>(j, "evidential_anneal_epochs", "", 10.0);
  cfg.ldmi_det_floor = get_field<double>(j, "ldmi_det_floor", "", 1e-8);

  cfg.train.epochs = get_field<std::size_t>(j, "epochs", "", 30);
  cfg.train.batch_size = get_field<std::size_t>(j, "batch_size", "", 32);
  cfg.train.learning_rate = get_field<double>(j, "learning_rate", "", 1e-3);
  cfg.train.optimizer = get_field<std::string>(j, "optimizer", "", "adam");
  cfg.train.seed = get_field<std::uint64_t>(j, "seed", "", 0);
  cfg.train.num_heads = get_field<std::size_t>(j, "heads", "", 1);
  cfg.train.swa_snapshot_epochs = get_field<std::size_t>(j, "swa_snapshot_epochs", "", 4);
  cfg.train.dse_head_epochs = get_field<std::size_t>(j, "dse_head_epochs", "", 10);
  cfg.train.select_best = get_field<bool>(j, "select_best", "", true);

  cfg.ece_bins = get_field<std::size_t>(j, "ece_bins", "", 15);
  cfg.eq4_mode = parse_eq4_mode(get_field<std::string>(j, "eq4_mode", "", "population"));

  validate_config(cfg);
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::config, "config " + path + " is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

nlohmann::json config_to_json(const ExperimentConfig& cfg) {
  nlohmann::json d;
  d["kind"] = cfg.dataset.kind;
  if (cfg.dataset.kind == "blobs") {
    d["classes"] = cfg.dataset.blobs.num_classes;
    d["dim"] = cfg.dataset.blobs.dim;
    d["train_per_class"] = cfg.dataset.blobs.train_per_class;
    d["test_per_class"] = cfg.dataset.blobs.test_per_class;
    d["spread"] = cfg.dataset.blobs.spread;
    d["label_noise"] = cfg.dataset.blobs.label_noise;
  } else if (cfg.dataset.kind == "idx") {
    d["train_images"] = cfg.dataset.train_images;
    d["train_labels"] = cfg.dataset.train_labels;
    d["test_images"] = cfg.dataset.test_images;
    d["test_labels"] = cfg.dataset.test_labels;
    d["classes"] = cfg.dataset.classes;
  } else {
    d["train_files"] = cfg.dataset.train_files;
    d["test_files"] = cfg.dataset.test_files;
  }
  d["subsample_train"] = cfg.dataset.subsample_train;
  d["subsample_test"] = cfg.dataset.subsample_test;

  nlohmann::json j;
  j["name"] = cfg.name;
  j["dataset"] = d;
  j["arch"] = cfg.arch;
  j["split"] = cfg.split;
  j["strategy"] = strategy_name(cfg.strategy);
  j["heads"] = cfg.train.num_heads;
  j["losses"] = cfg.loss_names;
  j["epochs"] = cfg.train.epochs;
  j["batch_size"] = cfg.train.batch_size;
  j["learning_rate"] = cfg.train.learning_rate;
  j["optimizer"] = cfg.train.optimizer;
  j["dropout_p"] = cfg.dropout_p;
  j["seed"] = cfg.train.seed;
  j["select_best"] = cfg.train.select_best;
  j["swa_snapshot_epochs"] = cfg.train.swa_snapshot_epochs;
  j["dse_head_epochs"] = cfg.train.dse_head_epochs;
  j["ece_bins"] = cfg.ece_bins;
  j["eq4_mode"] = eq4_mode_name(cfg.eq4_mode);
  j["evidential_anneal_epochs"] = cfg.evidential_anneal_epochs;
  j["ldmi_det_floor"] = cfg.ldmi_det_floor;
  return j;
}

std::string config_digest(const ExperimentConfig& cfg) {
  std::string dump = config_to_json(cfg).dump();
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : dump) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

nlohmann::json report_to_json(const EvaluationReport& report) {
  nlohmann::json j;
  j["n_samples"] = report.n_samples;
  j["accuracy"] = report.accuracy;
  j["ece"] = report.ece;
  j["brier"] = report.brier;
  nlohmann::json sep;
  sep["avg_entropy"] = separation_row_json(report.separation.avg_entropy);
  sep["mean_entropy"] = separation_row_json(report.separation.mean_entropy);
  sep["class_variance"] = separation_row_json(report.separation.class_variance);
  j["separation"] = sep;
  auto samples = nlohmann::json::array();
  for (const auto& s : report.samples) {
    nlohmann::json sj;
    sj["predicted"] = s.predicted;
    sj["label"] = s.label;
    sj["confidence"] = s.confidence;
    sj["avg_entropy"] = s.u.avg_entropy;
    sj["mean_entropy"] = s.u.mean_entropy ? nlohmann::json(*s.u.mean_entropy) : nlohmann::json();
    sj["class_variance"] =
        s.u.class_variance ? nlohmann::json(*s.u.class_variance) : nlohmann::json();
    samples.push_back(sj);
  }
  j["samples"] = samples;
  return j;
}

RunOutputs execute_run(const ExperimentConfig& cfg) {
  auto t0 = std::chrono::steady_clock::now();
  validate_config(cfg);

  RunOutputs out;
  out.config = cfg;
  out.digest = config_digest(cfg);

  PreparedData data = prepare_data(cfg);
  TrainedPredictor predictor = train_with_strategy(cfg, data);
  out.ldmi_floor_events = predictor.ldmi_floor_events;

  auto preds = predict_dataset(predictor, data.test);
  bool ensemble_measures = cfg.strategy != Strategy::swa;
  out.report =
      evaluate_predictions(preds, data.test.labels, cfg.ece_bins, cfg.eq4_mode, ensemble_measures);
  out.predictor = std::make_shared<TrainedPredictor>(std::move(predictor));

  out.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

RunOutputs run_experiment(const ExperimentConfig& cfg, const std::string& out_dir) {
  RunOutputs out = execute_run(cfg);
  ensure_dir(out_dir);

  // deterministic report (no wall clock, no paths)
  nlohmann::json report;
  report["method"] = cfg.name;
  report["strategy"] = strategy_name(cfg.strategy);
  report["config_digest"] = out.digest;
  report["seed"] = cfg.train.seed;
  report["eq4_mode"] = eq4_mode_name(cfg.eq4_mode);
  report["ece_bins"] = cfg.ece_bins;
  report["ldmi_floor_events"] = out.ldmi_floor_events;
  report["report"] = report_to_json(out.report);
  write_text_file(join_path(out_dir, "report.json"), report.dump(2) + "\n");

  // run metadata (wall clock and artifact paths live here, not in report.json)
  nlohmann::json run;
  run["config"] = config_to_json(cfg);
  run["config_digest"] = out.digest;
  run["wall_seconds"] = out.wall_seconds;
  run["artifacts"] = {"report.json", "report.csv", "train_log.jsonl", "training_curves.svg"};
  write_text_file(join_path(out_dir, "run.json"), run.dump(2) + "\n");

  std::string csv = std::string(kComparisonCsvHeader) + "\n" +
                    report_csv_row(cfg.name, out.report) + "\n";
  write_text_file(join_path(out_dir, "report.csv"), csv);

  const TrainedPredictor& predictor = *out.predictor;
  write_training_log(join_path(out_dir, "train_log.jsonl"), predictor.log);
  write_training_curves(join_path(out_dir, "training_curves.svg"), predictor);
  for (std::size_t i = 0; i < predictor.models.size(); ++i) {
    std::string stem = "checkpoint-" + std::to_string(i);
    save_checkpoint(predictor.models[i], join_path(out_dir, stem + ".selb"),
                    join_path(out_dir, stem + ".json"));
  }

  if (out.ldmi_floor_events > 0) {
    std::fprintf(stderr, "warning: determinant floor hit in %zu batches during %s\n",
                 out.ldmi_floor_events, cfg.name.c_str());
  }
  return out;
}

std::vector<RunOutputs> compare_experiments(const std::vector<ExperimentConfig>& configs,
                                            const std::string& out_dir) {
  if (configs.empty()) fail(ErrorCode::config, "compare: no configs given");

  nlohmann::json base_dataset = config_to_json(configs[0])["dataset"];
  std::set<std::string> names;
  for (const auto& cfg : configs) {
    validate_config(cfg);
    nlohmann::json ds = config_to_json(cfg)["dataset"];
    if (ds != base_dataset) {
      fail(ErrorCode::config, "compare: config \"" + cfg.name +
                                  "\" uses a different dataset than \"" + configs[0].name +
                                  "\" (methods must share the data)");
    }
    if (cfg.train.num_heads != configs[0].train.num_heads) {
      fail(ErrorCode::config,
           "compare: config \"" + cfg.name + "\" has heads=" +
               std::to_string(cfg.train.num_heads) + " but \"" + configs[0].name +
               "\" has heads=" + std::to_string(configs[0].train.num_heads) +
               " (methods must share M)");
    }
    if (!names.insert(cfg.name).second) {
      fail(ErrorCode::config, "compare: duplicate method name \"" + cfg.name + "\"");
    }
  }

  ensure_dir(out_dir);
  std::vector<RunOutputs> outs;
  std::string csv = std::string(kComparisonCsvHeader) + "\n";
  for (const auto& cfg : configs) {
    RunOutputs r = run_experiment(cfg, join_path(out_dir, cfg.name));
    csv += report_csv_row(cfg.name, r.report);
    csv += '\n';
    outs.push_back(std::move(r));
  }
  write_text_file(join_path(out_dir, "compare.csv"), csv);
  return outs;
}

SweepResult heads_sweep(const ExperimentConfig& base, const std::vector<std::size_t>& head_counts,
                        std::size_t num_seeds, const std::string& out_dir) {
  if (base.strategy != Strategy::ours) {
    fail(ErrorCode::config, "sweep varies multi-loss heads; base config must use strategy ours");
  }
  if (head_counts.empty()) fail(ErrorCode::config, "sweep: no head counts given");
  if (num_seeds == 0) fail(ErrorCode::config, "sweep: need at least one seed");
  std::size_t max_heads = *std::max_element(head_counts.begin(), head_counts.end());
  if (*std::min_element(head_counts.begin(), head_counts.end()) == 0) {
    fail(ErrorCode::config, "sweep: head counts must be at least 1");
  }
  if (max_heads > base.loss_names.size()) {
    fail(ErrorCode::config, "sweep: " + std::to_string(max_heads) +
                                " heads requested but \"losses\" lists only " +
                                std::to_string(base.loss_names.size()));
  }

  SweepResult result;
  for (std::size_t i = 0; i < num_seeds; ++i) result.seeds.push_back(base.train.seed + i);

  struct Job {
    ExperimentConfig cfg;
    std::size_t point;
    std::size_t slot;
  };
  std::vector<Job> jobs;
  for (std::size_t pi = 0; pi < head_counts.size(); ++pi) {
    SweepPoint point;
    point.heads = head_counts[pi];
    point.seed_accuracies.resize(num_seeds, 0.0);
    result.points.push_back(point);
    for (std::size_t si = 0; si < num_seeds; ++si) {
      ExperimentConfig cfg = base;
      cfg.train.num_heads = head_counts[pi];
      cfg.loss_names.assign(base.loss_names.begin(),
                            base.loss_names.begin() + static_cast<std::ptrdiff_t>(head_counts[pi]));
      cfg.train.seed = result.seeds[si];
      cfg.name = "ours-m" + std::to_string(head_counts[pi]) + "-s" + std::to_string(si);
      validate_config(cfg);
      jobs.push_back({std::move(cfg), pi, si});
    }
  }

  // worker pool over independent runs; each run's graph/RNG state is private
  std::atomic<std::size_t> next{0};
  std::mutex err_mutex;
  std::exception_ptr first_error;
  auto worker = [&]() {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= jobs.size()) return;
      try {
        RunOutputs r = execute_run(jobs[i].cfg);
        result.points[jobs[i].point].seed_accuracies[jobs[i].slot] = r.report.accuracy;
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  std::size_t workers = std::max<std::size_t>(1, std::thread::hardware_concurrency());
  workers = std::min(workers, jobs.size());
  std::vector<std::thread> pool;
  for (std::size_t i = 0; i < workers; ++i) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);

  for (auto& p : result.points) {
    double mean = 0.0;
    for (double a : p.seed_accuracies) mean += a;
    p.mean = mean / static_cast<double>(p.seed_accuracies.size());
    p.stddev = population_stddev(p.seed_accuracies);
  }

  ensure_dir(out_dir);
  std::string csv = "heads,seeds,accuracy_mean,accuracy_stddev\n";
  for (const auto& p : result.points) {
    csv += std::to_string(p.heads) + "," + std::to_string(num_seeds) + "," +
           format_double(p.mean) + "," + format_double(p.stddev) + "\n";
  }
  write_text_file(join_path(out_dir, "sweep.csv"), csv);

  nlohmann::json sj;
  sj["seeds"] = result.seeds;
  auto points = nlohmann::json::array();
  for (const auto& p : result.points) {
    nlohmann::json pj;
    pj["heads"] = p.heads;
    pj["accuracies"] = p.seed_accuracies;
    pj["mean"] = p.mean;
    pj["stddev"] = p.stddev;
    points.push_back(pj);
  }
  sj["points"] = points;
  write_text_file(join_path(out_dir, "sweep.json"), sj.dump(2) + "\n");

  PlotSeries series;
  series.label = "ours";
  for (const auto& p : result.points) {
    series.x.push_back(static_cast<double>(p.heads));
    series.y.push_back(p.mean);
    series.y_err.push_back(p.stddev);
  }
  PlotSpec plot;
  plot.title = "test accuracy vs head count";
  plot.x_label = "heads";
  plot.y_label = "test accuracy";
  plot.series.push_back(std::move(series));
  write_line_plot(join_path(out_dir, "sweep.svg"), plot);

  return result;
}

}  // namespace selb
