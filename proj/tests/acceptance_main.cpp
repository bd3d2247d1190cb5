// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Each criterion re-derives its expectation independently of the
// library internals it exercises (finite differences, a from-scratch metric
// oracle, byte comparisons, file round trips).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "selb/data.hpp"
#include "selb/error.hpp"
#include "selb/experiment.hpp"
#include "selb/metrics.hpp"
#include "selb/model.hpp"
#include "selb/train.hpp"

#include "gradcheck_families.hpp"
#include "oracle.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace selb;

namespace {

struct Criterion {
  int number;
  std::string label;
  std::function<void(std::string&)> body;  // throws or appends to the failure note
};

double now_seconds() {
  using clock = std::chrono::steady_clock;
  static const clock::time_point t0 = clock::now();
  return std::chrono::duration<double>(clock::now() - t0).count();
}

void expect(bool ok, std::string& fail_note, const std::string& what) {
  if (!ok && fail_note.empty()) fail_note = what;
}

std::string preset(const std::string& name) {
  return std::string(SELB_SOURCE_DIR) + "/configs/" + name;
}

// ---------------------------------------------------------------- criterion 1

void criterion_gradients(std::string& fail) {
  auto results = testutil::run_gradcheck_battery(50);
  expect(results.size() >= 25, fail,
         "only " + std::to_string(results.size()) + " op/loss families covered");
  for (const auto& r : results) {
    expect(r.ok, fail, "family " + r.name + ": " + r.detail);
    expect(r.probes >= 50, fail,
           "family " + r.name + " ran " + std::to_string(r.probes) + " instances (< 50)");
  }
}

// ---------------------------------------------------------------- criterion 2

PredictionSet random_set(Rng& rng, std::size_t heads, std::size_t classes) {
  std::vector<double> rows(heads * classes);
  for (std::size_t h = 0; h < heads; ++h) {
    double sum = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      double v = rng.uniform();
      if (rng.uniform() < 0.05) v = 0.0;  // exercise the 0*log0 branch
      rows[h * classes + c] = v;
      sum += v;
    }
    if (sum == 0.0) {
      rows[h * classes] = 1.0;
      sum = 1.0;
    }
    for (std::size_t c = 0; c < classes; ++c) rows[h * classes + c] /= sum;
  }
  return make_prediction_set(heads, classes, std::move(rows));
}

void criterion_metric_oracle(std::string& fail) {
  Rng rng(20260819);
  const double tol = 1e-12;
  std::vector<double> confidences;
  std::vector<bool> correct;

  for (int i = 0; i < 1000; ++i) {
    std::size_t heads = 1 + rng.uniform_int(6);
    std::size_t classes = 2 + rng.uniform_int(7);
    PredictionSet ps = random_set(rng, heads, classes);

    double e2_lib = entropy_of_average(ps);
    double e2_ref = oracle::normalized_entropy(oracle::average_rows(ps));
    expect(std::abs(e2_lib - e2_ref) <= tol, fail, "avg-entropy mismatch at set " +
                                                        std::to_string(i));

    double e3_lib = mean_entropy(ps);
    double e3_ref = oracle::mean_entropy(ps);
    expect(std::abs(e3_lib - e3_ref) <= tol, fail, "mean-entropy mismatch at set " +
                                                        std::to_string(i));

    expect(predicted_class(ps) == oracle::predicted_class(ps), fail,
           "argmax mismatch at set " + std::to_string(i));

    for (auto mode : {Eq4Mode::population, Eq4Mode::raw_sum}) {
      double v_lib = class_variance(ps, mode);
      double v_ref = oracle::class_variance(ps, mode == Eq4Mode::raw_sum);
      expect(std::abs(v_lib - v_ref) <= tol, fail, "class-variance mismatch at set " +
                                                       std::to_string(i));
    }

    std::size_t label = rng.uniform_int(classes);
    std::vector<double> avg = oracle::average_rows(ps);
    expect(std::abs(brier_score(avg, label) - oracle::brier(avg, label)) <= tol, fail,
           "brier mismatch at set " + std::to_string(i));

    std::size_t pred = oracle::predicted_class(ps);
    confidences.push_back(avg[pred]);
    correct.push_back(pred == label);
  }

  for (std::size_t bins : {1u, 2u, 10u, 15u, 64u}) {
    double lib = expected_calibration_error(confidences, correct, bins);
    double ref = oracle::ece(confidences, correct, bins);
    expect(std::abs(lib - ref) <= tol, fail,
           "ece mismatch at bins=" + std::to_string(bins));
  }
}

// ---------------------------------------------------------------- criterion 3

void criterion_fuzzed_invariants(std::string& fail) {
  Rng rng(77001);
  const LossKind all_kinds[] = {LossKind::softmax_ce, LossKind::relaxed_softmax,
                                LossKind::evidential,  LossKind::mse,
                                LossKind::mae,         LossKind::ldmi};
  std::size_t evals = 0;

  for (int trial = 0; trial < 100; ++trial) {
    std::size_t classes = 2 + rng.uniform_int(5);
    std::size_t heads = 1 + rng.uniform_int(4);
    bool stochastic = rng.uniform() < 0.3;

    ModelSpec spec;
    spec.arch = "small-mlp";
    spec.input_shape = {2 + rng.uniform_int(5)};
    spec.split = rng.uniform_int(6);
    spec.num_classes = classes;
    spec.dropout_p = stochastic ? 0.3 : 0.0;
    for (std::size_t h = 0; h < heads; ++h) {
      LossSpec ls;
      ls.kind = all_kinds[rng.uniform_int(6)];
      spec.losses.push_back(ls);
    }
    MultiHeadModel model = build_model(spec, rng.next_u64());
    // keep the parameters away from the all-zeros init
    for (auto& p : model.all_params())
      if (p.size() > 0)
        for (auto& v : const_cast<Tensor&>(p).mutable_data()) v += rng.normal() * 0.3;

    std::size_t batch = 100;
    std::vector<double> xs(batch * spec.input_shape[0]);
    for (auto& v : xs) v = rng.normal() * 2.0;
    Shape bs = {batch, spec.input_shape[0]};
    Tensor x = Tensor::from_data(bs, xs);

    Rng pass_rng(rng.next_u64());
    auto sets = predict_batch(model, x, stochastic ? Mode::mc_dropout : Mode::eval,
                              stochastic ? &pass_rng : nullptr);
    for (const auto& ps : sets) {
      ++evals;
      for (std::size_t h = 0; h < ps.num_heads; ++h) {
        double sum = 0.0;
        for (std::size_t c = 0; c < ps.num_classes; ++c) {
          double v = ps.per_head[h * ps.num_classes + c];
          expect(v >= 0.0 && v <= 1.0 + 1e-9, fail, "probability outside [0,1]");
          sum += v;
        }
        expect(std::abs(sum - 1.0) <= 1e-6, fail,
               "head row sums to " + format_double(sum));
      }
      double e2 = entropy_of_average(ps);
      double e3 = mean_entropy(ps);
      double v4 = class_variance(ps, Eq4Mode::population);
      expect(e2 >= 0.0 && e2 <= 1.0, fail, "avg-entropy outside [0,1]");
      expect(e3 >= 0.0 && e3 <= 1.0, fail, "mean-entropy outside [0,1]");
      expect(v4 >= 0.0, fail, "class variance negative");
      if (ps.num_heads == 1)
        expect(v4 == 0.0, fail, "single-row class variance not exactly zero");
    }
  }
  expect(evals >= 10000, fail,
         "only " + std::to_string(evals) + " fuzzed evaluations (< 10000)");
}

// ---------------------------------------------------------------- criterion 4

void criterion_degenerate_equivalence(std::string& fail) {
  BlobsConfig bc;
  bc.num_classes = 3;
  bc.dim = 3;
  bc.train_per_class = 60;
  bc.test_per_class = 30;
  bc.spread = 0.5;
  auto [train, test] = gen_gaussian_blobs(bc, 404);

  ModelSpec spec;
  spec.arch = "small-mlp";
  spec.input_shape = train.sample_shape;
  spec.split = 3;
  spec.num_classes = 3;
  spec.dropout_p = 0.0;
  LossSpec ls;
  ls.kind = LossKind::softmax_ce;
  spec.losses = {ls};

  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.batch_size = 16;
  cfg.learning_rate = 1e-3;
  cfg.seed = 404;
  cfg.num_heads = 1;
  cfg.select_best = false;

  TrainedPredictor ours = train_multiloss(spec, train, test, cfg);
  TrainedPredictor dse = train_dse(spec, train, test, cfg);
  TrainedPredictor de = train_deep_ensembles(spec, train, test, cfg);

  auto params_of = [](const TrainedPredictor& p) { return snapshot_params(p.models[0]); };
  ParamSnapshot a = params_of(ours), b = params_of(dse), c = params_of(de);
  expect(a == b, fail, "multi-loss vs sequential-heads parameters differ at M=1");
  expect(a == c, fail, "multi-loss vs independent-members parameters differ at M=1");
  expect(!a.empty(), fail, "no parameters captured");
}

// ---------------------------------------------------------------- criterion 5

void criterion_heads_sweep(std::string& fail) {
  ExperimentConfig base = load_config(preset("paper-mini.json"));
  fs::path dir = testutil::fresh_dir("acc-sweep");
  SweepResult res = heads_sweep(base, {1, 2, 3, 4}, 5, dir.string());

  double mean1 = -1.0, mean4 = -1.0;
  for (const auto& pt : res.points) {
    if (pt.heads == 1) mean1 = pt.mean;
    if (pt.heads == 4) mean4 = pt.mean;
    expect(pt.seed_accuracies.size() == 5, fail, "point did not run 5 seeds");
  }
  expect(mean1 >= 0.0 && mean4 >= 0.0, fail, "sweep points missing");
  expect(mean4 >= mean1 - 0.01, fail,
         "mean accuracy dropped: M=4 " + format_double(mean4) + " vs M=1 " +
             format_double(mean1));
  expect(fs::exists(dir / "sweep.csv"), fail, "sweep.csv not written");
  expect(fs::exists(dir / "sweep.svg"), fail, "sweep.svg not written");
}

// ---------------------------------------------------------------- criterion 6

void criterion_uncertainty_separation(std::string& fail) {
  const char* presets[] = {"paper-mini.json", "paper-mini-de.json", "paper-mini-mc.json"};
  for (const char* file : presets) {
    ExperimentConfig cfg = load_config(preset(file));
    double sum_true = 0.0, sum_false = 0.0;
    std::size_t n_true = 0, n_false = 0;
    for (std::uint64_t s = 0; s < 5; ++s) {
      ExperimentConfig c = cfg;
      c.train.seed = cfg.train.seed + s;
      RunOutputs out = execute_run(c);
      for (const auto& rec : out.report.samples) {
        if (rec.predicted == rec.label) {
          sum_true += rec.u.avg_entropy;
          ++n_true;
        } else {
          sum_false += rec.u.avg_entropy;
          ++n_false;
        }
      }
    }
    expect(n_true > 0 && n_false > 0, fail,
           std::string(file) + ": a pooled side is empty (" + std::to_string(n_true) +
               " correct, " + std::to_string(n_false) + " incorrect)");
    if (n_true > 0 && n_false > 0) {
      double mt = sum_true / static_cast<double>(n_true);
      double mf = sum_false / static_cast<double>(n_false);
      expect(mf > mt, fail, std::string(file) + ": avg-entropy not separated (correct " +
                                format_double(mt) + ", incorrect " + format_double(mf) +
                                ")");
    }
  }
}

// ---------------------------------------------------------------- criterion 7

std::vector<std::string> split_csv_row(const std::string& row) {
  std::vector<std::string> cells;
  std::string cur;
  for (char ch : row) {
    if (ch == ',') {
      cells.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  cells.push_back(cur);
  return cells;
}

void criterion_comparison_table(std::string& fail) {
  std::vector<ExperimentConfig> configs;
  for (const char* f : {"paper-mini.json", "paper-mini-dse.json", "paper-mini-de.json",
                        "paper-mini-mc.json", "paper-mini-swa.json"})
    configs.push_back(load_config(preset(f)));
  fs::path dir = testutil::fresh_dir("acc-compare");
  compare_experiments(configs, dir.string());

  std::string csv = testutil::read_file((dir / "compare.csv").string());
  std::vector<std::string> rows;
  std::stringstream ss(csv);
  for (std::string line; std::getline(ss, line);)
    if (!line.empty()) rows.push_back(line);

  expect(rows.size() == 6, fail, "expected header + 5 rows, got " +
                                     std::to_string(rows.size()) + " lines");
  expect(!rows.empty() && rows[0] == kComparisonCsvHeader, fail, "header mismatch");

  for (std::size_t r = 1; r < rows.size(); ++r) {
    auto cells = split_csv_row(rows[r]);
    expect(cells.size() == 10, fail, "row " + std::to_string(r) + " has " +
                                         std::to_string(cells.size()) + " columns");
    if (cells.size() != 10) continue;
    bool is_swa = cells[0] == "swa";
    for (std::size_t c = 1; c < 10; ++c) {
      if (cells[c] == "NA") {
        expect(is_swa && c >= 6, fail,
               "unexpected NA in row " + cells[0] + " column " + std::to_string(c));
        continue;
      }
      double v = std::strtod(cells[c].c_str(), nullptr);
      expect(std::isfinite(v), fail,
             "non-finite cell in row " + cells[0] + ": " + cells[c]);
    }
    if (is_swa)
      for (std::size_t c = 6; c < 10; ++c)
        expect(cells[c] == "NA", fail, "weight-averaged row should carry NA spread cells");
  }
}

// ---------------------------------------------------------------- criterion 8

void criterion_mc_dropout_spread(std::string& fail) {
  BlobsConfig bc;
  bc.num_classes = 3;
  bc.dim = 3;
  bc.train_per_class = 60;
  bc.test_per_class = 30;
  bc.spread = 0.5;
  auto [train, test] = gen_gaussian_blobs(bc, 808);

  ModelSpec spec;
  spec.arch = "small-mlp";
  spec.input_shape = train.sample_shape;
  spec.split = 3;
  spec.num_classes = 3;
  spec.dropout_p = 0.5;
  LossSpec ls;
  ls.kind = LossKind::softmax_ce;
  spec.losses = {ls};

  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 16;
  cfg.learning_rate = 1e-3;
  cfg.seed = 808;
  cfg.num_heads = 8;

  TrainedPredictor p = train_mc_dropout(spec, train, test, cfg);
  auto sets = predict_all(p, test.batch_x({0, 1, 2, 3}));
  expect(sets.size() == 4, fail, "wrong prediction count");
  for (const auto& ps : sets) {
    expect(ps.num_heads == 8, fail, "expected 8 stochastic rows");
    bool differ = false;
    for (std::size_t h = 1; h < ps.num_heads; ++h)
      for (std::size_t c = 0; c < ps.num_classes; ++c)
        differ |= ps.per_head[h * ps.num_classes + c] != ps.per_head[c];
    expect(differ, fail, "stochastic passes produced identical rows at p=0.5");
    expect(class_variance(ps, Eq4Mode::population) > 0.0, fail,
           "class variance not positive at p=0.5");
  }

  ModelSpec inert = spec;
  inert.dropout_p = 0.0;
  TrainedPredictor q = train_mc_dropout(inert, train, test, cfg);
  auto qsets = predict_all(q, test.all_x());
  for (const auto& ps : qsets)
    expect(class_variance(ps, Eq4Mode::population) == 0.0, fail,
           "class variance not exactly zero at p=0");
}

// ---------------------------------------------------------------- criterion 9

void criterion_weight_averaging(std::string& fail) {
  BlobsConfig bc;
  bc.num_classes = 3;
  bc.dim = 3;
  bc.train_per_class = 100;
  bc.test_per_class = 60;
  bc.spread = 0.5;
  auto [train, test] = gen_gaussian_blobs(bc, 909);

  ModelSpec spec;
  spec.arch = "small-mlp";
  spec.input_shape = train.sample_shape;
  spec.split = 3;
  spec.num_classes = 3;
  spec.dropout_p = 0.0;
  LossSpec ls;
  ls.kind = LossKind::softmax_ce;
  spec.losses = {ls};

  // bitwise idempotence on identical snapshots
  MultiHeadModel m = build_model(spec, 1);
  ParamSnapshot snap = snapshot_params(m);
  swa_average(m, {snap, snap, snap, snap, snap});
  expect(snapshot_params(m) == snap, fail, "averaging identical snapshots is not bit-exact");

  // averaging a converged run costs at most two accuracy points
  TrainConfig cfg;
  cfg.epochs = 30;
  cfg.batch_size = 32;
  cfg.learning_rate = 1e-3;
  cfg.seed = 909;
  cfg.swa_snapshot_epochs = 4;
  cfg.select_best = false;

  TrainedPredictor averaged = train_swa(spec, train, test, cfg);
  TrainedPredictor final_snapshot = train_multiloss(spec, train, test, cfg);

  auto accuracy = [&](const TrainedPredictor& p) {
    auto preds = predict_dataset(p, test);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < preds.size(); ++i)
      hits += predicted_class(preds[i]) == test.labels[i];
    return static_cast<double>(hits) / static_cast<double>(preds.size());
  };
  double acc_avg = accuracy(averaged);
  double acc_final = accuracy(final_snapshot);
  expect(acc_avg >= acc_final - 0.02, fail,
         "averaged accuracy " + format_double(acc_avg) + " vs final " +
             format_double(acc_final));
}

// --------------------------------------------------------------- criterion 10

void criterion_data_roundtrip(std::string& fail) {
  fs::path dir = testutil::fresh_dir("acc-data");
  Rng rng(1010);

  // idx: save -> load -> save is byte-identical
  IdxData idx;
  idx.dims = {6, 5, 4};
  idx.bytes.resize(6 * 5 * 4);
  for (auto& b : idx.bytes) b = static_cast<std::uint8_t>(rng.uniform_int(256));
  fs::path p1 = dir / "a.idx", p2 = dir / "b.idx";
  save_idx(p1.string(), idx);
  IdxData loaded = load_idx(p1.string());
  expect(loaded.dims == idx.dims && loaded.bytes == idx.bytes, fail,
         "idx payload changed across a round trip");
  save_idx(p2.string(), loaded);
  expect(testutil::read_file(p1.string()) == testutil::read_file(p2.string()), fail,
         "idx files differ across a round trip");

  // cifar10: same property
  Cifar10Data cf;
  cf.labels = {0, 3, 9, 5};
  cf.pixels.resize(4 * 3072);
  for (auto& b : cf.pixels) b = static_cast<std::uint8_t>(rng.uniform_int(256));
  fs::path c1 = dir / "a.bin", c2 = dir / "b.bin";
  save_cifar10_raw(c1.string(), cf);
  Cifar10Data cloaded = load_cifar10_raw(c1.string());
  expect(cloaded.labels == cf.labels && cloaded.pixels == cf.pixels, fail,
         "cifar payload changed across a round trip");
  save_cifar10_raw(c2.string(), cloaded);
  expect(testutil::read_file(c1.string()) == testutil::read_file(c2.string()), fail,
         "cifar files differ across a round trip");

  // three distinct malformed-input error classes
  std::vector<ErrorCode> seen;

  fs::path bad_magic = dir / "magic.idx";
  {
    std::string bytes = testutil::read_file(p1.string());
    bytes[2] = '\x7f';  // wrong type code
    std::ofstream(bad_magic.string(), std::ios::binary) << bytes;
  }
  try {
    load_idx(bad_magic.string());
    expect(false, fail, "corrupt magic accepted");
  } catch (const Error& e) {
    seen.push_back(e.code());
  }

  fs::path truncated = dir / "short.idx";
  {
    std::string bytes = testutil::read_file(p1.string());
    bytes.resize(bytes.size() / 2);
    std::ofstream(truncated.string(), std::ios::binary) << bytes;
  }
  try {
    load_idx(truncated.string());
    expect(false, fail, "truncated file accepted");
  } catch (const Error& e) {
    seen.push_back(e.code());
  }

  {
    IdxData images;
    images.dims = {3, 4, 4};
    images.bytes.assign(3 * 16, 0);
    IdxData labels;
    labels.dims = {4};
    labels.bytes.assign(4, 0);
    save_idx((dir / "imgs.idx").string(), images);
    save_idx((dir / "lbls.idx").string(), labels);
  }
  try {
    load_idx_dataset((dir / "imgs.idx").string(), (dir / "lbls.idx").string(), 10);
    expect(false, fail, "image/label count mismatch accepted");
  } catch (const Error& e) {
    seen.push_back(e.code());
  }

  expect(seen.size() == 3, fail, "a malformed input did not raise");
  expect(seen.size() == 3 && seen[0] != seen[1] && seen[0] != seen[2] && seen[1] != seen[2],
         fail, "malformed inputs share an error class");
}

// --------------------------------------------------------------- criterion 11

void criterion_reproducibility(std::string& fail) {
  ExperimentConfig cfg = load_config(preset("paper-mini.json"));
  fs::path a = testutil::fresh_dir("acc-repro-a");
  fs::path b = testutil::fresh_dir("acc-repro-b");
  run_experiment(cfg, a.string());
  run_experiment(cfg, b.string());

  expect(testutil::read_file((a / "report.json").string()) ==
             testutil::read_file((b / "report.json").string()),
         fail, "report.json differs between identical runs");
  expect(testutil::read_file((a / "training_curves.svg").string()) ==
             testutil::read_file((b / "training_curves.svg").string()),
         fail, "training_curves.svg differs between identical runs");
  expect(testutil::read_file((a / "report.csv").string()) ==
             testutil::read_file((b / "report.csv").string()),
         fail, "report.csv differs between identical runs");
}

}  // namespace

int main() {
  std::vector<Criterion> criteria = {
      {1, "finite-difference gradients across every op and loss family",
       criterion_gradients},
      {2, "independent metric oracle agrees to 1e-12 on 1000 random prediction sets",
       criterion_metric_oracle},
      {3, "simplex and measure-range invariants over 10000 fuzzed evaluations",
       criterion_fuzzed_invariants},
      {4, "single-head training is bitwise identical across strategies",
       criterion_degenerate_equivalence},
      {5, "head-count sweep: 4-head mean accuracy within 0.01 of single-head",
       criterion_heads_sweep},
      {6, "avg-entropy separates incorrect from correct for ours, de and mc_dropout",
       criterion_uncertainty_separation},
      {7, "five-strategy comparison table matches the contracted schema",
       criterion_comparison_table},
      {8, "mc-dropout rows spread at p=0.5 and collapse exactly at p=0",
       criterion_mc_dropout_spread},
      {9, "weight averaging: bit-exact idempotence, small accuracy cost when converged",
       criterion_weight_averaging},
      {10, "idx and cifar round trips are byte-exact; malformed inputs raise distinct errors",
       criterion_data_roundtrip},
      {11, "identical configs reproduce byte-identical reports and charts",
       criterion_reproducibility},
  };

  int failures = 0;
  for (const auto& crit : criteria) {
    double start = now_seconds();
    std::string fail_note;
    try {
      crit.body(fail_note);
    } catch (const Error& e) {
      fail_note = std::string("unexpected error: ") + e.what();
    } catch (const std::exception& e) {
      fail_note = std::string("unexpected exception: ") + e.what();
    }
    double elapsed = now_seconds() - start;
    if (fail_note.empty()) {
      std::printf("PASS criterion %2d: %s (%.1fs)\n", crit.number, crit.label.c_str(),
                  elapsed);
    } else {
      ++failures;
      std::printf("FAIL criterion %2d: %s (%.1fs)\n    %s\n", crit.number,
                  crit.label.c_str(), elapsed, fail_note.c_str());
    }
    std::fflush(stdout);
  }

  if (failures == 0) {
    std::printf("all %zu criteria passed (%.1fs total)\n", criteria.size(), now_seconds());
    return 0;
  }
  std::printf("%d of %zu criteria failed\n", failures, criteria.size());
  return 1;
}
