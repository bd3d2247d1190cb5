#include "selb/train.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <span>

#include "selb/error.hpp"
#include "selb/ops.hpp"
#include "selb/optim.hpp"

namespace selb {

namespace {

const std::string kStrategyNames[] = {"ours", "dse", "de", "mc_dropout", "swa"};

class Optimizer {
 public:
  Optimizer(const std::string& kind, double lr) {
    if (kind == "sgd") {
      sgd_.emplace(lr);
    } else if (kind == "adam") {
      adam_.emplace(lr);
    } else {
      fail(ErrorCode::config, "unknown optimizer \"" + kind + "\" (sgd, adam)");
    }
  }
  void step(std::vector<Tensor>& params) {
    if (sgd_) {
      sgd_->step(params);
    } else {
      adam_->step(params);
    }
  }

 private:
  std::optional<Sgd> sgd_;
  std::optional<Adam> adam_;
};

void validate_train_cfg(const TrainConfig& cfg) {
  if (!(cfg.learning_rate > 0.0)) fail(ErrorCode::config, "learning_rate must be positive");
  if (cfg.epochs == 0) fail(ErrorCode::config, "epochs must be at least 1");
  if (cfg.batch_size == 0) fail(ErrorCode::config, "batch_size must be at least 1");
  if (cfg.num_heads == 0) fail(ErrorCode::config, "num_heads must be at least 1");
}

std::size_t argmax_span(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

struct SubsetAccuracy {
  std::vector<double> per_head;
  double ensemble = 0.0;
};

// Accuracy of each listed head on its own, plus of their averaged prediction,
// evaluated in chunks to bound peak graph size.
SubsetAccuracy subset_accuracy(const MultiHeadModel& model,
                               const std::vector<std::size_t>& heads, const Dataset& ds) {
  constexpr std::size_t kChunk = 512;
  std::vector<std::size_t> head_correct(heads.size(), 0);
  std::size_t ens_correct = 0;
  for (std::size_t at = 0; at < ds.size(); at += kChunk) {
    std::size_t end = std::min(ds.size(), at + kChunk);
    std::vector<std::size_t> idx(end - at);
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = at + i;
    Tensor x = ds.batch_x(idx);
    auto preds = predict_batch_subset(model, x, heads, Mode::eval, nullptr);
    for (std::size_t i = 0; i < preds.size(); ++i) {
      std::size_t label = ds.labels[at + i];
      const PredictionSet& ps = preds[i];
      if (argmax_span({ps.averaged.data(), ps.num_classes}) == label) ++ens_correct;
      for (std::size_t k = 0; k < heads.size(); ++k) {
        if (argmax_span(ps.row(k)) == label) ++head_correct[k];
      }
    }
  }
  SubsetAccuracy out;
  double n = static_cast<double>(ds.size());
  out.ensemble = static_cast<double>(ens_correct) / n;
  out.per_head.resize(heads.size());
  for (std::size_t k = 0; k < heads.size(); ++k) {
    out.per_head[k] = static_cast<double>(head_correct[k]) / n;
  }
  return out;
}

struct PhaseSpec {
  std::size_t epochs = 0;
  std::uint64_t epoch_offset = 0;
  std::vector<std::size_t> heads;
  bool train_trunk = true;
};

using EpochHook = std::function<void(std::uint64_t, MultiHeadModel&)>;

// Shared by every strategy so the degenerate cases (single head, single
// member) run literally the same arithmetic: one optimizer over the phase's
// trainable parameters, per-epoch shuffles keyed by (seed, global epoch), one
// backward over the summed head losses per batch.
void run_phase(MultiHeadModel& model, const Dataset& train_data, const Dataset& test_data,
               const TrainConfig& cfg, const PhaseSpec& phase, Rng& dropout_rng,
               std::vector<EpochRecord>& log, std::size_t& ldmi_floor_events,
               const EpochHook& on_epoch_end) {
  model.trunk.set_requires_grad(phase.train_trunk);
  std::vector<Tensor> params;
  if (phase.train_trunk) params = model.trunk.params();
  for (std::size_t h : phase.heads) {
    auto hp = model.heads[h].params();
    params.insert(params.end(), hp.begin(), hp.end());
  }

  Optimizer opt(cfg.optimizer, cfg.learning_rate);
  BatchIterator batches(train_data.size(), cfg.batch_size, cfg.seed);
  std::size_t C = model.spec.num_classes;

  double best_acc = -1.0;
  ParamSnapshot best;

  for (std::size_t local_e = 0; local_e < phase.epochs; ++local_e) {
    std::uint64_t global_e = phase.epoch_offset + local_e;
    std::vector<double> loss_sum(phase.heads.size(), 0.0);
    std::size_t batch_count = 0;

    for (const auto& idx : batches.epoch_batches(global_e)) {
      zero_grad(params);
      Tensor x = train_data.batch_x(idx);
      BatchLabels labels{train_data.batch_labels(idx), C};
      Tensor trunk_out =
          model.trunk.layers.empty() ? x : model.trunk.forward(x, Mode::train, &dropout_rng);
      Tensor total;
      for (std::size_t k = 0; k < phase.heads.size(); ++k) {
        std::size_t h = phase.heads[k];
        Tensor raw = model.heads[h].forward(trunk_out, Mode::train, &dropout_rng);
        LossFlags flags;
        Tensor lv = loss_value(model.spec.losses[h], raw, labels,
                               static_cast<double>(local_e), &flags);
        if (flags.ldmi_det_floored) ++ldmi_floor_events;
        loss_sum[k] += lv.item();
        total = k == 0 ? lv : add(total, lv);
      }
      backward(total);
      opt.step(params);
      ++batch_count;
    }

    SubsetAccuracy train_acc = subset_accuracy(model, phase.heads, train_data);
    SubsetAccuracy test_acc = subset_accuracy(model, phase.heads, test_data);
    for (std::size_t k = 0; k < phase.heads.size(); ++k) {
      log.push_back({global_e, phase.heads[k],
                     loss_sum[k] / static_cast<double>(batch_count), train_acc.per_head[k],
                     test_acc.per_head[k]});
    }
    if (on_epoch_end) on_epoch_end(global_e, model);
    if (cfg.select_best && test_acc.ensemble > best_acc) {
      best_acc = test_acc.ensemble;
      best = snapshot_params(model);
    }
  }

  if (cfg.select_best && !best.empty()) restore_params(model, best);
}

std::vector<std::size_t> all_head_indices(const MultiHeadModel& model) {
  std::vector<std::size_t> heads(model.heads.size());
  for (std::size_t i = 0; i < heads.size(); ++i) heads[i] = i;
  return heads;
}

void require_single_loss(const ModelSpec& spec, const char* strategy) {
  if (spec.losses.size() != 1) {
    fail(ErrorCode::config, std::string(strategy) +
                                " trains single-head models; configure exactly one loss, got " +
                                std::to_string(spec.losses.size()));
  }
}

}  // namespace

Strategy parse_strategy(const std::string& name) {
  for (std::size_t i = 0; i < 5; ++i) {
    if (name == kStrategyNames[i]) return static_cast<Strategy>(i);
  }
  fail(ErrorCode::config,
       "unknown strategy \"" + name + "\" (ours, dse, de, mc_dropout, swa)");
}

const std::string& strategy_name(Strategy s) { return kStrategyNames[static_cast<int>(s)]; }

std::size_t TrainedPredictor::prediction_rows() const {
  switch (strategy) {
    case Strategy::ours:
    case Strategy::dse:
      return models.at(0).heads.size();
    case Strategy::de:
      return models.size();
    case Strategy::mc_dropout:
      return mc_passes;
    case Strategy::swa:
      return 1;
  }
  return 0;
}

ParamSnapshot snapshot_params(const MultiHeadModel& model) {
  ParamSnapshot snap;
  for (const Tensor& t : model.all_params()) snap.push_back(t.data());
  return snap;
}

void restore_params(MultiHeadModel& model, const ParamSnapshot& snap) {
  auto params = model.all_params();
  if (snap.size() != params.size()) {
    fail(ErrorCode::count_mismatch, "restore_params: snapshot has " +
                                        std::to_string(snap.size()) + " tensors, model has " +
                                        std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (snap[i].size() != params[i].size()) {
      fail(ErrorCode::shape_mismatch, "restore_params: tensor " + std::to_string(i) +
                                          " size mismatch");
    }
    params[i].mutable_data() = snap[i];
  }
}

void swa_average(MultiHeadModel& model, const std::vector<ParamSnapshot>& snapshots) {
  if (snapshots.empty()) fail(ErrorCode::bad_value, "swa_average: no snapshots");
  auto params = model.all_params();
  for (const auto& s : snapshots) {
    if (s.size() != params.size()) {
      fail(ErrorCode::shape_mismatch, "swa_average: snapshot has " + std::to_string(s.size()) +
                                          " tensors, model has " +
                                          std::to_string(params.size()));
    }
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i].size() != params[i].size()) {
        fail(ErrorCode::shape_mismatch,
             "swa_average: tensor " + std::to_string(i) + " size mismatch across snapshots");
      }
    }
  }

  // Delta form: base + mean(snapshot - base). Identical snapshots have all
  // deltas exactly zero, so averaging them is bit-exact.
  double k = static_cast<double>(snapshots.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::vector<double>& base = snapshots[0][i];
    std::vector<double>& out = params[i].mutable_data();
    for (std::size_t j = 0; j < base.size(); ++j) {
      double delta = 0.0;
      for (std::size_t s = 1; s < snapshots.size(); ++s) delta += snapshots[s][i][j] - base[j];
      out[j] = base[j] + delta / k;
    }
  }
}

TrainedPredictor train_multiloss(const ModelSpec& spec, const Dataset& train_data,
                                 const Dataset& test_data, const TrainConfig& cfg) {
  validate_train_cfg(cfg);
  MultiHeadModel model = build_model(spec, cfg.seed);
  Rng dropout_rng(mix_seed(cfg.seed, "dropout"));

  TrainedPredictor p;
  p.strategy = Strategy::ours;
  p.seed = cfg.seed;
  PhaseSpec phase{cfg.epochs, 0, all_head_indices(model), true};
  run_phase(model, train_data, test_data, cfg, phase, dropout_rng, p.log,
            p.ldmi_floor_events, {});
  model.trunk.set_requires_grad(true);
  p.models.push_back(std::move(model));
  return p;
}

TrainedPredictor train_dse(const ModelSpec& spec, const Dataset& train_data,
                           const Dataset& test_data, const TrainConfig& cfg) {
  validate_train_cfg(cfg);
  for (const auto& l : spec.losses) {
    if (l.kind != spec.losses[0].kind) {
      fail(ErrorCode::config, "dse requires one shared loss kind across heads, got " +
                                  loss_name(spec.losses[0].kind) + " and " + loss_name(l.kind));
    }
  }
  if (spec.losses.size() > 1 && cfg.dse_head_epochs == 0) {
    fail(ErrorCode::config, "dse_head_epochs must be at least 1 when training extra heads");
  }

  MultiHeadModel model = build_model(spec, cfg.seed);
  Rng dropout_rng(mix_seed(cfg.seed, "dropout"));

  TrainedPredictor p;
  p.strategy = Strategy::dse;
  p.seed = cfg.seed;

  PhaseSpec joint{cfg.epochs, 0, {0}, true};
  run_phase(model, train_data, test_data, cfg, joint, dropout_rng, p.log,
            p.ldmi_floor_events, {});
  for (std::size_t h = 1; h < model.heads.size(); ++h) {
    PhaseSpec head_phase{cfg.dse_head_epochs,
                         cfg.epochs + (h - 1) * cfg.dse_head_epochs,
                         {h},
                         false};
    run_phase(model, train_data, test_data, cfg, head_phase, dropout_rng, p.log,
              p.ldmi_floor_events, {});
  }
  model.trunk.set_requires_grad(true);
  p.models.push_back(std::move(model));
  return p;
}

TrainedPredictor train_deep_ensembles(const ModelSpec& spec, const Dataset& train_data,
                                      const Dataset& test_data, const TrainConfig& cfg) {
  validate_train_cfg(cfg);
  require_single_loss(spec, "deep ensembles");

  TrainedPredictor p;
  p.strategy = Strategy::de;
  p.seed = cfg.seed;
  for (std::size_t i = 0; i < cfg.num_heads; ++i) {
    TrainConfig member_cfg = cfg;
    member_cfg.seed = cfg.seed + i;
    MultiHeadModel model = build_model(spec, member_cfg.seed);
    Rng dropout_rng(mix_seed(member_cfg.seed, "dropout"));
    std::vector<EpochRecord> member_log;
    PhaseSpec phase{cfg.epochs, 0, {0}, true};
    run_phase(model, train_data, test_data, member_cfg, phase, dropout_rng, member_log,
              p.ldmi_floor_events, {});
    for (EpochRecord r : member_log) {
      r.head = i;
      p.log.push_back(r);
    }
    model.trunk.set_requires_grad(true);
    p.models.push_back(std::move(model));
  }
  return p;
}

TrainedPredictor train_mc_dropout(const ModelSpec& spec, const Dataset& train_data,
                                  const Dataset& test_data, const TrainConfig& cfg) {
  validate_train_cfg(cfg);
  require_single_loss(spec, "mc-dropout");

  MultiHeadModel model = build_model(spec, cfg.seed);
  Rng dropout_rng(mix_seed(cfg.seed, "dropout"));

  TrainedPredictor p;
  p.strategy = Strategy::mc_dropout;
  p.seed = cfg.seed;
  p.mc_passes = cfg.num_heads;
  PhaseSpec phase{cfg.epochs, 0, {0}, true};
  run_phase(model, train_data, test_data, cfg, phase, dropout_rng, p.log,
            p.ldmi_floor_events, {});
  model.trunk.set_requires_grad(true);
  p.models.push_back(std::move(model));
  return p;
}

TrainedPredictor train_swa(const ModelSpec& spec, const Dataset& train_data,
                           const Dataset& test_data, const TrainConfig& cfg) {
  validate_train_cfg(cfg);
  require_single_loss(spec, "swa");
  if (cfg.swa_snapshot_epochs == 0) {
    fail(ErrorCode::config, "swa_snapshot_epochs must be at least 1");
  }
  std::size_t window = std::min(cfg.swa_snapshot_epochs, cfg.epochs);

  MultiHeadModel model = build_model(spec, cfg.seed);
  Rng dropout_rng(mix_seed(cfg.seed, "dropout"));

  TrainedPredictor p;
  p.strategy = Strategy::swa;
  p.seed = cfg.seed;

  // Weight averaging replaces best-epoch selection for this strategy.
  TrainConfig run_cfg = cfg;
  run_cfg.select_best = false;

  std::vector<ParamSnapshot> snapshots;
  PhaseSpec phase{cfg.epochs, 0, {0}, true};
  run_phase(model, train_data, test_data, run_cfg, phase, dropout_rng, p.log,
            p.ldmi_floor_events, [&](std::uint64_t epoch, MultiHeadModel& m) {
              if (epoch + window >= cfg.epochs) snapshots.push_back(snapshot_params(m));
            });
  swa_average(model, snapshots);
  model.trunk.set_requires_grad(true);
  p.models.push_back(std::move(model));
  return p;
}

std::vector<PredictionSet> mc_dropout_predict_batch(const MultiHeadModel& model,
                                                    const Tensor& x, std::size_t passes,
                                                    Rng& rng) {
  if (model.heads.size() != 1) {
    fail(ErrorCode::bad_value, "mc-dropout inference expects a single-head model, got " +
                                   std::to_string(model.heads.size()) + " heads");
  }
  if (passes == 0) fail(ErrorCode::bad_value, "mc-dropout: need at least one pass");
  bool has = model.trunk.has_dropout();
  for (const auto& h : model.heads) has = has || h.has_dropout();
  if (!has) {
    fail(ErrorCode::bad_value,
         "mc-dropout on a model with no dropout layer (passes would be identical)");
  }

  std::size_t n = x.shape()[0];
  std::size_t C = model.spec.num_classes;
  std::vector<std::vector<double>> pass_probs(passes);
  for (std::size_t pass = 0; pass < passes; ++pass) {
    auto preds = predict_batch(model, x, Mode::mc_dropout, &rng);
    pass_probs[pass].resize(n * C);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < C; ++c) pass_probs[pass][i * C + c] = preds[i].per_head[c];
    }
  }

  std::vector<PredictionSet> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> rows(passes * C);
    for (std::size_t pass = 0; pass < passes; ++pass) {
      for (std::size_t c = 0; c < C; ++c) rows[pass * C + c] = pass_probs[pass][i * C + c];
    }
    out.push_back(make_prediction_set(passes, C, std::move(rows)));
  }
  return out;
}

PredictionSet mc_dropout_predict(const MultiHeadModel& model, const Tensor& x,
                                 std::size_t passes, Rng& rng) {
  if (x.shape() != model.spec.input_shape) {
    fail(ErrorCode::shape_mismatch, "mc-dropout predict: input " + shape_str(x.shape()) +
                                        " does not match model input " +
                                        shape_str(model.spec.input_shape));
  }
  Shape batched = model.spec.input_shape;
  batched.insert(batched.begin(), 1);
  Tensor xb = Tensor::from_data(batched, x.data());
  return mc_dropout_predict_batch(model, xb, passes, rng)[0];
}

std::vector<PredictionSet> predict_all(const TrainedPredictor& predictor, const Tensor& x) {
  switch (predictor.strategy) {
    case Strategy::ours:
    case Strategy::dse:
    case Strategy::swa:
      return predict_batch(predictor.models.at(0), x, Mode::eval);
    case Strategy::mc_dropout: {
      Rng rng(mix_seed(predictor.seed, "mc-eval"));
      return mc_dropout_predict_batch(predictor.models.at(0), x, predictor.mc_passes, rng);
    }
    case Strategy::de: {
      std::size_t M = predictor.models.size();
      std::size_t n = x.shape()[0];
      std::size_t C = predictor.models.at(0).spec.num_classes;
      std::vector<std::vector<double>> rows(n, std::vector<double>(M * C));
      for (std::size_t m = 0; m < M; ++m) {
        const MultiHeadModel& member = predictor.models[m];
        if (member.heads.size() != 1) {
          fail(ErrorCode::bad_value, "deep-ensemble member " + std::to_string(m) +
                                         " should have one head, has " +
                                         std::to_string(member.heads.size()));
        }
        auto preds = predict_batch(member, x, Mode::eval);
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t c = 0; c < C; ++c) rows[i][m * C + c] = preds[i].per_head[c];
        }
      }
      std::vector<PredictionSet> out;
      out.reserve(n);
      for (std::size_t i = 0; i < n; ++i) {
        out.push_back(make_prediction_set(M, C, std::move(rows[i])));
      }
      return out;
    }
  }
  fail(ErrorCode::bad_value, "predict_all: unknown strategy");
}

std::vector<PredictionSet> predict_dataset(const TrainedPredictor& predictor,
                                           const Dataset& ds) {
  constexpr std::size_t kChunk = 512;
  std::vector<PredictionSet> out;
  out.reserve(ds.size());
  for (std::size_t at = 0; at < ds.size(); at += kChunk) {
    std::size_t end = std::min(ds.size(), at + kChunk);
    std::vector<std::size_t> idx(end - at);
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = at + i;
    auto chunk = predict_all(predictor, ds.batch_x(idx));
    out.insert(out.end(), std::make_move_iterator(chunk.begin()),
               std::make_move_iterator(chunk.end()));
  }
  return out;
}

}  // namespace selb
