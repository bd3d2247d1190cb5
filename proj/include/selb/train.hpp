#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "selb/data.hpp"
#include "selb/model.hpp"

namespace selb {

// The five training/inference regimes under comparison.
enum class Strategy { ours, dse, de, mc_dropout, swa };

Strategy parse_strategy(const std::string& name);
const std::string& strategy_name(Strategy s);

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  std::string optimizer = "adam";  // "sgd" | "adam"
  std::uint64_t seed = 0;
  // Ensemble width: de members / mc-dropout forward passes. For ours/dse the
  // head count comes from ModelSpec::losses.
  std::size_t num_heads = 1;
  std::size_t swa_snapshot_epochs = 4;
  std::size_t dse_head_epochs = 10;
  // Keep the epoch checkpoint with the best test accuracy (restored at the
  // end of each training phase). Disable for trajectory comparisons.
  bool select_best = true;
};

// One JSONL log record: per epoch, per head (for deep ensembles, `head` is
// the member index). Accuracy columns are the head's own, not the ensemble's.
struct EpochRecord {
  std::uint64_t epoch = 0;
  std::size_t head = 0;
  double loss = 0.0;
  double train_acc = 0.0;
  double test_acc = 0.0;
};

struct TrainedPredictor {
  Strategy strategy = Strategy::ours;
  std::vector<MultiHeadModel> models;  // one entry, except deep ensembles
  std::size_t mc_passes = 0;           // mc_dropout only
  std::uint64_t seed = 0;
  std::vector<EpochRecord> log;
  // Batches in which a determinant hit its floor (diagnostic counter).
  std::size_t ldmi_floor_events = 0;

  // Rows each PredictionSet will carry at inference time.
  std::size_t prediction_rows() const;
};

// One parameter snapshot: flat data per parameter, in all_params() order.
using ParamSnapshot = std::vector<std::vector<double>>;

ParamSnapshot snapshot_params(const MultiHeadModel& model);
void restore_params(MultiHeadModel& model, const ParamSnapshot& snap);

// Overwrites the model with the arithmetic mean of the snapshots. Computed
// in delta form (first + mean of differences) so averaging k identical
// snapshots reproduces them bit-exactly.
void swa_average(MultiHeadModel& model, const std::vector<ParamSnapshot>& snapshots);

// All heads trained jointly in one phase; the step loss is the unweighted sum
// of each head's own loss.
TrainedPredictor train_multiloss(const ModelSpec& spec, const Dataset& train_data,
                                 const Dataset& test_data, const TrainConfig& cfg);

// Sequential variant: phase 0 trains trunk + head 0 for cfg.epochs, then each
// later head trains alone for cfg.dse_head_epochs with the trunk frozen.
// Requires every head to use the same loss kind.
TrainedPredictor train_dse(const ModelSpec& spec, const Dataset& train_data,
                           const Dataset& test_data, const TrainConfig& cfg);

// cfg.num_heads independent single-head models, member i seeded with seed+i
// (its own init, shuffle order and dropout stream).
TrainedPredictor train_deep_ensembles(const ModelSpec& spec, const Dataset& train_data,
                                      const Dataset& test_data, const TrainConfig& cfg);

// Plain single-model training; inference runs cfg.num_heads stochastic
// dropout passes.
TrainedPredictor train_mc_dropout(const ModelSpec& spec, const Dataset& train_data,
                                  const Dataset& test_data, const TrainConfig& cfg);

// Plain single-model training; the last swa_snapshot_epochs epoch-boundary
// snapshots are weight-averaged into the final model (no best-epoch
// selection; prediction carries a single row).
TrainedPredictor train_swa(const ModelSpec& spec, const Dataset& train_data,
                           const Dataset& test_data, const TrainConfig& cfg);

// M stochastic forward passes through a single-head model with dropout layers
// active; pass i forms row i. Errors if the model has no dropout layer.
std::vector<PredictionSet> mc_dropout_predict_batch(const MultiHeadModel& model,
                                                    const Tensor& x, std::size_t passes,
                                                    Rng& rng);
PredictionSet mc_dropout_predict(const MultiHeadModel& model, const Tensor& x,
                                 std::size_t passes, Rng& rng);

// Strategy-dispatched inference over a batch tensor (leading axis = samples).
// Deterministic: mc-dropout passes draw from a stream derived from the
// training seed, so repeated calls agree.
std::vector<PredictionSet> predict_all(const TrainedPredictor& predictor, const Tensor& x);

// Convenience: predictions for every sample of a dataset, in chunks.
std::vector<PredictionSet> predict_dataset(const TrainedPredictor& predictor,
                                           const Dataset& ds);

}  // namespace selb
