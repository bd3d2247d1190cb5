#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "selb/model.hpp"

namespace selb {

// How the predicted-class spread across heads is aggregated: population
// variance (divide by M, default — comparable across different M) or the raw
// sum of squared deviations.
enum class Eq4Mode { population, raw_sum };

Eq4Mode parse_eq4_mode(const std::string& name);
std::string eq4_mode_name(Eq4Mode mode);

// The three per-sample uncertainty values. mean_entropy / class_variance are
// absent (reported NA) for single-vector predictors like a weight-averaged
// model, where per-head spread is undefined.
struct UncertaintyTriple {
  double avg_entropy = 0.0;
  std::optional<double> mean_entropy;
  std::optional<double> class_variance;
};

// Entropy of the averaged vector, normalized by log C and negated so the
// value lives in [0,1] with higher = more uncertain. 0*log 0 := 0.
double entropy_of_average(const PredictionSet& ps);

// Mean over heads of each head's own normalized entropy; same range/sign
// convention as entropy_of_average, and equal to it when M=1.
double mean_entropy(const PredictionSet& ps);

// Spread of the predicted class's probability across heads, where the
// predicted class is the argmax of the averaged vector (first index on ties).
double class_variance(const PredictionSet& ps, Eq4Mode mode);

std::size_t predicted_class(const PredictionSet& ps);

// Mean squared gap between the probability vector and the one-hot target,
// scaled by 1/C.
double brier_score(const std::vector<double>& probs, std::size_t true_class);

// Binned calibration gap: equal-width right-closed bins on (0,1],
// sum_b (n_b/N)|acc_b - conf_b|.
double expected_calibration_error(const std::vector<double>& confidences,
                                  const std::vector<bool>& correct, std::size_t bins);

struct SampleRecord {
  std::size_t predicted = 0;
  std::size_t label = 0;
  double confidence = 0.0;
  UncertaintyTriple u;
};

// Mean of one uncertainty measure over correct and incorrect predictions
// separately; a side is absent when its set is empty or the measure is NA.
struct SeparationRow {
  std::optional<double> mean_true;
  std::optional<double> mean_false;
};

struct Separation {
  SeparationRow avg_entropy;
  SeparationRow mean_entropy;
  SeparationRow class_variance;
};

struct EvaluationReport {
  std::size_t n_samples = 0;
  double accuracy = 0.0;
  double ece = 0.0;
  double brier = 0.0;
  Separation separation;
  std::vector<SampleRecord> samples;
};

// Scores a prediction per test point and aggregates dataset metrics.
// ensemble_measures=false marks the per-head measures NA (single-vector
// predictors).
EvaluationReport evaluate_predictions(const std::vector<PredictionSet>& preds,
                                      const std::vector<std::size_t>& labels,
                                      std::size_t ece_bins, Eq4Mode eq4_mode,
                                      bool ensemble_measures);

// Comparison-table schema (one row per method).
extern const char* const kComparisonCsvHeader;

// Shortest round-trip decimal form of v ("NA" helpers for the optionals).
std::string format_double(double v);
std::string csv_cell(const std::optional<double>& v);
std::string report_csv_row(const std::string& method, const EvaluationReport& report);

}  // namespace selb
