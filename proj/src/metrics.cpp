#include "selb/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

#include "selb/error.hpp"

namespace selb {

namespace {

// Shannon entropy over log C, clamped against rounding so the value is a
// valid [0,1] uncertainty.
double normalized_entropy(const double* p, std::size_t C) {
  double h = 0.0;
  for (std::size_t c = 0; c < C; ++c) {
    if (p[c] > 0.0) h -= p[c] * std::log(p[c]);
  }
  return std::clamp(h / std::log(static_cast<double>(C)), 0.0, 1.0);
}

void check_pred(const PredictionSet& ps, const char* who) {
  if (ps.num_heads == 0 || ps.num_classes < 2) {
    fail(ErrorCode::bad_value, std::string(who) + ": need M >= 1 and C >= 2, got M=" +
                                   std::to_string(ps.num_heads) + " C=" +
                                   std::to_string(ps.num_classes));
  }
}

}  // namespace

Eq4Mode parse_eq4_mode(const std::string& name) {
  if (name == "population") return Eq4Mode::population;
  if (name == "raw_sum") return Eq4Mode::raw_sum;
  fail(ErrorCode::config, "unknown eq4 mode \"" + name + "\" (population, raw_sum)");
}

std::string eq4_mode_name(Eq4Mode mode) {
  return mode == Eq4Mode::population ? "population" : "raw_sum";
}

double entropy_of_average(const PredictionSet& ps) {
  check_pred(ps, "entropy_of_average");
  return normalized_entropy(ps.averaged.data(), ps.num_classes);
}

double mean_entropy(const PredictionSet& ps) {
  check_pred(ps, "mean_entropy");
  double total = 0.0;
  for (std::size_t h = 0; h < ps.num_heads; ++h) {
    total += normalized_entropy(ps.per_head.data() + h * ps.num_classes, ps.num_classes);
  }
  return total / static_cast<double>(ps.num_heads);
}

std::size_t predicted_class(const PredictionSet& ps) {
  check_pred(ps, "predicted_class");
  return static_cast<std::size_t>(
      std::max_element(ps.averaged.begin(), ps.averaged.end()) - ps.averaged.begin());
}

double class_variance(const PredictionSet& ps, Eq4Mode mode) {
  std::size_t j = predicted_class(ps);
  // Delta-form mean (anchored at row 0) so identical rows — e.g. mc-dropout
  // with p = 0 — give a variance of exactly zero.
  double anchor = ps.per_head[j];
  double shift = 0.0;
  for (std::size_t h = 0; h < ps.num_heads; ++h)
    shift += ps.per_head[h * ps.num_classes + j] - anchor;
  double mu = anchor + shift / static_cast<double>(ps.num_heads);
  double ss = 0.0;
  for (std::size_t h = 0; h < ps.num_heads; ++h) {
    double d = ps.per_head[h * ps.num_classes + j] - mu;
    ss += d * d;
  }
  return mode == Eq4Mode::population ? ss / static_cast<double>(ps.num_heads) : ss;
}

double brier_score(const std::vector<double>& probs, std::size_t true_class) {
  if (probs.empty()) fail(ErrorCode::bad_value, "brier: empty probability vector");
  if (true_class >= probs.size()) {
    fail(ErrorCode::bad_value, "brier: class " + std::to_string(true_class) +
                                   " out of range for C=" + std::to_string(probs.size()));
  }
  double total = 0.0;
  for (std::size_t c = 0; c < probs.size(); ++c) {
    double t = c == true_class ? 1.0 : 0.0;
    double d = t - probs[c];
    total += d * d;
  }
  return total / static_cast<double>(probs.size());
}

double expected_calibration_error(const std::vector<double>& confidences,
                                  const std::vector<bool>& correct, std::size_t bins) {
  if (confidences.empty()) fail(ErrorCode::bad_value, "ece: empty input");
  if (confidences.size() != correct.size()) {
    fail(ErrorCode::count_mismatch, "ece: " + std::to_string(confidences.size()) +
                                        " confidences vs " + std::to_string(correct.size()) +
                                        " outcomes");
  }
  if (bins == 0) fail(ErrorCode::bad_value, "ece: need at least one bin");

  std::vector<std::size_t> count(bins, 0);
  std::vector<double> conf_sum(bins, 0.0);
  std::vector<double> acc_sum(bins, 0.0);
  for (std::size_t i = 0; i < confidences.size(); ++i) {
    double c = confidences[i];
    if (!(c >= 0.0 && c <= 1.0)) {
      fail(ErrorCode::bad_value, "ece: confidence " + format_double(c) + " outside [0,1]");
    }
    // Right-closed interval membership; scan with the (k+1)/bins boundary
    // form so values exactly on a boundary land in the lower bin.
    std::size_t b = bins - 1;
    for (std::size_t k = 0; k < bins; ++k) {
      if (c <= static_cast<double>(k + 1) / static_cast<double>(bins)) {
        b = k;
        break;
      }
    }
    count[b] += 1;
    conf_sum[b] += c;
    acc_sum[b] += correct[i] ? 1.0 : 0.0;
  }

  double n = static_cast<double>(confidences.size());
  double ece = 0.0;
  for (std::size_t b = 0; b < bins; ++b) {
    if (count[b] == 0) continue;
    double nb = static_cast<double>(count[b]);
    ece += (nb / n) * std::abs(acc_sum[b] / nb - conf_sum[b] / nb);
  }
  return ece;
}

EvaluationReport evaluate_predictions(const std::vector<PredictionSet>& preds,
                                      const std::vector<std::size_t>& labels,
                                      std::size_t ece_bins, Eq4Mode eq4_mode,
                                      bool ensemble_measures) {
  if (preds.empty()) fail(ErrorCode::bad_value, "evaluate: no predictions");
  if (preds.size() != labels.size()) {
    fail(ErrorCode::count_mismatch, "evaluate: " + std::to_string(preds.size()) +
                                        " predictions vs " + std::to_string(labels.size()) +
                                        " labels");
  }

  EvaluationReport report;
  report.n_samples = preds.size();
  report.samples.reserve(preds.size());

  std::vector<double> confidences(preds.size());
  std::vector<bool> correct(preds.size());
  double brier_total = 0.0;
  std::size_t n_correct = 0;

  for (std::size_t i = 0; i < preds.size(); ++i) {
    const PredictionSet& ps = preds[i];
    if (labels[i] >= ps.num_classes) {
      fail(ErrorCode::bad_value, "evaluate: label " + std::to_string(labels[i]) +
                                     " out of range at sample " + std::to_string(i));
    }
    SampleRecord rec;
    rec.predicted = predicted_class(ps);
    rec.label = labels[i];
    rec.confidence = ps.averaged[rec.predicted];
    rec.u.avg_entropy = entropy_of_average(ps);
    if (ensemble_measures) {
      rec.u.mean_entropy = mean_entropy(ps);
      rec.u.class_variance = class_variance(ps, eq4_mode);
    }
    confidences[i] = rec.confidence;
    correct[i] = rec.predicted == rec.label;
    if (correct[i]) ++n_correct;
    brier_total += brier_score(ps.averaged, rec.label);
    report.samples.push_back(rec);
  }

  report.accuracy = static_cast<double>(n_correct) / static_cast<double>(preds.size());
  report.brier = brier_total / static_cast<double>(preds.size());
  report.ece = expected_calibration_error(confidences, correct, ece_bins);

  auto split_means = [&](auto measure) {
    SeparationRow row;
    double sum_t = 0.0, sum_f = 0.0;
    std::size_t n_t = 0, n_f = 0;
    for (std::size_t i = 0; i < report.samples.size(); ++i) {
      std::optional<double> u = measure(report.samples[i]);
      if (!u) return row;  // measure absent for this predictor
      if (correct[i]) { sum_t += *u; ++n_t; } else { sum_f += *u; ++n_f; }
    }
    if (n_t > 0) row.mean_true = sum_t / static_cast<double>(n_t);
    if (n_f > 0) row.mean_false = sum_f / static_cast<double>(n_f);
    return row;
  };
  report.separation.avg_entropy =
      split_means([](const SampleRecord& r) { return std::optional<double>(r.u.avg_entropy); });
  report.separation.mean_entropy = split_means([](const SampleRecord& r) { return r.u.mean_entropy; });
  report.separation.class_variance =
      split_means([](const SampleRecord& r) { return r.u.class_variance; });
  return report;
}

const char* const kComparisonCsvHeader =
    "method,accuracy,ece,brier,eq2_true,eq2_false,eq3_true,eq3_false,eq4_true,eq4_false";

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) fail(ErrorCode::bad_value, "format_double: conversion failed");
  return std::string(buf, end);
}

std::string csv_cell(const std::optional<double>& v) {
  return v ? format_double(*v) : std::string("NA");
}

std::string report_csv_row(const std::string& method, const EvaluationReport& report) {
  std::string row = method;
  row += ',';
  row += format_double(report.accuracy);
  row += ',';
  row += format_double(report.ece);
  row += ',';
  row += format_double(report.brier);
  for (const SeparationRow* sep : {&report.separation.avg_entropy, &report.separation.mean_entropy,
                                   &report.separation.class_variance}) {
    row += ',';
    row += csv_cell(sep->mean_true);
    row += ',';
    row += csv_cell(sep->mean_false);
  }
  return row;
}

}  // namespace selb
