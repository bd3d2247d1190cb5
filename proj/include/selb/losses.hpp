#pragma once

#include <string>
#include <vector>

#include "selb/tensor.hpp"

namespace selb {

// Training objectives. Each loss owns the mapping from raw head outputs to
// a probability vector (head_probs), so ensemble averaging always consumes
// proper distributions regardless of which loss trained the head.
enum class LossKind {
  softmax_ce,       // "softmax"
  relaxed_softmax,  // "relaxed_softmax"  (head emits C logits + 1 scale unit)
  evidential,       // "evidential"
  ldmi,             // "ldmi"
  mse,              // "mse"
  mae,              // "mae"
};

LossKind parse_loss_name(const std::string& name);
const std::string& loss_name(LossKind kind);

struct LossSpec {
  LossKind kind = LossKind::softmax_ce;
  // evidential: epochs over which the KL regularizer ramps linearly 0 -> 1.
  double evidential_anneal_epochs = 10.0;
  // ldmi: |det| values at or below this floor are clamped (flagged, not fatal).
  double ldmi_det_floor = 1e-8;
};

// Raw head width for a loss: C normally, C + 1 for relaxed_softmax (the
// extra unit parameterizes the learned temperature).
std::size_t head_output_width(LossKind kind, std::size_t num_classes);

// Batch of integer labels plus the class count; one_hot() materializes the
// constant N x C indicator tensor.
struct BatchLabels {
  std::vector<std::size_t> labels;
  std::size_t num_classes = 0;

  Tensor one_hot() const;
};

struct LossFlags {
  bool ldmi_det_floored = false;
};

// Probability mapping for raw head outputs (N x width -> N x C):
//   softmax_ce / mse / mae / ldmi : softmax(raw)
//   relaxed_softmax               : softmax(alpha * z), alpha = softplus(extra) + 1e-6
//   evidential                    : alpha_i / S, alpha = softplus(raw) + 1, S = sum(alpha)
Tensor head_probs(const LossSpec& spec, const Tensor& raw, std::size_t num_classes);

// Scalar training loss for a batch of raw head outputs. `epoch` feeds the
// evidential KL annealing schedule; other losses ignore it.
Tensor loss_value(const LossSpec& spec, const Tensor& raw, const BatchLabels& labels,
                  double epoch, LossFlags* flags = nullptr);

// Per-sample evidential uncertainty C / S (1 when all evidence is zero,
// approaching 0 as total evidence grows). raw: N x C.
std::vector<double> evidential_uncertainty(const Tensor& raw);

}  // namespace selb
