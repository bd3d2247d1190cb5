#include "selb/losses.hpp"

#include <cmath>

#include "selb/ops.hpp"

namespace selb {

namespace {

const std::string kLossNames[] = {"softmax", "relaxed_softmax", "evidential",
                                  "ldmi",    "mse",             "mae"};

void check_raw(const Tensor& raw, const LossSpec& spec, std::size_t num_classes,
               const char* where) {
  if (raw.ndim() != 2) {
    fail(ErrorCode::shape_mismatch,
         std::string(where) + ": raw outputs must be rank 2, got " + shape_str(raw.shape()));
  }
  std::size_t want = head_output_width(spec.kind, num_classes);
  if (raw.shape()[1] != want) {
    fail(ErrorCode::shape_mismatch,
         std::string(where) + ": " + loss_name(spec.kind) + " expects width " +
             std::to_string(want) + " for " + std::to_string(num_classes) +
             " classes, got " + std::to_string(raw.shape()[1]));
  }
}

void check_labels(const Tensor& raw, const BatchLabels& labels, const char* where) {
  if (labels.labels.empty()) {
    fail(ErrorCode::bad_value, std::string(where) + ": empty batch");
  }
  if (labels.labels.size() != raw.shape()[0]) {
    fail(ErrorCode::count_mismatch,
         std::string(where) + ": " + std::to_string(labels.labels.size()) + " labels for " +
             std::to_string(raw.shape()[0]) + " rows");
  }
  for (std::size_t l : labels.labels) {
    if (l >= labels.num_classes) {
      fail(ErrorCode::bad_value, std::string(where) + ": label " + std::to_string(l) +
                                     " out of range for " + std::to_string(labels.num_classes) +
                                     " classes");
    }
  }
}

// Mean over the batch of -log p[label], from logits.
Tensor ce_from_logits(const Tensor& logits, const BatchLabels& labels) {
  Tensor logp = log_softmax(logits);
  Tensor picked = sum_axis(mul(labels.one_hot(), logp), 1, false);  // (N)
  return neg(mean(picked));
}

// alpha = softplus(extra) + 1e-6: the learned per-sample scale of the
// relaxed head; the offset keeps it strictly positive.
Tensor relaxed_scaled_logits(const Tensor& raw, std::size_t num_classes) {
  Tensor z = slice_last(raw, 0, num_classes);
  Tensor a = add(softplus(slice_last(raw, num_classes, num_classes + 1)),
                 Tensor::scalar(1e-6));
  return mul(z, a);  // (N,1) broadcasts across the class axis
}

}  // namespace

LossKind parse_loss_name(const std::string& name) {
  for (std::size_t i = 0; i < 6; ++i) {
    if (kLossNames[i] == name) return static_cast<LossKind>(i);
  }
  fail(ErrorCode::config,
       "losses: unknown loss \"" + name +
           "\" (expected softmax, relaxed_softmax, evidential, ldmi, mse, mae)");
}

const std::string& loss_name(LossKind kind) {
  return kLossNames[static_cast<std::size_t>(kind)];
}

std::size_t head_output_width(LossKind kind, std::size_t num_classes) {
  return kind == LossKind::relaxed_softmax ? num_classes + 1 : num_classes;
}

Tensor BatchLabels::one_hot() const {
  std::size_t n = labels.size();
  std::vector<double> data(n * num_classes, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] >= num_classes) {
      fail(ErrorCode::bad_value, "one_hot: label " + std::to_string(labels[i]) +
                                     " out of range for " + std::to_string(num_classes) +
                                     " classes");
    }
    data[i * num_classes + labels[i]] = 1.0;
  }
  return Tensor::from_data({n, num_classes}, std::move(data));
}

Tensor head_probs(const LossSpec& spec, const Tensor& raw, std::size_t num_classes) {
  check_raw(raw, spec, num_classes, "head_probs");
  switch (spec.kind) {
    case LossKind::softmax_ce:
    case LossKind::mse:
    case LossKind::mae:
    case LossKind::ldmi:
      return softmax(raw);
    case LossKind::relaxed_softmax:
      return softmax(relaxed_scaled_logits(raw, num_classes));
    case LossKind::evidential: {
      Tensor alpha = add(softplus(raw), Tensor::scalar(1.0));
      Tensor strength = sum_axis(alpha, 1, true);  // (N,1)
      return div(alpha, strength);
    }
  }
  fail(ErrorCode::bad_value, "head_probs: unhandled loss kind");
}

Tensor loss_value(const LossSpec& spec, const Tensor& raw, const BatchLabels& labels,
                  double epoch, LossFlags* flags) {
  check_raw(raw, spec, labels.num_classes, "loss_value");
  check_labels(raw, labels, "loss_value");
  const std::size_t C = labels.num_classes;
  const std::size_t N = labels.labels.size();

  switch (spec.kind) {
    case LossKind::softmax_ce:
      return ce_from_logits(raw, labels);

    case LossKind::relaxed_softmax:
      return ce_from_logits(relaxed_scaled_logits(raw, C), labels);

    case LossKind::evidential: {
      Tensor t = labels.one_hot();
      Tensor alpha = add(softplus(raw), Tensor::scalar(1.0));  // (N,C), >= 1
      Tensor S = sum_axis(alpha, 1, true);                     // (N,1)
      Tensor p = div(alpha, S);
      // Expected squared error under the Dirichlet: (t - p)^2 + var(p)
      Tensor variance = div(mul(alpha, sub(S, alpha)),
                            mul(mul(S, S), add(S, Tensor::scalar(1.0))));
      Tensor err = mean(sum_axis(add(square(sub(t, p)), variance), 1, false));

      double ramp = spec.evidential_anneal_epochs <= 0.0
                        ? 1.0
                        : std::min(1.0, epoch / spec.evidential_anneal_epochs);
      if (ramp <= 0.0) return err;

      // KL(Dir(alpha~) || Dir(1)) with the true-class evidence removed:
      // alpha~ = t + (1 - t) * alpha.
      Tensor alpha_t = add(t, mul(sub(Tensor::scalar(1.0), t), alpha));
      Tensor S_t = sum_axis(alpha_t, 1, true);  // (N,1)
      Tensor kl = add(sub(sub(lgamma(S_t), Tensor::scalar(std::lgamma(static_cast<double>(C)))),
                          sum_axis(lgamma(alpha_t), 1, true)),
                      sum_axis(mul(sub(alpha_t, Tensor::scalar(1.0)),
                                   sub(digamma(alpha_t), digamma(S_t))),
                               1, true));
      return add(err, mul(mean(kl), Tensor::scalar(ramp)));
    }

    case LossKind::ldmi: {
      if (N < C) {
        fail(ErrorCode::bad_value, "loss_value: ldmi needs a batch of at least " +
                                       std::to_string(C) + " samples, got " +
                                       std::to_string(N));
      }
      Tensor probs = softmax(raw);
      // Q = (1/N) * one_hot^T . probs, a C x C joint label/prediction matrix.
      std::vector<double> ht(C * N, 0.0);
      for (std::size_t i = 0; i < N; ++i) ht[labels.labels[i] * N + i] = 1.0;
      Tensor one_hot_t = Tensor::from_data({C, N}, std::move(ht));
      Tensor q = mul(matmul(one_hot_t, probs), Tensor::scalar(1.0 / static_cast<double>(N)));
      bool floored = false;
      Tensor lad = log_abs_det(q, spec.ldmi_det_floor, &floored);
      if (floored && flags) flags->ldmi_det_floored = true;
      return neg(lad);
    }

    case LossKind::mse: {
      Tensor d = sub(labels.one_hot(), softmax(raw));
      return mul(mean(sum_axis(square(d), 1, false)),
                 Tensor::scalar(1.0 / static_cast<double>(C)));
    }

    case LossKind::mae: {
      Tensor d = sub(labels.one_hot(), softmax(raw));
      return mul(mean(sum_axis(abs(d), 1, false)),
                 Tensor::scalar(1.0 / static_cast<double>(C)));
    }
  }
  fail(ErrorCode::bad_value, "loss_value: unhandled loss kind");
}

std::vector<double> evidential_uncertainty(const Tensor& raw) {
  if (raw.ndim() != 2) {
    fail(ErrorCode::shape_mismatch,
         "evidential_uncertainty: raw outputs must be rank 2, got " + shape_str(raw.shape()));
  }
  std::size_t n = raw.shape()[0], c = raw.shape()[1];
  std::vector<double> out(n);
  const auto& d = raw.data();
  for (std::size_t i = 0; i < n; ++i) {
    double strength = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      double v = d[i * c + j];
      strength += std::max(v, 0.0) + std::log1p(std::exp(-std::fabs(v))) + 1.0;
    }
    out[i] = static_cast<double>(c) / strength;
  }
  return out;
}

}  // namespace selb
