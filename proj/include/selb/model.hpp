#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "selb/layers.hpp"
#include "selb/losses.hpp"

namespace selb {

// Per-sample output of an ensemble: one probability row per head plus the
// uniform average of the rows.
struct PredictionSet {
  std::size_t num_heads = 0;
  std::size_t num_classes = 0;
  std::vector<double> per_head;  // row-major, num_heads x num_classes
  std::vector<double> averaged;  // num_classes

  std::span<const double> row(std::size_t i) const {
    return {per_head.data() + i * num_classes, num_classes};
  }
};

// Builds the set from stacked rows, computing the average.
PredictionSet make_prediction_set(std::size_t num_heads, std::size_t num_classes,
                                  std::vector<double> rows);

// Architecture + split description. `split` is an index into the full layer
// list (body layers then the final classifier dense): layers before it form
// the shared trunk, layers from it onward are cloned per head. The final
// dense always lives in the head, sized per loss (C or C+1 outputs).
struct ModelSpec {
  std::string arch;   // "small-mlp" | "small-cnn"
  Shape input_shape;  // per-sample feature shape
  std::size_t split = 0;
  std::size_t num_classes = 0;
  std::vector<LossSpec> losses;  // one per head
  double dropout_p = 0.0;
};

// Full architecture minus the final per-head dense; `head_input_dim` feeds
// that dense. Total architecture length is body.size() + 1.
struct ArchBody {
  std::vector<Layer> layers;
  std::size_t head_input_dim = 0;
};

ArchBody reference_architecture(const std::string& arch, const Shape& input_shape,
                                double dropout_p);

struct MultiHeadModel {
  ModelSpec spec;
  LayerStack trunk;
  std::vector<LayerStack> heads;

  std::size_t num_heads() const { return heads.size(); }
  std::vector<Tensor> all_params() const;
  std::vector<std::pair<std::string, Tensor>> named_params() const;
};

// Deterministic construction: trunk parameters derive from (seed, "trunk"),
// head h from (seed, "heads") + h, so heads differ even when cloned from the
// same template and rebuilding with the same seed is bit-identical.
MultiHeadModel build_model(const ModelSpec& spec, std::uint64_t seed);

// One input (shape == spec.input_shape) -> per-head probability rows.
PredictionSet predict(const MultiHeadModel& model, const Tensor& x, Mode mode,
                      Rng* rng = nullptr);

// Batched variant; returns one PredictionSet per sample.
std::vector<PredictionSet> predict_batch(const MultiHeadModel& model, const Tensor& x,
                                         Mode mode, Rng* rng = nullptr);

// Like predict_batch but averaging only the given heads (used while phases
// of sequential training have trained just a subset).
std::vector<PredictionSet> predict_batch_subset(const MultiHeadModel& model, const Tensor& x,
                                                const std::vector<std::size_t>& heads,
                                                Mode mode, Rng* rng = nullptr);

// Checkpoint = parameter binary + JSON sidecar describing the architecture,
// split, class count, head count and loss assignment.
void save_checkpoint(const MultiHeadModel& model, const std::string& params_path,
                     const std::string& sidecar_path);
MultiHeadModel load_checkpoint(const std::string& params_path,
                               const std::string& sidecar_path);

}  // namespace selb
