#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "selb/rng.hpp"
#include "selb/tensor.hpp"

namespace selb {

enum class LayerKind { dense, conv2d, maxpool, relu, dropout, flatten, softmax_head };

enum class Mode { train, eval, mc_dropout };

// One layer of a feed-forward stack. Parameter tensors exist from
// construction (zero-filled) and are filled by LayerStack::init_params.
struct Layer {
  LayerKind kind;
  // dense
  std::size_t in_dim = 0, out_dim = 0;
  // conv2d
  std::size_t in_channels = 0, out_channels = 0, kernel = 0, padding = 0;
  // dropout
  double dropout_p = 0.0;

  Tensor weight, bias;
};

Layer make_dense(std::size_t in_dim, std::size_t out_dim);
Layer make_conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
                  std::size_t padding);
Layer make_maxpool();
Layer make_relu();
Layer make_dropout(double p);  // p in [0, 1)
Layer make_flatten();
Layer make_softmax_head();

// Ordered list of layers with shared forward semantics.
//
// Dropout is inverted: in train and mc-dropout modes each activation is kept
// with probability (1 - p) and scaled by 1/(1 - p), so eval needs no
// rescaling. p = 0 is an exact identity and draws nothing from the stream.
class LayerStack {
 public:
  std::vector<Layer> layers;
  Mode mode = Mode::train;  // default; forward takes the effective mode

  // He-uniform weights (bound sqrt(6 / fan_in)), zero biases. Deterministic:
  // the same seed always produces bit-identical parameters.
  void init_params(std::uint64_t seed);

  // Pure in eval mode; train/mc-dropout consume `rng` only for dropout masks.
  Tensor forward(const Tensor& x, Mode mode, Rng* rng) const;

  std::vector<Tensor> params() const;
  std::vector<std::pair<std::string, Tensor>> named_params(const std::string& prefix) const;

  bool has_dropout() const;        // any dropout layer present
  bool has_active_dropout() const; // any dropout layer with p > 0
  void set_requires_grad(bool value);
};

}  // namespace selb
