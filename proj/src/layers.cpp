#include "selb/layers.hpp"

#include <cmath>

#include "selb/ops.hpp"

namespace selb {

Layer make_dense(std::size_t in_dim, std::size_t out_dim) {
  if (in_dim == 0 || out_dim == 0) {
    fail(ErrorCode::bad_value, "dense: zero-sized dimension");
  }
  Layer l;
  l.kind = LayerKind::dense;
  l.in_dim = in_dim;
  l.out_dim = out_dim;
  l.weight = Tensor::zeros({in_dim, out_dim}, true);
  l.bias = Tensor::zeros({out_dim}, true);
  return l;
}

Layer make_conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
                  std::size_t padding) {
  if (in_channels == 0 || out_channels == 0 || kernel == 0) {
    fail(ErrorCode::bad_value, "conv2d: zero-sized dimension");
  }
  Layer l;
  l.kind = LayerKind::conv2d;
  l.in_channels = in_channels;
  l.out_channels = out_channels;
  l.kernel = kernel;
  l.padding = padding;
  l.weight = Tensor::zeros({out_channels, in_channels, kernel, kernel}, true);
  l.bias = Tensor::zeros({out_channels}, true);
  return l;
}

Layer make_maxpool() {
  Layer l;
  l.kind = LayerKind::maxpool;
  return l;
}

Layer make_relu() {
  Layer l;
  l.kind = LayerKind::relu;
  return l;
}

Layer make_dropout(double p) {
  if (!(p >= 0.0 && p < 1.0)) {
    fail(ErrorCode::bad_value, "dropout: p must be in [0, 1)");
  }
  Layer l;
  l.kind = LayerKind::dropout;
  l.dropout_p = p;
  return l;
}

Layer make_flatten() {
  Layer l;
  l.kind = LayerKind::flatten;
  return l;
}

Layer make_softmax_head() {
  Layer l;
  l.kind = LayerKind::softmax_head;
  return l;
}

void LayerStack::init_params(std::uint64_t seed) {
  Rng rng(seed);
  for (auto& l : layers) {
    std::size_t fan_in = 0;
    if (l.kind == LayerKind::dense) {
      fan_in = l.in_dim;
    } else if (l.kind == LayerKind::conv2d) {
      fan_in = l.in_channels * l.kernel * l.kernel;
    } else {
      continue;
    }
    double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    auto& w = l.weight.mutable_data();
    for (auto& v : w) v = rng.uniform(-bound, bound);
    auto& b = l.bias.mutable_data();
    for (auto& v : b) v = 0.0;
  }
}

Tensor LayerStack::forward(const Tensor& x, Mode mode, Rng* rng) const {
  Tensor h = x;
  for (const auto& l : layers) {
    switch (l.kind) {
      case LayerKind::dense: {
        if (h.ndim() != 2) {
          fail(ErrorCode::shape_mismatch,
               "dense: expected rank-2 input, got " + shape_str(h.shape()) +
                   " (flatten first)");
        }
        h = add(matmul(h, l.weight), l.bias);
        break;
      }
      case LayerKind::conv2d:
        h = conv2d(h, l.weight, l.bias, l.padding);
        break;
      case LayerKind::maxpool:
        h = maxpool2x2(h);
        break;
      case LayerKind::relu:
        h = relu(h);
        break;
      case LayerKind::flatten:
        h = flatten_batch(h);
        break;
      case LayerKind::softmax_head:
        h = softmax(h);
        break;
      case LayerKind::dropout: {
        if (l.dropout_p == 0.0 || mode == Mode::eval) break;  // exact identity
        if (!rng) {
          fail(ErrorCode::bad_value, "dropout: active mask requested without an rng");
        }
        double keep_scale = 1.0 / (1.0 - l.dropout_p);
        std::vector<double> mask(h.size());
        for (auto& v : mask) v = rng->uniform() >= l.dropout_p ? keep_scale : 0.0;
        h = mul(h, Tensor::from_data(h.shape(), std::move(mask)));
        break;
      }
    }
  }
  return h;
}

std::vector<Tensor> LayerStack::params() const {
  std::vector<Tensor> out;
  for (const auto& l : layers) {
    if (l.weight.defined()) out.push_back(l.weight);
    if (l.bias.defined()) out.push_back(l.bias);
  }
  return out;
}

std::vector<std::pair<std::string, Tensor>> LayerStack::named_params(
    const std::string& prefix) const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    if (!l.weight.defined()) continue;
    out.emplace_back(prefix + "." + std::to_string(i) + ".weight", l.weight);
    out.emplace_back(prefix + "." + std::to_string(i) + ".bias", l.bias);
  }
  return out;
}

bool LayerStack::has_dropout() const {
  for (const auto& l : layers) {
    if (l.kind == LayerKind::dropout) return true;
  }
  return false;
}

bool LayerStack::has_active_dropout() const {
  for (const auto& l : layers) {
    if (l.kind == LayerKind::dropout && l.dropout_p > 0.0) return true;
  }
  return false;
}

void LayerStack::set_requires_grad(bool value) {
  for (auto& l : layers) {
    if (l.weight.defined()) l.weight.set_requires_grad(value);
    if (l.bias.defined()) l.bias.set_requires_grad(value);
  }
}

}  // namespace selb
