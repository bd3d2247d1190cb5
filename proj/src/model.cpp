#include "selb/model.hpp"

#include <json.hpp>

#include "selb/ops.hpp"
#include "selb/serialize.hpp"

namespace selb {

PredictionSet make_prediction_set(std::size_t num_heads, std::size_t num_classes,
                                  std::vector<double> rows) {
  if (num_heads == 0 || num_classes == 0 || rows.size() != num_heads * num_classes) {
    fail(ErrorCode::shape_mismatch, "prediction set: rows do not match M x C");
  }
  PredictionSet ps;
  ps.num_heads = num_heads;
  ps.num_classes = num_classes;
  ps.per_head = std::move(rows);
  ps.averaged.assign(num_classes, 0.0);
  for (std::size_t h = 0; h < num_heads; ++h) {
    for (std::size_t c = 0; c < num_classes; ++c) {
      ps.averaged[c] += ps.per_head[h * num_classes + c];
    }
  }
  for (auto& v : ps.averaged) v /= static_cast<double>(num_heads);
  return ps;
}

ArchBody reference_architecture(const std::string& arch, const Shape& input_shape,
                                double dropout_p) {
  ArchBody body;
  if (arch == "small-mlp") {
    // dense 128 -> relu -> dropout -> dense 64 -> relu, then the head dense.
    std::size_t in = shape_size(input_shape);
    if (in == 0) fail(ErrorCode::config, "small-mlp: empty input shape");
    if (input_shape.size() > 1) body.layers.push_back(make_flatten());
    body.layers.push_back(make_dense(in, 128));
    body.layers.push_back(make_relu());
    body.layers.push_back(make_dropout(dropout_p));
    body.layers.push_back(make_dense(128, 64));
    body.layers.push_back(make_relu());
    body.head_input_dim = 64;
    return body;
  }
  if (arch == "small-cnn") {
    // Two 3x3 conv blocks (each relu followed by dropout, so stochastic
    // inference has mask sites), then flatten -> dense 64 -> relu.
    if (input_shape.size() != 3) {
      fail(ErrorCode::config, "small-cnn: input must be (channels, H, W), got " +
                                  shape_str(input_shape));
    }
    std::size_t ch = input_shape[0], h = input_shape[1], w = input_shape[2];
    if (h < 4 || w < 4) {
      fail(ErrorCode::config, "small-cnn: spatial input too small: " + shape_str(input_shape));
    }
    body.layers.push_back(make_conv2d(ch, 16, 3, 1));
    body.layers.push_back(make_relu());
    body.layers.push_back(make_dropout(dropout_p));
    body.layers.push_back(make_maxpool());
    body.layers.push_back(make_conv2d(16, 32, 3, 1));
    body.layers.push_back(make_relu());
    body.layers.push_back(make_dropout(dropout_p));
    body.layers.push_back(make_maxpool());
    body.layers.push_back(make_flatten());
    std::size_t flat = 32 * (h / 2 / 2) * (w / 2 / 2);
    body.layers.push_back(make_dense(flat, 64));
    body.layers.push_back(make_relu());
    body.head_input_dim = 64;
    return body;
  }
  fail(ErrorCode::config, "unknown architecture \"" + arch + "\" (small-mlp, small-cnn)");
}

namespace {

// Fresh (unshared) copy of a body slice; parameter tensors are recreated so
// heads never alias each other or the template.
std::vector<Layer> clone_layers(const std::vector<Layer>& src, std::size_t begin,
                                std::size_t end) {
  std::vector<Layer> out;
  for (std::size_t i = begin; i < end; ++i) {
    const Layer& l = src[i];
    switch (l.kind) {
      case LayerKind::dense:
        out.push_back(make_dense(l.in_dim, l.out_dim));
        break;
      case LayerKind::conv2d:
        out.push_back(make_conv2d(l.in_channels, l.out_channels, l.kernel, l.padding));
        break;
      case LayerKind::dropout:
        out.push_back(make_dropout(l.dropout_p));
        break;
      case LayerKind::maxpool:
        out.push_back(make_maxpool());
        break;
      case LayerKind::relu:
        out.push_back(make_relu());
        break;
      case LayerKind::flatten:
        out.push_back(make_flatten());
        break;
      case LayerKind::softmax_head:
        out.push_back(make_softmax_head());
        break;
    }
  }
  return out;
}

void validate_spec(const ModelSpec& spec, const ArchBody& body) {
  std::size_t full_len = body.layers.size() + 1;
  if (spec.split >= full_len) {
    fail(ErrorCode::config, "split " + std::to_string(spec.split) + " out of range for " +
                                spec.arch + " (valid: 0.." + std::to_string(full_len - 1) + ")");
  }
  if (spec.num_classes < 2) {
    fail(ErrorCode::config, "model needs at least 2 classes, got " +
                                std::to_string(spec.num_classes));
  }
  if (spec.losses.empty()) {
    fail(ErrorCode::config, "model needs at least one head loss");
  }
}

}  // namespace

std::vector<Tensor> MultiHeadModel::all_params() const {
  std::vector<Tensor> out = trunk.params();
  for (const auto& h : heads) {
    auto hp = h.params();
    out.insert(out.end(), hp.begin(), hp.end());
  }
  return out;
}

std::vector<std::pair<std::string, Tensor>> MultiHeadModel::named_params() const {
  auto out = trunk.named_params("trunk");
  for (std::size_t i = 0; i < heads.size(); ++i) {
    auto hp = heads[i].named_params("head" + std::to_string(i));
    out.insert(out.end(), hp.begin(), hp.end());
  }
  return out;
}

MultiHeadModel build_model(const ModelSpec& spec, std::uint64_t seed) {
  ArchBody body = reference_architecture(spec.arch, spec.input_shape, spec.dropout_p);
  validate_spec(spec, body);

  MultiHeadModel model;
  model.spec = spec;
  model.trunk.layers = clone_layers(body.layers, 0, spec.split);
  model.trunk.init_params(mix_seed(seed, "trunk"));

  std::uint64_t head_base = mix_seed(seed, "heads");
  for (std::size_t h = 0; h < spec.losses.size(); ++h) {
    LayerStack head;
    head.layers = clone_layers(body.layers, spec.split, body.layers.size());
    head.layers.push_back(make_dense(
        body.head_input_dim, head_output_width(spec.losses[h].kind, spec.num_classes)));
    head.init_params(head_base + h);  // per-head derivation: base + head index
    model.heads.push_back(std::move(head));
  }
  return model;
}

std::vector<PredictionSet> predict_batch_subset(const MultiHeadModel& model, const Tensor& x,
                                                const std::vector<std::size_t>& heads,
                                                Mode mode, Rng* rng) {
  if (heads.empty()) fail(ErrorCode::bad_value, "predict: no heads selected");
  if (x.ndim() < 1 || x.shape()[0] == 0) {
    fail(ErrorCode::shape_mismatch, "predict: empty batch");
  }
  NoGradGuard no_grad;
  std::size_t n = x.shape()[0];
  std::size_t C = model.spec.num_classes;
  std::size_t M = heads.size();

  Tensor trunk_out = model.trunk.layers.empty() ? x : model.trunk.forward(x, mode, rng);

  // head-major rows, then regrouped per sample
  std::vector<std::vector<double>> head_rows(M);
  for (std::size_t hi = 0; hi < M; ++hi) {
    std::size_t h = heads[hi];
    if (h >= model.heads.size()) {
      fail(ErrorCode::bad_value, "predict: head index " + std::to_string(h) + " out of range");
    }
    Tensor raw = model.heads[h].forward(trunk_out, mode, rng);
    Tensor probs = head_probs(model.spec.losses[h], raw, C);
    head_rows[hi] = probs.data();
  }

  std::vector<PredictionSet> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> rows(M * C);
    for (std::size_t hi = 0; hi < M; ++hi) {
      for (std::size_t c = 0; c < C; ++c) rows[hi * C + c] = head_rows[hi][i * C + c];
    }
    out.push_back(make_prediction_set(M, C, std::move(rows)));
  }
  return out;
}

std::vector<PredictionSet> predict_batch(const MultiHeadModel& model, const Tensor& x,
                                         Mode mode, Rng* rng) {
  std::vector<std::size_t> all(model.heads.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return predict_batch_subset(model, x, all, mode, rng);
}

PredictionSet predict(const MultiHeadModel& model, const Tensor& x, Mode mode, Rng* rng) {
  if (x.shape() != model.spec.input_shape) {
    fail(ErrorCode::shape_mismatch, "predict: input " + shape_str(x.shape()) +
                                        " does not match model input " +
                                        shape_str(model.spec.input_shape));
  }
  Shape batched = model.spec.input_shape;
  batched.insert(batched.begin(), 1);
  Tensor xb = Tensor::from_data(batched, x.data());
  return predict_batch(model, xb, mode, rng)[0];
}

void save_checkpoint(const MultiHeadModel& model, const std::string& params_path,
                     const std::string& sidecar_path) {
  save_tensors(params_path, model.named_params());

  nlohmann::json j;
  j["arch"] = model.spec.arch;
  j["input_shape"] = model.spec.input_shape;
  j["split"] = model.spec.split;
  j["num_classes"] = model.spec.num_classes;
  j["num_heads"] = model.heads.size();
  j["dropout_p"] = model.spec.dropout_p;
  auto losses = nlohmann::json::array();
  for (const auto& l : model.spec.losses) {
    losses.push_back({{"loss", loss_name(l.kind)},
                      {"evidential_anneal_epochs", l.evidential_anneal_epochs},
                      {"ldmi_det_floor", l.ldmi_det_floor}});
  }
  j["losses"] = losses;
  write_text_file(sidecar_path, j.dump(2) + "\n");
}

MultiHeadModel load_checkpoint(const std::string& params_path,
                               const std::string& sidecar_path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(sidecar_path));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::bad_value, "checkpoint sidecar " + sidecar_path + ": " + e.what());
  }

  ModelSpec spec;
  try {
    spec.arch = j.at("arch").get<std::string>();
    spec.input_shape = j.at("input_shape").get<Shape>();
    spec.split = j.at("split").get<std::size_t>();
    spec.num_classes = j.at("num_classes").get<std::size_t>();
    spec.dropout_p = j.at("dropout_p").get<double>();
    for (const auto& l : j.at("losses")) {
      LossSpec ls;
      ls.kind = parse_loss_name(l.at("loss").get<std::string>());
      ls.evidential_anneal_epochs = l.at("evidential_anneal_epochs").get<double>();
      ls.ldmi_det_floor = l.at("ldmi_det_floor").get<double>();
      spec.losses.push_back(ls);
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::bad_value, "checkpoint sidecar " + sidecar_path + ": " + e.what());
  }

  MultiHeadModel model = build_model(spec, 0);
  auto records = load_tensors(params_path);
  auto named = model.named_params();
  if (records.size() != named.size()) {
    fail(ErrorCode::count_mismatch,
         "checkpoint " + params_path + ": " + std::to_string(records.size()) +
             " tensors for a model with " + std::to_string(named.size()));
  }
  for (std::size_t i = 0; i < named.size(); ++i) {
    if (records[i].name != named[i].first) {
      fail(ErrorCode::bad_value, "checkpoint " + params_path + ": tensor \"" +
                                     records[i].name + "\" where \"" + named[i].first +
                                     "\" was expected");
    }
    if (records[i].shape != named[i].second.shape()) {
      fail(ErrorCode::shape_mismatch, "checkpoint " + params_path + ": tensor \"" +
                                          records[i].name + "\" has shape " +
                                          shape_str(records[i].shape) + ", model expects " +
                                          shape_str(named[i].second.shape()));
    }
    named[i].second.mutable_data() = records[i].data;
  }
  return model;
}

}  // namespace selb
