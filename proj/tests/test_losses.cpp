#include <doctest.h>

#include <cmath>
#include <vector>

#include "selb/error.hpp"
#include "selb/losses.hpp"
#include "selb/ops.hpp"
#include "selb/optim.hpp"
#include "selb/rng.hpp"
#include "selb/special.hpp"
#include "test_util.hpp"

using doctest::Approx;
using namespace selb;

namespace {

LossSpec spec_of(LossKind kind) {
  LossSpec s;
  s.kind = kind;
  return s;
}

BatchLabels labels_of(std::vector<std::size_t> labels, std::size_t classes) {
  BatchLabels l;
  l.labels = std::move(labels);
  l.num_classes = classes;
  return l;
}

}  // namespace

TEST_CASE("loss name round trip and head widths") {
  for (const char* name :
       {"softmax", "relaxed_softmax", "evidential", "ldmi", "mse", "mae"}) {
    CHECK(loss_name(parse_loss_name(name)) == name);
  }
  CHECK_THROWS_AS(parse_loss_name("cross_entropy"), Error);
  CHECK(head_output_width(LossKind::softmax_ce, 5) == 5);
  CHECK(head_output_width(LossKind::relaxed_softmax, 5) == 6);  // +1 scale unit
  CHECK(head_output_width(LossKind::evidential, 5) == 5);
  CHECK(head_output_width(LossKind::ldmi, 5) == 5);
}

TEST_CASE("one_hot lays out indicator rows") {
  BatchLabels lab = labels_of({2, 0}, 3);
  Tensor t = lab.one_hot();
  CHECK(t.shape() == Shape{2, 3});
  CHECK(t.data() == std::vector<double>{0, 0, 1, 1, 0, 0});
}

TEST_CASE("softmax cross entropy on uniform logits is ln C") {
  Tensor raw = Tensor::zeros({1, 4});
  double v = loss_value(spec_of(LossKind::softmax_ce), raw, labels_of({2}, 4), 0.0).item();
  CHECK(v == Approx(1.3862943611198906).epsilon(1e-15));  // ln 4
}

TEST_CASE("softmax cross entropy matches a scalar recomputation") {
  Rng rng(5);
  Tensor raw = testutil::rand_tensor(rng, {4, 3}, -2.0, 2.0);
  BatchLabels lab = labels_of({0, 2, 1, 1}, 3);
  double got = loss_value(spec_of(LossKind::softmax_ce), raw, lab, 0.0).item();

  double want = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    double mx = -1e300, z = 0.0;
    for (std::size_t c = 0; c < 3; ++c) mx = std::max(mx, raw.data()[i * 3 + c]);
    for (std::size_t c = 0; c < 3; ++c) z += std::exp(raw.data()[i * 3 + c] - mx);
    want -= raw.data()[i * 3 + lab.labels[i]] - mx - std::log(z);
  }
  want /= 4.0;
  CHECK(got == Approx(want).epsilon(1e-13));
}

TEST_CASE("mse and mae match scalar recomputations") {
  Rng rng(6);
  Tensor raw = testutil::rand_tensor(rng, {3, 4}, -2.0, 2.0);
  BatchLabels lab = labels_of({3, 0, 2}, 4);

  // reference softmax
  std::vector<double> p(12);
  for (std::size_t i = 0; i < 3; ++i) {
    double mx = -1e300, z = 0.0;
    for (std::size_t c = 0; c < 4; ++c) mx = std::max(mx, raw.data()[i * 4 + c]);
    for (std::size_t c = 0; c < 4; ++c) {
      p[i * 4 + c] = std::exp(raw.data()[i * 4 + c] - mx);
      z += p[i * 4 + c];
    }
    for (std::size_t c = 0; c < 4; ++c) p[i * 4 + c] /= z;
  }

  double want_mse = 0.0, want_mae = 0.0;
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t c = 0; c < 4; ++c) {
      double t = (lab.labels[i] == c) ? 1.0 : 0.0;
      want_mse += (t - p[i * 4 + c]) * (t - p[i * 4 + c]);
      want_mae += std::fabs(t - p[i * 4 + c]);
    }
  want_mse /= 3.0 * 4.0;  // mean over batch, scaled by 1/C
  want_mae /= 3.0 * 4.0;

  CHECK(loss_value(spec_of(LossKind::mse), raw, lab, 0.0).item() ==
        Approx(want_mse).epsilon(1e-13));
  CHECK(loss_value(spec_of(LossKind::mae), raw, lab, 0.0).item() ==
        Approx(want_mae).epsilon(1e-13));
}

TEST_CASE("relaxed softmax scales logits by a learned positive temperature") {
  // raw = (z, extra); alpha = softplus(extra) + 1e-6
  Tensor raw = Tensor::from_data({1, 3}, {2.0, 0.0, 1.0});  // C=2, extra unit = 1.0
  double alpha = std::log1p(std::exp(1.0)) + 1e-6;
  BatchLabels lab = labels_of({0}, 2);

  double got = loss_value(spec_of(LossKind::relaxed_softmax), raw, lab, 0.0).item();
  double z0 = alpha * 2.0, z1 = alpha * 0.0;
  double want = -(z0 - std::log(std::exp(z0) + std::exp(z1)));
  CHECK(got == Approx(want).epsilon(1e-12));

  auto probs = head_probs(spec_of(LossKind::relaxed_softmax), raw, 2);
  CHECK(probs.shape() == Shape{1, 2});
  double p0 = std::exp(z0) / (std::exp(z0) + std::exp(z1));
  CHECK(probs.data()[0] == Approx(p0).epsilon(1e-12));
  CHECK(probs.data()[1] == Approx(1.0 - p0).epsilon(1e-12));
}

TEST_CASE("evidential loss matches a scalar recomputation of err + ramp * KL") {
  Rng rng(7);
  const std::size_t N = 3, C = 3;
  Tensor raw = testutil::rand_tensor(rng, {N, C}, -1.0, 2.0);
  BatchLabels lab = labels_of({1, 0, 2}, C);
  LossSpec spec = spec_of(LossKind::evidential);
  spec.evidential_anneal_epochs = 10.0;

  auto softplus_s = [](double x) {
    return std::log1p(std::exp(-std::fabs(x))) + std::max(0.0, x);
  };

  for (double epoch : {0.0, 4.0, 25.0}) {
    double ramp = std::min(1.0, epoch / 10.0);
    double want = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
      double alpha[3], S = 0.0;
      for (std::size_t c = 0; c < C; ++c) {
        alpha[c] = softplus_s(raw.data()[i * C + c]) + 1.0;
        S += alpha[c];
      }
      double err = 0.0;
      for (std::size_t c = 0; c < C; ++c) {
        double t = (lab.labels[i] == c) ? 1.0 : 0.0;
        double p = alpha[c] / S;
        err += (t - p) * (t - p) + alpha[c] * (S - alpha[c]) / (S * S * (S + 1.0));
      }
      double kl = 0.0;
      if (ramp > 0.0) {
        double at[3], St = 0.0;
        for (std::size_t c = 0; c < C; ++c) {
          double t = (lab.labels[i] == c) ? 1.0 : 0.0;
          at[c] = t + (1.0 - t) * alpha[c];
          St += at[c];
        }
        kl = std::lgamma(St) - std::lgamma(static_cast<double>(C));
        for (std::size_t c = 0; c < C; ++c) {
          kl -= std::lgamma(at[c]);
          kl += (at[c] - 1.0) * (selb::digamma(at[c]) - selb::digamma(St));
        }
      }
      want += err + ramp * kl;
    }
    want /= static_cast<double>(N);
    double got = loss_value(spec, raw, lab, epoch).item();
    CHECK(got == Approx(want).epsilon(1e-11));
  }
}

TEST_CASE("evidential probabilities are alpha over strength") {
  Tensor raw = Tensor::zeros({1, 2});  // alpha = softplus(0) + 1 = ln2 + 1 each
  auto p = head_probs(spec_of(LossKind::evidential), raw, 2).data();
  CHECK(p[0] == Approx(0.5).epsilon(1e-14));
  CHECK(p[1] == Approx(0.5).epsilon(1e-14));

  std::vector<double> u = evidential_uncertainty(raw);
  // u = C / S = 2 / (2 (1 + ln 2))
  CHECK(u[0] == Approx(1.0 / (1.0 + std::log(2.0))).epsilon(1e-13));
}

TEST_CASE("ldmi loss follows the closed form on a 2-class batch") {
  // labels (0, 1), logits (a, -a) / (-a, a): Q = (1/2) [[s, 1-s], [1-s, s]]
  // with s = sigmoid(2a); -log |det Q| = ln 4 - log(2s - 1) = ln 4 - log(tanh a)
  const double a = 5.0;
  Tensor raw = Tensor::from_data({2, 2}, {a, -a, -a, a});
  BatchLabels lab = labels_of({0, 1}, 2);
  double got = loss_value(spec_of(LossKind::ldmi), raw, lab, 0.0).item();
  double want = std::log(4.0) - std::log(std::tanh(a));
  CHECK(got == Approx(want).epsilon(1e-12));
}

TEST_CASE("ldmi flags (not fails) a floored determinant") {
  // uniform predictions make the joint matrix rank one
  Tensor raw = Tensor::zeros({4, 2});
  BatchLabels lab = labels_of({0, 1, 0, 1}, 2);
  LossSpec spec = spec_of(LossKind::ldmi);
  spec.ldmi_det_floor = 1e-8;
  LossFlags flags;
  double v = loss_value(spec, raw, lab, 0.0, &flags).item();
  CHECK(flags.ldmi_det_floored);
  CHECK(v == Approx(-std::log(1e-8)).epsilon(1e-12));
}

TEST_CASE("ldmi requires at least C samples") {
  Tensor raw = Tensor::zeros({2, 3});
  CHECK_THROWS_AS(loss_value(spec_of(LossKind::ldmi), raw, labels_of({0, 1}, 3), 0.0), Error);
}

TEST_CASE("shape and label validation") {
  Tensor raw = Tensor::zeros({2, 3});
  // width mismatch: relaxed expects C+1
  CHECK_THROWS_AS(loss_value(spec_of(LossKind::relaxed_softmax), raw, labels_of({0, 1}, 3), 0.0),
                  Error);
  // label out of range
  CHECK_THROWS_AS(loss_value(spec_of(LossKind::softmax_ce), raw, labels_of({0, 3}, 3), 0.0),
                  Error);
  // batch size mismatch
  CHECK_THROWS_AS(loss_value(spec_of(LossKind::softmax_ce), raw, labels_of({0}, 3), 0.0), Error);
}

TEST_CASE("every loss decreases under gradient steps on a separable batch") {
  Rng data_rng(13);
  const std::size_t N = 12, C = 3;
  BatchLabels lab;
  lab.num_classes = C;
  std::vector<double> features(N * C);
  for (std::size_t i = 0; i < N; ++i) {
    std::size_t y = i % C;
    lab.labels.push_back(y);
    for (std::size_t c = 0; c < C; ++c)
      features[i * C + c] = (c == y ? 2.0 : 0.0) + data_rng.normal() * 0.3;
  }
  Tensor x = Tensor::from_data({N, C}, features);

  for (LossKind kind : {LossKind::softmax_ce, LossKind::relaxed_softmax, LossKind::evidential,
                        LossKind::ldmi, LossKind::mse, LossKind::mae}) {
    LossSpec spec = spec_of(kind);
    std::size_t width = head_output_width(kind, C);
    Tensor w = Tensor::zeros({C, width}, true);
    Tensor b = Tensor::zeros({width}, true);
    {
      Rng init(17);
      auto& wd = w.mutable_data();
      for (auto& v : wd) v = init.uniform(-0.5, 0.5);
    }
    std::vector<Tensor> params{w, b};
    Adam opt(0.05);
    double first = 0.0, last = 0.0;
    for (int it = 0; it < 60; ++it) {
      zero_grad(params);
      Tensor raw = add(matmul(x, w), b);
      Tensor lv = loss_value(spec, raw, lab, static_cast<double>(it));
      if (it == 0) first = lv.item();
      last = lv.item();
      backward(lv);
      opt.step(params);
    }
    INFO("loss kind " << loss_name(kind) << ": first " << first << " last " << last);
    CHECK(last < first);
  }
}
