#pragma once

#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "selb/tensor.hpp"

namespace testutil {

// Central-difference check of reverse-mode gradients. `builder` must be a
// pure function of the given leaves returning a scalar; it is re-invoked for
// every probe, so anything stochastic has to be fixed before the call.
struct GradCheck {
  double h = 1e-5;
  double rel_tol = 1e-4;
  double abs_floor = 1e-7;  // denominator floor: treats tiny gradients as equal

  std::size_t checked = 0;  // probes compared so far (accumulates across runs)
  std::string first_failure;

  bool run(const std::function<selb::Tensor(const std::vector<selb::Tensor>&)>& builder,
           const std::vector<selb::Tensor>& inputs) {
    // analytic side: fresh leaves with gradients enabled
    std::vector<selb::Tensor> leaves;
    leaves.reserve(inputs.size());
    for (const auto& t : inputs) {
      std::vector<double> copy(t.data());
      leaves.push_back(selb::Tensor::from_data(t.shape(), std::move(copy), true));
    }
    selb::Tensor out = builder(leaves);
    selb::backward(out);

    bool all_ok = true;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
      std::vector<double> zeros;
      const std::vector<double>* gradp;
      if (leaves[k].has_grad()) {
        gradp = &leaves[k].grad();
      } else {
        zeros.assign(inputs[k].size(), 0.0);
        gradp = &zeros;
      }
      const std::vector<double>& grad = *gradp;
      for (std::size_t i = 0; i < inputs[k].size(); ++i) {
        double numeric = central_difference(builder, inputs, k, i);
        double analytic = grad[i];
        double denom = std::max(abs_floor, std::max(std::fabs(analytic), std::fabs(numeric)));
        double rel = std::fabs(analytic - numeric) / denom;
        ++checked;
        if (!(rel <= rel_tol)) {
          all_ok = false;
          if (first_failure.empty()) {
            char buf[256];
            std::snprintf(buf, sizeof buf,
                          "input %zu elem %zu: analytic %.10g vs numeric %.10g (rel %.3g)", k, i,
                          analytic, numeric, rel);
            first_failure = buf;
          }
        }
      }
    }
    return all_ok;
  }

 private:
  double eval_at(const std::function<selb::Tensor(const std::vector<selb::Tensor>&)>& builder,
                 const std::vector<selb::Tensor>& inputs, std::size_t k, std::size_t i,
                 double delta) {
    selb::NoGradGuard guard;
    std::vector<selb::Tensor> leaves;
    leaves.reserve(inputs.size());
    for (std::size_t j = 0; j < inputs.size(); ++j) {
      std::vector<double> copy(inputs[j].data());
      if (j == k) copy[i] += delta;
      leaves.push_back(selb::Tensor::from_data(inputs[j].shape(), std::move(copy), false));
    }
    return builder(leaves).item();
  }

  double central_difference(
      const std::function<selb::Tensor(const std::vector<selb::Tensor>&)>& builder,
      const std::vector<selb::Tensor>& inputs, std::size_t k, std::size_t i) {
    double up = eval_at(builder, inputs, k, i, h);
    double down = eval_at(builder, inputs, k, i, -h);
    return (up - down) / (2.0 * h);
  }
};

}  // namespace testutil
