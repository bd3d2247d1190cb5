#pragma once

#include <vector>

#include "selb/tensor.hpp"

namespace selb {

// Sets every parameter gradient buffer to zero (allocating if needed).
void zero_grad(const std::vector<Tensor>& params);

// Plain SGD: p -= lr * g. Parameters are updated in place; gradients are
// left untouched (the caller resets them between steps).
class Sgd {
 public:
  explicit Sgd(double lr) : lr_(lr) {}
  void step(std::vector<Tensor>& params);

 private:
  double lr_;
};

// Adam with the standard defaults and bias correction. State is kept per
// parameter slot, indexed by position in the vector handed to step(); the
// same parameter list must be passed on every call.
class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}
  void step(std::vector<Tensor>& params);

 private:
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace selb
