#include "selb/optim.hpp"

#include <cmath>
#include <string>

namespace selb {

namespace {

const std::vector<double>& checked_grad(const Tensor& p, std::size_t slot) {
  if (!p.has_grad()) {
    fail(ErrorCode::optim,
         "optimizer: parameter " + std::to_string(slot) + " has no gradient");
  }
  return p.node()->grad;
}

}  // namespace

void zero_grad(const std::vector<Tensor>& params) {
  for (const auto& p : params) {
    const_cast<Tensor&>(p).zero_grad();
  }
}

void Sgd::step(std::vector<Tensor>& params) {
  for (std::size_t s = 0; s < params.size(); ++s) {
    auto& p = params[s];
    const auto& g = checked_grad(p, s);
    auto& d = p.mutable_data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] -= lr_ * g[i];
  }
}

void Adam::step(std::vector<Tensor>& params) {
  if (m_.empty()) {
    m_.resize(params.size());
    v_.resize(params.size());
    for (std::size_t s = 0; s < params.size(); ++s) {
      m_[s].assign(params[s].size(), 0.0);
      v_[s].assign(params[s].size(), 0.0);
    }
  }
  if (m_.size() != params.size()) {
    fail(ErrorCode::optim, "adam: parameter list changed between steps");
  }
  ++t_;
  double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t s = 0; s < params.size(); ++s) {
    auto& p = params[s];
    const auto& g = checked_grad(p, s);
    auto& d = p.mutable_data();
    auto& m = m_[s];
    auto& v = v_[s];
    for (std::size_t i = 0; i < d.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      double mhat = m[i] / bc1;
      double vhat = v[i] / bc2;
      d[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

}  // namespace selb
