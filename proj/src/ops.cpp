#include "selb/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <string>

#include "selb/special.hpp"

namespace selb {

namespace detail {

Tensor make_op(const char* op, Shape shape, std::vector<double> data,
               const std::vector<Tensor>& inputs,
               std::function<void(TensorNode&)> backprop) {
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->data = std::move(data);
  n->op = op;
  n->id = next_node_id();
  bool needs = false;
  if (grad_enabled()) {
    for (const auto& t : inputs) {
      if (t.defined() && t.requires_grad()) {
        needs = true;
        break;
      }
    }
  }
  if (needs) {
    n->requires_grad = true;
    for (const auto& t : inputs) n->parents.push_back(t.node());
    n->backprop = std::move(backprop);
  }
  return Tensor::wrap(n);
}

}  // namespace detail

namespace {

using detail::TensorNode;

// ---- broadcasting -----------------------------------------------------

struct BroadcastPlan {
  Shape out_shape;
  std::vector<std::size_t> a_index;  // out flat index -> a flat index
  std::vector<std::size_t> b_index;
};

BroadcastPlan plan_broadcast(const char* op, const Shape& a, const Shape& b) {
  std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    std::size_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    std::size_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (da != db && da != 1 && db != 1) {
      fail(ErrorCode::shape_mismatch, std::string(op) + ": shapes " + shape_str(a) +
                                          " and " + shape_str(b) + " do not broadcast");
    }
    out[i] = std::max(da, db);
  }

  BroadcastPlan plan;
  plan.out_shape = out;
  std::size_t n = shape_size(out);
  plan.a_index.resize(n);
  plan.b_index.resize(n);

  // Strides with 0 where a dimension broadcasts.
  std::vector<std::size_t> sa(rank, 0), sb(rank, 0);
  {
    std::size_t stride = 1;
    for (std::size_t i = a.size(); i-- > 0;) {
      std::size_t pos = i + (rank - a.size());
      sa[pos] = (a[i] == 1 && out[pos] != 1) ? 0 : stride;
      stride *= a[i];
    }
    stride = 1;
    for (std::size_t i = b.size(); i-- > 0;) {
      std::size_t pos = i + (rank - b.size());
      sb[pos] = (b[i] == 1 && out[pos] != 1) ? 0 : stride;
      stride *= b[i];
    }
  }

  std::vector<std::size_t> idx(rank, 0);
  std::size_t ia = 0, ib = 0;
  for (std::size_t flat = 0; flat < n; ++flat) {
    plan.a_index[flat] = ia;
    plan.b_index[flat] = ib;
    for (std::size_t i = rank; i-- > 0;) {
      idx[i] += 1;
      ia += sa[i];
      ib += sb[i];
      if (idx[i] < out[i]) break;
      ia -= sa[i] * out[i];
      ib -= sb[i] * out[i];
      idx[i] = 0;
    }
  }
  return plan;
}

// ---- elementwise binary -------------------------------------------------

template <typename Fwd, typename Bwd>
Tensor binary_op(const char* name, const Tensor& a, const Tensor& b, Fwd fwd, Bwd bwd) {
  auto plan = plan_broadcast(name, a.shape(), b.shape());
  std::size_t n = shape_size(plan.out_shape);
  std::vector<double> out(n);
  const auto& ad = a.data();
  const auto& bd = b.data();
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = fwd(ad[plan.a_index[i]], bd[plan.b_index[i]]);
  }
  auto an = a.node();
  auto bn = b.node();
  auto plan_ptr = std::make_shared<BroadcastPlan>(std::move(plan));
  return detail::make_op(name, plan_ptr->out_shape, std::move(out), {a, b},
                         [an, bn, plan_ptr, bwd](TensorNode& self) {
                           const auto& g = self.grad;
                           bool wa = an->requires_grad;
                           bool wb = bn->requires_grad;
                           if (wa) an->ensure_grad();
                           if (wb) bn->ensure_grad();
                           for (std::size_t i = 0; i < g.size(); ++i) {
                             std::size_t ia = plan_ptr->a_index[i];
                             std::size_t ib = plan_ptr->b_index[i];
                             double da = 0.0, db = 0.0;
                             bwd(an->data[ia], bn->data[ib], g[i], da, db);
                             if (wa) an->grad[ia] += da;
                             if (wb) bn->grad[ib] += db;
                           }
                         });
}

// ---- elementwise unary ----------------------------------------------------

template <typename Fwd, typename Deriv>
Tensor unary_op(const char* name, const Tensor& x, Fwd fwd, Deriv deriv) {
  std::size_t n = x.size();
  std::vector<double> out(n);
  const auto& xd = x.data();
  for (std::size_t i = 0; i < n; ++i) out[i] = fwd(xd[i]);
  auto xn = x.node();
  return detail::make_op(name, x.shape(), std::move(out), {x},
                         [xn, deriv](TensorNode& self) {
                           xn->ensure_grad();
                           for (std::size_t i = 0; i < self.grad.size(); ++i) {
                             xn->grad[i] += self.grad[i] * deriv(xn->data[i], self.data[i]);
                           }
                         });
}

std::size_t row_width(const Tensor& x, const char* op) {
  if (x.ndim() == 0 || x.shape().back() == 0) {
    fail(ErrorCode::shape_mismatch, std::string(op) + ": needs a non-empty last axis");
  }
  return x.shape().back();
}

// ---- small LU machinery for log_abs_det ---------------------------------

// Factor a copy of `a` (n x n, row-major) in place with partial pivoting.
// Returns false when a pivot is exactly zero (singular matrix).
bool lu_factor(std::vector<double>& a, std::vector<int>& piv, int n, int& sign) {
  sign = 1;
  piv.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) piv[static_cast<std::size_t>(i)] = i;
  for (int k = 0; k < n; ++k) {
    int p = k;
    double best = std::fabs(a[static_cast<std::size_t>(k * n + k)]);
    for (int i = k + 1; i < n; ++i) {
      double v = std::fabs(a[static_cast<std::size_t>(i * n + k)]);
      if (v > best) {
        best = v;
        p = i;
      }
    }
    if (best == 0.0) return false;
    if (p != k) {
      for (int j = 0; j < n; ++j) {
        std::swap(a[static_cast<std::size_t>(k * n + j)], a[static_cast<std::size_t>(p * n + j)]);
      }
      std::swap(piv[static_cast<std::size_t>(k)], piv[static_cast<std::size_t>(p)]);
      sign = -sign;
    }
    double pivval = a[static_cast<std::size_t>(k * n + k)];
    for (int i = k + 1; i < n; ++i) {
      double f = a[static_cast<std::size_t>(i * n + k)] / pivval;
      a[static_cast<std::size_t>(i * n + k)] = f;
      for (int j = k + 1; j < n; ++j) {
        a[static_cast<std::size_t>(i * n + j)] -= f * a[static_cast<std::size_t>(k * n + j)];
      }
    }
  }
  return true;
}

// Inverse from an LU factorization (solves against unit columns).
std::vector<double> lu_inverse(const std::vector<double>& lu, const std::vector<int>& piv,
                               int n) {
  std::vector<double> inv(static_cast<std::size_t>(n * n), 0.0);
  std::vector<double> col(static_cast<std::size_t>(n));
  for (int c = 0; c < n; ++c) {
    for (int i = 0; i < n; ++i) {
      col[static_cast<std::size_t>(i)] = piv[static_cast<std::size_t>(i)] == c ? 1.0 : 0.0;
    }
    for (int i = 1; i < n; ++i) {  // forward solve (unit lower)
      double s = col[static_cast<std::size_t>(i)];
      for (int j = 0; j < i; ++j) s -= lu[static_cast<std::size_t>(i * n + j)] * col[static_cast<std::size_t>(j)];
      col[static_cast<std::size_t>(i)] = s;
    }
    for (int i = n - 1; i >= 0; --i) {  // back solve (upper)
      double s = col[static_cast<std::size_t>(i)];
      for (int j = i + 1; j < n; ++j) s -= lu[static_cast<std::size_t>(i * n + j)] * col[static_cast<std::size_t>(j)];
      col[static_cast<std::size_t>(i)] = s / lu[static_cast<std::size_t>(i * n + i)];
    }
    for (int i = 0; i < n; ++i) inv[static_cast<std::size_t>(i * n + c)] = col[static_cast<std::size_t>(i)];
  }
  return inv;
}

}  // namespace

// ---- binary -----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double, double g, double& da, double& db) {
        da = g;
        db = g;
      });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double, double g, double& da, double& db) {
        da = g;
        db = -g;
      });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double x, double y, double g, double& da, double& db) {
        da = g * y;
        db = g * x;
      });
}

Tensor div(const Tensor& a, const Tensor& b) {
  for (double v : b.data()) {
    if (v == 0.0) fail(ErrorCode::domain, "div: division by zero");
  }
  return binary_op(
      "div", a, b, [](double x, double y) { return x / y; },
      [](double x, double y, double g, double& da, double& db) {
        da = g / y;
        db = -g * x / (y * y);
      });
}

// ---- unary ------------------------------------------------------------

Tensor neg(const Tensor& x) {
  return unary_op(
      "neg", x, [](double v) { return -v; }, [](double, double) { return -1.0; });
}

Tensor exp(const Tensor& x) {
  return unary_op(
      "exp", x, [](double v) { return std::exp(v); },
      [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  for (double v : x.data()) {
    if (!(v > 0.0)) fail(ErrorCode::domain, "log: input must be strictly positive");
  }
  return unary_op(
      "log", x, [](double v) { return std::log(v); },
      [](double v, double) { return 1.0 / v; });
}

Tensor relu(const Tensor& x) {
  return unary_op(
      "relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor softplus(const Tensor& x) {
  return unary_op(
      "softplus", x,
      [](double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::fabs(v))); },
      [](double v, double) {
        // sigmoid(v), stable on both tails
        return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                        : std::exp(v) / (1.0 + std::exp(v));
      });
}

Tensor abs(const Tensor& x) {
  return unary_op(
      "abs", x, [](double v) { return std::fabs(v); },
      [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Tensor square(const Tensor& x) {
  return unary_op(
      "square", x, [](double v) { return v * v; },
      [](double v, double) { return 2.0 * v; });
}

Tensor lgamma(const Tensor& x) {
  for (double v : x.data()) {
    if (!(v > 0.0)) fail(ErrorCode::domain, "lgamma: input must be strictly positive");
  }
  return unary_op(
      "lgamma", x, [](double v) { return std::lgamma(v); },
      [](double v, double) { return selb::digamma(v); });
}

Tensor digamma(const Tensor& x) {
  for (double v : x.data()) {
    if (!(v > 0.0)) fail(ErrorCode::domain, "digamma: input must be strictly positive");
  }
  return unary_op(
      "digamma", x, [](double v) { return selb::digamma(v); },
      [](double v, double) { return selb::trigamma(v); });
}

// ---- matmul -----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.shape()[1] != b.shape()[0]) {
    fail(ErrorCode::shape_mismatch,
         "matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
             shape_str(b.shape()));
  }
  std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  std::vector<double> out(m * n, 0.0);
  const auto& ad = a.data();
  const auto& bd = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      double av = ad[i * k + p];
      if (av == 0.0) continue;
      const double* brow = &bd[p * n];
      double* orow = &out[i * n];
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  auto an = a.node();
  auto bn = b.node();
  return detail::make_op("matmul", Shape{m, n}, std::move(out), {a, b},
                         [an, bn, m, k, n](TensorNode& self) {
                           const auto& g = self.grad;
                           if (an->requires_grad) {
                             an->ensure_grad();
                             for (std::size_t i = 0; i < m; ++i) {
                               for (std::size_t p = 0; p < k; ++p) {
                                 double s = 0.0;
                                 for (std::size_t j = 0; j < n; ++j) {
                                   s += g[i * n + j] * bn->data[p * n + j];
                                 }
                                 an->grad[i * k + p] += s;
                               }
                             }
                           }
                           if (bn->requires_grad) {
                             bn->ensure_grad();
                             for (std::size_t p = 0; p < k; ++p) {
                               for (std::size_t j = 0; j < n; ++j) {
                                 double s = 0.0;
                                 for (std::size_t i = 0; i < m; ++i) {
                                   s += an->data[i * k + p] * g[i * n + j];
                                 }
                                 bn->grad[p * n + j] += s;
                               }
                             }
                           }
                         });
}

// ---- conv2d -----------------------------------------------------------

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, std::size_t padding) {
  if (x.ndim() != 4) {
    fail(ErrorCode::shape_mismatch, "conv2d: input must be rank 4, got " + shape_str(x.shape()));
  }
  if (w.ndim() != 4 || w.shape()[2] != w.shape()[3]) {
    fail(ErrorCode::shape_mismatch, "conv2d: kernel must be rank 4 square, got " + shape_str(w.shape()));
  }
  if (x.shape()[1] != w.shape()[1]) {
    fail(ErrorCode::shape_mismatch, "conv2d: channel mismatch between input " +
                                        shape_str(x.shape()) + " and kernel " + shape_str(w.shape()));
  }
  if (bias.ndim() != 1 || bias.shape()[0] != w.shape()[0]) {
    fail(ErrorCode::shape_mismatch, "conv2d: bias " + shape_str(bias.shape()) +
                                        " does not match kernel " + shape_str(w.shape()));
  }
  std::size_t N = x.shape()[0], Ci = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
  std::size_t Co = w.shape()[0], K = w.shape()[2];
  std::size_t Hp = H + 2 * padding, Wp = W + 2 * padding;
  if (K > Hp || K > Wp) {
    fail(ErrorCode::shape_mismatch, "conv2d: kernel larger than padded input");
  }
  std::size_t Ho = Hp - K + 1, Wo = Wp - K + 1;

  std::vector<double> out(N * Co * Ho * Wo, 0.0);
  const auto& xd = x.data();
  const auto& wd = w.data();
  const auto& bd = bias.data();

  auto xat = [&](std::size_t n, std::size_t c, long i, long j) -> double {
    long ii = i - static_cast<long>(padding);
    long jj = j - static_cast<long>(padding);
    if (ii < 0 || jj < 0 || ii >= static_cast<long>(H) || jj >= static_cast<long>(W)) return 0.0;
    return xd[((n * Ci + c) * H + static_cast<std::size_t>(ii)) * W + static_cast<std::size_t>(jj)];
  };

  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t co = 0; co < Co; ++co) {
      for (std::size_t oi = 0; oi < Ho; ++oi) {
        for (std::size_t oj = 0; oj < Wo; ++oj) {
          double s = bd[co];
          for (std::size_t ci = 0; ci < Ci; ++ci) {
            for (std::size_t ki = 0; ki < K; ++ki) {
              for (std::size_t kj = 0; kj < K; ++kj) {
                s += wd[((co * Ci + ci) * K + ki) * K + kj] *
                     xat(n, ci, static_cast<long>(oi + ki), static_cast<long>(oj + kj));
              }
            }
          }
          out[((n * Co + co) * Ho + oi) * Wo + oj] = s;
        }
      }
    }
  }

  auto xn = x.node();
  auto wn = w.node();
  auto bn = bias.node();
  return detail::make_op(
      "conv2d", Shape{N, Co, Ho, Wo}, std::move(out), {x, w, bias},
      [xn, wn, bn, N, Ci, H, W, Co, K, Ho, Wo, padding](TensorNode& self) {
        const auto& g = self.grad;
        bool wx = xn->requires_grad, ww = wn->requires_grad, wb = bn->requires_grad;
        if (wx) xn->ensure_grad();
        if (ww) wn->ensure_grad();
        if (wb) bn->ensure_grad();
        for (std::size_t n = 0; n < N; ++n) {
          for (std::size_t co = 0; co < Co; ++co) {
            for (std::size_t oi = 0; oi < Ho; ++oi) {
              for (std::size_t oj = 0; oj < Wo; ++oj) {
                double gv = g[((n * Co + co) * Ho + oi) * Wo + oj];
                if (gv == 0.0) continue;
                if (wb) bn->grad[co] += gv;
                for (std::size_t ci = 0; ci < Ci; ++ci) {
                  for (std::size_t ki = 0; ki < K; ++ki) {
                    long ii = static_cast<long>(oi + ki) - static_cast<long>(padding);
                    if (ii < 0 || ii >= static_cast<long>(H)) continue;
                    for (std::size_t kj = 0; kj < K; ++kj) {
                      long jj = static_cast<long>(oj + kj) - static_cast<long>(padding);
                      if (jj < 0 || jj >= static_cast<long>(W)) continue;
                      std::size_t xi = ((n * Ci + ci) * H + static_cast<std::size_t>(ii)) * W +
                                       static_cast<std::size_t>(jj);
                      std::size_t wi = ((co * Ci + ci) * K + ki) * K + kj;
                      if (ww) wn->grad[wi] += gv * xn->data[xi];
                      if (wx) xn->grad[xi] += gv * wn->data[wi];
                    }
                  }
                }
              }
            }
          }
        }
      });
}

// ---- maxpool ----------------------------------------------------------

Tensor maxpool2x2(const Tensor& x) {
  if (x.ndim() != 4) {
    fail(ErrorCode::shape_mismatch, "maxpool2x2: input must be rank 4, got " + shape_str(x.shape()));
  }
  std::size_t N = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
  if (H < 2 || W < 2) {
    fail(ErrorCode::shape_mismatch, "maxpool2x2: spatial dims too small in " + shape_str(x.shape()));
  }
  std::size_t Ho = H / 2, Wo = W / 2;
  std::vector<double> out(N * C * Ho * Wo);
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
  const auto& xd = x.data();
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t oi = 0; oi < Ho; ++oi) {
        for (std::size_t oj = 0; oj < Wo; ++oj) {
          std::size_t base = ((n * C + c) * H + 2 * oi) * W + 2 * oj;
          std::size_t best_idx = base;
          double best = xd[base];
          const std::size_t cand[3] = {base + 1, base + W, base + W + 1};
          for (std::size_t t = 0; t < 3; ++t) {
            if (xd[cand[t]] > best) {
              best = xd[cand[t]];
              best_idx = cand[t];
            }
          }
          std::size_t o = ((n * C + c) * Ho + oi) * Wo + oj;
          out[o] = best;
          (*argmax)[o] = best_idx;
        }
      }
    }
  }
  auto xn = x.node();
  return detail::make_op("maxpool2x2", Shape{N, C, Ho, Wo}, std::move(out), {x},
                         [xn, argmax](TensorNode& self) {
                           xn->ensure_grad();
                           for (std::size_t i = 0; i < self.grad.size(); ++i) {
                             xn->grad[(*argmax)[i]] += self.grad[i];
                           }
                         });
}

// ---- reshape / flatten --------------------------------------------------

Tensor reshape(const Tensor& x, const Shape& shape) {
  if (shape_size(shape) != x.size()) {
    fail(ErrorCode::shape_mismatch, "reshape: cannot view " + shape_str(x.shape()) +
                                        " as " + shape_str(shape));
  }
  auto xn = x.node();
  std::vector<double> out = x.data();
  return detail::make_op("reshape", shape, std::move(out), {x},
                         [xn](TensorNode& self) {
                           xn->ensure_grad();
                           for (std::size_t i = 0; i < self.grad.size(); ++i) {
                             xn->grad[i] += self.grad[i];
                           }
                         });
}

Tensor flatten_batch(const Tensor& x) {
  if (x.ndim() < 1) fail(ErrorCode::shape_mismatch, "flatten: input has no dimensions");
  std::size_t n = x.shape()[0];
  std::size_t rest = n == 0 ? 0 : x.size() / n;
  return reshape(x, Shape{n, rest});
}

// ---- reductions ---------------------------------------------------------

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  auto xn = x.node();
  return detail::make_op("sum", Shape{1}, {s}, {x}, [xn](TensorNode& self) {
    xn->ensure_grad();
    double g = self.grad[0];
    for (auto& gv : xn->grad) gv += g;
  });
}

Tensor mean(const Tensor& x) {
  if (x.size() == 0) fail(ErrorCode::shape_mismatch, "mean: empty tensor");
  double s = 0.0;
  for (double v : x.data()) s += v;
  double inv = 1.0 / static_cast<double>(x.size());
  auto xn = x.node();
  return detail::make_op("mean", Shape{1}, {s * inv}, {x}, [xn, inv](TensorNode& self) {
    xn->ensure_grad();
    double g = self.grad[0] * inv;
    for (auto& gv : xn->grad) gv += g;
  });
}

namespace {

// Decompose flat indices around a reduced axis: x index = (outer, axis, inner).
struct AxisPlan {
  std::size_t outer, extent, inner;
};

AxisPlan plan_axis(const char* op, const Shape& shape, std::size_t axis) {
  if (axis >= shape.size()) {
    fail(ErrorCode::shape_mismatch,
         std::string(op) + ": axis " + std::to_string(axis) + " out of range for " + shape_str(shape));
  }
  AxisPlan p{1, shape[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) p.outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) p.inner *= shape[i];
  return p;
}

Shape reduced_shape(const Shape& shape, std::size_t axis, bool keepdim) {
  Shape out = shape;
  if (keepdim) {
    out[axis] = 1;
  } else {
    out.erase(out.begin() + static_cast<long>(axis));
    if (out.empty()) out = Shape{1};
  }
  return out;
}

}  // namespace

Tensor sum_axis(const Tensor& x, std::size_t axis, bool keepdim) {
  auto p = plan_axis("sum_axis", x.shape(), axis);
  std::vector<double> out(p.outer * p.inner, 0.0);
  const auto& xd = x.data();
  for (std::size_t o = 0; o < p.outer; ++o) {
    for (std::size_t a = 0; a < p.extent; ++a) {
      const double* src = &xd[(o * p.extent + a) * p.inner];
      double* dst = &out[o * p.inner];
      for (std::size_t i = 0; i < p.inner; ++i) dst[i] += src[i];
    }
  }
  auto xn = x.node();
  return detail::make_op("sum_axis", reduced_shape(x.shape(), axis, keepdim), std::move(out),
                         {x}, [xn, p](TensorNode& self) {
                           xn->ensure_grad();
                           for (std::size_t o = 0; o < p.outer; ++o) {
                             for (std::size_t a = 0; a < p.extent; ++a) {
                               double* dst = &xn->grad[(o * p.extent + a) * p.inner];
                               const double* src = &self.grad[o * p.inner];
                               for (std::size_t i = 0; i < p.inner; ++i) dst[i] += src[i];
                             }
                           }
                         });
}

Tensor mean_axis(const Tensor& x, std::size_t axis, bool keepdim) {
  auto p = plan_axis("mean_axis", x.shape(), axis);
  if (p.extent == 0) fail(ErrorCode::shape_mismatch, "mean_axis: empty axis");
  return mul(sum_axis(x, axis, keepdim), Tensor::scalar(1.0 / static_cast<double>(p.extent)));
}

// ---- softmax family -------------------------------------------------------

Tensor softmax(const Tensor& x) {
  std::size_t c = row_width(x, "softmax");
  std::size_t rows = x.size() / c;
  std::vector<double> out(x.size());
  const auto& xd = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = &xd[r * c];
    double* o = &out[r * c];
    double m = in[0];
    for (std::size_t j = 1; j < c; ++j) m = std::max(m, in[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      o[j] = std::exp(in[j] - m);
      z += o[j];
    }
    for (std::size_t j = 0; j < c; ++j) o[j] /= z;
  }
  auto xn = x.node();
  return detail::make_op("softmax", x.shape(), std::move(out), {x},
                         [xn, rows, c](TensorNode& self) {
                           xn->ensure_grad();
                           for (std::size_t r = 0; r < rows; ++r) {
                             const double* p = &self.data[r * c];
                             const double* g = &self.grad[r * c];
                             double dot = 0.0;
                             for (std::size_t j = 0; j < c; ++j) dot += g[j] * p[j];
                             for (std::size_t j = 0; j < c; ++j) {
                               xn->grad[r * c + j] += p[j] * (g[j] - dot);
                             }
                           }
                         });
}

Tensor log_softmax(const Tensor& x) {
  std::size_t c = row_width(x, "log_softmax");
  std::size_t rows = x.size() / c;
  std::vector<double> out(x.size());
  const auto& xd = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = &xd[r * c];
    double* o = &out[r * c];
    double m = in[0];
    for (std::size_t j = 1; j < c; ++j) m = std::max(m, in[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(in[j] - m);
    double lz = m + std::log(z);
    for (std::size_t j = 0; j < c; ++j) o[j] = in[j] - lz;
  }
  auto xn = x.node();
  return detail::make_op("log_softmax", x.shape(), std::move(out), {x},
                         [xn, rows, c](TensorNode& self) {
                           xn->ensure_grad();
                           for (std::size_t r = 0; r < rows; ++r) {
                             const double* o = &self.data[r * c];
                             const double* g = &self.grad[r * c];
                             double gs = 0.0;
                             for (std::size_t j = 0; j < c; ++j) gs += g[j];
                             for (std::size_t j = 0; j < c; ++j) {
                               xn->grad[r * c + j] += g[j] - std::exp(o[j]) * gs;
                             }
                           }
                         });
}

// ---- slicing / concat -----------------------------------------------------

Tensor slice_last(const Tensor& x, std::size_t begin, std::size_t end) {
  std::size_t c = row_width(x, "slice_last");
  if (begin >= end || end > c) {
    fail(ErrorCode::shape_mismatch, "slice_last: range [" + std::to_string(begin) + "," +
                                        std::to_string(end) + ") invalid for " +
                                        shape_str(x.shape()));
  }
  std::size_t rows = x.size() / c;
  std::size_t width = end - begin;
  Shape out_shape = x.shape();
  out_shape.back() = width;
  std::vector<double> out(rows * width);
  const auto& xd = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < width; ++j) out[r * width + j] = xd[r * c + begin + j];
  }
  auto xn = x.node();
  return detail::make_op("slice_last", out_shape, std::move(out), {x},
                         [xn, rows, c, begin, width](TensorNode& self) {
                           xn->ensure_grad();
                           for (std::size_t r = 0; r < rows; ++r) {
                             for (std::size_t j = 0; j < width; ++j) {
                               xn->grad[r * c + begin + j] += self.grad[r * width + j];
                             }
                           }
                         });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) fail(ErrorCode::shape_mismatch, "concat: no inputs");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) {
    fail(ErrorCode::shape_mismatch,
         "concat: axis " + std::to_string(axis) + " out of range for " + shape_str(first));
  }
  std::size_t total_axis = 0;
  for (const auto& t : parts) {
    if (t.ndim() != first.size()) {
      fail(ErrorCode::shape_mismatch, "concat: rank mismatch between " + shape_str(first) +
                                          " and " + shape_str(t.shape()));
    }
    for (std::size_t i = 0; i < first.size(); ++i) {
      if (i != axis && t.shape()[i] != first[i]) {
        fail(ErrorCode::shape_mismatch, "concat: shapes " + shape_str(first) + " and " +
                                            shape_str(t.shape()) + " differ off-axis");
      }
    }
    total_axis += t.shape()[axis];
  }
  Shape out_shape = first;
  out_shape[axis] = total_axis;

  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= first[i];
  for (std::size_t i = axis + 1; i < first.size(); ++i) inner *= first[i];

  std::vector<double> out(shape_size(out_shape));
  std::size_t offset = 0;  // in axis units
  struct Piece {
    std::shared_ptr<TensorNode> node;
    std::size_t axis_extent, offset;
  };
  auto pieces = std::make_shared<std::vector<Piece>>();
  for (const auto& t : parts) {
    std::size_t ext = t.shape()[axis];
    const auto& td = t.data();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy(td.begin() + static_cast<long>(o * ext * inner),
                td.begin() + static_cast<long>((o + 1) * ext * inner),
                out.begin() + static_cast<long>((o * total_axis + offset) * inner));
    }
    pieces->push_back({t.node(), ext, offset});
    offset += ext;
  }
  return detail::make_op("concat", out_shape, std::move(out), parts,
                         [pieces, outer, inner, total_axis](TensorNode& self) {
                           for (auto& piece : *pieces) {
                             if (!piece.node->requires_grad) continue;
                             piece.node->ensure_grad();
                             for (std::size_t o = 0; o < outer; ++o) {
                               const double* src =
                                   &self.grad[(o * total_axis + piece.offset) * inner];
                               double* dst = &piece.node->grad[o * piece.axis_extent * inner];
                               for (std::size_t i = 0; i < piece.axis_extent * inner; ++i) {
                                 dst[i] += src[i];
                               }
                             }
                           }
                         });
}

// ---- log|det| -------------------------------------------------------------

Tensor log_abs_det(const Tensor& m, double floor, bool* floored) {
  if (m.ndim() != 2 || m.shape()[0] != m.shape()[1] || m.shape()[0] == 0) {
    fail(ErrorCode::shape_mismatch, "log_abs_det: needs a square matrix, got " + shape_str(m.shape()));
  }
  if (!(floor > 0.0)) fail(ErrorCode::bad_value, "log_abs_det: floor must be positive");
  int n = static_cast<int>(m.shape()[0]);
  std::vector<double> lu = m.data();
  std::vector<int> piv;
  int sign = 1;
  bool ok = lu_factor(lu, piv, n, sign);
  double log_abs = 0.0;
  if (ok) {
    for (int i = 0; i < n; ++i) {
      log_abs += std::log(std::fabs(lu[static_cast<std::size_t>(i * n + i)]));
    }
  }
  bool clamped = !ok || !(log_abs > std::log(floor));
  if (floored) *floored = clamped;
  double value = clamped ? std::log(floor) : log_abs;

  auto mn = m.node();
  auto lu_ptr = std::make_shared<std::vector<double>>(std::move(lu));
  auto piv_ptr = std::make_shared<std::vector<int>>(std::move(piv));
  return detail::make_op("log_abs_det", Shape{1}, {value}, {m},
                         [mn, lu_ptr, piv_ptr, n, clamped](TensorNode& self) {
                           if (clamped) return;  // flat region: zero gradient
                           // d log|det M| / dM = (M^-1)^T
                           auto inv = lu_inverse(*lu_ptr, *piv_ptr, n);
                           mn->ensure_grad();
                           double g = self.grad[0];
                           for (int i = 0; i < n; ++i) {
                             for (int j = 0; j < n; ++j) {
                               mn->grad[static_cast<std::size_t>(i * n + j)] +=
                                   g * inv[static_cast<std::size_t>(j * n + i)];
                             }
                           }
                         });
}

}  // namespace selb
