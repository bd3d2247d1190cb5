#include "selb/special.hpp"

#include <cmath>

#include "selb/error.hpp"

namespace selb {

double digamma(double x) {
  if (!(x > 0.0)) fail(ErrorCode::domain, "digamma: argument must be positive");
  double result = 0.0;
  while (x < 10.0) {
    result -= 1.0 / x;
    x += 1.0;
  }
  double inv = 1.0 / x;
  double inv2 = inv * inv;
  // psi(x) ~ ln x - 1/(2x) - sum B_2n / (2n x^2n); truncation error at
  // x >= 10 is below 1e-15 of the result.
  result += std::log(x) - 0.5 * inv -
            inv2 * (1.0 / 12.0 -
                    inv2 * (1.0 / 120.0 -
                            inv2 * (1.0 / 252.0 -
                                    inv2 * (1.0 / 240.0 -
                                            inv2 * (1.0 / 132.0 -
                                                    inv2 * (691.0 / 32760.0 -
                                                            inv2 * (1.0 / 12.0)))))));
  return result;
}

double trigamma(double x) {
  if (!(x > 0.0)) fail(ErrorCode::domain, "trigamma: argument must be positive");
  double result = 0.0;
  while (x < 10.0) {
    result += 1.0 / (x * x);
    x += 1.0;
  }
  double inv = 1.0 / x;
  double inv2 = inv * inv;
  // psi1(x) ~ 1/x + 1/(2x^2) + sum B_2n / x^(2n+1)
  result += inv * (1.0 + 0.5 * inv +
                   inv2 * (1.0 / 6.0 -
                           inv2 * (1.0 / 30.0 -
                                   inv2 * (1.0 / 42.0 -
                                           inv2 * (1.0 / 30.0 -
                                                   inv2 * (5.0 / 66.0 -
                                                           inv2 * (691.0 / 2730.0 -
                                                                   inv2 * (7.0 / 6.0))))))));
  return result;
}

}  // namespace selb
