#pragma once

namespace selb {

// Digamma (derivative of lgamma) for x > 0. Recurrence into the asymptotic
// region followed by the standard Bernoulli series; accurate to ~1e-12 for
// the argument ranges produced by the losses here (x >= 1).
double digamma(double x);

// Trigamma (derivative of digamma) for x > 0.
double trigamma(double x);

}  // namespace selb
