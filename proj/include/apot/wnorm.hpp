#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace apot {

inline constexpr double kDefaultNormEps = 1e-5;

struct NormStats {
  double mu = 0.0;
  double sigma = 0.0;  // population standard deviation (divisor I)
  double eps = kDefaultNormEps;
  std::size_t count = 0;
};

struct Normalized {
  std::vector<double> values;
  NormStats stats;
};

/// Per-layer standardization (w - mu) / (sigma + eps). Requires at least two
/// elements. Sums run in index order.
Normalized normalize(std::span<const double> w, double eps = kDefaultNormEps);

/// Vector-Jacobian product of normalize() at w: gradient w.r.t. w given the
/// gradient w.r.t. the normalized values. mu and sigma are differentiated
/// through. When sigma == 0 the sigma path contributes nothing.
std::vector<double> normalize_backward(std::span<const double> w, std::span<const double> upstream,
                                       double eps = kDefaultNormEps);

}  // namespace apot
