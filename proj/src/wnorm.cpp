#include "apot/wnorm.hpp"

#include <cmath>

#include "apot/errors.hpp"

namespace apot {

namespace {

NormStats compute_stats(std::span<const double> w, double eps) {
  if (w.size() < 2) throw InputError("normalize: need at least 2 elements");
  if (!(eps > 0.0)) throw ConfigError("normalize: eps must be positive");
  NormStats s;
  s.eps = eps;
  s.count = w.size();
  double sum = 0.0;
  for (double v : w) {
    if (!std::isfinite(v)) throw InputError("normalize: non-finite input");
    sum += v;
  }
  s.mu = sum / static_cast<double>(w.size());
  double sq = 0.0;
  for (double v : w) sq += (v - s.mu) * (v - s.mu);
  s.sigma = std::sqrt(sq / static_cast<double>(w.size()));
  return s;
}

}  // namespace

Normalized normalize(std::span<const double> w, double eps) {
  Normalized out;
  out.stats = compute_stats(w, eps);
  const double denom = out.stats.sigma + out.stats.eps;
  out.values.resize(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) out.values[i] = (w[i] - out.stats.mu) / denom;
  return out;
}

std::vector<double> normalize_backward(std::span<const double> w, std::span<const double> upstream,
                                       double eps) {
  if (w.size() != upstream.size()) throw InputError("normalize_backward: shape mismatch");
  const NormStats s = compute_stats(w, eps);
  const double n = static_cast<double>(w.size());
  const double denom = s.sigma + s.eps;

  double sum_u = 0.0;
  double sum_ux = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    sum_u += upstream[i];
    sum_ux += upstream[i] * (w[i] - s.mu);
  }
  const double mean_u = sum_u / n;
  // d sigma / d w_j = (w_j - mu) / (I sigma)
  const double radial = s.sigma > 0.0 ? sum_ux / (denom * denom * n * s.sigma) : 0.0;

  std::vector<double> g(w.size());
  for (std::size_t j = 0; j < w.size(); ++j) {
    g[j] = (upstream[j] - mean_u) / denom - radial * (w[j] - s.mu);
  }
  return g;
}

}  // namespace apot
