#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "apot/levels.hpp"

namespace apot {

/// Mean-squared quantization error split into clipping and projection parts.
struct ErrorDecomposition {
  double delta_clip = 0.0;
  double delta_proj = 0.0;
  double delta = 0.0;
  std::size_t clipped = 0;
};

/// Errors of quantizing `w` with threshold alpha on `unit_levels` (alpha = 1):
///   delta_clip = (1/I) sum_{clipped} (w - clip(w))^2
///   delta_proj = (1/I) sum_{inside}  (w - w^)^2
///   delta      = (1/I) sum_all      (w - w^)^2, accumulated independently.
ErrorDecomposition error_decompose(std::span<const double> w, double alpha,
                                   const LevelSet& unit_levels);

struct QemPoint {
  double alpha = 0.0;
  ErrorDecomposition error;
};

struct QemResult {
  double best_alpha = 0.0;
  double best_delta = 0.0;
  std::vector<QemPoint> curve;
};

/// `points` log-spaced thresholds in [0.1 * std(w), max|w|].
std::vector<double> default_alpha_grid(std::span<const double> w, std::size_t points = 512);

/// Threshold minimizing the total error over `grid` (first minimizer wins).
/// Grid points are evaluated in parallel.
QemResult qem_search(std::span<const double> w, const LevelSet& unit_levels,
                     std::span<const double> grid);

struct LloydResult {
  std::vector<double> levels;       // sorted
  std::vector<double> mse_history;  // after each iteration, non-increasing
  double mse = 0.0;
  int iterations = 0;
};

/// Lloyd-Max scalar quantizer: quantile initialization, then alternating
/// nearest-level assignment and centroid update until the relative MSE gain is
/// below `tol` or `max_iters` is reached. An empty cell is re-seeded at the
/// sample with the largest current error.
LloydResult lloyd_levels(std::span<const double> w, std::size_t num_levels, int max_iters = 200,
                         double tol = 1e-10);

/// Mean squared distance from each sample to its nearest level.
double nearest_level_mse(std::span<const double> w, std::span<const double> levels);

struct ClipPoint {
  double alpha = 0.0;
  double ratio = 0.0;
};

/// Fraction of |w_i| > alpha for each alpha in the grid.
std::vector<ClipPoint> clipping_ratio_curve(std::span<const double> w,
                                            std::span<const double> grid);

/// Steepest drop of the ratio between consecutive grid points, per unit alpha.
double max_clipping_slope(std::span<const ClipPoint> curve);

/// Linearly spaced grid over (0, upper]: upper * (i + 1) / points.
std::vector<double> linear_grid(double upper, std::size_t points);

}  // namespace apot
