#include "apot/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "apot/errors.hpp"
#include "apot/rcf.hpp"

namespace apot {

ErrorDecomposition error_decompose(std::span<const double> w, double alpha,
                                   const LevelSet& unit_levels) {
  if (w.empty()) throw InputError("error_decompose: empty input");
  const std::vector<double> w_hat = rcf_forward(w, alpha, unit_levels);
  const double lo = alpha * unit_levels.levels().front();
  const double hi = alpha * unit_levels.levels().back();

  ErrorDecomposition out;
  double clip_sum = 0.0;
  double proj_sum = 0.0;
  double total_sum = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double full = (w[i] - w_hat[i]) * (w[i] - w_hat[i]);
    total_sum += full;
    const double r = w[i] / alpha;
    if (r > unit_levels.levels().back() || r < unit_levels.levels().front()) {
      const double edge = r > 0.0 ? hi : lo;
      clip_sum += (w[i] - edge) * (w[i] - edge);
      ++out.clipped;
    } else {
      proj_sum += full;
    }
  }
  const double n = static_cast<double>(w.size());
  out.delta_clip = clip_sum / n;
  out.delta_proj = proj_sum / n;
  out.delta = total_sum / n;
  return out;
}

std::vector<double> default_alpha_grid(std::span<const double> w, std::size_t points) {
  if (w.empty()) throw InputError("alpha grid: empty input");
  if (points < 2) throw ConfigError("alpha grid: need at least 2 points");
  const double n = static_cast<double>(w.size());
  const double mean = std::accumulate(w.begin(), w.end(), 0.0) / n;
  double sq = 0.0;
  double max_abs = 0.0;
  for (double v : w) {
    sq += (v - mean) * (v - mean);
    max_abs = std::max(max_abs, std::abs(v));
  }
  const double std_dev = std::sqrt(sq / n);
  if (!(max_abs > 0.0)) throw InputError("alpha grid: all-zero input");
  double lo = 0.1 * std_dev;
  if (!(lo > 0.0) || lo >= max_abs) lo = 0.1 * max_abs;
  std::vector<double> grid(points);
  const double log_lo = std::log(lo);
  const double log_hi = std::log(max_abs);
  for (std::size_t i = 0; i < points; ++i) {
    const double t = static_cast<double>(i) / static_cast<double>(points - 1);
    grid[i] = std::exp(log_lo + t * (log_hi - log_lo));
  }
  grid.back() = max_abs;
  return grid;
}

QemResult qem_search(std::span<const double> w, const LevelSet& unit_levels,
                     std::span<const double> grid) {
  if (w.empty()) throw InputError("qem_search: empty input");
  if (grid.empty()) throw ConfigError("qem_search: empty alpha grid");
  for (double a : grid) {
    if (!(a > 0.0) || !std::isfinite(a)) throw ConfigError("qem_search: grid must be positive");
  }
  QemResult out;
  out.curve.resize(grid.size());
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(grid.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    out.curve[i] = {grid[i], error_decompose(w, grid[i], unit_levels)};
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < out.curve.size(); ++i) {
    if (out.curve[i].error.delta < out.curve[best].error.delta) best = i;
  }
  out.best_alpha = out.curve[best].alpha;
  out.best_delta = out.curve[best].error.delta;
  return out;
}

namespace {

// Sorted samples with prefix sums so each cell's mean is O(1) once its index
// range is known.
struct SortedSample {
  std::vector<double> x;
  std::vector<double> s1;  // size n + 1

  explicit SortedSample(std::span<const double> w) : x(w.begin(), w.end()) {
    std::sort(x.begin(), x.end());
    s1.assign(x.size() + 1, 0.0);
    for (std::size_t i = 0; i < x.size(); ++i) s1[i + 1] = s1[i] + x[i];
  }
};

// Cell boundaries (as sample indices) for nearest-level assignment of sorted
// levels: cell j owns [start[j], start[j + 1]).
std::vector<std::size_t> cell_starts(const SortedSample& s, std::span<const double> levels) {
  std::vector<std::size_t> start(levels.size() + 1);
  start[0] = 0;
  for (std::size_t j = 1; j < levels.size(); ++j) {
    const double mid = 0.5 * (levels[j - 1] + levels[j]);
    // Ties go to the lower cell.
    start[j] = static_cast<std::size_t>(std::upper_bound(s.x.begin(), s.x.end(), mid) - s.x.begin());
  }
  start[levels.size()] = s.x.size();
  return start;
}

double cells_mse(const SortedSample& s, std::span<const double> levels) {
  const auto start = cell_starts(s, levels);
  double sse = 0.0;
  for (std::size_t j = 0; j < levels.size(); ++j) {
    for (std::size_t i = start[j]; i < start[j + 1]; ++i) {
      const double d = s.x[i] - levels[j];
      sse += d * d;
    }
  }
  return sse / static_cast<double>(s.x.size());
}

}  // namespace

double nearest_level_mse(std::span<const double> w, std::span<const double> levels) {
  if (w.empty() || levels.empty()) throw InputError("nearest_level_mse: empty input");
  std::vector<double> sorted_levels(levels.begin(), levels.end());
  std::sort(sorted_levels.begin(), sorted_levels.end());
  return cells_mse(SortedSample(w), sorted_levels);
}

LloydResult lloyd_levels(std::span<const double> w, std::size_t num_levels, int max_iters,
                         double tol) {
  if (num_levels < 2) throw ConfigError("lloyd: need at least 2 levels");
  if (w.empty()) throw InputError("lloyd: empty input");
  for (double v : w) {
    if (!std::isfinite(v)) throw InputError("lloyd: non-finite input");
  }
  const SortedSample s(w);
  {
    std::vector<double> u = s.x;
    const auto end = std::unique(u.begin(), u.end());
    if (static_cast<std::size_t>(end - u.begin()) < num_levels) {
      throw InputError("lloyd: fewer distinct samples than levels");
    }
  }

  const std::size_t n = s.x.size();
  LloydResult out;
  out.levels.resize(num_levels);
  for (std::size_t j = 0; j < num_levels; ++j) {
    const double q = (static_cast<double>(j) + 0.5) / static_cast<double>(num_levels);
    out.levels[j] = s.x[std::min(n - 1, static_cast<std::size_t>(q * static_cast<double>(n)))];
  }
  // Quantile picks can coincide on repeated samples; spread duplicates onto
  // unused distinct sample values.
  std::sort(out.levels.begin(), out.levels.end());
  for (std::size_t j = 1; j < num_levels; ++j) {
    if (out.levels[j] <= out.levels[j - 1]) {
      auto it = std::upper_bound(s.x.begin(), s.x.end(), out.levels[j - 1]);
      if (it != s.x.end()) out.levels[j] = *it;
    }
  }
  std::sort(out.levels.begin(), out.levels.end());

  double prev = cells_mse(s, out.levels);
  for (int iter = 0; iter < max_iters; ++iter) {
    const std::vector<double> before = out.levels;
    const auto start = cell_starts(s, out.levels);
    std::vector<std::size_t> empty;
    for (std::size_t j = 0; j < num_levels; ++j) {
      const std::size_t a = start[j];
      const std::size_t b = start[j + 1];
      if (a == b) {
        empty.push_back(j);
        continue;
      }
      out.levels[j] = (s.s1[b] - s.s1[a]) / static_cast<double>(b - a);
    }
    for (std::size_t j : empty) {
      // Largest-error sample under the current levels.
      std::size_t worst = 0;
      double worst_err = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (double l : out.levels) best = std::min(best, std::abs(s.x[i] - l));
        if (best > worst_err) {
          worst_err = best;
          worst = i;
        }
      }
      out.levels[j] = s.x[worst];
    }
    std::sort(out.levels.begin(), out.levels.end());
    const double cur = cells_mse(s, out.levels);
    if (cur > prev) {
      // Rounding noise at the fixed point; keep the better levels.
      out.levels = before;
      break;
    }
    out.mse_history.push_back(cur);
    out.iterations = iter + 1;
    const bool converged = cur == 0.0 || (prev - cur) <= tol * prev;
    prev = cur;
    if (converged) break;
  }
  out.mse = prev;
  return out;
}

std::vector<ClipPoint> clipping_ratio_curve(std::span<const double> w,
                                            std::span<const double> grid) {
  if (w.empty()) throw InputError("clipping_ratio_curve: empty input");
  std::vector<double> mags(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) mags[i] = std::abs(w[i]);
  std::sort(mags.begin(), mags.end());
  std::vector<ClipPoint> out(grid.size());
  const double n = static_cast<double>(w.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto above = mags.end() - std::upper_bound(mags.begin(), mags.end(), grid[i]);
    out[i] = {grid[i], static_cast<double>(above) / n};
  }
  return out;
}

double max_clipping_slope(std::span<const ClipPoint> curve) {
  double slope = 0.0;
  for (std::size_t i = 1; i < curve.size(); ++i) {
    const double da = curve[i].alpha - curve[i - 1].alpha;
    if (da <= 0.0) continue;
    slope = std::max(slope, (curve[i - 1].ratio - curve[i].ratio) / da);
  }
  return slope;
}

std::vector<double> linear_grid(double upper, std::size_t points) {
  if (!(upper > 0.0) || points == 0) throw ConfigError("linear_grid: need upper > 0 and points > 0");
  std::vector<double> grid(points);
  for (std::size_t i = 0; i < points; ++i) {
    grid[i] = upper * static_cast<double>(i + 1) / static_cast<double>(points);
  }
  return grid;
}

}  // namespace apot
