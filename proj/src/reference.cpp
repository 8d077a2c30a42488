#include "apot/reference.hpp"

#include <algorithm>
#include <cmath>

#include "apot/errors.hpp"

namespace apot::reference {

std::size_t project_index(double x, const LevelSet& ls) {
  if (!std::isfinite(x)) throw InputError("reference projection: non-finite input");
  std::size_t best = 0;
  double best_d = std::abs(x - ls.level(0));
  for (std::size_t i = 1; i < ls.size(); ++i) {
    const double d = std::abs(x - ls.level(i));
    if (d < best_d || (d == best_d && std::abs(ls.level(i)) < std::abs(ls.level(best)))) {
      best = i;
      best_d = d;
    }
  }
  return best;
}

std::vector<std::uint32_t> project_indices(std::span<const double> x, const LevelSet& ls) {
  std::vector<std::uint32_t> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = static_cast<std::uint32_t>(project_index(x[i], ls));
  return out;
}

std::vector<Wide> matvec(std::span<const std::uint32_t> weights, std::size_t rows,
                         std::size_t cols, const LevelSet& ls,
                         std::span<const std::uint64_t> act_raw) {
  if (weights.size() != rows * cols || act_raw.size() != cols) {
    throw InputError("reference matvec: shape mismatch");
  }
  std::vector<Wide> out(rows, 0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      out[r] += static_cast<Wide>(ls.numerator(weights[r * cols + c])) * static_cast<Wide>(act_raw[c]);
    }
  }
  return out;
}

std::vector<double> qem_curve(std::span<const double> w, const LevelSet& unit_levels,
                              std::span<const double> grid) {
  if (w.empty()) throw InputError("reference qem: empty input");
  const double lo = unit_levels.levels().front();
  const double hi = unit_levels.levels().back();
  std::vector<double> out;
  out.reserve(grid.size());
  for (double alpha : grid) {
    double sse = 0.0;
    for (double v : w) {
      const double r = std::clamp(v / alpha, lo, hi);
      const double q = alpha * unit_levels.level(project_index(r, unit_levels));
      sse += (v - q) * (v - q);
    }
    out.push_back(sse / static_cast<double>(w.size()));
  }
  return out;
}

}  // namespace apot::reference
