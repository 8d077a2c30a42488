#pragma once

// Serial, deliberately naive versions of the parallel kernels. Tests use them
// as oracles and the benchmark times the parallel code against them.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "apot/levels.hpp"
#include "apot/shiftadd.hpp"

namespace apot::reference {

/// Linear scan over all levels; ties go to the smaller magnitude.
std::size_t project_index(double x, const LevelSet& ls);
std::vector<std::uint32_t> project_indices(std::span<const double> x, const LevelSet& ls);

/// Same contract as apot::shiftadd_matvec: one row at a time, products formed
/// as integer numerator * raw code rather than by shifting.
std::vector<Wide> matvec(std::span<const std::uint32_t> weights, std::size_t rows,
                         std::size_t cols, const LevelSet& ls,
                         std::span<const std::uint64_t> act_raw);

/// Mean squared quantization error alpha * Pi(clip(w / alpha)) for every
/// alpha in `grid`, evaluated one alpha at a time.
std::vector<double> qem_curve(std::span<const double> w, const LevelSet& unit_levels,
                              std::span<const double> grid);

}  // namespace apot::reference
