#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "apot/levels.hpp"

namespace apot {

/// How the straight-through estimator treats clipped elements.
///   Clipped: dW^/dW~ = 1 inside the clip range, 0 outside (default).
///   Full:    dW^/dW~ = 1 everywhere.
enum class SteMode { Clipped, Full };

std::string to_string(SteMode mode);
SteMode parse_ste_mode(const std::string& name);

/// Per-element derivatives of the reparameterized clipping function.
struct RcfGradient {
  std::vector<double> d_alpha;
  std::vector<double> d_w;
  std::vector<std::uint8_t> clipped_mask;

  std::size_t clipped_count() const;
};

/// alpha * project(clip(w / alpha), unit_levels) for every element.
/// unit_levels must have alpha = 1. Clipping is to [min, max] of the unit set,
/// i.e. [-1, 1] for signed sets and [0, 1] for unsigned ones.
std::vector<double> rcf_forward(std::span<const double> w, double alpha,
                                const LevelSet& unit_levels);

/// Same as rcf_forward but also returns the unit-level index per element.
void rcf_forward_indices(std::span<const double> w, double alpha, const LevelSet& unit_levels,
                         std::span<double> out, std::span<std::uint32_t> indices);

/// dW^/dalpha per element: the clip bound (sign(w) for signed sets) when w lies
/// outside [-alpha, alpha], else project(w/alpha) - w/alpha. |w| = alpha counts
/// as inside.
RcfGradient rcf_grad_alpha(std::span<const double> w, double alpha, const LevelSet& unit_levels,
                           SteMode ste = SteMode::Clipped);

/// Baseline clipping gradient that ignores projection: sign(w) if |w| > alpha
/// else 0.
std::vector<double> pact_grad_alpha(std::span<const double> w, double alpha);

/// Sum of upstream[i] * d_alpha[i] in index order.
double reduce_alpha_grad(std::span<const double> upstream, std::span<const double> d_alpha);

}  // namespace apot
