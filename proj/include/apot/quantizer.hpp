#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "apot/levels.hpp"
#include "apot/rcf.hpp"
#include "apot/wnorm.hpp"

namespace apot {

/// Bit-widths at or above this value mean "keep the tensor in full precision".
inline constexpr int kFullPrecisionBits = 32;

struct QuantConfig {
  int weight_bits = 4;  // signed, sign bit included
  int act_bits = 4;     // unsigned
  int base_bits = 2;
  double alpha_w = 3.0;
  double alpha_x = 8.0;
  SchemeKind scheme = SchemeKind::APoT;
  SteMode ste = SteMode::Clipped;
  double eps = kDefaultNormEps;
  bool normalize_weights = true;
  /// false replaces the level projection by the identity (clip only). The
  /// backward pass is then the exact gradient of the forward, which is what
  /// finite-difference checks of W need.
  bool project_levels = true;

  bool weights_full_precision() const { return weight_bits >= kFullPrecisionBits; }
  bool acts_full_precision() const { return act_bits >= kFullPrecisionBits; }
  /// Throws ConfigError for thresholds <= 0 or unsupported bit/scheme pairs.
  void validate() const;
};

/// alpha = 1 level sets used by RCF. Two-bit weights always get the ternary
/// set {-1, 0, 1}.
LevelSet weight_unit_levels(const QuantConfig& cfg);
LevelSet activation_unit_levels(const QuantConfig& cfg);

/// Everything the weight backward pass needs. Treat as opaque.
struct WeightCache {
  bool valid = false;
  bool normalized = false;
  double alpha = 0.0;
  double eps = kDefaultNormEps;
  std::vector<double> w;       // raw weights
  std::vector<double> w_norm;  // input to RCF
  NormStats stats;
  std::vector<std::uint32_t> unit_indices;
  RcfGradient rcf;
};

struct ActivationCache {
  bool valid = false;
  double alpha = 0.0;
  std::vector<std::uint32_t> unit_indices;
  RcfGradient rcf;
};

struct WeightQuant {
  std::vector<double> w_hat;
  WeightCache cache;
};

struct ActivationQuant {
  std::vector<double> x_hat;
  ActivationCache cache;
};

/// Normalize (optional), then alpha_w * project(clip(w~/alpha_w, +-1)).
WeightQuant quantize_weights(std::span<const double> w, const QuantConfig& cfg);

/// alpha_x * project(clip(x/alpha_x, 0..1)) on the unsigned set. x must be
/// non-negative.
ActivationQuant quantize_activations(std::span<const double> x, const QuantConfig& cfg);

struct QuantLayerGrads {
  std::vector<double> g_w;
  std::vector<double> g_x;
  double g_alpha_w = 0.0;
  double g_alpha_x = 0.0;
};

struct WeightGrads {
  std::vector<double> g_w;
  double g_alpha = 0.0;
};

struct ActivationGrads {
  std::vector<double> g_x;
  double g_alpha = 0.0;
};

WeightGrads backward_weights(const WeightCache& cache, std::span<const double> upstream);
ActivationGrads backward_activations(const ActivationCache& cache,
                                     std::span<const double> upstream);

/// Chains dL/dW^ and dL/dX^ back to dL/dW, dL/dX, dL/dalpha_w, dL/dalpha_x.
QuantLayerGrads backward(const WeightCache& wc, const ActivationCache& ac,
                         std::span<const double> g_w_hat, std::span<const double> g_x_hat);

}  // namespace apot
