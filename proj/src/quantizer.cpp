#include "apot/quantizer.hpp"

#include <algorithm>
#include <cmath>

#include "apot/errors.hpp"

namespace apot {

namespace {

void clip_only(std::span<const double> v, double alpha, const LevelSet& unit,
               std::vector<double>& out) {
  const double lo = unit.levels().front();
  const double hi = unit.levels().back();
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = alpha * std::clamp(v[i] / alpha, lo, hi);
}

}  // namespace

void QuantConfig::validate() const {
  if (!(alpha_w > 0.0) || !std::isfinite(alpha_w)) {
    throw ConfigError("alpha_w must be positive and finite");
  }
  if (!(alpha_x > 0.0) || !std::isfinite(alpha_x)) {
    throw ConfigError("alpha_x must be positive and finite");
  }
  if (!(eps > 0.0)) throw ConfigError("eps must be positive");
  if (!weights_full_precision()) (void)weight_unit_levels(*this);
  if (!acts_full_precision()) (void)activation_unit_levels(*this);
}

LevelSet weight_unit_levels(const QuantConfig& cfg) {
  if (cfg.weight_bits == 2) return build_uniform(1.0, 2, true);
  return build_levels(cfg.scheme, 1.0, cfg.weight_bits, cfg.base_bits, true);
}

LevelSet activation_unit_levels(const QuantConfig& cfg) {
  return build_levels(cfg.scheme, 1.0, cfg.act_bits, cfg.base_bits, false);
}

WeightQuant quantize_weights(std::span<const double> w, const QuantConfig& cfg) {
  WeightQuant out;
  WeightCache& c = out.cache;
  c.alpha = cfg.alpha_w;
  c.eps = cfg.eps;
  c.w.assign(w.begin(), w.end());
  c.normalized = cfg.normalize_weights;
  if (cfg.normalize_weights) {
    Normalized n = normalize(w, cfg.eps);
    c.w_norm = std::move(n.values);
    c.stats = n.stats;
  } else {
    c.w_norm = c.w;
  }

  if (cfg.weights_full_precision()) {
    out.w_hat = c.w_norm;
    c.rcf.d_alpha.assign(w.size(), 0.0);
    c.rcf.d_w.assign(w.size(), 1.0);
    c.rcf.clipped_mask.assign(w.size(), 0);
  } else {
    const LevelSet unit = weight_unit_levels(cfg);
    out.w_hat.resize(w.size());
    c.unit_indices.resize(w.size());
    rcf_forward_indices(c.w_norm, cfg.alpha_w, unit, out.w_hat, c.unit_indices);
    if (!cfg.project_levels) clip_only(c.w_norm, cfg.alpha_w, unit, out.w_hat);
    c.rcf = rcf_grad_alpha(c.w_norm, cfg.alpha_w, unit, cfg.ste);
  }
  c.valid = true;
  return out;
}

ActivationQuant quantize_activations(std::span<const double> x, const QuantConfig& cfg) {
  for (double v : x) {
    if (!(v >= 0.0)) {
      throw InputError("quantize_activations: activations must be non-negative and finite");
    }
  }
  ActivationQuant out;
  ActivationCache& c = out.cache;
  c.alpha = cfg.alpha_x;
  if (cfg.acts_full_precision()) {
    out.x_hat.assign(x.begin(), x.end());
    c.rcf.d_alpha.assign(x.size(), 0.0);
    c.rcf.d_w.assign(x.size(), 1.0);
    c.rcf.clipped_mask.assign(x.size(), 0);
  } else {
    const LevelSet unit = activation_unit_levels(cfg);
    out.x_hat.resize(x.size());
    c.unit_indices.resize(x.size());
    rcf_forward_indices(x, cfg.alpha_x, unit, out.x_hat, c.unit_indices);
    if (!cfg.project_levels) clip_only(x, cfg.alpha_x, unit, out.x_hat);
    c.rcf = rcf_grad_alpha(x, cfg.alpha_x, unit, cfg.ste);
  }
  c.valid = true;
  return out;
}

WeightGrads backward_weights(const WeightCache& cache, std::span<const double> upstream) {
  if (!cache.valid) throw UsageError("backward: weight cache is empty or stale");
  if (upstream.size() != cache.w.size()) {
    throw UsageError("backward: upstream gradient does not match the cached weights");
  }
  WeightGrads g;
  std::vector<double> g_norm(upstream.size());
  for (std::size_t i = 0; i < upstream.size(); ++i) g_norm[i] = upstream[i] * cache.rcf.d_w[i];
  g.g_alpha = reduce_alpha_grad(upstream, cache.rcf.d_alpha);
  g.g_w = cache.normalized ? normalize_backward(cache.w, g_norm, cache.eps) : std::move(g_norm);
  return g;
}

ActivationGrads backward_activations(const ActivationCache& cache,
                                     std::span<const double> upstream) {
  if (!cache.valid) throw UsageError("backward: activation cache is empty or stale");
  if (upstream.size() != cache.rcf.d_w.size()) {
    throw UsageError("backward: upstream gradient does not match the cached activations");
  }
  ActivationGrads g;
  g.g_x.resize(upstream.size());
  for (std::size_t i = 0; i < upstream.size(); ++i) g.g_x[i] = upstream[i] * cache.rcf.d_w[i];
  g.g_alpha = reduce_alpha_grad(upstream, cache.rcf.d_alpha);
  return g;
}

QuantLayerGrads backward(const WeightCache& wc, const ActivationCache& ac,
                         std::span<const double> g_w_hat, std::span<const double> g_x_hat) {
  WeightGrads wg = backward_weights(wc, g_w_hat);
  ActivationGrads ag = backward_activations(ac, g_x_hat);
  QuantLayerGrads out;
  out.g_w = std::move(wg.g_w);
  out.g_alpha_w = wg.g_alpha;
  out.g_x = std::move(ag.g_x);
  out.g_alpha_x = ag.g_alpha;
  return out;
}

}  // namespace apot
