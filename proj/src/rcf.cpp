#include "apot/rcf.hpp"

#include <cmath>

#include "apot/errors.hpp"

namespace apot {

namespace {

void check_inputs(double alpha, const LevelSet& unit_levels) {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) {
    throw ConfigError("rcf: alpha must be positive and finite");
  }
  if (unit_levels.alpha() != 1.0) {
    throw ConfigError("rcf: level set must be built with alpha = 1, got " +
                      unit_levels.describe());
  }
}

}  // namespace

std::string to_string(SteMode mode) { return mode == SteMode::Full ? "full" : "clipped"; }

SteMode parse_ste_mode(const std::string& name) {
  if (name == "clipped") return SteMode::Clipped;
  if (name == "full") return SteMode::Full;
  throw ConfigError("unknown STE mode '" + name + "' (expected full or clipped)");
}

std::size_t RcfGradient::clipped_count() const {
  std::size_t n = 0;
  for (auto c : clipped_mask) n += c;
  return n;
}

void rcf_forward_indices(std::span<const double> w, double alpha, const LevelSet& unit_levels,
                         std::span<double> out, std::span<std::uint32_t> indices) {
  check_inputs(alpha, unit_levels);
  if (out.size() != w.size() || indices.size() != w.size()) {
    throw InputError("rcf_forward: output size mismatch");
  }
  const auto unit = unit_levels.levels();
  const double lo = unit.front();
  const double hi = unit.back();
  const std::ptrdiff_t count = static_cast<std::ptrdiff_t>(w.size());
  bool bad = false;
#pragma omp parallel for schedule(static) reduction(|| : bad)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    if (!std::isfinite(w[i])) {
      bad = true;
      continue;
    }
    double r = w[i] / alpha;
    r = r > hi ? hi : (r < lo ? lo : r);
    const Projection p = project(r, unit_levels);
    indices[i] = static_cast<std::uint32_t>(p.index);
    out[i] = alpha * p.level;
  }
  if (bad) throw InputError("rcf_forward: non-finite input");
}

std::vector<double> rcf_forward(std::span<const double> w, double alpha,
                                const LevelSet& unit_levels) {
  std::vector<double> out(w.size());
  std::vector<std::uint32_t> idx(w.size());
  rcf_forward_indices(w, alpha, unit_levels, out, idx);
  return out;
}

RcfGradient rcf_grad_alpha(std::span<const double> w, double alpha, const LevelSet& unit_levels,
                           SteMode ste) {
  check_inputs(alpha, unit_levels);
  RcfGradient g;
  g.d_alpha.resize(w.size());
  g.d_w.resize(w.size());
  g.clipped_mask.resize(w.size());
  const double lo = unit_levels.levels().front();
  const double hi = unit_levels.levels().back();
  const std::ptrdiff_t count = static_cast<std::ptrdiff_t>(w.size());
  bool bad = false;
#pragma omp parallel for schedule(static) reduction(|| : bad)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    if (!std::isfinite(w[i])) {
      bad = true;
      continue;
    }
    const double r = w[i] / alpha;
    if (r > hi || r < lo) {
      // d(alpha * bound)/d(alpha) = bound, i.e. sign(w) for signed sets.
      g.d_alpha[i] = r > hi ? hi : lo;
      g.d_w[i] = ste == SteMode::Full ? 1.0 : 0.0;
      g.clipped_mask[i] = 1;
    } else {
      g.d_alpha[i] = project(r, unit_levels).level - r;
      g.d_w[i] = 1.0;
      g.clipped_mask[i] = 0;
    }
  }
  if (bad) throw InputError("rcf_grad_alpha: non-finite input");
  return g;
}

std::vector<double> pact_grad_alpha(std::span<const double> w, double alpha) {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) {
    throw ConfigError("pact: alpha must be positive and finite");
  }
  std::vector<double> out(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (!std::isfinite(w[i])) throw InputError("pact_grad_alpha: non-finite input");
    out[i] = std::abs(w[i]) > alpha ? (w[i] > 0.0 ? 1.0 : -1.0) : 0.0;
  }
  return out;
}

double reduce_alpha_grad(std::span<const double> upstream, std::span<const double> d_alpha) {
  if (upstream.size() != d_alpha.size()) throw InputError("alpha grad: size mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < upstream.size(); ++i) acc += upstream[i] * d_alpha[i];
  return acc;
}

}  // namespace apot
