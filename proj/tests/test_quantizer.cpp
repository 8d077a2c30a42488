#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "apot/analysis.hpp"
#include "apot/errors.hpp"
#include "apot/quantizer.hpp"

using namespace apot;

namespace {

std::vector<double> gaussian(std::size_t n, double sd, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, sd);
  std::vector<double> v(n);
  for (double& x : v) x = g(rng);
  return v;
}

bool member(double v, const LevelSet& ls) {
  return std::find(ls.levels().begin(), ls.levels().end(), v) != ls.levels().end();
}

// Levels exactly as the quantizer produces them: alpha * unit level.
std::set<double> scaled_levels(const LevelSet& unit, double alpha) {
  std::set<double> s;
  for (double l : unit.levels()) s.insert(alpha * l);
  return s;
}

}  // namespace

TEST_CASE("two-bit weights are ternary") {
  QuantConfig cfg;
  cfg.weight_bits = 2;
  cfg.alpha_w = 1.7;
  const auto q = quantize_weights(gaussian(2048, 1.0, 1), cfg);
  std::set<double> seen(q.w_hat.begin(), q.w_hat.end());
  for (double v : seen) CHECK((v == -1.7 || v == 0.0 || v == 1.7));
  CHECK(seen.size() == 3);
}

TEST_CASE("weights land on the scaled signed set") {
  for (SchemeKind kind : {SchemeKind::Uniform, SchemeKind::PoT, SchemeKind::APoT}) {
    for (int b : {3, 4, 5}) {
      QuantConfig cfg;
      cfg.scheme = kind;
      cfg.weight_bits = b;
      cfg.alpha_w = 3.0;
      const auto q = quantize_weights(gaussian(1024, 0.3, 2), cfg);
      const auto levels = scaled_levels(weight_unit_levels(cfg), cfg.alpha_w);
      for (double v : q.w_hat) CHECK(levels.count(v) == 1);
    }
  }
}

TEST_CASE("decomposition identity on quantized Gaussian weights") {
  QuantConfig cfg;
  cfg.alpha_w = 3.0;
  const auto w = gaussian(1024, 1.0, 3);
  const auto q = quantize_weights(w, cfg);
  const auto d = error_decompose(q.cache.w_norm, cfg.alpha_w, weight_unit_levels(cfg));
  CHECK(d.delta == doctest::Approx(d.delta_clip + d.delta_proj).epsilon(1e-12));
  double direct = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) direct += std::pow(q.cache.w_norm[i] - q.w_hat[i], 2);
  CHECK(d.delta == doctest::Approx(direct / w.size()).epsilon(1e-12));
}

TEST_CASE("projection fixed point") {
  QuantConfig cfg;
  cfg.normalize_weights = false;
  cfg.alpha_w = 1.0;
  const LevelSet unit = weight_unit_levels(cfg);
  std::vector<double> on_levels(unit.levels().begin(), unit.levels().end());
  CHECK(quantize_weights(on_levels, cfg).w_hat == on_levels);

  cfg.alpha_w = 2.3;
  const auto first = quantize_weights(gaussian(4096, 1.5, 4), cfg).w_hat;
  CHECK(quantize_weights(first, cfg).w_hat == first);
}

TEST_CASE("activations") {
  QuantConfig cfg;
  cfg.act_bits = 4;
  cfg.alpha_x = 2.0;
  const auto zero = quantize_activations(std::vector<double>{0.0, 2.0, 5.0}, cfg).x_hat;
  CHECK(zero == std::vector<double>{0.0, 2.0, 2.0});

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 2 * cfg.alpha_x);
  std::vector<double> x(5000);
  for (double& v : x) v = u(rng);
  const auto q = quantize_activations(x, cfg);
  const LevelSet unit = activation_unit_levels(cfg);
  CHECK(unit.size() == 16);
  const auto levels = scaled_levels(unit, cfg.alpha_x);
  std::set<double> seen;
  for (double v : q.x_hat) {
    CHECK(levels.count(v) == 1);
    seen.insert(v);
  }
  CHECK(seen.size() == 16);
  CHECK_THROWS_AS(quantize_activations(std::vector<double>{-0.1}, cfg), InputError);
  CHECK_THROWS_AS(quantize_activations(std::vector<double>{NAN}, cfg), InputError);
}

TEST_CASE("backward: zero upstream and a single outlier") {
  QuantConfig cfg;
  cfg.normalize_weights = false;
  cfg.alpha_w = 0.5;
  cfg.alpha_x = 1.0;
  const std::vector<double> w{1.0, 0.1, -0.2};
  const std::vector<double> x{0.3, 0.7};
  const auto wq = quantize_weights(w, cfg);
  const auto aq = quantize_activations(x, cfg);
  const auto z = backward(wq.cache, aq.cache, std::vector<double>(3, 0.0), std::vector<double>(2, 0.0));
  for (double v : z.g_w) CHECK(v == 0.0);
  for (double v : z.g_x) CHECK(v == 0.0);
  CHECK(z.g_alpha_w == 0.0);
  CHECK(z.g_alpha_x == 0.0);

  // Only the clipped element w = 2 alpha carries upstream.
  const double g = 0.37;
  const auto one = backward_weights(wq.cache, std::vector<double>{g, 0.0, 0.0});
  CHECK(one.g_alpha == g);
  CHECK(one.g_w[0] == 0.0);
}

TEST_CASE("backward: outlier-only alpha gradient matches finite differences") {
  // L = sum(c * w_hat). Interior elements are frozen at their projected
  // values; only the clipped ones move with alpha, where the true derivative
  // exists.
  QuantConfig cfg;
  cfg.alpha_w = 1.1;
  const auto w = gaussian(512, 1.0, 6);
  const auto c = gaussian(512, 1.0, 7);
  const auto q = quantize_weights(w, cfg);
  const auto grads = backward_weights(q.cache, c);
  double outlier_part = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (q.cache.rcf.clipped_mask[i]) outlier_part += c[i] * q.cache.rcf.d_alpha[i];
  }
  REQUIRE(q.cache.rcf.clipped_count() > 10);

  auto loss = [&](double alpha) {
    QuantConfig a = cfg;
    a.alpha_w = alpha;
    const auto qa = quantize_weights(w, a);
    double s = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (q.cache.rcf.clipped_mask[i]) s += c[i] * qa.w_hat[i];
    }
    return s;
  };
  const double h = 1e-6;
  const double fd = (loss(cfg.alpha_w + h) - loss(cfg.alpha_w - h)) / (2 * h);
  CHECK(std::abs(fd - outlier_part) <= 1e-4 * std::max(1.0, std::abs(fd)));

  // The total splits into outlier and interior parts.
  double interior_part = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (!q.cache.rcf.clipped_mask[i]) interior_part += c[i] * q.cache.rcf.d_alpha[i];
  }
  CHECK(grads.g_alpha == doctest::Approx(outlier_part + interior_part).epsilon(1e-12));
}

TEST_CASE("backward: clip-only surrogate W gradient matches finite differences") {
  QuantConfig cfg;
  cfg.alpha_w = 1.3;
  cfg.project_levels = false;
  const auto w = gaussian(64, 0.8, 8);
  const auto c = gaussian(64, 1.0, 9);
  const auto g = backward_weights(quantize_weights(w, cfg).cache, c).g_w;
  auto loss = [&](const std::vector<double>& x) {
    const auto q = quantize_weights(x, cfg).w_hat;
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += c[i] * q[i];
    return s;
  };
  double worst = 0.0;
  double scale = 0.0;
  for (std::size_t j = 0; j < w.size(); ++j) {
    auto p = w;
    auto m = w;
    p[j] += 1e-6;
    m[j] -= 1e-6;
    const double fd = (loss(p) - loss(m)) / 2e-6;
    worst = std::max(worst, std::abs(fd - g[j]));
    scale = std::max(scale, std::abs(g[j]));
  }
  CHECK(worst / scale < 1e-5);
}

TEST_CASE("locality of upstream gradients") {
  QuantConfig cfg;
  cfg.alpha_w = 1.0;
  const auto w = gaussian(128, 1.0, 10);
  const auto up = gaussian(128, 1.0, 11);
  const auto q = quantize_weights(w, cfg);
  const auto full = backward_weights(q.cache, up);
  for (std::size_t k : {0u, 17u, 127u}) {
    auto dropped = up;
    dropped[k] = 0.0;
    const auto part = backward_weights(q.cache, dropped);
    CHECK(full.g_alpha - part.g_alpha == doctest::Approx(up[k] * q.cache.rcf.d_alpha[k]).epsilon(1e-9));
  }
  // Without WN the weight path is element-wise.
  cfg.normalize_weights = false;
  const auto q2 = quantize_weights(w, cfg);
  const auto f2 = backward_weights(q2.cache, up);
  auto dropped = up;
  dropped[5] = 0.0;
  const auto p2 = backward_weights(q2.cache, dropped);
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (i == 5) continue;
    CHECK(p2.g_w[i] == f2.g_w[i]);
  }
  CHECK(p2.g_w[5] == 0.0);
}

TEST_CASE("determinism and cache misuse") {
  QuantConfig cfg;
  const auto w = gaussian(300, 1.0, 12);
  CHECK(quantize_weights(w, cfg).w_hat == quantize_weights(w, cfg).w_hat);
  WeightCache empty;
  CHECK_THROWS_AS(backward_weights(empty, std::vector<double>{1.0}), UsageError);
  const auto q = quantize_weights(w, cfg);
  CHECK_THROWS_AS(backward_weights(q.cache, std::vector<double>(3, 1.0)), UsageError);
  ActivationCache none;
  CHECK_THROWS_AS(backward_activations(none, std::vector<double>{1.0}), UsageError);
}

TEST_CASE("config validation") {
  QuantConfig cfg;
  cfg.alpha_w = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = QuantConfig{};
  cfg.weight_bits = 6;
  cfg.base_bits = 3;  // m = 5 is neither a multiple of 3 nor odd with k = 2
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = QuantConfig{};
  cfg.weight_bits = kFullPrecisionBits;
  const auto w = gaussian(16, 1.0, 13);
  const auto q = quantize_weights(w, cfg);
  CHECK(q.w_hat == q.cache.w_norm);
}

TEST_CASE("membership helper sanity") {
  const LevelSet ls = build_uniform(1.0, 3, true);
  CHECK(member(ls.level(0), ls));
  CHECK_FALSE(member(0.123, ls));
}
