#include <doctest.h>

#include <cmath>
#include <numeric>

#include "apot/cost.hpp"
#include "apot/errors.hpp"
#include "apot/train.hpp"

using namespace apot;

namespace {

Dataset small_task() {
  Dataset ds = make_two_clusters(48, 3.0, 11, 4);
  min_max_scale(ds, 1.0);
  return ds;
}

// The fixed-seed desk task shared with the acceptance run.
Dataset desk_task() {
  Dataset ds = make_two_clusters(1000, 6.0, 7, 64);
  min_max_scale(ds, 1.0);
  return ds;
}

ModelConfig desk_config(int bits, bool quantized = true) {
  ModelConfig mc;
  mc.inputs = 64;
  mc.hidden = {32};
  mc.quant.weight_bits = bits;
  mc.quant.act_bits = bits;
  mc.quant.alpha_x = 1.0;
  mc.quantized = quantized;
  return mc;
}

std::vector<std::size_t> all_rows(const Dataset& ds) {
  std::vector<std::size_t> r(ds.size());
  std::iota(r.begin(), r.end(), 0);
  return r;
}

double mean_loss(const MlpModel& m, const Dataset& ds) {
  return loss_and_grads(m, ds, all_rows(ds)).loss;
}

TrainLog train(MlpModel& m, const Dataset& ds, int epochs, SgdConfig sc = {}, std::uint64_t seed = 0) {
  SgdState s(sc);
  TrainOptions o;
  o.epochs = epochs;
  o.seed = seed;
  return train_epochs(m, ds, s, o);
}

}  // namespace

TEST_CASE("network weight gradient matches finite differences") {
  const Dataset ds = small_task();
  ModelConfig mc;
  mc.inputs = 4;
  mc.hidden = {16};
  mc.quant.weight_bits = 4;
  mc.quant.act_bits = 4;
  mc.quant.alpha_w = 2.0;
  mc.quant.alpha_x = 1.5;
  mc.quant.project_levels = false;  // clip-only: differentiable away from kinks
  MlpModel m = make_mlp(mc, 3);
  const auto fb = loss_and_grads(m, ds, all_rows(ds));
  double worst = 0.0;
  for (std::size_t l = 0; l < m.layers().size(); ++l) {
    double scale = 0.0;
    for (double g : fb.grads[l].g_w) scale = std::max(scale, std::abs(g));
    for (std::size_t j = 0; j < m.layers()[l].w.size(); ++j) {
      const double keep = m.layers()[l].w[j];
      const double h = 1e-6;
      m.layers()[l].w[j] = keep + h;
      const double plus = mean_loss(m, ds);
      m.layers()[l].w[j] = keep - h;
      const double minus = mean_loss(m, ds);
      m.layers()[l].w[j] = keep;
      const double fd = (plus - minus) / (2 * h);
      worst = std::max(worst, std::abs(fd - fb.grads[l].g_w[j]) / scale);
    }
  }
  CHECK(worst < 1e-3);
}

TEST_CASE("network threshold gradient matches finite differences on the outlier branch") {
  // Thresholds far below every weight and nonzero activation: every element
  // sits on the clipped branch, where the loss is smooth in alpha.
  const Dataset ds = small_task();
  ModelConfig mc;
  mc.inputs = 4;
  mc.hidden = {16};
  mc.quant.weight_bits = 4;
  mc.quant.act_bits = 4;
  MlpModel m = make_mlp(mc, 4);
  for (auto& layer : m.layers()) {
    layer.alpha_w = 1e-4;
    layer.alpha_x = 1e-4;
  }
  const auto fb = loss_and_grads(m, ds, all_rows(ds));
  for (std::size_t l = 0; l < m.layers().size(); ++l) {
    for (int which = 0; which < 2; ++which) {
      double& a = which == 0 ? m.layers()[l].alpha_w : m.layers()[l].alpha_x;
      const double keep = a;
      const double h = 1e-8;
      a = keep + h;
      const double plus = mean_loss(m, ds);
      a = keep - h;
      const double minus = mean_loss(m, ds);
      a = keep;
      const double fd = (plus - minus) / (2 * h);
      const double an = which == 0 ? fb.grads[l].g_alpha_w : fb.grads[l].g_alpha_x;
      CAPTURE(l);
      CAPTURE(which);
      CHECK(std::abs(fd - an) <= 1e-3 * std::max(std::abs(an), 1e-6));
    }
  }
}

TEST_CASE("identical seeds give identical logs") {
  const Dataset ds = small_task();
  ModelConfig mc;
  mc.inputs = 4;
  mc.quant.alpha_x = 1.0;
  MlpModel a = make_mlp(mc, 9);
  MlpModel b = make_mlp(mc, 9);
  const auto la = train(a, ds, 3, {}, 5);
  const auto lb = train(b, ds, 3, {}, 5);
  CHECK(la.to_csv() == lb.to_csv());
  CHECK(la.to_csv().rfind("epoch,loss,accuracy,alpha_w0,alpha_x0", 0) == 0);
}

TEST_CASE("desk task: full precision and 4-bit") {
  const Dataset ds = desk_task();
  MlpModel fp = make_mlp(desk_config(32, false), 1);
  const auto lfp = train(fp, ds, 50);
  CHECK_FALSE(lfp.diverged);
  CHECK(lfp.final_accuracy() >= 0.99);

  MlpModel q4 = make_mlp(desk_config(4), 1);
  const auto l4 = train(q4, ds, 30);
  CHECK_FALSE(l4.diverged);
  CHECK(l4.final_accuracy() >= lfp.final_accuracy() - 0.02);

  MlpModel q2 = make_mlp(desk_config(2), 1);
  const auto l2 = train(q2, ds, 30);
  CHECK_FALSE(l2.diverged);
}

TEST_CASE("progressive initialization") {
  const Dataset ds = desk_task();
  MlpModel hi = make_mlp(desk_config(5), 2);
  train(hi, ds, 10);

  const MlpModel same = progressive_init(make_mlp(desk_config(5), 99), hi);
  for (std::size_t l = 0; l < hi.layers().size(); ++l) {
    CHECK(same.layers()[l].w == hi.layers()[l].w);
    CHECK(same.layers()[l].b == hi.layers()[l].b);
    CHECK(same.layers()[l].alpha_w == hi.layers()[l].alpha_w);
    CHECK(same.layers()[l].alpha_x == hi.layers()[l].alpha_x);
  }

  MlpModel warm = progressive_init(make_mlp(desk_config(4), 2), hi);
  MlpModel cold = make_mlp(desk_config(4), 2);
  train(warm, ds, 1);
  train(cold, ds, 1);
  CHECK(mean_loss(warm, ds) <= mean_loss(cold, ds));

  MlpModel three = make_mlp(desk_config(3), 3);
  train(three, ds, 2);
  MlpModel ternary = progressive_init(make_mlp(desk_config(2), 3), three);
  CHECK_FALSE(train(ternary, ds, 2).diverged);

  ModelConfig other = desk_config(4);
  other.hidden = {16};
  CHECK_THROWS_AS(progressive_init(make_mlp(other, 1), hi), ConfigError);
}

TEST_CASE("learned weight thresholds shrink with the bit-width") {
  const Dataset ds = desk_task();
  std::vector<std::vector<double>> alphas;
  MlpModel prev = make_mlp(desk_config(5), 5);
  train(prev, ds, 10);
  alphas.push_back({prev.layers()[0].alpha_w, prev.layers()[1].alpha_w});
  for (int b : {4, 3}) {
    MlpModel m = progressive_init(make_mlp(desk_config(b), 5), prev);
    train(m, ds, 10);
    alphas.push_back({m.layers()[0].alpha_w, m.layers()[1].alpha_w});
    prev = m;
  }
  for (std::size_t i = 1; i < alphas.size(); ++i) {
    for (std::size_t l = 0; l < 2; ++l) CHECK(alphas[i][l] <= 1.10 * alphas[i - 1][l]);
  }
}

TEST_CASE("divergence is reported and the model is left intact") {
  const Dataset ds = small_task();
  ModelConfig mc;
  mc.inputs = 4;
  mc.quant.alpha_x = 1.0;
  MlpModel m = make_mlp(mc, 1);
  SgdConfig sc;
  sc.lr_w = 1e308;
  sc.momentum = 0.0;
  const auto log = train(m, ds, 5, sc);
  CHECK(log.diverged);
  CHECK(log.divergence_step <= 1);  // the first step can still land on finite weights
  CHECK_FALSE(log.divergence_reason.empty());
  CHECK(log.to_csv().find("# diverged at step " + std::to_string(log.divergence_step)) != std::string::npos);
  for (const auto& layer : m.layers()) {
    for (double w : layer.w) CHECK(std::isfinite(w));
  }
  CHECK_THROWS_AS(SgdConfig{.momentum = 1.0}.validate(), ConfigError);
}

TEST_CASE("shift-add inference matches real-level inference") {
  const Dataset ds = desk_task();
  for (int bits : {5, 4, 3, 2}) {
    MlpModel m = make_mlp(desk_config(bits), 6);
    train(m, ds, 2);
    const auto r = evaluate_shiftadd(m, ds);
    CAPTURE(bits);
    CHECK(r.max_deviation == 0.0);
    CHECK(r.accuracy == r.reference_accuracy);
    CHECK(r.accuracy == evaluate(m, ds).accuracy);
    CHECK(r.max_deviation_float < 1e-9);
    CostConfig cc;
    cc.first_last_8bit = false;
    for (std::size_t l = 0; l < m.layers().size(); ++l) {
      LayerShape s;
      s.c_out = static_cast<int>(m.layers()[l].out);
      s.c_in = static_cast<int>(m.layers()[l].in);
      s.weight_bits = m.layer_quant(l).weight_bits;
      s.act_bits = m.layer_quant(l).act_bits;
      CHECK(r.per_layer_per_sample[l].slots == shift_adds_for_layer(s, cc));
      CHECK(r.per_layer_per_sample[l].macs == s.macs());
    }
  }
  MlpModel fp = make_mlp(desk_config(32, false), 1);
  CHECK_THROWS_AS(evaluate_shiftadd(fp, ds), ConfigError);
}

TEST_CASE("model construction errors") {
  ModelConfig mc;
  mc.inputs = 0;
  CHECK_THROWS_AS(make_mlp(mc, 1), ConfigError);
  ModelConfig ok;
  MlpModel m = make_mlp(ok, 1);
  auto layers = m.layers();
  layers[0].w.pop_back();
  CHECK_THROWS_AS(MlpModel(ok, layers), ConfigError);
}
