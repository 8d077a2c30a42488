#include "apot/train.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "apot/cost.hpp"
#include "apot/errors.hpp"

namespace apot {

namespace {

constexpr int kEdgeBits = 8;

bool all_finite(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

std::vector<double> gather_rows(const Dataset& ds, const std::vector<std::size_t>& rows) {
  std::vector<double> x(rows.size() * ds.features);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= ds.size()) throw InputError("row index out of range");
    const auto src = ds.row(rows[r]);
    std::copy(src.begin(), src.end(), x.begin() + static_cast<std::ptrdiff_t>(r * ds.features));
  }
  return x;
}

// z[b, o] = sum_i x[b, i] * w[o, i] + bias[o]. Each output has one owner, so
// the result does not depend on the thread count.
std::vector<double> dense(const std::vector<double>& x, std::size_t batch, const DenseLayer& layer,
                          const std::vector<double>& w_hat, double gain) {
  std::vector<double> z(batch * layer.out);
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(batch);
#pragma omp parallel for schedule(static) if (batch >= 256)
  for (std::ptrdiff_t b = 0; b < n; ++b) {
    const double* xr = x.data() + b * static_cast<std::ptrdiff_t>(layer.in);
    for (std::size_t o = 0; o < layer.out; ++o) {
      const double* wr = w_hat.data() + o * layer.in;
      double acc = 0.0;
      for (std::size_t i = 0; i < layer.in; ++i) acc += xr[i] * wr[i];
      z[static_cast<std::size_t>(b) * layer.out + o] = acc * gain + layer.b[o];
    }
  }
  return z;
}

struct LayerTrace {
  WeightQuant wq;
  ActivationQuant aq;
  std::vector<double> z;
};

struct Trace {
  std::vector<LayerTrace> layers;
  std::size_t batch = 0;
};

Trace run_forward(const MlpModel& model, std::vector<double> x, std::size_t batch) {
  Trace t;
  t.batch = batch;
  const auto& layers = model.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const QuantConfig q = model.layer_quant(l);
    LayerTrace lt;
    lt.aq = quantize_activations(x, q);
    lt.wq = quantize_weights(layers[l].w, q);
    lt.z = dense(lt.aq.x_hat, batch, layers[l], lt.wq.w_hat, model.layer_gain(l));
    if (l + 1 < layers.size()) {
      x = lt.z;
      for (double& v : x) v = std::max(v, 0.0);
    }
    t.layers.push_back(std::move(lt));
  }
  return t;
}

// Mean cross-entropy; fills dL/dz into `g` when non-null.
double softmax_xent(const std::vector<double>& logits, std::size_t batch, std::size_t classes,
                    const std::vector<int>& labels, std::size_t* correct,
                    std::vector<double>* g) {
  double loss = 0.0;
  if (g) g->assign(logits.size(), 0.0);
  for (std::size_t b = 0; b < batch; ++b) {
    const double* z = logits.data() + b * classes;
    const std::size_t arg = static_cast<std::size_t>(std::max_element(z, z + classes) - z);
    const double m = z[arg];
    double s = 0.0;
    for (std::size_t c = 0; c < classes; ++c) s += std::exp(z[c] - m);
    const double lse = m + std::log(s);
    const auto y = static_cast<std::size_t>(labels[b]);
    loss += lse - z[y];
    if (correct && arg == y) ++*correct;
    if (g) {
      for (std::size_t c = 0; c < classes; ++c) {
        (*g)[b * classes + c] =
            (std::exp(z[c] - lse) - (c == y ? 1.0 : 0.0)) / static_cast<double>(batch);
      }
    }
  }
  return loss / static_cast<double>(batch);
}

std::vector<int> gather_labels(const Dataset& ds, const std::vector<std::size_t>& rows) {
  std::vector<int> y(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    y[r] = ds.y[rows[r]];
    if (y[r] < 0 || static_cast<std::size_t>(y[r]) >= ds.classes) throw InputError("label out of range");
  }
  return y;
}

void check_compatible(const MlpModel& model, const Dataset& ds) {
  const auto& cfg = model.config();
  if (ds.size() == 0) throw InputError("dataset is empty");
  if (ds.features != cfg.inputs) {
    throw InputError("dataset has " + std::to_string(ds.features) + " features, model expects " +
                     std::to_string(cfg.inputs));
  }
  if (ds.classes > cfg.classes) {
    throw InputError("dataset has more classes than the model outputs");
  }
}

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::string s;
  for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? "x" : "") + std::to_string(shape[i]);
  return s;
}

}  // namespace

MlpModel::MlpModel(ModelConfig cfg, std::vector<DenseLayer> layers)
    : cfg_(std::move(cfg)), layers_(std::move(layers)) {
  if (layers_.empty()) throw ConfigError("model needs at least one layer");
  std::size_t prev = cfg_.inputs;
  for (const auto& l : layers_) {
    if (l.in != prev || l.w.size() != l.in * l.out || l.b.size() != l.out) {
      throw ConfigError("inconsistent layer shapes");
    }
    prev = l.out;
  }
  if (prev != cfg_.classes) throw ConfigError("last layer width must equal the class count");
  for (std::size_t l = 0; l < layers_.size(); ++l) layer_quant(l).validate();
}

QuantConfig MlpModel::layer_quant(std::size_t l) const {
  QuantConfig q = cfg_.quant;
  q.alpha_w = layers_.at(l).alpha_w;
  q.alpha_x = layers_.at(l).alpha_x;
  if (!cfg_.quantized) {
    q.weight_bits = kFullPrecisionBits;
    q.act_bits = kFullPrecisionBits;
    q.normalize_weights = false;
  } else if (cfg_.first_last_8bit && (l == 0 || l + 1 == layers_.size())) {
    q.weight_bits = kEdgeBits;
    q.act_bits = kEdgeBits;
    q.scheme = SchemeKind::Uniform;
  }
  return q;
}

// Stands in for the scale normalization batch norm would provide: with WN the
// quantized weights have magnitude ~alpha regardless of W, so without a fan-in
// factor the pre-activations grow with sqrt(fan_in) and alpha_w acts as a raw
// layer gain.
double MlpModel::layer_gain(std::size_t l) const {
  if (!cfg_.quantized) return 1.0;
  return 1.0 / std::sqrt(static_cast<double>(layers_.at(l).in));
}

std::size_t MlpModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.w.size() + l.b.size();
  return n;
}

MlpModel make_mlp(const ModelConfig& cfg, std::uint64_t seed) {
  if (cfg.inputs == 0 || cfg.classes < 2) throw ConfigError("model needs inputs and >= 2 classes");
  cfg.quant.validate();
  std::mt19937_64 rng(seed);
  std::vector<DenseLayer> layers;
  std::size_t prev = cfg.inputs;
  std::vector<std::size_t> widths = cfg.hidden;
  widths.push_back(cfg.classes);
  for (std::size_t width : widths) {
    if (width == 0) throw ConfigError("layer width must be positive");
    DenseLayer l;
    l.in = prev;
    l.out = width;
    l.alpha_w = cfg.quant.alpha_w;
    l.alpha_x = cfg.quant.alpha_x;
    std::normal_distribution<double> init(0.0, std::sqrt(2.0 / static_cast<double>(prev)));
    l.w.resize(l.in * l.out);
    for (double& v : l.w) v = init(rng);
    l.b.assign(l.out, 0.0);
    layers.push_back(std::move(l));
    prev = width;
  }
  return MlpModel(cfg, std::move(layers));
}

ForwardBackward loss_and_grads(const MlpModel& model, const Dataset& ds,
                               const std::vector<std::size_t>& rows) {
  check_compatible(model, ds);
  if (rows.empty()) throw InputError("empty minibatch");
  const std::size_t batch = rows.size();
  const Trace t = run_forward(model, gather_rows(ds, rows), batch);
  const auto& layers = model.layers();

  ForwardBackward out;
  std::vector<double> g_z;
  out.loss = softmax_xent(t.layers.back().z, batch, model.config().classes,
                          gather_labels(ds, rows), &out.correct, &g_z);
  out.grads.resize(layers.size());

  for (std::size_t li = layers.size(); li-- > 0;) {
    const DenseLayer& layer = layers[li];
    const LayerTrace& lt = t.layers[li];
    LayerGrads& g = out.grads[li];
    const double gain = model.layer_gain(li);
    g.g_b.assign(layer.out, 0.0);
    std::vector<double> g_w_hat(layer.w.size(), 0.0);
    std::vector<double> g_x_hat(batch * layer.in, 0.0);
    for (std::size_t b = 0; b < batch; ++b) {
      const double* x = lt.aq.x_hat.data() + b * layer.in;
      double* gx = g_x_hat.data() + b * layer.in;
      for (std::size_t o = 0; o < layer.out; ++o) {
        const double gz = g_z[b * layer.out + o] * gain;
        if (gz == 0.0) continue;
        g.g_b[o] += g_z[b * layer.out + o];
        const double* w = lt.wq.w_hat.data() + o * layer.in;
        double* gw = g_w_hat.data() + o * layer.in;
        for (std::size_t i = 0; i < layer.in; ++i) {
          gw[i] += gz * x[i];
          gx[i] += gz * w[i];
        }
      }
    }
    QuantLayerGrads qg = backward(lt.wq.cache, lt.aq.cache, g_w_hat, g_x_hat);
    g.g_w = std::move(qg.g_w);
    g.g_alpha_w = qg.g_alpha_w;
    g.g_alpha_x = qg.g_alpha_x;
    if (li > 0) {
      // Through the previous layer's ReLU.
      const std::vector<double>& z_prev = t.layers[li - 1].z;
      g_z.assign(qg.g_x.size(), 0.0);
      for (std::size_t k = 0; k < qg.g_x.size(); ++k) g_z[k] = z_prev[k] > 0.0 ? qg.g_x[k] : 0.0;
    }
  }
  return out;
}

std::vector<double> forward_logits(const MlpModel& model, const Dataset& ds,
                                   const std::vector<std::size_t>& rows) {
  check_compatible(model, ds);
  return run_forward(model, gather_rows(ds, rows), rows.size()).layers.back().z;
}

Evaluation evaluate(const MlpModel& model, const Dataset& ds) {
  std::vector<std::size_t> rows(ds.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  const auto logits = forward_logits(model, ds, rows);
  Evaluation e;
  e.loss = softmax_xent(logits, rows.size(), model.config().classes, ds.y, &e.correct, nullptr);
  e.accuracy = static_cast<double>(e.correct) / static_cast<double>(ds.size());
  return e;
}

void SgdConfig::validate() const {
  const double lrs[] = {lr_w, lr_alpha_w, lr_alpha_x};
  for (double lr : lrs) {
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("learning rates must be finite and >= 0");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must be in [0, 1)");
  if (!(weight_decay >= 0.0) || !(alpha_decay >= 0.0)) throw ConfigError("decay must be >= 0");
}

SgdState::SgdState(SgdConfig cfg) : cfg_(cfg) { cfg_.validate(); }

void SgdState::step(MlpModel& model, const std::vector<LayerGrads>& grads) {
  auto& layers = model.layers();
  if (grads.size() != layers.size()) throw UsageError("sgd: gradient/layer count mismatch");
  if (buf_.empty()) {
    buf_.resize(layers.size());
    for (std::size_t l = 0; l < layers.size(); ++l) {
      buf_[l].w.assign(layers[l].w.size(), 0.0);
      buf_[l].b.assign(layers[l].b.size(), 0.0);
    }
  }
  if (buf_.size() != layers.size()) throw UsageError("sgd: state belongs to another model");
  const double mu = cfg_.momentum;
  const bool quantized = model.config().quantized;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    DenseLayer& layer = layers[l];
    const LayerGrads& g = grads[l];
    Buffers& v = buf_[l];
    for (std::size_t i = 0; i < layer.w.size(); ++i) {
      v.w[i] = mu * v.w[i] + g.g_w[i] + cfg_.weight_decay * layer.w[i];
      layer.w[i] -= cfg_.lr_w * v.w[i];
    }
    for (std::size_t i = 0; i < layer.b.size(); ++i) {
      v.b[i] = mu * v.b[i] + g.g_b[i];
      layer.b[i] -= cfg_.lr_w * v.b[i];
    }
    if (!quantized) continue;
    v.alpha_w = mu * v.alpha_w + g.g_alpha_w + cfg_.alpha_decay * layer.alpha_w;
    layer.alpha_w -= cfg_.lr_alpha_w * v.alpha_w;
    v.alpha_x = mu * v.alpha_x + g.g_alpha_x + cfg_.alpha_decay * layer.alpha_x;
    layer.alpha_x -= cfg_.lr_alpha_x * v.alpha_x;
  }
}

std::string TrainLog::to_csv() const {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "epoch,loss,accuracy";
  const std::size_t n_layers = epochs.empty() ? 0 : epochs.front().alpha_w.size();
  for (std::size_t l = 0; l < n_layers; ++l) os << ",alpha_w" << l << ",alpha_x" << l;
  os << '\n';
  for (const auto& e : epochs) {
    os << e.epoch << ',' << e.loss << ',' << e.accuracy;
    for (std::size_t l = 0; l < e.alpha_w.size(); ++l) os << ',' << e.alpha_w[l] << ',' << e.alpha_x[l];
    os << '\n';
  }
  if (diverged) os << "# diverged at step " << divergence_step << ": " << divergence_reason << '\n';
  return os.str();
}

TrainLog train_epochs(MlpModel& model, const Dataset& ds, SgdState& sgd,
                      const TrainOptions& opt) {
  check_compatible(model, ds);
  if (opt.epochs < 0) throw ConfigError("epochs must be >= 0");
  if (opt.batch_size == 0) throw ConfigError("batch size must be positive");
  std::mt19937_64 rng(opt.seed);
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainLog log;
  std::uint64_t step = 0;
  for (int epoch = 1; epoch <= opt.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += opt.batch_size, ++step) {
      const std::size_t end = std::min(order.size(), start + opt.batch_size);
      const std::vector<std::size_t> rows(order.begin() + static_cast<std::ptrdiff_t>(start),
                                          order.begin() + static_cast<std::ptrdiff_t>(end));
      ForwardBackward fb;
      std::string reason;
      try {
        fb = loss_and_grads(model, ds, rows);
      } catch (const InputError& e) {
        // Overflowed parameters surface as non-finite values inside WN or RCF.
        reason = e.what();
      } catch (const ArithmeticError& e) {
        reason = e.what();
      }
      if (reason.empty() && !std::isfinite(fb.loss)) reason = "non-finite loss";
      for (const auto& g : fb.grads) {
        if (reason.empty() && (!all_finite(g.g_w) || !all_finite(g.g_b) ||
                               !std::isfinite(g.g_alpha_w) || !std::isfinite(g.g_alpha_x))) {
          reason = "non-finite gradient";
        }
      }
      MlpModel next = model;
      SgdState next_sgd = sgd;
      if (reason.empty()) {
        next_sgd.step(next, fb.grads);
        for (const auto& l : next.layers()) {
          if (!reason.empty()) break;
          if (!all_finite(l.w) || !all_finite(l.b)) reason = "non-finite parameter";
          else if (model.config().quantized && !(l.alpha_w > 0.0 && l.alpha_x > 0.0)) {
            reason = "clipping threshold driven to <= 0";
          }
        }
      }
      if (!reason.empty()) {
        log.diverged = true;
        log.divergence_step = step;
        log.divergence_reason = reason;
        return log;
      }
      model = std::move(next);
      sgd = std::move(next_sgd);
      loss_sum += fb.loss;
      ++batches;
    }
    EpochLog e;
    e.epoch = epoch;
    e.loss = loss_sum / static_cast<double>(batches);
    e.accuracy = evaluate(model, ds).accuracy;
    for (const auto& l : model.layers()) {
      e.alpha_w.push_back(l.alpha_w);
      e.alpha_x.push_back(l.alpha_x);
    }
    log.epochs.push_back(std::move(e));
  }
  return log;
}

MlpModel progressive_init(const MlpModel& lo, const MlpModel& hi) {
  const auto& a = lo.layers();
  const auto& b = hi.layers();
  if (a.size() != b.size() || lo.config().inputs != hi.config().inputs ||
      lo.config().classes != hi.config().classes) {
    throw ConfigError("progressive init: architectures differ");
  }
  std::vector<DenseLayer> layers = a;
  for (std::size_t l = 0; l < a.size(); ++l) {
    if (a[l].in != b[l].in || a[l].out != b[l].out) {
      throw ConfigError("progressive init: layer " + std::to_string(l) + " shape differs");
    }
    layers[l].w = b[l].w;
    layers[l].b = b[l].b;
    layers[l].alpha_w = b[l].alpha_w;
    layers[l].alpha_x = b[l].alpha_x;
  }
  return MlpModel(lo.config(), std::move(layers));
}

ShiftAddEvaluation evaluate_shiftadd(const MlpModel& model, const Dataset& ds) {
  check_compatible(model, ds);
  if (!model.config().quantized) throw ConfigError("shift-add inference needs a quantized model");
  const auto& layers = model.layers();
  const std::size_t n = ds.size();

  struct Prepared {
    QuantConfig q;
    LevelSet wset;
    LevelSet aset;
    std::vector<std::uint32_t> w_idx;
    std::vector<std::int64_t> w_num;
    int act_bits = 0;
    double scale = 0.0;  // logit = (integer sum * 2^-F) * scale + bias
  };
  std::vector<Prepared> prep;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const QuantConfig q = model.layer_quant(l);
    if (q.weights_full_precision() || q.acts_full_precision()) {
      throw ConfigError("shift-add inference needs quantized weights and activations");
    }
    WeightQuant wq = quantize_weights(layers[l].w, q);
    LevelSet wset = weight_unit_levels(q);
    LevelSet aset = activation_unit_levels(q);
    Prepared p{q, wset, aset, std::move(wq.cache.unit_indices), {}, 0, 0.0};
    p.w_num.reserve(p.w_idx.size());
    for (auto idx : p.w_idx) p.w_num.push_back(p.wset.numerator(idx));
    const std::int64_t raw_max = p.aset.max_numerator();
    p.act_bits = std::bit_width(static_cast<std::uint64_t>(raw_max));
    p.scale = model.layer_gain(l) * (layers[l].alpha_w / p.wset.max_psum()) *
              (layers[l].alpha_x / static_cast<double>(raw_max));
    prep.push_back(std::move(p));
  }

  ShiftAddEvaluation out;
  out.per_layer_per_sample.resize(layers.size());
  std::vector<MacCounters> layer_totals(layers.size());
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  const std::vector<double> float_logits = forward_logits(model, ds, rows);

  std::size_t correct = 0;
  std::vector<double> x;
  for (std::size_t s = 0; s < n; ++s) {
    const auto src = ds.row(s);
    x.assign(src.begin(), src.end());
    std::vector<double> x_ref = x;
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const Prepared& p = prep[l];
      const DenseLayer& layer = layers[l];
      const ActivationQuant aq = quantize_activations(x, p.q);
      std::vector<std::uint64_t> raw(layer.in);
      for (std::size_t i = 0; i < layer.in; ++i) {
        raw[i] = static_cast<std::uint64_t>(p.aset.numerator(aq.cache.unit_indices[i]));
      }
      MacCounters counters;
      const std::vector<Wide> acc =
          shiftadd_matvec(p.w_idx, layer.out, layer.in, p.wset, raw, p.act_bits, &counters);
      layer_totals[l] += counters;

      // Reference: the same levels in exact p-sum arithmetic.
      const ActivationQuant aq_ref = quantize_activations(x_ref, p.q);
      std::vector<double> z(layer.out);
      std::vector<double> z_ref(layer.out);
      const double unit = std::ldexp(1.0, -p.wset.frac_bits());
      for (std::size_t o = 0; o < layer.out; ++o) {
        double ref = 0.0;
        for (std::size_t i = 0; i < layer.in; ++i) {
          ref += p.wset.psum(p.w_idx[o * layer.in + i]) *
                 static_cast<double>(p.aset.numerator(aq_ref.cache.unit_indices[i]));
        }
        z[o] = static_cast<double>(acc[o]) * unit * p.scale + layer.b[o];
        z_ref[o] = ref * p.scale + layer.b[o];
        out.max_deviation = std::max(out.max_deviation, std::abs(z[o] - z_ref[o]));
      }
      if (l + 1 < layers.size()) {
        for (double& v : z) v = std::max(v, 0.0);
        for (double& v : z_ref) v = std::max(v, 0.0);
      } else {
        const double* f = float_logits.data() + s * layer.out;
        for (std::size_t o = 0; o < layer.out; ++o) {
          out.max_deviation_float = std::max(out.max_deviation_float, std::abs(z[o] - f[o]));
        }
        const auto arg = static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
        if (arg == static_cast<std::size_t>(ds.y[s])) ++correct;
      }
      x = std::move(z);
      x_ref = std::move(z_ref);
    }
  }
  for (std::size_t l = 0; l < layers.size(); ++l) {
    out.counters += layer_totals[l];
    MacCounters per = layer_totals[l];
    per.macs /= n;
    per.shift_adds /= n;
    per.slots /= n;
    out.per_layer_per_sample[l] = per;
  }
  out.accuracy = static_cast<double>(correct) / static_cast<double>(n);
  out.reference_accuracy = evaluate(model, ds).accuracy;
  return out;
}

void save_checkpoint(const MlpModel& model, const std::string& path) {
  const auto& cfg = model.config();
  nlohmann::json meta = {
      {"inputs", cfg.inputs},
      {"hidden", cfg.hidden},
      {"classes", cfg.classes},
      {"quantized", cfg.quantized},
      {"first_last_8bit", cfg.first_last_8bit},
      {"weight_bits", cfg.quant.weight_bits},
      {"act_bits", cfg.quant.act_bits},
      {"base_bits", cfg.quant.base_bits},
      {"scheme", to_string(cfg.quant.scheme)},
      {"ste", to_string(cfg.quant.ste)},
      {"eps", cfg.quant.eps},
      {"normalize_weights", cfg.quant.normalize_weights},
  };
  struct Entry {
    std::string name;
    std::vector<std::size_t> shape;
    std::vector<double> data;
  };
  std::vector<Entry> entries;
  for (std::size_t l = 0; l < model.layers().size(); ++l) {
    const DenseLayer& d = model.layers()[l];
    const std::string p = "layer" + std::to_string(l) + ".";
    entries.push_back({p + "w", {d.out, d.in}, d.w});
    entries.push_back({p + "b", {d.out}, d.b});
    entries.push_back({p + "alpha_w", {1}, {d.alpha_w}});
    entries.push_back({p + "alpha_x", {1}, {d.alpha_x}});
  }

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write checkpoint '" + path + "'");
  os << "APOT-CHECKPOINT 1\n";
  os << "meta " << meta.dump() << '\n';
  os << "tensors " << entries.size() << '\n';
  for (const auto& e : entries) os << "tensor " << e.name << " f32 " << shape_string(e.shape) << '\n';
  os << "data\n";
  for (const auto& e : entries) {
    for (double v : e.data) {
      const float f = static_cast<float>(v);
      os.write(reinterpret_cast<const char*>(&f), sizeof f);
    }
  }
  if (!os) throw IoError("write failed for checkpoint '" + path + "'");
}

MlpModel load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint '" + path + "'");
  auto bad = [&](const std::string& what) { return InputError("checkpoint '" + path + "': " + what); };
  std::string line;
  if (!std::getline(is, line) || line != "APOT-CHECKPOINT 1") throw bad("bad header");
  if (!std::getline(is, line) || line.rfind("meta ", 0) != 0) throw bad("missing meta line");

  ModelConfig cfg;
  try {
    const auto meta = nlohmann::json::parse(line.substr(5));
    cfg.inputs = meta.at("inputs").get<std::size_t>();
    cfg.hidden = meta.at("hidden").get<std::vector<std::size_t>>();
    cfg.classes = meta.at("classes").get<std::size_t>();
    cfg.quantized = meta.at("quantized").get<bool>();
    cfg.first_last_8bit = meta.at("first_last_8bit").get<bool>();
    cfg.quant.weight_bits = meta.at("weight_bits").get<int>();
    cfg.quant.act_bits = meta.at("act_bits").get<int>();
    cfg.quant.base_bits = meta.at("base_bits").get<int>();
    cfg.quant.scheme = parse_scheme_kind(meta.at("scheme").get<std::string>());
    cfg.quant.ste = parse_ste_mode(meta.at("ste").get<std::string>());
    cfg.quant.eps = meta.at("eps").get<double>();
    cfg.quant.normalize_weights = meta.at("normalize_weights").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw bad(std::string("bad meta: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw bad(std::string("bad meta: ") + e.what());
  }

  if (!std::getline(is, line) || line.rfind("tensors ", 0) != 0) throw bad("missing tensor count");
  const std::size_t count = std::stoul(line.substr(8));
  struct Entry {
    std::string name;
    std::string dtype;
    std::size_t elems = 1;
  };
  std::vector<Entry> entries;
  for (std::size_t i = 0; i < count; ++i) {
    if (!std::getline(is, line)) throw bad("truncated manifest");
    std::istringstream ls(line);
    std::string tag, shape;
    Entry e;
    if (!(ls >> tag >> e.name >> e.dtype >> shape) || tag != "tensor") throw bad("bad manifest line '" + line + "'");
    if (e.dtype != "f32" && e.dtype != "f64") throw bad("unsupported dtype " + e.dtype);
    std::istringstream ss(shape);
    std::string dim;
    while (std::getline(ss, dim, 'x')) e.elems *= std::stoul(dim);
    entries.push_back(std::move(e));
  }
  if (!std::getline(is, line) || line != "data") throw bad("missing data marker");

  std::map<std::string, std::vector<double>> tensors;
  for (const auto& e : entries) {
    std::vector<double> v(e.elems);
    for (auto& x : v) {
      if (e.dtype == "f32") {
        float f;
        if (!is.read(reinterpret_cast<char*>(&f), sizeof f)) throw bad("truncated data");
        x = f;
      } else {
        if (!is.read(reinterpret_cast<char*>(&x), sizeof x)) throw bad("truncated data");
      }
    }
    tensors[e.name] = std::move(v);
  }

  std::vector<DenseLayer> layers;
  std::size_t prev = cfg.inputs;
  std::vector<std::size_t> widths = cfg.hidden;
  widths.push_back(cfg.classes);
  for (std::size_t l = 0; l < widths.size(); ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    auto take = [&](const std::string& name, std::size_t expect) {
      auto it = tensors.find(p + name);
      if (it == tensors.end()) throw bad("missing tensor " + p + name);
      if (it->second.size() != expect) throw bad("tensor " + p + name + " has the wrong size");
      return it->second;
    };
    DenseLayer d;
    d.in = prev;
    d.out = widths[l];
    d.w = take("w", d.in * d.out);
    d.b = take("b", d.out);
    d.alpha_w = take("alpha_w", 1)[0];
    d.alpha_x = take("alpha_x", 1)[0];
    layers.push_back(std::move(d));
    prev = widths[l];
  }
  return MlpModel(cfg, std::move(layers));
}

}  // namespace apot
