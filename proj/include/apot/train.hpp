#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "apot/dataset.hpp"
#include "apot/quantizer.hpp"
#include "apot/shiftadd.hpp"

namespace apot {

struct DenseLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> w;  // out x in, row-major
  std::vector<double> b;  // full precision
  double alpha_w = 3.0;
  double alpha_x = 8.0;
};

struct ModelConfig {
  std::size_t inputs = 2;
  std::vector<std::size_t> hidden = {32};
  std::size_t classes = 2;
  QuantConfig quant;  // alpha_w / alpha_x here are the initial per-layer values
  /// false: plain full-precision network, no WN and no quantizers.
  bool quantized = true;
  bool first_last_8bit = false;
};

class MlpModel {
 public:
  MlpModel() = default;
  MlpModel(ModelConfig cfg, std::vector<DenseLayer> layers);

  const ModelConfig& config() const { return cfg_; }
  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }

  /// Quantizer settings for layer l (bit overrides for first/last layer and
  /// the layer's own thresholds applied).
  QuantConfig layer_quant(std::size_t l) const;
  /// Fixed output scale of layer l: 1/sqrt(fan_in) when quantized, else 1.
  double layer_gain(std::size_t l) const;
  std::size_t parameter_count() const;

 private:
  ModelConfig cfg_;
  std::vector<DenseLayer> layers_;
};

/// He-normal weights, zero biases.
MlpModel make_mlp(const ModelConfig& cfg, std::uint64_t seed);

struct LayerGrads {
  std::vector<double> g_w;
  std::vector<double> g_b;
  double g_alpha_w = 0.0;
  double g_alpha_x = 0.0;
};

struct ForwardBackward {
  double loss = 0.0;  // mean cross-entropy over the batch
  std::size_t correct = 0;
  std::vector<LayerGrads> grads;
};

/// Mean loss and gradients over rows `rows` of `ds`.
ForwardBackward loss_and_grads(const MlpModel& model, const Dataset& ds,
                               const std::vector<std::size_t>& rows);

/// Quantized (fake-quant, real-level) forward. Returns batch x classes logits.
std::vector<double> forward_logits(const MlpModel& model, const Dataset& ds,
                                   const std::vector<std::size_t>& rows);

struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;
  std::size_t correct = 0;
};

/// Real-level inference over the whole dataset. OpenMP over samples.
Evaluation evaluate(const MlpModel& model, const Dataset& ds);

struct SgdConfig {
  double lr_w = 0.05;
  double lr_alpha_w = 0.01;
  double lr_alpha_x = 0.03;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double alpha_decay = 1e-5;

  void validate() const;
};

class SgdState {
 public:
  explicit SgdState(SgdConfig cfg = {});
  const SgdConfig& config() const { return cfg_; }
  void step(MlpModel& model, const std::vector<LayerGrads>& grads);

 private:
  struct Buffers {
    std::vector<double> w;
    std::vector<double> b;
    double alpha_w = 0.0;
    double alpha_x = 0.0;
  };
  SgdConfig cfg_;
  std::vector<Buffers> buf_;
};

struct TrainOptions {
  int epochs = 30;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
};

struct EpochLog {
  int epoch = 0;
  double loss = 0.0;  // mean minibatch loss during the epoch
  double accuracy = 0.0;  // end-of-epoch real-level inference
  std::vector<double> alpha_w;
  std::vector<double> alpha_x;
};

struct TrainLog {
  std::vector<EpochLog> epochs;
  bool diverged = false;
  std::uint64_t divergence_step = 0;  // global minibatch index
  std::string divergence_reason;

  double final_accuracy() const { return epochs.empty() ? 0.0 : epochs.back().accuracy; }
  /// CSV with one row per epoch; byte-identical for identical runs.
  std::string to_csv() const;
};

/// Minibatch SGD. A non-finite loss, gradient or parameter, or a threshold
/// driven to <= 0, stops the run and is recorded in the log; the model keeps
/// the parameters from before the offending step.
TrainLog train_epochs(MlpModel& model, const Dataset& ds, SgdState& sgd,
                      const TrainOptions& opt);

/// Copy weights, biases and thresholds of `hi` into the architecture and bit
/// widths of `lo`. Throws ConfigError when the layer shapes differ.
MlpModel progressive_init(const MlpModel& lo, const MlpModel& hi);

struct ShiftAddEvaluation {
  double accuracy = 0.0;
  double reference_accuracy = 0.0;  // real-level inference
  /// max |logit(shift-add) - logit(p-sum reference)|; zero in exact mode.
  double max_deviation = 0.0;
  /// max |logit(shift-add) - logit(fake-quant forward)|, float rounding only.
  double max_deviation_float = 0.0;
  MacCounters counters;  // totals over the whole dataset
  std::vector<MacCounters> per_layer_per_sample;
};

/// Inference with every weight multiplication done by the shift-add
/// simulator on stored level indices. Requires quantized weights and
/// activations.
ShiftAddEvaluation evaluate_shiftadd(const MlpModel& model, const Dataset& ds);

/// Checkpoint: text header, one manifest line per tensor, then raw
/// little-endian tensor data in manifest order.
void save_checkpoint(const MlpModel& model, const std::string& path);
MlpModel load_checkpoint(const std::string& path);

}  // namespace apot
