#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "apot/levels.hpp"

namespace apot {

enum class LayerRole { First, Mid, Last };

/// Convolution or dense layer geometry. A dense layer is K = 1 on a 1x1 map.
struct LayerShape {
  std::string name;
  int c_out = 1;
  int c_in = 1;
  int kernel = 1;
  int stride = 1;
  int padding = 0;
  int h_in = 1;
  int w_in = 1;
  LayerRole role = LayerRole::Mid;
  int weight_bits = 32;
  int act_bits = 32;

  int h_out() const { return (h_in + 2 * padding - kernel) / stride + 1; }
  int w_out() const { return (w_in + 2 * padding - kernel) / stride + 1; }
  std::uint64_t weight_count() const;
  std::uint64_t macs() const;
};

/// How a quantized MAC is charged in FixOPS (1 FixOP = one 8x8-bit op = 64
/// bit-ops).
///   Table:    uniform l*m/64; APoT (k = 2) 3/4 of that.
///   ShiftAdd: uniform l*m/64; APoT/PoT n*m/64 with n the PoT terms per weight.
enum class FixopsConvention { Table, ShiftAdd };

std::string to_string(FixopsConvention c);
FixopsConvention parse_fixops_convention(const std::string& name);

struct CostConfig {
  int weight_bits = 5;
  int act_bits = 5;
  int base_bits = 2;
  SchemeKind scheme = SchemeKind::APoT;
  FixopsConvention convention = FixopsConvention::Table;
  bool first_last_8bit = true;
};

struct LayerCost {
  std::string name;
  int weight_bits = 0;
  int act_bits = 0;
  std::uint64_t macs = 0;
  double fixops = 0.0;
  std::uint64_t bytes = 0;
  std::uint64_t shift_adds = 0;
};

struct CostReport {
  std::vector<LayerCost> layers;
  double total_fixops = 0.0;
  std::uint64_t total_macs = 0;
  std::uint64_t model_bytes = 0;
  std::uint64_t shift_add_count = 0;

  double model_mib() const { return static_cast<double>(model_bytes) / (1024.0 * 1024.0); }
};

/// Parses "name C_out C_in K stride padding H_in W_in [first|last|mid]" lines.
/// Blank lines and '#' comments are skipped. Throws InputError with the line
/// number on malformed input.
std::vector<LayerShape> parse_layer_table(std::istream& in);
std::vector<LayerShape> load_layer_table(const std::string& path);

/// Copies `shapes` with per-layer bit-widths: first/last layers at 8 bits when
/// cfg.first_last_8bit and the network is quantized, cfg bits elsewhere.
std::vector<LayerShape> assign_precision(std::vector<LayerShape> shapes, const CostConfig& cfg);

/// PoT terms per weight multiply for a signed weight of `weight_bits` bits.
int terms_per_weight(SchemeKind scheme, int weight_bits, int base_bits);

/// FixOPS of one layer using its own weight_bits / act_bits. 32/32 layers
/// report FLOPs (one per MAC).
double fixops_for_layer(const LayerShape& shape, const CostConfig& cfg);

/// Shift-add issue slots for one forward pass of the layer: MACs times the
/// PoT terms per weight. Zero for layers that are not shift-add quantized.
std::uint64_t shift_adds_for_layer(const LayerShape& shape, const CostConfig& cfg);

/// Weight storage in bytes: weights * bits / 8 (rounded up per layer), plus a
/// 4-byte alpha for every quantized layer.
std::uint64_t model_size(const std::vector<LayerShape>& shapes);

/// Applies assign_precision, then costs every layer.
CostReport cost_report(const std::vector<LayerShape>& shapes, const CostConfig& cfg);

}  // namespace apot
