#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "apot/levels.hpp"

namespace apot {

/// Signed accumulator wide enough for every supported level set.
__extension__ typedef __int128 Wide;

/// Unsigned fixed-point multiplicand: value = alpha * raw / raw_max.
/// Uniform m-bit codes use raw_max = 2^m - 1; APoT-coded activations use the
/// integer p-sum numerator of their level set.
struct FixedPointActivation {
  std::uint64_t raw = 0;
  std::uint64_t raw_max = 1;
  double alpha = 1.0;

  static FixedPointActivation uniform(std::uint64_t raw, int bits, double alpha);
  /// Code for level `index` of an unsigned level set.
  static FixedPointActivation from_level(std::size_t index, const LevelSet& unsigned_levels);

  int bits() const;
  double value() const { return alpha * (static_cast<double>(raw) / static_cast<double>(raw_max)); }
};

enum class MacMode {
  Exact,       // widened accumulator with a global 2^-frac_bits denominator
  Truncating,  // literal r >> -x on the integer code, low bits dropped
};

/// Running MAC state for one output. In exact mode `value` is an integer
/// count of 2^-frac_bits units; it equals sum(psum(w) * raw(x)) * 2^frac_bits.
struct Accumulator {
  Wide value = 0;
  int frac_bits = 0;
  MacMode mode = MacMode::Exact;
  std::uint64_t macs = 0;
  std::uint64_t shift_adds = 0;  // non-zero PoT terms actually applied
  std::uint64_t slots = 0;       // max_terms() per MAC: fixed datapath issue slots
};

/// Fresh accumulator for weights from `ls` and activations of `act_bits` bits.
/// Throws ArithmeticError when the worst-case layer sum cannot fit in 127 bits.
Accumulator make_accumulator(const LevelSet& ls, int act_bits, MacMode mode = MacMode::Exact);

/// 2^exponent * raw expressed in 2^-frac_bits units, i.e.
/// raw << (exponent + frac_bits). Requires exponent + frac_bits >= 0.
Wide shift_mul(int exponent, std::uint64_t raw, int frac_bits);

/// Integer shift exactly as written for hardware: r << x for x > 0,
/// r >> -x for x < 0 (truncating).
std::int64_t shift_mul_truncating(int exponent, std::uint64_t raw);

/// acc += level(weight_index) * act, using one shift-add per PoT term.
Accumulator& apot_mac(std::size_t weight_index, const LevelSet& ls,
                      const FixedPointActivation& act, Accumulator& acc);

/// Real value of an accumulator: acc * 2^-frac_bits * gamma * act_alpha / act_raw_max.
/// gamma and the activation scale are applied once, after accumulation.
double accumulator_value(const Accumulator& acc, const LevelSet& ls, double act_alpha,
                         std::uint64_t act_raw_max);

/// Totals for a batch of MACs.
struct MacCounters {
  std::uint64_t macs = 0;
  std::uint64_t shift_adds = 0;
  std::uint64_t slots = 0;

  MacCounters& operator+=(const MacCounters& o) {
    macs += o.macs;
    shift_adds += o.shift_adds;
    slots += o.slots;
    return *this;
  }
};

/// out[r] = sum_c level(weights[r * cols + c]) * raw[c], as exact integers in
/// 2^-frac_bits units. OpenMP over rows.
std::vector<Wide> shiftadd_matvec(std::span<const std::uint32_t> weights, std::size_t rows,
                                  std::size_t cols, const LevelSet& ls,
                                  std::span<const std::uint64_t> act_raw, int act_bits,
                                  MacCounters* counters = nullptr);

/// Exhaustive check over every level of `ls` times every raw code in
/// [0, 2^act_bits): number of MACs whose shift-add result differs from the
/// integer product numerator(level) * raw. OpenMP over levels.
std::uint64_t count_mac_mismatches(const LevelSet& ls, int act_bits);

}  // namespace apot
