#include "apot/shiftadd.hpp"

#include <bit>
#include <cmath>
#include <string>

#include "apot/errors.hpp"

namespace apot {

namespace {

// Headroom for up to 2^40 accumulated MACs per output.
constexpr int kMacHeadroomBits = 40;
constexpr int kWideBits = 126;

}  // namespace

FixedPointActivation FixedPointActivation::uniform(std::uint64_t raw, int bits, double alpha) {
  if (bits < 1 || bits > 32) throw ConfigError("activation code width must be in [1, 32]");
  const std::uint64_t raw_max = (std::uint64_t{1} << bits) - 1;
  if (raw > raw_max) throw InputError("activation code does not fit in its bit-width");
  return {raw, raw_max, alpha};
}

FixedPointActivation FixedPointActivation::from_level(std::size_t index,
                                                      const LevelSet& unsigned_levels) {
  if (unsigned_levels.is_signed()) throw ConfigError("activation level set must be unsigned");
  return {static_cast<std::uint64_t>(unsigned_levels.numerator(index)),
          static_cast<std::uint64_t>(unsigned_levels.max_numerator()), unsigned_levels.alpha()};
}

int FixedPointActivation::bits() const { return static_cast<int>(std::bit_width(raw_max)); }

Accumulator make_accumulator(const LevelSet& ls, int act_bits, MacMode mode) {
  Accumulator acc;
  acc.mode = mode;
  acc.frac_bits = mode == MacMode::Exact ? ls.frac_bits() : 0;
  const int need = acc.frac_bits + 1 + act_bits + kMacHeadroomBits;
  if (need > kWideBits) {
    throw ArithmeticError("shift-add accumulator would need " + std::to_string(need) +
                          " bits for " + ls.describe() + " x " + std::to_string(act_bits) +
                          "-bit activations");
  }
  return acc;
}

Wide shift_mul(int exponent, std::uint64_t raw, int frac_bits) {
  const int shift = exponent + frac_bits;
  if (shift < 0) throw ArithmeticError("shift_mul: exponent below the accumulator denominator");
  if (shift + static_cast<int>(std::bit_width(raw)) > kWideBits) {
    throw ArithmeticError("shift_mul: partial product overflows the accumulator");
  }
  return static_cast<Wide>(raw) << shift;
}

std::int64_t shift_mul_truncating(int exponent, std::uint64_t raw) {
  if (exponent == 0) return static_cast<std::int64_t>(raw);
  if (exponent > 0) {
    if (exponent + static_cast<int>(std::bit_width(raw)) > 62) {
      throw ArithmeticError("shift_mul_truncating: left shift overflows");
    }
    return static_cast<std::int64_t>(raw << exponent);
  }
  if (-exponent >= 64) return 0;
  return static_cast<std::int64_t>(raw >> -exponent);
}

Accumulator& apot_mac(std::size_t weight_index, const LevelSet& ls, const FixedPointActivation& act,
                      Accumulator& acc) {
  const auto terms = ls.terms(weight_index);
  for (const PotTerm& t : terms) {
    Wide partial = acc.mode == MacMode::Exact
                       ? shift_mul(t.exponent, act.raw, acc.frac_bits)
                       : static_cast<Wide>(shift_mul_truncating(t.exponent, act.raw));
    acc.value += t.sign < 0 ? -partial : partial;
  }
  acc.shift_adds += terms.size();
  acc.slots += static_cast<std::uint64_t>(ls.max_terms());
  acc.macs += 1;
  return acc;
}

double accumulator_value(const Accumulator& acc, const LevelSet& ls, double act_alpha,
                         std::uint64_t act_raw_max) {
  const double units = std::ldexp(static_cast<double>(acc.value), -acc.frac_bits);
  return units * ls.gamma() * (act_alpha / static_cast<double>(act_raw_max));
}

std::vector<Wide> shiftadd_matvec(std::span<const std::uint32_t> weights, std::size_t rows,
                                  std::size_t cols, const LevelSet& ls,
                                  std::span<const std::uint64_t> act_raw, int act_bits,
                                  MacCounters* counters) {
  if (weights.size() != rows * cols) throw InputError("shiftadd_matvec: weight shape mismatch");
  if (act_raw.size() != cols) throw InputError("shiftadd_matvec: activation length mismatch");
  for (std::uint32_t idx : weights) {
    if (idx >= ls.size()) throw InputError("shiftadd_matvec: weight index out of range");
  }
  const Accumulator proto = make_accumulator(ls, act_bits);
  const std::uint64_t limit = act_bits >= 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << act_bits);
  for (std::uint64_t r : act_raw) {
    if (r >= limit) throw InputError("shiftadd_matvec: activation code exceeds its bit-width");
  }

  std::vector<Wide> out(rows);
  std::vector<MacCounters> per_row(rows);
  const std::ptrdiff_t n_rows = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t r = 0; r < n_rows; ++r) {
    Accumulator acc = proto;
    for (std::size_t c = 0; c < cols; ++c) {
      const FixedPointActivation act{act_raw[c], limit - 1, 1.0};
      apot_mac(weights[static_cast<std::size_t>(r) * cols + c], ls, act, acc);
    }
    out[r] = acc.value;
    per_row[r] = {acc.macs, acc.shift_adds, acc.slots};
  }
  if (counters) {
    for (const auto& c : per_row) *counters += c;
  }
  return out;
}

std::uint64_t count_mac_mismatches(const LevelSet& ls, int act_bits) {
  const Accumulator proto = make_accumulator(ls, act_bits);
  const std::uint64_t codes = std::uint64_t{1} << act_bits;
  const std::ptrdiff_t n_levels = static_cast<std::ptrdiff_t>(ls.size());
  std::vector<Wide> numerators(ls.size());
  for (std::size_t i = 0; i < ls.size(); ++i) numerators[i] = ls.numerator(i);
  std::uint64_t mismatches = 0;
#pragma omp parallel for schedule(static) reduction(+ : mismatches)
  for (std::ptrdiff_t i = 0; i < n_levels; ++i) {
    const Wide num = numerators[static_cast<std::size_t>(i)];
    for (std::uint64_t raw = 0; raw < codes; ++raw) {
      Accumulator acc = proto;
      apot_mac(static_cast<std::size_t>(i), ls, {raw, codes - 1, 1.0}, acc);
      if (acc.value != num * static_cast<Wide>(raw)) ++mismatches;
    }
  }
  return mismatches;
}

}  // namespace apot
