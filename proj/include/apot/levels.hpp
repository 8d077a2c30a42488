#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace apot {

enum class SchemeKind { Uniform, PoT, APoT };

/// Quantizer family plus the APoT base bit-width k. Uniform reports k = 1;
/// PoT reports k = magnitude bits (one PoT term per level).
struct Scheme {
  SchemeKind kind = SchemeKind::APoT;
  int base_bits = 2;

  friend bool operator==(const Scheme&, const Scheme&) = default;
};

std::string to_string(SchemeKind kind);
SchemeKind parse_scheme_kind(const std::string& name);

/// One additive term of a level: sign * 2^exponent (exponent <= 0).
struct PotTerm {
  int sign = 1;
  int exponent = 0;

  friend bool operator==(const PotTerm&, const PotTerm&) = default;
};

/// An immutable, sorted set of quantization levels.
///
/// Every level is stored as a signed "p-sum" (a sum of powers of two, exact in
/// double precision) together with the terms that produce it. The real level
/// is alpha * psum / max_psum, i.e. gamma * psum with gamma = alpha / max_psum.
/// Division by max_psum happens last so that the top level is alpha exactly
/// and negative levels mirror positive ones bit for bit.
class LevelSet {
 public:
  Scheme scheme() const { return scheme_; }
  int bits() const { return bits_; }
  bool is_signed() const { return signed_; }
  double alpha() const { return alpha_; }
  double gamma() const { return alpha_ / max_psum_; }
  /// Largest achievable p-sum (before gamma scaling).
  double max_psum() const { return max_psum_; }
  /// Magnitude bits: bits - 1 when signed.
  int magnitude_bits() const { return signed_ ? bits_ - 1 : bits_; }
  /// Number of additive PoT terms a level may use (n, or n + 1 for odd APoT).
  int max_terms() const { return max_terms_; }
  /// Smallest power-of-two exponent in use, as a positive count of fractional
  /// bits: every p-sum times 2^frac_bits() is an integer.
  int frac_bits() const { return frac_bits_; }

  std::size_t size() const { return values_.size(); }
  std::span<const double> levels() const { return values_; }
  /// Levels of the same set at alpha = 1.
  std::span<const double> unit_levels() const { return unit_values_; }
  double level(std::size_t index) const { return values_.at(index); }
  double psum(std::size_t index) const { return psums_.at(index); }
  std::span<const PotTerm> terms(std::size_t index) const;
  std::size_t zero_index() const { return zero_index_; }

  /// psum(index) * 2^frac_bits() as an exact integer. Throws ArithmeticError
  /// when the set needs more than 62 fractional bits.
  std::int64_t numerator(std::size_t index) const;
  std::int64_t max_numerator() const;

  /// Same levels and terms with a different clipping threshold.
  LevelSet rescaled(double alpha) const;

  std::string describe() const;

 private:
  friend class LevelSetBuilder;
  LevelSet() = default;

  Scheme scheme_{};
  int bits_ = 0;
  bool signed_ = false;
  double alpha_ = 1.0;
  double max_psum_ = 1.0;
  int max_terms_ = 0;
  int frac_bits_ = 0;
  std::size_t zero_index_ = 0;
  std::vector<double> values_;
  std::vector<double> unit_values_;
  std::vector<double> psums_;
  std::vector<std::size_t> term_offsets_;  // size() + 1 entries
  std::vector<PotTerm> term_pool_;
};

/// Uniform levels alpha * {0, +-1/(2^(b-1)-1), ..., +-1} (signed) or
/// alpha * {0, 1/(2^b-1), ..., 1} (unsigned).
LevelSet build_uniform(double alpha, int bits, bool is_signed);

/// Powers-of-two levels. Signed: alpha * {0, +-2^(-2^(b-1)+1), ..., +-1}.
/// Unsigned: alpha * ({0} U {2^-j : j = 0 .. 2^b - 2}).
LevelSet build_pot(double alpha, int bits, bool is_signed);

/// Additive powers-of-two levels with base bit-width k. Magnitude bits m must
/// be a multiple of k, or odd with k = 2 (one extra single-choice term).
LevelSet build_apot(double alpha, int bits, int base_bits, bool is_signed);

/// Dispatch on scheme kind; base_bits is ignored for Uniform and PoT.
LevelSet build_levels(SchemeKind kind, double alpha, int bits, int base_bits,
                      bool is_signed);

struct Projection {
  double level = 0.0;
  std::size_t index = 0;
};

/// Nearest level to x. Exact midpoints go to the smaller-magnitude level.
/// Values outside the level range saturate to the boundary level; no clipping
/// to alpha is applied beyond that. Throws InputError for non-finite x.
Projection project(double x, const LevelSet& ls);

/// Shift descriptors reconstructing level `index`: sum(sign * 2^exponent)
/// equals psum(index). Empty for the zero level.
std::vector<PotTerm> pot_term_exponents(std::size_t index, const LevelSet& ls);

/// Element-wise projection (OpenMP over elements).
void project_indices(std::span<const double> x, const LevelSet& ls,
                     std::span<std::uint32_t> out);

/// Level indices plus the set they refer to.
struct QuantizedTensor {
  std::vector<std::uint32_t> indices;
  std::shared_ptr<const LevelSet> level_set;
  std::vector<std::size_t> shape;

  std::size_t element_count() const { return indices.size(); }
  std::vector<double> dequantize() const;
};

QuantizedTensor quantize_tensor(std::span<const double> x,
                                std::shared_ptr<const LevelSet> ls,
                                std::vector<std::size_t> shape = {});

}  // namespace apot
