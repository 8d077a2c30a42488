#include "apot/levels.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "apot/errors.hpp"

namespace apot {

namespace {

constexpr int kMaxBits = 12;
// Keeps every level a normal double even after scaling by a small alpha.
constexpr int kMaxExponentMagnitude = 900;

void check_alpha(double alpha) {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) {
    throw ConfigError("clipping threshold alpha must be positive and finite, got " +
                      std::to_string(alpha));
  }
}

void check_bits(int bits, int min_bits, const char* what) {
  if (bits < min_bits || bits > kMaxBits) {
    std::ostringstream os;
    os << what << ": bit-width " << bits << " outside supported range [" << min_bits << ", "
       << kMaxBits << "]";
    throw ConfigError(os.str());
  }
}

}  // namespace

std::string to_string(SchemeKind kind) {
  switch (kind) {
    case SchemeKind::Uniform:
      return "uniform";
    case SchemeKind::PoT:
      return "pot";
    case SchemeKind::APoT:
      return "apot";
  }
  return "unknown";
}

SchemeKind parse_scheme_kind(const std::string& name) {
  if (name == "uniform") return SchemeKind::Uniform;
  if (name == "pot") return SchemeKind::PoT;
  if (name == "apot") return SchemeKind::APoT;
  throw ConfigError("unknown scheme '" + name + "' (expected uniform, pot or apot)");
}

// Enumerates every combination of one choice per additive term. Each term
// offers "zero" plus a list of exponents e meaning 2^-e.
class LevelSetBuilder {
 public:
  static LevelSet build(Scheme scheme, int bits, bool is_signed, double alpha,
                        const std::vector<std::vector<int>>& term_choices) {
    check_alpha(alpha);
    for (const auto& choices : term_choices) {
      for (int e : choices) {
        if (e < 0 || e > kMaxExponentMagnitude) {
          throw ConfigError("level set needs 2^-" + std::to_string(e) +
                            ", outside the representable exponent range");
        }
      }
    }

    // psum -> terms; std::map keeps magnitudes sorted and deduplicated.
    std::map<double, std::vector<PotTerm>> magnitudes;
    std::vector<std::size_t> pick(term_choices.size(), 0);  // 0 = zero choice
    for (;;) {
      std::vector<PotTerm> terms;
      double psum = 0.0;
      for (std::size_t t = 0; t < term_choices.size(); ++t) {
        if (pick[t] == 0) continue;
        const int e = term_choices[t][pick[t] - 1];
        terms.push_back({1, -e});
        psum += std::ldexp(1.0, -e);
      }
      std::sort(terms.begin(), terms.end(),
                [](const PotTerm& a, const PotTerm& b) { return a.exponent > b.exponent; });
      auto [it, inserted] = magnitudes.emplace(psum, terms);
      if (!inserted && terms.size() < it->second.size()) it->second = terms;

      std::size_t t = 0;
      for (; t < term_choices.size(); ++t) {
        if (++pick[t] <= term_choices[t].size()) break;
        pick[t] = 0;
      }
      if (t == term_choices.size()) break;
    }

    LevelSet ls;
    ls.scheme_ = scheme;
    ls.bits_ = bits;
    ls.signed_ = is_signed;
    ls.alpha_ = alpha;
    ls.max_psum_ = magnitudes.rbegin()->first;
    ls.max_terms_ = static_cast<int>(term_choices.size());
    ls.frac_bits_ = 0;
    for (const auto& choices : term_choices) {
      for (int e : choices) ls.frac_bits_ = std::max(ls.frac_bits_, e);
    }

    auto push = [&ls](double psum, const std::vector<PotTerm>& terms, int sign) {
      ls.psums_.push_back(sign * psum);
      ls.term_offsets_.push_back(ls.term_pool_.size());
      for (PotTerm term : terms) {
        term.sign = sign;
        ls.term_pool_.push_back(term);
      }
    };
    if (is_signed) {
      for (auto it = magnitudes.rbegin(); it != magnitudes.rend(); ++it) {
        if (it->first != 0.0) push(it->first, it->second, -1);
      }
    }
    for (const auto& [psum, terms] : magnitudes) push(psum, terms, 1);
    ls.term_offsets_.push_back(ls.term_pool_.size());

    ls.unit_values_.reserve(ls.psums_.size());
    for (std::size_t i = 0; i < ls.psums_.size(); ++i) {
      const double p = ls.psums_[i];
      if (p == 0.0) ls.zero_index_ = i;
      const double unit = std::abs(p) / ls.max_psum_;
      ls.unit_values_.push_back(p < 0.0 ? -unit : unit);
    }
    ls.values_.reserve(ls.psums_.size());
    for (double u : ls.unit_values_) ls.values_.push_back(u < 0.0 ? -(alpha * -u) : alpha * u);
    return ls;
  }
};

std::span<const PotTerm> LevelSet::terms(std::size_t index) const {
  if (index >= size()) throw InputError("level index out of range");
  return std::span<const PotTerm>(term_pool_).subspan(
      term_offsets_[index], term_offsets_[index + 1] - term_offsets_[index]);
}

std::int64_t LevelSet::numerator(std::size_t index) const {
  if (frac_bits_ > 62) {
    throw ArithmeticError("level set needs " + std::to_string(frac_bits_) +
                          " fractional bits; integer numerators limited to 62");
  }
  return static_cast<std::int64_t>(std::ldexp(psum(index), frac_bits_));
}

std::int64_t LevelSet::max_numerator() const {
  if (frac_bits_ > 62) {
    throw ArithmeticError("level set needs more than 62 fractional bits");
  }
  return static_cast<std::int64_t>(std::ldexp(max_psum_, frac_bits_));
}

LevelSet LevelSet::rescaled(double alpha) const {
  check_alpha(alpha);
  LevelSet out = *this;
  out.alpha_ = alpha;
  for (std::size_t i = 0; i < unit_values_.size(); ++i) {
    const double u = unit_values_[i];
    out.values_[i] = u < 0.0 ? -(alpha * -u) : alpha * u;
  }
  return out;
}

std::string LevelSet::describe() const {
  std::ostringstream os;
  os << to_string(scheme_.kind) << "(alpha=" << alpha_ << ", b=" << bits_;
  if (scheme_.kind == SchemeKind::APoT) os << ", k=" << scheme_.base_bits;
  os << (signed_ ? ", signed" : ", unsigned") << ", " << size() << " levels)";
  return os.str();
}

LevelSet build_uniform(double alpha, int bits, bool is_signed) {
  check_bits(bits, is_signed ? 2 : 1, "uniform");
  check_alpha(alpha);
  const int m = is_signed ? bits - 1 : bits;
  // Fixed-point bits: term i is {0, 2^-i}.
  std::vector<std::vector<int>> terms;
  for (int i = 0; i < m; ++i) terms.push_back({i});
  return LevelSetBuilder::build({SchemeKind::Uniform, 1}, bits, is_signed, alpha, terms);
}

LevelSet build_pot(double alpha, int bits, bool is_signed) {
  check_bits(bits, 2, "pot");
  check_alpha(alpha);
  const int count = is_signed ? (1 << (bits - 1)) : (1 << bits) - 1;
  std::vector<int> exponents;
  for (int j = 0; j < count; ++j) exponents.push_back(j);
  const int m = is_signed ? bits - 1 : bits;
  return LevelSetBuilder::build({SchemeKind::PoT, m}, bits, is_signed, alpha, {exponents});
}

LevelSet build_apot(double alpha, int bits, int base_bits, bool is_signed) {
  check_bits(bits, is_signed ? 2 : 1, "apot");
  check_alpha(alpha);
  const int m = is_signed ? bits - 1 : bits;
  const int k = base_bits;
  std::vector<std::vector<int>> terms;
  if (k >= 1 && m % k == 0) {
    const int n = m / k;
    for (int i = 0; i < n; ++i) {
      std::vector<int> choices;
      for (int j = 0; j <= (1 << k) - 2; ++j) choices.push_back(i + j * n);
      terms.push_back(std::move(choices));
    }
  } else if (k == 2 && m % 2 == 1) {
    const int n = (m - 1) / 2;
    for (int i = 0; i < n; ++i) terms.push_back({i, i + n, i + 2 * n + 1});
    terms.push_back({2 * n});
  } else {
    std::ostringstream os;
    os << "apot: unsupported (bits=" << bits << ", k=" << k << ", "
       << (is_signed ? "signed" : "unsigned") << "); magnitude bits " << m
       << " must be a multiple of k, or odd with k=2";
    throw ConfigError(os.str());
  }
  return LevelSetBuilder::build({SchemeKind::APoT, k}, bits, is_signed, alpha, terms);
}

LevelSet build_levels(SchemeKind kind, double alpha, int bits, int base_bits, bool is_signed) {
  switch (kind) {
    case SchemeKind::Uniform:
      return build_uniform(alpha, bits, is_signed);
    case SchemeKind::PoT:
      return build_pot(alpha, bits, is_signed);
    case SchemeKind::APoT:
      return build_apot(alpha, bits, base_bits, is_signed);
  }
  throw ConfigError("unknown scheme");
}

namespace {

std::size_t nearest_index(double x, std::span<const double> v) {
  const auto it = std::lower_bound(v.begin(), v.end(), x);
  if (it == v.begin()) return 0;
  if (it == v.end()) return v.size() - 1;
  const std::size_t hi = static_cast<std::size_t>(it - v.begin());
  const std::size_t lo = hi - 1;
  const double d_lo = x - v[lo];
  const double d_hi = v[hi] - x;
  if (d_lo < d_hi) return lo;
  if (d_hi < d_lo) return hi;
  return std::abs(v[lo]) <= std::abs(v[hi]) ? lo : hi;
}

}  // namespace

Projection project(double x, const LevelSet& ls) {
  if (!std::isfinite(x)) throw InputError("project: non-finite input");
  const std::size_t idx = nearest_index(x, ls.levels());
  return {ls.level(idx), idx};
}

std::vector<PotTerm> pot_term_exponents(std::size_t index, const LevelSet& ls) {
  const auto terms = ls.terms(index);
  return {terms.begin(), terms.end()};
}

void project_indices(std::span<const double> x, const LevelSet& ls,
                     std::span<std::uint32_t> out) {
  if (x.size() != out.size()) throw InputError("project_indices: size mismatch");
  const auto levels = ls.levels();
  const std::ptrdiff_t count = static_cast<std::ptrdiff_t>(x.size());
  bool bad = false;
#pragma omp parallel for schedule(static) reduction(|| : bad)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    if (!std::isfinite(x[i])) {
      bad = true;
      continue;
    }
    out[i] = static_cast<std::uint32_t>(nearest_index(x[i], levels));
  }
  if (bad) throw InputError("project: non-finite input");
}

std::vector<double> QuantizedTensor::dequantize() const {
  if (!level_set) throw UsageError("QuantizedTensor without a level set");
  std::vector<double> out(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) out[i] = level_set->level(indices[i]);
  return out;
}

QuantizedTensor quantize_tensor(std::span<const double> x, std::shared_ptr<const LevelSet> ls,
                                std::vector<std::size_t> shape) {
  if (!ls) throw UsageError("quantize_tensor: null level set");
  if (shape.empty()) shape = {x.size()};
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  if (n != x.size()) throw InputError("quantize_tensor: shape does not match element count");
  QuantizedTensor q;
  q.indices.resize(x.size());
  project_indices(x, *ls, q.indices);
  q.level_set = std::move(ls);
  q.shape = std::move(shape);
  return q;
}

}  // namespace apot
