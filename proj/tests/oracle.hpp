#pragma once

// Exact rational reference level sets, written from the definitions without
// touching the library's builder.

#include <algorithm>
#include <cmath>
#include <span>
#include <set>
#include <stdexcept>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "apot/levels.hpp"

namespace oracle {

using Rational = boost::multiprecision::cpp_rational;
using boost::multiprecision::cpp_int;

inline Rational pow2_neg(int e) { return Rational(cpp_int(1), cpp_int(1) << e); }

inline Rational exact(double v) {
  // Doubles are dyadic rationals; decompose without rounding.
  int exp = 0;
  const double mant = std::frexp(v, &exp);
  const auto scaled = static_cast<long long>(std::ldexp(mant, 53));
  Rational r(scaled);
  const int shift = exp - 53;
  if (shift >= 0) return r * Rational(cpp_int(1) << shift);
  return r / Rational(cpp_int(1) << -shift);
}

// Unsigned magnitudes before normalization, as a sorted set.
inline std::set<Rational> raw_magnitudes(apot::SchemeKind kind, int m, int k) {
  std::set<Rational> out;
  switch (kind) {
    case apot::SchemeKind::Uniform:
      for (int i = 0; i < (1 << m); ++i) out.insert(Rational(i));
      return out;
    case apot::SchemeKind::PoT:
      out.insert(Rational(0));
      for (int j = 0; j <= (1 << m) - 2; ++j) out.insert(pow2_neg(j));
      return out;
    case apot::SchemeKind::APoT:
      break;
  }
  std::vector<std::vector<Rational>> terms;
  if (m % k == 0) {
    const int n = m / k;
    for (int i = 0; i < n; ++i) {
      std::vector<Rational> t{Rational(0)};
      for (int j = 0; j < (1 << k) - 1; ++j) t.push_back(pow2_neg(i + j * n));
      terms.push_back(t);
    }
  } else if (k == 2) {
    const int n = (m - 1) / 2;
    for (int i = 0; i < n; ++i) terms.push_back({Rational(0), pow2_neg(i), pow2_neg(i + n), pow2_neg(i + 2 * n + 1)});
    terms.push_back({Rational(0), pow2_neg(2 * n)});
  } else {
    throw std::invalid_argument("oracle: unsupported (m, k)");
  }
  out.insert(Rational(0));
  for (const auto& t : terms) {
    std::set<Rational> next;
    for (const auto& a : out) {
      for (const auto& b : t) next.insert(a + b);
    }
    out = std::move(next);
  }
  return out;
}

// Sorted unit levels (alpha = 1).
inline std::vector<Rational> unit_levels(apot::SchemeKind kind, int bits, int k, bool is_signed) {
  std::set<Rational> mags;
  if (kind == apot::SchemeKind::PoT && is_signed) {
    // Signed PoT: {0} U {+-2^-j : j = 0 .. 2^(b-1) - 1}.
    mags.insert(Rational(0));
    for (int j = 0; j <= (1 << (bits - 1)) - 1; ++j) mags.insert(pow2_neg(j));
  } else {
    mags = raw_magnitudes(kind, is_signed ? bits - 1 : bits, k);
  }
  const Rational top = *mags.rbegin();
  std::vector<Rational> out;
  for (const auto& v : mags) {
    out.push_back(v / top);
    if (is_signed && v != 0) out.push_back(-v / top);
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline std::vector<Rational> as_exact(std::span<const double> v) {
  std::vector<Rational> out;
  for (double x : v) out.push_back(exact(x));
  return out;
}

}  // namespace oracle
