#include <doctest.h>

#include <random>

#include "apot/cost.hpp"
#include "apot/errors.hpp"
#include "apot/reference.hpp"
#include "apot/shiftadd.hpp"

using namespace apot;

TEST_CASE("single shifts") {
  CHECK(shift_mul(0, 13, 0) == 13);
  CHECK(shift_mul(3, 5, 0) == 40);
  // 2^-2 * 12 = 3, held as 12 units of 2^-2.
  CHECK(shift_mul(-2, 12, 2) == 12);
  CHECK(shift_mul(-2, 12, 5) == 96);
  CHECK(shift_mul_truncating(-2, 13) == 3);
  CHECK(shift_mul_truncating(2, 13) == 52);
}

TEST_CASE("exhaustive MAC agreement with integer products") {
  for (int b = 2; b <= 6; ++b) {
    for (bool s : {true, false}) {
      const int m = s ? b - 1 : b;
      std::vector<LevelSet> sets{build_uniform(1.0, b, s), build_pot(1.0, b, s)};
      for (int k = 1; k <= m; ++k) {
        if (m % k == 0 || (k == 2 && m % 2 == 1)) sets.push_back(build_apot(1.0, b, k, s));
      }
      for (const auto& ls : sets) {
        for (int a = 1; a <= 8; ++a) {
          CAPTURE(ls.describe());
          CAPTURE(a);
          CHECK(count_mac_mismatches(ls, a) == 0);
        }
      }
    }
  }
}

TEST_CASE("accumulator value equals the real product") {
  const LevelSet ls = build_apot(1.5, 5, 2, true);
  for (std::size_t i = 0; i < ls.size(); ++i) {
    for (std::uint64_t raw : {0u, 1u, 7u, 15u}) {
      const auto act = FixedPointActivation::uniform(raw, 4, 2.0);
      Accumulator acc = make_accumulator(ls, 4);
      apot_mac(i, ls, act, acc);
      const double v = accumulator_value(acc, ls, act.alpha, act.raw_max);
      CHECK(v == doctest::Approx(ls.level(i) * act.value()).epsilon(1e-14).scale(1e-300));
      CHECK(acc.slots == static_cast<std::uint64_t>(ls.max_terms()));
    }
  }
}

TEST_CASE("zero weight costs no shift-adds") {
  const LevelSet ls = build_apot(1.0, 4, 2, true);
  Accumulator acc = make_accumulator(ls, 4);
  apot_mac(ls.zero_index(), ls, FixedPointActivation::uniform(9, 4, 1.0), acc);
  CHECK(acc.value == 0);
  CHECK(acc.shift_adds == 0);
  CHECK(acc.macs == 1);
}

TEST_CASE("k = 2 halves the shift-add slots of k = 1") {
  for (int b : {5, 7}) {
    const LevelSet u = build_apot(1.0, b, 1, true);
    const LevelSet a = build_apot(1.0, b, 2, true);
    CHECK(u.max_terms() == b - 1);
    CHECK(a.max_terms() == (b - 1) / 2);
    const double ratio = static_cast<double>(a.max_terms()) / u.max_terms();
    CHECK(ratio == doctest::Approx(0.5).epsilon(0.01));
  }
}

TEST_CASE("parallel matvec matches the serial reference") {
  std::mt19937_64 rng(21);
  for (const LevelSet& ls : {build_apot(1.0, 5, 2, true), build_pot(1.0, 4, true),
                             build_uniform(1.0, 6, true), build_apot(1.0, 7, 3, true)}) {
    const std::size_t rows = 37;
    const std::size_t cols = 129;
    std::uniform_int_distribution<std::uint32_t> wi(0, static_cast<std::uint32_t>(ls.size() - 1));
    std::uniform_int_distribution<std::uint64_t> xi(0, 255);
    std::vector<std::uint32_t> w(rows * cols);
    std::vector<std::uint64_t> x(cols);
    for (auto& v : w) v = wi(rng);
    for (auto& v : x) v = xi(rng);
    MacCounters c;
    const auto got = shiftadd_matvec(w, rows, cols, ls, x, 8, &c);
    CHECK(got == reference::matvec(w, rows, cols, ls, x));
    CHECK(c.macs == rows * cols);
    CHECK(c.slots == rows * cols * static_cast<std::uint64_t>(ls.max_terms()));
    CHECK(c.shift_adds <= c.slots);
  }
}

TEST_CASE("slot count agrees with the cost model") {
  LayerShape fc;
  fc.c_out = 10;
  fc.c_in = 64;
  fc.weight_bits = 5;
  fc.act_bits = 4;
  CostConfig cfg;
  const LevelSet ls = build_apot(1.0, 5, 2, true);
  std::vector<std::uint32_t> w(640, static_cast<std::uint32_t>(ls.size() - 1));
  std::vector<std::uint64_t> x(64, 3);
  MacCounters c;
  shiftadd_matvec(w, 10, 64, ls, x, 4, &c);
  CHECK(c.slots == shift_adds_for_layer(fc, cfg));
}

TEST_CASE("truncating mode loses low bits") {
  const LevelSet ls = build_pot(1.0, 4, true);
  CHECK(count_mac_mismatches(ls, 4) == 0);
  // Literal r >> 3 on r = 5 drops everything.
  CHECK(shift_mul_truncating(-3, 5) == 0);
  Accumulator exact = make_accumulator(ls, 4);
  Accumulator trunc = make_accumulator(ls, 4, MacMode::Truncating);
  const auto act = FixedPointActivation::uniform(5, 4, 1.0);
  apot_mac(ls.zero_index() + 1, ls, act, exact);
  apot_mac(ls.zero_index() + 1, ls, act, trunc);
  CHECK(accumulator_value(exact, ls, 1.0, act.raw_max) > 0.0);
  CHECK(accumulator_value(trunc, ls, 1.0, act.raw_max) == 0.0);
}

TEST_CASE("activation codes") {
  const auto u = FixedPointActivation::uniform(15, 4, 2.0);
  CHECK(u.value() == 2.0);
  CHECK(u.bits() == 4);
  const LevelSet a = build_apot(1.0, 4, 2, false);
  const auto top = FixedPointActivation::from_level(a.size() - 1, a);
  CHECK(top.value() == 1.0);
  CHECK_THROWS(FixedPointActivation::uniform(16, 4, 1.0));
  CHECK_THROWS_AS(FixedPointActivation::from_level(0, build_apot(1.0, 4, 2, true)), ConfigError);
}
