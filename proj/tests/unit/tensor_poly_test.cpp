#include "doctest.h"

#include <cstdint>
#include <map>

#include "sigvol/rng.hpp"
#include "sigvol/tensor_poly.hpp"
#include "sigvol/word.hpp"

using namespace sigvol;

namespace {

// Brute-force interleaving oracle: choose which of the p+q output slots take
// u's letters. Independent of the recursive product it checks.
std::map<Word, double> shuffle_words_oracle(const Word& u, const Word& v) {
  std::map<Word, double> out;
  const int n = u.length() + v.length();
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << n); ++mask) {
    if (__builtin_popcountll(mask) != u.length()) continue;
    Word w;
    int iu = 0, iv = 0;
    for (int pos = 0; pos < n; ++pos)
      w = w.append((mask >> pos) & 1u ? u.letter(iu++) : v.letter(iv++));
    out[w] += 1.0;
  }
  return out;
}

TensorPoly random_sparse_poly(CounterRng& rng, int max_degree, int cap) {
  TensorPoly p(cap);
  const int terms = 1 + static_cast<int>(rng.next_u64() % 4);
  for (int k = 0; k < terms; ++k) {
    const int len = static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(max_degree + 1));
    const std::uint64_t bits = rng.next_u64() & ((std::uint64_t{1} << len) - 1);
    p.accumulate(Word(len == 0 ? 0 : bits, len), 2.0 * rng.uniform() - 1.0);
  }
  return p;
}

}  // namespace

TEST_CASE("word packing round-trips through digits") {
  for (const char* s : {"", "1", "2", "12", "21", "211", "1221"}) {
    Word w = Word::from_digits(s);
    CHECK(w.to_string() == (w.empty() ? "∅" : s));
  }
  CHECK(Word::from_digits("211").letter(0) == 2);
  CHECK(Word::from_digits("211").letter(2) == 1);
  CHECK(Word::from_digits("12").last_letter() == 2);
  CHECK(Word::from_digits("12").drop_last() == Word::from_digits("1"));
  CHECK_THROWS_AS(Word::from_digits("13"), std::invalid_argument);
}

TEST_CASE("shuffle of single letters gives both interleavings") {
  TensorPoly a(2, {{Word::from_digits("1"), 1.0}});
  TensorPoly b(2, {{Word::from_digits("2"), 1.0}});
  TensorPoly s = shuffle(a, b, 2);
  CHECK(s.term_count() == 2);
  CHECK(s.coeff(Word::from_digits("12")) == 1.0);
  CHECK(s.coeff(Word::from_digits("21")) == 1.0);
}

TEST_CASE("empty word is the shuffle unit") {
  CounterRng rng(7, 0);
  for (int k = 0; k < 20; ++k) {
    TensorPoly a = random_sparse_poly(rng, 3, 5);
    TensorPoly u = TensorPoly::unit(5);
    CHECK(max_abs_coeff_diff(shuffle(u, a, 5), a) == 0.0);
    CHECK(max_abs_coeff_diff(shuffle(a, u, 5), a) == 0.0);
  }
}

TEST_CASE("word shuffles match the brute-force interleaving oracle") {
  TensorPoly a(3, {{Word::from_digits("11"), 1.0}});
  TensorPoly b(3, {{Word::from_digits("2"), 1.0}});
  TensorPoly s = shuffle(a, b, 3);
  auto expect = shuffle_words_oracle(Word::from_digits("11"), Word::from_digits("2"));
  CHECK(expect.size() == 3);
  for (const auto& [w, c] : expect) CHECK(s.coeff(w) == c);
  CHECK(s.term_count() == expect.size());

  CounterRng rng(11, 0);
  for (int k = 0; k < 50; ++k) {
    const int lu = static_cast<int>(rng.next_u64() % 4);
    const int lv = static_cast<int>(rng.next_u64() % 4);
    Word u(lu == 0 ? 0 : (rng.next_u64() & ((1u << lu) - 1)), lu);
    Word v(lv == 0 ? 0 : (rng.next_u64() & ((1u << lv) - 1)), lv);
    TensorPoly s2 = shuffle(TensorPoly(6, {{u, 1.0}}), TensorPoly(6, {{v, 1.0}}), 6);
    auto oracle = shuffle_words_oracle(u, v);
    CHECK(s2.term_count() == oracle.size());
    double total = 0.0;
    for (const auto& [w, c] : oracle) {
      CHECK(s2.coeff(w) == c);
      total += c;
    }
    // binomial count of interleavings, multiplicities included
    double binom = 1.0;
    for (int i = 1; i <= lu; ++i) binom = binom * (lv + i) / i;
    CHECK(total == doctest::Approx(binom).epsilon(1e-12));
  }
}

TEST_CASE("shuffle is commutative and associative") {
  CounterRng rng(13, 0);
  for (int k = 0; k < 30; ++k) {
    TensorPoly a = random_sparse_poly(rng, 3, 9);
    TensorPoly b = random_sparse_poly(rng, 3, 9);
    TensorPoly c = random_sparse_poly(rng, 3, 9);
    CHECK(max_abs_coeff_diff(shuffle(a, b, 9), shuffle(b, a, 9)) <= 1e-12);
    CHECK(max_abs_coeff_diff(shuffle(shuffle(a, b, 9), c, 9),
                             shuffle(a, shuffle(b, c, 9), 9)) <= 1e-12);
  }
}

TEST_CASE("shuffle_exp of -kappa*1 reproduces the alternating power series") {
  const double kappa = 0.7;
  TensorPoly a(3, {{Word::from_digits("1"), -kappa}});
  TensorPoly e = shuffle_exp(a, 3);
  CHECK(e.coeff(Word()) == 1.0);
  CHECK(e.coeff(Word::from_digits("1")) == doctest::Approx(-kappa).epsilon(1e-15));
  CHECK(e.coeff(Word::from_digits("11")) == doctest::Approx(kappa * kappa).epsilon(1e-15));
  CHECK(e.coeff(Word::from_digits("111")) ==
        doctest::Approx(-kappa * kappa * kappa).epsilon(1e-15));
  CHECK(e.term_count() == 4);
}

TEST_CASE("shuffle_exp of a two-letter generator fills every word with letter weights") {
  const double lambda = -1.3, sigma = 0.4;
  TensorPoly a(2, {{Word::from_digits("1"), lambda}, {Word::from_digits("2"), sigma}});
  TensorPoly e = shuffle_exp(a, 2);
  CHECK(e.coeff(Word()) == 1.0);
  CHECK(e.coeff(Word::from_digits("1")) == doctest::Approx(lambda));
  CHECK(e.coeff(Word::from_digits("2")) == doctest::Approx(sigma));
  CHECK(e.coeff(Word::from_digits("11")) == doctest::Approx(lambda * lambda));
  CHECK(e.coeff(Word::from_digits("12")) == doctest::Approx(lambda * sigma));
  CHECK(e.coeff(Word::from_digits("21")) == doctest::Approx(lambda * sigma));
  CHECK(e.coeff(Word::from_digits("22")) == doctest::Approx(sigma * sigma));
}

TEST_CASE("shuffle_exp of zero is the unit and constant terms are rejected") {
  CHECK(max_abs_coeff_diff(shuffle_exp(TensorPoly(4), 4), TensorPoly::unit(4)) == 0.0);
  TensorPoly bad(2, {{Word(), 0.5}});
  CHECK_THROWS_AS(shuffle_exp(bad, 2), std::invalid_argument);
}

TEST_CASE("append_letter shifts words and drops the top level") {
  const double v0 = 0.1, drift = -0.15, eta = 1.2;
  TensorPoly a(3, {{Word(), v0}, {Word::from_digits("1"), drift}, {Word::from_digits("2"), eta}});
  TensorPoly p = append_letter(a, 2, 3);
  CHECK(p.coeff(Word()) == 0.0);
  CHECK(p.coeff(Word::from_digits("2")) == v0);
  CHECK(p.coeff(Word::from_digits("12")) == drift);
  CHECK(p.coeff(Word::from_digits("22")) == eta);
  CHECK(p.term_count() == 3);

  CHECK(append_letter(TensorPoly(3), 2, 3).is_zero());
  TensorPoly unit = TensorPoly::unit(1);
  CHECK(append_letter(unit, 1, 1).coeff(Word::from_digits("1")) == 1.0);

  TensorPoly full(1, {{Word::from_digits("1"), 3.0}});
  CHECK(append_letter(full, 2, 1).is_zero());  // level-1 words would exceed the cap
}

TEST_CASE("project keeps low levels and composes by minimum") {
  TensorPoly a(2, {{Word(), 1.0}, {Word::from_digits("1"), 2.0}, {Word::from_digits("11"), 3.0}});
  TensorPoly p1 = project(a, 1);
  CHECK(p1.level_cap() == 1);
  CHECK(p1.coeff(Word()) == 1.0);
  CHECK(p1.coeff(Word::from_digits("1")) == 2.0);
  CHECK(p1.term_count() == 2);
  CHECK(max_abs_coeff_diff(project(a, a.level_cap()), a) == 0.0);
  CHECK(max_abs_coeff_diff(project(project(a, 2), 1), project(a, 1)) == 0.0);
  CHECK(max_abs_coeff_diff(project(project(a, 1), 2), project(a, 1)) == 0.0);
}

TEST_CASE("add and scale keep canonical form") {
  TensorPoly a(1, {{Word::from_digits("1"), 1.0}});
  TensorPoly b(1, {{Word::from_digits("1"), -1.0}});
  CHECK(add(a, b).is_zero());
  CHECK(scale(a, 0.0).is_zero());
  TensorPoly c = add(TensorPoly(1, {{Word::from_digits("1"), 2.0}}),
                     TensorPoly(1, {{Word::from_digits("2"), 3.0}}));
  CHECK(c.coeff(Word::from_digits("1")) == 2.0);
  CHECK(c.coeff(Word::from_digits("2")) == 3.0);
}

TEST_CASE("concatenation product respects word order and the cap") {
  TensorPoly a(3, {{Word::from_digits("1"), 2.0}, {Word(), 1.0}});
  TensorPoly b(3, {{Word::from_digits("2"), 3.0}});
  TensorPoly c = concat(a, b, 3);
  CHECK(c.coeff(Word::from_digits("12")) == 6.0);
  CHECK(c.coeff(Word::from_digits("2")) == 3.0);
  CHECK(c.coeff(Word::from_digits("21")) == 0.0);
  TensorPoly trunc = concat(TensorPoly(2, {{Word::from_digits("11"), 1.0}}),
                            TensorPoly(2, {{Word::from_digits("2"), 1.0}}), 2);
  CHECK(trunc.is_zero());
}

TEST_CASE("rendering matches the documented term format") {
  TensorPoly a(2, {{Word(), 0.1}, {Word::from_digits("1"), 0.15}, {Word::from_digits("2"), 1.2}});
  CHECK(a.to_string() == "0.1*∅ + 0.15*1 + 1.2*2");
  TensorPoly b(1, {{Word(), 0.5}, {Word::from_digits("1"), -0.25}});
  CHECK(b.to_string() == "0.5*∅ - 0.25*1");
  CHECK(TensorPoly(3).to_string() == "0");
}

TEST_CASE("words per level double with length") {
  for (int n = 0; n <= 6; ++n) {
    int count = 0;
    for (std::uint64_t bits = 0; bits < (std::uint64_t{1} << n); ++bits) {
      Word w(bits, n);
      CHECK(w.length() == n);
      ++count;
    }
    CHECK(count == (1 << n));
  }
}
