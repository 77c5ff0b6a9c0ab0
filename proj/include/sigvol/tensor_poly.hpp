#pragma once

#include <cmath>
#include <cstdio>
#include <initializer_list>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>

#include "sigvol/word.hpp"

namespace sigvol {

// Sparse element of the truncated tensor algebra over {1,2}: a real
// coefficient per word, with every stored word of length <= level_cap and no
// stored coefficient exactly zero (canonical form).
class TensorPoly {
public:
  using Terms = std::map<Word, double>;

  explicit TensorPoly(int level_cap = 0) : cap_(check_cap(level_cap)) {}

  TensorPoly(int level_cap, std::initializer_list<std::pair<Word, double>> terms)
      : cap_(check_cap(level_cap)) {
    for (const auto& [w, c] : terms) accumulate(w, c);
  }

  static TensorPoly unit(int level_cap) {
    return TensorPoly(level_cap, {{Word(), 1.0}});
  }

  int level_cap() const { return cap_; }
  const Terms& terms() const { return terms_; }
  bool is_zero() const { return terms_.empty(); }
  std::size_t term_count() const { return terms_.size(); }

  double coeff(const Word& w) const {
    auto it = terms_.find(w);
    return it == terms_.end() ? 0.0 : it->second;
  }

  int max_degree() const {
    return terms_.empty() ? 0 : terms_.rbegin()->first.length();
  }

  // adds c on word w, keeping canonical form; words beyond the cap are dropped
  void accumulate(const Word& w, double c) {
    if (w.length() > cap_) return;
    auto [it, inserted] = terms_.try_emplace(w, c);
    if (!inserted) {
      it->second += c;
      if (it->second == 0.0) terms_.erase(it);
    } else if (c == 0.0) {
      terms_.erase(it);
    }
  }

  std::string to_string() const {
    if (terms_.empty()) return "0";
    std::string out;
    bool first = true;
    char buf[64];
    for (const auto& [w, c] : terms_) {
      double mag = first ? c : std::fabs(c);
      std::snprintf(buf, sizeof buf, "%g", mag);
      if (!first) out += (c < 0.0) ? " - " : " + ";
      out += buf;
      out += '*';
      out += w.to_string();
      first = false;
    }
    return out;
  }

private:
  static int check_cap(int cap) {
    if (cap < 0) throw std::invalid_argument("TensorPoly: level cap must be >= 0");
    if (cap > Word::kMaxLength) throw std::invalid_argument("TensorPoly: level cap too large");
    return cap;
  }

  int cap_;
  Terms terms_;
};

// coefficient-wise sum at the larger cap
inline TensorPoly add(const TensorPoly& a, const TensorPoly& b) {
  TensorPoly out(std::max(a.level_cap(), b.level_cap()));
  for (const auto& [w, c] : a.terms()) out.accumulate(w, c);
  for (const auto& [w, c] : b.terms()) out.accumulate(w, c);
  return out;
}

inline TensorPoly scale(const TensorPoly& a, double c) {
  TensorPoly out(a.level_cap());
  for (const auto& [w, cw] : a.terms()) out.accumulate(w, cw * c);
  return out;
}

// keeps levels 0..n and re-caps the result at n
inline TensorPoly project(const TensorPoly& a, int n) {
  TensorPoly out(n);
  for (const auto& [w, c] : a.terms()) {
    if (w.length() > n) break;  // map is ordered by length first
    out.accumulate(w, c);
  }
  return out;
}

namespace detail {

// Enumerates every interleaving of u and v, choosing the final letter first
// so the accumulated word builds up from its low bits.
inline void shuffle_words_rec(std::uint64_t ub, int ul, std::uint64_t vb, int vl,
                              std::uint64_t acc, int acc_len, double c, TensorPoly& out) {
  if (ul == 0 && vl == 0) {
    out.accumulate(Word(acc, acc_len), c);
    return;
  }
  if (ul > 0)
    shuffle_words_rec(ub >> 1, ul - 1, vb, vl, acc | ((ub & 1u) << acc_len), acc_len + 1, c, out);
  if (vl > 0)
    shuffle_words_rec(ub, ul, vb >> 1, vl - 1, acc | ((vb & 1u) << acc_len), acc_len + 1, c, out);
}

}  // namespace detail

// bilinear shuffle product, eagerly truncated at cap
inline TensorPoly shuffle(const TensorPoly& a, const TensorPoly& b, int cap) {
  TensorPoly out(cap);
  for (const auto& [u, cu] : a.terms()) {
    if (u.length() > cap) break;
    for (const auto& [v, cv] : b.terms()) {
      if (u.length() + v.length() > cap) break;
      detail::shuffle_words_rec(u.bits(), u.length(), v.bits(), v.length(), 0, 0, cu * cv, out);
    }
  }
  return out;
}

// concatenation (tensor) product, eagerly truncated at cap
inline TensorPoly concat(const TensorPoly& a, const TensorPoly& b, int cap) {
  TensorPoly out(cap);
  for (const auto& [u, cu] : a.terms()) {
    if (u.length() > cap) break;
    for (const auto& [v, cv] : b.terms()) {
      if (u.length() + v.length() > cap) break;
      out.accumulate(u.concat(v), cu * cv);
    }
  }
  return out;
}

// sum_{n=0..cap} a^{shuffle n} / n!; requires a zero constant term so the
// series terminates at n = cap
inline TensorPoly shuffle_exp(const TensorPoly& a, int cap) {
  if (a.coeff(Word()) != 0.0)
    throw std::invalid_argument(
        "shuffle_exp: nonzero constant term, series would not terminate");
  TensorPoly out = TensorPoly::unit(cap);
  TensorPoly term = TensorPoly::unit(cap);
  for (int n = 1; n <= cap; ++n) {
    term = scale(shuffle(term, a, cap), 1.0 / n);
    if (term.is_zero()) break;
    out = add(out, term);
  }
  return out;
}

// shifts every word of length <= cap-1 by one trailing letter; words already
// at length cap are dropped
inline TensorPoly append_letter(const TensorPoly& a, int letter, int cap) {
  if (cap < 1) throw std::invalid_argument("append_letter: cap must be >= 1");
  TensorPoly out(cap);
  for (const auto& [w, c] : a.terms()) {
    if (w.length() > cap - 1) break;
    out.accumulate(w.append(letter), c);
  }
  return out;
}

inline double max_abs_coeff_diff(const TensorPoly& a, const TensorPoly& b) {
  double m = 0.0;
  for (const auto& [w, c] : a.terms()) m = std::max(m, std::fabs(c - b.coeff(w)));
  for (const auto& [w, c] : b.terms()) m = std::max(m, std::fabs(c - a.coeff(w)));
  return m;
}

}  // namespace sigvol
