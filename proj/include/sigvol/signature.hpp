#pragma once

#include <cmath>
#include <cstddef>
#include <ostream>
#include <span>
#include <stdexcept>
#include <vector>

#include "sigvol/tensor_poly.hpp"
#include "sigvol/word.hpp"

namespace sigvol {

// t |-> (t, W_t) sampled on a uniform grid, W_0 = 0
struct TimeExtendedPath {
  std::vector<double> times;
  std::vector<double> w;

  TimeExtendedPath() = default;
  TimeExtendedPath(std::vector<double> t, std::vector<double> w_values)
      : times(std::move(t)), w(std::move(w_values)) {
    validate();
  }

  std::size_t steps() const { return times.empty() ? 0 : times.size() - 1; }
  double dt() const { return times.size() < 2 ? 0.0 : times[1] - times[0]; }
  double dw(std::size_t j) const { return w[j + 1] - w[j]; }

  void validate() const {
    if (times.empty()) throw std::invalid_argument("TimeExtendedPath: empty grid");
    if (times.size() != w.size())
      throw std::invalid_argument("TimeExtendedPath: times/w length mismatch");
    if (w[0] != 0.0) throw std::invalid_argument("TimeExtendedPath: W_0 must be 0");
    if (times.size() >= 2) {
      const double d = times[1] - times[0];
      if (d <= 0.0) throw std::invalid_argument("TimeExtendedPath: times must increase");
      for (std::size_t j = 1; j + 1 < times.size(); ++j)
        if (std::fabs(times[j + 1] - times[j] - d) > 1e-9 * d)
          throw std::invalid_argument("TimeExtendedPath: grid must be uniform");
    }
  }
};

inline TimeExtendedPath path_from_increments(double dt, std::span<const double> dw) {
  std::vector<double> t(dw.size() + 1), w(dw.size() + 1);
  t[0] = 0.0;
  w[0] = 0.0;
  for (std::size_t j = 0; j < dw.size(); ++j) {
    t[j + 1] = static_cast<double>(j + 1) * dt;
    w[j + 1] = w[j] + dw[j];
  }
  return TimeExtendedPath(std::move(t), std::move(w));
}

enum class SigMode { ItoLeft, Chen };

inline const char* to_string(SigMode m) { return m == SigMode::ItoLeft ? "ito" : "chen"; }

// Truncated signature of a time-extended path at every grid time. One dense
// slice of 2^{N+1}-1 values per grid index, ordered level by level and
// lexicographic within each level (so a word's in-level rank is its bit
// pattern).
class SigStream {
public:
  SigStream(int level_cap, std::size_t steps)
      : cap_(level_cap), steps_(steps), slice_((std::size_t{2} << level_cap) - 1),
        data_(slice_ * (steps + 1), 0.0) {
    if (level_cap < 0 || level_cap > 20)
      throw std::invalid_argument("SigStream: level cap out of range");
    for (std::size_t j = 0; j <= steps_; ++j) data_[j * slice_] = 1.0;
  }

  int level_cap() const { return cap_; }
  std::size_t steps() const { return steps_; }
  std::size_t slice_size() const { return slice_; }

  static std::size_t dense_index(const Word& w) {
    return ((std::size_t{1} << w.length()) - 1) + w.bits();
  }

  std::span<const double> slice(std::size_t j) const {
    return {data_.data() + j * slice_, slice_};
  }
  std::span<double> slice(std::size_t j) { return {data_.data() + j * slice_, slice_}; }

  double value(std::size_t j, const Word& w) const {
    return data_[j * slice_ + dense_index(w)];
  }

private:
  int cap_;
  std::size_t steps_;
  std::size_t slice_;
  std::vector<double> data_;
};

namespace detail {

inline void ito_left_step(std::span<const double> cur, std::span<double> next, int cap,
                          double dt, double dw) {
  next[0] = 1.0;
  std::size_t off_prev = 0, off = 1;
  for (int level = 1; level <= cap; ++level) {
    const std::size_t n = std::size_t{1} << level;
    for (std::size_t bits = 0; bits < n; ++bits) {
      const double delta = (bits & 1u) ? dw : dt;
      next[off + bits] = cur[off + bits] + cur[off_prev + (bits >> 1)] * delta;
    }
    off_prev = off;
    off += n;
  }
}

inline void chen_step(std::span<const double> cur, std::span<double> next, int cap,
                      double dt, double dw) {
  // segment signature of the linear interpolant: level-k part is
  // (dt,dw)^{tensor k} / k!, i.e. per word dt^{#1} dw^{#2} / k!
  std::vector<double> pow_dt(cap + 1, 1.0), pow_dw(cap + 1, 1.0), inv_fact(cap + 1, 1.0);
  for (int k = 1; k <= cap; ++k) {
    pow_dt[k] = pow_dt[k - 1] * dt;
    pow_dw[k] = pow_dw[k - 1] * dw;
    inv_fact[k] = inv_fact[k - 1] / k;
  }
  next[0] = 1.0;
  std::size_t off = 1;
  for (int level = 1; level <= cap; ++level) {
    const std::size_t n = std::size_t{1} << level;
    for (std::size_t bits = 0; bits < n; ++bits) {
      double acc = 0.0;
      for (int head = 0; head <= level; ++head) {
        const int tail = level - head;
        const std::size_t head_bits = bits >> tail;
        const std::size_t tail_bits = bits & ((std::size_t{1} << tail) - 1);
        const int ones = tail == 0 ? 0 : static_cast<int>(__builtin_popcountll(tail_bits));
        const double seg = pow_dt[tail - ones] * pow_dw[ones] * inv_fact[tail];
        acc += cur[((std::size_t{1} << head) - 1) + head_bits] * seg;
      }
      next[off + bits] = acc;
    }
    off += n;
  }
}

}  // namespace detail

inline SigStream signature_stream(const TimeExtendedPath& path, int level_cap, SigMode mode) {
  path.validate();
  SigStream s(level_cap, path.steps());
  const double dt = path.dt();
  for (std::size_t j = 0; j < path.steps(); ++j) {
    const double dw = path.dw(j);
    if (mode == SigMode::ItoLeft)
      detail::ito_left_step(s.slice(j), s.slice(j + 1), level_cap, dt, dw);
    else
      detail::chen_step(s.slice(j), s.slice(j + 1), level_cap, dt, dw);
  }
  return s;
}

// <coeffs, sig_j>
inline double pair_at(const TensorPoly& coeffs, const SigStream& sig, std::size_t j) {
  if (coeffs.level_cap() > sig.level_cap())
    throw std::invalid_argument("pair_at: coefficients deeper than the signature");
  if (j > sig.steps()) throw std::invalid_argument("pair_at: grid index out of range");
  auto s = sig.slice(j);
  double acc = 0.0;
  for (const auto& [w, c] : coeffs.terms()) acc += c * s[SigStream::dense_index(w)];
  return acc;
}

// left-point Ito sum of the pairing against dW up to t_j
inline double ito_integrate_pairing(const TensorPoly& coeffs, const SigStream& sig,
                                    const TimeExtendedPath& path, std::size_t j) {
  if (j > sig.steps() || j > path.steps())
    throw std::invalid_argument("ito_integrate_pairing: grid index out of range");
  double acc = 0.0;
  for (std::size_t i = 0; i < j; ++i) acc += pair_at(coeffs, sig, i) * path.dw(i);
  return acc;
}

// debug dump, columns: j, t, word, value
inline void dump_stream_csv(std::ostream& os, const TimeExtendedPath& path, const SigStream& sig) {
  os << "j,t,word,value\n";
  char buf[32];
  for (std::size_t j = 0; j <= sig.steps(); ++j) {
    for (int level = 0; level <= sig.level_cap(); ++level) {
      for (std::uint64_t bits = 0; bits < (std::uint64_t{1} << level); ++bits) {
        Word w(bits, level);
        std::snprintf(buf, sizeof buf, "%.12g", sig.value(j, w));
        os << j << ',' << path.times[j] << ',' << (level == 0 ? "e" : w.to_string()) << ','
           << buf << '\n';
      }
    }
  }
}

}  // namespace sigvol
