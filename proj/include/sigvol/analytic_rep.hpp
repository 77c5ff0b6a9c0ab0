#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sigvol/signature.hpp"
#include "sigvol/tensor_poly.hpp"
#include "sigvol/vol_models.hpp"

namespace sigvol {

// Reconstructed (v, I) series for one path, from whichever representation
// produced it.
struct RepStream {
  std::vector<double> v_tilde;  // length J+1
  std::vector<double> i_tilde;  // length J+1, i_tilde[0] = 0
  int level = 0;
  std::string tag;  // analytic-ou | analytic-mgbm | learned-linear | learned-nonlinear | exact

  void validate() const {
    if (v_tilde.size() != i_tilde.size() || v_tilde.empty())
      throw std::invalid_argument("RepStream: series length mismatch");
    if (i_tilde[0] != 0.0) throw std::invalid_argument("RepStream: i_tilde must start at 0");
  }
};

// Time-independent coefficient tensor of the OU volatility process,
// (v0*e + kappa*theta*1 + eta*2) combined with the shuffle exponential of
// -kappa*1. The outer combination is the concatenation product: that is the
// form whose pairing satisfies the same recursion as the Euler-discretized
// process, term for term.
inline TensorPoly ou_coefficients(const OuParams& p, int level) {
  TensorPoly base(level, {{Word(), p.v0},
                          {Word::from_digits("1"), p.kappa * p.theta},
                          {Word::from_digits("2"), p.eta}});
  return concat(base, shuffle_exp(TensorPoly(level, {{Word::from_digits("1"), -p.kappa}}), level),
                level);
}

inline TensorPoly mgbm_coefficients(const MgbmParams& p, int level) {
  const double lambda = -(p.kappa + 0.5 * p.sigma * p.sigma);
  const double gamma = p.kappa * p.theta - 0.5 * p.sigma * p.eta;
  TensorPoly base(level, {{Word(), p.v0},
                          {Word::from_digits("1"), gamma},
                          {Word::from_digits("2"), p.eta}});
  TensorPoly gen(level, {{Word::from_digits("1"), lambda}, {Word::from_digits("2"), p.sigma}});
  return concat(base, shuffle_exp(gen, level), level);
}

// coefficients of int <ell, W> dW: shift every kept word by a trailing 2
inline TensorPoly integral_coefficients(const TensorPoly& ell, int level) {
  if (level < 1) throw std::invalid_argument("integral_coefficients: level must be >= 1");
  return append_letter(project(ell, level - 1), 2, level);
}

inline RepStream reconstruct(const TensorPoly& ell, const SigStream& sig,
                             const TimeExtendedPath& path, std::string tag = "analytic") {
  if (ell.level_cap() > sig.level_cap())
    throw std::invalid_argument("reconstruct: coefficients deeper than the signature");
  const std::size_t J = sig.steps();
  const int cap = ell.level_cap();
  // The integrand pairs one level short: the trailing-letter shift raises
  // the word degree by one, so i_tilde at level N is the
  // Ito sum of the level-(N-1) reconstruction and equals the p-pairing
  // exactly in left-point mode.
  const TensorPoly ell_low = cap >= 1 ? project(ell, cap - 1) : TensorPoly(0);
  RepStream r;
  r.level = cap;
  r.tag = std::move(tag);
  r.v_tilde.resize(J + 1);
  r.i_tilde.resize(J + 1);
  double acc = 0.0;
  for (std::size_t j = 0; j <= J; ++j) {
    r.v_tilde[j] = pair_at(ell, sig, j);
    r.i_tilde[j] = acc;
    if (j < J) acc += (cap >= 1 ? pair_at(ell_low, sig, j) : r.v_tilde[j]) * path.dw(j);
  }
  return r;
}

// time-averaged absolute gap of one path
inline double mae_pathwise(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty())
    throw std::invalid_argument("mae_pathwise: series length mismatch");
  double acc = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) acc += std::fabs(a[j] - b[j]);
  return acc / static_cast<double>(a.size());
}

struct MaeSummary {
  double mean = 0.0;
  double stddev = 0.0;
};

inline MaeSummary summarize_mae(std::span<const double> pathwise) {
  if (pathwise.empty()) throw std::invalid_argument("summarize_mae: no paths");
  MaeSummary s;
  for (double e : pathwise) s.mean += e;
  s.mean /= static_cast<double>(pathwise.size());
  if (pathwise.size() > 1) {
    double var = 0.0;
    for (double e : pathwise) var += (e - s.mean) * (e - s.mean);
    s.stddev = std::sqrt(var / static_cast<double>(pathwise.size() - 1));
  }
  return s;
}

}  // namespace sigvol
