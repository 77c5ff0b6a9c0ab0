#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sigvol/analytic_rep.hpp"
#include "sigvol/errors.hpp"
#include "sigvol/parallel.hpp"
#include "sigvol/rng.hpp"
#include "sigvol/signature.hpp"
#include "sigvol/tensor_poly.hpp"
#include "sigvol/vol_models.hpp"

namespace sigvol {

// SABR-style asset coefficients f(x) = rho x^beta, g(x) = sqrt(1-rho^2) x^beta
struct SabrSpec {
  double rho = -0.4;
  double beta = 0.6;

  void validate() const {
    if (!(rho > -1.0 && rho < 1.0)) throw std::invalid_argument("SabrSpec: |rho| must be < 1");
    if (!(beta > 0.0 && beta <= 1.0)) throw std::invalid_argument("SabrSpec: beta must lie in (0,1]");
  }
  friend bool operator==(const SabrSpec&, const SabrSpec&) = default;
  double f(double x) const { return rho * std::pow(x, beta); }
  double g(double x) const { return std::sqrt(1.0 - rho * rho) * std::pow(x, beta); }
  double df(double x) const { return rho * beta * std::pow(x, beta - 1.0); }
};

struct OptionSpec {
  double strike = 110.0;
  double maturity = 1.0;

  void validate() const {
    if (!(strike > 0.0)) throw std::invalid_argument("OptionSpec: strike must be > 0");
    if (!(maturity > 0.0)) throw std::invalid_argument("OptionSpec: maturity must be > 0");
  }
  friend bool operator==(const OptionSpec&, const OptionSpec&) = default;
  double payoff(double x) const { return std::max(strike - x, 0.0); }  // European put
};

struct PdeGrid {
  double x_lo = 11.0;
  double x_hi = 330.0;
  std::size_t cells = 1276;  // L; nodes are 0..L

  double dx() const { return (x_hi - x_lo) / static_cast<double>(cells); }
  double node(std::size_t l) const { return x_lo + static_cast<double>(l) * dx(); }

  void validate() const {
    if (!(x_lo < x_hi)) throw std::invalid_argument("PdeGrid: x_lo must be below x_hi");
    if (cells < 2) throw std::invalid_argument("PdeGrid: needs at least 2 cells");
  }
  void require_inside(double x, const char* what) const {
    if (!(x > x_lo && x < x_hi))
      throw std::invalid_argument(std::string("PdeGrid: ") + what +
                                  " must lie strictly inside the domain");
  }
};

struct PriceReport {
  double estimate = 0.0;
  double std_error = 0.0;
  std::string method;  // benchmark | mc-sig | pde
  std::string rep;     // representation provenance
  int level = 0;
  std::size_t paths = 0;
  std::size_t resampled = 0;
  double wall_ms = 0.0;  // reported in metadata sidecars, never in result CSVs
};

// yields the reconstructed (v, I) series of one simulated W-path
using RepProvider = std::function<RepStream(std::size_t path_index, const TimeExtendedPath&)>;

inline RepProvider analytic_provider(const TensorPoly& ell, int level, SigMode mode,
                                     std::string tag = "analytic") {
  return [ell, level, mode, tag](std::size_t, const TimeExtendedPath& path) {
    SigStream sig = signature_stream(path, level, mode);
    return reconstruct(ell, sig, path, tag);
  };
}

inline RepProvider exact_provider(const ModelParams& model, const Grid& grid) {
  return [model, grid](std::size_t, const TimeExtendedPath& path) {
    RepStream r;
    r.tag = "exact";
    r.level = 0;
    r.v_tilde.resize(path.steps() + 1);
    r.i_tilde.resize(path.steps() + 1, 0.0);
    std::vector<double> dw(path.steps());
    for (std::size_t j = 0; j < dw.size(); ++j) dw[j] = path.dw(j);
    if (!simulate_v_path(model, grid, dw, r.v_tilde))
      throw NumericalError("exact_provider: volatility overflow on a fixed path");
    for (std::size_t j = 0; j < dw.size(); ++j)
      r.i_tilde[j + 1] = r.i_tilde[j] + r.v_tilde[j] * dw[j];
    return r;
  };
}

namespace detail {

struct McAccumulator {
  double sum = 0.0, sum_sq = 0.0;
  std::size_t n = 0;
  void add(double x) {
    sum += x;
    sum_sq += x * x;
    ++n;
  }
  double mean() const { return n ? sum / static_cast<double>(n) : 0.0; }
  double std_error() const {
    if (n < 2) return 0.0;
    const double m = mean();
    const double var = std::max(0.0, (sum_sq - static_cast<double>(n) * m * m) /
                                         static_cast<double>(n - 1));
    return std::sqrt(var / static_cast<double>(n));
  }
};

inline PriceReport reduce_payoffs(std::span<const double> payoff,
                                  std::span<const std::uint32_t> attempts, std::size_t paths,
                                  const char* method) {
  std::size_t resampled = 0;
  for (auto a : attempts) resampled += a;
  if (resampled * 100 > paths)
    throw NumericalError(std::string(method) + ": more than 1% of paths were rejected (" +
                         std::to_string(resampled) + " of " + std::to_string(paths) + ")");
  McAccumulator acc;
  for (double p : payoff) acc.add(p);
  PriceReport r;
  r.estimate = acc.mean();
  r.std_error = acc.std_error();
  r.method = method;
  r.paths = paths;
  r.resampled = resampled;
  return r;
}

}  // namespace detail

// Euler on the original SDE with the exactly simulated volatility; this is
// the benchmark the signature methods are measured against.
inline PriceReport mc_price_benchmark(const ModelParams& model, const SabrSpec& sabr,
                                      const OptionSpec& option, const Grid& grid,
                                      std::size_t paths, double x_init, std::uint64_t seed,
                                      int threads = 0) {
  const auto t_start = std::chrono::steady_clock::now();
  validate(model);
  sabr.validate();
  option.validate();
  grid.validate();
  if (!(x_init > 0.0)) throw std::invalid_argument("mc_price_benchmark: x_init must be > 0");
  const std::size_t J = grid.steps;
  const double sd = std::sqrt(grid.dt());
  std::vector<double> payoff(paths, 0.0);
  std::vector<std::uint32_t> attempts(paths, 0);
  parallel_for(paths, threads, [&](std::size_t m) {
    std::vector<double> dw(J), db(J), v(J + 1);
    for (std::uint32_t attempt = 0;; ++attempt) {
      if (attempt > 100) throw NumericalError("mc_price_benchmark: path kept failing");
      CounterRng rw = path_rng(seed, m, 0, attempt);
      CounterRng rb = path_rng(seed, m, 1, attempt);
      for (auto& x : dw) x = sd * rw.normal();
      for (auto& x : db) x = sd * rb.normal();
      if (!simulate_v_path(model, grid, dw, v)) continue;
      double x = x_init;
      bool ok = true;
      for (std::size_t j = 0; j < J && ok; ++j) {
        x += sabr.f(x) * v[j] * dw[j] + sabr.g(x) * v[j] * db[j];
        ok = std::isfinite(x);
      }
      if (ok) {
        payoff[m] = option.payoff(x);
        attempts[m] = attempt;
        break;
      }
    }
  });
  PriceReport r = detail::reduce_payoffs(payoff, attempts, paths, "benchmark");
  r.rep = model_name(model);
  r.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t_start).count();
  return r;
}

// Monte Carlo on the signature SDE: X <- X + A dW + C dB with
// A = [f + f_x f * i_tilde] v_tilde and C = g v_tilde.
inline PriceReport mc_price_sig(const RepProvider& provider, const SabrSpec& sabr,
                                const OptionSpec& option, const Grid& grid, std::size_t paths,
                                double x_init, std::uint64_t seed, int threads = 0,
                                int level = 0) {
  const auto t_start = std::chrono::steady_clock::now();
  sabr.validate();
  option.validate();
  grid.validate();
  if (!(x_init > 0.0)) throw std::invalid_argument("mc_price_sig: x_init must be > 0");
  const std::size_t J = grid.steps;
  const double sd = std::sqrt(grid.dt());
  std::vector<double> payoff(paths, 0.0);
  std::vector<std::uint32_t> attempts(paths, 0);
  parallel_for(paths, threads, [&](std::size_t m) {
    std::vector<double> dw(J), db(J);
    for (std::uint32_t attempt = 0;; ++attempt) {
      if (attempt > 100) throw NumericalError("mc_price_sig: path kept failing");
      CounterRng rw = path_rng(seed, m, 0, attempt);
      CounterRng rb = path_rng(seed, m, 1, attempt);
      for (auto& x : dw) x = sd * rw.normal();
      for (auto& x : db) x = sd * rb.normal();
      TimeExtendedPath path = path_from_increments(grid.dt(), dw);
      RepStream rep = provider(m, path);
      rep.validate();
      double x = x_init;
      bool ok = true;
      for (std::size_t j = 0; j < J && ok; ++j) {
        const double fx = sabr.f(x);
        const double a = (fx + sabr.df(x) * fx * rep.i_tilde[j]) * rep.v_tilde[j];
        const double c = sabr.g(x) * rep.v_tilde[j];
        x += a * dw[j] + c * db[j];
        ok = std::isfinite(x);
      }
      if (ok) {
        payoff[m] = option.payoff(x);
        attempts[m] = attempt;
        break;
      }
    }
  });
  PriceReport r = detail::reduce_payoffs(payoff, attempts, paths, "mc-sig");
  r.level = level;
  r.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t_start).count();
  return r;
}

enum class CoeffMode { ScalarSquare, ShufflePair };

inline const char* to_string(CoeffMode m) {
  return m == CoeffMode::ScalarSquare ? "scalar" : "shuffle";
}

struct CoeffField {
  std::vector<double> a;  // (J+1) x (L+1), diffusion bracket without the 1/2
  std::size_t clamped = 0;

  double& at(std::size_t j, std::size_t l, std::size_t cols) { return a[j * cols + l]; }
};

// Diffusion coefficient <qf shuffle qf> + <qg shuffle qg> on the time-space
// grid. ScalarSquare applies the shuffle identity in scalar form and is
// nonnegative by construction; ShufflePair assembles the literal shuffled
// tensors and pairs them against the signature, clamping any negative values
// truncation produces.
inline CoeffField pde_coefficient_field(const RepStream& rep, const SabrSpec& sabr,
                                        const PdeGrid& pg, CoeffMode mode,
                                        const TensorPoly* ell = nullptr,
                                        const SigStream* sig = nullptr) {
  pg.validate();
  const std::size_t J = rep.v_tilde.size() - 1;
  const std::size_t cols = pg.cells + 1;
  CoeffField out;
  out.a.resize((J + 1) * cols, 0.0);

  if (mode == CoeffMode::ScalarSquare) {
    for (std::size_t j = 0; j <= J; ++j) {
      const double vt = rep.v_tilde[j];
      const double it = rep.i_tilde[j];
      for (std::size_t l = 0; l < cols; ++l) {
        const double x = pg.node(l);
        const double fx = sabr.f(x);
        const double qf = (fx + sabr.df(x) * fx * it) * vt;
        const double qg = sabr.g(x) * vt;
        out.at(j, l, cols) = qf * qf + qg * qg;
      }
    }
    return out;
  }

  if (ell == nullptr || sig == nullptr)
    throw std::invalid_argument(
        "pde_coefficient_field: shuffle mode needs the coefficient tensor and the signature");
  if (sig->steps() != J)
    throw std::invalid_argument("pde_coefficient_field: signature grid mismatch");
  const int cap = ell->level_cap();
  const TensorPoly p = integral_coefficients(*ell, cap);
  const TensorPoly pl = shuffle(p, *ell, cap);
  const TensorPoly ll = shuffle(*ell, *ell, cap);
  const TensorPoly pll = shuffle(pl, *ell, cap);
  const TensorPoly plpl = shuffle(pl, pl, cap);
  for (std::size_t j = 0; j <= J; ++j) {
    const double s_ll = pair_at(ll, *sig, j);
    const double s_pll = pair_at(pll, *sig, j);
    const double s_plpl = pair_at(plpl, *sig, j);
    for (std::size_t l = 0; l < cols; ++l) {
      const double x = pg.node(l);
      const double fx = sabr.f(x);
      const double cx = sabr.df(x) * fx;
      const double gx = sabr.g(x);
      double value = fx * fx * s_ll + 2.0 * fx * cx * s_pll + cx * cx * s_plpl + gx * gx * s_ll;
      if (value < 0.0) {
        value = 0.0;
        ++out.clamped;
      }
      out.at(j, l, cols) = value;
    }
  }
  return out;
}

// Crank-Nicolson backward sweep with Dirichlet boundaries; returns the t = 0
// slice over all space nodes. `a` is the full diffusion bracket, so each half
// step carries the factor dt/(4 dx^2).
inline std::vector<double> cn_solve(const CoeffField& field, const PdeGrid& pg, const Grid& grid,
                                    const OptionSpec& option,
                                    const std::function<double(double)>& psi_lo,
                                    const std::function<double(double)>& psi_hi) {
  pg.validate();
  const std::size_t J = grid.steps;
  const std::size_t L = pg.cells;
  const std::size_t cols = L + 1;
  if (field.a.size() != (J + 1) * cols)
    throw std::invalid_argument("cn_solve: coefficient field does not match the grids");
  for (double v : field.a)
    if (!(v >= 0.0)) throw std::invalid_argument("cn_solve: negative diffusion coefficient");

  const double lam = grid.dt() / (4.0 * pg.dx() * pg.dx());
  std::vector<double> u(cols), next(cols);
  for (std::size_t l = 0; l <= L; ++l) u[l] = option.payoff(pg.node(l));

  std::vector<double> diag(L - 1), upper(L - 1), lower(L - 1), rhs(L - 1);
  for (std::size_t jj = J; jj-- > 0;) {
    const double t = grid.time(jj);
    next[0] = psi_lo(t);
    next[L] = psi_hi(t);
    for (std::size_t l = 1; l < L; ++l) {
      const double ml = lam * field.a[jj * cols + l];
      const double mr = lam * field.a[(jj + 1) * cols + l];
      diag[l - 1] = 1.0 + 2.0 * ml;
      lower[l - 1] = -ml;
      upper[l - 1] = -ml;
      rhs[l - 1] = u[l] + mr * (u[l + 1] - 2.0 * u[l] + u[l - 1]);
    }
    rhs[0] += lam * field.a[jj * cols + 1] * next[0];
    rhs[L - 2] += lam * field.a[jj * cols + (L - 1)] * next[L];
    // Thomas sweep
    for (std::size_t l = 1; l < L - 1; ++l) {
      const double w = lower[l] / diag[l - 1];
      diag[l] -= w * upper[l - 1];
      rhs[l] -= w * rhs[l - 1];
    }
    next[L - 1] = rhs[L - 2] / diag[L - 2];
    for (std::size_t l = L - 2; l >= 1; --l)
      next[l] = (rhs[l - 1] - upper[l - 1] * next[l + 1]) / diag[l - 1];
    for (std::size_t l = 0; l <= L; ++l) {
      if (!std::isfinite(next[l]))
        throw NumericalError("cn_solve: non-finite value at time index " + std::to_string(jj) +
                             ", node " + std::to_string(l) + " (dx=" + std::to_string(pg.dx()) +
                             ", dt=" + std::to_string(grid.dt()) + ")");
    }
    u.swap(next);
  }
  return u;
}

inline double interpolate_profile(std::span<const double> u, const PdeGrid& pg, double x) {
  pg.require_inside(x, "read-off spot");
  const double pos = (x - pg.x_lo) / pg.dx();
  const std::size_t l = std::min(static_cast<std::size_t>(pos), pg.cells - 1);
  const double w = pos - static_cast<double>(l);
  return (1.0 - w) * u[l] + w * u[l + 1];
}

struct PdePriceResult {
  std::vector<PriceReport> per_spot;
  std::vector<double> mean_profile;  // averaged u(0, x) over the W-paths
  std::size_t clamped = 0;
};

// Feynman-Kac route: one backward PDE solve per simulated W-path, averaged at
// the read-off spots. All spots share the same solves.
inline PdePriceResult pde_price(const RepProvider& provider, const SabrSpec& sabr,
                                const OptionSpec& option, const Grid& grid, const PdeGrid& pg,
                                std::size_t w_paths, std::span<const double> spots,
                                std::uint64_t seed, CoeffMode mode = CoeffMode::ScalarSquare,
                                int threads = 0, int level = 0,
                                const TensorPoly* ell = nullptr, SigMode sig_mode = SigMode::ItoLeft) {
  const auto t_start = std::chrono::steady_clock::now();
  sabr.validate();
  option.validate();
  grid.validate();
  pg.validate();
  pg.require_inside(option.strike, "strike");
  for (double s : spots) pg.require_inside(s, "spot");
  if (w_paths == 0) throw std::invalid_argument("pde_price: needs at least one W-path");

  const std::size_t J = grid.steps;
  const double sd = std::sqrt(grid.dt());
  const double lo_value = option.payoff(pg.x_lo);
  auto psi_lo = [lo_value](double) { return lo_value; };
  auto psi_hi = [](double) { return 0.0; };

  std::vector<double> values(w_paths * spots.size(), 0.0);
  std::vector<double> profiles(w_paths * (pg.cells + 1), 0.0);  // reduced serially below
  std::vector<std::size_t> clamped(w_paths, 0);

  parallel_for(w_paths, threads, [&](std::size_t m) {
    std::vector<double> dw(J);
    CounterRng rw = path_rng(seed, m, 0, 0);
    for (auto& x : dw) x = sd * rw.normal();
    TimeExtendedPath path = path_from_increments(grid.dt(), dw);
    RepStream rep = provider(m, path);
    rep.validate();
    CoeffField field;
    if (mode == CoeffMode::ShufflePair) {
      if (ell == nullptr)
        throw std::invalid_argument("pde_price: shuffle mode needs the coefficient tensor");
      SigStream sig = signature_stream(path, ell->level_cap(), sig_mode);
      field = pde_coefficient_field(rep, sabr, pg, mode, ell, &sig);
    } else {
      field = pde_coefficient_field(rep, sabr, pg, mode);
    }
    clamped[m] = field.clamped;
    std::vector<double> u0 = cn_solve(field, pg, grid, option, psi_lo, psi_hi);
    for (std::size_t s = 0; s < spots.size(); ++s)
      values[m * spots.size() + s] = interpolate_profile(u0, pg, spots[s]);
    std::copy(u0.begin(), u0.end(), profiles.begin() + m * (pg.cells + 1));
  });

  PdePriceResult out;
  out.mean_profile.assign(pg.cells + 1, 0.0);
  for (std::size_t m = 0; m < w_paths; ++m)
    for (std::size_t l = 0; l <= pg.cells; ++l)
      out.mean_profile[l] += profiles[m * (pg.cells + 1) + l];
  for (double& x : out.mean_profile) x /= static_cast<double>(w_paths);
  for (std::size_t c : clamped) out.clamped += c;
  for (std::size_t s = 0; s < spots.size(); ++s) {
    detail::McAccumulator acc;
    for (std::size_t m = 0; m < w_paths; ++m) acc.add(values[m * spots.size() + s]);
    PriceReport r;
    r.estimate = acc.mean();
    r.std_error = acc.std_error();
    r.method = "pde";
    r.level = level;
    r.paths = w_paths;
    r.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t_start).count();
    out.per_spot.push_back(std::move(r));
  }
  return out;
}

}  // namespace sigvol
