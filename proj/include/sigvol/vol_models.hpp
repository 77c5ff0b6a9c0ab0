#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "sigvol/errors.hpp"
#include "sigvol/parallel.hpp"
#include "sigvol/rng.hpp"

namespace sigvol {

struct Grid {
  double maturity = 1.0;
  std::size_t steps = 251;

  double dt() const { return maturity / static_cast<double>(steps); }
  double time(std::size_t j) const { return static_cast<double>(j) * dt(); }

  void validate() const {
    if (!(maturity > 0.0)) throw std::invalid_argument("Grid: maturity must be > 0");
    if (steps < 1) throw std::invalid_argument("Grid: steps must be >= 1");
  }

  friend bool operator==(const Grid&, const Grid&) = default;
};

struct OuParams {
  double kappa, theta, eta, v0;
};
struct MgbmParams {
  double kappa, theta, sigma, eta, v0;
};
struct RoughHestonParams {
  double kappa, theta, sigma, v0, alpha;
};
struct RoughBergomiParams {
  double v0, eta, alpha;
};

using ModelParams = std::variant<OuParams, MgbmParams, RoughHestonParams, RoughBergomiParams>;

inline void validate(const ModelParams& model) {
  // zero-volatility degenerate setups are allowed, hence v0 >= 0
  std::visit(
      [](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if (!(p.v0 >= 0.0) || !std::isfinite(p.v0))
          throw std::invalid_argument("ModelParams: v0 must be >= 0");
        if constexpr (std::is_same_v<T, RoughHestonParams> ||
                      std::is_same_v<T, RoughBergomiParams>) {
          if (!(p.alpha > 0.0 && p.alpha < 0.5))
            throw std::invalid_argument("ModelParams: alpha must lie in (0, 1/2)");
        }
      },
      model);
}

inline std::string model_name(const ModelParams& model) {
  struct Visitor {
    std::string operator()(const OuParams&) const { return "ou"; }
    std::string operator()(const MgbmParams&) const { return "mgbm"; }
    std::string operator()(const RoughHestonParams&) const { return "rheston"; }
    std::string operator()(const RoughBergomiParams&) const { return "rbergomi"; }
  };
  return std::visit(Visitor{}, model);
}

// Batch of simulated trajectories on a uniform grid. Rows are independent of
// worker layout: path m is a pure function of (seed, m).
struct PathSet {
  Grid grid;
  std::size_t count = 0;
  std::uint64_t seed = 0;
  std::size_t resampled = 0;  // rBergomi overflow guard hits
  std::vector<double> dw, db;   // count x J
  std::vector<double> v, ii;    // count x (J+1)

  std::span<const double> dw_row(std::size_t m) const {
    return {dw.data() + m * grid.steps, grid.steps};
  }
  std::span<const double> db_row(std::size_t m) const {
    return {db.data() + m * grid.steps, grid.steps};
  }
  std::span<const double> v_row(std::size_t m) const {
    return {v.data() + m * (grid.steps + 1), grid.steps + 1};
  }
  std::span<const double> i_row(std::size_t m) const {
    return {ii.data() + m * (grid.steps + 1), grid.steps + 1};
  }
};

namespace detail {

inline void draw_normals(CounterRng& rng, double sd, std::span<double> out) {
  for (double& x : out) x = sd * rng.normal();
}

// power-law kernel weights at lags 1..J; lags on the grid are >= dt so the
// singular kernel is evaluated only where it is finite
inline std::vector<double> power_law_lags(double dt, std::size_t steps, double alpha,
                                          double scale) {
  std::vector<double> k(steps + 1, 0.0);
  for (std::size_t lag = 1; lag <= steps; ++lag)
    k[lag] = scale * std::pow(static_cast<double>(lag) * dt, -alpha);
  return k;
}

}  // namespace detail

// Fills v[0..J] from the W increments. Returns false when the rBergomi
// exponent overflows and the path must be redrawn.
inline bool simulate_v_path(const ModelParams& model, const Grid& grid,
                            std::span<const double> dw, std::span<double> v) {
  const std::size_t J = grid.steps;
  const double dt = grid.dt();
  if (const auto* p = std::get_if<OuParams>(&model)) {
    v[0] = p->v0;
    for (std::size_t j = 0; j < J; ++j)
      v[j + 1] = v[j] + p->kappa * (p->theta - v[j]) * dt + p->eta * dw[j];
    return true;
  }
  if (const auto* p = std::get_if<MgbmParams>(&model)) {
    v[0] = p->v0;
    for (std::size_t j = 0; j < J; ++j)
      v[j + 1] = v[j] + p->kappa * (p->theta - v[j]) * dt + (p->eta + p->sigma * v[j]) * dw[j];
    return true;
  }
  if (const auto* p = std::get_if<RoughHestonParams>(&model)) {
    // left-point Volterra Euler with full truncation of the square root
    static thread_local std::vector<double> kernel;
    static thread_local double kernel_dt = -1.0, kernel_alpha = -1.0;
    static thread_local std::size_t kernel_steps = 0;
    if (kernel_dt != dt || kernel_alpha != p->alpha || kernel_steps != J) {
      kernel = detail::power_law_lags(dt, J, p->alpha, 1.0 / std::tgamma(1.0 - p->alpha));
      kernel_dt = dt;
      kernel_alpha = p->alpha;
      kernel_steps = J;
    }
    std::vector<double> shock(J, 0.0);
    v[0] = p->v0;
    for (std::size_t j = 1; j <= J; ++j) {
      const double vp = std::max(v[j - 1], 0.0);
      shock[j - 1] = p->kappa * (p->theta - vp) * dt + p->sigma * std::sqrt(vp) * dw[j - 1];
      double acc = 0.0;
      for (std::size_t i = 0; i < j; ++i) acc += kernel[j - i] * shock[i];
      v[j] = p->v0 + acc;
    }
    return true;
  }
  const auto& p = std::get<RoughBergomiParams>(model);
  static thread_local std::vector<double> pw;
  static thread_local double pw_dt = -1.0, pw_alpha = -1.0;
  static thread_local std::size_t pw_steps = 0;
  if (pw_dt != dt || pw_alpha != p.alpha || pw_steps != J) {
    pw = detail::power_law_lags(dt, J, p.alpha, 1.0);
    pw_dt = dt;
    pw_alpha = p.alpha;
    pw_steps = J;
  }
  v[0] = p.v0;
  for (std::size_t j = 1; j <= J; ++j) {
    double acc = 0.0;
    for (std::size_t i = 0; i < j; ++i) acc += pw[j - i] * dw[i];
    const double expo = p.eta * acc;
    if (std::fabs(expo) > 700.0) return false;
    v[j] = p.v0 * std::exp(expo);
  }
  return true;
}

inline PathSet simulate(const ModelParams& model, const Grid& grid, std::size_t count,
                        std::uint64_t seed, int threads = 0) {
  validate(model);
  grid.validate();
  const std::size_t J = grid.steps;
  const double sd = std::sqrt(grid.dt());
  PathSet out;
  out.grid = grid;
  out.count = count;
  out.seed = seed;
  out.dw.resize(count * J);
  out.db.resize(count * J);
  out.v.resize(count * (J + 1));
  out.ii.resize(count * (J + 1));
  std::vector<std::uint32_t> attempts(count, 0);

  parallel_for(count, threads, [&](std::size_t m) {
    std::span<double> dw{out.dw.data() + m * J, J};
    std::span<double> db{out.db.data() + m * J, J};
    std::span<double> v{out.v.data() + m * (J + 1), J + 1};
    std::span<double> ii{out.ii.data() + m * (J + 1), J + 1};
    std::uint32_t attempt = 0;
    for (;; ++attempt) {
      if (attempt > 100)
        throw NumericalError("simulate: path " + std::to_string(m) +
                             " kept overflowing after 100 redraws");
      CounterRng rw = path_rng(seed, m, 0, attempt);
      CounterRng rb = path_rng(seed, m, 1, attempt);
      detail::draw_normals(rw, sd, dw);
      detail::draw_normals(rb, sd, db);
      if (simulate_v_path(model, grid, dw, v)) break;
    }
    attempts[m] = attempt;
    for (double x : v)
      if (!std::isfinite(x)) throw NumericalError("simulate: non-finite volatility sample");
    ii[0] = 0.0;
    for (std::size_t j = 0; j < J; ++j) ii[j + 1] = ii[j] + v[j] * dw[j];
  });
  for (auto a : attempts) out.resampled += a;
  return out;
}

struct MeanCheckReport {
  double sample_mean = 0.0;
  double exact_mean = 0.0;
  double std_error = 0.0;
  double z = 0.0;
};

// Compares the sample mean of v_T against its closed form. OU and mGBM share
// the linear-drift mean; rBergomi uses the lognormal moment of the scheme's
// continuum limit, so a small discretization bias is expected.
inline MeanCheckReport mean_check(const ModelParams& model, const Grid& grid, std::size_t count,
                                  std::uint64_t seed, int threads = 0) {
  if (count < 1000) throw std::invalid_argument("mean_check: needs at least 1e3 paths");
  double exact = 0.0;
  if (const auto* p = std::get_if<OuParams>(&model)) {
    exact = p->theta + (p->v0 - p->theta) * std::exp(-p->kappa * grid.maturity);
  } else if (const auto* p = std::get_if<MgbmParams>(&model)) {
    exact = p->theta + (p->v0 - p->theta) * std::exp(-p->kappa * grid.maturity);
  } else if (const auto* p = std::get_if<RoughBergomiParams>(&model)) {
    const double T = grid.maturity;
    exact = p->v0 * std::exp(p->eta * p->eta * std::pow(T, 1.0 - 2.0 * p->alpha) /
                             (2.0 * (1.0 - 2.0 * p->alpha)));
  } else {
    throw std::invalid_argument("mean_check: no closed-form mean for this model");
  }
  PathSet ps = simulate(model, grid, count, seed, threads);
  double mean = 0.0;
  for (std::size_t m = 0; m < count; ++m) mean += ps.v_row(m)[grid.steps];
  mean /= static_cast<double>(count);
  double var = 0.0;
  for (std::size_t m = 0; m < count; ++m) {
    const double d = ps.v_row(m)[grid.steps] - mean;
    var += d * d;
  }
  var /= static_cast<double>(count - 1);
  MeanCheckReport r;
  r.sample_mean = mean;
  r.exact_mean = exact;
  r.std_error = std::sqrt(var / static_cast<double>(count));
  r.z = r.std_error > 0.0 ? (mean - exact) / r.std_error : 0.0;
  return r;
}

}  // namespace sigvol
