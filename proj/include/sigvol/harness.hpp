#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "sigvol/analytic_rep.hpp"
#include "sigvol/config.hpp"
#include "sigvol/csv.hpp"
#include "sigvol/errors.hpp"
#include "sigvol/learned_rep.hpp"
#include "sigvol/pricing.hpp"
#include "sigvol/version.hpp"
#include "sigvol/vol_models.hpp"

namespace sigvol {

// representation accuracy per (model, level)
struct ReprRow {
  std::string model;
  std::string rep;
  int level = 0;
  double mae_v = 0.0, sd_v = 0.0;
  double mae_i = 0.0, sd_i = 0.0;
};

// pricing error per (model, method, level, moneyness)
struct PriceRow {
  std::string id;
  std::string model;
  std::string method;  // sde | pde
  std::string rep;
  int level = 0;
  std::string moneyness;  // itm | atm | otm
  double spot = 0.0;
  double value = 0.0;      // |price - benchmark|
  double price = 0.0;
  double benchmark = 0.0;
  double std_error = 0.0;
};

inline std::string moneyness_tag(double spot, double strike) {
  if (spot < strike) return "itm";  // put: spot below strike is in the money
  if (spot > strike) return "otm";
  return "atm";
}

inline void write_repr_csv(std::ostream& os, const std::vector<ReprRow>& rows,
                           const ExperimentConfig& cfg) {
  os << "model,N,mae_v,sd_v,mae_I,sd_I,rep,seed,paths,steps,maturity\n";
  for (const auto& r : rows)
    os << r.model << ',' << r.level << ',' << fmt_g(r.mae_v) << ',' << fmt_g(r.sd_v) << ','
       << fmt_g(r.mae_i) << ',' << fmt_g(r.sd_i) << ',' << r.rep << ',' << cfg.seed << ','
       << cfg.mc_paths << ',' << cfg.grid.steps << ',' << fmt_g(cfg.grid.maturity) << '\n';
}

inline void write_price_csv(std::ostream& os, const std::vector<PriceRow>& rows,
                            const ExperimentConfig& cfg) {
  os << "id,model,method,rep,N,moneyness,spot,abs_error,price,benchmark,std_error,seed,"
        "mc_paths,pde_paths,steps,maturity\n";
  for (const auto& r : rows)
    os << r.id << ',' << r.model << ',' << r.method << ',' << r.rep << ',' << r.level << ','
       << r.moneyness << ',' << fmt_g(r.spot) << ',' << fmt_g(r.value) << ',' << fmt_g(r.price)
       << ',' << fmt_g(r.benchmark) << ',' << fmt_g(r.std_error) << ',' << cfg.seed << ','
       << cfg.mc_paths << ',' << cfg.pde_paths << ',' << cfg.grid.steps << ','
       << fmt_g(cfg.grid.maturity) << '\n';
}

// full config echo plus provenance; wall-clock lives here, never in the CSVs
inline void write_metadata(const std::string& csv_path, const ExperimentConfig& cfg,
                           const std::string& command, double runtime_ms,
                           const std::vector<std::string>& notes = {}) {
  std::ofstream os(csv_path + ".meta");
  os << "# " << kVersionString << "\n";
  os << "command = " << command << "\n";
  os << "runtime_ms = " << fmt_g(runtime_ms, 6) << "\n";
  for (const auto& n : notes) os << "note = " << n << "\n";
  os << "\n" << config_serialize(cfg);
}

namespace detail {

inline std::string ensure_dir(const std::string& dir) {
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace detail

// -------- benchmark price cache ------------------------------------------

inline std::string benchmark_cache_key(const ExperimentConfig& cfg, double spot) {
  std::ostringstream key;
  key << "model=" << cfg.model << "|kappa=" << fmt_exact(cfg.kappa)
      << "|theta=" << fmt_exact(cfg.theta) << "|sigma=" << fmt_exact(cfg.sigma)
      << "|eta=" << fmt_exact(cfg.eta) << "|v0=" << fmt_exact(cfg.v0)
      << "|alpha=" << fmt_exact(cfg.alpha) << "|rho=" << fmt_exact(cfg.sabr.rho)
      << "|beta=" << fmt_exact(cfg.sabr.beta) << "|K=" << fmt_exact(cfg.option.strike)
      << "|T=" << fmt_exact(cfg.grid.maturity) << "|J=" << cfg.grid.steps << "|M=" << cfg.mc_paths
      << "|seed=" << cfg.seed << "|spot=" << fmt_exact(spot);
  return key.str();
}

inline PriceReport benchmark_price_cached(const ExperimentConfig& cfg, double spot,
                                          const std::string& out_dir) {
  const std::string key = benchmark_cache_key(cfg, spot);
  std::string cache_path;
  if (!out_dir.empty()) {
    cache_path = detail::ensure_dir(out_dir + "/cache") + "/bench_" +
                 std::to_string(fnv1a64(key)) + ".txt";
    std::ifstream is(cache_path);
    if (is) {
      std::string stored_key;
      double estimate, std_error;
      if (std::getline(is, stored_key) && stored_key == key && (is >> estimate >> std_error)) {
        PriceReport r;
        r.estimate = estimate;
        r.std_error = std_error;
        r.method = "benchmark";
        r.rep = cfg.model;
        r.paths = cfg.mc_paths;
        return r;
      }
    }
  }
  PriceReport r = mc_price_benchmark(cfg.model_params(), cfg.sabr, cfg.option, cfg.grid,
                                     cfg.mc_paths, spot, cfg.seed, cfg.threads);
  if (!cache_path.empty()) {
    std::ofstream os(cache_path);
    os << key << '\n' << fmt_exact(r.estimate) << ' ' << fmt_exact(r.std_error) << '\n';
  }
  return r;
}

// -------- representation providers from a config ---------------------------

inline TensorPoly analytic_coefficients(const ExperimentConfig& cfg, int level) {
  if (cfg.model == "ou") return ou_coefficients(OuParams{cfg.kappa, cfg.theta, cfg.eta, cfg.v0}, level);
  if (cfg.model == "mgbm")
    return mgbm_coefficients(MgbmParams{cfg.kappa, cfg.theta, cfg.sigma, cfg.eta, cfg.v0}, level);
  throw ConfigError("analytic coefficients exist only for ou and mgbm");
}

inline std::string model_file_for_level(const ExperimentConfig& cfg, int level) {
  std::string path = cfg.model_file;
  const auto pos = path.find("{N}");
  if (pos != std::string::npos) path.replace(pos, 3, std::to_string(level));
  return path;
}

// resolves the configured representation into a provider for one level
inline RepProvider representation_provider(const ExperimentConfig& cfg, int level) {
  if (cfg.representation == "analytic")
    return analytic_provider(analytic_coefficients(cfg, level), level, cfg.sig_mode,
                             "analytic-" + cfg.model);
  if (cfg.representation == "exact") return exact_provider(cfg.model_params(), cfg.grid);
  const std::string path = model_file_for_level(cfg, level);
  if (path.empty() || !std::filesystem::exists(path))
    throw ConfigError("learned representation needs a model file; missing: " +
                      (path.empty() ? std::string("<model_file unset>") : path));
  LoadedModel loaded = load_model_file(path);
  if (loaded.kind == "linear") {
    if (cfg.representation != "linear")
      throw ConfigError("model file " + path + " holds a linear model");
    LinearRepModel m = loaded.linear;
    SigMode mode = cfg.sig_mode;
    return [m, mode](std::size_t, const TimeExtendedPath& path_in) {
      SigStream sig = signature_stream(path_in, m.level(), mode);
      return predict(m, sig, path_in);
    };
  }
  if (cfg.representation != "nonlinear")
    throw ConfigError("model file " + path + " holds a nonlinear model");
  NonlinearRepModel m = loaded.nonlinear;
  SigMode mode = cfg.sig_mode;
  return [m, mode](std::size_t, const TimeExtendedPath& path_in) {
    SigStream sig = signature_stream(path_in, m.level(), mode);
    return predict(m, sig, path_in);
  };
}

// -------- drivers -----------------------------------------------------------

// representation accuracy rows over cfg.levels
inline std::vector<ReprRow> run_repr_error(const ExperimentConfig& cfg) {
  cfg.validate();
  PathSet ps = simulate(cfg.model_params(), cfg.grid, cfg.mc_paths, cfg.seed, cfg.threads);
  std::vector<ReprRow> rows;

  if (cfg.representation == "analytic" || cfg.representation == "exact") {
    const int max_level =
        cfg.representation == "exact" ? 0 : *std::max_element(cfg.levels.begin(), cfg.levels.end());
    std::vector<std::vector<double>> eps_v(cfg.levels.size(), std::vector<double>(cfg.mc_paths));
    std::vector<std::vector<double>> eps_i = eps_v;
    std::vector<TensorPoly> coeffs;
    if (cfg.representation == "analytic")
      for (int n : cfg.levels) coeffs.push_back(analytic_coefficients(cfg, n));
    parallel_for(cfg.mc_paths, cfg.threads, [&](std::size_t m) {
      auto path = path_from_increments(cfg.grid.dt(), ps.dw_row(m));
      if (cfg.representation == "exact") {
        for (std::size_t k = 0; k < cfg.levels.size(); ++k) {
          eps_v[k][m] = 0.0;
          eps_i[k][m] = 0.0;
        }
        return;
      }
      SigStream sig = signature_stream(path, max_level, cfg.sig_mode);
      for (std::size_t k = 0; k < cfg.levels.size(); ++k) {
        RepStream rep = reconstruct(coeffs[k], sig, path);
        eps_v[k][m] = mae_pathwise(rep.v_tilde, ps.v_row(m));
        eps_i[k][m] = mae_pathwise(rep.i_tilde, ps.i_row(m));
      }
    });
    for (std::size_t k = 0; k < cfg.levels.size(); ++k) {
      MaeSummary sv = summarize_mae(eps_v[k]);
      MaeSummary si = summarize_mae(eps_i[k]);
      rows.push_back({cfg.model, cfg.representation == "exact" ? "exact" : "analytic",
                      cfg.levels[k], sv.mean, sv.stddev, si.mean, si.stddev});
    }
    return rows;
  }

  // learned representations come from per-level model files
  for (int n : cfg.levels) {
    RepProvider provider = representation_provider(cfg, n);
    std::vector<double> ev(cfg.mc_paths), ei(cfg.mc_paths);
    parallel_for(cfg.mc_paths, cfg.threads, [&](std::size_t m) {
      auto path = path_from_increments(cfg.grid.dt(), ps.dw_row(m));
      RepStream rep = provider(m, path);
      ev[m] = mae_pathwise(rep.v_tilde, ps.v_row(m));
      ei[m] = mae_pathwise(rep.i_tilde, ps.i_row(m));
    });
    MaeSummary sv = summarize_mae(ev);
    MaeSummary si = summarize_mae(ei);
    rows.push_back({cfg.model, cfg.representation, n, sv.mean, sv.stddev, si.mean, si.stddev});
  }
  return rows;
}

// pricing-error rows across levels and moneyness;
// benchmark computed once per spot under the master seed, all methods share
// the same driving noise
inline std::vector<PriceRow> run_pricing_table(const ExperimentConfig& cfg,
                                               const std::string& out_dir = "") {
  cfg.validate();
  std::vector<PriceReport> bench;
  for (double spot : cfg.spots) bench.push_back(benchmark_price_cached(cfg, spot, out_dir));

  std::vector<PriceRow> rows;
  const PdeGrid pg = cfg.pde_grid();
  for (int n : cfg.levels) {
    RepProvider provider = representation_provider(cfg, n);
    const TensorPoly ell =
        cfg.representation == "analytic" ? analytic_coefficients(cfg, n) : TensorPoly(0);
    for (std::size_t s = 0; s < cfg.spots.size(); ++s) {
      PriceReport r = mc_price_sig(provider, cfg.sabr, cfg.option, cfg.grid, cfg.mc_paths,
                                   cfg.spots[s], cfg.seed, cfg.threads, n);
      rows.push_back({cfg.id, cfg.model, "sde", cfg.representation, n,
                      moneyness_tag(cfg.spots[s], cfg.option.strike), cfg.spots[s],
                      std::fabs(r.estimate - bench[s].estimate), r.estimate, bench[s].estimate,
                      r.std_error});
    }
    PdePriceResult pde =
        pde_price(provider, cfg.sabr, cfg.option, cfg.grid, pg, cfg.pde_paths, cfg.spots,
                  cfg.seed, cfg.coeff_mode, cfg.threads, n,
                  cfg.representation == "analytic" ? &ell : nullptr, cfg.sig_mode);
    for (std::size_t s = 0; s < cfg.spots.size(); ++s) {
      const PriceReport& r = pde.per_spot[s];
      rows.push_back({cfg.id, cfg.model, "pde", cfg.representation, n,
                      moneyness_tag(cfg.spots[s], cfg.option.strike), cfg.spots[s],
                      std::fabs(r.estimate - bench[s].estimate), r.estimate, bench[s].estimate,
                      r.std_error});
    }
  }
  return rows;
}

struct LearnedSweepResult {
  std::vector<ReprRow> mae_rows;
  std::vector<PriceRow> price_rows;
};

// trains linear and nonlinear representations per level on fresh paths,
// reports held-out accuracy and pricing errors through both pricers
inline LearnedSweepResult run_learned_sweep(const ExperimentConfig& cfg,
                                            const std::string& out_dir = "") {
  cfg.validate();
  if (cfg.model != "rheston" && cfg.model != "rbergomi" && cfg.model != "ou" &&
      cfg.model != "mgbm")
    throw ConfigError("learned sweep: unknown model");

  const std::size_t total = cfg.train_paths + cfg.holdout_paths;
  PathSet all = simulate(cfg.model_params(), cfg.grid, total, cfg.seed, cfg.threads);
  PathSet train = all;
  train.count = cfg.train_paths;
  train.dw.resize(train.count * cfg.grid.steps);
  train.db.resize(train.count * cfg.grid.steps);
  train.v.resize(train.count * (cfg.grid.steps + 1));
  train.ii.resize(train.count * (cfg.grid.steps + 1));

  TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;

  LearnedSweepResult out;
  for (int n : cfg.levels) {
    LinearRepModel lin = fit_linear(train, n, tc, cfg.sig_mode);
    NonlinearRepModel net = train_nonlinear(train, n, tc, cfg.sig_mode);
    if (!out_dir.empty()) {
      const std::string dir = detail::ensure_dir(out_dir + "/models");
      save_model_file(dir + "/" + cfg.model + "_linear_N" + std::to_string(n) + ".txt", lin);
      save_model_file(dir + "/" + cfg.model + "_nonlinear_N" + std::to_string(n) + ".txt", net);
    }

    std::vector<double> ev_lin(cfg.holdout_paths), ei_lin(cfg.holdout_paths);
    std::vector<double> ev_net(cfg.holdout_paths), ei_net(cfg.holdout_paths);
    parallel_for(cfg.holdout_paths, cfg.threads, [&](std::size_t k) {
      const std::size_t m = cfg.train_paths + k;
      auto path = path_from_increments(cfg.grid.dt(), all.dw_row(m));
      SigStream sig = signature_stream(path, n, cfg.sig_mode);
      RepStream rl = predict(lin, sig, path);
      RepStream rn = predict(net, sig, path);
      ev_lin[k] = mae_pathwise(rl.v_tilde, all.v_row(m));
      ei_lin[k] = mae_pathwise(rl.i_tilde, all.i_row(m));
      ev_net[k] = mae_pathwise(rn.v_tilde, all.v_row(m));
      ei_net[k] = mae_pathwise(rn.i_tilde, all.i_row(m));
    });
    MaeSummary sv = summarize_mae(ev_lin), si = summarize_mae(ei_lin);
    out.mae_rows.push_back({cfg.model, "linear", n, sv.mean, sv.stddev, si.mean, si.stddev});
    sv = summarize_mae(ev_net);
    si = summarize_mae(ei_net);
    out.mae_rows.push_back({cfg.model, "nonlinear", n, sv.mean, sv.stddev, si.mean, si.stddev});

    // pricing through both pricers, benchmark shared across levels
    std::vector<PriceReport> bench;
    for (double spot : cfg.spots) bench.push_back(benchmark_price_cached(cfg, spot, out_dir));
    const PdeGrid pg = cfg.pde_grid();
    SigMode mode = cfg.sig_mode;
    for (const char* rep_kind_cstr : {"linear", "nonlinear"}) {
      const std::string rep_kind = rep_kind_cstr;
      RepProvider provider;
      if (rep_kind == "linear") {
        provider = [lin, mode](std::size_t, const TimeExtendedPath& p) {
          SigStream sig = signature_stream(p, lin.level(), mode);
          return predict(lin, sig, p);
        };
      } else {
        provider = [net, mode](std::size_t, const TimeExtendedPath& p) {
          SigStream sig = signature_stream(p, net.level(), mode);
          return predict(net, sig, p);
        };
      }
      for (std::size_t s = 0; s < cfg.spots.size(); ++s) {
        PriceReport r = mc_price_sig(provider, cfg.sabr, cfg.option, cfg.grid, cfg.mc_paths,
                                     cfg.spots[s], cfg.seed, cfg.threads, n);
        out.price_rows.push_back({cfg.id, cfg.model, "sde", "learned-" + rep_kind, n,
                                  moneyness_tag(cfg.spots[s], cfg.option.strike), cfg.spots[s],
                                  std::fabs(r.estimate - bench[s].estimate), r.estimate,
                                  bench[s].estimate, r.std_error});
      }
      PdePriceResult pde = pde_price(provider, cfg.sabr, cfg.option, cfg.grid, pg, cfg.pde_paths,
                                     cfg.spots, cfg.seed, CoeffMode::ScalarSquare, cfg.threads, n);
      for (std::size_t s = 0; s < cfg.spots.size(); ++s) {
        const PriceReport& r = pde.per_spot[s];
        out.price_rows.push_back({cfg.id, cfg.model, "pde", "learned-" + rep_kind, n,
                                  moneyness_tag(cfg.spots[s], cfg.option.strike), cfg.spots[s],
                                  std::fabs(r.estimate - bench[s].estimate), r.estimate,
                                  bench[s].estimate, r.std_error});
      }
    }
  }
  return out;
}

// -------- path set CSV round trip -------------------------------------------

inline void write_pathset_csv(std::ostream& os, const PathSet& ps) {
  os << "path,j,t,dW,dB,v,I\n";
  const std::size_t J = ps.grid.steps;
  for (std::size_t m = 0; m < ps.count; ++m) {
    auto dw = ps.dw_row(m);
    auto db = ps.db_row(m);
    auto v = ps.v_row(m);
    auto ii = ps.i_row(m);
    for (std::size_t j = 0; j <= J; ++j)
      os << m << ',' << j << ',' << fmt_g(ps.grid.time(j)) << ','
         << (j < J ? fmt_exact(dw[j]) : "0") << ',' << (j < J ? fmt_exact(db[j]) : "0") << ','
         << fmt_exact(v[j]) << ',' << fmt_exact(ii[j]) << '\n';
  }
}

inline PathSet read_pathset_csv(std::istream& is, const Grid& grid) {
  PathSet ps;
  ps.grid = grid;
  std::string line;
  if (!std::getline(is, line) || line.rfind("path,j,t", 0) != 0)
    throw ConfigError("path CSV: missing header");
  const std::size_t J = grid.steps;
  std::vector<double> dw, db, v, ii;
  std::size_t expected_path = 0, expected_j = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string cell;
    double vals[7];
    for (int c = 0; c < 7; ++c) {
      if (!std::getline(ss, cell, ',')) throw ConfigError("path CSV: short row");
      vals[c] = std::stod(cell);
    }
    const auto m = static_cast<std::size_t>(vals[0] + 0.5);
    const auto j = static_cast<std::size_t>(vals[1] + 0.5);
    if (m != expected_path || j != expected_j)
      throw ConfigError("path CSV: rows must be ordered by (path, j)");
    if (j < J) {
      dw.push_back(vals[3]);
      db.push_back(vals[4]);
    }
    v.push_back(vals[5]);
    ii.push_back(vals[6]);
    if (++expected_j > J) {
      expected_j = 0;
      ++expected_path;
    }
  }
  if (expected_j != 0) throw ConfigError("path CSV: truncated path block");
  ps.count = expected_path;
  ps.dw = std::move(dw);
  ps.db = std::move(db);
  ps.v = std::move(v);
  ps.ii = std::move(ii);
  return ps;
}

}  // namespace sigvol
