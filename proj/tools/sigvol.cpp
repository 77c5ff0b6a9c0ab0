#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sigvol/config.hpp"
#include "sigvol/harness.hpp"
#include "sigvol/version.hpp"

using namespace sigvol;

namespace {

struct GlobalOpts {
  std::string config_path;
  std::string out_dir = "out";
  std::uint64_t seed = 0;
  bool seed_set = false;
  bool paper_scale = false;
  std::string sig_mode;
  std::string coeff_mode;
  int threads = -1;
};

void add_global_options(CLI::App& cmd, GlobalOpts& g) {
  cmd.add_option("--config", g.config_path, "experiment config file");
  cmd.add_option("--out", g.out_dir, "output directory");
  cmd.add_option("--seed", g.seed, "master seed")->each([&](const std::string&) { g.seed_set = true; });
  cmd.add_flag("--paper-scale", g.paper_scale, "use 10^4 Monte Carlo paths");
  cmd.add_option("--sig-mode", g.sig_mode, "signature mode: ito | chen")
      ->check(CLI::IsMember({"ito", "chen"}));
  cmd.add_option("--coeff-mode", g.coeff_mode, "PDE coefficient mode: scalar | shuffle")
      ->check(CLI::IsMember({"scalar", "shuffle"}));
  cmd.add_option("--threads", g.threads, "worker threads (0 = hardware)");
}

ExperimentConfig make_config(const GlobalOpts& g, const std::string& fallback_model = "ou") {
  ExperimentConfig cfg;
  if (!g.config_path.empty()) {
    cfg = config_load(g.config_path);
  } else if (fallback_model == "rheston" || fallback_model == "rbergomi") {
    cfg = rough_default_config(fallback_model);
  } else {
    cfg.model = fallback_model;
  }
  if (g.seed_set) cfg.seed = g.seed;
  if (g.paper_scale) cfg.mc_paths = 10000;
  if (!g.sig_mode.empty()) cfg.sig_mode = g.sig_mode == "ito" ? SigMode::ItoLeft : SigMode::Chen;
  if (!g.coeff_mode.empty())
    cfg.coeff_mode = g.coeff_mode == "scalar" ? CoeffMode::ScalarSquare : CoeffMode::ShufflePair;
  if (g.threads >= 0) cfg.threads = g.threads;
  return cfg;
}

double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

std::string out_path(const GlobalOpts& g, const std::string& name) {
  std::filesystem::create_directories(g.out_dir);
  return g.out_dir + "/" + name;
}

int cmd_simulate(const GlobalOpts& g, const std::string& model, std::size_t paths,
                 const std::string& file, int dump_sig_level) {
  auto t0 = std::chrono::steady_clock::now();
  ExperimentConfig cfg = make_config(g, model);
  if (!model.empty()) cfg.model = model;
  if (paths) cfg.mc_paths = paths;
  cfg.validate();
  PathSet ps = simulate(cfg.model_params(), cfg.grid, cfg.mc_paths, cfg.seed, cfg.threads);
  const std::string csv = out_path(g, file.empty() ? "paths_" + cfg.model + ".csv" : file);
  {
    std::ofstream os(csv);
    write_pathset_csv(os, ps);
  }
  std::vector<std::string> notes;
  if (ps.resampled) notes.push_back("resampled_paths = " + std::to_string(ps.resampled));
  write_metadata(csv, cfg, "simulate", ms_since(t0), notes);
  if (dump_sig_level >= 0 && ps.count > 0) {
    auto path = path_from_increments(cfg.grid.dt(), ps.dw_row(0));
    SigStream sig = signature_stream(path, dump_sig_level, cfg.sig_mode);
    std::ofstream os(csv + ".sig");
    dump_stream_csv(os, path, sig);
  }
  std::cout << "wrote " << csv << " (" << ps.count << " paths)\n";
  return 0;
}

int cmd_repr_error(const GlobalOpts& g, const std::string& model, const std::string& rep,
                   const std::string& model_file, const std::string& file, bool print_coeffs) {
  auto t0 = std::chrono::steady_clock::now();
  ExperimentConfig cfg = make_config(g, model.empty() ? "ou" : model);
  if (!model.empty()) cfg.model = model;
  if (!rep.empty()) cfg.representation = rep;
  if (!model_file.empty()) cfg.model_file = model_file;
  cfg.validate();
  if (print_coeffs && cfg.representation == "analytic") {
    for (int n : cfg.levels) {
      TensorPoly ell = analytic_coefficients(cfg, n);
      std::cout << "ell  N=" << n << ": " << ell.to_string() << "\n";
      std::cout << "p    N=" << n << ": " << integral_coefficients(ell, n).to_string() << "\n";
    }
  }
  auto rows = run_repr_error(cfg);
  const std::string csv = out_path(g, file.empty() ? "repr_error.csv" : file);
  {
    std::ofstream os(csv);
    write_repr_csv(os, rows, cfg);
  }
  write_metadata(csv, cfg, "repr-error", ms_since(t0));
  std::cout << "wrote " << csv << " (" << rows.size() << " rows)\n";
  return 0;
}

int cmd_table2(const GlobalOpts& g) {
  auto t0 = std::chrono::steady_clock::now();
  std::vector<ReprRow> rows;
  ExperimentConfig cfg = make_config(g);
  for (const char* model : {"ou", "mgbm"}) {
    ExperimentConfig c = cfg;
    c.id = "table2";
    c.model = model;
    c.representation = "analytic";
    c.validate();
    auto part = run_repr_error(c);
    rows.insert(rows.end(), part.begin(), part.end());
  }
  const std::string csv = out_path(g, "table2.csv");
  {
    std::ofstream os(csv);
    write_repr_csv(os, rows, cfg);
  }
  write_metadata(csv, cfg, "table2", ms_since(t0));
  std::cout << "wrote " << csv << "\n";
  return 0;
}

int cmd_table3(const GlobalOpts& g) {
  auto t0 = std::chrono::steady_clock::now();
  std::vector<PriceRow> rows;
  ExperimentConfig cfg = make_config(g);
  for (const char* model : {"ou", "mgbm"}) {
    ExperimentConfig c = cfg;
    c.id = "table3";
    c.model = model;
    c.representation = "analytic";
    c.validate();
    auto part = run_pricing_table(c, g.out_dir);
    rows.insert(rows.end(), part.begin(), part.end());
  }
  const std::string csv = out_path(g, "table3.csv");
  {
    std::ofstream os(csv);
    write_price_csv(os, rows, cfg);
  }
  write_metadata(csv, cfg, "table3", ms_since(t0));
  std::cout << "wrote " << csv << "\n";
  return 0;
}

int cmd_learned_sweep(const GlobalOpts& g, const std::string& model) {
  auto t0 = std::chrono::steady_clock::now();
  ExperimentConfig cfg = make_config(g, model.empty() ? "rheston" : model);
  if (!model.empty()) cfg.model = model;
  cfg.validate();
  LearnedSweepResult result = run_learned_sweep(cfg, g.out_dir);
  const std::string mae_csv = out_path(g, "sweep_" + cfg.model + "_mae.csv");
  const std::string price_csv = out_path(g, "sweep_" + cfg.model + "_pricing.csv");
  {
    std::ofstream os(mae_csv);
    write_repr_csv(os, result.mae_rows, cfg);
  }
  {
    std::ofstream os(price_csv);
    write_price_csv(os, result.price_rows, cfg);
  }
  write_metadata(mae_csv, cfg, "learned-sweep", ms_since(t0));
  std::cout << "wrote " << mae_csv << " and " << price_csv << "\n";
  return 0;
}

int cmd_train(const GlobalOpts& g, const std::string& data, const std::string& kind, int level,
              const std::string& model_out, const ExperimentConfig& flags) {
  auto t0 = std::chrono::steady_clock::now();
  ExperimentConfig cfg = flags;
  std::ifstream is(data);
  if (!is) throw ConfigError("train: dataset not found: " + data);
  PathSet ps = read_pathset_csv(is, cfg.grid);
  TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;
  std::string out_file = model_out;
  if (out_file.empty())
    out_file = out_path(g, kind + "_N" + std::to_string(level) + ".model");
  if (kind == "linear") {
    save_model_file(out_file, fit_linear(ps, level, tc, cfg.sig_mode));
  } else if (kind == "nonlinear") {
    save_model_file(out_file, train_nonlinear(ps, level, tc, cfg.sig_mode));
  } else {
    throw ConfigError("train: kind must be linear or nonlinear");
  }
  write_metadata(out_file, cfg, "train", ms_since(t0));
  std::cout << "wrote " << out_file << "\n";
  return 0;
}

int cmd_price(const GlobalOpts& g, const std::string& method, const std::string& model,
              const std::string& rep, const std::string& model_file, int level, double spot,
              const std::string& profile_file, const std::string& file) {
  auto t0 = std::chrono::steady_clock::now();
  ExperimentConfig cfg = make_config(g, model.empty() ? "ou" : model);
  if (!model.empty()) cfg.model = model;
  if (!rep.empty()) cfg.representation = rep;
  if (!model_file.empty()) cfg.model_file = model_file;
  cfg.validate();

  PriceReport report;
  std::vector<double> profile;
  if (method == "benchmark") {
    report = mc_price_benchmark(cfg.model_params(), cfg.sabr, cfg.option, cfg.grid, cfg.mc_paths,
                                spot, cfg.seed, cfg.threads);
  } else if (method == "mc-sig") {
    report = mc_price_sig(representation_provider(cfg, level), cfg.sabr, cfg.option, cfg.grid,
                          cfg.mc_paths, spot, cfg.seed, cfg.threads, level);
    report.rep = cfg.representation;
  } else if (method == "pde") {
    const TensorPoly ell =
        cfg.representation == "analytic" ? analytic_coefficients(cfg, level) : TensorPoly(0);
    std::vector<double> spots{spot};
    PdePriceResult r =
        pde_price(representation_provider(cfg, level), cfg.sabr, cfg.option, cfg.grid,
                  cfg.pde_grid(), cfg.pde_paths, spots, cfg.seed, cfg.coeff_mode, cfg.threads,
                  level, cfg.representation == "analytic" ? &ell : nullptr, cfg.sig_mode);
    report = r.per_spot[0];
    report.rep = cfg.representation;
    profile = std::move(r.mean_profile);
  } else {
    throw ConfigError("price: method must be benchmark, mc-sig, or pde");
  }

  const std::string csv = out_path(g, file.empty() ? "price.csv" : file);
  {
    std::ofstream os(csv);
    os << "method,model,rep,N,spot,price,std_error,paths,resampled,seed,steps,maturity\n";
    os << method << ',' << cfg.model << ',' << report.rep << ',' << level << ',' << fmt_g(spot)
       << ',' << fmt_g(report.estimate) << ',' << fmt_g(report.std_error) << ',' << report.paths
       << ',' << report.resampled << ',' << cfg.seed << ',' << cfg.grid.steps << ','
       << fmt_g(cfg.grid.maturity) << '\n';
  }
  write_metadata(csv, cfg, "price " + method, ms_since(t0));
  if (!profile.empty() && !profile_file.empty()) {
    const PdeGrid pg = cfg.pde_grid();
    std::ofstream os(out_path(g, profile_file));
    os << "x,u0\n";
    for (std::size_t l = 0; l <= pg.cells; ++l)
      os << fmt_g(pg.node(l)) << ',' << fmt_g(profile[l]) << '\n';
  }
  std::cout << "price = " << fmt_g(report.estimate) << "  (se " << fmt_g(report.std_error)
            << "), wrote " << csv << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{std::string(kVersionString) +
               " - European put pricing under signature-represented stochastic volatility"};
  app.require_subcommand(1);

  GlobalOpts g;

  auto* sim = app.add_subcommand("simulate", "simulate a volatility path set to CSV");
  std::string sim_model = "ou", sim_file;
  std::size_t sim_paths = 0;
  int sim_dump_level = -1;
  add_global_options(*sim, g);
  sim->add_option("--model", sim_model, "ou | mgbm | rheston | rbergomi");
  sim->add_option("--paths", sim_paths, "number of paths");
  sim->add_option("--file", sim_file, "output CSV name");
  sim->add_option("--dump-sig", sim_dump_level, "also dump the first path's signature stream");

  auto* repr = app.add_subcommand("repr-error", "representation accuracy table");
  std::string repr_model, repr_rep, repr_model_file, repr_file;
  bool repr_print_coeffs = false;
  add_global_options(*repr, g);
  repr->add_option("--model", repr_model, "volatility model");
  repr->add_option("--rep", repr_rep, "analytic | linear | nonlinear | exact");
  repr->add_option("--model-file", repr_model_file, "learned model file (template with {N})");
  repr->add_option("--file", repr_file, "output CSV name");
  repr->add_flag("--print-coeffs", repr_print_coeffs, "print the coefficient tensors per level");

  auto* t2 = app.add_subcommand("table2", "representation accuracy, OU and mGBM, levels 1-5");
  add_global_options(*t2, g);

  auto* t3 = app.add_subcommand("table3", "pricing errors, OU and mGBM, SDE and PDE");
  add_global_options(*t3, g);

  auto* sweep = app.add_subcommand("learned-sweep", "train and evaluate learned representations");
  std::string sweep_model;
  add_global_options(*sweep, g);
  sweep->add_option("--model", sweep_model, "rheston | rbergomi (default rheston)");

  auto* train_cmd = app.add_subcommand("train", "fit a representation model from a path CSV");
  std::string train_data, train_kind = "linear", train_out;
  int train_level = 3;
  add_global_options(*train_cmd, g);
  train_cmd->add_option("--data", train_data, "path CSV from `simulate`")->required();
  train_cmd->add_option("--kind", train_kind, "linear | nonlinear");
  train_cmd->add_option("--level", train_level, "truncation level");
  train_cmd->add_option("--model-out", train_out, "output model file");

  auto* price = app.add_subcommand("price", "price a European put one way");
  std::string price_method = "benchmark", price_model, price_rep, price_model_file, price_file,
              price_profile;
  int price_level = 3;
  double price_spot = 110.0;
  add_global_options(*price, g);
  price->add_option("--method", price_method, "benchmark | mc-sig | pde");
  price->add_option("--model", price_model, "volatility model");
  price->add_option("--rep", price_rep, "analytic | linear | nonlinear | exact");
  price->add_option("--model-file", price_model_file, "learned model file");
  price->add_option("--level", price_level, "truncation level");
  price->add_option("--spot", price_spot, "initial asset price");
  price->add_option("--profile", price_profile, "write the averaged u(0,x) profile CSV");
  price->add_option("--file", price_file, "output CSV name");

  try {
    app.parse(argc, argv);
    if (sim->parsed()) return cmd_simulate(g, sim_model, sim_paths, sim_file, sim_dump_level);
    if (repr->parsed())
      return cmd_repr_error(g, repr_model, repr_rep, repr_model_file, repr_file,
                            repr_print_coeffs);
    if (t2->parsed()) return cmd_table2(g);
    if (t3->parsed()) return cmd_table3(g);
    if (sweep->parsed()) return cmd_learned_sweep(g, sweep_model);
    if (train_cmd->parsed())
      return cmd_train(g, train_data, train_kind, train_level, train_out, make_config(g));
    if (price->parsed())
      return cmd_price(g, price_method, price_model, price_rep, price_model_file, price_level,
                       price_spot, price_profile, price_file);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
