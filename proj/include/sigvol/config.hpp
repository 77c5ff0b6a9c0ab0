#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "sigvol/csv.hpp"
#include "sigvol/errors.hpp"
#include "sigvol/learned_rep.hpp"
#include "sigvol/pricing.hpp"
#include "sigvol/signature.hpp"
#include "sigvol/vol_models.hpp"

namespace sigvol {

// Everything a seeded experiment needs. Serialized as sectioned `key = value`
// text; unknown keys are rejected so typos cannot silently fall back to
// defaults.
struct ExperimentConfig {
  std::string id = "experiment";
  std::string model = "ou";            // ou | mgbm | rheston | rbergomi
  std::string representation = "analytic";  // analytic | linear | nonlinear | exact
  std::vector<int> levels = {1, 2, 3, 4, 5};
  std::uint64_t seed = 42;
  SigMode sig_mode = SigMode::ItoLeft;
  CoeffMode coeff_mode = CoeffMode::ScalarSquare;
  int threads = 0;
  std::string model_file;  // template with {N} for learned representations

  double kappa = 1.0, theta = 0.25, sigma = 0.01, eta = 1.2, v0 = 0.1, alpha = 0.2;

  Grid grid{1.0, 251};
  std::size_t mc_paths = 1000;
  std::size_t pde_paths = 200;
  std::size_t train_paths = 800;
  std::size_t holdout_paths = 200;

  SabrSpec sabr{-0.4, 0.6};
  OptionSpec option{110.0, 1.0};
  std::vector<double> spots = {95.0, 110.0, 115.0};

  double pde_x_lo = 11.0;
  double pde_x_hi = 330.0;
  double pde_dx = 0.25;

  TrainConfig train;

  ModelParams model_params() const {
    if (model == "ou") return OuParams{kappa, theta, eta, v0};
    if (model == "mgbm") return MgbmParams{kappa, theta, sigma, eta, v0};
    if (model == "rheston") return RoughHestonParams{kappa, theta, sigma, v0, alpha};
    if (model == "rbergomi") return RoughBergomiParams{v0, eta, alpha};
    throw ConfigError("unknown model '" + model + "'");
  }

  PdeGrid pde_grid() const {
    PdeGrid pg;
    pg.x_lo = pde_x_lo;
    pg.x_hi = pde_x_hi;
    const double span = pde_x_hi - pde_x_lo;
    pg.cells = static_cast<std::size_t>(span / pde_dx + 0.5);
    return pg;
  }

  void validate() const {
    grid.validate();
    sabr.validate();
    option.validate();
    pde_grid().validate();
    validate_model_name();
    sigvol::validate(model_params());
    train.validate();
    if (levels.empty()) throw ConfigError("config: levels must be nonempty");
    if (!std::is_sorted(levels.begin(), levels.end()) ||
        std::adjacent_find(levels.begin(), levels.end()) != levels.end())
      throw ConfigError("config: levels must be sorted ascending without repeats");
    for (int n : levels)
      if (n < 0 || n > 12) throw ConfigError("config: levels must lie in 0..12");
    if (representation != "analytic" && representation != "linear" &&
        representation != "nonlinear" && representation != "exact")
      throw ConfigError("config: unknown representation '" + representation + "'");
    if (spots.empty()) throw ConfigError("config: spots must be nonempty");
    if (mc_paths < 1 || pde_paths < 1) throw ConfigError("config: path counts must be positive");
  }

  void validate_model_name() const {
    if (model != "ou" && model != "mgbm" && model != "rheston" && model != "rbergomi")
      throw ConfigError("config: unknown model '" + model + "'");
  }

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

// Example-1 style defaults are the struct defaults; the rough-volatility
// drivers start from this block instead.
inline ExperimentConfig rough_default_config(const std::string& model) {
  ExperimentConfig cfg;
  cfg.model = model;
  cfg.kappa = 0.1;
  cfg.eta = 1.0;
  cfg.sabr.beta = 1.0;
  cfg.id = "learned-sweep";
  return cfg;
}

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::size_t edit_distance(const std::string& a, const std::string& b) {
  std::vector<std::size_t> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t prev = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t cur = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1,
                         prev + (a[i - 1] == b[j - 1] ? 0 : 1)});
      prev = cur;
    }
  }
  return row[b.size()];
}

inline std::vector<double> parse_list(const std::string& value, int line_no) {
  std::string s = trim(value);
  if (s.size() < 2 || s.front() != '[' || s.back() != ']')
    throw ConfigError("config line " + std::to_string(line_no) + ": expected [a,b,...]");
  std::vector<double> out;
  std::string item;
  std::istringstream ss(s.substr(1, s.size() - 2));
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    try {
      out.push_back(std::stod(item));
    } catch (...) {
      throw ConfigError("config line " + std::to_string(line_no) + ": bad number '" + item + "'");
    }
  }
  return out;
}

}  // namespace detail

inline std::string config_serialize(const ExperimentConfig& c) {
  std::ostringstream os;
  auto num = [](double x) { return fmt_exact(x); };
  os << "[experiment]\n";
  os << "id = " << c.id << "\n";
  os << "model = " << c.model << "\n";
  os << "representation = " << c.representation << "\n";
  os << "levels = [";
  for (std::size_t i = 0; i < c.levels.size(); ++i) os << (i ? "," : "") << c.levels[i];
  os << "]\n";
  os << "seed = " << c.seed << "\n";
  os << "sig_mode = " << to_string(c.sig_mode) << "\n";
  os << "coeff_mode = " << to_string(c.coeff_mode) << "\n";
  os << "threads = " << c.threads << "\n";
  os << "model_file = " << c.model_file << "\n";
  os << "\n[model]\n";
  os << "kappa = " << num(c.kappa) << "\ntheta = " << num(c.theta) << "\nsigma = " << num(c.sigma)
     << "\neta = " << num(c.eta) << "\nv0 = " << num(c.v0) << "\nalpha = " << num(c.alpha) << "\n";
  os << "\n[grid]\n";
  os << "maturity = " << num(c.grid.maturity) << "\nsteps = " << c.grid.steps << "\n";
  os << "\n[paths]\n";
  os << "mc_paths = " << c.mc_paths << "\npde_paths = " << c.pde_paths
     << "\ntrain_paths = " << c.train_paths << "\nholdout_paths = " << c.holdout_paths << "\n";
  os << "\n[sabr]\n";
  os << "rho = " << num(c.sabr.rho) << "\nbeta = " << num(c.sabr.beta) << "\n";
  os << "\n[option]\n";
  os << "strike = " << num(c.option.strike) << "\n";
  os << "spots = [";
  for (std::size_t i = 0; i < c.spots.size(); ++i) os << (i ? "," : "") << num(c.spots[i]);
  os << "]\n";
  os << "\n[pde]\n";
  os << "x_lo = " << num(c.pde_x_lo) << "\nx_hi = " << num(c.pde_x_hi)
     << "\ndx = " << num(c.pde_dx) << "\n";
  os << "\n[train]\n";
  os << "epochs = " << c.train.epochs << "\nbatch = " << c.train.batch
     << "\nlearning_rate = " << num(c.train.learning_rate) << "\nlr_decay = " << num(c.train.lr_decay)
     << "\nlr_step = " << c.train.lr_step << "\nridge = " << num(c.train.ridge) << "\nhidden = [";
  for (std::size_t i = 0; i < c.train.hidden.size(); ++i) os << (i ? "," : "") << c.train.hidden[i];
  os << "]\nvalidation_fraction = " << num(c.train.validation_fraction)
     << "\ntime_stride = " << c.train.time_stride << "\nrestarts = " << c.train.restarts
     << "\nmin_improvement = " << num(c.train.min_improvement)
     << "\nactivation = " << c.train.activation << "\n";
  return os.str();
}

inline ExperimentConfig config_parse(std::istream& is) {
  ExperimentConfig cfg;
  static const std::map<std::string, std::vector<std::string>> known = {
      {"experiment",
       {"id", "model", "representation", "levels", "seed", "sig_mode", "coeff_mode", "threads",
        "model_file"}},
      {"model", {"kappa", "theta", "sigma", "eta", "v0", "alpha"}},
      {"grid", {"maturity", "steps"}},
      {"paths", {"mc_paths", "pde_paths", "train_paths", "holdout_paths"}},
      {"sabr", {"rho", "beta"}},
      {"option", {"strike", "spots"}},
      {"pde", {"x_lo", "x_hi", "dx"}},
      {"train",
       {"epochs", "batch", "learning_rate", "lr_decay", "lr_step", "ridge", "hidden",
        "validation_fraction", "time_stride", "restarts", "min_improvement", "activation"}},
  };

  std::string line, section;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("config line " + std::to_string(line_no) + ": unterminated section");
      section = line.substr(1, line.size() - 2);
      if (!known.count(section))
        throw ConfigError("config line " + std::to_string(line_no) + ": unknown section [" +
                          section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (section.empty())
      throw ConfigError("config line " + std::to_string(line_no) + ": key outside any section");
    const auto& keys = known.at(section);
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
      std::string best;
      std::size_t best_d = 99;
      for (const auto& [sec, ks] : known)
        for (const auto& k : ks) {
          const std::size_t d = detail::edit_distance(key, k);
          if (d < best_d) {
            best_d = d;
            best = "[" + sec + "] " + k;
          }
        }
      throw ConfigError("config line " + std::to_string(line_no) + ", column " +
                        std::to_string(line.find(key) + 1) + ": unknown key '" + key +
                        "' (did you mean " + best + "?)");
    }

    auto as_double = [&]() {
      try {
        return std::stod(value);
      } catch (...) {
        throw ConfigError("config line " + std::to_string(line_no) + ": bad number '" + value +
                          "'");
      }
    };
    auto as_size = [&]() { return static_cast<std::size_t>(as_double() + 0.5); };
    auto as_int = [&]() {
      const double x = as_double();
      return static_cast<int>(x + (x < 0 ? -0.5 : 0.5));
    };

    if (section == "experiment") {
      if (key == "id") cfg.id = value;
      else if (key == "model") cfg.model = value;
      else if (key == "representation") cfg.representation = value;
      else if (key == "levels") {
        cfg.levels.clear();
        for (double x : detail::parse_list(value, line_no)) cfg.levels.push_back(static_cast<int>(x + 0.5));
      } else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(std::stoull(value));
      else if (key == "sig_mode") {
        if (value == "ito") cfg.sig_mode = SigMode::ItoLeft;
        else if (value == "chen") cfg.sig_mode = SigMode::Chen;
        else throw ConfigError("config line " + std::to_string(line_no) + ": sig_mode must be ito or chen");
      } else if (key == "coeff_mode") {
        if (value == "scalar") cfg.coeff_mode = CoeffMode::ScalarSquare;
        else if (value == "shuffle") cfg.coeff_mode = CoeffMode::ShufflePair;
        else throw ConfigError("config line " + std::to_string(line_no) + ": coeff_mode must be scalar or shuffle");
      } else if (key == "threads") cfg.threads = as_int();
      else if (key == "model_file") cfg.model_file = value;
    } else if (section == "model") {
      if (key == "kappa") cfg.kappa = as_double();
      else if (key == "theta") cfg.theta = as_double();
      else if (key == "sigma") cfg.sigma = as_double();
      else if (key == "eta") cfg.eta = as_double();
      else if (key == "v0") cfg.v0 = as_double();
      else if (key == "alpha") cfg.alpha = as_double();
    } else if (section == "grid") {
      if (key == "maturity") cfg.grid.maturity = as_double();
      else if (key == "steps") cfg.grid.steps = as_size();
    } else if (section == "paths") {
      if (key == "mc_paths") cfg.mc_paths = as_size();
      else if (key == "pde_paths") cfg.pde_paths = as_size();
      else if (key == "train_paths") cfg.train_paths = as_size();
      else if (key == "holdout_paths") cfg.holdout_paths = as_size();
    } else if (section == "sabr") {
      if (key == "rho") cfg.sabr.rho = as_double();
      else if (key == "beta") cfg.sabr.beta = as_double();
    } else if (section == "option") {
      if (key == "strike") cfg.option.strike = as_double();
      else if (key == "spots") cfg.spots = detail::parse_list(value, line_no);
    } else if (section == "pde") {
      if (key == "x_lo") cfg.pde_x_lo = as_double();
      else if (key == "x_hi") cfg.pde_x_hi = as_double();
      else if (key == "dx") cfg.pde_dx = as_double();
    } else if (section == "train") {
      if (key == "epochs") cfg.train.epochs = as_int();
      else if (key == "batch") cfg.train.batch = as_int();
      else if (key == "learning_rate") cfg.train.learning_rate = as_double();
      else if (key == "lr_decay") cfg.train.lr_decay = as_double();
      else if (key == "lr_step") cfg.train.lr_step = as_int();
      else if (key == "ridge") cfg.train.ridge = as_double();
      else if (key == "hidden") {
        cfg.train.hidden.clear();
        for (double x : detail::parse_list(value, line_no))
          cfg.train.hidden.push_back(static_cast<int>(x + 0.5));
      } else if (key == "validation_fraction") cfg.train.validation_fraction = as_double();
      else if (key == "time_stride") cfg.train.time_stride = as_int();
      else if (key == "restarts") cfg.train.restarts = as_int();
      else if (key == "min_improvement") cfg.train.min_improvement = as_double();
      else if (key == "activation") cfg.train.activation = value;
    }
  }
  cfg.option.maturity = cfg.grid.maturity;
  cfg.validate();
  return cfg;
}

inline ExperimentConfig config_load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("config file not found: " + path);
  return config_parse(is);
}

}  // namespace sigvol
