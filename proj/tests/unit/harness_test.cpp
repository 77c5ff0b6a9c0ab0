#include "doctest.h"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "sigvol/config.hpp"
#include "sigvol/harness.hpp"

using namespace sigvol;

namespace {

ExperimentConfig tiny_config() {
  ExperimentConfig cfg;
  cfg.grid = Grid{1.0, 40};
  cfg.option.maturity = 1.0;
  cfg.mc_paths = 60;
  cfg.pde_paths = 4;
  cfg.levels = {1, 2};
  cfg.pde_dx = 1.0;
  return cfg;
}

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("sigvol_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter()++));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  static int& counter() {
    static int c = 0;
    return c;
  }
};

}  // namespace

TEST_CASE("config serializes and parses back to an equal value") {
  ExperimentConfig cfg;
  cfg.model = "rbergomi";
  cfg.levels = {1, 3, 5};
  cfg.seed = 77;
  cfg.spots = {90.0, 100.0};
  cfg.train.hidden = {32, 16};
  cfg.train.activation = "relu";
  std::istringstream is(config_serialize(cfg));
  ExperimentConfig back = config_parse(is);
  CHECK(back == cfg);
}

TEST_CASE("config parser rejects structural mistakes with locations") {
  auto parse = [](const std::string& text) {
    std::istringstream is(text);
    return config_parse(is);
  };
  CHECK_THROWS_AS(parse("[experiment]\nlevels = [3,1,2]\n"), ConfigError);
  CHECK_THROWS_AS(parse("[experiment]\nmodle = ou\n"), ConfigError);
  try {
    parse("[experiment]\nmodle = ou\n");
  } catch (const ConfigError& e) {
    const std::string what = e.what();
    CHECK(what.find("line 2") != std::string::npos);
    CHECK(what.find("did you mean") != std::string::npos);
    CHECK(what.find("model") != std::string::npos);
  }
  CHECK_THROWS_AS(parse("key_without_section = 3\n"), ConfigError);
  CHECK_THROWS_AS(parse("[nosuch]\n"), ConfigError);
  CHECK_THROWS_AS(parse("[experiment]\nrepresentation = psychic\n"), ConfigError);
}

TEST_CASE("config without a seed keeps the default and echoes it in metadata") {
  std::istringstream is("[experiment]\nmodel = ou\n[grid]\nsteps = 40\n");
  ExperimentConfig cfg = config_parse(is);
  CHECK(cfg.seed == 42);  // documented default
  TempDir tmp;
  const std::string csv = (tmp.path / "rows.csv").string();
  {
    std::ofstream os(csv);
    os << "x\n";
  }
  write_metadata(csv, cfg, "test", 1.5);
  std::ifstream meta(csv + ".meta");
  std::string text((std::istreambuf_iterator<char>(meta)), std::istreambuf_iterator<char>());
  CHECK(text.find("seed = 42") != std::string::npos);
  CHECK(text.find("command = test") != std::string::npos);
  CHECK(text.find(kVersionString) != std::string::npos);
}

TEST_CASE("path sets round-trip through CSV bit for bit") {
  Grid grid{1.0, 17};
  PathSet ps = simulate(ModelParams(MgbmParams{1.0, 0.25, 0.01, 1.2, 0.1}), grid, 7, 99);
  std::ostringstream os;
  write_pathset_csv(os, ps);
  std::istringstream is(os.str());
  PathSet back = read_pathset_csv(is, grid);
  CHECK(back.count == ps.count);
  CHECK(back.dw == ps.dw);
  CHECK(back.db == ps.db);
  CHECK(back.v == ps.v);
  CHECK(back.ii == ps.ii);
  std::istringstream bad("nope\n1,2,3\n");
  CHECK_THROWS_AS(read_pathset_csv(bad, grid), ConfigError);
}

TEST_CASE("exact representation reports zero error everywhere") {
  ExperimentConfig cfg = tiny_config();
  cfg.representation = "exact";
  auto rows = run_repr_error(cfg);
  CHECK(rows.size() == 2);
  for (const auto& r : rows) {
    CHECK(r.mae_v == 0.0);
    CHECK(r.mae_i == 0.0);
  }
}

TEST_CASE("repr-error over a learned model file requires the file") {
  ExperimentConfig cfg = tiny_config();
  cfg.representation = "linear";
  cfg.model_file = "/nonexistent/dir/model_{N}.txt";
  CHECK_THROWS_WITH_AS(static_cast<void>(run_repr_error(cfg)),
                       doctest::Contains("/nonexistent/dir/model_1.txt"), ConfigError);
}

TEST_CASE("zero-volatility pricing table has zero errors in every row") {
  ExperimentConfig cfg = tiny_config();
  cfg.model = "ou";
  cfg.kappa = 0.0;
  cfg.theta = 0.0;
  cfg.eta = 0.0;
  cfg.v0 = 0.0;
  auto rows = run_pricing_table(cfg);
  CHECK(rows.size() == 2 * 2 * 3);  // levels x methods x moneyness
  for (const auto& r : rows) {
    CHECK(r.value == 0.0);
    CHECK(r.price == cfg.option.payoff(r.spot));
  }
}

TEST_CASE("moneyness tags for a put") {
  CHECK(moneyness_tag(95.0, 110.0) == "itm");
  CHECK(moneyness_tag(110.0, 110.0) == "atm");
  CHECK(moneyness_tag(115.0, 110.0) == "otm");
}

TEST_CASE("benchmark prices are cached on disk per configuration") {
  TempDir tmp;
  ExperimentConfig cfg = tiny_config();
  PriceReport first = benchmark_price_cached(cfg, 110.0, tmp.path.string());
  std::size_t files = 0;
  for (auto& e : std::filesystem::directory_iterator(tmp.path / "cache")) {
    (void)e;
    ++files;
  }
  CHECK(files == 1);
  PriceReport second = benchmark_price_cached(cfg, 110.0, tmp.path.string());
  CHECK(first.estimate == second.estimate);
  CHECK(first.std_error == second.std_error);
  // a different spot gets its own entry
  benchmark_price_cached(cfg, 95.0, tmp.path.string());
  files = 0;
  for (auto& e : std::filesystem::directory_iterator(tmp.path / "cache")) {
    (void)e;
    ++files;
  }
  CHECK(files == 2);
}

TEST_CASE("learned sweep emits 2 accuracy rows and 12 pricing rows per level") {
  ExperimentConfig cfg = tiny_config();
  cfg.model = "rbergomi";
  cfg.eta = 1.0;
  cfg.sabr.beta = 1.0;
  cfg.levels = {2};
  cfg.train_paths = 40;
  cfg.holdout_paths = 12;
  cfg.mc_paths = 50;
  cfg.train.epochs = 4;
  cfg.train.hidden = {8};
  auto result = run_learned_sweep(cfg);
  CHECK(result.mae_rows.size() == 2);
  CHECK(result.price_rows.size() == 12);
  CHECK(result.mae_rows[0].rep == "linear");
  CHECK(result.mae_rows[1].rep == "nonlinear");
  for (const auto& r : result.price_rows) {
    CHECK(r.value >= 0.0);
    CHECK(r.price >= 0.0);
    CHECK(r.price <= cfg.option.strike);
  }
}

TEST_CASE("repr csv carries the documented columns plus rerun metadata") {
  ExperimentConfig cfg = tiny_config();
  std::vector<ReprRow> rows{{"ou", "analytic", 3, 1e-2, 5e-3, 2e-2, 6e-3}};
  std::ostringstream os;
  write_repr_csv(os, rows, cfg);
  const std::string text = os.str();
  CHECK(text.find("model,N,mae_v,sd_v,mae_I,sd_I") == 0);
  CHECK(text.find("seed") != std::string::npos);
  CHECK(text.find("ou,3,0.01,0.005,0.02,0.006") != std::string::npos);
}
