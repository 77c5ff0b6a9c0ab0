#include "doctest.h"

#include <cmath>
#include <vector>

#include "sigvol/analytic_rep.hpp"
#include "sigvol/pricing.hpp"
#include "sigvol/vol_models.hpp"

using namespace sigvol;

namespace {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// closed-form oracle, zero rates
double black_scholes_put(double spot, double strike, double vol, double maturity) {
  const double sv = vol * std::sqrt(maturity);
  const double d1 = (std::log(spot / strike) + 0.5 * vol * vol * maturity) / sv;
  const double d2 = d1 - sv;
  return strike * normal_cdf(-d2) - spot * normal_cdf(-d1);
}

const Grid kGrid{1.0, 251};
const OptionSpec kPut{110.0, 1.0};

RepProvider zero_provider(std::size_t steps) {
  return [steps](std::size_t, const TimeExtendedPath&) {
    RepStream r;
    r.tag = "zero";
    r.v_tilde.assign(steps + 1, 0.0);
    r.i_tilde.assign(steps + 1, 0.0);
    return r;
  };
}

RepProvider constant_vol_provider(std::size_t steps, double vol) {
  return [steps, vol](std::size_t, const TimeExtendedPath& path) {
    RepStream r;
    r.tag = "const";
    r.v_tilde.assign(steps + 1, vol);
    r.i_tilde.assign(steps + 1, 0.0);
    for (std::size_t j = 0; j < steps; ++j)
      r.i_tilde[j + 1] = r.i_tilde[j] + vol * path.dw(j);
    return r;
  };
}

}  // namespace

TEST_CASE("input validation") {
  SabrSpec bad_rho{1.5, 0.6};
  CHECK_THROWS_AS(bad_rho.validate(), std::invalid_argument);
  SabrSpec bad_beta{-0.4, 0.0};
  CHECK_THROWS_AS(bad_beta.validate(), std::invalid_argument);
  OptionSpec bad_strike{-1.0, 1.0};
  CHECK_THROWS_AS(bad_strike.validate(), std::invalid_argument);
  PdeGrid bad_grid{10.0, 5.0, 100};
  CHECK_THROWS_AS(bad_grid.validate(), std::invalid_argument);
}

TEST_CASE("benchmark pricer recovers Black-Scholes for constant vol, beta = 1") {
  const double vol = 0.2, spot = 100.0;
  // OU with kappa = 0, eta = 0 freezes v at v0
  ModelParams model = OuParams{0.0, 0.0, 0.0, vol};
  SabrSpec sabr{-0.3, 1.0};
  PriceReport r = mc_price_benchmark(model, sabr, kPut, kGrid, 100000, spot, 7);
  const double exact = black_scholes_put(spot, kPut.strike, vol, 1.0);
  CHECK(std::fabs(r.estimate - exact) <= 3.0 * r.std_error);
  CHECK(r.std_error > 0.0);
}

TEST_CASE("zero-volatility model prices to the intrinsic payoff exactly") {
  ModelParams model = OuParams{0.0, 0.0, 0.0, 0.0};
  SabrSpec sabr{-0.4, 0.6};
  for (double spot : {95.0, 110.0, 115.0}) {
    PriceReport r = mc_price_benchmark(model, sabr, kPut, kGrid, 200, spot, 3);
    CHECK(r.estimate == kPut.payoff(spot));
    CHECK(r.std_error == 0.0);
  }
}

TEST_CASE("benchmark runs are reproducible under a common seed") {
  ModelParams model = OuParams{1.0, 0.25, 1.2, 0.1};
  SabrSpec sabr{-0.4, 0.6};
  PriceReport a = mc_price_benchmark(model, sabr, kPut, kGrid, 500, 110.0, 11, 1);
  PriceReport b = mc_price_benchmark(model, sabr, kPut, kGrid, 500, 110.0, 11, 2);
  CHECK(a.estimate == b.estimate);
  CHECK(a.std_error == b.std_error);
}

TEST_CASE("signature-SDE pricer with a zero representation is deterministic at the payoff") {
  SabrSpec sabr{-0.4, 0.6};
  PriceReport r = mc_price_sig(zero_provider(kGrid.steps), sabr, kPut, kGrid, 100, 115.0, 5);
  CHECK(r.estimate == kPut.payoff(115.0));
  CHECK(r.std_error == 0.0);
}

TEST_CASE("signature-SDE pricer matches the benchmark when handed the exact representation") {
  // with the exact (v, I) the correction term is the only difference; at
  // sigma_eff this small the two estimates must sit within a few std errors
  ModelParams model = OuParams{1.0, 0.25, 1.2, 0.1};
  SabrSpec sabr{-0.4, 0.6};
  PriceReport bench = mc_price_benchmark(model, sabr, kPut, kGrid, 4000, 110.0, 13);
  PriceReport sig = mc_price_sig(exact_provider(model, kGrid), sabr, kPut, kGrid, 4000, 110.0, 13);
  CHECK(std::fabs(bench.estimate - sig.estimate) <= 0.5);
}

TEST_CASE("scalar-square coefficient field is nonnegative and zero at zero vol") {
  SabrSpec sabr{0.0, 0.6};
  PdeGrid pg{11.0, 330.0, 100};
  RepStream rep;
  rep.v_tilde.assign(4, 0.0);
  rep.i_tilde.assign(4, 0.0);
  CoeffField f = pde_coefficient_field(rep, sabr, pg, CoeffMode::ScalarSquare);
  for (double v : f.a) CHECK(v == 0.0);

  rep.v_tilde.assign(4, 0.3);
  CoeffField f2 = pde_coefficient_field(rep, sabr, pg, CoeffMode::ScalarSquare);
  // rho = 0 kills the f-term, leaving g^2 v^2 = x^{2 beta} v^2
  for (std::size_t l = 0; l <= 100; ++l) {
    const double x = pg.node(l);
    CHECK(f2.a[l] == doctest::Approx(std::pow(x, 1.2) * 0.09).epsilon(1e-12));
    CHECK(f2.a[l] >= 0.0);
  }
}

TEST_CASE("shuffle-pair field matches scalar-square in Chen mode when truncation does not bite") {
  // deg(qf) = 2*deg(ell) + 1 must stay within half the stream depth for the
  // shuffle identity to hold exactly
  OuParams ou{1.0, 0.25, 1.2, 0.1};
  const int n_low = 1, n_sig = 6;
  TensorPoly ell = ou_coefficients(ou, n_low);
  TensorPoly lifted = project(ell, n_sig);

  Grid grid{1.0, 32};
  PathSet ps = simulate(ModelParams(ou), grid, 1, 77);
  auto path = path_from_increments(grid.dt(), ps.dw_row(0));
  SigStream sig = signature_stream(path, n_sig, SigMode::Chen);

  // scalar side built from the same pairings the tensors encode
  TensorPoly p = integral_coefficients(lifted, n_sig);
  RepStream rep;
  rep.v_tilde.resize(grid.steps + 1);
  rep.i_tilde.resize(grid.steps + 1);
  for (std::size_t j = 0; j <= grid.steps; ++j) {
    rep.v_tilde[j] = pair_at(lifted, sig, j);
    rep.i_tilde[j] = pair_at(p, sig, j);
  }
  rep.i_tilde[0] = 0.0;

  SabrSpec sabr{-0.4, 0.6};
  PdeGrid pg{11.0, 330.0, 40};
  CoeffField scalar = pde_coefficient_field(rep, sabr, pg, CoeffMode::ScalarSquare);
  CoeffField tensor = pde_coefficient_field(rep, sabr, pg, CoeffMode::ShufflePair, &lifted, &sig);
  double worst = 0.0;
  for (std::size_t i = 0; i < scalar.a.size(); ++i)
    worst = std::max(worst, std::fabs(scalar.a[i] - tensor.a[i]));
  CHECK(worst <= 1e-8);
  CHECK_THROWS_AS(pde_coefficient_field(rep, sabr, pg, CoeffMode::ShufflePair, &lifted, nullptr),
                  std::invalid_argument);
}

TEST_CASE("cn_solve: zero coefficients transport the payoff unchanged") {
  PdeGrid pg{11.0, 330.0, 200};
  Grid grid{1.0, 50};
  CoeffField f;
  f.a.assign((grid.steps + 1) * (pg.cells + 1), 0.0);
  auto u0 = cn_solve(f, pg, grid, kPut, [](double) { return 99.0; }, [](double) { return 0.0; });
  for (std::size_t l = 0; l <= pg.cells; ++l)
    CHECK(u0[l] == doctest::Approx(kPut.payoff(pg.node(l))).epsilon(1e-12));
}

TEST_CASE("cn_solve reproduces the Black-Scholes put at the documented grid") {
  const double vol = 0.2;
  PdeGrid pg{11.0, 330.0, 1276};  // dx = 0.25
  CoeffField f;
  f.a.resize((kGrid.steps + 1) * (pg.cells + 1));
  for (std::size_t j = 0; j <= kGrid.steps; ++j)
    for (std::size_t l = 0; l <= pg.cells; ++l) {
      const double x = pg.node(l);
      f.a[j * (pg.cells + 1) + l] = vol * vol * x * x;
    }
  auto u0 = cn_solve(f, pg, kGrid, kPut, [](double) { return kPut.payoff(11.0); },
                     [](double) { return 0.0; });
  const double got = interpolate_profile(u0, pg, 110.0);
  const double exact = black_scholes_put(110.0, 110.0, vol, 1.0);
  CHECK(std::fabs(got - exact) / exact <= 1e-3);
}

TEST_CASE("cn_solve rejects negative coefficients and keeps the terminal slice intact") {
  PdeGrid pg{11.0, 330.0, 50};
  Grid grid{1.0, 4};
  CoeffField f;
  f.a.assign((grid.steps + 1) * (pg.cells + 1), -1.0);
  CHECK_THROWS_AS(
      cn_solve(f, pg, grid, kPut, [](double) { return 0.0; }, [](double) { return 0.0; }),
      std::invalid_argument);
}

TEST_CASE("pde_price with a zero representation returns the payoff with zero spread") {
  SabrSpec sabr{-0.4, 0.6};
  PdeGrid pg{11.0, 330.0, 638};
  std::vector<double> spots{95.0, 110.0, 115.0};
  PdePriceResult r =
      pde_price(zero_provider(kGrid.steps), sabr, kPut, kGrid, pg, 4, spots, 17);
  for (std::size_t s = 0; s < spots.size(); ++s) {
    CHECK(r.per_spot[s].estimate == doctest::Approx(kPut.payoff(spots[s])).epsilon(1e-12));
    CHECK(r.per_spot[s].std_error <= 1e-12);
  }
}

TEST_CASE("put price is monotone in the spot and bounded by the strike") {
  ModelParams model = OuParams{1.0, 0.25, 1.2, 0.1};
  SabrSpec sabr{-0.4, 0.6};
  TensorPoly ell = ou_coefficients(OuParams{1.0, 0.25, 1.2, 0.1}, 3);
  auto provider = analytic_provider(ell, 3, SigMode::ItoLeft);
  double last = 1e300;
  for (double spot : {95.0, 110.0, 115.0}) {
    PriceReport bench = mc_price_benchmark(model, sabr, kPut, kGrid, 2000, spot, 99);
    PriceReport sig = mc_price_sig(provider, sabr, kPut, kGrid, 2000, spot, 99, 0, 3);
    for (const PriceReport& r : {bench, sig}) {
      CHECK(r.estimate >= 0.0);
      CHECK(r.estimate <= kPut.strike);
    }
    CHECK(bench.estimate <= last);
    last = bench.estimate;
  }
}

TEST_CASE("signature-SDE pricing error shrinks from level 1 to level 3") {
  ModelParams model = OuParams{1.0, 0.25, 1.2, 0.1};
  SabrSpec sabr{-0.4, 0.6};
  PriceReport bench = mc_price_benchmark(model, sabr, kPut, kGrid, 4000, 110.0, 21);
  double err[4] = {0, 0, 0, 0};
  for (int n : {1, 3}) {
    TensorPoly ell = ou_coefficients(OuParams{1.0, 0.25, 1.2, 0.1}, n);
    PriceReport r = mc_price_sig(analytic_provider(ell, n, SigMode::ItoLeft), sabr, kPut, kGrid,
                                 4000, 110.0, 21, 0, n);
    err[n] = std::fabs(r.estimate - bench.estimate);
  }
  CHECK(err[3] < err[1]);
}

TEST_CASE("runs with more than 1% rejected paths fail loudly") {
  // huge flat volatility throws the asset below zero where x^beta is undefined
  ModelParams model = OuParams{0.0, 0.0, 0.0, 50.0};
  SabrSpec sabr{-0.4, 0.6};
  CHECK_THROWS_AS(mc_price_benchmark(model, sabr, kPut, Grid{1.0, 64}, 300, 0.5, 5),
                  NumericalError);
}

TEST_CASE("shuffle-pair fields clamp truncation-induced negative values and count them") {
  TensorPoly ell(1, {{Word(), 1.0}, {Word::from_digits("2"), 1.0}});
  // force the path far enough down that 1 + 2 W_t goes negative
  std::vector<double> dw{-0.5, -0.5, -0.5};
  auto path = path_from_increments(0.25, dw);
  SigStream sig = signature_stream(path, 1, SigMode::ItoLeft);
  RepStream rep;
  rep.v_tilde.assign(4, 0.0);
  rep.i_tilde.assign(4, 0.0);
  SabrSpec sabr{0.0, 1.0};
  PdeGrid pg{11.0, 330.0, 10};
  CoeffField f = pde_coefficient_field(rep, sabr, pg, CoeffMode::ShufflePair, &ell, &sig);
  CHECK(f.clamped > 0);
  for (double a : f.a) CHECK(a >= 0.0);
}
