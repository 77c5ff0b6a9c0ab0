#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "sigvol/analytic_rep.hpp"
#include "sigvol/errors.hpp"
#include "sigvol/rng.hpp"
#include "sigvol/signature.hpp"
#include "sigvol/vol_models.hpp"

namespace sigvol {

struct TrainConfig {
  int epochs = 60;
  int batch = 256;
  double learning_rate = 1e-3;
  double lr_decay = 0.5;     // multiplied in every lr_step epochs
  int lr_step = 25;
  double ridge = 1e-6;
  std::vector<int> hidden = {64, 64};
  double validation_fraction = 0.2;
  std::uint64_t seed = 1;
  int time_stride = 2;   // training rows take every k-th grid index
  int restarts = 1;      // fresh initializations, best validation loss wins
  double min_improvement = 0.01;  // relative validation gain a checkpoint must bring
  std::string activation = "tanh";

  void validate() const {
    if (epochs < 1 || batch < 1 || lr_step < 1 || time_stride < 1 || restarts < 1)
      throw std::invalid_argument("TrainConfig: counts must be positive");
    if (!(learning_rate > 0.0) || !(lr_decay > 0.0) || !(ridge >= 0.0))
      throw std::invalid_argument("TrainConfig: rates must be positive");
    if (!(validation_fraction > 0.0 && validation_fraction <= 0.5))
      throw std::invalid_argument("TrainConfig: validation fraction must lie in (0, 0.5]");
    if (!(min_improvement >= 0.0 && min_improvement < 1.0))
      throw std::invalid_argument("TrainConfig: min_improvement must lie in [0, 1)");
    if (hidden.empty()) throw std::invalid_argument("TrainConfig: needs at least one hidden layer");
    for (int h : hidden)
      if (h < 1) throw std::invalid_argument("TrainConfig: hidden sizes must be positive");
    if (activation != "tanh" && activation != "relu")
      throw std::invalid_argument("TrainConfig: unknown activation");
  }

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

// number of signature entries through level n
inline std::size_t feature_width(int level) { return (std::size_t{2} << level) - 1; }

// Per-time-index ridge coefficients over the word basis; the linear
// counterpart of the network representation.
class LinearRepModel {
public:
  LinearRepModel() = default;
  LinearRepModel(int level, std::size_t steps, double ridge)
      : level_(level), steps_(steps), ridge_(ridge),
        coef_((steps + 1) * feature_width(level), 0.0) {}

  int level() const { return level_; }
  std::size_t steps() const { return steps_; }
  double ridge() const { return ridge_; }

  std::span<double> coeffs(std::size_t j) {
    return {coef_.data() + j * feature_width(level_), feature_width(level_)};
  }
  std::span<const double> coeffs(std::size_t j) const {
    return {coef_.data() + j * feature_width(level_), feature_width(level_)};
  }

  // the coefficient vector at one grid time, as a sparse tensor
  TensorPoly coeff_poly(std::size_t j) const {
    TensorPoly out(level_);
    auto c = coeffs(j);
    std::size_t idx = 0;
    for (int len = 0; len <= level_; ++len)
      for (std::uint64_t bits = 0; bits < (std::uint64_t{1} << len); ++bits)
        out.accumulate(Word(bits, len), c[idx++]);
    return out;
  }

  void save(std::ostream& os) const {
    os << "sigvol-model v1\nkind linear\nlevel " << level_ << "\nsteps " << steps_ << "\nridge ";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", ridge_);
    os << buf << '\n';
    for (std::size_t j = 0; j <= steps_; ++j) {
      auto c = coeffs(j);
      for (std::size_t k = 0; k < c.size(); ++k) {
        std::snprintf(buf, sizeof buf, "%.17g", c[k]);
        os << (k ? " " : "") << buf;
      }
      os << '\n';
    }
  }

private:
  friend LinearRepModel load_linear_model(std::istream& is);
  int level_ = 0;
  std::size_t steps_ = 0;
  double ridge_ = 0.0;
  std::vector<double> coef_;
};

namespace detail {

// in-place Cholesky solve of (G + ridge I) x = b for symmetric positive
// definite G; throws when a pivot collapses
inline void ridge_cholesky_solve(std::vector<double>& g, std::vector<double>& b, std::size_t n,
                                 double ridge) {
  for (std::size_t i = 0; i < n; ++i) g[i * n + i] += ridge;
  for (std::size_t c = 0; c < n; ++c) {
    double d = g[c * n + c];
    for (std::size_t k = 0; k < c; ++k) d -= g[c * n + k] * g[c * n + k];
    if (!(d > 0.0))
      throw std::invalid_argument(
          "fit_linear: normal matrix is singular; set ridge > 0 to regularize");
    const double l = std::sqrt(d);
    g[c * n + c] = l;
    for (std::size_t r = c + 1; r < n; ++r) {
      double s = g[r * n + c];
      for (std::size_t k = 0; k < c; ++k) s -= g[r * n + k] * g[c * n + k];
      g[r * n + c] = s / l;
    }
  }
  for (std::size_t r = 0; r < n; ++r) {
    double s = b[r];
    for (std::size_t k = 0; k < r; ++k) s -= g[r * n + k] * b[k];
    b[r] = s / g[r * n + r];
  }
  for (std::size_t r = n; r-- > 0;) {
    double s = b[r];
    for (std::size_t k = r + 1; k < n; ++k) s -= g[k * n + r] * b[k];
    b[r] = s / g[r * n + r];
  }
}

}  // namespace detail

// One ridge regression of v_j on the signature entries per grid index, solved
// in a column-scaled basis and reported back in the raw word basis.
inline LinearRepModel fit_linear(const PathSet& train, int level, const TrainConfig& cfg,
                                 SigMode mode = SigMode::ItoLeft) {
  cfg.validate();
  const std::size_t D = feature_width(level);
  if (train.count < D && cfg.ridge <= 0.0)
    throw std::invalid_argument(
        "fit_linear: fewer paths than features; set ridge > 0 to regularize");
  const std::size_t J = train.grid.steps;
  std::vector<double> gram((J + 1) * D * D, 0.0);
  std::vector<double> rhs((J + 1) * D, 0.0);
  for (std::size_t m = 0; m < train.count; ++m) {
    auto path = path_from_increments(train.grid.dt(), train.dw_row(m));
    SigStream sig = signature_stream(path, level, mode);
    auto v = train.v_row(m);
    for (std::size_t j = 0; j <= J; ++j) {
      auto x = sig.slice(j);
      double* g = gram.data() + j * D * D;
      double* b = rhs.data() + j * D;
      for (std::size_t r = 0; r < D; ++r) {
        if (x[r] == 0.0) continue;
        for (std::size_t c = 0; c <= r; ++c) g[r * D + c] += x[r] * x[c];
        b[r] += x[r] * v[j];
      }
    }
  }
  LinearRepModel model(level, J, cfg.ridge);
  std::vector<double> gj(D * D), bj(D), scale(D);
  for (std::size_t j = 0; j <= J; ++j) {
    const double* g = gram.data() + j * D * D;
    const double* b = rhs.data() + j * D;
    for (std::size_t r = 0; r < D; ++r) {
      const double rms = std::sqrt(g[r * D + r] / static_cast<double>(train.count));
      scale[r] = rms > 0.0 ? rms : 1.0;
    }
    for (std::size_t r = 0; r < D; ++r)
      for (std::size_t c = 0; c < D; ++c)
        gj[r * D + c] = g[(r >= c ? r * D + c : c * D + r)] / (scale[r] * scale[c]);
    for (std::size_t r = 0; r < D; ++r) bj[r] = b[r] / scale[r];
    detail::ridge_cholesky_solve(gj, bj, D, cfg.ridge);
    auto out = model.coeffs(j);
    for (std::size_t r = 0; r < D; ++r) out[r] = bj[r] / scale[r];
  }
  return model;
}

// Feedforward regressor on (t_j, signature entries) stacked on a per-time
// linear stage: prediction = <base_j, sig_j> + mlp(t_j, sig_j). With the
// network head zeroed the model coincides with the linear representation, so
// the linear hypothesis class is nested exactly; the network learns the
// residual nonlinearity. The mlp input additionally carries a direct linear
// bypass from the standardized features.
class NonlinearRepModel {
public:
  NonlinearRepModel() = default;
  NonlinearRepModel(int level, std::vector<int> hidden, std::string activation,
                    std::size_t steps = 0)
      : level_(level), steps_(steps), hidden_(std::move(hidden)),
        activation_(std::move(activation)), input_dim_(1 + feature_width(level)) {
    params_.assign(param_count(), 0.0);
    mu_.assign(input_dim_, 0.0);
    sd_.assign(input_dim_, 1.0);
    base_.assign((steps + 1) * feature_width(level), 0.0);
  }

  int level() const { return level_; }
  std::size_t steps() const { return steps_; }
  std::size_t input_dim() const { return input_dim_; }
  const std::vector<int>& hidden() const { return hidden_; }
  const std::string& activation() const { return activation_; }
  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }
  std::vector<double>& feature_mean() { return mu_; }
  std::vector<double>& feature_sd() { return sd_; }
  const std::vector<double>& feature_mean() const { return mu_; }
  const std::vector<double>& feature_sd() const { return sd_; }
  std::vector<double>& base() { return base_; }
  const std::vector<double>& base() const { return base_; }

  std::span<const double> base_coeffs(std::size_t j) const {
    return {base_.data() + j * feature_width(level_), feature_width(level_)};
  }

  std::size_t param_count() const {
    std::size_t n = 0;
    std::size_t in = input_dim_;
    for (int h : hidden_) {
      n += static_cast<std::size_t>(h) * in + static_cast<std::size_t>(h);
      in = static_cast<std::size_t>(h);
    }
    n += in + 1;         // output layer
    n += input_dim_;     // linear bypass
    return n;
  }

  void standardize(std::span<const double> raw, std::span<double> out) const {
    for (std::size_t c = 0; c < input_dim_; ++c) out[c] = (raw[c] - mu_[c]) / sd_[c];
  }

  // forward pass on an already standardized row
  double forward_standardized(std::span<const double> x) const {
    std::vector<double> cur(x.begin(), x.end()), nxt;
    const double* p = params_.data();
    for (int h : hidden_) {
      nxt.assign(static_cast<std::size_t>(h), 0.0);
      for (int r = 0; r < h; ++r) {
        double z = 0.0;
        for (std::size_t c = 0; c < cur.size(); ++c) z += p[r * cur.size() + c] * cur[c];
        nxt[static_cast<std::size_t>(r)] = z;
      }
      p += static_cast<std::size_t>(h) * cur.size();
      for (int r = 0; r < h; ++r) nxt[static_cast<std::size_t>(r)] += p[r];
      p += h;
      for (double& z : nxt) z = activation_ == "tanh" ? std::tanh(z) : std::max(z, 0.0);
      cur.swap(nxt);
    }
    double y = 0.0;
    for (std::size_t c = 0; c < cur.size(); ++c) y += p[c] * cur[c];
    p += cur.size();
    y += *p++;
    for (std::size_t c = 0; c < input_dim_; ++c) y += p[c] * x[c];
    return y;
  }

  double evaluate(std::span<const double> raw) const {
    std::vector<double> x(input_dim_);
    standardize(raw, x);
    return forward_standardized(x);
  }

  void save(std::ostream& os) const {
    os << "sigvol-model v1\nkind nonlinear\nlevel " << level_ << "\nsteps " << steps_
       << "\nactivation " << activation_ << "\nhidden";
    for (int h : hidden_) os << ' ' << h;
    os << '\n';
    char buf[40];
    auto dump = [&](const std::vector<double>& v, const char* name) {
      os << name;
      for (double x : v) {
        std::snprintf(buf, sizeof buf, "%.17g", x);
        os << ' ' << buf;
      }
      os << '\n';
    };
    dump(mu_, "mu");
    dump(sd_, "sd");
    dump(params_, "params");
    dump(base_, "base");
  }

private:
  friend NonlinearRepModel load_nonlinear_model(std::istream& is);
  int level_ = 0;
  std::size_t steps_ = 0;
  std::vector<int> hidden_;
  std::string activation_ = "tanh";
  std::size_t input_dim_ = 0;
  std::vector<double> params_;
  std::vector<double> mu_, sd_;
  std::vector<double> base_;  // (steps+1) x feature_width, the linear stage
};

// rows = paths x selected grid indices, columns = (t_j, signature entries)
struct FeatureDataset {
  std::size_t dim = 0;
  std::vector<double> x;  // rows x dim
  std::vector<double> y;
  std::vector<std::size_t> row_path;  // owning path of each row
  std::vector<std::size_t> row_time;  // grid index of each row

  std::size_t rows() const { return y.size(); }
};

inline FeatureDataset build_features(const PathSet& ps, std::size_t path_begin,
                                     std::size_t path_end, int level, int time_stride,
                                     SigMode mode) {
  FeatureDataset ds;
  ds.dim = 1 + feature_width(level);
  const std::size_t J = ps.grid.steps;
  for (std::size_t m = path_begin; m < path_end; ++m) {
    auto path = path_from_increments(ps.grid.dt(), ps.dw_row(m));
    SigStream sig = signature_stream(path, level, mode);
    auto v = ps.v_row(m);
    for (std::size_t j = 0; j <= J; j += static_cast<std::size_t>(time_stride)) {
      ds.x.push_back(ps.grid.time(j));
      auto s = sig.slice(j);
      ds.x.insert(ds.x.end(), s.begin(), s.end());
      ds.y.push_back(v[j]);
      ds.row_path.push_back(m);
      ds.row_time.push_back(j);
    }
  }
  return ds;
}

namespace detail {

struct MlpGradWork {
  std::vector<double> acts;   // standardized input + post-activation layers
  std::vector<double> delta;  // backpropagated errors per layer
};

// mean squared error over the batch plus its gradient; `rows` indexes into ds
inline double mlp_loss_and_grad(const NonlinearRepModel& model, std::span<const double> params,
                                const FeatureDataset& ds, std::span<const std::size_t> rows,
                                const std::vector<double>& xstd, std::span<double> grad) {
  const std::size_t in = model.input_dim();
  const auto& hidden = model.hidden();
  const bool use_tanh = model.activation() == "tanh";
  std::fill(grad.begin(), grad.end(), 0.0);
  double loss = 0.0;

  std::vector<std::span<const double>> w(hidden.size() + 1);
  std::vector<std::span<const double>> b(hidden.size() + 1);
  {
    const double* p = params.data();
    std::size_t width = in;
    for (std::size_t l = 0; l < hidden.size(); ++l) {
      const std::size_t h = static_cast<std::size_t>(hidden[l]);
      w[l] = {p, h * width};
      p += h * width;
      b[l] = {p, h};
      p += h;
      width = h;
    }
    w[hidden.size()] = {p, width};
    p += width;
    b[hidden.size()] = {p, 1};
  }
  const double* skip = params.data() + (params.size() - in);
  double* gskip = grad.data() + (grad.size() - in);

  std::vector<std::vector<double>> a(hidden.size() + 1), z(hidden.size());
  std::vector<std::vector<double>> d(hidden.size() + 1);
  const double inv_n = 1.0 / static_cast<double>(rows.size());

  for (std::size_t r : rows) {
    const double* x = xstd.data() + r * in;
    a[0].assign(x, x + in);
    std::size_t width = in;
    for (std::size_t l = 0; l < hidden.size(); ++l) {
      const std::size_t h = static_cast<std::size_t>(hidden[l]);
      z[l].assign(h, 0.0);
      for (std::size_t rr = 0; rr < h; ++rr) {
        double acc = b[l][rr];
        const double* wr = w[l].data() + rr * width;
        for (std::size_t c = 0; c < width; ++c) acc += wr[c] * a[l][c];
        z[l][rr] = acc;
      }
      a[l + 1].resize(h);
      for (std::size_t rr = 0; rr < h; ++rr)
        a[l + 1][rr] = use_tanh ? std::tanh(z[l][rr]) : std::max(z[l][rr], 0.0);
      width = h;
    }
    double y = b[hidden.size()][0];
    for (std::size_t c = 0; c < width; ++c) y += w[hidden.size()][c] * a[hidden.size()][c];
    for (std::size_t c = 0; c < in; ++c) y += skip[c] * x[c];

    const double err = y - ds.y[r];
    loss += err * err * inv_n;
    const double dy = 2.0 * err * inv_n;

    // output layer and bypass
    double* gp = grad.data();
    {
      std::size_t off = 0;
      std::size_t wid = in;
      for (std::size_t l = 0; l < hidden.size(); ++l) {
        off += static_cast<std::size_t>(hidden[l]) * wid + static_cast<std::size_t>(hidden[l]);
        wid = static_cast<std::size_t>(hidden[l]);
      }
      double* gw_out = gp + off;
      double* gb_out = gw_out + wid;
      for (std::size_t c = 0; c < wid; ++c) gw_out[c] += dy * a[hidden.size()][c];
      gb_out[0] += dy;
      for (std::size_t c = 0; c < in; ++c) gskip[c] += dy * x[c];
    }
    // hidden layers, back to front
    d[hidden.size()].assign(1, dy);
    std::vector<double> upstream(static_cast<std::size_t>(hidden.back()));
    for (std::size_t c = 0; c < upstream.size(); ++c) upstream[c] = w[hidden.size()][c] * dy;
    for (std::size_t l = hidden.size(); l-- > 0;) {
      const std::size_t h = static_cast<std::size_t>(hidden[l]);
      const std::size_t wid = l == 0 ? in : static_cast<std::size_t>(hidden[l - 1]);
      d[l].assign(h, 0.0);
      for (std::size_t rr = 0; rr < h; ++rr) {
        const double prime = use_tanh ? 1.0 - a[l + 1][rr] * a[l + 1][rr]
                                      : (z[l][rr] > 0.0 ? 1.0 : 0.0);
        d[l][rr] = upstream[rr] * prime;
      }
      std::size_t off = 0;
      std::size_t ww = in;
      for (std::size_t k = 0; k < l; ++k) {
        off += static_cast<std::size_t>(hidden[k]) * ww + static_cast<std::size_t>(hidden[k]);
        ww = static_cast<std::size_t>(hidden[k]);
      }
      double* gw = gp + off;
      double* gb = gw + h * wid;
      for (std::size_t rr = 0; rr < h; ++rr) {
        const double dd = d[l][rr];
        if (dd == 0.0) continue;
        double* gwr = gw + rr * wid;
        const double* al = a[l].data();
        for (std::size_t c = 0; c < wid; ++c) gwr[c] += dd * al[c];
        gb[rr] += dd;
      }
      if (l > 0) {
        upstream.assign(wid, 0.0);
        for (std::size_t rr = 0; rr < h; ++rr) {
          const double dd = d[l][rr];
          if (dd == 0.0) continue;
          const double* wr = w[l].data() + rr * wid;
          for (std::size_t c = 0; c < wid; ++c) upstream[c] += wr[c] * dd;
        }
      }
    }
  }
  return loss;
}

}  // namespace detail

struct TrainTrace {
  std::vector<double> train_loss;  // per epoch
  std::vector<double> val_loss;
  int lr_restarts = 0;
};

inline NonlinearRepModel train_nonlinear(const PathSet& train, int level, const TrainConfig& cfg,
                                         SigMode mode = SigMode::ItoLeft,
                                         TrainTrace* trace = nullptr) {
  cfg.validate();
  if (train.count < 4) throw std::invalid_argument("train_nonlinear: needs at least 4 paths");

  // linear stage first; the network then learns what the per-time ridge
  // cannot express
  LinearRepModel base = fit_linear(train, level, cfg, mode);

  FeatureDataset ds = build_features(train, 0, train.count, level, cfg.time_stride, mode);
  const std::size_t in = 1 + feature_width(level);
  const std::size_t D = feature_width(level);
  for (std::size_t r = 0; r < ds.rows(); ++r) {
    auto c = base.coeffs(ds.row_time[r]);
    const double* sig_vals = ds.x.data() + r * in + 1;
    double pred = 0.0;
    for (std::size_t k = 0; k < D; ++k) pred += c[k] * sig_vals[k];
    ds.y[r] -= pred;  // residual target
  }

  // split whole paths, never time indices
  const std::size_t val_paths =
      std::max<std::size_t>(1, static_cast<std::size_t>(cfg.validation_fraction *
                                                        static_cast<double>(train.count)));
  const std::size_t first_val_path = train.count - val_paths;
  std::vector<std::size_t> train_rows, val_rows;
  for (std::size_t r = 0; r < ds.rows(); ++r)
    (ds.row_path[r] >= first_val_path ? val_rows : train_rows).push_back(r);

  // standardization from the training rows only
  std::vector<double> mu(in, 0.0), sd(in, 0.0);
  for (std::size_t r : train_rows)
    for (std::size_t c = 0; c < in; ++c) mu[c] += ds.x[r * in + c];
  for (double& m : mu) m /= static_cast<double>(train_rows.size());
  for (std::size_t r : train_rows)
    for (std::size_t c = 0; c < in; ++c) {
      const double dx = ds.x[r * in + c] - mu[c];
      sd[c] += dx * dx;
    }
  for (double& s : sd) {
    s = std::sqrt(s / static_cast<double>(train_rows.size()));
    if (!(s > 1e-12)) s = 1.0;
  }
  std::vector<double> xstd(ds.x.size());
  for (std::size_t r = 0; r < ds.rows(); ++r)
    for (std::size_t c = 0; c < in; ++c) xstd[r * in + c] = (ds.x[r * in + c] - mu[c]) / sd[c];

  NonlinearRepModel best_model(level, cfg.hidden, cfg.activation, train.grid.steps);
  double best_val = std::numeric_limits<double>::infinity();

  for (int restart = 0; restart < cfg.restarts; ++restart) {
    NonlinearRepModel model(level, cfg.hidden, cfg.activation, train.grid.steps);
    model.feature_mean() = mu;
    model.feature_sd() = sd;
    for (std::size_t j = 0; j <= train.grid.steps; ++j) {
      auto src = base.coeffs(j);
      std::copy(src.begin(), src.end(), model.base().begin() + j * D);
    }
    auto& params = model.params();
    {
      CounterRng init_rng(cfg.seed + static_cast<std::uint64_t>(restart), 9001);
      double* p = params.data();
      std::size_t width = in;
      for (int h : cfg.hidden) {
        const double bound = std::sqrt(6.0 / static_cast<double>(width + static_cast<std::size_t>(h)));
        for (int k = 0; k < h * static_cast<int>(width); ++k)
          *p++ = bound * (2.0 * init_rng.uniform() - 1.0);
        for (int k = 0; k < h; ++k) *p++ = 0.0;
        width = static_cast<std::size_t>(h);
      }
      // zeroed head and bypass: the starting model is the linear stage itself
      for (std::size_t k = 0; k < width; ++k) *p++ = 0.0;
      *p++ = 0.0;
      for (std::size_t k = 0; k < in; ++k) *p++ = 0.0;
    }

    std::vector<double> grad(params.size()), m1(params.size(), 0.0), m2(params.size(), 0.0);
    double lr = cfg.learning_rate;
    int lr_restarts = 0;
    std::size_t adam_t = 0;

    std::vector<std::size_t> order = train_rows;
    auto val_loss_now = [&]() {
      double acc = 0.0;
      for (std::size_t r : val_rows) {
        std::span<const double> x{xstd.data() + r * in, in};
        const double err = model.forward_standardized(x) - ds.y[r];
        acc += err * err;
      }
      return acc / static_cast<double>(val_rows.size());
    };
    // the zero-head start equals the plain linear stage; keep it as the
    // fallback checkpoint so training can only improve on it
    std::vector<double> checkpoint = params;
    double checkpoint_val = val_loss_now();

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      CounterRng shuffle_rng(cfg.seed + static_cast<std::uint64_t>(restart), 7000 + epoch);
      for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[shuffle_rng.next_u64() % i]);
      const double lr_now = lr * std::pow(cfg.lr_decay, epoch / cfg.lr_step);

      double epoch_loss = 0.0;
      std::size_t batches = 0;
      bool blew_up = false;
      for (std::size_t at = 0; at < order.size(); at += static_cast<std::size_t>(cfg.batch)) {
        const std::size_t hi = std::min(order.size(), at + static_cast<std::size_t>(cfg.batch));
        std::span<const std::size_t> rows{order.data() + at, hi - at};
        const double loss = detail::mlp_loss_and_grad(model, params, ds, rows, xstd, grad);
        if (!std::isfinite(loss)) {
          blew_up = true;
          break;
        }
        epoch_loss += loss;
        ++batches;
        ++adam_t;
        const double c1 = 1.0 - std::pow(0.9, static_cast<double>(adam_t));
        const double c2 = 1.0 - std::pow(0.999, static_cast<double>(adam_t));
        for (std::size_t k = 0; k < params.size(); ++k) {
          m1[k] = 0.9 * m1[k] + 0.1 * grad[k];
          m2[k] = 0.999 * m2[k] + 0.001 * grad[k] * grad[k];
          params[k] -= lr_now * (m1[k] / c1) / (std::sqrt(m2[k] / c2) + 1e-8);
        }
      }
      for (double p : params)
        if (!std::isfinite(p)) blew_up = true;
      if (blew_up) {
        if (++lr_restarts > 3)
          throw NumericalError("train_nonlinear: loss kept diverging after 3 restarts");
        params = checkpoint;
        std::fill(m1.begin(), m1.end(), 0.0);
        std::fill(m2.begin(), m2.end(), 0.0);
        adam_t = 0;
        lr *= 0.5;
        --epoch;
        continue;
      }
      const double vl = val_loss_now();
      if (trace && restart == 0) {
        trace->train_loss.push_back(epoch_loss / static_cast<double>(std::max<std::size_t>(batches, 1)));
        trace->val_loss.push_back(vl);
      }
      if (vl < checkpoint_val * (1.0 - cfg.min_improvement)) {
        checkpoint_val = vl;
        checkpoint = params;
      }
    }
    if (trace && restart == 0) trace->lr_restarts = lr_restarts;
    params = checkpoint;
    if (checkpoint_val < best_val) {
      best_val = checkpoint_val;
      best_model = model;
    }
  }
  return best_model;
}

inline RepStream predict(const LinearRepModel& model, const SigStream& sig,
                         const TimeExtendedPath& path) {
  if (model.level() != sig.level_cap())
    throw std::invalid_argument("predict: model level does not match the signature");
  if (model.steps() != sig.steps())
    throw std::invalid_argument("predict: model grid does not match the signature");
  const std::size_t J = sig.steps();
  RepStream r;
  r.level = model.level();
  r.tag = "learned-linear";
  r.v_tilde.resize(J + 1);
  r.i_tilde.assign(J + 1, 0.0);
  for (std::size_t j = 0; j <= J; ++j) {
    auto c = model.coeffs(j);
    auto s = sig.slice(j);
    double acc = 0.0;
    for (std::size_t k = 0; k < c.size(); ++k) acc += c[k] * s[k];
    r.v_tilde[j] = acc;
    if (j < J) r.i_tilde[j + 1] = r.i_tilde[j] + acc * path.dw(j);
  }
  return r;
}

inline RepStream predict(const NonlinearRepModel& model, const SigStream& sig,
                         const TimeExtendedPath& path) {
  if (model.level() != sig.level_cap())
    throw std::invalid_argument("predict: model level does not match the signature");
  if (model.steps() != sig.steps())
    throw std::invalid_argument("predict: model grid does not match the signature");
  const std::size_t J = sig.steps();
  RepStream r;
  r.level = model.level();
  r.tag = "learned-nonlinear";
  r.v_tilde.resize(J + 1);
  r.i_tilde.assign(J + 1, 0.0);
  std::vector<double> raw(model.input_dim());
  for (std::size_t j = 0; j <= J; ++j) {
    raw[0] = path.times[j];
    auto s = sig.slice(j);
    std::copy(s.begin(), s.end(), raw.begin() + 1);
    auto c = model.base_coeffs(j);
    double lin = 0.0;
    for (std::size_t k = 0; k < c.size(); ++k) lin += c[k] * s[k];
    r.v_tilde[j] = lin + model.evaluate(raw);
    if (j < J) r.i_tilde[j + 1] = r.i_tilde[j] + r.v_tilde[j] * path.dw(j);
  }
  return r;
}

namespace detail {

inline std::vector<double> parse_doubles_line(std::istream& is, const std::string& expect_key) {
  std::string line;
  if (!std::getline(is, line)) throw ConfigError("model file: missing '" + expect_key + "' line");
  std::istringstream ss(line);
  std::string key;
  ss >> key;
  if (key != expect_key) throw ConfigError("model file: expected '" + expect_key + "'");
  std::vector<double> out;
  double x;
  while (ss >> x) out.push_back(x);
  return out;
}

}  // namespace detail

inline LinearRepModel load_linear_model(std::istream& is) {
  std::string line;
  std::getline(is, line);  // header consumed by the caller
  int level = 0;
  std::size_t steps = 0;
  double ridge = 0.0;
  std::string key;
  is >> key >> level;
  if (key != "level") throw ConfigError("model file: expected 'level'");
  is >> key >> steps;
  if (key != "steps") throw ConfigError("model file: expected 'steps'");
  is >> key >> ridge;
  if (key != "ridge") throw ConfigError("model file: expected 'ridge'");
  LinearRepModel model(level, steps, ridge);
  for (std::size_t j = 0; j <= steps; ++j) {
    auto c = model.coeffs(j);
    for (auto& x : c)
      if (!(is >> x)) throw ConfigError("model file: truncated coefficient table");
  }
  return model;
}

inline NonlinearRepModel load_nonlinear_model(std::istream& is) {
  std::string line;
  std::getline(is, line);  // kind line
  std::string key;
  int level = 0;
  std::size_t steps = 0;
  is >> key >> level;
  if (key != "level") throw ConfigError("model file: expected 'level'");
  is >> key >> steps;
  if (key != "steps") throw ConfigError("model file: expected 'steps'");
  std::string activation;
  is >> key >> activation;
  if (key != "activation") throw ConfigError("model file: expected 'activation'");
  std::getline(is, line);  // finish activation line
  if (!std::getline(is, line) || line.rfind("hidden", 0) != 0)
    throw ConfigError("model file: expected 'hidden'");
  std::vector<int> hidden;
  {
    std::istringstream ss(line.substr(6));
    int h;
    while (ss >> h) hidden.push_back(h);
  }
  NonlinearRepModel model(level, hidden, activation, steps);
  auto mu = detail::parse_doubles_line(is, "mu");
  auto sd = detail::parse_doubles_line(is, "sd");
  auto params = detail::parse_doubles_line(is, "params");
  auto base = detail::parse_doubles_line(is, "base");
  if (mu.size() != model.input_dim() || sd.size() != model.input_dim() ||
      params.size() != model.param_count() || base.size() != model.base().size())
    throw ConfigError("model file: size mismatch");
  model.feature_mean() = mu;
  model.feature_sd() = sd;
  model.params() = params;
  model.base() = base;
  return model;
}

struct LoadedModel {
  std::string kind;  // "linear" | "nonlinear"
  LinearRepModel linear;
  NonlinearRepModel nonlinear;
};

inline LoadedModel load_model_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("model file not found: " + path);
  std::string header, kind_line, kind;
  std::getline(is, header);
  if (header != "sigvol-model v1") throw ConfigError("model file: unknown header in " + path);
  auto pos = is.tellg();
  std::getline(is, kind_line);
  std::istringstream ss(kind_line);
  std::string key;
  ss >> key >> kind;
  if (key != "kind") throw ConfigError("model file: expected 'kind' in " + path);
  is.seekg(pos);
  LoadedModel out;
  out.kind = kind;
  if (kind == "linear")
    out.linear = load_linear_model(is);
  else if (kind == "nonlinear")
    out.nonlinear = load_nonlinear_model(is);
  else
    throw ConfigError("model file: unknown kind '" + kind + "'");
  return out;
}

inline void save_model_file(const std::string& path, const LinearRepModel& m) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write model file: " + path);
  m.save(os);
}

inline void save_model_file(const std::string& path, const NonlinearRepModel& m) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write model file: " + path);
  m.save(os);
}

}  // namespace sigvol
