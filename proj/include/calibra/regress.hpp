#pragma once

// Variance regression: Gaussian predictions scored with DSS, the Friedman-1
// generator, a one-hidden-layer mean/variance network, Platt scaling of the
// predicted variance and the kernel calibration error for Gaussian predictions.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <istream>
#include <numbers>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "calibra/core.hpp"
#include "calibra/error.hpp"
#include "calibra/estimators.hpp"
#include "calibra/numeric.hpp"
#include "calibra/random.hpp"
#include "calibra/recal.hpp"

namespace calibra {

inline constexpr double kVarianceFloor = 1e-8;

struct GaussianPrediction {
  double mean = 0.0;
  double variance = 1.0;
};

inline GaussianPrediction make_gaussian(double mean, double variance) {
  require(std::isfinite(mean) && std::isfinite(variance), ErrorKind::validation, "non-finite Gaussian prediction");
  require(variance >= kVarianceFloor, ErrorKind::validation, "variance below floor");
  return {mean, variance};
}

/// Dawid-Sebastiani score (mu - y)^2 / var + log var.
inline double dss(double mean, double variance, double y) {
  const double r = mean - y;
  return r * r / variance + std::log(variance);
}

struct DssValue {
  double value = 0.0;
  bool clamped = false;  // variance was raised to the floor
};

inline DssValue dss(const GaussianPrediction& p, double y) {
  const bool clamped = !(p.variance >= kVarianceFloor);
  return {dss(p.mean, clamped ? kVarianceFloor : p.variance, y), clamped};
}

inline double mean_dss(std::span<const GaussianPrediction> preds, std::span<const double> y) {
  require(!preds.empty() && preds.size() == y.size(), ErrorKind::validation, "predictions and targets must match and be nonempty");
  std::vector<double> terms(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) terms[i] = dss(preds[i], y[i]).value;
  return mean(terms);
}

// ---------------------------------------------------------------------------
// Data
// ---------------------------------------------------------------------------

/// N x d features (row-major) and N targets.
class RegressionDataset {
 public:
  RegressionDataset() = default;
  RegressionDataset(std::size_t dims, std::vector<double> features, std::vector<double> targets)
      : dims_(dims), x_(std::move(features)), y_(std::move(targets)) {
    require(dims_ >= 1, ErrorKind::validation, "regression data needs at least one feature");
    require(x_.size() == y_.size() * dims_, ErrorKind::validation, "feature matrix does not match target count");
    for (double v : x_) require(std::isfinite(v), ErrorKind::validation, "non-finite feature");
    for (double v : y_) require(std::isfinite(v), ErrorKind::validation, "non-finite target");
  }

  std::size_t size() const noexcept { return y_.size(); }
  std::size_t dims() const noexcept { return dims_; }
  std::span<const double> features(std::size_t i) const { return std::span<const double>(x_).subspan(i * dims_, dims_); }
  double target(std::size_t i) const { return y_[i]; }
  std::span<const double> targets() const noexcept { return y_; }

 private:
  std::size_t dims_ = 0;
  std::vector<double> x_;
  std::vector<double> y_;
};

struct Friedman1Options {
  bool heteroscedastic = true;  // noise variance 0.5 + x6 instead of 1
  bool noise = true;
  bool noise_is_std = false;    // read 0.5 + x6 as a standard deviation instead
  std::size_t dims = 10;        // extra uniform features beyond the tenth are inert
};

inline double friedman1_mean(std::span<const double> x) {
  return 10.0 * std::sin(std::numbers::pi * x[0] * x[1]) + 20.0 * (x[2] - 0.5) * (x[2] - 0.5) + 10.0 * x[3] + 5.0 * x[4];
}

inline double friedman1_noise_variance(std::span<const double> x, const Friedman1Options& opt) {
  if (!opt.heteroscedastic) return 1.0;
  const double s = 0.5 + x[5];
  return opt.noise_is_std ? s * s : s;
}

inline RegressionDataset friedman1(std::size_t N, std::uint64_t seed, Friedman1Options opt = {}) {
  require(N >= 1, ErrorKind::config, "sample size must be at least 1");
  require(opt.dims >= 10, ErrorKind::config, "Friedman-1 needs at least 10 features");
  Rng rng(seed);
  std::normal_distribution<double> normal;
  std::vector<double> x(N * opt.dims), y(N);
  for (std::size_t i = 0; i < N; ++i) {
    auto row = std::span<double>(x).subspan(i * opt.dims, opt.dims);
    for (double& v : row) v = uniform01(rng);
    y[i] = friedman1_mean(row);
    if (opt.noise) y[i] += std::sqrt(friedman1_noise_variance(row, opt)) * normal(rng);
  }
  return RegressionDataset(opt.dims, std::move(x), std::move(y));
}

// ---------------------------------------------------------------------------
// Mean/variance network
// ---------------------------------------------------------------------------

struct MdnConfig {
  std::size_t hidden = 50;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::size_t iterations = 2000;
  std::size_t eval_every = 50;
  std::uint64_t seed = 0;
};

inline void validate(const MdnConfig& c) {
  require(c.hidden >= 1, ErrorKind::config, "hidden units must be at least 1");
  require(std::isfinite(c.learning_rate) && c.learning_rate > 0.0, ErrorKind::config, "learning rate must be positive");
  require(c.beta1 >= 0.0 && c.beta1 < 1.0 && c.beta2 >= 0.0 && c.beta2 < 1.0, ErrorKind::config,
          "Adam decay rates must lie in [0,1)");
  require(c.eval_every >= 1, ErrorKind::config, "evaluation interval must be at least 1");
}

/// x -> tanh(W1 x + b1) -> (mu, log var), with targets standardized internally.
/// Parameters are stored flat as [W1 (H x d), b1 (H), W2 (2 x H), b2 (2)].
class MeanVarianceNetwork {
 public:
  MeanVarianceNetwork(std::size_t dims, std::size_t hidden, std::uint64_t seed) : d_(dims), h_(hidden) {
    require(dims >= 1 && hidden >= 1, ErrorKind::config, "network needs at least one input and one hidden unit");
    params_.resize(parameter_count());
    Rng rng(seed);
    const double in_bound = 1.0 / std::sqrt(static_cast<double>(d_));
    const double out_bound = 1.0 / std::sqrt(static_cast<double>(h_));
    std::uniform_real_distribution<double> in(-in_bound, in_bound), out(-out_bound, out_bound);
    const std::size_t first_layer = h_ * d_ + h_;
    for (std::size_t i = 0; i < params_.size(); ++i) params_[i] = i < first_layer ? in(rng) : out(rng);
  }

  std::size_t dims() const noexcept { return d_; }
  std::size_t hidden() const noexcept { return h_; }
  std::size_t parameter_count() const noexcept { return h_ * d_ + h_ + 2 * h_ + 2; }
  std::span<const double> parameters() const noexcept { return params_; }
  std::span<double> parameters() noexcept { return params_; }

  /// Fixes the target standardization; called once by the trainer.
  void set_target_scaling(double offset, double scale) {
    require(std::isfinite(offset) && std::isfinite(scale) && scale > 0.0, ErrorKind::numerical, "bad target scaling");
    y_offset_ = offset;
    y_scale_ = scale;
  }
  double target_offset() const noexcept { return y_offset_; }
  double target_scale() const noexcept { return y_scale_; }

  GaussianPrediction predict(std::span<const double> x) const {
    std::vector<double> hidden(h_);
    const auto [mu, s] = forward(x, hidden);
    const double var = std::max(y_scale_ * y_scale_ * std::exp(s), kVarianceFloor);
    return {y_offset_ + y_scale_ * mu, var};
  }

  std::vector<GaussianPrediction> predict(const RegressionDataset& data) const {
    std::vector<GaussianPrediction> out(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) out[i] = predict(data.features(i));
    return out;
  }

  /// Mean DSS on standardized targets and, if `grad` is given, its gradient.
  double loss_and_gradient(const RegressionDataset& data, std::vector<double>* grad) const {
    require(data.dims() == d_, ErrorKind::validation, "feature dimension does not match the network");
    const std::size_t N = data.size();
    const double inv_n = 1.0 / static_cast<double>(N);
    const double floor_std = kVarianceFloor / (y_scale_ * y_scale_);
    if (grad) grad->assign(params_.size(), 0.0);
    std::vector<double> hidden(h_);
    std::vector<double> losses(N);
    const std::size_t b1 = h_ * d_, w2 = b1 + h_, b2 = w2 + 2 * h_;
    for (std::size_t i = 0; i < N; ++i) {
      const auto x = data.features(i);
      const auto [mu, s] = forward(x, hidden);
      const double y = (data.target(i) - y_offset_) / y_scale_;
      const double r = mu - y;
      const bool floored = std::exp(s) < floor_std;
      const double var = floored ? floor_std : std::exp(s);
      losses[i] = r * r / var + std::log(var);
      if (!grad) continue;
      auto& g = *grad;
      const double d_mu = 2.0 * r / var * inv_n;
      const double d_s = floored ? 0.0 : (1.0 - r * r / var) * inv_n;
      g[b2] += d_mu;
      g[b2 + 1] += d_s;
      for (std::size_t j = 0; j < h_; ++j) {
        g[w2 + j] += d_mu * hidden[j];
        g[w2 + h_ + j] += d_s * hidden[j];
        const double d_hidden = (d_mu * params_[w2 + j] + d_s * params_[w2 + h_ + j]) * (1.0 - hidden[j] * hidden[j]);
        g[b1 + j] += d_hidden;
        for (std::size_t k = 0; k < d_; ++k) g[j * d_ + k] += d_hidden * x[k];
      }
    }
    return mean(losses);
  }

 private:
  std::pair<double, double> forward(std::span<const double> x, std::vector<double>& hidden) const {
    const std::size_t b1 = h_ * d_, w2 = b1 + h_, b2 = w2 + 2 * h_;
    double mu = params_[b2], s = params_[b2 + 1];
    for (std::size_t j = 0; j < h_; ++j) {
      double a = params_[b1 + j];
      for (std::size_t k = 0; k < d_; ++k) a += params_[j * d_ + k] * x[k];
      hidden[j] = std::tanh(a);
      mu += params_[w2 + j] * hidden[j];
      s += params_[w2 + h_ + j] * hidden[j];
    }
    return {mu, s};
  }

  std::size_t d_;
  std::size_t h_;
  std::vector<double> params_;
  double y_offset_ = 0.0;
  double y_scale_ = 1.0;
};

/// Called at iteration 0, every `eval_every` iterations and after the last one.
using TrainingObserver = std::function<void(std::size_t iteration, const MeanVarianceNetwork&)>;

/// Full-batch Adam on the mean DSS.
inline MeanVarianceNetwork mdn_train(const RegressionDataset& train, const MdnConfig& cfg,
                                     const TrainingObserver& observer = {}) {
  validate(cfg);
  require(train.size() >= 2, ErrorKind::validation, "training needs at least 2 rows");
  MeanVarianceNetwork net(train.dims(), cfg.hidden, cfg.seed);
  const auto stats = mean_and_se(train.targets());
  net.set_target_scaling(stats.mean, stats.sd > 0.0 ? stats.sd : 1.0);

  auto params = net.parameters();
  std::vector<double> m(params.size(), 0.0), v(params.size(), 0.0), grad;
  double b1_power = 1.0, b2_power = 1.0;
  if (observer) observer(0, net);
  for (std::size_t it = 1; it <= cfg.iterations; ++it) {
    const double loss = net.loss_and_gradient(train, &grad);
    if (!std::isfinite(loss)) fail(ErrorKind::numerical, "training loss is not finite at iteration " + std::to_string(it));
    b1_power *= cfg.beta1;
    b2_power *= cfg.beta2;
    for (std::size_t k = 0; k < params.size(); ++k) {
      m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * grad[k];
      v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * grad[k] * grad[k];
      const double m_hat = m[k] / (1.0 - b1_power);
      const double v_hat = v[k] / (1.0 - b2_power);
      params[k] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.adam_epsilon);
    }
    if (observer && (it % cfg.eval_every == 0 || it == cfg.iterations)) observer(it, net);
  }
  return net;
}

// ---------------------------------------------------------------------------
// Platt scaling of the variance
// ---------------------------------------------------------------------------

inline double platt_variance(const PlattVarianceMap& m, double variance, bool* clamped = nullptr) {
  const double v = m.w * variance + m.b;
  const bool low = !(v >= kVarianceFloor);
  if (clamped && low) *clamped = true;
  return low ? kVarianceFloor : v;
}

inline std::vector<GaussianPrediction> apply_platt(const PlattVarianceMap& m, std::span<const GaussianPrediction> preds,
                                             bool* clamped = nullptr) {
  std::vector<GaussianPrediction> out(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) out[i] = {preds[i].mean, platt_variance(m, preds[i].variance, clamped)};
  return out;
}

struct PlattOptions {
  std::size_t max_steps = 2000;
  double gradient_tolerance = 1e-8;
};

/// (w, b) minimizing the mean DSS of (mu, max(w var + b, floor)) by gradient descent
/// with backtracking, started at (1, 0). b is scaled by the mean variance so both
/// coordinates are of order one. With identical variances only b moves.
inline PlattVarianceMap fit_platt_variance(std::span<const GaussianPrediction> preds, std::span<const double> y,
                                           PlattOptions opt = {}) {
  require(preds.size() >= 2 && preds.size() == y.size(), ErrorKind::validation,
          "Platt fitting needs at least 2 matching predictions and targets");
  const std::size_t N = preds.size();
  std::vector<double> vars(N);
  for (std::size_t i = 0; i < N; ++i) vars[i] = preds[i].variance;
  const double scale = mean(vars);
  require(std::isfinite(scale) && scale > 0.0, ErrorKind::numerical, "predicted variances must be positive");
  const bool constant = std::all_of(vars.begin(), vars.end(), [&](double v) { return v == vars.front(); });

  // u = (w, b / scale)
  auto objective = [&](double w, double beta, double* gw, double* gb) {
    std::vector<double> loss(N), dw(N), db(N);
    for (std::size_t i = 0; i < N; ++i) {
      const double raw = w * vars[i] + beta * scale;
      const bool low = !(raw >= kVarianceFloor);
      const double v = low ? kVarianceFloor : raw;
      const double r = preds[i].mean - y[i];
      loss[i] = r * r / v + std::log(v);
      const double dv = low ? 0.0 : (1.0 / v - r * r / (v * v));
      dw[i] = dv * vars[i];
      db[i] = dv * scale;
    }
    if (gw) *gw = constant ? 0.0 : mean(dw);
    if (gb) *gb = mean(db);
    return mean(loss);
  };

  double w = 1.0, beta = 0.0, step = 1.0;
  double gw = 0.0, gb = 0.0;
  double f = objective(w, beta, &gw, &gb);
  for (std::size_t it = 0; it < opt.max_steps; ++it) {
    const double g2 = gw * gw + gb * gb;
    if (std::sqrt(g2) < opt.gradient_tolerance) break;
    bool accepted = false;
    for (int tries = 0; tries < 60; ++tries) {
      const double nw = w - step * gw, nb = beta - step * gb;
      const double nf = objective(nw, nb, nullptr, nullptr);
      if (std::isfinite(nf) && nf <= f - 1e-4 * step * g2) {
        w = nw;
        beta = nb;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    f = objective(w, beta, &gw, &gb);
    step = std::min(step * 2.0, 1e6);
  }
  return PlattVarianceMap{w, beta * scale};
}

// ---------------------------------------------------------------------------
// Kernel calibration error and diagnostics
// ---------------------------------------------------------------------------

/// E_{z ~ N(mu, var)} exp(-(a - z)^2 / (2 nu^2)).
inline double gaussian_kernel_expectation(double a, double mu, double var, double nu) {
  const double s = nu * nu + var;
  return nu / std::sqrt(s) * std::exp(-(a - mu) * (a - mu) / (2.0 * s));
}

/// Unbiased U-statistic of the squared kernel calibration error for Gaussian
/// predictions, with a Gaussian kernel on (mu, var) and on targets.
inline double skce_regression(std::span<const GaussianPrediction> preds, std::span<const double> y, double nu_p = 1.0,
                              double nu_y = 1.0, std::size_t threads = 1) {
  require(preds.size() >= 2, ErrorKind::validation, "SKCE needs at least 2 rows");
  require(preds.size() == y.size(), ErrorKind::validation, "predictions and targets differ in length");
  require(nu_p > 0.0 && nu_y > 0.0, ErrorKind::config, "kernel widths must be positive");
  const std::size_t N = preds.size();
  auto h = [&](std::size_t i, std::size_t j) {
    const auto& p = preds[i];
    const auto& q = preds[j];
    const double dm = p.mean - q.mean, dv = p.variance - q.variance;
    const double kp = std::exp(-(dm * dm + dv * dv) / (2.0 * nu_p * nu_p));
    const double kyy = std::exp(-(y[i] - y[j]) * (y[i] - y[j]) / (2.0 * nu_y * nu_y));
    const double a_ij = gaussian_kernel_expectation(y[i], q.mean, q.variance, nu_y);
    const double a_ji = gaussian_kernel_expectation(y[j], p.mean, p.variance, nu_y);
    const double b_ij = gaussian_kernel_expectation(p.mean, q.mean, p.variance + q.variance, nu_y);
    return kp * (kyy - a_ij - a_ji + b_ij);
  };
  const auto rows = detail::parallel_rows(N, threads, [&](std::size_t i) {
    double s = 0.0;
    for (std::size_t j = i + 1; j < N; ++j) s += h(i, j);
    return s;
  });
  const double n = static_cast<double>(N);
  return 2.0 * pairwise_sum(rows) / (n * (n - 1.0));
}

struct RegressionDiagnostics {
  double avg_var = 0.0;
  double mse = 0.0;
  double ratio_mean = 0.0;  // mean of (mu - y)^2 / var
  double ratio_sd = 0.0;
  double dss = 0.0;
};

inline RegressionDiagnostics diagnostics(std::span<const GaussianPrediction> preds, std::span<const double> y) {
  require(!preds.empty() && preds.size() == y.size(), ErrorKind::validation, "predictions and targets must match and be nonempty");
  const std::size_t N = preds.size();
  std::vector<double> var(N), se(N), ratio(N);
  for (std::size_t i = 0; i < N; ++i) {
    var[i] = preds[i].variance;
    se[i] = (preds[i].mean - y[i]) * (preds[i].mean - y[i]);
    ratio[i] = se[i] / preds[i].variance;
  }
  RegressionDiagnostics d;
  d.avg_var = mean(var);
  d.mse = mean(se);
  const auto r = mean_and_se(ratio);
  d.ratio_mean = r.mean;
  d.ratio_sd = r.sd;
  d.dss = mean_dss(preds, y);
  return d;
}

// ---------------------------------------------------------------------------
// Variance-recalibration demo: train, recalibrate on validation every few
// iterations, report the test split at the best validation DSS.
// ---------------------------------------------------------------------------

struct TrainingRecord {
  std::size_t iteration = 0;
  double dss_train = 0.0;
  double dss_val = 0.0;       // uncalibrated
  double dss_val_cal = 0.0;   // after Platt scaling fitted on validation
  double dss_test = 0.0;
  double dss_test_cal = 0.0;
  double avg_var_raw = 0.0;   // test split
  double avg_var_cal = 0.0;
  double test_mse = 0.0;
  double skce = 0.0;          // test split, uncalibrated
  double skce_cal = 0.0;
};

struct VarianceDemoConfig {
  std::size_t train_size = 100;
  std::size_t val_size = 100;
  std::size_t test_size = 100;
  Friedman1Options data;
  MdnConfig network;
  double nu_p = 1.0;
  double nu_y = 1.0;
};

struct VarianceDemoResult {
  std::vector<TrainingRecord> curve;
  TrainingRecord best;  // record with the lowest uncalibrated validation DSS
  PlattVarianceMap best_map;
  RegressionDiagnostics test_raw;
  RegressionDiagnostics test_cal;
  // Raw predictions at the best record, with their targets.
  std::vector<GaussianPrediction> val_predictions, test_predictions;
  std::vector<double> val_targets, test_targets;
};

inline VarianceDemoResult run_variance_demo(const VarianceDemoConfig& cfg, std::uint64_t seed) {
  const auto train = friedman1(cfg.train_size, derive_seed(seed, 1), cfg.data);
  const auto val = friedman1(cfg.val_size, derive_seed(seed, 2), cfg.data);
  const auto test = friedman1(cfg.test_size, derive_seed(seed, 3), cfg.data);
  MdnConfig net_cfg = cfg.network;
  net_cfg.seed = derive_seed(seed, 4);

  VarianceDemoResult out;
  bool have_best = false;
  auto observe = [&](std::size_t it, const MeanVarianceNetwork& net) {
    const auto p_train = net.predict(train);
    const auto p_val = net.predict(val);
    const auto p_test = net.predict(test);
    const auto map = fit_platt_variance(p_val, val.targets());
    const auto c_val = apply_platt(map, p_val);
    const auto c_test = apply_platt(map, p_test);
    TrainingRecord r;
    r.iteration = it;
    r.dss_train = mean_dss(p_train, train.targets());
    r.dss_val = mean_dss(p_val, val.targets());
    r.dss_val_cal = mean_dss(c_val, val.targets());
    const auto raw = diagnostics(p_test, test.targets());
    const auto cal = diagnostics(c_test, test.targets());
    r.dss_test = raw.dss;
    r.dss_test_cal = cal.dss;
    r.avg_var_raw = raw.avg_var;
    r.avg_var_cal = cal.avg_var;
    r.test_mse = raw.mse;
    r.skce = skce_regression(p_test, test.targets(), cfg.nu_p, cfg.nu_y);
    r.skce_cal = skce_regression(c_test, test.targets(), cfg.nu_p, cfg.nu_y);
    out.curve.push_back(r);
    if (!have_best || r.dss_val < out.best.dss_val) {
      have_best = true;
      out.best = r;
      out.best_map = map;
      out.test_raw = raw;
      out.test_cal = cal;
      out.val_predictions = p_val;
      out.test_predictions = p_test;
    }
  };
  mdn_train(train, net_cfg, observe);
  out.val_targets.assign(val.targets().begin(), val.targets().end());
  out.test_targets.assign(test.targets().begin(), test.targets().end());
  return out;
}

// ---------------------------------------------------------------------------
// CSV: `x0..x{d-1},y` datasets and `mu,var,y` prediction dumps
// ---------------------------------------------------------------------------

inline void write_regression_csv(std::ostream& out, const RegressionDataset& data) {
  for (std::size_t k = 0; k < data.dims(); ++k) out << 'x' << k << ',';
  out << "y\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (double v : data.features(i)) out << format_decimal(v) << ',';
    out << format_decimal(data.target(i)) << '\n';
  }
}

inline void write_prediction_csv(std::ostream& out, std::span<const GaussianPrediction> preds, std::span<const double> y) {
  require(preds.size() == y.size(), ErrorKind::validation, "predictions and targets differ in length");
  out << "mu,var,y\n";
  for (std::size_t i = 0; i < preds.size(); ++i) {
    out << format_decimal(preds[i].mean) << ',' << format_decimal(preds[i].variance) << ',' << format_decimal(y[i]) << '\n';
  }
}

struct PredictionDump {
  std::vector<GaussianPrediction> predictions;
  std::vector<double> targets;
};

inline PredictionDump read_prediction_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  require(static_cast<bool>(std::getline(in, line)), ErrorKind::parse, "empty CSV input");
  ++line_no;
  require(detail::trim(line) == "mu,var,y", ErrorKind::parse, "line 1: header must be mu,var,y");
  PredictionDump out;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split_commas(line);
    require(f.size() == 3, ErrorKind::parse, detail::at_line(line_no) + "expected 3 fields");
    double v[3];
    for (int k = 0; k < 3; ++k) {
      require(detail::parse_field(f[k], v[k]) && std::isfinite(v[k]), ErrorKind::parse,
              detail::at_line(line_no) + "bad number '" + std::string(f[k]) + "'");
    }
    require(v[1] >= kVarianceFloor, ErrorKind::validation, detail::at_line(line_no) + "variance below floor");
    out.predictions.push_back({v[0], v[1]});
    out.targets.push_back(v[2]);
  }
  require(!out.targets.empty(), ErrorKind::validation, "CSV contains no data rows");
  return out;
}

}  // namespace calibra
