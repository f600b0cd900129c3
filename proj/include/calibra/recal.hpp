#pragma once

// Recalibration maps: temperature scaling, ensemble temperature scaling, the
// calibrated-but-blunt top-label table t^f, and improvement accounting.

#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "calibra/core.hpp"
#include "calibra/error.hpp"
#include "calibra/estimators.hpp"
#include "calibra/numeric.hpp"

namespace calibra {

struct IdentityMap {};

struct TemperatureMap {
  double temperature = 1.0;
};

/// w[0] * softmax(log p / T) + w[1] * p + w[2] * uniform.
struct EtsMap {
  std::array<double, 3> weights{1.0, 0.0, 0.0};
  double temperature = 1.0;
};

/// Replaces every prediction by table[argmax].
struct TfMulticlassMap {
  std::vector<ProbVector> table;
};

/// Binary scalar variant: P(Y=1) becomes `lo` below 0.5 and `hi` at or above it.
struct TfBinaryMap {
  double lo = 0.0;
  double hi = 1.0;
};

/// Regression map sigma^2 -> max(w sigma^2 + b, floor); see regress.hpp.
struct PlattVarianceMap {
  double w = 1.0;
  double b = 0.0;
};

using RecalMap = std::variant<IdentityMap, TemperatureMap, EtsMap, TfMulticlassMap, TfBinaryMap, PlattVarianceMap>;

inline std::string map_name(const RecalMap& map) {
  return std::visit(
      [](const auto& m) -> std::string {
        using M = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<M, IdentityMap>) return "identity";
        else if constexpr (std::is_same_v<M, TemperatureMap>) return "ts";
        else if constexpr (std::is_same_v<M, EtsMap>) return "ets";
        else if constexpr (std::is_same_v<M, TfMulticlassMap>) return "tf";
        else if constexpr (std::is_same_v<M, TfBinaryMap>) return "tf_binary";
        else return "platt_variance";
      },
      map);
}

inline bool is_injective(const RecalMap& map) {
  return std::visit(
      [](const auto& m) -> bool {
        using M = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<M, IdentityMap> || std::is_same_v<M, TemperatureMap>) return true;
        else if constexpr (std::is_same_v<M, EtsMap>) return m.weights[0] > 0.0;
        else if constexpr (std::is_same_v<M, PlattVarianceMap>) return m.w != 0.0;
        else return false;
      },
      map);
}

inline void validate(const RecalMap& map) {
  std::visit(
      [](const auto& m) {
        using M = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<M, TemperatureMap>) {
          require(std::isfinite(m.temperature) && m.temperature > 0.0, ErrorKind::config, "temperature must be positive");
        } else if constexpr (std::is_same_v<M, EtsMap>) {
          require(std::isfinite(m.temperature) && m.temperature > 0.0, ErrorKind::config, "temperature must be positive");
          double s = 0.0;
          for (double w : m.weights) {
            require(std::isfinite(w) && w >= 0.0, ErrorKind::config, "ETS weights must be nonnegative");
            s += w;
          }
          require(std::abs(s - 1.0) <= kSimplexTolerance, ErrorKind::config, "ETS weights must sum to 1");
        } else if constexpr (std::is_same_v<M, TfMulticlassMap>) {
          require(m.table.size() >= 2, ErrorKind::config, "t^f table needs one row per class");
          for (const auto& row : m.table) {
            require(row.size() == m.table.size(), ErrorKind::config, "t^f table rows must have one entry per class");
          }
        } else if constexpr (std::is_same_v<M, TfBinaryMap>) {
          require(m.lo >= 0.0 && m.lo <= 1.0 && m.hi >= 0.0 && m.hi <= 1.0, ErrorKind::config,
                  "binary t^f values must lie in [0,1]");
        } else if constexpr (std::is_same_v<M, PlattVarianceMap>) {
          require(std::isfinite(m.w) && std::isfinite(m.b), ErrorKind::config, "Platt parameters must be finite");
        }
      },
      map);
}

/// Writes h(p) into `out`.
inline void apply_row(const RecalMap& map, std::span<const double> p, std::span<double> out) {
  const std::size_t n = p.size();
  std::visit(
      [&](const auto& m) {
        using M = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<M, IdentityMap>) {
          std::copy(p.begin(), p.end(), out.begin());
        } else if constexpr (std::is_same_v<M, TemperatureMap>) {
          detail::temper_row(p, m.temperature, out);
        } else if constexpr (std::is_same_v<M, EtsMap>) {
          detail::temper_row(p, m.temperature, out);
          for (std::size_t k = 0; k < n; ++k) {
            out[k] = m.weights[0] * out[k] + m.weights[1] * p[k] + m.weights[2] / static_cast<double>(n);
          }
        } else if constexpr (std::is_same_v<M, TfMulticlassMap>) {
          require(m.table.size() == n, ErrorKind::validation, "t^f table does not match the class count");
          const auto& row = m.table[top_label(p).index];
          std::copy(row.values().begin(), row.values().end(), out.begin());
        } else if constexpr (std::is_same_v<M, TfBinaryMap>) {
          require(n == 2, ErrorKind::validation, "binary t^f needs 2 classes");
          const double v = p[1] < 0.5 ? m.lo : m.hi;
          out[0] = 1.0 - v;
          out[1] = v;
        } else {
          fail(ErrorKind::unsupported, "Platt variance scaling applies to Gaussian predictions, not class probabilities");
        }
      },
      map);
}

inline std::vector<double> apply_map(const RecalMap& map, const ProbVector& p) {
  std::vector<double> out(p.size());
  apply_row(map, p.values(), out);
  return out;
}

inline LabeledPredictions apply_map(const RecalMap& map, const LabeledPredictions& data) {
  validate(map);
  const std::size_t n = data.classes();
  std::vector<double> out(data.matrix().size());
  for (std::size_t i = 0; i < data.size(); ++i) apply_row(map, data.prediction(i), std::span<double>(out).subspan(i * n, n));
  return data.with_predictions(std::move(out));
}

// ---------------------------------------------------------------------------
// Fitting
// ---------------------------------------------------------------------------

namespace detail {

inline void check_fit_data(const LabeledPredictions& val) {
  require(val.size() >= 2, ErrorKind::validation, "fitting needs at least 2 validation rows");
  bool varied = false;
  for (std::size_t i = 1; i < val.size() && !varied; ++i) varied = val.label(i) != val.label(0);
  require(varied, ErrorKind::validation, "validation labels are all one class; cannot fit a recalibration map");
}

// Logits recovered as log p; zero probabilities are floored so the objective stays finite.
inline std::vector<double> fitting_logits(const LabeledPredictions& val) {
  std::vector<double> z(val.matrix().size());
  const auto m = val.matrix();
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = std::log(std::max(m[i], 1e-300));
  return z;
}

inline double tempered_nll(std::span<const double> logits, std::span<const ClassIndex> labels, std::size_t n, double T) {
  std::vector<double> terms(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto z = logits.subspan(i * n, n);
    double top = -std::numeric_limits<double>::infinity();
    for (double x : z) top = std::max(top, x / T);
    double s = 0.0;
    for (double x : z) s += std::exp(x / T - top);
    terms[i] = top + std::log(s) - z[labels[i]] / T;
  }
  return mean(terms);
}

}  // namespace detail

/// Negative log-likelihood of the labels under `data`'s predictions.
inline double mean_nll(const LabeledPredictions& data) {
  std::vector<double> terms(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) terms[i] = -std::log(data.prediction(i)[data.label(i)]);
  return mean(terms);
}

inline constexpr double kLogTemperatureBound = 5.0;

/// Temperature minimizing validation NLL, by golden-section search on log T in [-5, 5].
inline TemperatureMap fit_temperature(const LabeledPredictions& val) {
  detail::check_fit_data(val);
  const auto logits = detail::fitting_logits(val);
  const double log_t = golden_section_minimize(
      [&](double u) { return detail::tempered_nll(logits, val.labels(), val.classes(), std::exp(u)); },
      -kLogTemperatureBound, kLogTemperatureBound, 1e-6);
  return TemperatureMap{std::exp(log_t)};
}

struct EtsOptions {
  double step = 0.1;
  int iterations = 500;
};

/// Temperature first, then ensemble weights by projected gradient descent from
/// (1, 0, 0). The best iterate is returned, so the NLL never exceeds plain TS.
inline EtsMap fit_ets(const LabeledPredictions& val, EtsOptions opt = {}) {
  const TemperatureMap ts = fit_temperature(val);
  const std::size_t N = val.size();
  const std::size_t n = val.classes();
  std::vector<double> a(N), b(N);
  std::vector<double> row(n);
  for (std::size_t i = 0; i < N; ++i) {
    detail::temper_row(val.prediction(i), ts.temperature, row);
    a[i] = row[val.label(i)];
    b[i] = val.prediction(i)[val.label(i)];
  }
  const double c = 1.0 / static_cast<double>(n);
  auto objective = [&](const std::array<double, 3>& w, std::array<double, 3>* grad) {
    std::vector<double> loss(N), g0(N), g1(N), g2(N);
    for (std::size_t i = 0; i < N; ++i) {
      const double mix = std::max(w[0] * a[i] + w[1] * b[i] + w[2] * c, 1e-300);
      loss[i] = -std::log(mix);
      g0[i] = -a[i] / mix;
      g1[i] = -b[i] / mix;
      g2[i] = -c / mix;
    }
    if (grad) *grad = {mean(g0), mean(g1), mean(g2)};
    return mean(loss);
  };
  std::array<double, 3> w{1.0, 0.0, 0.0};
  std::array<double, 3> best = w;
  double best_loss = objective(w, nullptr);
  for (int it = 0; it < opt.iterations; ++it) {
    std::array<double, 3> grad{};
    objective(w, &grad);
    std::array<double, 3> step{};
    for (int k = 0; k < 3; ++k) step[k] = w[k] - opt.step * grad[k];
    const auto projected = project_to_simplex(step);
    std::copy(projected.begin(), projected.end(), w.begin());
    const double loss = objective(w, nullptr);
    if (loss < best_loss) {
      best_loss = loss;
      best = w;
    }
  }
  return EtsMap{best, ts.temperature};
}

/// Empirical P(Y | argmax = a) for every class a, from validation data.
inline TfMulticlassMap tf_transform(const LabeledPredictions& val) {
  require(!val.empty(), ErrorKind::validation, "t^f needs validation data");
  const std::size_t n = val.classes();
  std::vector<std::vector<double>> counts(n, std::vector<double>(n, 0.0));
  std::vector<std::size_t> totals(n, 0);
  for (std::size_t i = 0; i < val.size(); ++i) {
    const ClassIndex a = top_label(val.prediction(i)).index;
    counts[a][val.label(i)] += 1.0;
    ++totals[a];
  }
  std::string missing;
  for (std::size_t a = 0; a < n; ++a) {
    if (totals[a] == 0) missing += (missing.empty() ? "" : ", ") + std::to_string(a);
  }
  require(missing.empty(), ErrorKind::validation, "classes never predicted as top label: " + missing);
  TfMulticlassMap map;
  for (std::size_t a = 0; a < n; ++a) {
    for (double& x : counts[a]) x /= static_cast<double>(totals[a]);
    map.table.emplace_back(std::move(counts[a]));
  }
  return map;
}

/// Binary t^f: empirical P(Y=1) below and at-or-above 0.5 on the class-1 probability.
inline TfBinaryMap tf_transform_binary(const LabeledPredictions& val) {
  require(val.classes() == 2, ErrorKind::validation, "binary t^f needs 2 classes");
  double pos[2] = {0.0, 0.0};
  std::size_t cnt[2] = {0, 0};
  for (std::size_t i = 0; i < val.size(); ++i) {
    const int side = val.prediction(i)[1] < 0.5 ? 0 : 1;
    ++cnt[side];
    pos[side] += val.label(i) == 1 ? 1.0 : 0.0;
  }
  require(cnt[0] > 0 && cnt[1] > 0, ErrorKind::validation,
          "binary t^f needs predictions on both sides of 0.5");
  return TfBinaryMap{pos[0] / static_cast<double>(cnt[0]), pos[1] / static_cast<double>(cnt[1])};
}

// ---------------------------------------------------------------------------
// Improvement
// ---------------------------------------------------------------------------

struct Improvement {
  double before = 0.0;
  double after = 0.0;
  double plain = 0.0;    // e(D, f) - e(D, h o f)
  double squared = 0.0;  // e(D, f)^2 - e(D, h o f)^2
};

inline Improvement improvement_from(double before, double after) {
  return {before, after, before - after, before * before - after * after};
}

inline Improvement improvement(const LabeledPredictions& data, const RecalMap& map, const EstimatorConfig& config) {
  const double before = estimate(data, config).value;
  const double after = estimate(apply_map(map, data), config).value;
  return improvement_from(before, after);
}

}  // namespace calibra
