#pragma once

// Proper scores, their entropies and divergences, the calibration-sharpness
// decomposition and the calibration upper bound.

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "calibra/core.hpp"
#include "calibra/error.hpp"
#include "calibra/joint.hpp"
#include "calibra/numeric.hpp"

namespace calibra {

/// A proper scoring rule S(P, y) with its generalized entropy g(Q) = E_{Y~Q} S(Q, Y)
/// and, where finite, inf_P g(P).
template <typename Prediction, typename Outcome>
struct ScoreDefinition {
  std::string name;
  std::function<double(const Prediction&, const Outcome&)> pointwise;
  std::function<double(const Prediction&)> entropy;
  std::optional<double> entropy_infimum;
  bool strictly_proper = true;
};

using ClassificationScore = ScoreDefinition<std::span<const double>, ClassIndex>;

inline double brier(std::span<const double> p, ClassIndex y) {
  double s = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double d = p[k] - (k == y ? 1.0 : 0.0);
    s += d * d;
  }
  return s;
}

inline double brier(const ProbVector& p, ClassIndex y) {
  require(y < p.size(), ErrorKind::index, "label out of range");
  return brier(p.values(), y);
}

// +inf when the observed class has zero probability.
inline double log_score(std::span<const double> p, ClassIndex y) {
  return p[y] > 0.0 ? -std::log(p[y]) : std::numeric_limits<double>::infinity();
}

inline double log_score(const ProbVector& p, ClassIndex y) {
  require(y < p.size(), ErrorKind::index, "label out of range");
  return log_score(p.values(), y);
}

inline ClassificationScore brier_score_rule() {
  return {
      "brier",
      [](const std::span<const double>& p, const ClassIndex& y) { return brier(p, y); },
      [](const std::span<const double>& q) {
        double s = 0.0;
        for (double x : q) s += x * x;
        return 1.0 - s;
      },
      0.0,
      true,
  };
}

inline ClassificationScore log_score_rule() {
  return {
      "log",
      [](const std::span<const double>& p, const ClassIndex& y) { return log_score(p, y); },
      [](const std::span<const double>& q) {
        double h = 0.0;
        for (double x : q) {
          if (x > 0.0) h -= x * std::log(x);
        }
        return h;
      },
      0.0,
      true,
  };
}

/// Mean pointwise score over paired predictions and outcomes. +inf propagates.
template <typename P, typename O>
double expected_score(std::span<const P> predictions, std::span<const O> outcomes, const ScoreDefinition<P, O>& s) {
  require(!predictions.empty(), ErrorKind::validation, "expected score of an empty dataset");
  require(predictions.size() == outcomes.size(), ErrorKind::validation, "predictions and outcomes differ in length");
  std::vector<double> values(predictions.size());
  for (std::size_t i = 0; i < predictions.size(); ++i) values[i] = s.pointwise(predictions[i], outcomes[i]);
  return mean(values);
}

inline double expected_score(const LabeledPredictions& data, const ClassificationScore& s) {
  require(!data.empty(), ErrorKind::validation, "expected score of an empty dataset");
  std::vector<double> values(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) values[i] = s.pointwise(data.prediction(i), data.label(i));
  return mean(values);
}

/// Expected score s_S(p, q) = E_{Y~q} S(p, Y); zero-probability outcomes are skipped.
inline double expected_score_under(const ClassificationScore& s, std::span<const double> p, std::span<const double> q) {
  double total = 0.0;
  for (std::size_t y = 0; y < q.size(); ++y) {
    if (q[y] > 0.0) total += q[y] * s.pointwise(p, y);
  }
  return total;
}

/// d_S(p, q) = s_S(p, q) - g_S(q). Non-negative (up to rounding) for proper scores.
inline double divergence(const ClassificationScore& s, std::span<const double> p, std::span<const double> q) {
  require(p.size() == q.size(), ErrorKind::validation, "divergence of vectors with different dimensions");
  return expected_score_under(s, p, q) - s.entropy(q);
}

inline double divergence(const ClassificationScore& s, const ProbVector& p, const ProbVector& q) {
  return divergence(s, p.values(), q.values());
}

struct Decomposition {
  double entropy = 0.0;     // g_S(P_Y)
  double sharpness = 0.0;   // E d_S(P_Y, P_{Y|Q})
  double calibration = 0.0; // E d_S(Q, P_{Y|Q})
  double expected_score = 0.0;

  double residual() const { return entropy - sharpness + calibration - expected_score; }
};

/// Exact three-term decomposition on a finite joint. The score's expectation is
/// computed independently by enumerating (atom, label) pairs.
inline Decomposition decompose(const FiniteJointModel& joint, const ClassificationScore& s) {
  const ProbVector marginal = joint.marginal();
  Decomposition out;
  out.entropy = s.entropy(marginal.values());
  require(std::isfinite(out.entropy), ErrorKind::numerical, "score entropy of the label marginal is not finite");
  std::vector<double> sharp(joint.size()), calib(joint.size()), score(joint.size());
  for (std::size_t j = 0; j < joint.size(); ++j) {
    const auto& a = joint[j];
    require(std::isfinite(s.entropy(a.conditional.values())), ErrorKind::numerical,
            "score entropy is not finite on the joint's support");
    sharp[j] = a.weight * divergence(s, marginal.values(), a.conditional.values());
    calib[j] = a.weight * divergence(s, a.prediction.values(), a.conditional.values());
    double e = 0.0;
    for (std::size_t y = 0; y < joint.classes(); ++y) {
      if (a.conditional[y] > 0.0) e += a.conditional[y] * s.pointwise(a.prediction.values(), y);
    }
    score[j] = a.weight * e;
  }
  out.sharpness = pairwise_sum(sharp);
  out.calibration = pairwise_sum(calib);
  out.expected_score = pairwise_sum(score);
  return out;
}

namespace detail {

template <typename P, typename O>
double require_infimum(const ScoreDefinition<P, O>& s) {
  if (!s.entropy_infimum) {
    fail(ErrorKind::unsupported, "score '" + s.name +
                                     "' has no finite entropy infimum, so no calibration upper bound exists; "
                                     "compare recalibrations with expected_score instead");
  }
  return *s.entropy_infimum;
}

}  // namespace detail

/// Calibration upper bound: expected score minus the entropy infimum.
inline double upper_bound(const LabeledPredictions& data, const ClassificationScore& s) {
  const double inf = detail::require_infimum(s);
  return expected_score(data, s) - inf;
}

template <typename P, typename O>
double upper_bound(std::span<const P> predictions, std::span<const O> outcomes, const ScoreDefinition<P, O>& s) {
  const double inf = detail::require_infimum(s);
  return expected_score(predictions, outcomes, s) - inf;
}

/// Root Brier score, the square root of the Brier upper bound.
inline double rbs(const LabeledPredictions& data) {
  require(!data.empty(), ErrorKind::validation, "rbs of an empty dataset");
  return std::sqrt(expected_score(data, brier_score_rule()));
}

}  // namespace calibra
