#pragma once

// Synthetic models with known ground truth: exact calibration errors of finite
// joints, samplers, the logistic-normal simulation model, the construction with
// zero class-wise error but large CE_2, and the folded-normal ECE bias model.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <numbers>
#include <random>
#include <vector>

#include "calibra/core.hpp"
#include "calibra/error.hpp"
#include "calibra/estimators.hpp"
#include "calibra/joint.hpp"
#include "calibra/numeric.hpp"
#include "calibra/random.hpp"
#include "calibra/scores.hpp"

namespace calibra {

namespace detail {

// A scalar channel pooled by value: weight and exact P(target | value).
struct PooledPoint {
  double value = 0.0;
  double weight = 0.0;
  double accuracy = 0.0;
};

// Pools atoms by the value of a scalar channel, sorted ascending by value.
template <typename Channel>
std::vector<PooledPoint> pool_channel(const FiniteJointModel& joint, Channel&& channel) {
  std::map<double, std::pair<double, double>> groups;  // value -> (weight, weight * target prob)
  for (const auto& a : joint.atoms()) {
    const auto [value, target_prob] = channel(a);
    auto& [w, wt] = groups[value];
    w += a.weight;
    wt += a.weight * target_prob;
  }
  std::vector<PooledPoint> out;
  out.reserve(groups.size());
  for (const auto& [v, g] : groups) out.push_back({v, g.first, g.second / g.first});
  return out;
}

inline std::vector<PooledPoint> pool_top_label(const FiniteJointModel& joint) {
  return pool_channel(joint, [](const JointAtom& a) {
    const TopLabel t = top_label(a.prediction);
    return std::pair<double, double>{t.confidence, a.conditional[t.index]};
  });
}

inline std::vector<PooledPoint> pool_class(const FiniteJointModel& joint, ClassIndex k) {
  return pool_channel(joint, [k](const JointAtom& a) {
    return std::pair<double, double>{a.prediction[k], a.conditional[k]};
  });
}

inline double pooled_power_sum(const std::vector<PooledPoint>& pts, double p) {
  double s = 0.0;
  for (const auto& g : pts) s += g.weight * std::pow(std::abs(g.value - g.accuracy), p);
  return s;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Exact calibration errors of a finite joint
// ---------------------------------------------------------------------------

/// (sum_j pi_j ||z_j - q_j||_p^p)^(1/p), conditioning on the atom.
inline double true_ce_p(const FiniteJointModel& joint, double p) {
  detail::check_p(p);
  double s = 0.0;
  for (const auto& a : joint.atoms()) {
    double norm = 0.0;
    for (std::size_t k = 0; k < joint.classes(); ++k) norm += std::pow(std::abs(a.prediction[k] - a.conditional[k]), p);
    s += a.weight * norm;
  }
  return std::pow(s, 1.0 / p);
}

inline double true_cwce_p(const FiniteJointModel& joint, double p) {
  detail::check_p(p);
  double s = 0.0;
  for (ClassIndex k = 0; k < joint.classes(); ++k) s += detail::pooled_power_sum(detail::pool_class(joint, k), p);
  return std::pow(s, 1.0 / p);
}

inline double true_tce_p(const FiniteJointModel& joint, double p) {
  detail::check_p(p);
  return std::pow(detail::pooled_power_sum(detail::pool_top_label(joint), p), 1.0 / p);
}

inline double true_accuracy(const FiniteJointModel& joint) {
  double s = 0.0;
  for (const auto& a : joint.atoms()) s += a.weight * a.conditional[top_label(a.prediction).index];
  return s;
}

/// Population ECE: confidences binned on ((i-1)/m, i/m] like the estimator.
inline double true_ece(const FiniteJointModel& joint, std::size_t bins = 15) {
  detail::check_binning(equal_width(bins));
  std::vector<double> w(bins, 0.0), conf(bins, 0.0), acc(bins, 0.0);
  for (const auto& g : detail::pool_top_label(joint)) {
    const std::size_t b = equal_width_bin(g.value, bins);
    w[b] += g.weight;
    conf[b] += g.weight * g.value;
    acc[b] += g.weight * g.accuracy;
  }
  double s = 0.0;
  for (std::size_t b = 0; b < bins; ++b) {
    if (w[b] > 0.0) s += std::abs(conf[b] - acc[b]);
  }
  return s;
}

/// Largest absolute cumulative (confidence - accuracy) mass over confidence thresholds.
inline double true_ks(const FiniteJointModel& joint) {
  double running = 0.0, best = 0.0;
  for (const auto& g : detail::pool_top_label(joint)) {
    running += g.weight * (g.value - g.accuracy);
    best = std::max(best, std::abs(running));
  }
  return best;
}

/// RKHS norm of E[(f_C - P(Y=C|f_C)) k(f_C, .)] for the Laplacian kernel.
inline double true_mmce(const FiniteJointModel& joint, double nu = 0.4) {
  const auto pts = detail::pool_top_label(joint);
  double s = 0.0;
  for (const auto& a : pts) {
    for (const auto& b : pts) {
      s += a.weight * b.weight * (a.value - a.accuracy) * (b.value - b.accuracy) * laplacian_kernel(a.value, b.value, nu);
    }
  }
  return std::sqrt(std::max(s, 0.0));
}

/// Expected Brier score.
inline double true_brier(const FiniteJointModel& joint) {
  double s = 0.0;
  for (const auto& a : joint.atoms()) s += a.weight * expected_score_under(brier_score_rule(), a.prediction.values(), a.conditional.values());
  return s;
}

/// Brier calibration error sum_j pi_j ||z_j - q_j||^2.
inline double true_ce_brier(const FiniteJointModel& joint) {
  double s = 0.0;
  for (const auto& a : joint.atoms()) {
    double d = 0.0;
    for (std::size_t k = 0; k < joint.classes(); ++k) d += (a.prediction[k] - a.conditional[k]) * (a.prediction[k] - a.conditional[k]);
    s += a.weight * d;
  }
  return s;
}

enum class TrueError { ce_p, cwce_p, tce_p, ece, ks, mmce, brier, ce_brier };

struct TrueErrorQuery {
  TrueError which = TrueError::ce_p;
  double p = 2.0;
  std::size_t bins = 15;
  double nu = 0.4;
};

inline double true_error(const FiniteJointModel& joint, const TrueErrorQuery& q) {
  switch (q.which) {
    case TrueError::ce_p: return true_ce_p(joint, q.p);
    case TrueError::cwce_p: return true_cwce_p(joint, q.p);
    case TrueError::tce_p: return true_tce_p(joint, q.p);
    case TrueError::ece: return true_ece(joint, q.bins);
    case TrueError::ks: return true_ks(joint);
    case TrueError::mmce: return true_mmce(joint, q.nu);
    case TrueError::brier: return true_brier(joint);
    case TrueError::ce_brier: return true_ce_brier(joint);
  }
  fail(ErrorKind::config, "unknown oracle error");
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

inline std::vector<double> dirichlet(std::size_t n, double alpha, Rng& rng) {
  std::gamma_distribution<double> gamma(alpha, 1.0);
  std::vector<double> v(n);
  double total = 0.0;
  for (double& x : v) {
    x = gamma(rng);
    total += x;
  }
  if (!(total > 0.0)) {
    v.assign(n, 1.0 / static_cast<double>(n));
    return v;
  }
  for (double& x : v) x /= total;
  return v;
}

/// Draws N (prediction, label) pairs: atom ~ weights, label ~ atom conditional.
inline LabeledPredictions sample(const FiniteJointModel& joint, std::size_t N, std::uint64_t seed) {
  require(N >= 1, ErrorKind::config, "sample size must be at least 1");
  Rng rng(seed);
  std::vector<double> cumulative(joint.size());
  double total = 0.0;
  for (std::size_t j = 0; j < joint.size(); ++j) cumulative[j] = total += joint[j].weight;
  const std::size_t n = joint.classes();
  std::vector<double> probs;
  probs.reserve(N * n);
  std::vector<ClassIndex> labels(N);
  for (std::size_t i = 0; i < N; ++i) {
    const double u = uniform01(rng) * total;
    const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    const auto& a = joint[std::min(static_cast<std::size_t>(it - cumulative.begin()), joint.size() - 1)];
    probs.insert(probs.end(), a.prediction.values().begin(), a.prediction.values().end());
    labels[i] = draw_categorical(a.conditional.values(), rng);
  }
  return LabeledPredictions(n, std::move(probs), std::move(labels));
}

/// A joint with `support` atoms, Dirichlet(alpha) predictions and conditionals
/// that mix each prediction with an independent Dirichlet draw.
inline FiniteJointModel random_joint(std::size_t classes, std::size_t support, Rng& rng, double alpha = 1.0) {
  require(classes >= 2 && support >= 1, ErrorKind::config, "random joint needs >= 2 classes and >= 1 atom");
  const auto w = dirichlet(support, 1.0, rng);
  std::vector<JointAtom> atoms;
  double total = 0.0;
  for (std::size_t j = 0; j < support; ++j) total += std::max(w[j], 1e-3);
  for (std::size_t j = 0; j < support; ++j) {
    auto z = dirichlet(classes, alpha, rng);
    const auto noise = dirichlet(classes, alpha, rng);
    const double mix = uniform01(rng);
    std::vector<double> q(classes);
    for (std::size_t k = 0; k < classes; ++k) q[k] = (1.0 - mix) * z[k] + mix * noise[k];
    atoms.push_back({ProbVector(std::move(z)), std::max(w[j], 1e-3) / total, ProbVector(std::move(q))});
  }
  return FiniteJointModel(std::move(atoms));
}

// ---------------------------------------------------------------------------
// Logistic-normal model
// ---------------------------------------------------------------------------

/// Logits ~ N(0, Sigma) with Sigma ~ inverse-Wishart(df = classes, I / scale),
/// mapped through softmax. The covariance is fixed at construction from `seed`.
class LogisticNormalModel {
 public:
  LogisticNormalModel(std::size_t classes, double scale, std::uint64_t seed) : classes_(classes), scale_(scale) {
    require(classes >= 2, ErrorKind::config, "logistic-normal model needs at least 2 classes");
    require(std::isfinite(scale) && scale > 0.0, ErrorKind::config, "inverse-Wishart scale must be positive");
    // Bartlett factor of the precision matrix: Sigma^{-1} = scale * A A^T.
    Rng rng(seed);
    std::normal_distribution<double> normal;
    bartlett_ = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(classes), static_cast<Eigen::Index>(classes));
    const double df = static_cast<double>(classes);
    for (std::size_t i = 0; i < classes; ++i) {
      std::chi_squared_distribution<double> chi2(df - static_cast<double>(i));
      bartlett_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) = std::sqrt(chi2(rng));
      for (std::size_t j = 0; j < i; ++j) bartlett_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = normal(rng);
    }
  }

  std::size_t classes() const noexcept { return classes_; }

  /// Logit covariance (1/scale) A^{-T} A^{-1}.
  Eigen::MatrixXd covariance() const {
    const Eigen::MatrixXd inv = bartlett_.triangularView<Eigen::Lower>().solve(
        Eigen::MatrixXd::Identity(bartlett_.rows(), bartlett_.cols()));
    return inv.transpose() * inv / scale_;
  }

  std::vector<double> draw_logits(Rng& rng) const {
    std::normal_distribution<double> normal;
    Eigen::VectorXd eps(static_cast<Eigen::Index>(classes_));
    for (Eigen::Index k = 0; k < eps.size(); ++k) eps(k) = normal(rng);
    const Eigen::VectorXd z = bartlett_.transpose().triangularView<Eigen::Upper>().solve(eps) / std::sqrt(scale_);
    return {z.data(), z.data() + z.size()};
  }

  /// N predictions, row-major.
  std::vector<double> draw(std::size_t N, Rng& rng) const {
    std::vector<double> out;
    out.reserve(N * classes_);
    for (std::size_t i = 0; i < N; ++i) {
      const auto p = detail::softmax(draw_logits(rng));
      out.insert(out.end(), p.begin(), p.end());
    }
    return out;
  }

 private:
  std::size_t classes_;
  double scale_;
  Eigen::MatrixXd bartlett_;
};

/// Labels drawn from each row's own prediction, so the result is calibrated.
inline LabeledPredictions calibrated_labels(std::size_t classes, std::vector<double> probs, std::uint64_t seed) {
  require(classes >= 2 && !probs.empty() && probs.size() % classes == 0, ErrorKind::validation,
          "prediction matrix must be nonempty with a whole number of rows");
  Rng rng(seed);
  const std::size_t N = probs.size() / classes;
  std::vector<ClassIndex> labels(N);
  for (std::size_t i = 0; i < N; ++i) {
    labels[i] = draw_categorical(std::span<const double>(probs).subspan(i * classes, classes), rng);
  }
  return LabeledPredictions(classes, std::move(probs), std::move(labels));
}

inline LabeledPredictions calibrated_labels(const std::vector<ProbVector>& predictions, std::uint64_t seed) {
  require(!predictions.empty(), ErrorKind::validation, "no predictions to label");
  std::vector<double> flat;
  for (const auto& p : predictions) {
    require(p.size() == predictions.front().size(), ErrorKind::validation, "predictions have differing class counts");
    flat.insert(flat.end(), p.values().begin(), p.values().end());
  }
  return calibrated_labels(predictions.front().size(), std::move(flat), seed);
}

/// softmax(log p / T) on every row; labels are kept.
inline LabeledPredictions temper(const LabeledPredictions& data, double T) {
  require(std::isfinite(T) && T > 0.0, ErrorKind::config, "temperature must be positive");
  std::vector<double> out(data.matrix().size());
  const std::size_t n = data.classes();
  for (std::size_t i = 0; i < data.size(); ++i) {
    detail::temper_row(data.prediction(i), T, std::span<double>(out).subspan(i * n, n));
  }
  return data.with_predictions(std::move(out));
}

// ---------------------------------------------------------------------------
// Counterexample: zero class-wise error, large CE_2
// ---------------------------------------------------------------------------

/// Near-uniform support points z_j with E||z||^2 <= 1/n + epsilon. Each point is
/// split into sub-atoms with one-hot conditionals e_k and weight pi_j z_{j,k}, so
/// pooled over a prediction the labels follow z_j while CE_2^2 = 1 - E||z||^2.
inline FiniteJointModel counterexample(std::size_t classes, double epsilon, std::size_t support, std::uint64_t seed) {
  require(classes >= 2, ErrorKind::config, "counterexample needs at least 2 classes");
  require(support >= 1, ErrorKind::config, "support size must be at least 1");
  require(std::isfinite(epsilon) && epsilon >= 0.0, ErrorKind::config, "epsilon must be nonnegative");
  require(epsilon > 0.0 || support == 1, ErrorKind::config,
          "epsilon = 0 forces every point to the uniform vector; support size must be 1");
  const double n = static_cast<double>(classes);
  // Perturbation radius r keeps entries >= 1/(2n) and ||z||^2 = 1/n + r^2 <= 1/n + epsilon.
  const double radius = support == 1 ? 0.0 : std::min(std::sqrt(epsilon), 0.5 / n);
  Rng rng(seed);
  std::normal_distribution<double> normal;
  std::vector<JointAtom> atoms;
  const double pi = 1.0 / static_cast<double>(support);
  for (std::size_t j = 0; j < support; ++j) {
    std::vector<double> d(classes);
    double centre = 0.0;
    for (double& x : d) {
      x = normal(rng);
      centre += x;
    }
    double norm = 0.0;
    for (double& x : d) {
      x -= centre / n;
      norm += x * x;
    }
    norm = std::sqrt(norm);
    std::vector<double> z(classes);
    double total = 0.0;
    for (std::size_t k = 0; k < classes; ++k) {
      z[k] = 1.0 / n + (norm > 0.0 ? radius * d[k] / norm : 0.0);
      total += z[k];
    }
    for (double& x : z) x /= total;
    const ProbVector zp(z);
    for (ClassIndex k = 0; k < classes; ++k) atoms.push_back({zp, pi * z[k], one_hot(k, classes)});
  }
  double total = 0.0;
  for (const auto& a : atoms) total += a.weight;
  for (auto& a : atoms) a.weight /= total;
  return FiniteJointModel(std::move(atoms));
}

// ---------------------------------------------------------------------------
// ECE bias model
// ---------------------------------------------------------------------------

/// E|X| for X ~ N(mu, sigma^2).
inline double folded_normal_mean(double mu, double sigma) {
  require(sigma >= 0.0, ErrorKind::config, "sigma must be nonnegative");
  if (sigma == 0.0) return std::abs(mu);
  return std::sqrt(2.0 / std::numbers::pi) * sigma * std::exp(-mu * mu / (2.0 * sigma * sigma)) +
         mu * (1.0 - 2.0 * normal_cdf(-mu / sigma));
}

struct BiasBin {
  double weight = 0.0;  // p_i
  double gap = 0.0;     // mu_i = conf_i - acc_i
  double confidence_variance = 0.0;
  double accuracy_variance = 0.0;
  double sigma = 0.0;
};

struct BiasApprox {
  std::vector<BiasBin> bins;  // nonempty population bins only
  double sample_size = 0.0;
  double mu = 0.0;            // approximate E[ECE estimate] at this sample size
  double ece = 0.0;           // population binned ECE
};

/// Folded-normal approximation of the expected plug-in ECE at sample size n.
inline BiasApprox ece_bias_mu(const FiniteJointModel& joint, double n, std::size_t bins = 15) {
  require(bins >= 1, ErrorKind::config, "bin count must be at least 1");
  require(n >= static_cast<double>(bins), ErrorKind::config, "sample size must be at least the bin count");
  std::vector<double> w(bins, 0.0), conf(bins, 0.0), acc(bins, 0.0), conf_sq(bins, 0.0);
  for (const auto& g : detail::pool_top_label(joint)) {
    const std::size_t b = equal_width_bin(g.value, bins);
    w[b] += g.weight;
    conf[b] += g.weight * g.value;
    conf_sq[b] += g.weight * g.value * g.value;
    acc[b] += g.weight * g.accuracy;
  }
  BiasApprox out;
  out.sample_size = n;
  std::vector<double> terms;
  for (std::size_t b = 0; b < bins; ++b) {
    if (!(w[b] > 0.0)) continue;
    BiasBin bin;
    bin.weight = w[b];
    const double c = conf[b] / w[b];
    const double a = acc[b] / w[b];
    bin.gap = c - a;
    bin.confidence_variance = std::max(conf_sq[b] / w[b] - c * c, 0.0);
    bin.accuracy_variance = a * (1.0 - a);
    bin.sigma = std::sqrt((bin.confidence_variance + bin.accuracy_variance) / (w[b] * n));
    terms.push_back(bin.weight * folded_normal_mean(bin.gap, bin.sigma));
    out.ece += bin.weight * std::abs(bin.gap);
    out.bins.push_back(bin);
  }
  out.mu = pairwise_sum(terms);
  return out;
}

/// d mu / d n by central differences on the closed form.
inline double ece_bias_slope(const FiniteJointModel& joint, double n, std::size_t bins = 15) {
  const double h = 1e-3 * n;
  return (ece_bias_mu(joint, n + h, bins).mu - ece_bias_mu(joint, n - h, bins).mu) / (2.0 * h);
}

/// d^2 mu / d n^2 by central differences on the closed form.
inline double ece_bias_curvature(const FiniteJointModel& joint, double n, std::size_t bins = 15) {
  const double h = 1e-2 * n;
  return (ece_bias_mu(joint, n + h, bins).mu - 2.0 * ece_bias_mu(joint, n, bins).mu +
          ece_bias_mu(joint, n - h, bins).mu) /
         (h * h);
}

}  // namespace calibra
