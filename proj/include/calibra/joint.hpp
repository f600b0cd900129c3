#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <utility>
#include <vector>

#include "calibra/core.hpp"
#include "calibra/error.hpp"

namespace calibra {

/// One atom of a finite joint: with probability `weight` the model outputs
/// `prediction` and the label is drawn from `conditional`.
struct JointAtom {
  ProbVector prediction;
  double weight;
  ProbVector conditional;
};

/// Finite-support joint distribution of (prediction, label).
///
/// Atoms stand for the latent inputs X, so two atoms may share a prediction
/// vector; `conditional` is P(Y | X = atom). Full-vector quantities (CE_p, the
/// Brier calibration term) condition on the atom. Scalar-channel quantities
/// (class-wise, top-label, binned) pool every atom with the same channel value.
/// When all predictions are distinct both views coincide with conditioning on f(X).
class FiniteJointModel {
 public:
  static constexpr double kWeightTolerance = 1e-12;

  explicit FiniteJointModel(std::vector<JointAtom> atoms) : atoms_(std::move(atoms)) {
    require(!atoms_.empty(), ErrorKind::validation, "joint needs at least one atom");
    classes_ = atoms_.front().prediction.size();
    double total = 0.0;
    for (const auto& a : atoms_) {
      require(a.prediction.size() == classes_ && a.conditional.size() == classes_, ErrorKind::validation,
              "joint atoms have differing class counts");
      require(std::isfinite(a.weight) && a.weight > 0.0, ErrorKind::validation, "joint weights must be positive");
      total += a.weight;
    }
    require(std::abs(total - 1.0) <= kWeightTolerance, ErrorKind::validation,
            "joint weights sum to " + format_decimal(total));
  }

  std::size_t classes() const noexcept { return classes_; }
  std::size_t size() const noexcept { return atoms_.size(); }
  const std::vector<JointAtom>& atoms() const noexcept { return atoms_; }
  const JointAtom& operator[](std::size_t j) const { return atoms_[j]; }

  /// P_Y.
  ProbVector marginal() const {
    std::vector<double> m(classes_, 0.0);
    for (const auto& a : atoms_) {
      for (std::size_t k = 0; k < classes_; ++k) m[k] += a.weight * a.conditional[k];
    }
    double s = 0.0;
    for (double x : m) s += x;
    for (double& x : m) x /= s;
    return ProbVector(std::move(m));
  }

  bool has_distinct_predictions() const {
    std::vector<std::vector<double>> zs;
    zs.reserve(atoms_.size());
    for (const auto& a : atoms_) zs.push_back(a.prediction.vector());
    std::sort(zs.begin(), zs.end());
    return std::adjacent_find(zs.begin(), zs.end()) == zs.end();
  }

  /// Pools atoms with identical predictions; the result conditions on f(X).
  FiniteJointModel merged() const {
    std::map<std::vector<double>, std::pair<double, std::vector<double>>> groups;
    for (const auto& a : atoms_) {
      auto& [w, q] = groups[a.prediction.vector()];
      if (q.empty()) q.assign(classes_, 0.0);
      w += a.weight;
      for (std::size_t k = 0; k < classes_; ++k) q[k] += a.weight * a.conditional[k];
    }
    std::vector<JointAtom> out;
    out.reserve(groups.size());
    for (auto& [z, wq] : groups) {
      auto& [w, q] = wq;
      for (double& x : q) x /= w;
      out.push_back({ProbVector(z), w, ProbVector(std::move(q))});
    }
    return FiniteJointModel(std::move(out));
  }

  /// Pushes every prediction through `h`; weights and conditionals stay put.
  template <typename F>
  FiniteJointModel map_predictions(F&& h) const {
    std::vector<JointAtom> out;
    out.reserve(atoms_.size());
    for (const auto& a : atoms_) out.push_back({ProbVector(h(a.prediction)), a.weight, a.conditional});
    return FiniteJointModel(std::move(out));
  }

 private:
  std::size_t classes_ = 0;
  std::vector<JointAtom> atoms_;
};

}  // namespace calibra
