#pragma once

// Hand-rolled generators and brute-force reference computations shared by the tests.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "calibra/calibra.hpp"

namespace testing_support {

using calibra::ClassIndex;
using calibra::LabeledPredictions;
using calibra::ProbVector;
using calibra::Rng;

inline std::vector<double> random_simplex(std::size_t n, Rng& rng, double alpha = 1.0) {
  std::gamma_distribution<double> g(alpha, 1.0);
  std::vector<double> v(n);
  double s = 0.0;
  for (double& x : v) s += (x = g(rng) + 1e-300);
  for (double& x : v) x /= s;
  return v;
}

inline LabeledPredictions random_data(std::size_t N, std::size_t n, Rng& rng, double alpha = 1.0) {
  std::vector<double> probs;
  std::vector<ClassIndex> labels;
  for (std::size_t i = 0; i < N; ++i) {
    const auto p = random_simplex(n, rng, alpha);
    probs.insert(probs.end(), p.begin(), p.end());
    labels.push_back(std::uniform_int_distribution<std::size_t>(0, n - 1)(rng));
  }
  return LabeledPredictions(n, std::move(probs), std::move(labels));
}

// Same predictions, labels drawn from them.
inline LabeledPredictions calibrated_data(std::size_t N, std::size_t n, Rng& rng, double alpha = 1.0) {
  std::vector<double> probs;
  std::vector<ClassIndex> labels;
  for (std::size_t i = 0; i < N; ++i) {
    const auto p = random_simplex(n, rng, alpha);
    std::discrete_distribution<std::size_t> d(p.begin(), p.end());
    labels.push_back(d(rng));
    probs.insert(probs.end(), p.begin(), p.end());
  }
  return LabeledPredictions(n, std::move(probs), std::move(labels));
}

inline LabeledPredictions permuted(const LabeledPredictions& d, Rng& rng) {
  std::vector<std::size_t> idx(d.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::shuffle(idx.begin(), idx.end(), rng);
  return d.subset(idx);
}

// Plain ECE written from scratch: bin index floor-based with explicit boundary handling.
inline double reference_ece(const LabeledPredictions& d, std::size_t m) {
  std::vector<double> cnt(m, 0), conf(m, 0), acc(m, 0);
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto p = d.prediction(i);
    std::size_t arg = 0;
    for (std::size_t k = 1; k < p.size(); ++k)
      if (p[k] > p[arg]) arg = k;
    const double c = p[arg];
    std::size_t b = 0;
    for (std::size_t i2 = 0; i2 < m; ++i2) {
      const double lo = static_cast<double>(i2) / static_cast<double>(m), hi = static_cast<double>(i2 + 1) / static_cast<double>(m);
      if (c > lo && c <= hi) b = i2;
    }
    cnt[b] += 1;
    conf[b] += c;
    acc[b] += d.label(i) == arg ? 1.0 : 0.0;
  }
  double e = 0.0;
  for (std::size_t b = 0; b < m; ++b)
    if (cnt[b] > 0) e += std::abs(conf[b] - acc[b]) / static_cast<double>(d.size());
  return e;
}

// SKCE as the plain average of h over all unordered pairs.
inline double brute_force_skce(const LabeledPredictions& d, double nu) {
  const std::size_t N = d.size(), n = d.classes();
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < N; ++i) {
    for (std::size_t j = i + 1; j < N; ++j) {
      Eigen::VectorXd ri(n), rj(n), pi(n), pj(n);
      for (std::size_t k = 0; k < n; ++k) {
        pi[k] = d.prediction(i)[k];
        pj[k] = d.prediction(j)[k];
        ri[k] = pi[k] - (d.label(i) == k ? 1.0 : 0.0);
        rj[k] = pj[k] - (d.label(j) == k ? 1.0 : 0.0);
      }
      const Eigen::MatrixXd K = std::exp(-(pi - pj).squaredNorm() / (2 * nu * nu)) * Eigen::MatrixXd::Identity(n, n);
      total += ri.dot(K * rj);
      ++pairs;
    }
  }
  return total / static_cast<double>(pairs);
}

// Gauss-Hermite nodes/weights (weight function exp(-x^2)) by Golub-Welsch.
inline void gauss_hermite(int order, std::vector<double>& nodes, std::vector<double>& weights) {
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(order, order);
  for (int i = 1; i < order; ++i) J(i, i - 1) = J(i - 1, i) = std::sqrt(i / 2.0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  nodes.resize(order);
  weights.resize(order);
  for (int i = 0; i < order; ++i) {
    nodes[i] = es.eigenvalues()[i];
    const double v0 = es.eigenvectors()(0, i);
    weights[i] = std::sqrt(M_PI) * v0 * v0;
  }
}

// Central finite-difference gradient of the network loss.
inline std::vector<double> numerical_gradient(calibra::MeanVarianceNetwork net, const calibra::RegressionDataset& data,
                                              double step) {
  std::vector<double> g(net.parameter_count());
  auto params = net.parameters();
  for (std::size_t k = 0; k < g.size(); ++k) {
    const double orig = params[k];
    params[k] = orig + step;
    const double up = net.loss_and_gradient(data, nullptr);
    params[k] = orig - step;
    const double down = net.loss_and_gradient(data, nullptr);
    params[k] = orig;
    g[k] = (up - down) / (2 * step);
  }
  return g;
}

inline double max_relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double worst = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double denom = std::max({std::abs(a[k]), std::abs(b[k]), 1e-6});
    worst = std::max(worst, std::abs(a[k] - b[k]) / denom);
  }
  return worst;
}

inline calibra::FiniteJointModel joint_from(const std::vector<std::vector<double>>& z, const std::vector<double>& w,
                                            const std::vector<std::vector<double>>& q) {
  std::vector<calibra::JointAtom> atoms;
  for (std::size_t j = 0; j < z.size(); ++j) atoms.push_back({ProbVector(z[j]), w[j], ProbVector(q[j])});
  return calibra::FiniteJointModel(std::move(atoms));
}

}  // namespace testing_support
