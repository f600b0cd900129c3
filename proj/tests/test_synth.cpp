#include <gtest/gtest.h>

#include <cmath>

#include "calibra/synth.hpp"
#include "support.hpp"

using namespace calibra;
using testing_support::joint_from;

TEST(Oracle, IndependentModelIsCalibrated) {
  // q = z on every atom.
  const auto j = joint_from({{0.7, 0.3}, {0.2, 0.8}}, {0.5, 0.5}, {{0.7, 0.3}, {0.2, 0.8}});
  for (double p : {1.0, 2.0}) {
    EXPECT_NEAR(true_ce_p(j, p), 0.0, 1e-15);
    EXPECT_NEAR(true_cwce_p(j, p), 0.0, 1e-15);
    EXPECT_NEAR(true_tce_p(j, p), 0.0, 1e-15);
  }
  EXPECT_NEAR(true_ece(j), 0.0, 1e-15);
  EXPECT_NEAR(true_ks(j), 0.0, 1e-15);
  EXPECT_NEAR(true_mmce(j), 0.0, 1e-15);
}

TEST(Oracle, SingleAtomHandValues) {
  const auto j = joint_from({{0.8, 0.2}}, {1.0}, {{0.5, 0.5}});
  EXPECT_NEAR(true_ce_p(j, 1), 0.6, 1e-15);
  EXPECT_NEAR(true_ce_p(j, 2), std::sqrt(0.18), 1e-15);
  EXPECT_NEAR(true_cwce_p(j, 2), std::sqrt(0.18), 1e-15);
  EXPECT_NEAR(true_tce_p(j, 2), 0.3, 1e-15);
  EXPECT_NEAR(true_ece(j), 0.3, 1e-15);
  EXPECT_NEAR(true_ks(j), 0.3, 1e-15);
  EXPECT_NEAR(true_mmce(j), 0.3, 1e-15);
  EXPECT_NEAR(true_accuracy(j), 0.5, 1e-15);
  EXPECT_NEAR(true_brier(j), 0.5 * (0.04 + 0.04) + 0.5 * (0.64 + 0.64), 1e-15);
  EXPECT_NEAR(true_ce_brier(j), 0.18, 1e-15);
}

TEST(Oracle, BrierMatchesEnumeration) {
  Rng rng(1);
  for (int rep = 0; rep < 50; ++rep) {
    const auto j = random_joint(3, 5, rng);
    double s = 0;
    for (const auto& a : j.atoms())
      for (ClassIndex y = 0; y < 3; ++y) s += a.weight * a.conditional[y] * brier(a.prediction, y);
    EXPECT_NEAR(true_brier(j), s, 1e-12);
  }
}

TEST(Oracle, InequalityChainOnRandomJoints) {
  Rng rng(2);
  for (int rep = 0; rep < 300; ++rep) {
    const std::size_t n = std::array<std::size_t, 3>{2, 3, 5}[rep % 3];
    const auto j = random_joint(n, 1 + rep % 8, rng, rep % 2 ? 0.3 : 1.0);
    for (double p : {1.0, 2.0}) {
      const double bs = std::pow(static_cast<double>(n), 1 / p - 0.5) * std::sqrt(true_brier(j));
      const double ce = true_ce_p(j, p), cw = true_cwce_p(j, p), tc = true_tce_p(j, p), t1 = true_tce_p(j, 1);
      EXPECT_GE(bs - ce, -1e-10);
      EXPECT_GE(ce - cw, -1e-10);
      EXPECT_GE(cw - tc, -1e-10);
      EXPECT_GE(tc - t1, -1e-10);
      EXPECT_GE(t1 - std::max(true_ks(j), true_ece(j)), -1e-10);
      EXPECT_GE(t1 - true_mmce(j), -1e-10);
    }
  }
}

TEST(Oracle, PoolingDuplicatesOnlyLowersScalarErrors) {
  // Two atoms share a prediction with opposite conditionals.
  const auto j = joint_from({{0.6, 0.4}, {0.6, 0.4}}, {0.5, 0.5}, {{1, 0}, {0.2, 0.8}});
  EXPECT_NEAR(true_tce_p(j, 1), 0.0, 1e-15);
  EXPECT_GT(true_ce_p(j, 2), 0.3);
  EXPECT_NEAR(true_ce_p(j.merged(), 2), 0.0, 1e-15);
}

TEST(Oracle, Dispatch) {
  const auto j = joint_from({{0.8, 0.2}}, {1.0}, {{0.5, 0.5}});
  EXPECT_DOUBLE_EQ(true_error(j, {TrueError::tce_p, 2.0}), true_tce_p(j, 2.0));
  EXPECT_DOUBLE_EQ(true_error(j, {TrueError::ece, 2.0, 10}), true_ece(j, 10));
  EXPECT_THROW(true_ce_p(j, 0.5), Error);
}

TEST(Sample, FrequenciesMatchJoint) {
  const auto j = joint_from({{0.9, 0.1}, {0.3, 0.7}}, {0.25, 0.75}, {{0.5, 0.5}, {0.1, 0.9}});
  const auto d = sample(j, 200000, 7);
  std::size_t first = 0, ones = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    first += d.prediction(i)[0] == 0.9;
    ones += d.label(i) == 1;
  }
  const double N = static_cast<double>(d.size());
  EXPECT_NEAR(first / N, 0.25, 4 * std::sqrt(0.25 * 0.75 / N));
  const double p1 = 0.25 * 0.5 + 0.75 * 0.9;
  EXPECT_NEAR(ones / N, p1, 4 * std::sqrt(p1 * (1 - p1) / N));
}

TEST(Sample, DeterministicInSeed) {
  Rng rng(3);
  const auto j = random_joint(4, 6, rng);
  const auto a = sample(j, 100, 11), b = sample(j, 100, 11), c = sample(j, 100, 12);
  EXPECT_TRUE(std::equal(a.labels().begin(), a.labels().end(), b.labels().begin()));
  EXPECT_FALSE(std::equal(a.labels().begin(), a.labels().end(), c.labels().begin()));
}

TEST(Sample, EstimatesConvergeToOracle) {
  Rng rng(4);
  for (int rep = 0; rep < 5; ++rep) {
    auto j = random_joint(3, 4, rng);
    // Distinct predictions bounded away from bin edges keep the binned limit exact.
    const auto d = sample(j, 400000, rep);
    EXPECT_NEAR(ece(d, equal_width(15)), true_ece(j, 15), 0.01);
    EXPECT_NEAR(rbs(d), std::sqrt(true_brier(j)), 0.005);
  }
}

TEST(Counterexample, ZeroScalarErrorsLargeCe) {
  const auto j = counterexample(100, 0.01, 20, 5);
  EXPECT_NEAR(true_cwce_p(j, 2), 0.0, 1e-12);
  EXPECT_NEAR(true_tce_p(j, 2), 0.0, 1e-12);
  EXPECT_NEAR(true_ece(j), 0.0, 1e-12);
  EXPECT_NEAR(true_ks(j), 0.0, 1e-12);
  EXPECT_NEAR(true_mmce(j), 0.0, 1e-12);
  EXPECT_GE(true_ce_p(j, 2), std::sqrt(0.99 - 0.01));
}

TEST(Counterexample, CeSquaredIsOneMinusExpectedNorm) {
  for (std::size_t n : {2u, 5u, 30u}) {
    const auto j = counterexample(n, 0.05, 7, n);
    double norm = 0;
    for (const auto& a : j.atoms()) {
      double s = 0;
      for (double x : a.prediction.values()) s += x * x;
      norm += a.weight * s;
    }
    EXPECT_NEAR(true_ce_p(j, 2) * true_ce_p(j, 2), 1 - norm, 1e-12);
    EXPECT_LE(norm, 1.0 / n + 0.05 + 1e-12);
  }
}

TEST(Counterexample, Errors) {
  EXPECT_THROW(counterexample(10, -0.1, 3, 1), Error);
  EXPECT_THROW(counterexample(10, 0.0, 3, 1), Error);
  const auto j = counterexample(10, 0.0, 1, 1);
  EXPECT_NEAR(true_ce_p(j, 2), std::sqrt(0.9), 1e-12);
}

TEST(LogisticNormal, CovarianceIsSpd) {
  for (std::size_t n : {2u, 5u, 20u}) {
    const LogisticNormalModel m(n, 1.0, n);
    const Eigen::MatrixXd S = m.covariance();
    EXPECT_LT((S - S.transpose()).cwiseAbs().maxCoeff(), 1e-10);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
    EXPECT_GT(es.eigenvalues().minCoeff(), 0.0);
  }
}

TEST(LogisticNormal, DrawsHaveModelCovariance) {
  const LogisticNormalModel m(3, 2.0, 9);
  Rng rng(10);
  const int N = 200000;
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(3, 3);
  for (int i = 0; i < N; ++i) {
    const auto z = m.draw_logits(rng);
    const Eigen::Map<const Eigen::VectorXd> v(z.data(), 3);
    acc += v * v.transpose();
  }
  acc /= N;
  const Eigen::MatrixXd S = m.covariance();
  EXPECT_LT((acc - S).cwiseAbs().maxCoeff(), 0.05 * S.cwiseAbs().maxCoeff());
}

TEST(LogisticNormal, DrawsAreOnSimplex) {
  const LogisticNormalModel m(10, 1.0, 1);
  Rng rng(2);
  const auto flat = m.draw(50, rng);
  ASSERT_EQ(flat.size(), 500u);
  const auto d = calibrated_labels(10, flat, 3);
  EXPECT_EQ(d.size(), 50u);
}

TEST(Temper, KeepsArgmaxAndSharpens) {
  Rng rng(5);
  const auto d = testing_support::random_data(100, 4, rng);
  const auto t = temper(d, 0.5);
  for (std::size_t i = 0; i < d.size(); ++i) {
    EXPECT_EQ(top_label(d.prediction(i)).index, top_label(t.prediction(i)).index);
    EXPECT_GE(top_label(t.prediction(i)).confidence, top_label(d.prediction(i)).confidence - 1e-12);
    EXPECT_EQ(d.label(i), t.label(i));
  }
  EXPECT_THROW(temper(d, 0.0), Error);
}

TEST(FoldedNormal, MatchesQuadrature) {
  // Trapezoid rule on a fine grid; the kink at 0 costs O(h^2) only.
  for (double mu : {-0.3, 0.0, 0.1, 2.0}) {
    for (double s : {0.05, 0.5, 1.5}) {
      const int K = 400000;
      const double lo = mu - 12 * s, h = 24 * s / K;
      double q = 0;
      for (int i = 0; i <= K; ++i) {
        const double x = lo + i * h;
        const double f = std::abs(x) * std::exp(-0.5 * std::pow((x - mu) / s, 2)) / (s * std::sqrt(2 * M_PI));
        q += (i == 0 || i == K ? 0.5 : 1.0) * f * h;
      }
      EXPECT_NEAR(folded_normal_mean(mu, s), q, 1e-8);
    }
  }
  EXPECT_DOUBLE_EQ(folded_normal_mean(-0.4, 0.0), 0.4);
}

TEST(EceBiasModel, DecreasingConvexAndConvergesToEce) {
  Rng rng(6);
  for (int rep = 0; rep < 20; ++rep) {
    const auto j = random_joint(3, 8, rng);
    double prev = 1e9;
    for (double n : {50.0, 200.0, 1000.0, 10000.0}) {
      const auto b = ece_bias_mu(j, n);
      EXPECT_LE(b.mu, prev + 1e-12);
      EXPECT_GE(b.mu, b.ece - 1e-12);
      prev = b.mu;
      EXPECT_LE(ece_bias_slope(j, n), 1e-12);
      EXPECT_GE(ece_bias_curvature(j, n), -1e-12);
    }
    EXPECT_NEAR(ece_bias_mu(j, 1e12).mu, true_ece(j), 1e-5);
  }
  EXPECT_THROW(ece_bias_mu(random_joint(2, 2, rng), 10, 15), Error);
}
