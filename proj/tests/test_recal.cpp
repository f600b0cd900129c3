#include <gtest/gtest.h>

#include <cmath>

#include "calibra/harness.hpp"
#include "calibra/recal.hpp"
#include "calibra/synth.hpp"
#include "support.hpp"

using namespace calibra;
using testing_support::calibrated_data;
using testing_support::random_data;

TEST(Numeric, GoldenSectionFindsQuadraticMinimum) {
  const double x = golden_section_minimize([](double u) { return (u - 1.3) * (u - 1.3); }, -5, 5, 1e-9);
  EXPECT_NEAR(x, 1.3, 1e-8);
}

TEST(Numeric, SimplexProjection) {
  Rng rng(1);
  for (int rep = 0; rep < 200; ++rep) {
    std::vector<double> v(1 + rep % 6);
    for (double& x : v) x = std::normal_distribution<double>(0, 2)(rng);
    const auto p = project_to_simplex(v);
    double s = 0;
    for (double x : p) {
      EXPECT_GE(x, 0.0);
      s += x;
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
    // Optimality: <v - p, q - p> <= 0 for vertices q.
    for (std::size_t k = 0; k < v.size(); ++k) {
      double ip = 0;
      for (std::size_t i = 0; i < v.size(); ++i) ip += (v[i] - p[i]) * ((i == k ? 1.0 : 0.0) - p[i]);
      EXPECT_LE(ip, 1e-10);
    }
  }
  const std::vector<double> inside{0.2, 0.3, 0.5};
  const auto same = project_to_simplex(inside);
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(same[k], inside[k], 1e-15);
}

TEST(Maps, TemperatureOneIsIdentity) {
  const ProbVector p({0.1, 0.6, 0.3});
  const auto out = apply_map(TemperatureMap{1.0}, p);
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(out[k], p[k], 1e-15);
}

TEST(Maps, TemperatureEndpoints) {
  const ProbVector p({0.1, 0.6, 0.3});
  const auto flat = apply_map(TemperatureMap{1e6}, p);
  for (double x : flat) EXPECT_NEAR(x, 1.0 / 3, 1e-5);
  const auto sharp = apply_map(TemperatureMap{1e-3}, p);
  EXPECT_NEAR(sharp[1], 1.0, 1e-12);
}

TEST(Maps, EtsCombinesComponents) {
  const ProbVector p({0.2, 0.8});
  const auto ts = apply_map(TemperatureMap{2.0}, p);
  const auto out = apply_map(EtsMap{{0.5, 0.3, 0.2}, 2.0}, p);
  for (int k = 0; k < 2; ++k) EXPECT_NEAR(out[k], 0.5 * ts[k] + 0.3 * p[k] + 0.1, 1e-15);
  EXPECT_THROW(validate(RecalMap{EtsMap{{0.5, 0.6, 0.0}, 1.0}}), Error);
  EXPECT_THROW(validate(RecalMap{TemperatureMap{-1.0}}), Error);
}

TEST(Maps, Injectivity) {
  EXPECT_TRUE(is_injective(TemperatureMap{0.3}));
  EXPECT_TRUE(is_injective(EtsMap{{0.2, 0.8, 0.0}, 1.0}));
  EXPECT_FALSE(is_injective(EtsMap{{0.0, 0.0, 1.0}, 1.0}));
  EXPECT_FALSE(is_injective(TfBinaryMap{0.2, 0.9}));
}

TEST(Maps, OutputsStayOnSimplexAndKeepArgmax) {
  Rng rng(2);
  const auto d = random_data(200, 5, rng, 0.3);
  for (const RecalMap& m : {RecalMap{TemperatureMap{0.4}}, RecalMap{TemperatureMap{3.0}}, RecalMap{EtsMap{{0.6, 0.3, 0.1}, 1.7}}}) {
    const auto out = apply_map(m, d);  // construction validates each row
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (std::get_if<TemperatureMap>(&m)) {
        EXPECT_EQ(top_label(out.prediction(i)).index, top_label(d.prediction(i)).index);
      }
    }
  }
}

TEST(Maps, PlattOnClassesIsUnsupported) {
  try {
    apply_map(PlattVarianceMap{1, 0}, ProbVector({0.5, 0.5}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::unsupported);
  }
}

TEST(FitTemperature, RecoversOneOnCalibratedData) {
  Rng rng(3);
  const auto val = calibrated_data(20000, 4, rng);
  EXPECT_NEAR(fit_temperature(val).temperature, 1.0, 0.05);
}

TEST(FitTemperature, RecoversTemperingOnLogisticNormal) {
  const LogisticNormalModel m(10, 1.0, 4);
  Rng rng(5);
  const auto pool = calibrated_labels(10, m.draw(20000, rng), 6);
  for (double T : {0.5, 2.0}) {
    const double fitted = fit_temperature(temper(pool, T)).temperature;
    EXPECT_NEAR(fitted, 1.0 / T, 0.08 / T) << T;
  }
}

TEST(FitTemperature, NeverWorseThanIdentityAndRejectsSingleClass) {
  Rng rng(7);
  const auto val = random_data(500, 3, rng);
  EXPECT_LE(mean_nll(apply_map(fit_temperature(val), val)), mean_nll(val) + 1e-9);
  std::vector<ProbVector> ps(3, ProbVector({0.5, 0.5}));
  EXPECT_THROW(fit_temperature(LabeledPredictions(ps, {1, 1, 1})), Error);
}

TEST(FitEts, NoWorseThanTemperatureScaling) {
  Rng rng(8);
  for (int rep = 0; rep < 5; ++rep) {
    const auto val = random_data(400, 4, rng, 0.5);
    const auto ts = fit_temperature(val);
    const auto ets = fit_ets(val);
    validate(ets);
    EXPECT_NEAR(ets.temperature, ts.temperature, 1e-12);
    EXPECT_LE(mean_nll(apply_map(ets, val)), mean_nll(apply_map(ts, val)) + 1e-12);
  }
}

TEST(FitEts, LeansOnUniformForNoisyLabels) {
  // One-hot predictions right half the time: no temperature in range can
  // soften them enough, the uniform component has to.
  Rng rng(9);
  std::vector<ProbVector> ps;
  std::vector<ClassIndex> ys;
  for (int i = 0; i < 2000; ++i) {
    const ClassIndex a = i % 3;
    ps.push_back(one_hot(a, 3));
    ys.push_back(uniform01(rng) < 0.5 ? a : (a + 1 + i % 2) % 3);
  }
  const auto ets = fit_ets(LabeledPredictions(ps, ys));
  EXPECT_GT(ets.weights[2], 0.3);
}

TEST(Tf, TableIsConditionalLabelFrequency) {
  const std::vector<ProbVector> ps{ProbVector({0.9, 0.1}), ProbVector({0.8, 0.2}), ProbVector({0.3, 0.7}),
                                   ProbVector({0.1, 0.9})};
  const auto m = tf_transform(LabeledPredictions(ps, {0, 1, 1, 1}));
  EXPECT_DOUBLE_EQ(m.table[0][0], 0.5);
  EXPECT_DOUBLE_EQ(m.table[1][1], 1.0);
  const auto out = apply_map(m, ProbVector({0.6, 0.4}));
  EXPECT_DOUBLE_EQ(out[0], 0.5);
}

TEST(Tf, MissingClassReported) {
  const std::vector<ProbVector> ps{ProbVector({0.9, 0.05, 0.05}), ProbVector({0.1, 0.8, 0.1})};
  try {
    tf_transform(LabeledPredictions(ps, {0, 1}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::validation);
    EXPECT_NE(std::string(e.what()).find("2"), std::string::npos);
  }
}

TEST(Tf, KeepsTopLabelAccuracyWhenDiagonalDominates) {
  Rng rng(10);
  const auto val = calibrated_data(5000, 3, rng, 0.5);
  const auto m = tf_transform(val);
  const auto out = apply_map(m, val);
  std::size_t same = 0;
  for (std::size_t i = 0; i < val.size(); ++i) same += top_label(out.prediction(i)).index == top_label(val.prediction(i)).index;
  EXPECT_EQ(same, val.size());
  EXPECT_LT(ece(out), 0.02);
}

TEST(Tf, Binary) {
  const std::vector<ProbVector> ps{ProbVector({0.9, 0.1}), ProbVector({0.7, 0.3}), ProbVector({0.4, 0.6}),
                                   ProbVector({0.5, 0.5})};
  const auto m = tf_transform_binary(LabeledPredictions(ps, {0, 1, 1, 0}));
  EXPECT_DOUBLE_EQ(m.lo, 0.5);
  EXPECT_DOUBLE_EQ(m.hi, 0.5);
  EXPECT_THROW(tf_transform_binary(LabeledPredictions({ps[0], ps[1]}, {0, 1})), Error);
}

TEST(Improvement, TemperatureMapsGiveEqualBoundAndCeImprovements) {
  Rng rng(11);
  for (int rep = 0; rep < 20; ++rep) {
    const auto j = random_joint(3, 6, rng);
    for (double T : {0.5, 2.0}) {
      const auto h = j.map_predictions([&](const ProbVector& z) { return apply_map(TemperatureMap{T}, z); });
      const double bound_gain = true_brier(j) - true_brier(h);
      const double ce_gain = true_ce_brier(j) - true_ce_brier(h);
      EXPECT_NEAR(bound_gain, ce_gain, 1e-9);
    }
  }
}

TEST(Improvement, Accounting) {
  const auto i = improvement_from(0.3, 0.1);
  EXPECT_NEAR(i.plain, 0.2, 1e-15);
  EXPECT_NEAR(i.squared, 0.08, 1e-15);
  Rng rng(12);
  const auto d = random_data(50, 3, rng);
  EXPECT_NEAR(improvement(d, IdentityMap{}, *roster_entry("ece")).plain, 0.0, 1e-15);
}

TEST(Harness, FitMapByName) {
  Rng rng(13);
  const auto val = random_data(300, 3, rng);
  EXPECT_EQ(map_name(fit_map("ts", val)), "ts");
  EXPECT_EQ(map_name(fit_map("ets", val)), "ets");
  EXPECT_THROW(fit_map("isotonic", val), Error);
}
