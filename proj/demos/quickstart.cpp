// Walk-through: draw an overconfident classifier, estimate its calibration
// error several ways, fit temperature scaling, and compare against the truth.

#include <cmath>
#include <cstdio>

#include "calibra/calibra.hpp"

using namespace calibra;

int main() {
  // A calibrated 10-class model, then sharpened so it claims too much.
  const LogisticNormalModel model(10, 1.0, 42);
  Rng rng(1);
  const auto pool = temper(calibrated_labels(10, model.draw(6000, rng), 2), 0.6);
  const auto split = split_pool(pool, 2000, 3);

  std::printf("%-12s %10s\n", "estimator", "test");
  for (const auto& cfg : standard_roster()) {
    std::printf("%-12s %10.4f\n", cfg.display_name().c_str(), estimate(split.test, cfg).value);
  }

  const auto ts = fit_temperature(split.validation);
  std::printf("\nfitted temperature %.3f (1/0.6 = %.3f undoes the sharpening)\n", ts.temperature, 1.0 / 0.6);

  const auto after = apply_map(ts, split.test);
  std::printf("%-12s %10s %10s\n", "estimator", "before", "after");
  for (const auto& cfg : standard_roster()) {
    const auto imp = improvement(split.test, ts, cfg);
    std::printf("%-12s %10.4f %10.4f\n", cfg.display_name().c_str(), imp.before, imp.after);
  }

  // The Brier decomposition on a small exact joint.
  Rng jr(7);
  const auto joint = random_joint(3, 5, jr);
  const auto d = decompose(joint, brier_score_rule());
  std::printf("\nexact joint: brier %.4f = entropy %.4f - sharpness %.4f + calibration %.4f\n", d.expected_score,
              d.entropy, d.sharpness, d.calibration);
  std::printf("true CE_2 %.4f, bounded by sqrt(brier) %.4f\n", true_ce_p(joint, 2.0), std::sqrt(d.expected_score));
  std::printf("test NLL before %.4f after %.4f\n", mean_nll(split.test), mean_nll(after));
  return 0;
}
