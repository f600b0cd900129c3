#pragma once

// Experiment protocol: repeated subsampling over log2-spaced test-set sizes,
// relative bias, recalibration-improvement sweeps and the ECE bias simulation.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <tuple>
#include <utility>
#include <vector>

#include "calibra/core.hpp"
#include "calibra/error.hpp"
#include "calibra/estimators.hpp"
#include "calibra/joint.hpp"
#include "calibra/numeric.hpp"
#include "calibra/random.hpp"
#include "calibra/recal.hpp"
#include "calibra/synth.hpp"

namespace calibra {

inline const std::vector<std::size_t>& default_replicate_schedule() {
  static const std::vector<std::size_t> s = {20000, 15842, 12168, 8978, 6272, 4050, 2312, 1058, 288, 2};
  return s;
}

struct NamedMap {
  std::string name;
  RecalMap map;
};

struct SweepConfig {
  std::size_t min_size = 100;
  std::size_t max_size = 0;  // 0 = size of the data pool
  std::size_t ticks = 10;
  std::vector<std::size_t> replicates = default_replicate_schedule();  // one per tick, or a single count for all
  std::uint64_t master_seed = 0;
  std::vector<EstimatorConfig> estimators;
  std::vector<NamedMap> maps;  // evaluated in addition to the unmapped predictions
  std::size_t threads = 1;
};

struct ReportRow {
  std::string estimator;
  std::string map;       // "none" for raw predictions
  std::string quantity;  // value | improvement | improvement_squared | relative_bias
  std::size_t n = 0;
  double mean = 0.0;
  double se = 0.0;
  std::size_t replicates = 0;
  bool defined = true;
};

struct SweepReport {
  std::vector<ReportRow> rows;
  std::vector<std::size_t> sizes;
  std::size_t pool_size = 0;
  std::uint64_t master_seed = 0;
  std::optional<std::string> validation_fingerprint;
  std::vector<NamedMap> fitted_maps;
};

/// `ticks` sizes equally spaced in log2 between lo and hi, rounded to integers.
inline std::vector<std::size_t> log2_ticks(std::size_t lo, std::size_t hi, std::size_t ticks) {
  require(lo >= 1 && hi >= lo, ErrorKind::config, "tick range must satisfy 1 <= min <= max");
  require(ticks >= 1, ErrorKind::config, "need at least one tick");
  if (ticks == 1) return {hi};
  std::vector<std::size_t> out(ticks);
  const double a = std::log2(static_cast<double>(lo)), b = std::log2(static_cast<double>(hi));
  for (std::size_t t = 0; t < ticks; ++t) {
    const double e = a + (b - a) * static_cast<double>(t) / static_cast<double>(ticks - 1);
    out[t] = static_cast<std::size_t>(std::llround(std::exp2(e)));
  }
  out.front() = lo;
  out.back() = hi;
  return out;
}

namespace detail {

inline std::vector<std::size_t> replicate_counts(const SweepConfig& c, std::size_t ticks) {
  require(!c.replicates.empty(), ErrorKind::config, "replicate schedule is empty");
  std::vector<std::size_t> out;
  if (c.replicates.size() == 1) out.assign(ticks, c.replicates.front());
  else {
    require(c.replicates.size() == ticks, ErrorKind::config,
            "replicate schedule has " + std::to_string(c.replicates.size()) + " entries for " + std::to_string(ticks) + " ticks");
    out = c.replicates;
  }
  for (std::size_t r : out) require(r >= 1, ErrorKind::config, "replicate counts must be positive");
  return out;
}

// Draws n distinct indices from [0, N) by a partial Fisher-Yates shuffle of
// `perm`, which must hold the identity and is restored before returning.
inline std::vector<std::size_t> draw_without_replacement(std::vector<std::size_t>& perm, std::size_t n, Rng& rng) {
  const std::size_t N = perm.size();
  std::vector<std::size_t> swaps(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t j = k + std::uniform_int_distribution<std::size_t>(0, N - k - 1)(rng);
    swaps[k] = j;
    std::swap(perm[k], perm[j]);
  }
  std::vector<std::size_t> out(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n));
  for (std::size_t k = n; k-- > 0;) std::swap(perm[k], perm[swaps[k]]);
  return out;
}

// Runs body(replicate, scratch_perm) for r in [0, count) over `threads` workers.
template <typename Body>
void run_replicates(std::size_t count, std::size_t pool, std::size_t threads, Body&& body) {
  threads = std::max<std::size_t>(1, std::min(threads, count));
  auto worker = [&](std::size_t t) {
    std::vector<std::size_t> perm(pool);
    for (std::size_t i = 0; i < pool; ++i) perm[i] = i;
    for (std::size_t r = t; r < count; r += threads) body(r, perm);
  };
  if (threads == 1) {
    worker(0);
    return;
  }
  // First failure wins; the others are dropped once it is recorded.
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> workers;
  for (std::size_t t = 0; t < threads; ++t) {
    workers.emplace_back([&, t] {
      try {
        worker(t);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& w : workers) w.join();
  if (error) std::rethrow_exception(error);
}

inline ReportRow make_row(const std::string& est, const std::string& map, const std::string& quantity, std::size_t n,
                          std::span<const double> values) {
  const auto s = mean_and_se(values);
  return {est, map, quantity, n, s.mean, s.se, values.size(), true};
}

}  // namespace detail

/// Estimator values on repeated subsamples of `data`, for the raw predictions and
/// after each map. Replicate r at tick t uses seed derive_seed(master, t, r).
inline SweepReport sweep(const LabeledPredictions& data, const SweepConfig& config) {
  require(!config.estimators.empty(), ErrorKind::config, "sweep needs at least one estimator");
  for (const auto& e : config.estimators) validate(e);
  const std::size_t N = data.size();
  const std::size_t hi = config.max_size == 0 ? N : config.max_size;
  require(hi <= N, ErrorKind::config, "largest tick " + std::to_string(hi) + " exceeds the " + std::to_string(N) + " available rows");
  const auto sizes = log2_ticks(config.min_size, hi, config.ticks);
  const auto reps = detail::replicate_counts(config, sizes.size());

  std::vector<std::pair<std::string, LabeledPredictions>> pools{{"none", data}};
  for (const auto& m : config.maps) pools.emplace_back(m.name, apply_map(m.map, data));

  SweepReport report;
  report.sizes = sizes;
  report.pool_size = N;
  report.master_seed = config.master_seed;
  report.fitted_maps = config.maps;
  const std::size_t E = config.estimators.size();
  for (std::size_t t = 0; t < sizes.size(); ++t) {
    // values[pool][estimator][replicate]
    std::vector<std::vector<std::vector<double>>> values(pools.size(), std::vector<std::vector<double>>(E, std::vector<double>(reps[t])));
    detail::run_replicates(reps[t], N, config.threads, [&](std::size_t r, std::vector<std::size_t>& perm) {
      Rng rng(derive_seed(config.master_seed, t, r));
      const auto rows = detail::draw_without_replacement(perm, sizes[t], rng);
      for (std::size_t p = 0; p < pools.size(); ++p) {
        const auto sub = pools[p].second.subset(rows);
        for (std::size_t e = 0; e < E; ++e) values[p][e][r] = estimate(sub, config.estimators[e]).value;
      }
    });
    for (std::size_t p = 0; p < pools.size(); ++p) {
      for (std::size_t e = 0; e < E; ++e) {
        report.rows.push_back(detail::make_row(config.estimators[e].display_name(), pools[p].first, "value", sizes[t], values[p][e]));
      }
    }
  }
  return report;
}

/// Sweep on a pool of N draws from `joint`.
inline SweepReport sweep(const FiniteJointModel& joint, std::size_t N, const SweepConfig& config) {
  return sweep(sample(joint, N, derive_seed(config.master_seed, 0x706f6f6cULL)), config);
}

/// Divides every series by its value at the largest tick. Series whose reference
/// mean is zero are flagged undefined and left undivided.
inline SweepReport relative_bias(const SweepReport& report) {
  require(!report.rows.empty(), ErrorKind::validation, "empty report");
  std::size_t top = 0;
  for (const auto& r : report.rows) top = std::max(top, r.n);
  std::map<std::tuple<std::string, std::string, std::string>, std::optional<double>> reference;
  for (const auto& r : report.rows) {
    if (r.n == top) reference[{r.estimator, r.map, r.quantity}] = r.mean;
  }
  SweepReport out = report;
  for (auto& r : out.rows) {
    const auto it = reference.find({r.estimator, r.map, r.quantity});
    require(it != reference.end(), ErrorKind::validation, "series " + r.estimator + "/" + r.map + " lacks the largest tick");
    const double ref = it->second.value_or(0.0);
    r.quantity = r.quantity == "value" ? "relative_bias" : r.quantity + "_relative";
    if (ref == 0.0 || !std::isfinite(ref)) {
      r.defined = false;
      continue;
    }
    r.mean /= ref;
    r.se /= std::abs(ref);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Recalibration improvement
// ---------------------------------------------------------------------------

/// FNV-1a over the prediction bytes and labels; identifies the fitting data.
inline std::string fingerprint(const LabeledPredictions& data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&](const void* p, std::size_t len) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < len; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ULL;
    }
  };
  const auto m = data.matrix();
  mix(m.data(), m.size() * sizeof(double));
  for (ClassIndex y : data.labels()) {
    const std::uint64_t v = y;
    mix(&v, sizeof v);
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

/// Fits a map by method name on validation data only: identity | ts | ets | tf | tf_binary.
inline RecalMap fit_map(const std::string& method, const LabeledPredictions& val) {
  if (method == "identity") return IdentityMap{};
  if (method == "ts") return fit_temperature(val);
  if (method == "ets") return fit_ets(val);
  if (method == "tf") return tf_transform(val);
  if (method == "tf_binary") return tf_transform_binary(val);
  fail(ErrorKind::config, "unknown recalibration method '" + method + "'");
}

/// Disjoint validation/test split of one pool, shuffled by `seed`.
inline Split split_pool(const LabeledPredictions& pool, std::size_t validation_size, std::uint64_t seed) {
  require(validation_size >= 1 && validation_size < pool.size(), ErrorKind::config,
          "validation size must leave at least one test row");
  std::vector<std::size_t> perm(pool.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  Rng rng(seed);
  const auto val_rows = detail::draw_without_replacement(perm, pool.size(), rng);
  const std::span<const std::size_t> all(val_rows);
  return make_split(pool.subset(all.first(validation_size)), pool.subset(all.subspan(validation_size)));
}

/// Fits each method on split.validation, then reports mean +- SE of the plain
/// and squared-space improvement on repeated test subsamples.
inline SweepReport improvement_sweep(const Split& split, const std::vector<std::string>& methods, const SweepConfig& config) {
  require(!methods.empty(), ErrorKind::config, "improvement sweep needs at least one method");
  require(!config.estimators.empty(), ErrorKind::config, "improvement sweep needs at least one estimator");
  for (const auto& e : config.estimators) validate(e);
  const auto& test = split.test;
  const std::size_t N = test.size();
  const std::size_t hi = config.max_size == 0 ? N : config.max_size;
  require(hi <= N, ErrorKind::config, "largest tick exceeds the test pool");
  const auto sizes = log2_ticks(config.min_size, hi, config.ticks);
  const auto reps = detail::replicate_counts(config, sizes.size());

  SweepReport report;
  report.sizes = sizes;
  report.pool_size = N;
  report.master_seed = config.master_seed;
  report.validation_fingerprint = fingerprint(split.validation);
  std::vector<LabeledPredictions> mapped;
  for (const auto& m : methods) {
    report.fitted_maps.push_back({m, fit_map(m, split.validation)});
    mapped.push_back(apply_map(report.fitted_maps.back().map, test));
  }
  const std::size_t E = config.estimators.size(), M = methods.size();
  for (std::size_t t = 0; t < sizes.size(); ++t) {
    std::vector<std::vector<std::vector<double>>> plain(M, std::vector<std::vector<double>>(E, std::vector<double>(reps[t])));
    auto squared = plain;
    detail::run_replicates(reps[t], N, config.threads, [&](std::size_t r, std::vector<std::size_t>& perm) {
      Rng rng(derive_seed(config.master_seed, t, r));
      const auto rows = detail::draw_without_replacement(perm, sizes[t], rng);
      const auto before_set = test.subset(rows);
      std::vector<double> before(E);
      for (std::size_t e = 0; e < E; ++e) before[e] = estimate(before_set, config.estimators[e]).value;
      for (std::size_t m = 0; m < M; ++m) {
        const auto after_set = mapped[m].subset(rows);
        for (std::size_t e = 0; e < E; ++e) {
          const auto imp = improvement_from(before[e], estimate(after_set, config.estimators[e]).value);
          plain[m][e][r] = imp.plain;
          squared[m][e][r] = imp.squared;
        }
      }
    });
    for (std::size_t m = 0; m < M; ++m) {
      for (std::size_t e = 0; e < E; ++e) {
        const auto name = config.estimators[e].display_name();
        report.rows.push_back(detail::make_row(name, methods[m], "improvement", sizes[t], plain[m][e]));
        report.rows.push_back(detail::make_row(name, methods[m], "improvement_squared", sizes[t], squared[m][e]));
      }
    }
  }
  return report;
}

/// Validation and test pools drawn independently from `joint`.
inline SweepReport improvement_sweep(const FiniteJointModel& joint, std::size_t validation_size, std::size_t test_size,
                                     const std::vector<std::string>& methods, const SweepConfig& config) {
  const Split split = make_split(sample(joint, validation_size, derive_seed(config.master_seed, 0x76616cULL)),
                                 sample(joint, test_size, derive_seed(config.master_seed, 0x74657374ULL)));
  return improvement_sweep(split, methods, config);
}

// ---------------------------------------------------------------------------
// ECE bias simulation
// ---------------------------------------------------------------------------

struct BiasPoint {
  std::size_t n = 0;
  double mc_mean = 0.0;  // Monte-Carlo mean of the plug-in ECE
  double mc_se = 0.0;
  std::size_t replicates = 0;
  double mu = 0.0;       // folded-normal approximation
  double true_ece = 0.0;
};

/// Fresh samples of size n from `joint` per replicate; compares the mean plug-in
/// ECE with the closed-form approximation.
inline std::vector<BiasPoint> simulate_ece_bias(const FiniteJointModel& joint, const std::vector<std::size_t>& sizes,
                                                std::size_t replicates, std::size_t bins, std::uint64_t seed,
                                                std::size_t threads = 1) {
  require(replicates >= 1, ErrorKind::config, "replicates must be positive");
  std::vector<BiasPoint> out;
  for (std::size_t t = 0; t < sizes.size(); ++t) {
    const std::size_t n = sizes[t];
    std::vector<double> values(replicates);
    detail::run_replicates(replicates, 0, threads, [&](std::size_t r, std::vector<std::size_t>&) {
      values[r] = ece(sample(joint, n, derive_seed(seed, t, r)), equal_width(bins));
    });
    const auto s = mean_and_se(values);
    const auto approx = ece_bias_mu(joint, static_cast<double>(n), bins);
    out.push_back({n, s.mean, s.se, replicates, approx.mu, approx.ece});
  }
  return out;
}

/// Calibrated joint over `atoms` equally weighted predictions of a logistic-normal
/// model: each atom's conditional is its own prediction.
inline FiniteJointModel logistic_normal_joint(const LogisticNormalModel& model, std::size_t atoms, std::uint64_t seed) {
  require(atoms >= 1, ErrorKind::config, "need at least one atom");
  Rng rng(seed);
  const auto probs = model.draw(atoms, rng);
  const std::size_t n = model.classes();
  std::vector<JointAtom> out;
  out.reserve(atoms);
  const double w = 1.0 / static_cast<double>(atoms);
  for (std::size_t j = 0; j < atoms; ++j) {
    std::vector<double> z(probs.begin() + static_cast<std::ptrdiff_t>(j * n), probs.begin() + static_cast<std::ptrdiff_t>((j + 1) * n));
    ProbVector p(std::move(z));
    out.push_back({p, w, p});
  }
  return FiniteJointModel(std::move(out));
}

// ---------------------------------------------------------------------------
// CSV output
// ---------------------------------------------------------------------------

inline void write_report_csv(std::ostream& out, const SweepReport& report) {
  out << "estimator,map,n,mean,se,replicates,quantity,defined\n";
  for (const auto& r : report.rows) {
    out << r.estimator << ',' << r.map << ',' << r.n << ',' << format_decimal(r.mean) << ',' << format_decimal(r.se) << ','
        << r.replicates << ',' << r.quantity << ',' << (r.defined ? "true" : "false") << '\n';
  }
}

/// Long format for plotting: one row per (figure, series, n).
inline void write_plot_data(std::ostream& out, const SweepReport& report) {
  out << "figure,series,n,y,se\n";
  for (const auto& r : report.rows) {
    if (!r.defined) continue;
    const char* figure = r.quantity.rfind("improvement", 0) == 0 ? "improvement" : r.quantity == "relative_bias" ? "relative_bias" : "estimate";
    out << figure << ',' << r.estimator << '/' << r.map << '/' << r.quantity << ',' << r.n << ',' << format_decimal(r.mean) << ','
        << format_decimal(r.se) << '\n';
  }
}

inline void write_bias_csv(std::ostream& out, const std::vector<BiasPoint>& points) {
  out << "n,mc_mean,mc_se,replicates,mu,true_ece\n";
  for (const auto& p : points) {
    out << p.n << ',' << format_decimal(p.mc_mean) << ',' << format_decimal(p.mc_se) << ',' << p.replicates << ','
        << format_decimal(p.mu) << ',' << format_decimal(p.true_ece) << '\n';
  }
}

}  // namespace calibra
