#pragma once

// Sample-based calibration-error estimators: binned (ECE, TCE_p, CWCE_p),
// Kolmogorov-Smirnov, Nadaraya-Watson KDE, MMCE and the SKCE U-statistic.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "calibra/core.hpp"
#include "calibra/error.hpp"
#include "calibra/numeric.hpp"
#include "calibra/scores.hpp"

namespace calibra {

enum class BinningKind { equal_width, equal_mass };

struct BinningScheme {
  BinningKind kind = BinningKind::equal_width;
  std::size_t bins = 15;

  friend bool operator==(const BinningScheme&, const BinningScheme&) = default;
};

inline BinningScheme equal_width(std::size_t m) { return {BinningKind::equal_width, m}; }
inline BinningScheme equal_mass(std::size_t m) { return {BinningKind::equal_mass, m}; }

/// Which scalar is binned: the top-label confidence, or the probability of one class.
struct Channel {
  std::optional<ClassIndex> class_index;

  static Channel top_label() { return {}; }
  static Channel of_class(ClassIndex k) { return {k}; }
};

struct Bin {
  std::size_t count = 0;
  double confidence = 0.0;           // mean channel value
  double accuracy = 0.0;             // mean target indicator
  double frequency = 0.0;            // count / N
  double confidence_variance = 0.0;  // population variance of the channel value in the bin
  double accuracy_variance = 0.0;    // accuracy * (1 - accuracy)

  bool empty() const noexcept { return count == 0; }
};

struct BinStats {
  std::vector<Bin> bins;
  std::size_t total = 0;

  std::size_t empty_bins() const {
    return static_cast<std::size_t>(std::count_if(bins.begin(), bins.end(), [](const Bin& b) { return b.empty(); }));
  }
};

/// Equal-width bin i (0-based) is (i/m, (i+1)/m]; a value of exactly 0 goes to bin 0.
inline std::size_t equal_width_bin(double v, std::size_t m) {
  if (v <= 0.0) return 0;
  const double scaled = std::ceil(v * static_cast<double>(m));
  if (scaled < 1.0) return 0;
  return std::min(static_cast<std::size_t>(scaled) - 1, m - 1);
}

namespace detail {

struct ChannelData {
  std::vector<double> values;
  std::vector<double> targets;
};

inline ChannelData extract_channel(const LabeledPredictions& data, Channel channel) {
  ChannelData out;
  out.values.resize(data.size());
  out.targets.resize(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto p = data.prediction(i);
    if (channel.class_index) {
      out.values[i] = p[*channel.class_index];
      out.targets[i] = data.label(i) == *channel.class_index ? 1.0 : 0.0;
    } else {
      const TopLabel t = top_label(p);
      out.values[i] = t.confidence;
      out.targets[i] = data.label(i) == t.index ? 1.0 : 0.0;
    }
  }
  return out;
}

// Bin index per row. Equal-mass bins are contiguous in (value, row) order and
// never split a run of tied values: duplicates at a boundary join the earlier bin.
inline std::vector<std::size_t> assign_bins(std::span<const double> values, BinningScheme scheme) {
  const std::size_t n = values.size();
  const std::size_t m = scheme.bins;
  std::vector<std::size_t> bin(n);
  if (scheme.kind == BinningKind::equal_width) {
    for (std::size_t i = 0; i < n; ++i) bin[i] = equal_width_bin(values[i], m);
    return bin;
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  const std::size_t base = n / m;
  const std::size_t extra = n % m;
  std::size_t nominal_end = 0;
  std::size_t pos = 0;
  for (std::size_t b = 0; b < m; ++b) {
    nominal_end += base + (b < extra ? 1 : 0);
    std::size_t end = b + 1 == m ? n : std::max(nominal_end, pos);
    while (end < n && end > pos && values[order[end]] == values[order[end - 1]]) ++end;
    for (std::size_t r = pos; r < end; ++r) bin[order[r]] = b;
    pos = end;
  }
  return bin;
}

inline BinStats bin_channel(const ChannelData& ch, BinningScheme scheme) {
  const std::size_t n = ch.values.size();
  const auto bin = assign_bins(ch.values, scheme);
  BinStats out;
  out.total = n;
  out.bins.resize(scheme.bins);
  std::vector<double> sum_v(scheme.bins, 0.0), sum_t(scheme.bins, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    auto& b = out.bins[bin[i]];
    ++b.count;
    sum_v[bin[i]] += ch.values[i];
    sum_t[bin[i]] += ch.targets[i];
  }
  for (std::size_t k = 0; k < scheme.bins; ++k) {
    auto& b = out.bins[k];
    if (b.empty()) continue;
    const double c = static_cast<double>(b.count);
    b.confidence = sum_v[k] / c;
    b.accuracy = sum_t[k] / c;
    b.frequency = c / static_cast<double>(n);
    b.accuracy_variance = b.accuracy * (1.0 - b.accuracy);
  }
  for (std::size_t i = 0; i < n; ++i) {
    auto& b = out.bins[bin[i]];
    const double d = ch.values[i] - b.confidence;
    b.confidence_variance += d * d / static_cast<double>(b.count);
  }
  return out;
}

inline void check_binning(BinningScheme scheme) {
  require(scheme.bins >= 1, ErrorKind::config, "bin count must be at least 1");
}

inline void check_p(double p) {
  require(std::isfinite(p) && p >= 1.0, ErrorKind::config, "exponent p must be >= 1");
}

// Sum over non-empty bins of frequency * |conf - acc|^p.
inline double binned_power_sum(const BinStats& stats, double p) {
  double total = 0.0;
  for (const auto& b : stats.bins) {
    if (!b.empty()) total += b.frequency * std::pow(std::abs(b.confidence - b.accuracy), p);
  }
  return total;
}

}  // namespace detail

inline BinStats bin_stats(const LabeledPredictions& data, BinningScheme scheme, Channel channel = Channel::top_label()) {
  require(!data.empty(), ErrorKind::validation, "binning an empty dataset");
  detail::check_binning(scheme);
  if (channel.class_index) {
    require(*channel.class_index < data.classes(), ErrorKind::index, "channel class out of range");
  }
  return detail::bin_channel(detail::extract_channel(data, channel), scheme);
}

/// Expected calibration error: sum_i p_i |conf_i - acc_i| over the top-label channel.
inline double ece(const LabeledPredictions& data, BinningScheme scheme = equal_width(15)) {
  return detail::binned_power_sum(bin_stats(data, scheme), 1.0);
}

/// Binned top-label calibration error. With `debias` (p = 2 only) each bin's squared
/// gap is reduced by acc(1-acc)/(n_i-1) and the total is clamped at zero.
inline double tce_p(const LabeledPredictions& data, double p, BinningScheme scheme, bool debias = false) {
  detail::check_p(p);
  require(!debias || p == 2.0, ErrorKind::unsupported, "debiased TCE is only defined for p = 2");
  const BinStats stats = bin_stats(data, scheme);
  if (!debias) return std::pow(detail::binned_power_sum(stats, p), 1.0 / p);
  double total = 0.0;
  for (const auto& b : stats.bins) {
    if (b.empty()) continue;
    const double gap = b.confidence - b.accuracy;
    const double correction = b.count > 1 ? b.accuracy_variance / static_cast<double>(b.count - 1) : 0.0;
    total += b.frequency * (gap * gap - correction);
  }
  return std::sqrt(std::max(total, 0.0));
}

/// Binned class-wise calibration error, unweighted sum over the n class channels.
inline double cwce_p(const LabeledPredictions& data, double p, BinningScheme scheme) {
  detail::check_p(p);
  require(!data.empty(), ErrorKind::validation, "binning an empty dataset");
  detail::check_binning(scheme);
  double total = 0.0;
  for (ClassIndex k = 0; k < data.classes(); ++k) {
    total += detail::binned_power_sum(detail::bin_channel(detail::extract_channel(data, Channel::of_class(k)), scheme), p);
  }
  return std::pow(total, 1.0 / p);
}

/// Kolmogorov-Smirnov calibration error: the largest absolute partial sum of
/// (confidence - correct)/N in ascending confidence order. Partial sums are taken
/// at the end of each run of tied confidences.
inline double ks(const LabeledPredictions& data) {
  require(!data.empty(), ErrorKind::validation, "KS of an empty dataset");
  const auto ch = detail::extract_channel(data, Channel::top_label());
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return ch.values[a] < ch.values[b]; });
  const double n = static_cast<double>(data.size());
  double running = 0.0;
  double best = 0.0;
  for (std::size_t r = 0; r < order.size(); ++r) {
    running += (ch.values[order[r]] - ch.targets[order[r]]) / n;
    const bool run_ends = r + 1 == order.size() || ch.values[order[r + 1]] != ch.values[order[r]];
    if (run_ends) best = std::max(best, std::abs(running));
  }
  return best;
}

/// Silverman's rule on the top-label confidences; 0.01 when they have no spread.
inline double silverman_bandwidth(std::span<const double> values) {
  const auto stats = mean_and_se(values);
  if (!(stats.sd > 0.0)) return 0.01;
  return 1.06 * stats.sd * std::pow(static_cast<double>(values.size()), -0.2);
}

/// Top-label TCE_p through Nadaraya-Watson regression of correctness on confidence
/// with a Gaussian kernel. `bandwidth` empty means Silverman's rule.
inline double kde_tce(const LabeledPredictions& data, double p, std::optional<double> bandwidth = std::nullopt) {
  detail::check_p(p);
  require(data.size() >= 10, ErrorKind::validation, "KDE estimator needs at least 10 rows");
  const auto ch = detail::extract_channel(data, Channel::top_label());
  const double h = bandwidth ? *bandwidth : silverman_bandwidth(ch.values);
  require(std::isfinite(h) && h > 0.0, ErrorKind::config, "bandwidth must be positive");

  const std::size_t n = data.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return ch.values[a] < ch.values[b]; });
  std::vector<double> sorted_v(n), sorted_t(n);
  for (std::size_t r = 0; r < n; ++r) {
    sorted_v[r] = ch.values[order[r]];
    sorted_t[r] = ch.targets[order[r]];
  }
  // Kernel weights beyond 10 bandwidths are below 1e-21 and skipped.
  const double cutoff = 10.0 * h;
  std::vector<double> terms(n);
  std::size_t lo = 0, hi = 0;
  for (std::size_t r = 0; r < n; ++r) {
    const double c = sorted_v[r];
    while (sorted_v[lo] < c - cutoff) ++lo;
    while (hi < n && sorted_v[hi] <= c + cutoff) ++hi;
    double num = 0.0, den = 0.0;
    for (std::size_t j = lo; j < hi; ++j) {
      const double u = (c - sorted_v[j]) / h;
      const double w = std::exp(-0.5 * u * u);
      num += w * sorted_t[j];
      den += w;
    }
    terms[r] = std::pow(std::abs(c - num / den), p);
  }
  return std::pow(mean(terms), 1.0 / p);
}

inline double laplacian_kernel(double a, double b, double nu) { return std::exp(-std::abs(a - b) / nu); }

/// Maximum mean calibration error (biased V-statistic) with a Laplacian kernel.
inline double mmce(const LabeledPredictions& data, double nu = 0.4) {
  require(data.size() >= 2, ErrorKind::validation, "MMCE needs at least 2 rows");
  require(std::isfinite(nu) && nu > 0.0, ErrorKind::config, "kernel width must be positive");
  const auto ch = detail::extract_channel(data, Channel::top_label());
  const std::size_t n = data.size();
  std::vector<double> rows(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double ri = ch.values[i] - ch.targets[i];
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      s += (ch.values[j] - ch.targets[j]) * laplacian_kernel(ch.values[i], ch.values[j], nu);
    }
    rows[i] = ri * s;
  }
  const double nn = static_cast<double>(n);
  return std::sqrt(std::max(pairwise_sum(rows) / (nn * nn), 0.0));
}

namespace detail {

inline double skce_pair(std::span<const double> p, ClassIndex yp, std::span<const double> q, ClassIndex yq,
                        double inv_two_nu_sq) {
  double dist = 0.0, inner = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double d = p[k] - q[k];
    dist += d * d;
    inner += (p[k] - (k == yp ? 1.0 : 0.0)) * (q[k] - (k == yq ? 1.0 : 0.0));
  }
  return std::exp(-dist * inv_two_nu_sq) * inner;
}

// Runs `row(i)` for every i, spreading rows over `threads` workers. Each row is
// written to its own slot, so the result does not depend on the split.
template <typename RowFn>
std::vector<double> parallel_rows(std::size_t n, std::size_t threads, RowFn&& row) {
  std::vector<double> out(n);
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) out[i] = row(i);
    return out;
  }
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      for (std::size_t i = t; i < n; i += threads) out[i] = row(i);
    });
  }
  for (auto& th : pool) th.join();
  return out;
}

}  // namespace detail

/// Unbiased U-statistic of the squared kernel calibration error with the
/// matrix kernel exp(-|p-q|^2 / (2 nu^2)) * I. Can be negative.
inline double skce(const LabeledPredictions& data, double nu = 1.0, std::size_t threads = 1) {
  require(data.size() >= 2, ErrorKind::validation, "SKCE needs at least 2 rows");
  require(std::isfinite(nu) && nu > 0.0, ErrorKind::config, "kernel width must be positive");
  const std::size_t n = data.size();
  const double inv = 1.0 / (2.0 * nu * nu);
  const auto rows = detail::parallel_rows(n, threads, [&](std::size_t i) {
    double s = 0.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      s += detail::skce_pair(data.prediction(i), data.label(i), data.prediction(j), data.label(j), inv);
    }
    return s;
  });
  const double nn = static_cast<double>(n);
  return 2.0 * pairwise_sum(rows) / (nn * (nn - 1.0));
}

// ---------------------------------------------------------------------------
// Configuration and dispatch
// ---------------------------------------------------------------------------

struct EstimatorConfig {
  std::string name = "ece";  // ece | tce_p | cwce_p | ks | kde_tce | mmce | skce | rbs
  double p = 2.0;
  BinningScheme binning = equal_width(15);
  bool debias = false;
  std::optional<double> bandwidth;  // kde_tce; empty = Silverman
  std::optional<double> nu;         // mmce (0.4) / skce (1.0)
  std::string label;                // display name; defaults to `name`

  std::string display_name() const { return label.empty() ? name : label; }
};

inline const std::vector<std::string>& estimator_names() {
  static const std::vector<std::string> names = {"ece", "tce_p", "cwce_p", "ks", "kde_tce", "mmce", "skce", "rbs"};
  return names;
}

inline void validate(const EstimatorConfig& c) {
  const auto& names = estimator_names();
  require(std::find(names.begin(), names.end(), c.name) != names.end(), ErrorKind::config,
          "unknown estimator '" + c.name + "'");
  if (c.name == "tce_p" || c.name == "cwce_p" || c.name == "kde_tce") detail::check_p(c.p);
  if (c.name == "ece" || c.name == "tce_p" || c.name == "cwce_p") detail::check_binning(c.binning);
  require(!c.debias || (c.name == "tce_p" && c.p == 2.0), ErrorKind::config,
          "debias applies only to tce_p with p = 2");
  if (c.bandwidth) require(*c.bandwidth > 0.0, ErrorKind::config, "bandwidth must be positive");
  if (c.nu) require(*c.nu > 0.0, ErrorKind::config, "kernel width must be positive");
}

struct EstimateResult {
  double value = 0.0;
  std::size_t rows = 0;
  std::size_t empty_bins = 0;
  EstimatorConfig config;
};

inline EstimateResult estimate(const LabeledPredictions& data, const EstimatorConfig& c, std::size_t threads = 1) {
  validate(c);
  EstimateResult r;
  r.rows = data.size();
  r.config = c;
  if (c.name == "ece") {
    const auto stats = bin_stats(data, c.binning);
    r.value = detail::binned_power_sum(stats, 1.0);
    r.empty_bins = stats.empty_bins();
  } else if (c.name == "tce_p") {
    r.value = tce_p(data, c.p, c.binning, c.debias);
    r.empty_bins = bin_stats(data, c.binning).empty_bins();
  } else if (c.name == "cwce_p") {
    r.value = cwce_p(data, c.p, c.binning);
  } else if (c.name == "ks") {
    r.value = ks(data);
  } else if (c.name == "kde_tce") {
    r.value = kde_tce(data, c.p, c.bandwidth);
  } else if (c.name == "mmce") {
    r.value = mmce(data, c.nu.value_or(0.4));
  } else if (c.name == "skce") {
    r.value = skce(data, c.nu.value_or(1.0), threads);
  } else {
    r.value = rbs(data);
  }
  return r;
}

/// The estimator line-up used for the robustness and recalibration experiments.
inline std::vector<EstimatorConfig> standard_roster() {
  std::vector<EstimatorConfig> r;
  r.push_back({"cwce_p", 2.0, equal_width(15), false, {}, {}, "15b_cwce2"});
  r.push_back({"cwce_p", 2.0, equal_width(100), false, {}, {}, "100b_cwce2"});
  r.push_back({"ece", 1.0, equal_width(15), false, {}, {}, "ece"});
  r.push_back({"tce_p", 2.0, equal_width(100), false, {}, {}, "100b_tce2"});
  r.push_back({"tce_p", 2.0, equal_mass(15), true, {}, {}, "15b_d_tce2"});
  r.push_back({"kde_tce", 2.0, equal_width(15), false, {}, {}, "kde_tce2"});
  r.push_back({"ks", 1.0, equal_width(15), false, {}, {}, "ks"});
  r.push_back({"rbs", 2.0, equal_width(15), false, {}, {}, "rbs"});
  return r;
}

inline std::optional<EstimatorConfig> roster_entry(const std::string& label) {
  for (auto& c : standard_roster()) {
    if (c.label == label) return c;
  }
  return std::nullopt;
}

}  // namespace calibra
