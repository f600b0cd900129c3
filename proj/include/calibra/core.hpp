#pragma once

// Probability-simplex primitives, the labeled-prediction container and CSV I/O.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "calibra/error.hpp"
#include "calibra/numeric.hpp"

namespace calibra {

inline constexpr double kSimplexTolerance = 1e-9;
inline constexpr double kIngestTolerance = 1e-6;

using ClassIndex = std::size_t;

namespace detail {

inline void validate_simplex(std::span<const double> p, double tol) {
  require(p.size() >= 2, ErrorKind::validation, "probability vector needs at least 2 entries");
  double sum = 0.0;
  for (double x : p) {
    if (!(std::isfinite(x) && x >= 0.0 && x <= 1.0 + tol)) {
      fail(ErrorKind::validation, "probability entry outside [0,1]: " + format_decimal(x));
    }
    sum += x;
  }
  if (!(std::abs(sum - 1.0) <= tol)) fail(ErrorKind::validation, "probability vector sums to " + format_decimal(sum));
}

inline std::vector<double> softmax(std::span<const double> z) {
  const double m = *std::max_element(z.begin(), z.end());
  std::vector<double> out(z.size());
  double total = 0.0;
  for (std::size_t k = 0; k < z.size(); ++k) {
    out[k] = std::exp(z[k] - m);
    total += out[k];
  }
  for (double& x : out) x /= total;
  return out;
}

// softmax(log p / T). Zero entries stay zero.
inline void temper_row(std::span<const double> p, double T, std::span<double> out) {
  double top = 0.0;
  for (double x : p) top = std::max(top, x);
  const double log_top = std::log(top);
  double total = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    out[k] = p[k] > 0.0 ? std::exp((std::log(p[k]) - log_top) / T) : 0.0;
    total += out[k];
  }
  for (std::size_t k = 0; k < p.size(); ++k) out[k] /= total;
}

}  // namespace detail

/// A categorical distribution on n >= 2 classes.
class ProbVector {
 public:
  explicit ProbVector(std::vector<double> values) : values_(std::move(values)) {
    detail::validate_simplex(values_, kSimplexTolerance);
  }

  std::size_t size() const noexcept { return values_.size(); }
  double operator[](std::size_t k) const { return values_[k]; }
  std::span<const double> values() const noexcept { return values_; }
  const std::vector<double>& vector() const noexcept { return values_; }

  friend bool operator==(const ProbVector&, const ProbVector&) = default;

 private:
  std::vector<double> values_;
};

class LogitVector {
 public:
  explicit LogitVector(std::vector<double> values) : values_(std::move(values)) {
    require(!values_.empty(), ErrorKind::validation, "empty logit vector");
    for (double x : values_) require(std::isfinite(x), ErrorKind::validation, "non-finite logit");
  }

  std::size_t size() const noexcept { return values_.size(); }
  std::span<const double> values() const noexcept { return values_; }

 private:
  std::vector<double> values_;
};

// Max-shifted for stability; shift invariant.
inline ProbVector softmax(const LogitVector& logits) { return ProbVector(detail::softmax(logits.values())); }

inline ProbVector one_hot(ClassIndex label, std::size_t n) {
  require(label < n, ErrorKind::index,
          "label " + std::to_string(label) + " out of range for " + std::to_string(n) + " classes");
  std::vector<double> v(n, 0.0);
  v[label] = 1.0;
  return ProbVector(std::move(v));
}

struct TopLabel {
  ClassIndex index = 0;
  double confidence = 0.0;
};

// Ties go to the lowest index.
inline TopLabel top_label(std::span<const double> p) {
  TopLabel best{0, p[0]};
  for (std::size_t k = 1; k < p.size(); ++k) {
    if (p[k] > best.confidence) best = {k, p[k]};
  }
  return best;
}

inline TopLabel top_label(const ProbVector& p) { return top_label(p.values()); }

/// N predictions on n classes with their integer labels, stored row-major.
class LabeledPredictions {
 public:
  LabeledPredictions() = default;

  LabeledPredictions(const std::vector<ProbVector>& predictions, std::vector<ClassIndex> labels)
      : labels_(std::move(labels)) {
    require(!predictions.empty(), ErrorKind::validation, "dataset must contain at least one row");
    require(predictions.size() == labels_.size(), ErrorKind::validation,
            "predictions and labels differ in length");
    classes_ = predictions.front().size();
    probs_.reserve(predictions.size() * classes_);
    for (const auto& p : predictions) {
      require(p.size() == classes_, ErrorKind::validation, "predictions have differing class counts");
      probs_.insert(probs_.end(), p.values().begin(), p.values().end());
    }
    check_labels();
  }

  /// Row-major probabilities; every row is validated against the simplex.
  LabeledPredictions(std::size_t classes, std::vector<double> probs, std::vector<ClassIndex> labels)
      : classes_(classes), probs_(std::move(probs)), labels_(std::move(labels)) {
    require(classes_ >= 2, ErrorKind::validation, "need at least 2 classes");
    require(!labels_.empty(), ErrorKind::validation, "dataset must contain at least one row");
    require(probs_.size() == labels_.size() * classes_, ErrorKind::validation,
            "probability matrix does not match label count");
    for (std::size_t i = 0; i < size(); ++i) detail::validate_simplex(prediction(i), kSimplexTolerance);
    check_labels();
  }

  std::size_t size() const noexcept { return labels_.size(); }
  std::size_t classes() const noexcept { return classes_; }
  bool empty() const noexcept { return labels_.empty(); }

  std::span<const double> prediction(std::size_t i) const {
    return std::span<const double>(probs_).subspan(i * classes_, classes_);
  }
  ClassIndex label(std::size_t i) const { return labels_[i]; }
  std::span<const ClassIndex> labels() const noexcept { return labels_; }
  std::span<const double> matrix() const noexcept { return probs_; }

  LabeledPredictions subset(std::span<const std::size_t> rows) const {
    LabeledPredictions out;
    out.classes_ = classes_;
    out.probs_.reserve(rows.size() * classes_);
    out.labels_.reserve(rows.size());
    for (std::size_t r : rows) {
      auto p = prediction(r);
      out.probs_.insert(out.probs_.end(), p.begin(), p.end());
      out.labels_.push_back(labels_[r]);
    }
    return out;
  }

  /// Same labels, new prediction matrix (rows already on the simplex).
  LabeledPredictions with_predictions(std::vector<double> probs) const {
    require(probs.size() == probs_.size(), ErrorKind::validation, "prediction matrix size mismatch");
    LabeledPredictions out;
    out.classes_ = classes_;
    out.probs_ = std::move(probs);
    out.labels_ = labels_;
    return out;
  }

 private:
  void check_labels() const {
    for (ClassIndex y : labels_) {
      if (y >= classes_) {
        fail(ErrorKind::validation,
             "label " + std::to_string(y) + " out of range for " + std::to_string(classes_) + " classes");
      }
    }
  }

  std::size_t classes_ = 0;
  std::vector<double> probs_;
  std::vector<ClassIndex> labels_;
};

struct Split {
  LabeledPredictions validation;
  LabeledPredictions test;
};

inline Split make_split(LabeledPredictions validation, LabeledPredictions test) {
  require(validation.classes() == test.classes(), ErrorKind::validation,
          "validation and test sets have different class counts");
  return Split{std::move(validation), std::move(test)};
}

enum class InputFormat { logits, probs };

namespace detail {

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline bool parse_field(std::string_view s, double& out) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && !s.empty();
}

inline std::string at_line(std::size_t line) { return "line " + std::to_string(line) + ": "; }

}  // namespace detail

/// Reads `c0,...,c{n-1},label`. Logit rows are softmaxed; probability rows within
/// 1e-6 of the simplex are renormalized, anything further off is rejected.
inline LabeledPredictions read_csv(std::istream& in, InputFormat format) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!detail::trim(line).empty()) break;
  }
  require(!detail::trim(line).empty(), ErrorKind::parse, "empty CSV input");
  const auto header = detail::split_commas(line);
  require(header.size() >= 3, ErrorKind::parse, detail::at_line(line_no) + "header needs c0,c1,...,label");
  const std::size_t n = header.size() - 1;
  for (std::size_t k = 0; k < n; ++k) {
    require(detail::trim(header[k]) == "c" + std::to_string(k), ErrorKind::parse,
            detail::at_line(line_no) + "expected column c" + std::to_string(k));
  }
  require(detail::trim(header[n]) == "label", ErrorKind::parse, detail::at_line(line_no) + "last column must be label");

  std::vector<double> probs;
  std::vector<ClassIndex> labels;
  std::vector<double> row(n);
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split_commas(line);
    require(fields.size() == n + 1, ErrorKind::parse,
            detail::at_line(line_no) + "expected " + std::to_string(n + 1) + " fields, got " +
                std::to_string(fields.size()));
    for (std::size_t k = 0; k < n; ++k) {
      require(detail::parse_field(fields[k], row[k]) && std::isfinite(row[k]), ErrorKind::parse,
              detail::at_line(line_no) + "bad number '" + std::string(fields[k]) + "'");
    }
    double label_value = 0.0;
    require(detail::parse_field(fields[n], label_value) && label_value == std::floor(label_value), ErrorKind::parse,
            detail::at_line(line_no) + "bad label '" + std::string(fields[n]) + "'");
    require(label_value >= 0.0 && label_value < static_cast<double>(n), ErrorKind::validation,
            detail::at_line(line_no) + "label " + std::string(detail::trim(fields[n])) + " out of range");

    if (format == InputFormat::logits) {
      const auto p = detail::softmax(row);
      probs.insert(probs.end(), p.begin(), p.end());
    } else {
      double sum = 0.0;
      for (double& x : row) {
        require(x >= -kIngestTolerance && x <= 1.0 + kIngestTolerance, ErrorKind::validation,
                detail::at_line(line_no) + "probability outside [0,1]");
        x = std::clamp(x, 0.0, 1.0);
        sum += x;
      }
      require(std::abs(sum - 1.0) <= kIngestTolerance, ErrorKind::validation,
              detail::at_line(line_no) + "probabilities sum to " + format_decimal(sum));
      for (double x : row) probs.push_back(x / sum);
    }
    labels.push_back(static_cast<ClassIndex>(label_value));
  }
  require(!labels.empty(), ErrorKind::validation, "CSV contains no data rows");
  return LabeledPredictions(n, std::move(probs), std::move(labels));
}

inline LabeledPredictions load_csv(const std::string& path, InputFormat format) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::parse, "cannot open " + path);
  return read_csv(in, format);
}

inline void write_csv(std::ostream& out, const LabeledPredictions& data) {
  for (std::size_t k = 0; k < data.classes(); ++k) out << 'c' << k << ',';
  out << "label\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (double x : data.prediction(i)) out << format_decimal(x) << ',';
    out << data.label(i) << '\n';
  }
}

}  // namespace calibra
