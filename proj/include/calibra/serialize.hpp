#pragma once

// JSON forms of recalibration maps, finite joints, reports and training curves.
// Real parameters are written as 17-significant-digit decimal strings.

#include <json.hpp>

#include <ostream>
#include <string>
#include <vector>

#include "calibra/core.hpp"
#include "calibra/error.hpp"
#include "calibra/harness.hpp"
#include "calibra/joint.hpp"
#include "calibra/numeric.hpp"
#include "calibra/recal.hpp"
#include "calibra/regress.hpp"

namespace calibra {

using Json = nlohmann::json;

namespace detail {

inline Json decimals(std::span<const double> xs) {
  Json a = Json::array();
  for (double x : xs) a.push_back(format_decimal(x));
  return a;
}

inline double read_decimal(const Json& j) {
  if (j.is_string()) return parse_decimal(j.get<std::string>());
  require(j.is_number(), ErrorKind::parse, "expected a decimal string");
  return j.get<double>();
}

inline std::vector<double> read_decimals(const Json& j) {
  require(j.is_array(), ErrorKind::parse, "expected an array of decimals");
  std::vector<double> out;
  for (const auto& x : j) out.push_back(read_decimal(x));
  return out;
}

inline const Json& field(const Json& j, const char* key) {
  require(j.is_object() && j.contains(key), ErrorKind::parse, std::string("missing field '") + key + "'");
  return j.at(key);
}

}  // namespace detail

inline Json to_json(const RecalMap& map) {
  Json params = Json::object();
  std::visit(
      [&](const auto& m) {
        using M = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<M, TemperatureMap>) {
          params["temperature"] = format_decimal(m.temperature);
        } else if constexpr (std::is_same_v<M, EtsMap>) {
          params["weights"] = detail::decimals(m.weights);
          params["temperature"] = format_decimal(m.temperature);
        } else if constexpr (std::is_same_v<M, TfMulticlassMap>) {
          Json rows = Json::array();
          for (const auto& r : m.table) rows.push_back(detail::decimals(r.values()));
          params["table"] = rows;
        } else if constexpr (std::is_same_v<M, TfBinaryMap>) {
          params["lo"] = format_decimal(m.lo);
          params["hi"] = format_decimal(m.hi);
        } else if constexpr (std::is_same_v<M, PlattVarianceMap>) {
          params["w"] = format_decimal(m.w);
          params["b"] = format_decimal(m.b);
        }
      },
      map);
  return Json{{"kind", map_name(map)}, {"parameters", params}};
}

inline RecalMap recal_map_from_json(const Json& j) {
  const std::string kind = detail::field(j, "kind").get<std::string>();
  const Json params = j.contains("parameters") ? j.at("parameters") : Json::object();
  RecalMap out;
  if (kind == "identity") out = IdentityMap{};
  else if (kind == "ts") out = TemperatureMap{detail::read_decimal(detail::field(params, "temperature"))};
  else if (kind == "ets") {
    const auto w = detail::read_decimals(detail::field(params, "weights"));
    require(w.size() == 3, ErrorKind::parse, "ETS needs 3 weights");
    out = EtsMap{{w[0], w[1], w[2]}, detail::read_decimal(detail::field(params, "temperature"))};
  } else if (kind == "tf") {
    TfMulticlassMap m;
    for (const auto& row : detail::field(params, "table")) m.table.emplace_back(detail::read_decimals(row));
    out = std::move(m);
  } else if (kind == "tf_binary") {
    out = TfBinaryMap{detail::read_decimal(detail::field(params, "lo")), detail::read_decimal(detail::field(params, "hi"))};
  } else if (kind == "platt_variance") {
    out = PlattVarianceMap{detail::read_decimal(detail::field(params, "w")), detail::read_decimal(detail::field(params, "b"))};
  } else {
    fail(ErrorKind::parse, "unknown map kind '" + kind + "'");
  }
  validate(out);
  return out;
}

inline Json to_json(const FiniteJointModel& joint) {
  Json support = Json::array();
  for (const auto& a : joint.atoms()) {
    support.push_back({{"z", detail::decimals(a.prediction.values())},
                       {"pi", format_decimal(a.weight)},
                       {"q", detail::decimals(a.conditional.values())}});
  }
  return Json{{"support", support}};
}

inline FiniteJointModel joint_from_json(const Json& j) {
  std::vector<JointAtom> atoms;
  for (const auto& a : detail::field(j, "support")) {
    atoms.push_back({ProbVector(detail::read_decimals(detail::field(a, "z"))), detail::read_decimal(detail::field(a, "pi")),
                     ProbVector(detail::read_decimals(detail::field(a, "q")))});
  }
  return FiniteJointModel(std::move(atoms));
}

inline Json to_json(const ReportRow& r) {
  Json j = {{"estimator", r.estimator}, {"map", r.map},   {"quantity", r.quantity},     {"n", r.n},
            {"mean", r.defined ? Json(r.mean) : Json()}, {"se", r.defined ? Json(r.se) : Json()},
            {"replicates", r.replicates},              {"defined", r.defined}};
  return j;
}

inline Json to_json(const SweepReport& report) {
  Json rows = Json::array();
  for (const auto& r : report.rows) rows.push_back(to_json(r));
  Json maps = Json::array();
  for (const auto& m : report.fitted_maps) maps.push_back({{"name", m.name}, {"map", to_json(m.map)}});
  Json j = {{"rows", rows}, {"sizes", report.sizes}, {"pool_size", report.pool_size},
            {"master_seed", report.master_seed}, {"maps", maps}};
  if (report.validation_fingerprint) j["validation_fingerprint"] = *report.validation_fingerprint;
  return j;
}

inline Json to_json(const EstimatorConfig& c) {
  Json j = {{"name", c.name},
            {"label", c.display_name()},
            {"p", c.p},
            {"binning", {{"kind", c.binning.kind == BinningKind::equal_width ? "equal_width" : "equal_mass"}, {"bins", c.binning.bins}}},
            {"debias", c.debias}};
  j["bandwidth"] = c.bandwidth ? Json(*c.bandwidth) : Json("auto");
  if (c.nu) j["nu"] = *c.nu;
  return j;
}

inline Json to_json(const TrainingRecord& r) {
  return {{"iter", r.iteration},        {"dss_train", r.dss_train},       {"dss_val", r.dss_val},
          {"dss_val_cal", r.dss_val_cal}, {"dss_test", r.dss_test},       {"dss_test_cal", r.dss_test_cal},
          {"avg_var_raw", r.avg_var_raw}, {"avg_var_cal", r.avg_var_cal}, {"test_mse", r.test_mse},
          {"skce", r.skce},               {"skce_cal", r.skce_cal}};
}

inline Json to_json(const RegressionDiagnostics& d) {
  return {{"avg_var", d.avg_var}, {"mse", d.mse}, {"se_var_ratio_mean", d.ratio_mean}, {"se_var_ratio_sd", d.ratio_sd}, {"dss", d.dss}};
}

/// One JSON object per line.
inline void write_training_curve(std::ostream& out, const std::vector<TrainingRecord>& curve) {
  for (const auto& r : curve) out << to_json(r).dump() << '\n';
}

}  // namespace calibra
