// calibra: estimate, recalibrate, simulate. Every run prints one JSON document
// {schema_version, command, result, manifest} on stdout.

#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <iterator>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "calibra/calibra.hpp"

using namespace calibra;

namespace {

constexpr int kSchemaVersion = 1;

enum class LogLevel { error = 0, info = 1, debug = 2 };
LogLevel g_log = LogLevel::error;

void log(LogLevel level, const std::string& msg) {
  if (level <= g_log) std::cerr << "calibra: " << msg << '\n';
}

void configure_logging() {
  const char* env = std::getenv("CALIBRA_LOG");
  if (!env || !*env) return;
  const std::string v(env);
  if (v == "error") g_log = LogLevel::error;
  else if (v == "info") g_log = LogLevel::info;
  else if (v == "debug") g_log = LogLevel::debug;
  else fail(ErrorKind::config, "CALIBRA_LOG must be error, info or debug, not '" + v + "'");
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::parse, "cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  require(EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) == 1, ErrorKind::numerical,
          "SHA-256 failed");
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", digest[i]);
    hex += buf;
  }
  return hex;
}

// Inputs are hashed from the same bytes that get parsed.
struct Inputs {
  Json digests = Json::array();

  std::string load(const std::string& path) {
    std::string bytes = read_file(path);
    digests.push_back({{"path", path}, {"sha256", sha256_hex(bytes)}});
    log(LogLevel::info, "read " + path + " (" + std::to_string(bytes.size()) + " bytes)");
    return bytes;
  }

  LabeledPredictions predictions(const std::string& path, InputFormat format) {
    std::istringstream in(load(path));
    return read_csv(in, format);
  }

  Json json(const std::string& path) {
    try {
      return Json::parse(load(path));
    } catch (const Json::exception& e) {
      fail(ErrorKind::parse, path + ": " + e.what());
    }
  }
};

InputFormat parse_format(const std::string& s) { return s == "logits" ? InputFormat::logits : InputFormat::probs; }

BinningScheme parse_binning(const std::string& kind, std::size_t bins) {
  return kind == "equal_mass" ? equal_mass(bins) : equal_width(bins);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  for (auto f : detail::split_commas(s)) {
    const auto t = detail::trim(f);
    if (!t.empty()) out.emplace_back(t);
  }
  return out;
}

// A roster label (15b_d_tce2, ...) or a bare estimator name with default settings.
EstimatorConfig estimator_by_name(const std::string& name) {
  if (auto r = roster_entry(name)) return *r;
  EstimatorConfig c;
  c.name = name;
  validate(c);
  return c;
}

std::vector<EstimatorConfig> estimator_list(const std::string& s) {
  std::vector<EstimatorConfig> out;
  if (s.empty()) return standard_roster();
  for (const auto& name : split_list(s)) out.push_back(estimator_by_name(name));
  return out;
}

// "lo..hi" expands to log2 ticks, anything else is a comma list.
std::vector<std::size_t> parse_grid(const std::string& s, std::size_t ticks) {
  auto to_size = [](std::string_view v) {
    double x = 0.0;
    require(detail::parse_field(v, x) && x >= 1 && x == std::floor(x), ErrorKind::config,
            "bad sample size '" + std::string(v) + "'");
    return static_cast<std::size_t>(x);
  };
  const auto dots = s.find("..");
  if (dots != std::string::npos) return log2_ticks(to_size(s.substr(0, dots)), to_size(s.substr(dots + 2)), ticks);
  std::vector<std::size_t> out;
  for (const auto& f : split_list(s)) out.push_back(to_size(f));
  require(!out.empty(), ErrorKind::config, "empty sample-size grid");
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorKind::config, "cannot write " + path);
  out << text;
}

template <typename Writer>
void write_with(const std::string& path, Writer&& w) {
  if (path.empty()) return;
  std::ostringstream s;
  w(s);
  write_text(path, s.str());
}

// Every option of the subcommand with its effective value.
Json config_echo(const CLI::App& sub) {
  Json j = Json::object();
  for (const CLI::Option* opt : sub.get_options()) {
    const std::string name = opt->get_name(false, true);
    if (name.empty() || opt->get_lnames().empty() || opt->get_lnames().front() == "help") continue;
    const std::string key = opt->get_lnames().front();
    if (opt->get_expected_min() == 0) {
      j[key] = opt->count() > 0;
    } else if (opt->count() > 0) {
      const auto& r = opt->results();
      j[key] = r.size() == 1 ? Json(r.front()) : Json(r);
    } else {
      const std::string d = opt->get_default_str();
      j[key] = d.empty() ? Json() : Json(d);
    }
  }
  return j;
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config:
    case ErrorKind::unsupported: return 2;
    case ErrorKind::validation:
    case ErrorKind::index:
    case ErrorKind::parse: return 3;
    case ErrorKind::numerical: return 4;
  }
  return 1;
}

struct Common {
  std::optional<std::uint64_t> seed;
  std::size_t threads = 1;
};

std::uint64_t need_seed(const Common& c, const std::string& command) {
  require(c.seed.has_value(), ErrorKind::config, command + " is stochastic and needs --seed");
  return *c.seed;
}

// ---------------------------------------------------------------------------

struct EstimateArgs {
  std::string input, format = "probs", estimator = "ece", binning = "equal_width";
  std::size_t bins = 15;
  double p = 2.0;
  bool debias = false;
  std::optional<double> bandwidth, nu;
};

Json run_estimate(const EstimateArgs& a, const Common& c, Inputs& in) {
  const auto data = in.predictions(a.input, parse_format(a.format));
  EstimatorConfig cfg;
  if (auto r = roster_entry(a.estimator)) {
    cfg = *r;
  } else {
    cfg.name = a.estimator;
    cfg.p = a.p;
    cfg.binning = parse_binning(a.binning, a.bins);
    cfg.debias = a.debias;
    cfg.bandwidth = a.bandwidth;
    cfg.nu = a.nu;
  }
  const auto r = estimate(data, cfg, c.threads);
  log(LogLevel::info, cfg.display_name() + " = " + format_decimal(r.value));
  return {{"estimator", to_json(cfg)}, {"value", r.value}, {"rows", r.rows}, {"classes", data.classes()},
          {"empty_bins", r.empty_bins}};
}

double top_label_accuracy(const LabeledPredictions& d) {
  std::size_t hits = 0;
  for (std::size_t i = 0; i < d.size(); ++i) hits += top_label(d.prediction(i)).index == d.label(i);
  return static_cast<double>(hits) / static_cast<double>(d.size());
}

struct RecalibrateArgs {
  std::string val, test, method = "ts", estimators, format = "probs", map_out;
};

Json run_recalibrate(const RecalibrateArgs& a, const Common& c, Inputs& in) {
  const auto split = make_split(in.predictions(a.val, parse_format(a.format)), in.predictions(a.test, parse_format(a.format)));
  const auto map = fit_map(a.method, split.validation);
  log(LogLevel::info, "fitted " + map_name(map) + " on " + std::to_string(split.validation.size()) + " rows");
  const auto after = apply_map(map, split.test);
  Json rows = Json::array();
  for (const auto& e : estimator_list(a.estimators)) {
    const auto imp = improvement_from(estimate(split.test, e, c.threads).value, estimate(after, e, c.threads).value);
    rows.push_back({{"estimator", e.display_name()}, {"before", imp.before}, {"after", imp.after},
                    {"improvement", imp.plain}, {"improvement_squared", imp.squared}});
  }
  const Json m = to_json(map);
  if (!a.map_out.empty()) write_text(a.map_out, m.dump(2) + "\n");
  return {{"map", m}, {"validation_fingerprint", fingerprint(split.validation)}, {"test_rows", split.test.size()},
          {"accuracy_before", top_label_accuracy(split.test)}, {"accuracy_after", top_label_accuracy(after)},
          {"rows", rows}};
}

struct SweepArgs {
  std::string input, joint, format = "probs", estimators, methods, replicates, csv, plot_data;
  std::size_t pool_size = 10000, min_size = 100, max_size = 0, ticks = 10, val_size = 0;
  bool relative = false;
  std::optional<double> temper_at;
};

Json run_sweep(const SweepArgs& a, const Common& c, Inputs& in) {
  const auto seed = need_seed(c, "sweep");
  require(a.input.empty() != a.joint.empty(), ErrorKind::config, "give exactly one of --input and --joint");
  LabeledPredictions pool = a.input.empty() ? sample(joint_from_json(in.json(a.joint)), a.pool_size, derive_seed(seed, 0x706f6f6cULL))
                                            : in.predictions(a.input, parse_format(a.format));
  if (a.temper_at) pool = temper(pool, *a.temper_at);
  SweepConfig cfg;
  cfg.min_size = a.min_size;
  cfg.max_size = a.max_size;
  cfg.ticks = a.ticks;
  cfg.master_seed = seed;
  cfg.threads = c.threads;
  cfg.estimators = estimator_list(a.estimators);
  if (!a.replicates.empty()) cfg.replicates = parse_grid(a.replicates, 1);
  else if (cfg.ticks != default_replicate_schedule().size()) cfg.replicates = {default_replicate_schedule().front()};
  SweepReport report;
  if (a.methods.empty()) {
    report = sweep(pool, cfg);
  } else {
    require(a.val_size > 0, ErrorKind::config, "improvement sweeps need --val-size");
    report = improvement_sweep(split_pool(pool, a.val_size, derive_seed(seed, 0x73706c6974ULL)), split_list(a.methods), cfg);
  }
  if (a.relative) report = relative_bias(report);
  write_with(a.csv, [&](std::ostream& o) { write_report_csv(o, report); });
  write_with(a.plot_data, [&](std::ostream& o) { write_plot_data(o, report); });
  return to_json(report);
}

struct BiasArgs {
  std::size_t classes = 100, atoms = 20000, replicates = 500, bins = 15, ticks = 8;
  double scale = 1.0;
  std::string grid = "100..10000", csv;
};

Json run_simulate_bias(const BiasArgs& a, const Common& c) {
  const auto seed = need_seed(c, "simulate-bias");
  const LogisticNormalModel model(a.classes, a.scale, derive_seed(seed, 1));
  const auto joint = logistic_normal_joint(model, a.atoms, derive_seed(seed, 2));
  const auto sizes = parse_grid(a.grid, a.ticks);
  log(LogLevel::info, "simulating " + std::to_string(sizes.size()) + " sizes x " + std::to_string(a.replicates) + " replicates");
  const auto pts = simulate_ece_bias(joint, sizes, a.replicates, a.bins, derive_seed(seed, 3), c.threads);
  write_with(a.csv, [&](std::ostream& o) { write_bias_csv(o, pts); });
  Json rows = Json::array();
  for (const auto& p : pts) {
    rows.push_back({{"n", p.n}, {"mc_mean", p.mc_mean}, {"mc_se", p.mc_se}, {"replicates", p.replicates}, {"mu", p.mu},
                    {"true_ece", p.true_ece}});
  }
  return {{"rows", rows}, {"true_ece", pts.empty() ? 0.0 : pts.front().true_ece}};
}

struct CounterexampleArgs {
  std::size_t classes = 100, support = 10;
  double eps = 0.01;
  std::string joint_out;
};

Json run_counterexample(const CounterexampleArgs& a, const Common& c) {
  const auto joint = counterexample(a.classes, a.eps, a.support, need_seed(c, "counterexample"));
  const Json serialized = to_json(joint);
  if (!a.joint_out.empty()) write_text(a.joint_out, serialized.dump() + "\n");
  const Json table = {{"ce_2", true_ce_p(joint, 2)},      {"cwce_2", true_cwce_p(joint, 2)}, {"tce_2", true_tce_p(joint, 2)},
                      {"ece", true_ece(joint, 15)},       {"ks", true_ks(joint)},            {"mmce", true_mmce(joint)},
                      {"bound", std::sqrt(0.99 - 1.0 / static_cast<double>(a.classes))}};
  Json out = {{"errors", table}, {"atoms", joint.size()}};
  if (a.joint_out.empty()) out["joint"] = serialized;
  return out;
}

struct RegressArgs {
  std::size_t train = 100, val = 100, test = 100, hidden = 50, iterations = 2000, eval_every = 50;
  double lr = 1e-3, nu_p = 1.0, nu_y = 1.0;
  bool homoscedastic = false, noise_std = false;
  std::string curve;
};

Json run_regress_demo(const RegressArgs& a, const Common& c) {
  VarianceDemoConfig cfg;
  cfg.train_size = a.train;
  cfg.val_size = a.val;
  cfg.test_size = a.test;
  cfg.data.heteroscedastic = !a.homoscedastic;
  cfg.data.noise_is_std = a.noise_std;
  cfg.network.hidden = a.hidden;
  cfg.network.iterations = a.iterations;
  cfg.network.eval_every = a.eval_every;
  cfg.network.learning_rate = a.lr;
  cfg.nu_p = a.nu_p;
  cfg.nu_y = a.nu_y;
  const auto r = run_variance_demo(cfg, need_seed(c, "regress-demo"));
  write_with(a.curve, [&](std::ostream& o) { write_training_curve(o, r.curve); });
  Json out = {{"best", to_json(r.best)},
              {"map", to_json(r.best_map)},
              {"table_raw", to_json(r.test_raw)},
              {"table_calibrated", to_json(r.test_cal)}};
  if (a.curve.empty()) {
    Json curve = Json::array();
    for (const auto& rec : r.curve) curve.push_back(to_json(rec));
    out["curve"] = curve;
  }
  return out;
}

struct DecomposeArgs {
  std::string joint, input, format = "probs", score = "both";
};

// Empirical joint: one atom per distinct prediction, conditional = label frequencies.
FiniteJointModel empirical_joint(const LabeledPredictions& d) {
  std::vector<JointAtom> atoms;
  const double w = 1.0 / static_cast<double>(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    atoms.push_back({ProbVector(std::vector<double>(d.prediction(i).begin(), d.prediction(i).end())), w,
                     one_hot(d.label(i), d.classes())});
  }
  return FiniteJointModel(std::move(atoms)).merged();
}

Json run_decompose(const DecomposeArgs& a, Inputs& in) {
  require(a.input.empty() != a.joint.empty(), ErrorKind::config, "give exactly one of --input and --joint");
  const auto joint = a.joint.empty() ? empirical_joint(in.predictions(a.input, parse_format(a.format))) : joint_from_json(in.json(a.joint));
  std::vector<ClassificationScore> scores;
  if (a.score == "brier" || a.score == "both") scores.push_back(brier_score_rule());
  if (a.score == "log" || a.score == "both") scores.push_back(log_score_rule());
  Json rows = Json::array();
  for (const auto& s : scores) {
    const auto d = decompose(joint, s);
    rows.push_back({{"score", s.name}, {"entropy", d.entropy}, {"sharpness", d.sharpness}, {"calibration", d.calibration},
                    {"expected_score", d.expected_score}, {"residual", d.residual()}});
  }
  return {{"rows", rows}, {"atoms", joint.size()}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Calibration error estimation, recalibration and simulation"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* sub, bool stochastic) {
    if (stochastic) sub->add_option("--seed", common.seed, "Master seed (required)");
    sub->add_option("--threads", common.threads, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();
  };
  const auto formats = CLI::IsMember({"probs", "logits"});

  EstimateArgs est;
  auto* s_est = app.add_subcommand("estimate", "One calibration-error estimate on a CSV of predictions");
  s_est->add_option("--input", est.input, "CSV c0..c{n-1},label")->required();
  s_est->add_option("--format", est.format)->check(formats)->capture_default_str();
  s_est->add_option("--estimator", est.estimator, "Estimator name or roster label")->capture_default_str();
  s_est->add_option("--bins", est.bins)->capture_default_str();
  s_est->add_option("--binning", est.binning)->check(CLI::IsMember({"equal_width", "equal_mass"}))->capture_default_str();
  s_est->add_option("--p", est.p)->capture_default_str();
  s_est->add_flag("--debias", est.debias);
  s_est->add_option("--bandwidth", est.bandwidth);
  s_est->add_option("--nu", est.nu);
  add_common(s_est, false);

  RecalibrateArgs rec;
  auto* s_rec = app.add_subcommand("recalibrate", "Fit a map on validation data, report improvement on test data");
  s_rec->add_option("--val", rec.val)->required();
  s_rec->add_option("--test", rec.test)->required();
  s_rec->add_option("--method", rec.method)->check(CLI::IsMember({"identity", "ts", "ets", "tf", "tf_binary"}))->capture_default_str();
  s_rec->add_option("--estimators", rec.estimators, "Comma list; default is the standard roster");
  s_rec->add_option("--format", rec.format)->check(formats)->capture_default_str();
  s_rec->add_option("--map-out", rec.map_out, "Write the fitted map as JSON");
  add_common(s_rec, false);

  SweepArgs sw;
  auto* s_sw = app.add_subcommand("sweep", "Estimator mean and SE across subsample sizes");
  s_sw->add_option("--input", sw.input, "Pool CSV");
  s_sw->add_option("--joint", sw.joint, "Joint JSON to sample the pool from");
  s_sw->add_option("--pool-size", sw.pool_size)->capture_default_str();
  s_sw->add_option("--format", sw.format)->check(formats)->capture_default_str();
  s_sw->add_option("--temper", sw.temper_at, "Temper pool predictions at this temperature first");
  s_sw->add_option("--estimators", sw.estimators);
  s_sw->add_option("--methods", sw.methods, "Recalibration methods; switches to improvement mode");
  s_sw->add_option("--val-size", sw.val_size);
  s_sw->add_option("--min-size", sw.min_size)->capture_default_str();
  s_sw->add_option("--max-size", sw.max_size, "0 = whole pool")->capture_default_str();
  s_sw->add_option("--ticks", sw.ticks)->capture_default_str();
  s_sw->add_option("--replicates", sw.replicates, "One count, or one per tick, comma separated");
  s_sw->add_flag("--relative-bias", sw.relative);
  s_sw->add_option("--csv", sw.csv);
  s_sw->add_option("--plot-data", sw.plot_data);
  add_common(s_sw, true);

  BiasArgs bias;
  auto* s_bias = app.add_subcommand("simulate-bias", "Monte-Carlo ECE against the folded-normal approximation");
  s_bias->add_option("--classes", bias.classes)->capture_default_str();
  s_bias->add_option("--scale", bias.scale, "Inverse-Wishart scale")->capture_default_str();
  s_bias->add_option("--atoms", bias.atoms)->capture_default_str();
  s_bias->add_option("--n-grid", bias.grid, "lo..hi or comma list")->capture_default_str();
  s_bias->add_option("--ticks", bias.ticks)->capture_default_str();
  s_bias->add_option("--replicates", bias.replicates)->capture_default_str();
  s_bias->add_option("--bins", bias.bins)->capture_default_str();
  s_bias->add_option("--csv", bias.csv);
  add_common(s_bias, true);

  CounterexampleArgs cx;
  auto* s_cx = app.add_subcommand("counterexample", "Joint with zero class-wise error and large CE_2");
  s_cx->add_option("--classes", cx.classes)->capture_default_str();
  s_cx->add_option("--eps", cx.eps)->capture_default_str();
  s_cx->add_option("--support", cx.support)->capture_default_str();
  s_cx->add_option("--joint-out", cx.joint_out);
  add_common(s_cx, true);

  RegressArgs rg;
  auto* s_rg = app.add_subcommand("regress-demo", "Variance regression with Platt variance recalibration");
  s_rg->add_option("--train", rg.train)->capture_default_str();
  s_rg->add_option("--val", rg.val)->capture_default_str();
  s_rg->add_option("--test", rg.test)->capture_default_str();
  s_rg->add_option("--hidden", rg.hidden)->capture_default_str();
  s_rg->add_option("--iterations", rg.iterations)->capture_default_str();
  s_rg->add_option("--eval-every", rg.eval_every)->capture_default_str();
  s_rg->add_option("--lr", rg.lr)->capture_default_str();
  s_rg->add_option("--nu-p", rg.nu_p)->capture_default_str();
  s_rg->add_option("--nu-y", rg.nu_y)->capture_default_str();
  s_rg->add_flag("--homoscedastic", rg.homoscedastic);
  s_rg->add_flag("--noise-std", rg.noise_std, "Read 0.5 + x6 as a standard deviation");
  s_rg->add_option("--curve", rg.curve, "Write the training curve as JSON lines");
  add_common(s_rg, true);

  DecomposeArgs dc;
  auto* s_dc = app.add_subcommand("decompose", "Entropy, sharpness and calibration terms of the expected score");
  s_dc->add_option("--joint", dc.joint);
  s_dc->add_option("--input", dc.input);
  s_dc->add_option("--format", dc.format)->check(formats)->capture_default_str();
  s_dc->add_option("--score", dc.score)->check(CLI::IsMember({"brier", "log", "both"}))->capture_default_str();
  add_common(s_dc, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  CLI::App* sub = app.get_subcommands().front();
  const std::string command = sub->get_name();
  const std::string started = utc_now();
  Inputs inputs;
  try {
    configure_logging();
    Json result;
    if (command == "estimate") result = run_estimate(est, common, inputs);
    else if (command == "recalibrate") result = run_recalibrate(rec, common, inputs);
    else if (command == "sweep") result = run_sweep(sw, common, inputs);
    else if (command == "simulate-bias") result = run_simulate_bias(bias, common);
    else if (command == "counterexample") result = run_counterexample(cx, common);
    else if (command == "regress-demo") result = run_regress_demo(rg, common);
    else result = run_decompose(dc, inputs);

    Json manifest = {{"command", command},
                     {"config", config_echo(*sub)},
                     {"seed", common.seed ? Json(*common.seed) : Json()},
                     {"version", kVersion},
                     {"inputs", inputs.digests},
                     {"started", started},
                     {"finished", utc_now()}};
    Json doc = {{"schema_version", kSchemaVersion}, {"command", command}, {"result", result}, {"manifest", manifest}};
    std::cout << doc.dump(2) << '\n';
    return 0;
  } catch (const Error& e) {
    std::cerr << "calibra " << command << ": " << to_string(e.kind()) << " error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "calibra " << command << ": internal error: " << e.what() << '\n';
    return 1;
  }
}
