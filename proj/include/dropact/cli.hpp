#pragma once

// Command-line front end. Everything lives in a header so the test suite can
// drive run() in-process; tools/dropact_cli.cpp is a two-line main.
//
// Exit codes: 0 success, 1 verification failure (or a diverged run),
// 2 usage error, 3 I/O or file-format error.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dropact/bn_monitor.hpp"
#include "dropact/datasets.hpp"
#include "dropact/errors.hpp"
#include "dropact/networks.hpp"
#include "dropact/penalty_oracle.hpp"
#include "dropact/trainer.hpp"
#include "dropact/variance_shift.hpp"

namespace dropact::cli {

inline constexpr const char* kVersion = "1.0.0";

enum ExitCode : int { kOk = 0, kVerificationFailed = 1, kUsage = 2, kIo = 3 };

// ---------------------------------------------------------------------------
// Result tables and their two encodings.

using Cell = std::variant<double, std::uint64_t, std::string, bool>;

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;

  void add(std::vector<Cell> row) {
    if (row.size() != columns.size()) throw ContractError("table row width differs from header");
    rows.push_back(std::move(row));
  }
};

/// Shortest representation that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, res.ptr};
}

inline std::string csv_cell(const Cell& c) {
  return std::visit(
      [](const auto& v) -> std::string {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, double>) {
          return format_double(v);
        } else if constexpr (std::is_same_v<T, std::uint64_t>) {
          return std::to_string(v);
        } else if constexpr (std::is_same_v<T, bool>) {
          return v ? "true" : "false";
        } else {
          if (v.find_first_of(",\"\n") == std::string::npos) return v;
          std::string q = "\"";
          for (char ch : v) q += ch == '"' ? std::string("\"\"") : std::string(1, ch);
          return q + "\"";
        }
      },
      c);
}

inline std::string to_csv(const Table& t) {
  std::string out;
  for (std::size_t i = 0; i < t.columns.size(); ++i) out += (i ? "," : "") + t.columns[i];
  out += '\n';
  for (const auto& row : t.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out += (i ? "," : "") + csv_cell(row[i]);
    out += '\n';
  }
  return out;
}

using Json = nlohmann::ordered_json;

inline Json json_cell(const Cell& c) {
  return std::visit([](const auto& v) { return Json(v); }, c);
}

inline std::string to_json(const Table& t, const Json& meta) {
  Json doc;
  doc["meta"] = meta;
  doc["rows"] = Json::array();
  for (const auto& row : t.rows) {
    Json obj = Json::object();
    for (std::size_t i = 0; i < row.size(); ++i) obj[t.columns[i]] = json_cell(row[i]);
    doc["rows"].push_back(std::move(obj));
  }
  return doc.dump(2) + "\n";
}

/// Writes `text` to `path`, or to `fallback` when the path is empty.
inline void emit(const std::string& text, const std::string& path, std::ostream& fallback) {
  if (path.empty()) {
    fallback << text;
    return;
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + path + " for writing: " + std::strerror(errno));
  f << text;
  f.flush();
  if (!f) throw IoError("failed writing " + path);
}

// ---------------------------------------------------------------------------
// Config file: `key = value` lines, `#` comments. Entries become `--key=value`
// arguments placed before the command-line flags so the flags win.

inline std::vector<std::string> read_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config file " + path);
  std::vector<std::string> args;
  std::string line;
  std::size_t lineno = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  };
  while (std::getline(f, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParameterError(path + ":" + std::to_string(lineno) + ": expected `key = value`");
    }
    std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.rfind("--", 0) == 0) key.erase(0, 2);
    if (key.empty() || key == "config") {
      throw ParameterError(path + ":" + std::to_string(lineno) + ": invalid key");
    }
    args.push_back("--" + key + "=" + value);
  }
  return args;
}

// ---------------------------------------------------------------------------
// Option helpers.

namespace detail {

inline bool parse_real(const std::string& s, double& v) {
  char* end = nullptr;
  v = std::strtod(s.c_str(), &end);
  return !s.empty() && end == s.c_str() + s.size();
}

inline CLI::Validator retain_probability() {
  return CLI::Validator(
      [](std::string& s) -> std::string {
        double v;
        if (!parse_real(s, v) || !(v > 0.0 && v <= 1.0)) return "value " + s + " outside (0,1]";
        return {};
      },
      "in (0,1]");
}

inline CLI::Validator open_unit_interval() {
  return CLI::Validator(
      [](std::string& s) -> std::string {
        double v;
        if (!parse_real(s, v) || !(v > 0.0 && v < 1.0)) return "value " + s + " outside (0,1)";
        return {};
      },
      "in (0,1)");
}

inline CLI::Validator positive_real() {
  return CLI::Validator(
      [](std::string& s) -> std::string {
        double v;
        if (!parse_real(s, v) || !(v > 0.0) || !std::isfinite(v)) return "value " + s + " must be a positive number";
        return {};
      },
      "> 0");
}

inline std::vector<std::size_t> parse_widths(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t v = 0;
    const auto res = std::from_chars(item.data(), item.data() + item.size(), v);
    if (res.ec != std::errc() || res.ptr != item.data() + item.size() || v == 0) {
      throw ParameterError("width list `" + s + "` must be comma-separated positive integers");
    }
    out.push_back(v);
  }
  if (out.empty()) throw ParameterError("width list is empty");
  return out;
}

inline CLI::Validator width_list() {
  return CLI::Validator(
      [](std::string& s) -> std::string {
        try {
          (void)parse_widths(s);
        } catch (const ParameterError& e) {
          return e.what();
        }
        return {};
      },
      "W1,W2,...");
}

/// Registers options and remembers how to echo their values into JSON meta.
class Registry {
public:
  explicit Registry(CLI::App* app) : app_(app) {}

  template <class T>
  CLI::Option* option(const std::string& name, T& var, const std::string& help) {
    echo_.emplace_back(name, [&var] { return Json(var); });
    return app_->add_option("--" + name, var, help)->capture_default_str();
  }

  CLI::Option* flag(const std::string& name, bool& var, const std::string& help) {
    echo_.emplace_back(name, [&var] { return Json(var); });
    return app_->add_flag("--" + name, var, help);
  }

  /// Output destinations are not echoed, so identical runs that only write to
  /// different files produce identical bytes.
  CLI::Option* path(const std::string& name, std::string& var, const std::string& help) {
    return app_->add_option("--" + name, var, help);
  }

  Json config() const {
    Json c = Json::object();
    for (const auto& [name, get] : echo_) c[name] = get();
    return c;
  }

  CLI::App* app() const { return app_; }

private:
  CLI::App* app_;
  std::vector<std::pair<std::string, std::function<Json()>>> echo_;
};

inline ActivationKind activation_from(const std::string& name, double p) {
  if (name == "relu") return ActivationKind::relu();
  if (name == "dropact") return ActivationKind::drop_act_train(p);
  if (name == "rrelu") return ActivationKind::rrelu_train();
  throw ParameterError("unknown activation " + name);
}

} // namespace detail

// ---------------------------------------------------------------------------
// Per-subcommand settings.

struct Global {
  std::string format = "csv";
  std::string out;
  std::string config;
  std::uint64_t seed = 0;
};

struct Property1Args {
  std::size_t instances = 200;
  std::size_t hidden = 0; ///< 0: drawn per instance from [1, 12]
  std::size_t samples = 0; ///< 0: drawn from [1, 10]
  std::size_t d_in = 0;   ///< 0: drawn from [1, 8]
  std::size_t d_out = 0;  ///< 0: drawn from [1, 8]
  double p = 0.95;
  double tol = 1e-10;
  std::string closed_form = "penalty"; ///< "penalty" (closed_form_loss) or "exact"
};

struct ShiftArgs {
  double p = 0.95;
  std::size_t width = 512;
  std::size_t samples = 100000;
  double tol = 0.03;
  std::string weights = "gaussian";
};

struct CurveArgs {
  double p_step = 0.001;
};

struct RegressionArgs {
  std::string target = "xsinx";
  std::string activation = "dropact";
  double p = 0.95;
  std::size_t epochs = 20000;
  double lr = 1e-3;
  double momentum = 0.9;
  std::string widths = "1000,800,200";
  double noise = -1.0; ///< negative: target default
  std::size_t train_points = 20;
  std::size_t grid_size = 1001;
  std::string train_out, grid_out;
};

struct ClassifierData {
  std::string train_images, train_labels;
  std::size_t n = 600;
  std::size_t features = 16;
  std::size_t classes = 4;
  double separation = 1.0;
};

struct GridArgs {
  double p_min = 0.6, p_max = 1.0, p_step = 0.05;
  std::size_t repeats = 20;
  double val_fraction = 0.1;
  std::size_t epochs = 10;
  double lr = 0.05;
  double momentum = 0.9;
  std::size_t batch_size = 32;
  std::string hidden = "64,32";
  bool bn = false;
  ClassifierData data;
};

struct ClassifyArgs {
  double val_fraction = 0.1;
  std::string activation = "dropact";
  double p = 0.95;
  std::size_t epochs = 10;
  double lr = 0.05;
  double momentum = 0.9;
  std::size_t batch_size = 64;
  std::string hidden = "256,128";
  bool bn = false;
  std::string save_model;
  ClassifierData data;
};

struct MonitorArgs {
  double p = 0.95;
  std::size_t epochs = 30;
  double lr = 0.05;
  double momentum = 0.9;
  std::size_t batch_size = 32;
  std::string hidden = "64,64";
  std::size_t every = 1;
  ClassifierData data;
};

// ---------------------------------------------------------------------------
// Subcommand bodies. Each fills a table and meta block and returns its code.

struct Outcome {
  Table table;
  Json meta = Json::object();
  int code = kOk;
};

inline Outcome run_verify_property1(const Property1Args& a, const Global& g, std::ostream& err) {
  Outcome o;
  o.table.columns = {"k", "p", "seed", "enumerated", "closed_form", "rel_err", "pass"};
  std::size_t passed = 0;
  for (std::size_t i = 0; i < a.instances; ++i) {
    const std::uint64_t seed = derive_seed(g.seed, {static_cast<std::uint64_t>(i)});
    Rng rng = make_rng(seed, Stream::Data);
    auto pick = [&](std::size_t fixed, std::size_t hi) {
      return fixed ? fixed : std::uniform_int_distribution<std::size_t>(1, hi)(rng);
    };
    const std::size_t k = pick(a.hidden, 12);
    const std::size_t d_in = pick(a.d_in, 8);
    const std::size_t d_out = pick(a.d_out, 8);
    const std::size_t n = pick(a.samples, 10);
    const auto net = random_one_hidden(k, d_in, d_out, rng);
    const auto data = random_samples(n, d_in, d_out, rng);
    const double e = enumerated_expected_loss(net, data, a.p);
    const double c = a.closed_form == "exact" ? exact_expected_loss(net, data, a.p)
                                              : closed_form_loss(net, data, a.p);
    const double rel = mixed_relative_error(e, c);
    const bool ok = rel <= a.tol;
    passed += ok;
    o.table.add({std::uint64_t{k}, a.p, seed, e, c, rel, ok});
  }
  o.meta["passed"] = passed;
  o.meta["instances"] = a.instances;
  err << "verify-property1: " << passed << "/" << a.instances << " instances within " << a.tol << "\n";
  if (passed != a.instances) o.code = kVerificationFailed;
  return o;
}

inline ShiftRatioReport box_report(double p, std::size_t width, std::size_t samples,
                                   const std::string& weights, std::uint64_t seed) {
  BoxConfig cfg;
  cfg.w = weights == "unit" ? std::vector<double>(width, 1.0) : gaussian_weights(width, seed);
  cfg.p = p;
  cfg.sample_count = samples;
  cfg.seed = seed;
  return simulate_box(cfg);
}

inline Outcome run_verify_shift(const ShiftArgs& a, const Global& g, std::ostream& err) {
  Outcome o;
  const auto r = box_report(a.p, a.width, a.samples, a.weights, g.seed);
  const double rel = std::fabs(r.empirical_ratio - r.analytic_ratio) / r.analytic_ratio;
  const bool ok = rel <= a.tol;
  o.table.columns = {"p", "width", "samples", "analytic_ratio", "empirical_ratio", "rel_err", "pass"};
  o.table.add({a.p, std::uint64_t{a.width}, std::uint64_t{a.samples}, r.analytic_ratio,
               r.empirical_ratio, rel, ok});
  err << "verify-shift-ratio: analytic " << r.analytic_ratio << " empirical " << r.empirical_ratio
      << (ok ? " PASS\n" : " FAIL\n");
  if (!ok) o.code = kVerificationFailed;
  return o;
}

inline Outcome run_curve(const CurveArgs& a) {
  if (!(a.p_step > 0.0 && a.p_step <= 1.0)) throw ParameterError("--p-step must lie in (0,1]");
  Outcome o;
  o.table.columns = {"p", "ratio"};
  const auto count = static_cast<std::size_t>(std::floor(1.0 / a.p_step + 1e-9)) + 1;
  for (std::size_t i = 0; i < count; ++i) {
    const double p = std::min(1.0, std::round(static_cast<double>(i) * a.p_step * 1e10) / 1e10);
    o.table.add({p, analytic_shift_ratio(p)});
  }
  return o;
}

inline Outcome run_simulate_box(const ShiftArgs& a, const Global& g) {
  Outcome o;
  const auto r = box_report(a.p, a.width, a.samples, a.weights, g.seed);
  o.table.columns = {"p", "width", "samples", "analytic_mean", "empirical_mean_train",
                     "empirical_mean_test", "analytic_var_train", "empirical_var_train",
                     "analytic_var_test", "empirical_var_test", "analytic_ratio", "empirical_ratio"};
  o.table.add({a.p, std::uint64_t{a.width}, std::uint64_t{a.samples}, r.analytic_mean,
               r.empirical_mean_train, r.empirical_mean_test, r.analytic_var_train,
               r.empirical_var_train, r.analytic_var_test, r.empirical_var_test, r.analytic_ratio,
               r.empirical_ratio});
  return o;
}

inline std::string render(const Table& t, const Json& meta, const std::string& format) {
  return format == "json" ? to_json(t, meta) : to_csv(t);
}

inline Outcome run_train_regression(const RegressionArgs& a, const Global& g, const Json& meta,
                                    std::ostream& out, std::ostream& err) {
  auto task = RegressionTask::defaults(
      a.target == "piecewise" ? RegressionTarget::PiecewiseConstant : RegressionTarget::XSinX, g.seed);
  if (a.noise >= 0.0) task.noise_sigma = a.noise;
  task.n_train = a.train_points;
  task.grid_size = a.grid_size;
  TrainConfig cfg;
  cfg.learning_rate = a.lr;
  cfg.momentum = a.momentum;
  cfg.epochs = a.epochs;
  cfg.seed = g.seed;
  cfg.p = a.p;
  const auto res = run_regression_experiment(task, detail::activation_from(a.activation, a.p), cfg,
                                             detail::parse_widths(a.widths));
  Outcome o;
  o.meta["train_mse"] = res.train_mse;
  o.meta["grid_mse"] = res.grid_mse;
  o.meta["diverged"] = res.record.diverged;
  if (res.record.diverged) {
    err << "train-regression: diverged (" << res.record.diagnostic << ")\n";
    o.code = kVerificationFailed;
    return o;
  }
  Table train_t{{"x", "y"}, {}}, grid_t{{"x", "f"}, {}};
  for (std::size_t i = 0; i < res.data.x.size(); ++i) train_t.add({res.data.x[i], res.data.y[i]});
  for (std::size_t i = 0; i < res.grid_x.size(); ++i) grid_t.add({res.grid_x[i], res.grid_f[i]});
  Json full = meta;
  full.update(o.meta);
  if (!a.train_out.empty()) emit(render(train_t, full, g.format), a.train_out, out);
  if (!a.grid_out.empty()) emit(render(grid_t, full, g.format), a.grid_out, out);
  o.table.columns = {"x", "f", "prediction"};
  for (std::size_t i = 0; i < res.grid_x.size(); ++i) {
    o.table.add({res.grid_x[i], res.grid_f[i], res.prediction[i]});
  }
  err << "train-regression: train_mse " << res.train_mse << " grid_mse " << res.grid_mse << "\n";
  return o;
}

/// IDX files when given, otherwise the synthetic cluster task.
inline LabeledData classifier_data(const ClassifierData& d, std::uint64_t seed) {
  if (d.train_images.empty() != d.train_labels.empty()) {
    throw ParameterError("--train-images and --train-labels must be given together");
  }
  if (!d.train_images.empty()) return load_idx_dataset(d.train_images, d.train_labels).flatten();
  ClusterTask task;
  task.n = d.n;
  task.features = d.features;
  task.classes = d.classes;
  task.separation = d.separation;
  task.seed = seed;
  return make_clusters(task);
}

inline Outcome run_grid_search(const GridArgs& a, const Global& g, std::ostream& err) {
  const auto data = classifier_data(a.data, g.seed);
  GridSearchConfig gs;
  gs.p_min = a.p_min;
  gs.p_max = a.p_max;
  gs.p_step = a.p_step;
  gs.repeats = a.repeats;
  gs.val_fraction = a.val_fraction;
  gs.seed = g.seed;
  gs.hidden = detail::parse_widths(a.hidden);
  gs.with_bn = a.bn;
  TrainConfig base;
  base.learning_rate = a.lr;
  base.momentum = a.momentum;
  base.epochs = a.epochs;
  base.batch_size = a.batch_size;
  Outcome o;
  o.table.columns = {"p", "mean_val_error", "ci_halfwidth", "repeats", "degenerate_ci"};
  for (const auto& row : grid_search_p(data, gs, base)) {
    o.table.add({row.p, row.mean_error, row.ci_halfwidth, std::uint64_t{row.repeats}, row.degenerate_ci});
  }
  err << "grid-search: " << o.table.rows.size() << " grid points x " << a.repeats << " repeats\n";
  return o;
}

inline Outcome run_train_classify(const ClassifyArgs& a, const Global& g, std::ostream& err) {
  const auto data = classifier_data(a.data, g.seed);
  const auto [train_part, val_part] = train_val_split(data, a.val_fraction, g.seed);
  MLP model = build_classifier(train_part.features(), detail::parse_widths(a.hidden),
                               train_part.class_count, detail::activation_from(a.activation, a.p),
                               a.bn, g.seed);
  TrainConfig cfg;
  cfg.learning_rate = a.lr;
  cfg.momentum = a.momentum;
  cfg.epochs = a.epochs;
  cfg.batch_size = a.batch_size;
  cfg.seed = g.seed;
  cfg.p = a.p;
  const auto tr = SupervisedSet::classification(train_part);
  const auto va = SupervisedSet::classification(val_part);
  const auto rec = train(model, tr, cfg, &va);
  Outcome o;
  o.table.columns = {"epoch", "train_loss", "val_error"};
  for (std::size_t e = 0; e < rec.train_loss.size(); ++e) {
    o.table.add({std::uint64_t{e + 1}, rec.train_loss[e], rec.eval_metric[e]});
  }
  o.meta["diverged"] = rec.diverged;
  if (rec.diverged) {
    err << "train-classify: diverged (" << rec.diagnostic << ")\n";
    o.code = kVerificationFailed;
    return o;
  }
  if (!a.save_model.empty()) save_state(a.save_model, model);
  err << "train-classify: final val_error " << rec.eval_metric.back() << "\n";
  return o;
}

inline Outcome run_monitor_bn(const MonitorArgs& a, const Global& g, std::ostream& err) {
  const auto data = classifier_data(a.data, g.seed);
  const auto hidden = detail::parse_widths(a.hidden);
  if (hidden.size() < 2) throw ParameterError("--hidden needs at least two layers for a BN block");
  MLP model = build_classifier(data.features(), hidden, data.class_count,
                               ActivationKind::drop_act_train(a.p), true, g.seed);
  TrainConfig cfg;
  cfg.learning_rate = a.lr;
  cfg.momentum = a.momentum;
  cfg.epochs = a.epochs;
  cfg.batch_size = a.batch_size;
  cfg.seed = g.seed;
  cfg.p = a.p;
  std::vector<std::size_t> schedule;
  for (std::size_t e = 0; e <= a.epochs; e += a.every) schedule.push_back(e);
  if (schedule.back() != a.epochs) schedule.push_back(a.epochs);
  const auto series =
      bn_block_shift_monitor(model, SupervisedSet::classification(data), data.inputs, schedule, cfg);
  Outcome o;
  o.table.columns = {"epoch", "ratio", "var_train", "var_test"};
  for (const auto& m : series) o.table.add({std::uint64_t{m.epoch}, m.ratio, m.var_train, m.var_test});
  if (series.back().epoch != a.epochs) {
    err << "monitor-bn: training stopped early at epoch " << series.back().epoch << "\n";
    o.code = kVerificationFailed;
  }
  err << "monitor-bn: final ratio " << series.back().ratio << "\n";
  return o;
}

// ---------------------------------------------------------------------------
// Entry point.

inline const std::vector<std::string>& subcommand_names() {
  static const std::vector<std::string> names{
      "verify-property1", "verify-shift-ratio", "curve-shift-ratio", "simulate-box",
      "train-regression", "grid-search",        "train-classify",    "monitor-bn"};
  return names;
}

/// Runs one invocation; `args` excludes the program name.
inline int run(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Drop-Activation experiments and verification suites", "dropact"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  Global g;
  app.add_option("--format", g.format, "output encoding")
      ->check(CLI::IsMember({"csv", "json"}))
      ->capture_default_str();
  app.add_option("--out", g.out, "output file (default: standard output)");
  app.add_option("--config", g.config, "file of `key = value` lines applied before the flags");
  app.add_option("--seed", g.seed, "master seed")->capture_default_str();

  auto sub = [&](const std::string& name, const std::string& help) {
    CLI::App* s = app.add_subcommand(name, help);
    s->fallthrough();
    return detail::Registry(s);
  };
  auto add_classifier_data = [](detail::Registry& r, ClassifierData& d) {
    r.path("train-images", d.train_images, "IDX image file (default: synthetic clusters)");
    r.path("train-labels", d.train_labels, "IDX label file");
    r.option("n", d.n, "synthetic sample count")->check(CLI::PositiveNumber);
    r.option("features", d.features, "synthetic feature count")->check(CLI::PositiveNumber);
    r.option("classes", d.classes, "synthetic class count")->check(CLI::Range(2, 1000));
    r.option("separation", d.separation, "synthetic class-centre spread")->check(detail::positive_real());
  };

  Property1Args p1;
  auto r_p1 = sub("verify-property1", "enumerated vs closed-form expected loss on random nets");
  r_p1.option("instances", p1.instances, "random instances")->check(CLI::PositiveNumber);
  r_p1.option("hidden", p1.hidden, "hidden width k (0: random in [1,12])")->check(CLI::Range(0, 20));
  r_p1.option("samples", p1.samples, "data points per instance (0: random in [1,10])");
  r_p1.option("d-in", p1.d_in, "input width (0: random in [1,8])");
  r_p1.option("d-out", p1.d_out, "output width (0: random in [1,8])");
  r_p1.option("p", p1.p, "retain probability")->check(detail::retain_probability());
  r_p1.option("tol", p1.tol, "relative tolerance")->check(detail::positive_real());
  r_p1.option("closed-form", p1.closed_form,
              "penalty: vector-norm penalty form; exact: per-unit variance form")
      ->check(CLI::IsMember({"penalty", "exact"}));

  ShiftArgs vs;
  auto r_vs = sub("verify-shift-ratio", "empirical vs analytic test/train variance ratio");
  r_vs.option("p", vs.p, "retain probability")->check(detail::retain_probability());
  r_vs.option("width", vs.width, "box width d")->check(CLI::PositiveNumber);
  r_vs.option("samples", vs.samples, "Monte Carlo samples")->check(CLI::Range(2ULL, 1ULL << 40));
  r_vs.option("tol", vs.tol, "relative tolerance on the ratio")->check(detail::positive_real());
  r_vs.option("weights", vs.weights, "gaussian or unit")->check(CLI::IsMember({"gaussian", "unit"}));

  CurveArgs cv;
  auto r_cv = sub("curve-shift-ratio", "analytic variance ratio over p in [0,1]");
  r_cv.option("p-step", cv.p_step, "grid step")->check(detail::retain_probability());

  ShiftArgs sb;
  auto r_sb = sub("simulate-box", "Monte Carlo moments of the activation -> linear box");
  r_sb.option("p", sb.p, "retain probability")->check(detail::retain_probability());
  r_sb.option("width", sb.width, "box width d")->check(CLI::PositiveNumber);
  r_sb.option("samples", sb.samples, "Monte Carlo samples")->check(CLI::Range(2ULL, 1ULL << 40));
  r_sb.option("weights", sb.weights, "gaussian or unit")->check(CLI::IsMember({"gaussian", "unit"}));

  RegressionArgs rg;
  auto r_rg = sub("train-regression", "fit a 1-D curve from 20 noisy samples");
  r_rg.option("target", rg.target, "xsinx or piecewise")->check(CLI::IsMember({"xsinx", "piecewise"}));
  r_rg.option("activation", rg.activation, "relu, dropact or rrelu")
      ->check(CLI::IsMember({"relu", "dropact", "rrelu"}));
  r_rg.option("p", rg.p, "retain probability")->check(detail::retain_probability());
  r_rg.option("epochs", rg.epochs, "full-batch epochs")->check(CLI::PositiveNumber);
  r_rg.option("lr", rg.lr, "learning rate")->check(detail::positive_real());
  r_rg.option("momentum", rg.momentum, "momentum")->check(CLI::Range(0.0, 0.999999));
  r_rg.option("widths", rg.widths, "hidden widths")->check(detail::width_list());
  r_rg.option("noise", rg.noise, "noise sigma (negative: target default)");
  r_rg.option("train-points", rg.train_points, "training samples")->check(CLI::Range(2, 1000000));
  r_rg.option("grid-size", rg.grid_size, "evaluation grid points")->check(CLI::Range(2, 10000000));
  r_rg.path("train-out", rg.train_out, "write training pairs x,y here");
  r_rg.path("grid-out", rg.grid_out, "write ground truth x,f here");

  GridArgs gr;
  auto r_gr = sub("grid-search", "validation error of the classifier over a grid of p");
  r_gr.option("p-min", gr.p_min, "first grid value")->check(detail::retain_probability());
  r_gr.option("p-max", gr.p_max, "last grid value")->check(detail::retain_probability());
  r_gr.option("p-step", gr.p_step, "grid step")->check(detail::positive_real());
  r_gr.option("repeats", gr.repeats, "trained networks per grid value")->check(CLI::PositiveNumber);
  r_gr.option("val-fraction", gr.val_fraction, "held-out fraction")->check(detail::open_unit_interval());
  r_gr.option("epochs", gr.epochs, "epochs per run")->check(CLI::PositiveNumber);
  r_gr.option("lr", gr.lr, "learning rate")->check(detail::positive_real());
  r_gr.option("momentum", gr.momentum, "momentum")->check(CLI::Range(0.0, 0.999999));
  r_gr.option("batch-size", gr.batch_size, "mini-batch size")->check(CLI::PositiveNumber);
  r_gr.option("hidden", gr.hidden, "hidden widths")->check(detail::width_list());
  r_gr.flag("bn", gr.bn, "batch normalization after each hidden affine layer");
  add_classifier_data(r_gr, gr.data);

  ClassifyArgs tc;
  auto r_tc = sub("train-classify", "train the MLP classifier, one row per epoch");
  r_tc.option("val-fraction", tc.val_fraction, "held-out fraction")->check(detail::open_unit_interval());
  r_tc.option("activation", tc.activation, "relu, dropact or rrelu")
      ->check(CLI::IsMember({"relu", "dropact", "rrelu"}));
  r_tc.option("p", tc.p, "retain probability")->check(detail::retain_probability());
  r_tc.option("epochs", tc.epochs, "epochs")->check(CLI::PositiveNumber);
  r_tc.option("lr", tc.lr, "learning rate")->check(detail::positive_real());
  r_tc.option("momentum", tc.momentum, "momentum")->check(CLI::Range(0.0, 0.999999));
  r_tc.option("batch-size", tc.batch_size, "mini-batch size")->check(CLI::PositiveNumber);
  r_tc.option("hidden", tc.hidden, "hidden widths")->check(detail::width_list());
  r_tc.flag("bn", tc.bn, "batch normalization after each hidden affine layer");
  r_tc.path("save-model", tc.save_model, "write trained parameters (DACT format)");
  add_classifier_data(r_tc, tc.data);

  MonitorArgs mb;
  auto r_mb = sub("monitor-bn", "track the BN-block variance ratio while training");
  r_mb.option("p", mb.p, "retain probability")->check(detail::retain_probability());
  r_mb.option("epochs", mb.epochs, "epochs")->check(CLI::PositiveNumber);
  r_mb.option("lr", mb.lr, "learning rate")->check(detail::positive_real());
  r_mb.option("momentum", mb.momentum, "momentum")->check(CLI::Range(0.0, 0.999999));
  r_mb.option("batch-size", mb.batch_size, "mini-batch size")->check(CLI::PositiveNumber);
  r_mb.option("hidden", mb.hidden, "hidden widths (at least two)")->check(detail::width_list());
  r_mb.option("every", mb.every, "measure every N epochs")->check(CLI::PositiveNumber);
  add_classifier_data(r_mb, mb.data);

  const std::vector<detail::Registry*> registries{&r_p1, &r_vs, &r_cv, &r_sb,
                                                  &r_rg, &r_gr, &r_tc, &r_mb};

  try {
    // Splice config-file entries in right after the subcommand, ahead of
    // every user flag, so that flags override the file.
    std::string config_path;
    for (std::size_t i = 0; i < args.size(); ++i) {
      if (args[i] == "--config" && i + 1 < args.size()) config_path = args[i + 1];
      if (args[i].rfind("--config=", 0) == 0) config_path = args[i].substr(9);
    }
    if (!config_path.empty()) {
      const auto& names = subcommand_names();
      const auto it = std::find_if(args.begin(), args.end(), [&](const std::string& a) {
        return std::find(names.begin(), names.end(), a) != names.end();
      });
      if (it != args.end()) {
        std::vector<std::string> spliced{*it};
        const auto extra = read_config_file(config_path);
        spliced.insert(spliced.end(), extra.begin(), extra.end());
        for (auto a = args.begin(); a != args.end(); ++a) {
          if (a != it) spliced.push_back(*a);
        }
        args = std::move(spliced);
      }
    }

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
      app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
      out << app.help();
      return kOk;
    } catch (const CLI::CallForAllHelp&) {
      out << app.help("", CLI::AppFormatMode::All);
      return kOk;
    } catch (const CLI::CallForVersion&) {
      out << kVersion << "\n";
      return kOk;
    } catch (const CLI::ParseError& e) {
      if (!args.empty()) err << "error: " << e.what() << "\n";
      err << app.help();
      return kUsage;
    }

    CLI::App* chosen = app.get_subcommands().front();
    const detail::Registry* reg = nullptr;
    for (auto* r : registries) {
      if (r->app() == chosen) reg = r;
    }
    Json meta;
    meta["command"] = chosen->get_name();
    meta["version"] = kVersion;
    meta["seed"] = g.seed;
    meta["config"] = reg->config();

    const std::string name = chosen->get_name();
    Outcome o;
    if (name == "verify-property1") o = run_verify_property1(p1, g, err);
    else if (name == "verify-shift-ratio") o = run_verify_shift(vs, g, err);
    else if (name == "curve-shift-ratio") o = run_curve(cv);
    else if (name == "simulate-box") o = run_simulate_box(sb, g);
    else if (name == "train-regression") o = run_train_regression(rg, g, meta, out, err);
    else if (name == "grid-search") o = run_grid_search(gr, g, err);
    else if (name == "train-classify") o = run_train_classify(tc, g, err);
    else o = run_monitor_bn(mb, g, err);

    if (!o.table.columns.empty()) {
      meta.update(o.meta);
      emit(render(o.table, meta, g.format), g.out, out);
    }
    return o.code;
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kIo;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << "\n";
    return kIo;
  } catch (const ParameterError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const DimensionError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const ConfigurationError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const CapacityError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kVerificationFailed;
  }
}

inline int run(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  return run(std::vector<std::string>(argv + 1, argv + argc), out, err);
}

} // namespace dropact::cli
