// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
// criterion fails.
//
//   dropact_acceptance --cli <path-to-dropact> [--full-width] [criterion numbers...]

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "dropact/dropact.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;
using namespace dropact;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int digits = 6) {
  std::ostringstream s;
  s.precision(digits);
  s << v;
  return s.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string g_cli;
bool g_full_width = false;

/// Exit status of the CLI executable; stdout and stderr go to `log`.
int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = "\"" + g_cli + "\" " + args + " >\"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// ---------------------------------------------------------------------------

Verdict c1_property1_random() {
  const auto t0 = std::chrono::steady_clock::now();
  const double ps[] = {0.3, 0.5, 0.8, 0.95, 1.0};
  double worst = 0.0, worst_exact = 0.0;
  std::size_t over = 0;
  for (std::size_t i = 0; i < 200; ++i) {
    Rng rng = make_rng(derive_seed(101, {i}), Stream::Data);
    auto draw = [&](std::size_t hi) { return std::uniform_int_distribution<std::size_t>(1, hi)(rng); };
    const std::size_t k = draw(12), d_in = draw(8), d_out = draw(8), n = draw(10);
    const auto net = random_one_hidden(k, d_in, d_out, rng);
    const auto data = random_samples(n, d_in, d_out, rng);
    const double p = ps[i % 5];
    const double enumerated = enumerated_expected_loss(net, data, p);
    const double err = mixed_relative_error(enumerated, closed_form_loss(net, data, p));
    over += err > 1e-10;
    worst = std::max(worst, err);
    worst_exact = std::max(worst_exact, mixed_relative_error(enumerated, exact_expected_loss(net, data, p)));
  }
  const double t = seconds_since(t0);
  return {worst <= 1e-10 && t < 5.0,
          "max rel err " + fmt(worst, 3) + " (" + std::to_string(over) +
              "/200 instances above 1e-10); per-unit variance form max rel err " +
              fmt(worst_exact, 3) + ", " + fmt(t, 3) + " s"};
}

Verdict c2_hand_instance() {
  const OneHiddenNet net{Tensor::matrix({{1.0}}), Tensor::matrix({{1.0}})};
  const SampleSet data{{Tensor::vector({-1.0}), Tensor::vector({0.0})}};
  const double closed = closed_form_loss(net, data, 0.5);
  const double enumerated = enumerated_expected_loss(net, data, 0.5);
  return {closed == 0.5 && enumerated == 0.5,
          "closed form " + fmt(closed, 17) + ", enumeration " + fmt(enumerated, 17)};
}

Verdict c3_ratio_point() {
  const double r = analytic_shift_ratio(0.95);
  return {std::fabs(r - 0.9377) <= 1e-4, "ratio(0.95) = " + fmt(r, 8)};
}

Verdict c4_ratio_curve() {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo, argmin = 0.0;
  for (int i = 0; i <= 1000; ++i) {
    const double p = i / 1000.0;
    const double r = analytic_shift_ratio(p);
    if (r < lo) {
      lo = r;
      argmin = p;
    }
    hi = std::max(hi, r);
  }
  const bool ok = lo >= 0.80 && lo <= 0.82 && hi <= 1.0 + 1e-12;
  return {ok, "min " + fmt(lo, 6) + " at p=" + fmt(argmin, 4) + ", max " + fmt(hi, 15)};
}

Verdict c5_box_simulation() {
  const auto t0 = std::chrono::steady_clock::now();
  bool ok = true;
  std::string detail;
  const auto w = gaussian_weights(512, 5);
  for (double p : {0.5, 0.8, 0.95}) {
    const auto r = simulate_box({w, p, 100000, 17});
    const double rel = std::fabs(r.empirical_ratio / r.analytic_ratio - 1.0);
    ok = ok && rel <= 0.03;
    detail += "d=512 p=" + fmt(p, 3) + " ratio rel " + fmt(rel, 2) + "; ";
  }
  for (double p : {0.5, 0.8, 0.95}) {
    const auto r = simulate_box({{1.0}, p, 1000000, 23});
    const double rt = std::fabs(r.empirical_var_train / r.analytic_var_train - 1.0);
    const double rs = std::fabs(r.empirical_var_test / r.analytic_var_test - 1.0);
    ok = ok && rt <= 0.01 && rs <= 0.01;
    detail += "w=[1] p=" + fmt(p, 3) + " var rel " + fmt(rt, 2) + "/" + fmt(rs, 2) + "; ";
  }
  const double t = seconds_since(t0);
  return {ok && t < 30.0, detail + fmt(t, 3) + " s"};
}

Verdict c6_unbiased_layer() {
  const auto t0 = std::chrono::steady_clock::now();
  const double p = 0.95;
  const int trials = 100000;
  Rng rng = make_rng(31, Stream::Data);
  Rng masks = make_rng(31, Stream::Masks);
  double worst_z = 0.0;
  bool ok = true;
  for (int input = 0; input < 20; ++input) {
    const Tensor x = fixtures::random_tensor({16}, rng);
    std::vector<double> acc(x.size(), 0.0);
    for (int t = 0; t < trials; ++t) {
      const auto y = drop_act_train(x, sample_mask(x.size(), p, masks));
      for (std::size_t i = 0; i < x.size(); ++i) acc[i] += y[i];
    }
    const auto expected = drop_act_test(x, p);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double dev = std::fabs(acc[i] / trials - expected[i]);
      const double se = std::fabs(x[i]) * std::sqrt(p * (1.0 - p) / trials);
      if (x[i] >= 0.0) {
        ok = ok && dev <= 1e-10 * std::max(1.0, std::fabs(x[i]));
      } else {
        ok = ok && dev <= 4.0 * se;
        worst_z = std::max(worst_z, dev / se);
      }
    }
  }
  const double t = seconds_since(t0);
  return {ok && t < 10.0, "max |dev|/se " + fmt(worst_z, 3) + " over 20x16 components, " + fmt(t, 3) + " s"};
}

Verdict c7_gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  int with_bn = 0, with_ce = 0, with_drop = 0, redraws = 0;
  for (int m = 0; m < 100; ++m) {
    Rng rng = make_rng(derive_seed(700, {static_cast<std::uint64_t>(m)}), Stream::Data);
    auto draw = [&](std::size_t lo, std::size_t hi) {
      return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
    };
    const std::size_t in = draw(1, 4), out = draw(1, 3), batch = draw(3, 6);
    std::vector<std::size_t> hidden(draw(1, 2));
    for (auto& h : hidden) h = draw(2, 5);
    const int act = m % 4;
    const ActivationKind kind = act == 0   ? ActivationKind::relu()
                                : act == 3 ? ActivationKind::rrelu_train()
                                           : ActivationKind::drop_act_train(act == 1 ? 0.5 : 0.95);
    const bool bn = m % 3 != 0;
    const bool ce = m % 2 == 0 && out >= 2;
    with_bn += bn;
    with_ce += ce;
    with_drop += kind.is_drop_act();

    MLP model = build_classifier(in, hidden, out, kind, bn, static_cast<std::uint64_t>(m));
    for (auto& t : model.parameters()) {
      for (auto& v : t.data()) v += 0.1 * std::normal_distribution<double>(0.0, 1.0)(rng);
    }
    model.set_statistics_policy(StatisticsPolicy::Freeze);
    const Tensor y = fixtures::random_tensor({batch, out}, rng);
    std::vector<std::size_t> labels(batch);
    for (auto& l : labels) l = draw(0, out - 1);

    auto loss_of = [&](Tape& tape, const MLP::Pass& pass) {
      return ce ? softmax_cross_entropy(tape, pass.output, labels)
                : mse_loss(tape, pass.output, tape.constant(y));
    };
    // Central differences are only meaningful away from the activation kink,
    // so the batch is redrawn while any pre-activation is within kKinkMargin
    // of zero. The check looks at forward values only.
    constexpr double kKinkMargin = 1e-3;
    auto near_kink = [&](const Tape& tape, const MLP::Pass& pass) {
      const auto& specs = model.specs();
      for (std::size_t l = 0; l < specs.size(); ++l) {
        if (specs[l].kind != LayerSpec::Kind::Activation) continue;
        const NodeId pre = l == 0 ? pass.input : pass.layer_outputs[l - 1];
        for (double v : tape.value(pre).data()) {
          if (std::fabs(v) < kKinkMargin) return true;
        }
      }
      return false;
    };
    Tensor x = fixtures::random_tensor({batch, in}, rng);
    {
      Tape probe;
      model.freeze_draws(false);
      while (near_kink(probe, model.forward(probe, x))) {
        ++redraws;
        x = fixtures::random_tensor({batch, in}, rng);
        probe = Tape{};
      }
    }
    Tape tape;
    const auto pass = model.forward(tape, x); // samples the draws
    model.freeze_draws(true);
    const auto g = backward(tape, loss_of(tape, pass));

    for (std::size_t k = 0; k < model.parameters().size(); ++k) {
      const Tensor analytic = g.of(pass.parameter_nodes[k]);
      const Tensor base = model.parameters()[k];
      const Tensor numeric = finite_difference_grad(
          [&](const Tensor& probe) {
            model.parameters()[k] = probe;
            Tape t;
            const auto pp = model.forward(t, x);
            const double v = t.value(loss_of(t, pp))[0];
            model.parameters()[k] = base;
            return v;
          },
          base, 1e-5);
      for (std::size_t i = 0; i < analytic.size(); ++i) {
        worst = std::max(worst, mixed_relative_error(analytic[i], numeric[i]));
      }
    }
  }
  const double t = seconds_since(t0);
  return {worst <= 1e-6 && t < 60.0,
          "max rel err " + fmt(worst, 3) + " over 100 models (" + std::to_string(with_drop) +
              " frozen-mask, " + std::to_string(with_bn) + " BN, " + std::to_string(with_ce) +
              " cross-entropy, " + std::to_string(redraws) + " batch redraws near a kink), " + fmt(t, 3) + " s"};
}

Verdict c8_regression() {
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<std::size_t> widths =
      g_full_width ? regression_widths() : std::vector<std::size_t>{100, 80, 20};
  std::vector<double> relu_mse, drop_mse;
  bool identical = true;
  int wins = 0;
  for (std::uint64_t seed = 0; seed < 11; ++seed) {
    const auto task = RegressionTask::defaults(RegressionTarget::XSinX, seed);
    TrainConfig cfg;
    cfg.learning_rate = 1e-3;
    cfg.momentum = 0.9;
    cfg.epochs = 20000;
    cfg.seed = seed;
    const auto relu = run_regression_experiment(task, ActivationKind::relu(), cfg, widths);
    const auto drop = run_regression_experiment(task, ActivationKind::drop_act_train(0.95), cfg, widths);
    const auto one = run_regression_experiment(task, ActivationKind::drop_act_train(1.0), cfg, widths);
    identical = identical && one.prediction == relu.prediction &&
                one.record.same_outcome(relu.record) &&
                std::memcmp(&one.grid_mse, &relu.grid_mse, sizeof(double)) == 0;
    relu_mse.push_back(relu.grid_mse);
    drop_mse.push_back(drop.grid_mse);
    wins += drop.grid_mse < relu.grid_mse;
    std::printf("       seed %2llu  grid MSE relu %-10s dropact %-10s\n",
                static_cast<unsigned long long>(seed), fmt(relu.grid_mse, 5).c_str(),
                fmt(drop.grid_mse, 5).c_str());
    std::fflush(stdout);
  }
  const double mr = median(relu_mse), md = median(drop_mse);
  const double t = seconds_since(t0);
  std::string w;
  for (auto v : widths) w += (w.empty() ? "" : "/") + std::to_string(v);
  return {md < mr && identical,
          "widths " + w + ": median grid MSE dropact " + fmt(md, 5) + " vs relu " + fmt(mr, 5) +
              " (dropact lower on " + std::to_string(wins) + "/11 seeds); p=1 identical to relu: " +
              (identical ? "yes" : "no") + ", " + fmt(t, 4) + " s"};
}

Verdict c9_bn_monitor() {
  ClusterTask task;
  task.seed = 3;
  const auto data = make_clusters(task);
  MLP model = build_classifier(data.features(), {64, 64}, data.class_count,
                               ActivationKind::drop_act_train(0.95), true, 3);
  TrainConfig cfg;
  cfg.learning_rate = 0.05;
  cfg.epochs = 30;
  cfg.batch_size = 32;
  cfg.seed = 3;
  std::vector<std::size_t> schedule;
  for (std::size_t e = 0; e <= cfg.epochs; e += 5) schedule.push_back(e);
  const auto series =
      bn_block_shift_monitor(model, SupervisedSet::classification(data), data.inputs, schedule, cfg);
  std::string trail;
  for (const auto& m : series) trail += std::to_string(m.epoch) + ":" + fmt(m.ratio, 4) + " ";
  const double last = series.back().ratio;
  return {series.back().epoch == cfg.epochs && last >= 0.9 && last <= 1.1,
          "final ratio " + fmt(last, 5) + " (epoch:ratio " + trail + ")"};
}

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(fixtures::read_file(path));
  for (std::string line; std::getline(in, line);) {
    std::vector<std::string> cells;
    std::istringstream ls(line);
    for (std::string c; std::getline(ls, c, ',');) cells.push_back(c);
    rows.push_back(cells);
  }
  return rows;
}

Verdict c10_grid_search(const fs::path& dir) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto out = dir / "grid.csv";
  const int code = run_cli("grid-search --seed 5 --out \"" + out.string() + "\"", dir / "grid.log");
  if (code != 0) return {false, "grid-search exited " + std::to_string(code)};
  const auto rows = read_csv(out);
  bool ok = rows.size() == 10 && rows[0] == std::vector<std::string>{"p", "mean_val_error", "ci_halfwidth",
                                                                       "repeats", "degenerate_ci"};
  const double expected_p[] = {0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95, 1.0};

  // Recompute the same table through the library to check mean and CI.
  ClusterTask task;
  task.seed = 5;
  const auto data = make_clusters(task);
  const auto [tr, va] = train_val_split(data, 0.1, 5);
  ok = ok && tr.size() == 540 && va.size() == 60;
  GridSearchConfig gs;
  gs.seed = 5;
  TrainConfig base;
  base.learning_rate = 0.05;
  base.epochs = 10;
  base.batch_size = 32;
  const auto lib = grid_search_p(data, gs, base);
  for (std::size_t i = 0; ok && i < 9; ++i) {
    const auto& r = rows[i + 1];
    double mean = 0.0;
    for (double e : lib[i].errors) mean += e;
    mean /= static_cast<double>(lib[i].errors.size());
    double ss = 0.0;
    for (double e : lib[i].errors) ss += (e - mean) * (e - mean);
    const double ci = 1.96 * std::sqrt(ss / 19.0) / std::sqrt(20.0);
    ok = r.size() == 5 && std::stod(r[0]) == expected_p[i] && r[3] == "20" && r[4] == "false" &&
         lib[i].errors.size() == 20 && std::fabs(std::stod(r[1]) - mean) <= 1e-12 &&
         std::fabs(std::stod(r[2]) - ci) <= 1e-12;
  }
  return {ok, std::to_string(rows.size() - 1) + " rows x 20 repeats, split 540/60, mean/CI recomputed; " +
                  fmt(seconds_since(t0), 4) + " s"};
}

Verdict c11_determinism(const fs::path& dir) {
  struct Case {
    std::string name, args;
    std::vector<std::string> files;
  };
  // Fixture for train-classify.
  std::vector<std::uint8_t> pixels, labels;
  for (int i = 0; i < 50; ++i) {
    labels.push_back(static_cast<std::uint8_t>(i % 3));
    for (int j = 0; j < 9; ++j) pixels.push_back(static_cast<std::uint8_t>((i * 37 + j * 11) % 256));
  }
  fixtures::write_file(dir / "det_img", fixtures::idx_images_bytes(50, 3, 3, pixels));
  fixtures::write_file(dir / "det_lbl", fixtures::idx_labels_bytes(labels));
  const std::string idx = " --train-images \"" + (dir / "det_img").string() + "\" --train-labels \"" +
                          (dir / "det_lbl").string() + "\"";
  const std::vector<Case> cases{
      {"verify-property1", "verify-property1 --instances 20 --seed 3 --closed-form exact", {}},
      {"verify-shift-ratio", "verify-shift-ratio --samples 20000 --width 64 --seed 3", {}},
      {"curve-shift-ratio", "curve-shift-ratio", {}},
      {"simulate-box", "simulate-box --samples 20000 --width 64 --seed 3", {}},
      {"train-regression",
       "train-regression --widths 16,8 --epochs 200 --seed 3 --train-out @/train.csv --grid-out @/grid.csv",
       {"train.csv", "grid.csv"}},
      {"grid-search", "grid-search --repeats 2 --epochs 2 --n 120 --seed 3", {}},
      {"train-classify", "train-classify --hidden 8 --epochs 3 --seed 3 --save-model @/model.dact" + idx,
       {"model.dact"}},
      {"monitor-bn", "monitor-bn --epochs 3 --n 120 --hidden 16,16 --seed 3", {}},
  };
  std::string failed;
  for (const auto& c : cases) {
    std::vector<std::string> outputs[2];
    for (int run = 0; run < 2; ++run) {
      const fs::path sub = dir / ("det_" + c.name + "_" + std::to_string(run));
      fs::create_directories(sub);
      std::string args = c.args;
      for (std::size_t at; (at = args.find('@')) != std::string::npos;) args.replace(at, 1, sub.string());
      for (const auto& fmt_name : {"csv", "json"}) {
        const auto file = sub / (std::string("out.") + fmt_name);
        const int code = run_cli("--format " + std::string(fmt_name) + " " + args + " --out \"" +
                                     file.string() + "\"",
                                 sub / "log.txt");
        if (code != 0) failed += c.name + "(exit " + std::to_string(code) + ") ";
        outputs[run].push_back(fixtures::read_file(file));
        for (const auto& f : c.files) outputs[run].push_back(fixtures::read_file(sub / f));
      }
    }
    if (outputs[0] != outputs[1] || outputs[0].front().empty()) failed += c.name + " ";
  }
  return {failed.empty(), failed.empty() ? "8 subcommands x {csv,json}: reruns byte-identical"
                                         : "differs or failed: " + failed};
}

Verdict c12_idx(const fs::path& dir) {
  std::vector<std::uint8_t> pixels;
  for (int i = 0; i < 4 * 3 * 2; ++i) pixels.push_back(static_cast<std::uint8_t>(i * 11));
  const std::vector<std::uint8_t> labels{1, 0, 3, 2};
  const auto img = fixtures::idx_images_bytes(4, 3, 2, pixels);
  const auto lbl = fixtures::idx_labels_bytes(labels);

  const Tensor images = parse_idx_images(img);
  bool exact = images.shape() == Shape{4, 3, 2};
  for (std::size_t i = 0; exact && i < images.size(); ++i) exact = images[i] == pixels[i] / 255.0;
  exact = exact && parse_idx_labels(lbl) == std::vector<std::size_t>{1, 0, 3, 2};

  std::string bad_magic_msg, truncated_msg;
  auto bad_magic = img;
  bad_magic[3] = 0x01;
  try {
    parse_idx_images(bad_magic);
  } catch (const FormatError& e) {
    if (dynamic_cast<const LengthError*>(&e) == nullptr) bad_magic_msg = e.what();
  }
  const auto truncated = img.substr(0, img.size() - 5);
  try {
    parse_idx_images(truncated);
  } catch (const LengthError& e) {
    truncated_msg = e.what();
  }
  const bool magic_ok = bad_magic_msg.find("0x00000803") != std::string::npos &&
                        bad_magic_msg.find("0x00000801") != std::string::npos;
  const bool trunc_ok = truncated_msg.find("truncated") != std::string::npos;

  fixtures::write_file(dir / "lbl", lbl);
  fixtures::write_file(dir / "bad_magic", bad_magic);
  fixtures::write_file(dir / "truncated", truncated);
  auto exit_for = [&](const std::string& images_file) {
    return run_cli("train-classify --epochs 1 --train-images \"" + (dir / images_file).string() +
                       "\" --train-labels \"" + (dir / "lbl").string() + "\"",
                   dir / (images_file + ".log"));
  };
  const int magic_exit = exit_for("bad_magic");
  const int trunc_exit = exit_for("truncated");
  return {exact && magic_ok && trunc_ok && magic_exit == 3 && trunc_exit == 3,
          std::string("fixture exact: ") + (exact ? "yes" : "no") + "; bad magic -> \"" + bad_magic_msg +
              "\" exit " + std::to_string(magic_exit) + "; truncated -> \"" + truncated_msg + "\" exit " +
              std::to_string(trunc_exit)};
}

} // namespace

int main(int argc, char** argv) {
  std::vector<int> selected, known_red;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--cli" && i + 1 < argc) {
      g_cli = argv[++i];
    } else if (a == "--known-red" && i + 1 < argc) {
      std::stringstream list(argv[++i]);
      for (std::string item; std::getline(list, item, ',');) known_red.push_back(std::atoi(item.c_str()));
    } else if (a == "--full-width") {
      g_full_width = true;
    } else {
      selected.push_back(std::atoi(a.c_str()));
    }
  }
  if (g_cli.empty()) {
    std::cerr << "usage: dropact_acceptance --cli <path-to-dropact> [--full-width] [--known-red N,M] "
                 "[criteria...]\n";
    return 2;
  }
  const fs::path dir = fixtures::scratch_dir("acceptance");

  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"expected-loss enumeration equals the closed form on random nets", c1_property1_random},
      {"one-unit hand instance gives 0.5 both ways", c2_hand_instance},
      {"variance ratio at p=0.95", c3_ratio_point},
      {"variance ratio curve within [0.8, 1] with minimum in [0.80, 0.82]", c4_ratio_curve},
      {"simulated box agrees with analytic moments", c5_box_simulation},
      {"masked layer mean matches deterministic layer", c6_unbiased_layer},
      {"reverse-mode gradients match central differences", c7_gradients},
      {"regression: dropact median grid MSE below relu; p=1 identical", c8_regression},
      {"BN-block variance ratio after training within [0.9, 1.1]", c9_bn_monitor},
      {"grid-search table structure", [&] { return c10_grid_search(dir); }},
      {"every subcommand reruns byte-identically", [&] { return c11_determinism(dir); }},
      {"IDX fixture parses exactly; bad magic and truncation exit 3", [&] { return c12_idx(dir); }},
  };

  // Known-red criteria still print FAIL but do not affect the exit status.
  // One that passes is reported so the list can be pruned.
  int failures = 0, known_failures = 0, unexpected_passes = 0;
  auto is_known_red = [&](int n) {
    return std::find(known_red.begin(), known_red.end(), n) != known_red.end();
  };
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int number = static_cast<int>(i) + 1;
    if (!selected.empty() && std::find(selected.begin(), selected.end(), number) == selected.end()) continue;
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const bool known = is_known_red(number);
    if (!v.pass) (known ? known_failures : failures) += 1;
    if (v.pass && known) ++unexpected_passes;
    std::printf("[%s] C%02d %s -- %s%s\n", v.pass ? "PASS" : "FAIL", number, criteria[i].first.c_str(),
                v.detail.c_str(), known ? (v.pass ? " [listed as known-red]" : " [known-red]") : "");
    std::fflush(stdout);
  }
  std::printf("summary: %d unexpected failure(s), %d known-red failure(s), %d known-red pass(es)\n",
              failures, known_failures, unexpected_passes);
  return failures == 0 ? 0 : 1;
}
