#pragma once

// SGD with classical momentum, the training loop, and the two experiment
// drivers built on it (curve regression and the retain-probability grid
// search).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dropact/activations.hpp"
#include "dropact/autograd.hpp"
#include "dropact/datasets.hpp"
#include "dropact/errors.hpp"
#include "dropact/networks.hpp"
#include "dropact/random.hpp"
#include "dropact/tensor.hpp"

namespace dropact {

struct TrainConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
  std::size_t epochs = 10;
  std::size_t batch_size = 0; ///< 0 means full batch
  /// Epoch -> multiplier; multipliers of all milestones <= epoch compound.
  std::map<std::size_t, double> lr_schedule;
  std::uint64_t seed = 0;
  double p = 0.95;

  void validate() const {
    if (!(learning_rate >= 0.0)) throw ParameterError("learning rate must be nonnegative");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ParameterError("momentum must lie in [0,1)");
    if (epochs == 0) throw ParameterError("epochs must be at least 1");
  }

  double learning_rate_at(std::size_t epoch) const {
    double lr = learning_rate;
    for (const auto& [milestone, factor] : lr_schedule) {
      if (milestone <= epoch) lr *= factor;
    }
    return lr;
  }
};

/// Inputs with either real-valued targets (squared error) or class labels
/// (softmax cross-entropy).
struct SupervisedSet {
  Tensor inputs;                   ///< [n x features]
  Tensor targets;                  ///< [n x outputs], regression only
  std::vector<std::size_t> labels; ///< classification only

  static SupervisedSet regression(Tensor x, Tensor y) {
    if (x.rows() != y.rows()) throw DimensionError("inputs and targets disagree on sample count");
    return {std::move(x), std::move(y), {}};
  }
  static SupervisedSet classification(const LabeledData& d) { return {d.inputs, {}, d.labels}; }

  bool is_classification() const noexcept { return !labels.empty(); }
  std::size_t size() const { return inputs.rows(); }

  SupervisedSet rows(std::span<const std::size_t> idx) const {
    SupervisedSet out;
    out.inputs = Tensor({idx.size(), inputs.cols()});
    for (std::size_t r = 0; r < idx.size(); ++r) {
      const auto src = inputs.row(idx[r]);
      std::copy(src.begin(), src.end(), out.inputs.row(r).begin());
    }
    if (is_classification()) {
      for (auto i : idx) out.labels.push_back(labels[i]);
    } else {
      out.targets = Tensor({idx.size(), targets.cols()});
      for (std::size_t r = 0; r < idx.size(); ++r) {
        const auto src = targets.row(idx[r]);
        std::copy(src.begin(), src.end(), out.targets.row(r).begin());
      }
    }
    return out;
  }
};

struct RunRecord {
  std::vector<double> train_loss;  ///< mean training-phase loss per epoch
  std::vector<double> eval_metric; ///< test-phase MSE or error rate per epoch
  std::vector<double> wall_seconds; ///< per epoch; excluded from equality
  bool diverged = false;
  std::string diagnostic;
  TrainConfig config;

  /// Equality of everything that is a function of the seed.
  bool same_outcome(const RunRecord& o) const {
    return train_loss == o.train_loss && eval_metric == o.eval_metric && diverged == o.diverged &&
           diagnostic == o.diagnostic;
  }
};

/// v <- momentum * v + g;  theta <- theta - lr * v.
inline void sgd_momentum_step(std::span<Tensor> params, std::span<const Tensor> grads,
                              std::span<Tensor> velocity, double lr, double momentum) {
  if (params.size() != grads.size() || params.size() != velocity.size()) {
    throw ContractError("sgd step: parameter, gradient and velocity counts differ");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    require_same_shape(params[i], grads[i], "sgd step");
    require_same_shape(params[i], velocity[i], "sgd step");
    auto th = params[i].data();
    auto g = grads[i].data();
    auto v = velocity[i].data();
    for (std::size_t j = 0; j < th.size(); ++j) {
      v[j] = momentum * v[j] + g[j];
      th[j] -= lr * v[j];
    }
  }
}

inline NodeId objective(Tape& tape, NodeId output, const SupervisedSet& batch) {
  if (batch.is_classification()) return softmax_cross_entropy(tape, output, batch.labels);
  return mse_loss(tape, output, tape.constant(batch.targets));
}

/// Test-phase MSE (regression) or error rate (classification). Restores the
/// model's mode; touches neither masks nor BN statistics.
inline double evaluate(MLP& model, const SupervisedSet& data) {
  const Mode saved = model.mode();
  model.set_mode(Mode::Test);
  const Tensor out = model.predict(data.inputs);
  model.set_mode(saved);
  if (data.is_classification()) {
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < out.rows(); ++i) {
      const auto row = out.row(i);
      const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
      if (best != data.labels[i]) ++wrong;
    }
    return static_cast<double>(wrong) / static_cast<double>(out.rows());
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double d = out[i] - data.targets[i];
    acc += d * d;
  }
  return acc / static_cast<double>(out.size());
}

/// Called after each completed epoch (1-based) with the model in Train mode.
using EpochCallback = std::function<void(std::size_t epoch, MLP& model)>;

/// Mini-batch SGD with momentum. Training forwards run in Train mode (fresh
/// masks per batch); evaluation runs in Test mode on `eval` (or on `data` when
/// no evaluation set is given). A non-finite loss stops training and marks the
/// record as diverged.
inline RunRecord train(MLP& model, const SupervisedSet& data, const TrainConfig& cfg,
                       const SupervisedSet* eval = nullptr, const EpochCallback& on_epoch = {}) {
  cfg.validate();
  if (data.size() == 0) throw ParameterError("training set is empty");
  RunRecord rec;
  rec.config = cfg;

  const std::size_t n = data.size();
  const std::size_t batch = cfg.batch_size == 0 ? n : std::min(cfg.batch_size, n);
  Rng order_rng = make_rng(cfg.seed, Stream::Order);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  std::vector<Tensor> velocity;
  for (const auto& p : model.parameters()) velocity.emplace_back(p.shape(), 0.0);

  const SupervisedSet& eval_set = eval ? *eval : data;
  const Mode saved = model.mode();
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    model.set_mode(Mode::Train);
    const double lr = cfg.learning_rate_at(epoch);
    if (batch < n) std::shuffle(order.begin(), order.end(), order_rng);
    double loss_sum = 0.0;
    double metric = 0.0;
    try {
      for (std::size_t start = 0; start < n; start += batch) {
        const std::size_t stop = std::min(start + batch, n);
        const bool whole = start == 0 && stop == n && batch == n;
        const SupervisedSet part =
            whole ? SupervisedSet{} : data.rows(std::span(order).subspan(start, stop - start));
        const SupervisedSet& b = whole ? data : part;
        Tape tape;
        const auto pass = model.forward(tape, b.inputs);
        const NodeId loss = objective(tape, pass.output, b);
        loss_sum += tape.value(loss)[0] * static_cast<double>(stop - start);
        const Gradients g = backward(tape, loss);
        std::vector<Tensor> grads;
        grads.reserve(pass.parameter_nodes.size());
        for (auto id : pass.parameter_nodes) grads.push_back(g.of(id));
        sgd_momentum_step(model.parameters(), grads, velocity, lr, cfg.momentum);
      }
      for (const auto& p : model.parameters()) ensure_finite(p, "parameter update");
      metric = evaluate(model, eval_set);
      if (!std::isfinite(loss_sum) || !std::isfinite(metric)) throw NumericError("non-finite loss");
    } catch (const NumericError& e) {
      rec.diverged = true;
      rec.diagnostic = "epoch " + std::to_string(epoch + 1) + ": " + e.what();
      break;
    }
    rec.train_loss.push_back(loss_sum / static_cast<double>(n));
    rec.eval_metric.push_back(metric);
    rec.wall_seconds.push_back(
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    if (on_epoch) on_epoch(epoch + 1, model);
  }
  model.set_mode(saved);
  return rec;
}

// ---------------------------------------------------------------------------
// Curve regression.

struct RegressionResult {
  double train_mse = 0.0;
  double grid_mse = 0.0;
  std::vector<double> grid_x, grid_f, prediction;
  RegressionData data;
  RunRecord record;
};

/// Trains the regression net on the task's noisy samples; reports MSE on the
/// training points and on the noise-free grid, both in Test mode. A diverged
/// run reports NaN errors and no prediction.
inline RegressionResult run_regression_experiment(
    const RegressionTask& task, const ActivationKind& activation, const TrainConfig& cfg,
    const std::vector<std::size_t>& widths = regression_widths()) {
  RegressionResult res;
  res.data = gen_regression(task);
  MLP model = build_regression_net(activation, cfg.seed, widths);
  // Inputs are fed rescaled to [-1, 1]; reported x values stay in task units.
  const double centre = 0.5 * (task.lo + task.hi);
  const double half = 0.5 * (task.hi - task.lo);
  auto scaled = [&](const std::vector<double>& xs) {
    std::vector<double> u(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) u[i] = (xs[i] - centre) / half;
    return column(u);
  };
  const SupervisedSet train_set = SupervisedSet::regression(scaled(res.data.x), column(res.data.y));
  const SupervisedSet grid_set =
      SupervisedSet::regression(scaled(res.data.grid_x), column(res.data.grid_f));
  res.record = train(model, train_set, cfg);
  res.grid_x = res.data.grid_x;
  res.grid_f = res.data.grid_f;
  if (res.record.diverged) {
    res.train_mse = res.grid_mse = std::numeric_limits<double>::quiet_NaN();
    return res;
  }
  res.train_mse = evaluate(model, train_set);
  res.grid_mse = evaluate(model, grid_set);
  model.set_mode(Mode::Test);
  const Tensor pred = model.predict(grid_set.inputs);
  res.prediction.assign(pred.data().begin(), pred.data().end());
  return res;
}

// ---------------------------------------------------------------------------
// Grid search over p.

struct GridSearchConfig {
  double p_min = 0.6;
  double p_max = 1.0;
  double p_step = 0.05;
  std::size_t repeats = 20;
  double val_fraction = 0.1;
  std::uint64_t seed = 0;
  std::vector<std::size_t> hidden{64, 32};
  bool with_bn = false;
};

struct GridRow {
  double p = 0.0;
  double mean_error = 0.0;
  double ci_halfwidth = 0.0;
  std::size_t repeats = 0;
  bool degenerate_ci = false;
  std::vector<double> errors;
};

/// p_min, p_min + step, ... up to p_max (inclusive within 1e-9 of a step).
/// Values are rounded to 10 decimals so the printed grid reads 0.65, not
/// 0.6499999999999999.
inline std::vector<double> p_grid(double p_min, double p_max, double step) {
  if (!(step > 0.0)) throw ParameterError("grid step must be positive");
  if (!(p_min <= p_max)) throw ParameterError("empty grid: p_min exceeds p_max");
  const auto count = static_cast<std::size_t>(std::floor((p_max - p_min) / step + 1e-9)) + 1;
  std::vector<double> grid;
  for (std::size_t i = 0; i < count; ++i) {
    const double p = std::round((p_min + static_cast<double>(i) * step) * 1e10) / 1e10;
    if (!(p > 0.0 && p <= 1.0)) throw ParameterError("grid value " + std::to_string(p) + " outside (0,1]");
    grid.push_back(p);
  }
  return grid;
}

/// Seed of repeat `r` at grid index `i`.
inline std::uint64_t grid_run_seed(std::uint64_t master, std::size_t i, std::size_t r) {
  return derive_seed(master, {static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(r)});
}

/// Final-epoch validation error of one classifier run.
inline double classifier_run(const LabeledData& train_part, const LabeledData& val_part,
                             const std::vector<std::size_t>& hidden, bool with_bn,
                             const ActivationKind& activation, TrainConfig cfg, std::uint64_t seed) {
  cfg.seed = seed;
  MLP model = build_classifier(train_part.features(), hidden, train_part.class_count, activation,
                               with_bn, seed);
  const auto tr = SupervisedSet::classification(train_part);
  const auto va = SupervisedSet::classification(val_part);
  const RunRecord rec = train(model, tr, cfg, &va);
  if (rec.diverged) return 1.0;
  return rec.eval_metric.back();
}

/// Mean validation error and 95% normal-approximation half-width per p.
inline std::vector<GridRow> grid_search_p(const LabeledData& data, const GridSearchConfig& gs,
                                          const TrainConfig& base) {
  if (gs.repeats == 0) throw ParameterError("repeats must be at least 1");
  const auto grid = p_grid(gs.p_min, gs.p_max, gs.p_step);
  const auto [train_part, val_part] = train_val_split(data, gs.val_fraction, gs.seed);
  std::vector<GridRow> rows;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    GridRow row;
    row.p = grid[i];
    row.repeats = gs.repeats;
    for (std::size_t r = 0; r < gs.repeats; ++r) {
      TrainConfig cfg = base;
      cfg.p = grid[i];
      row.errors.push_back(classifier_run(train_part, val_part, gs.hidden, gs.with_bn,
                                          ActivationKind::drop_act_train(grid[i]), cfg,
                                          grid_run_seed(gs.seed, i, r)));
    }
    const double k = static_cast<double>(gs.repeats);
    row.mean_error = std::accumulate(row.errors.begin(), row.errors.end(), 0.0) / k;
    if (gs.repeats > 1) {
      double ss = 0.0;
      for (double e : row.errors) ss += (e - row.mean_error) * (e - row.mean_error);
      row.ci_halfwidth = 1.96 * std::sqrt(ss / (k - 1.0)) / std::sqrt(k);
    } else {
      row.degenerate_ci = true;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

} // namespace dropact
